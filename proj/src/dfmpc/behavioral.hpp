#pragma once

#include <vector>

#include <Eigen/Dense>

namespace dfmpc::behavioral {

/// Default relative threshold for numerical rank decisions.
inline constexpr double kDefaultRankTol = 1e-9;

/// A finite input-output record. Column k of `inputs` (m x N) and `outputs`
/// (p x N) holds the sample at time k.
struct Trajectory {
  Eigen::MatrixXd inputs;
  Eigen::MatrixXd outputs;

  /// Validating constructor; throws DimensionError on length mismatch or N = 0.
  static Trajectory Create(Eigen::MatrixXd inputs, Eigen::MatrixXd outputs);

  Eigen::Index length() const { return inputs.cols(); }
  Eigen::Index input_dim() const { return inputs.rows(); }
  Eigen::Index output_dim() const { return outputs.rows(); }
};

/// Block-Hankel matrix of depth L built from a sequence of m-dimensional
/// samples: block (i, j) is x(i + j), shape (m L) x (N - L + 1).
///
/// When the sequence concatenates separate experiments, `segment_starts`
/// lists the sample indices where a new experiment begins and windows that
/// straddle such an index are left out.
class HankelMatrix {
 public:
  HankelMatrix() = default;
  HankelMatrix(const Eigen::Ref<const Eigen::MatrixXd>& seq, int depth,
               const std::vector<Eigen::Index>& segment_starts = {});

  int depth() const { return depth_; }
  int block_dim() const { return block_dim_; }
  Eigen::Index cols() const { return entries_.cols(); }
  const Eigen::MatrixXd& entries() const { return entries_; }

  /// Rows belonging to block rows [first, first + count).
  auto block_rows(int first, int count) const {
    return entries_.middleRows(static_cast<Eigen::Index>(first) * block_dim_,
                               static_cast<Eigen::Index>(count) * block_dim_);
  }

 private:
  int depth_ = 0;
  int block_dim_ = 0;
  Eigen::MatrixXd entries_;
};

HankelMatrix build_hankel(const Eigen::Ref<const Eigen::MatrixXd>& seq, int depth);

/// Number of singular values above rel_tol times the largest one.
int numerical_rank(const Eigen::Ref<const Eigen::MatrixXd>& m, double rel_tol = kDefaultRankTol);

/// True iff H_order(seq) has full row rank m * order.
bool persistency_order_check(const Eigen::Ref<const Eigen::MatrixXd>& seq, int order,
                             double rank_tol = kDefaultRankTol);

/// Cheaper variant of persistency_order_check for online use. Works on the
/// (m L) x (m L) Gram matrix of the Hankel matrix instead of a full SVD.
bool persistency_gram_check(const HankelMatrix& hankel, double rank_tol = kDefaultRankTol);

/// Offline record of the unknown subsystem together with its Hankel matrices.
struct BehavioralDataset {
  Trajectory data;
  int hankel_depth = 0;
  HankelMatrix u_hankel;
  HankelMatrix y_hankel;
  double noise_bound = 0.0;
  std::vector<Eigen::Index> segment_starts;  // see HankelMatrix

  static BehavioralDataset Create(Trajectory data, int hankel_depth, double noise_bound,
                                  std::vector<Eigen::Index> segment_starts = {});

  Eigen::Index columns() const { return u_hankel.cols(); }
  Eigen::Index input_dim() const { return data.input_dim(); }
  Eigen::Index output_dim() const { return data.output_dim(); }
};

struct MembershipResult {
  bool member = false;
  Eigen::VectorXd g;
  double residual = 0.0;  // max-norm of the stacked residual
};

/// Minimum-norm least-squares fit of [H_u; H_y] g = [u; y] for a candidate
/// whose length equals the dataset's Hankel depth.
MembershipResult trajectory_membership(const BehavioralDataset& dataset,
                                       const Trajectory& candidate, double residual_tol);

/// Drop the oldest sample, append (new_u, new_y) and rebuild both Hankels.
/// `starts_segment` marks the new sample as the first of a new experiment,
/// not a continuation of the stored record.
BehavioralDataset update_window(const BehavioralDataset& dataset,
                                const Eigen::Ref<const Eigen::VectorXd>& new_u,
                                const Eigen::Ref<const Eigen::VectorXd>& new_y,
                                bool starts_segment = false);

/// Minimum-norm solution of min ||M x - b||_2 via SVD truncated at rel_tol.
Eigen::VectorXd min_norm_lstsq(const Eigen::Ref<const Eigen::MatrixXd>& m,
                               const Eigen::Ref<const Eigen::VectorXd>& b,
                               double rel_tol = kDefaultRankTol);

}  // namespace dfmpc::behavioral
