#include "dfmpc/behavioral.hpp"

#include <algorithm>
#include <string>
#include <utility>

#include <Eigen/SVD>

#include "dfmpc/errors.hpp"

namespace dfmpc::behavioral {

namespace {

Eigen::VectorXd stack(const Eigen::MatrixXd& seq) {
  return Eigen::Map<const Eigen::VectorXd>(seq.data(), seq.size());
}

}  // namespace

Trajectory Trajectory::Create(Eigen::MatrixXd inputs, Eigen::MatrixXd outputs) {
  if (inputs.cols() != outputs.cols()) {
    throw DimensionError("trajectory: inputs have " + std::to_string(inputs.cols()) +
                         " samples but outputs have " + std::to_string(outputs.cols()));
  }
  if (inputs.cols() < 1) {
    throw DimensionError("trajectory: at least one sample is required");
  }
  return Trajectory{std::move(inputs), std::move(outputs)};
}

HankelMatrix::HankelMatrix(const Eigen::Ref<const Eigen::MatrixXd>& seq, int depth,
                           const std::vector<Eigen::Index>& segment_starts) {
  const Eigen::Index n = seq.cols();
  if (depth < 1 || depth > n) {
    throw DimensionError("hankel: depth " + std::to_string(depth) +
                         " is outside [1, " + std::to_string(n) + "]");
  }
  depth_ = depth;
  block_dim_ = static_cast<int>(seq.rows());
  std::vector<Eigen::Index> first;
  first.reserve(static_cast<std::size_t>(n - depth + 1));
  for (Eigen::Index j = 0; j + depth <= n; ++j) {
    const bool straddles = std::any_of(segment_starts.begin(), segment_starts.end(),
                                       [&](Eigen::Index s) { return s > j && s < j + depth; });
    if (!straddles) first.push_back(j);
  }
  if (first.empty()) throw DimensionError("hankel: no segment is as long as the depth");
  entries_.resize(static_cast<Eigen::Index>(block_dim_) * depth,
                  static_cast<Eigen::Index>(first.size()));
  for (std::size_t c = 0; c < first.size(); ++c) {
    for (int i = 0; i < depth; ++i) {
      entries_.block(static_cast<Eigen::Index>(i) * block_dim_, static_cast<Eigen::Index>(c),
                     block_dim_, 1) = seq.col(first[c] + i);
    }
  }
}

HankelMatrix build_hankel(const Eigen::Ref<const Eigen::MatrixXd>& seq, int depth) {
  return HankelMatrix(seq, depth);
}

int numerical_rank(const Eigen::Ref<const Eigen::MatrixXd>& m, double rel_tol) {
  if (m.size() == 0) return 0;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) <= 0.0) return 0;
  const double threshold = rel_tol * sv(0);
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > threshold) ++rank;
  }
  return rank;
}

bool persistency_order_check(const Eigen::Ref<const Eigen::MatrixXd>& seq, int order,
                             double rank_tol) {
  const HankelMatrix h(seq, order);
  return numerical_rank(h.entries(), rank_tol) == h.block_dim() * order;
}

bool persistency_gram_check(const HankelMatrix& hankel, double rank_tol) {
  const Eigen::MatrixXd gram = hankel.entries() * hankel.entries().transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  const auto& ev = eig.eigenvalues();
  if (ev.size() == 0 || ev(ev.size() - 1) <= 0.0) return false;
  // Eigenvalues of the Gram matrix are squared singular values.
  return ev(0) > rank_tol * rank_tol * ev(ev.size() - 1);
}

BehavioralDataset BehavioralDataset::Create(Trajectory data, int hankel_depth,
                                            double noise_bound,
                                            std::vector<Eigen::Index> segment_starts) {
  if (noise_bound < 0.0) {
    throw DimensionError("dataset: noise bound must be nonnegative");
  }
  BehavioralDataset ds;
  ds.u_hankel = HankelMatrix(data.inputs, hankel_depth, segment_starts);
  ds.y_hankel = HankelMatrix(data.outputs, hankel_depth, segment_starts);
  ds.segment_starts = std::move(segment_starts);
  ds.data = std::move(data);
  ds.hankel_depth = hankel_depth;
  ds.noise_bound = noise_bound;
  return ds;
}

Eigen::VectorXd min_norm_lstsq(const Eigen::Ref<const Eigen::MatrixXd>& m,
                               const Eigen::Ref<const Eigen::VectorXd>& b, double rel_tol) {
  if (m.rows() != b.size()) {
    throw DimensionError("lstsq: right-hand side has wrong length");
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(m.cols());
  if (sv.size() == 0 || sv(0) <= 0.0) return x;
  const double threshold = rel_tol * sv(0);
  const Eigen::VectorXd utb = svd.matrixU().transpose() * b;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > threshold) x += svd.matrixV().col(i) * (utb(i) / sv(i));
  }
  return x;
}

MembershipResult trajectory_membership(const BehavioralDataset& dataset,
                                       const Trajectory& candidate, double residual_tol) {
  if (candidate.length() != dataset.hankel_depth ||
      candidate.input_dim() != dataset.input_dim() ||
      candidate.output_dim() != dataset.output_dim()) {
    throw DimensionError("membership: candidate of length " +
                         std::to_string(candidate.length()) +
                         " does not match Hankel depth " +
                         std::to_string(dataset.hankel_depth));
  }
  const Eigen::Index ru = dataset.u_hankel.entries().rows();
  const Eigen::Index ry = dataset.y_hankel.entries().rows();
  Eigen::MatrixXd h(ru + ry, dataset.columns());
  h << dataset.u_hankel.entries(), dataset.y_hankel.entries();
  Eigen::VectorXd w(ru + ry);
  w << stack(candidate.inputs), stack(candidate.outputs);

  MembershipResult result;
  result.g = min_norm_lstsq(h, w);
  result.residual = (h * result.g - w).lpNorm<Eigen::Infinity>();
  result.member = result.residual <= residual_tol;
  return result;
}

BehavioralDataset update_window(const BehavioralDataset& dataset,
                                const Eigen::Ref<const Eigen::VectorXd>& new_u,
                                const Eigen::Ref<const Eigen::VectorXd>& new_y,
                                bool starts_segment) {
  if (new_u.size() != dataset.input_dim() || new_y.size() != dataset.output_dim()) {
    throw DimensionError("update_window: sample dimension mismatch");
  }
  const Eigen::Index n = dataset.data.length();
  Eigen::MatrixXd u(dataset.input_dim(), n);
  Eigen::MatrixXd y(dataset.output_dim(), n);
  u.leftCols(n - 1) = dataset.data.inputs.rightCols(n - 1);
  y.leftCols(n - 1) = dataset.data.outputs.rightCols(n - 1);
  u.col(n - 1) = new_u;
  y.col(n - 1) = new_y;
  std::vector<Eigen::Index> starts;
  for (Eigen::Index s : dataset.segment_starts) {
    if (s > 1) starts.push_back(s - 1);
  }
  if (starts_segment && n > 1) starts.push_back(n - 1);
  return BehavioralDataset::Create(Trajectory{std::move(u), std::move(y)},
                                   dataset.hankel_depth, dataset.noise_bound, std::move(starts));
}

}  // namespace dfmpc::behavioral
