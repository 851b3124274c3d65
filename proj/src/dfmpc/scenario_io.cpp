#include "dfmpc/scenario_io.hpp"

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "dfmpc/errors.hpp"

namespace dfmpc::io {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

// A JSON node together with its dotted key path for error messages.
class Node {
 public:
  Node(const json& value, std::string path) : value_(value), path_(std::move(path)) {}

  const json& value() const { return value_; }
  const std::string& path() const { return path_; }

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError((path_.empty() ? std::string("scenario") : path_) + ": " + what);
  }

  void expect_object(std::initializer_list<const char*> allowed) const {
    if (!value_.is_object()) fail("expected an object");
    for (const auto& item : value_.items()) {
      bool known = false;
      for (const char* key : allowed) known = known || item.key() == key;
      if (!known) Node(item.value(), child_path(item.key())).fail("unknown key");
    }
  }

  bool has(const char* key) const { return value_.contains(key); }

  Node operator[](const char* key) const {
    if (!value_.contains(key)) Node(value_, child_path(key)).fail("missing required key");
    return Node(value_.at(key), child_path(key));
  }

  Node at(std::size_t i) const {
    return Node(value_.at(i), path_ + "[" + std::to_string(i) + "]");
  }

  bool is_auto() const { return value_.is_string() && value_.get<std::string>() == "auto"; }

  double number() const {
    if (!value_.is_number()) fail("expected a number");
    return value_.get<double>();
  }

  int integer() const {
    if (!value_.is_number_integer()) fail("expected an integer");
    const auto v = value_.get<std::int64_t>();
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
      fail("integer out of range");
    }
    return static_cast<int>(v);
  }

  std::uint64_t unsigned_integer() const {
    if (value_.is_number_unsigned()) return value_.get<std::uint64_t>();
    fail("expected a nonnegative integer");
  }

  bool boolean() const {
    if (!value_.is_boolean()) fail("expected true or false");
    return value_.get<bool>();
  }

  std::string string() const {
    if (!value_.is_string()) fail("expected a string");
    return value_.get<std::string>();
  }

  VectorXd vector() const {
    if (!value_.is_array()) fail("expected an array of numbers");
    VectorXd v(static_cast<Eigen::Index>(value_.size()));
    for (std::size_t i = 0; i < value_.size(); ++i) {
      v(static_cast<Eigen::Index>(i)) = at(i).number();
    }
    return v;
  }

  // Row-major nested arrays; [[], []] is a 2 x 0 matrix.
  MatrixXd matrix() const {
    if (!value_.is_array()) fail("expected an array of rows");
    const auto rows = static_cast<Eigen::Index>(value_.size());
    if (rows == 0) return MatrixXd(0, 0);
    const Node first = at(0);
    if (!first.value().is_array()) first.fail("expected an array of numbers");
    const auto cols = static_cast<Eigen::Index>(first.value().size());
    MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const VectorXd row = at(static_cast<std::size_t>(r)).vector();
      if (row.size() != cols) at(static_cast<std::size_t>(r)).fail("ragged matrix row");
      m.row(r) = row.transpose();
    }
    return m;
  }

  // A matrix, or a number meaning that multiple of the n x n identity.
  MatrixXd square_or_scalar(Eigen::Index n) const {
    if (value_.is_number()) return number() * MatrixXd::Identity(n, n);
    MatrixXd m = matrix();
    if (m.rows() != n || m.cols() != n) {
      throw DimensionError(path_ + ": expected a " + std::to_string(n) + " x " +
                           std::to_string(n) + " matrix");
    }
    return m;
  }

 private:
  std::string child_path(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  const json& value_;
  std::string path_;
};

template <typename F>
auto guarded(const Node& node, F&& convert) {
  try {
    return convert();
  } catch (const ConfigError&) {
    throw;
  } catch (const DimensionError&) {
    throw;
  } catch (const std::exception& e) {
    node.fail(e.what());
  }
}

linsys::PolytopicSet parse_set(const Node& n) {
  n.expect_object({"lower", "upper", "E", "e"});
  if (n.has("lower") || n.has("upper")) {
    if (n.has("E") || n.has("e")) n.fail("give either lower/upper or E/e");
    const VectorXd lo = n["lower"].vector(), hi = n["upper"].vector();
    return guarded(n, [&] { return linsys::PolytopicSet::Box(lo, hi); });
  }
  MatrixXd e_mat = n["E"].matrix();
  VectorXd e_vec = n["e"].vector();
  return guarded(n, [&] { return linsys::PolytopicSet(std::move(e_mat), std::move(e_vec)); });
}

qp::QpSettings parse_qp(const Node& n) {
  n.expect_object({"abs_tol", "rel_tol", "max_iter", "rho", "sigma", "alpha", "adaptive_rho",
                   "adaptive_rho_interval", "scaling_iterations", "infeasibility_tol",
                   "check_interval", "polish", "polish_interval", "polish_delta",
                   "polish_refinement"});
  qp::QpSettings s;
  if (n.has("abs_tol")) s.abs_tol = n["abs_tol"].number();
  if (n.has("rel_tol")) s.rel_tol = n["rel_tol"].number();
  if (n.has("max_iter")) s.max_iter = n["max_iter"].integer();
  if (n.has("rho")) s.rho = n["rho"].number();
  if (n.has("sigma")) s.sigma = n["sigma"].number();
  if (n.has("alpha")) s.alpha = n["alpha"].number();
  if (n.has("adaptive_rho")) s.adaptive_rho = n["adaptive_rho"].boolean();
  if (n.has("adaptive_rho_interval")) {
    s.adaptive_rho_interval = n["adaptive_rho_interval"].integer();
  }
  if (n.has("scaling_iterations")) s.scaling_iterations = n["scaling_iterations"].integer();
  if (n.has("infeasibility_tol")) s.infeasibility_tol = n["infeasibility_tol"].number();
  if (n.has("check_interval")) s.check_interval = n["check_interval"].integer();
  if (n.has("polish")) s.polish = n["polish"].boolean();
  if (n.has("polish_interval")) s.polish_interval = n["polish_interval"].integer();
  if (n.has("polish_delta")) s.polish_delta = n["polish_delta"].number();
  if (n.has("polish_refinement")) s.polish_refinement = n["polish_refinement"].integer();
  return s;
}

}  // namespace

ScenarioFile parse_scenario(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }
  const Node root(doc, "");
  root.expect_object({"version", "name", "known", "hidden", "controller", "schedule", "noise",
                      "offline", "duration", "comparator", "baseline_model", "x1_initial",
                      "x2_initial", "warmup_input", "reference_smoothing", "tracked_outputs",
                      "steady_state_fraction", "output"});
  const int version = root["version"].integer();
  if (version != kScenarioFormatVersion) {
    root["version"].fail("unsupported version " + std::to_string(version));
  }

  ScenarioFile file;
  sim::Scenario& s = file.scenario;
  if (root.has("name")) s.name = root["name"].string();

  const Node known = root["known"];
  known.expect_object({"A1", "B1", "C1", "E1"});
  s.known = guarded(known, [&] {
    return linsys::KnownSubsystem::Create(known["A1"].matrix(), known["B1"].matrix(),
                                          known["C1"].matrix(), known["E1"].matrix());
  });

  const Node hidden = root["hidden"];
  hidden.expect_object({"A2", "B2", "C2", "nonlinearity"});
  linsys::StaticNonlinearity nl;
  if (hidden.has("nonlinearity")) {
    const Node n = hidden["nonlinearity"];
    n.expect_object({"kind", "scale"});
    nl.kind = guarded(n["kind"], [&] { return linsys::output_map_from_string(n["kind"].string()); });
    if (n.has("scale")) nl.scale = n["scale"].number();
  }
  s.hidden = guarded(hidden, [&] {
    return linsys::HiddenSubsystem::Create(hidden["A2"].matrix(), hidden["B2"].matrix(),
                                           hidden["C2"].matrix(), nl);
  });
  const Eigen::Index m = s.m(), p = s.p(), p2 = s.hidden.output_dim();

  if (root.has("noise")) {
    const Node n = root["noise"];
    n.expect_object({"epsilon", "distribution", "seed"});
    if (n.has("epsilon")) s.noise.epsilon = n["epsilon"].number();
    if (n.has("distribution")) {
      s.noise.distribution = guarded(n["distribution"], [&] {
        return sim::noise_distribution_from_string(n["distribution"].string());
      });
    }
    if (n.has("seed")) s.noise.seed = n["seed"].unsigned_integer();
  }
  if (root.has("offline")) {
    const Node n = root["offline"];
    n.expect_object({"N", "excitation", "amplitude", "offset", "max_attempts"});
    if (n.has("N")) s.offline.N = n["N"].integer();
    if (n.has("excitation")) {
      s.offline.excitation = guarded(n["excitation"], [&] {
        return sim::excitation_from_string(n["excitation"].string());
      });
    }
    if (n.has("amplitude")) s.offline.amplitude = n["amplitude"].number();
    if (n.has("offset")) s.offline.offset = n["offset"].vector();
    if (n.has("max_attempts")) s.offline.max_attempts = n["max_attempts"].integer();
  }
  const double eps = s.noise.epsilon;

  const Node ctl = root["controller"];
  ctl.expect_object({"L", "n1", "n2", "weights", "input_set", "output_set", "noise_bound",
                     "online_update", "affine_data", "infeasibility_policy",
                     "recheck_persistency", "equilibrium_regularizer", "qp"});
  mpc::ControllerConfig& c = s.controller;
  c.L = ctl["L"].integer();
  c.n1 = ctl["n1"].integer();
  c.n2 = ctl["n2"].integer();
  const mpc::Weights defaults = mpc::default_weights(m, p, p2, eps, s.offline.N);
  c.weights = defaults;
  s.derived = {true, true, false};
  if (ctl.has("weights") && !ctl["weights"].is_auto()) {
    const Node w = ctl["weights"];
    w.expect_object({"Q", "R", "S", "T", "Gamma", "Lambda"});
    auto square = [&](const char* key, Eigen::Index n, MatrixXd& out) {
      if (w.has(key) && !w[key].is_auto()) out = w[key].square_or_scalar(n);
    };
    square("Q", p, c.weights.Q);
    square("R", m, c.weights.R);
    square("S", m, c.weights.S);
    square("T", p, c.weights.T);
    if (w.has("Gamma") && !w["Gamma"].is_auto()) {
      c.weights.Gamma = w["Gamma"].square_or_scalar(p2);
      s.derived.gamma = false;
    }
    if (w.has("Lambda") && !w["Lambda"].is_auto()) {
      c.weights.Lambda = w["Lambda"].number();
      s.derived.lambda = false;
    }
  }
  c.input_set = parse_set(ctl["input_set"]);
  c.output_set = parse_set(ctl["output_set"]);
  c.noise_bound = eps;
  s.derived.noise_bound = true;
  if (ctl.has("noise_bound") && !ctl["noise_bound"].is_auto()) {
    c.noise_bound = ctl["noise_bound"].number();
    s.derived.noise_bound = false;
  }
  if (ctl.has("online_update")) c.online_update = ctl["online_update"].boolean();
  if (ctl.has("affine_data")) c.affine_data = ctl["affine_data"].boolean();
  if (ctl.has("infeasibility_policy")) {
    const Node n = ctl["infeasibility_policy"];
    c.infeasibility_policy =
        guarded(n, [&] { return mpc::infeasibility_policy_from_string(n.string()); });
  }
  if (ctl.has("recheck_persistency")) {
    c.recheck_persistency = ctl["recheck_persistency"].boolean();
  }
  if (ctl.has("equilibrium_regularizer")) {
    c.equilibrium_regularizer = ctl["equilibrium_regularizer"].boolean();
  }
  if (ctl.has("qp")) c.qp = parse_qp(ctl["qp"]);

  const Node sched = root["schedule"];
  if (!sched.value().is_array()) sched.fail("expected an array of reference points");
  for (std::size_t i = 0; i < sched.value().size(); ++i) {
    const Node r = sched.at(i);
    r.expect_object({"start", "u_ref", "y_ref"});
    sim::ReferencePoint point;
    point.start = r.has("start") ? r["start"].integer() : 0;
    point.u_ref = r["u_ref"].vector();
    point.y_ref = r["y_ref"].vector();
    s.schedule.push_back(std::move(point));
  }

  s.duration = root["duration"].integer();
  if (root.has("comparator")) {
    const Node n = root["comparator"];
    s.comparator = guarded(n, [&] { return sim::comparator_from_string(n.string()); });
  }
  if (root.has("baseline_model")) {
    const Node b = root["baseline_model"];
    b.expect_object({"A", "B", "C"});
    s.baseline_model = mpc::LinearModel{b["A"].matrix(), b["B"].matrix(), b["C"].matrix()};
  }
  s.x1_initial = root.has("x1_initial") ? root["x1_initial"].vector()
                                        : VectorXd::Zero(s.known.state_dim());
  s.x2_initial = root.has("x2_initial") ? root["x2_initial"].vector()
                                        : VectorXd::Zero(s.hidden.state_dim());
  s.warmup_input = root.has("warmup_input") ? root["warmup_input"].vector() : VectorXd::Zero(m);
  if (root.has("reference_smoothing")) {
    s.reference_smoothing = root["reference_smoothing"].boolean();
  }
  if (root.has("tracked_outputs")) {
    const Node t = root["tracked_outputs"];
    if (!t.value().is_array()) t.fail("expected an array of channel indices");
    for (std::size_t i = 0; i < t.value().size(); ++i) {
      s.tracked_outputs.push_back(t.at(i).integer());
    }
  }
  if (root.has("steady_state_fraction")) {
    s.steady_state_fraction = root["steady_state_fraction"].number();
  }
  if (root.has("output")) {
    const Node o = root["output"];
    o.expect_object({"dir"});
    file.out_dir = o["dir"].string();
  }

  s.validate();
  s.controller.validate(m, p, p2);
  return file;
}

ScenarioFile load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read scenario file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

namespace {

json matrix_to_json(const MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_to_json(const VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

json set_to_json(const linsys::PolytopicSet& set) {
  return json{{"E", matrix_to_json(set.E())}, {"e", vector_to_json(set.e())}};
}

}  // namespace

std::string dump_scenario(const sim::Scenario& s, const std::string& out_dir) {
  json doc;
  doc["version"] = kScenarioFormatVersion;
  doc["name"] = s.name;
  doc["known"] = {{"A1", matrix_to_json(s.known.A1)},
                  {"B1", matrix_to_json(s.known.B1)},
                  {"C1", matrix_to_json(s.known.C1)},
                  {"E1", matrix_to_json(s.known.E1)}};
  doc["hidden"] = {{"A2", matrix_to_json(s.hidden.A2)},
                   {"B2", matrix_to_json(s.hidden.B2)},
                   {"C2", matrix_to_json(s.hidden.C2)},
                   {"nonlinearity",
                    {{"kind", linsys::to_string(s.hidden.nonlinearity.kind)},
                     {"scale", s.hidden.nonlinearity.scale}}}};

  const mpc::ControllerConfig& c = s.controller;
  json weights = {{"Q", matrix_to_json(c.weights.Q)},
                  {"R", matrix_to_json(c.weights.R)},
                  {"S", matrix_to_json(c.weights.S)},
                  {"T", matrix_to_json(c.weights.T)}};
  weights["Gamma"] = s.derived.gamma ? json("auto") : matrix_to_json(c.weights.Gamma);
  weights["Lambda"] = s.derived.lambda ? json("auto") : json(c.weights.Lambda);
  const qp::QpSettings& q = c.qp;
  doc["controller"] = {
      {"L", c.L},
      {"n1", c.n1},
      {"n2", c.n2},
      {"weights", std::move(weights)},
      {"input_set", set_to_json(c.input_set)},
      {"output_set", set_to_json(c.output_set)},
      {"noise_bound", s.derived.noise_bound ? json("auto") : json(c.noise_bound)},
      {"online_update", c.online_update},
      {"affine_data", c.affine_data},
      {"infeasibility_policy", mpc::to_string(c.infeasibility_policy)},
      {"recheck_persistency", c.recheck_persistency},
      {"equilibrium_regularizer", c.equilibrium_regularizer},
      {"qp",
       {{"abs_tol", q.abs_tol},
        {"rel_tol", q.rel_tol},
        {"max_iter", q.max_iter},
        {"rho", q.rho},
        {"sigma", q.sigma},
        {"alpha", q.alpha},
        {"adaptive_rho", q.adaptive_rho},
        {"adaptive_rho_interval", q.adaptive_rho_interval},
        {"scaling_iterations", q.scaling_iterations},
        {"infeasibility_tol", q.infeasibility_tol},
        {"check_interval", q.check_interval},
        {"polish", q.polish},
        {"polish_interval", q.polish_interval},
        {"polish_delta", q.polish_delta},
        {"polish_refinement", q.polish_refinement}}}};

  json sched = json::array();
  for (const sim::ReferencePoint& r : s.schedule) {
    sched.push_back(
        {{"start", r.start}, {"u_ref", vector_to_json(r.u_ref)}, {"y_ref", vector_to_json(r.y_ref)}});
  }
  doc["schedule"] = std::move(sched);
  doc["noise"] = {{"epsilon", s.noise.epsilon},
                  {"distribution", sim::to_string(s.noise.distribution)},
                  {"seed", s.noise.seed}};
  doc["offline"] = {{"N", s.offline.N},
                    {"excitation", sim::to_string(s.offline.excitation)},
                    {"amplitude", s.offline.amplitude},
                    {"offset", vector_to_json(s.offline.offset)},
                    {"max_attempts", s.offline.max_attempts}};
  doc["duration"] = s.duration;
  doc["comparator"] = sim::to_string(s.comparator);
  if (s.baseline_model) {
    doc["baseline_model"] = {{"A", matrix_to_json(s.baseline_model->A)},
                             {"B", matrix_to_json(s.baseline_model->B)},
                             {"C", matrix_to_json(s.baseline_model->C)}};
  }
  doc["x1_initial"] = vector_to_json(s.x1_initial);
  doc["x2_initial"] = vector_to_json(s.x2_initial);
  doc["warmup_input"] = vector_to_json(s.warmup_input);
  doc["reference_smoothing"] = s.reference_smoothing;
  doc["tracked_outputs"] = s.tracked_outputs;
  doc["steady_state_fraction"] = s.steady_state_fraction;
  if (!out_dir.empty()) doc["output"] = {{"dir", out_dir}};
  return doc.dump(2) + "\n";
}

}  // namespace dfmpc::io
