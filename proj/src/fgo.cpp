#include "gatevio/fgo.hpp"

#include "gatevio/error.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace gatevio {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

template <int N>
bool is_spd(const Eigen::Matrix<double, N, N>& A) {
  if ((A - A.transpose()).norm() > 1e-12 * std::max(1.0, A.norm())) return false;
  Eigen::LLT<Eigen::Matrix<double, N, N>> llt(A);
  return llt.info() == Eigen::Success;
}

/// W with W^T W = cov^-1, so that |W r|^2 is the Mahalanobis norm.
template <int N>
Eigen::Matrix<double, N, N> whitener(const Eigen::Matrix<double, N, N>& cov) {
  Eigen::LLT<Eigen::Matrix<double, N, N>> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::SingularNormalEquations, "covariance is not positive definite");
  }
  return llt.matrixL().solve(Eigen::Matrix<double, N, N>::Identity());
}

bool same_bias(const NominalState& x, const PreintegratedImu& p) {
  return x.b_a == p.bias_a_lin && x.b_w == p.bias_w_lin;
}

void sync_preints(const std::vector<NominalState>& xs, std::vector<PreintegratedImu>& preints,
                  const NoiseParams& noise) {
  // Only the increments follow the bias. The factor weight stays at the
  // covariance of the original preintegration, so the cost is a fixed
  // weighted least-squares problem whose gradient is exactly J^T r.
  for (std::size_t k = 0; k < preints.size(); ++k) {
    if (!same_bias(xs[k], preints[k])) {
      const Mat9 cov9 = preints[k].cov9;
      preints[k] = repreintegrate(preints[k], xs[k].b_a, xs[k].b_w, noise);
      preints[k].cov9 = cov9;
    }
  }
}

struct Linearization {
  std::vector<Eigen::Triplet<double>> triplets;
  std::vector<double> r;

  template <typename Derived>
  void add_block(int row, int col, const Eigen::MatrixBase<Derived>& M) {
    for (int j = 0; j < M.cols(); ++j) {
      for (int i = 0; i < M.rows(); ++i) {
        const double v = M(i, j);
        if (v != 0.0) triplets.emplace_back(row + i, col + j, v);
      }
    }
  }
  template <typename Derived>
  int add_rows(const Eigen::MatrixBase<Derived>& res) {
    const int row = static_cast<int>(r.size());
    for (int i = 0; i < res.size(); ++i) r.push_back(res(i));
    return row;
  }
};

class Problem {
 public:
  explicit Problem(const FactorGraph& g)
      : g_(g),
        n_kf_(static_cast<int>(g.keyframes.size())),
        n_vars_(15 * n_kf_ + (g.refine_extrinsics ? 3 : 0)),
        W_prior_(whitener<6>(g.weights.sigma_prior)),
        W_corner_(whitener<2>(g.weights.sigma_corner)),
        W_ext_(whitener<3>(g.weights.sigma_ext)) {}

  int n_vars() const { return n_vars_; }
  int ext_col() const { return 15 * n_kf_; }

  /// Cost at (xs, ext); preints must match the biases of xs. With lin set,
  /// also the whitened (and Huber-reweighted) residual and Jacobian.
  double evaluate(const std::vector<NominalState>& xs, const UnitQuaternion& ext,
                  const std::vector<PreintegratedImu>& preints, Linearization* lin) const {
    double cost = 0.0;
    const Vec3& g = g_.noise.gravity;
    for (int k = 0; k + 1 < n_kf_; ++k) {
      const PreintegratedImu& pre = preints[static_cast<std::size_t>(k)];
      const NominalState& x0 = xs[static_cast<std::size_t>(k)];
      const NominalState& x1 = xs[static_cast<std::size_t>(k) + 1];
      const Mat9 W = whitener<9>(pre.cov9);
      if (lin) {
        const ImuResidualJacobians J = imu_residual_jacobians(x0, x1, pre, g);
        const Vec9 rw = W * J.r;
        cost += rw.squaredNorm();
        const int row = lin->add_rows(rw);
        lin->add_block(row, 15 * k, W * J.J0);
        lin->add_block(row, 15 * (k + 1), W * J.J1);
      } else {
        cost += (W * imu_residual(x0, x1, pre, g)).squaredNorm();
      }

      if (g_.weights.bias_walk_factor) {
        const double T = pre.dt_total;
        Vec6 inv_sd;
        inv_sd << Vec3::Constant(1.0 / (g_.noise.sigma_ba * std::sqrt(T))),
            Vec3::Constant(1.0 / (g_.noise.sigma_bw * std::sqrt(T)));
        const Vec6 rw = inv_sd.cwiseProduct(bias_walk_residual(x0, x1));
        cost += rw.squaredNorm();
        if (lin) {
          const int row = lin->add_rows(rw);
          const Mat6 D = inv_sd.asDiagonal();
          lin->add_block(row, 15 * k + idx::kBa, -D);
          lin->add_block(row, 15 * (k + 1) + idx::kBa, D);
        }
      }
    }

    for (int k = 0; k < n_kf_; ++k) {
      const Keyframe& kf = g_.keyframes[static_cast<std::size_t>(k)];
      const NominalState& x = xs[static_cast<std::size_t>(k)];
      if (kf.vins_prior) {
        const Vec6 rw = W_prior_ * prior_residual(x, *kf.vins_prior);
        cost += rw.squaredNorm();
        if (lin) {
          const int row = lin->add_rows(rw);
          lin->add_block(row, 15 * k, W_prior_ * prior_residual_jacobian(x, *kf.vins_prior));
        }
      }
      for (const CornerMeasurement& z : kf.measurements) {
        if (lin) {
          const auto c = corner_residual_jacobian(x, ext, g_.p_bc, z);
          if (!c) continue;
          const Vec2 rw = W_corner_ * c->r;
          const double s = rw.squaredNorm();
          const double sw = std::sqrt(huber_irls_weight(s));
          cost += huber_cost(s);
          const int row = lin->add_rows(sw * rw);
          lin->add_block(row, 15 * k, sw * W_corner_ * c->J_x);
          if (g_.refine_extrinsics) lin->add_block(row, ext_col(), sw * W_corner_ * c->J_ext);
        } else {
          const auto r = corner_residual(x, ext, g_.p_bc, z);
          if (r) cost += huber_cost((W_corner_ * *r).squaredNorm());
        }
      }
    }

    if (g_.refine_extrinsics) {
      const Vec3 rw = W_ext_ * extrinsics_residual(ext, g_.ext_nominal);
      cost += rw.squaredNorm();
      if (lin) {
        const int row = lin->add_rows(rw);
        lin->add_block(row, ext_col(), W_ext_ * extrinsics_residual_jacobian(ext, g_.ext_nominal));
      }
    }
    return cost;
  }

 private:
  double huber_cost(double s) const {
    const double d = g_.weights.huber_delta_corner;
    if (s <= d * d) return s;
    return 2.0 * d * std::sqrt(s) - d * d;
  }
  double huber_irls_weight(double s) const {
    const double d = g_.weights.huber_delta_corner;
    if (s <= d * d) return 1.0;
    return d / std::sqrt(s);
  }

  const FactorGraph& g_;
  int n_kf_;
  int n_vars_;
  Mat6 W_prior_;
  Mat2 W_corner_;
  Mat3 W_ext_;
};

using SpMat = Eigen::SparseMatrix<double>;

SpMat jacobian_matrix(const Linearization& lin, int n_vars) {
  SpMat J(static_cast<Eigen::Index>(lin.r.size()), n_vars);
  J.setFromTriplets(lin.triplets.begin(), lin.triplets.end());
  return J;
}

Eigen::VectorXd residual_vector(const Linearization& lin) {
  return Eigen::Map<const Eigen::VectorXd>(lin.r.data(), static_cast<Eigen::Index>(lin.r.size()));
}

double state_norm(const std::vector<NominalState>& xs) {
  double s = 0.0;
  for (const NominalState& x : xs) {
    s += x.p.squaredNorm() + x.v.squaredNorm() + x.b_a.squaredNorm() + x.b_w.squaredNorm();
  }
  return std::sqrt(s);
}

}  // namespace

Mat6 FgoWeights::default_sigma_prior() {
  Vec6 d;
  d << Vec3::Constant(0.5 * 0.5), Vec3::Constant((5.0 * kDeg) * (5.0 * kDeg));
  return d.asDiagonal();
}

Mat3 FgoWeights::default_sigma_ext() { return Mat3::Identity() * (2.0 * kDeg) * (2.0 * kDeg); }

void FgoWeights::validate() const {
  if (!is_spd<2>(sigma_corner)) throw Error(ErrorCode::ValidationError, "sigma_corner must be SPD");
  if (!is_spd<6>(sigma_prior)) throw Error(ErrorCode::ValidationError, "sigma_prior must be SPD");
  if (!is_spd<3>(sigma_ext)) throw Error(ErrorCode::ValidationError, "sigma_ext must be SPD");
  if (!(huber_delta_corner > 0.0)) {
    throw Error(ErrorCode::ValidationError, "huber_delta_corner must be positive");
  }
  if (!(kf_time_threshold > 0.0)) {
    throw Error(ErrorCode::ValidationError, "kf_time_threshold must be positive");
  }
}

void FactorGraph::validate() const {
  weights.validate();
  noise.validate();
  if (keyframes.size() < 2) throw Error(ErrorCode::ValidationError, "graph needs >= 2 keyframes");
  if (preints.size() + 1 != keyframes.size()) {
    throw Error(ErrorCode::ValidationError, "need exactly one preintegration per keyframe pair");
  }
  for (std::size_t k = 0; k + 1 < keyframes.size(); ++k) {
    if (!(keyframes[k + 1].t > keyframes[k].t)) {
      throw Error(ErrorCode::ValidationError,
                  "keyframe timestamps not increasing at index " + std::to_string(k + 1));
    }
    if (!(preints[k].dt_total > 0.0)) {
      throw Error(ErrorCode::ValidationError, "empty preintegration at index " + std::to_string(k));
    }
  }
}

std::optional<Vec2> corner_residual(const NominalState& x, const UnitQuaternion& ext_rotation,
                                    const Vec3& p_bc, const CornerMeasurement& z) {
  const Vec3 p_c = world_to_camera(z.p_gw, x.p, x.q, Extrinsics{ext_rotation, p_bc});
  const auto h = try_project(p_c);
  if (!h) return std::nullopt;
  return Vec2(z.u_norm - *h);
}

std::optional<CornerFactorJacobian> corner_residual_jacobian(const NominalState& x,
                                                             const UnitQuaternion& ext_rotation,
                                                             const Vec3& p_bc,
                                                             const CornerMeasurement& z) {
  const Mat3 R_wb = x.q.rotation_matrix();
  const Mat3 R_bc = ext_rotation.rotation_matrix();
  const Vec3 p_b = R_wb.transpose() * (z.p_gw - x.p);
  const Vec3 p_c = R_bc.transpose() * (p_b - p_bc);
  const auto h = try_project(p_c);
  if (!h) return std::nullopt;
  const Mat23 Jpi = project_jacobian(p_c);
  CornerFactorJacobian out;
  out.r = z.u_norm - *h;
  out.J_x.setZero();
  out.J_x.block<2, 3>(0, idx::kPos) = Jpi * R_bc.transpose() * R_wb.transpose();
  out.J_x.block<2, 3>(0, idx::kAtt) = -Jpi * R_bc.transpose() * skew(p_b);
  out.J_ext = -Jpi * skew(p_c);
  return out;
}

Vec6 prior_residual(const NominalState& x, const NominalState& prior) {
  return state_boxminus(x, prior);
}

Mat6x15 prior_residual_jacobian(const NominalState& x, const NominalState& prior) {
  Mat6x15 J = Mat6x15::Zero();
  J.block<3, 3>(0, idx::kPos) = Mat3::Identity();
  J.block<3, 3>(3, idx::kAtt) = so3_right_jacobian_inv(so3_log(prior.q.inverse() * x.q));
  return J;
}

Vec3 extrinsics_residual(const UnitQuaternion& ext_rotation, const UnitQuaternion& nominal) {
  return so3_log(nominal.inverse() * ext_rotation);
}

Mat3 extrinsics_residual_jacobian(const UnitQuaternion& ext_rotation, const UnitQuaternion& nominal) {
  return so3_right_jacobian_inv(extrinsics_residual(ext_rotation, nominal));
}

Vec6 bias_walk_residual(const NominalState& x0, const NominalState& x1) {
  Vec6 r;
  r << x1.b_a - x0.b_a, x1.b_w - x0.b_w;
  return r;
}

std::vector<KeyframeSlot> select_keyframes(std::span<const MeasurementFrame> frames, double start_t,
                                           double end_t, double tau_t, std::span<const double> grid,
                                           bool insert_visual_less) {
  constexpr double kSame = 1e-9;
  if (!(tau_t > 0.0)) throw Error(ErrorCode::ValidationError, "tau_t must be positive");
  if (!(end_t > start_t)) throw Error(ErrorCode::ValidationError, "keyframe span is empty");

  std::vector<KeyframeSlot> anchors{{start_t, std::nullopt}};
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const MeasurementFrame& f = frames[i];
    if (f.measurements.empty() || f.t < start_t - kSame || f.t > end_t + kSame) continue;
    if (std::abs(f.t - anchors.back().t) <= kSame) {
      anchors.back().frame = i;
      continue;
    }
    if (f.t < anchors.back().t) {
      throw Error(ErrorCode::NonMonotonicTimestamp, "frame " + std::to_string(i) + " out of order");
    }
    anchors.push_back({f.t, i});
  }
  if (end_t - anchors.back().t > kSame) anchors.push_back({end_t, std::nullopt});
  if (!insert_visual_less) return anchors;

  std::vector<KeyframeSlot> out{anchors.front()};
  for (std::size_t j = 1; j < anchors.size(); ++j) {
    const double target = anchors[j].t;
    double prev = out.back().t;
    while (target - prev > tau_t) {
      const double n = std::ceil((target - prev) / tau_t);
      double chosen = prev + (target - prev) / n;
      if (!grid.empty()) {
        auto it = std::upper_bound(grid.begin(), grid.end(), chosen);
        if (it != grid.begin() && *std::prev(it) > prev + kSame) chosen = *std::prev(it);
      }
      out.push_back({chosen, std::nullopt});
      prev = chosen;
    }
    out.push_back(anchors[j]);
  }
  return out;
}

std::string_view to_string(LmTermination t) {
  switch (t) {
    case LmTermination::CostTolerance: return "cost_tolerance";
    case LmTermination::RelativeDecrease: return "relative_decrease";
    case LmTermination::Gradient: return "gradient";
    case LmTermination::StepSize: return "step_size";
    case LmTermination::MaxIterations: return "max_iterations";
  }
  return "?";
}

double graph_cost(const FactorGraph& graph) {
  graph.validate();
  std::vector<NominalState> xs;
  for (const Keyframe& kf : graph.keyframes) xs.push_back(kf.state);
  std::vector<PreintegratedImu> preints = graph.preints;
  sync_preints(xs, preints, graph.noise);
  return Problem(graph).evaluate(xs, graph.ext_rotation, preints, nullptr);
}

FgoResult optimize(const FactorGraph& graph, const LmOptions& opt) {
  graph.validate();
  const Problem problem(graph);
  const int n = problem.n_vars();

  std::vector<NominalState> xs;
  xs.reserve(graph.keyframes.size());
  for (const Keyframe& kf : graph.keyframes) xs.push_back(kf.state);
  UnitQuaternion ext = graph.ext_rotation;
  std::vector<PreintegratedImu> preints = graph.preints;
  sync_preints(xs, preints, graph.noise);

  FgoResult result;
  Linearization lin;
  double cost = problem.evaluate(xs, ext, preints, &lin);
  result.initial_cost = cost;

  double lambda = opt.lambda_init;
  double nu = 2.0;
  double grad_norm = 0.0;
  // The sparsity pattern of H is fixed, so the ordering is computed once.
  Eigen::SimplicialLDLT<SpMat> solver;
  bool analyzed = false;
  for (int iter = 0;; ++iter) {
    const SpMat J = jacobian_matrix(lin, n);
    const Eigen::VectorXd r = residual_vector(lin);
    const Eigen::VectorXd Jtr = J.transpose() * r;
    grad_norm = 2.0 * Jtr.lpNorm<Eigen::Infinity>();

    if (cost <= opt.abs_cost_tol) {
      result.termination = LmTermination::CostTolerance;
      result.converged = true;
      break;
    }
    if (grad_norm < opt.grad_tol) {
      result.termination = LmTermination::Gradient;
      result.converged = true;
      break;
    }
    if (iter >= opt.max_iters) {
      result.termination = LmTermination::MaxIterations;
      break;
    }

    const SpMat H = J.transpose() * J;
    const Eigen::VectorXd D = H.diagonal().cwiseMax(1e-6);
    Eigen::VectorXd h;
    for (int escalation = 0;; ++escalation) {
      SpMat damped = H;
      for (int i = 0; i < n; ++i) damped.coeffRef(i, i) += lambda * D(i);
      if (!analyzed) {
        solver.analyzePattern(damped);
        analyzed = true;
      }
      solver.factorize(damped);
      if (solver.info() == Eigen::Success) {
        h = solver.solve(-Jtr);
        if (solver.info() == Eigen::Success && h.allFinite()) break;
      }
      if (escalation >= opt.max_escalations) {
        throw Error(ErrorCode::SingularNormalEquations,
                    "damped normal equations unsolvable at lambda=" + std::to_string(lambda));
      }
      lambda *= 10.0;
    }

    LmIteration entry;
    entry.iter = iter;
    entry.cost = cost;
    entry.lambda = lambda;
    entry.gradient_norm = grad_norm;
    entry.step_norm = h.norm();
    if (entry.step_norm <= opt.step_tol * (state_norm(xs) + opt.step_tol)) {
      result.termination = LmTermination::StepSize;
      result.converged = true;
      break;
    }

    std::vector<NominalState> trial = xs;
    for (std::size_t k = 0; k < trial.size(); ++k) {
      trial[k] = compose_state(trial[k], h.segment<15>(15 * static_cast<Eigen::Index>(k)));
    }
    UnitQuaternion trial_ext = ext;
    if (graph.refine_extrinsics) trial_ext = ext * so3_exp(h.tail<3>());
    std::vector<PreintegratedImu> trial_preints = preints;
    sync_preints(trial, trial_preints, graph.noise);
    const double new_cost = problem.evaluate(trial, trial_ext, trial_preints, nullptr);
    entry.new_cost = new_cost;

    if (std::isfinite(new_cost) && new_cost < cost) {
      entry.accepted = true;
      result.log.push_back(entry);
      const double predicted = h.dot(lambda * D.cwiseProduct(h) - Jtr);
      const double rho = predicted > 0.0 ? (cost - new_cost) / predicted : 0.0;
      const double rel = (cost - new_cost) / cost;
      xs = std::move(trial);
      ext = trial_ext;
      preints = std::move(trial_preints);
      cost = new_cost;
      lin = Linearization{};
      problem.evaluate(xs, ext, preints, &lin);
      lambda *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
      nu = 2.0;
      if (rel < opt.rel_cost_tol) {
        const SpMat J_final = jacobian_matrix(lin, n);
        grad_norm = 2.0 * (J_final.transpose() * residual_vector(lin)).lpNorm<Eigen::Infinity>();
        result.termination = LmTermination::RelativeDecrease;
        result.converged = true;
        break;
      }
    } else {
      result.log.push_back(entry);
      lambda *= nu;
      nu *= 2.0;
    }
  }

  for (std::size_t k = 0; k < xs.size(); ++k) xs[k].t = graph.keyframes[k].t;
  result.states = std::move(xs);
  result.ext_rotation = ext;
  result.final_cost = cost;
  result.gradient_norm = grad_norm;
  return result;
}

std::optional<NominalState> interpolate_state(std::span<const NominalState> traj, double t) {
  if (traj.empty() || t < traj.front().t || t > traj.back().t) return std::nullopt;
  auto hi = std::lower_bound(traj.begin(), traj.end(), t,
                             [](const NominalState& s, double v) { return s.t < v; });
  if (hi->t == t) return *hi;
  auto lo = std::prev(hi);
  const double a = (t - lo->t) / (hi->t - lo->t);
  NominalState out;
  out.t = t;
  out.p = (1.0 - a) * lo->p + a * hi->p;
  out.v = (1.0 - a) * lo->v + a * hi->v;
  out.q = lo->q.slerp(a, hi->q);
  out.b_a = (1.0 - a) * lo->b_a + a * hi->b_a;
  out.b_w = (1.0 - a) * lo->b_w + a * hi->b_w;
  return out;
}

FactorGraph build_factor_graph(std::span<const ImuSample> imu, std::span<const MeasurementFrame> frames,
                               std::span<const NominalState> vins, const Extrinsics& nominal_ext,
                               const FgoWeights& weights, const NoiseParams& noise,
                               const GraphOptions& options) {
  weights.validate();
  noise.validate();
  if (imu.size() < 2) throw Error(ErrorCode::EmptyStream, "need at least two IMU readings");
  if (vins.empty()) throw Error(ErrorCode::EmptyStream, "empty filter trajectory");
  const double start_t = std::max(imu.front().t, vins.front().t);
  const double end_t = std::min(imu.back().t, vins.back().t);

  std::vector<double> grid;
  grid.reserve(imu.size());
  for (const ImuSample& s : imu) grid.push_back(s.t);
  const auto slots = select_keyframes(frames, start_t, end_t, weights.kf_time_threshold, grid,
                                      options.visual_less_keyframes);

  FactorGraph graph;
  graph.weights = weights;
  graph.noise = noise;
  graph.ext_rotation = nominal_ext.R_bc;
  graph.ext_nominal = nominal_ext.R_bc;
  graph.p_bc = nominal_ext.p_bc;
  graph.refine_extrinsics = options.refine_extrinsics;
  graph.keyframes.reserve(slots.size());
  for (const KeyframeSlot& slot : slots) {
    Keyframe kf;
    kf.t = slot.t;
    const auto init = interpolate_state(vins, std::clamp(slot.t, vins.front().t, vins.back().t));
    kf.state = *init;
    kf.state.t = slot.t;
    if (options.vins_priors) kf.vins_prior = kf.state;
    kf.visual_less = !slot.frame.has_value();
    if (slot.frame) kf.measurements = frames[*slot.frame].measurements;
    graph.keyframes.push_back(std::move(kf));
  }
  graph.preints.reserve(slots.size() - 1);
  for (std::size_t k = 0; k + 1 < graph.keyframes.size(); ++k) {
    const Keyframe& kf = graph.keyframes[k];
    const auto samples = slice_imu(imu, kf.t, graph.keyframes[k + 1].t);
    graph.preints.push_back(preintegrate(samples, kf.state.b_a, kf.state.b_w, noise));
  }
  return graph;
}

std::vector<NominalState> densify(const FactorGraph& graph, std::span<const NominalState> states) {
  if (states.size() != graph.keyframes.size()) {
    throw Error(ErrorCode::ValidationError, "state count does not match keyframes");
  }
  std::vector<NominalState> out;
  for (std::size_t k = 0; k + 1 < states.size(); ++k) {
    NominalState x = states[k];
    x.t = graph.keyframes[k].t;
    out.push_back(x);
    const auto& s = graph.preints[k].samples;
    for (std::size_t i = 0; i + 2 < s.size(); ++i) {
      x = propagate_nominal(x, s[i].a_m, s[i].w_m, s[i + 1].t - s[i].t, graph.noise.gravity);
      x.t = s[i + 1].t;
      out.push_back(x);
    }
  }
  if (!states.empty()) {
    NominalState last = states.back();
    last.t = graph.keyframes.back().t;
    out.push_back(last);
  }
  return out;
}

}  // namespace gatevio
