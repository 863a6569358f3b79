#include "stgp/svgp.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "stgp/math_util.hpp"
#include "stgp/rng.hpp"

namespace stgp {

namespace {

Eigen::LLT<Eigen::MatrixXd> chol_with_jitter(const Eigen::MatrixXd& K, double jitter) {
  Eigen::MatrixXd M = K;
  M.diagonal().array() += jitter;
  Eigen::LLT<Eigen::MatrixXd> llt(M);
  if (llt.info() != Eigen::Success)
    throw CholeskyFailure("factorization of K_zz + jitter*I failed");
  return llt;
}

// Kernel value at zero lag; every leaf is stationary with unit self
// covariance, so this is a pure combine over the variances. Optionally fills
// d value / d variance per trainable leaf.
double kernel_zero_lag(const KernelExpr& k, std::vector<double>* grads) {
  if (k.is_leaf()) {
    if (grads && k.params.trainable_variance) grads->push_back(1.0);
    return k.params.variance;
  }
  if (k.kind == KernelExpr::Kind::Sum) {
    double total = 0.0;
    for (const auto& c : k.children) total += kernel_zero_lag(c, grads);
    return total;
  }
  std::vector<double> child_vals;
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  for (const auto& c : k.children) {
    const std::size_t g0 = grads ? grads->size() : 0;
    child_vals.push_back(kernel_zero_lag(c, grads));
    ranges.emplace_back(g0, grads ? grads->size() : 0);
  }
  double total = 1.0;
  for (double v : child_vals) total *= v;
  if (grads) {
    for (std::size_t c = 0; c < child_vals.size(); ++c)
      for (std::size_t g = ranges[c].first; g < ranges[c].second; ++g)
        for (std::size_t o = 0; o < child_vals.size(); ++o)
          if (o != c) (*grads)[g] *= child_vals[o];
  }
  return total;
}

// Fixed per-training-run quantities.
struct Workspace {
  Eigen::MatrixXd X;  // n x 3 bin centres
  Eigen::VectorXd y;  // counts
  double sum_logfact = 0.0;
  KernelCache cache_zz;
  KernelCache cache_xz;
};

Workspace make_workspace(const VariationalState& state, const BinnedCounts& training) {
  Workspace ws;
  ws.X = training.grid.bin_centers();
  ws.y.resize(training.counts.size());
  for (Eigen::Index i = 0; i < training.counts.size(); ++i) {
    ws.y[i] = training.counts[i];
    ws.sum_logfact += log_factorial(training.counts[i]);
  }
  ws.cache_zz = make_kernel_cache(state.kernel, state.Z, state.Z);
  ws.cache_xz = make_kernel_cache(state.kernel, ws.X, state.Z);
  return ws;
}

// ELBO and, optionally, its exact gradient. All heavy lifting happens here;
// the public elbo/elbo_grad entry points wrap it.
ElboGradient compute_elbo(const VariationalState& state, const Workspace& ws, bool want_grad,
                          int* clamped_out = nullptr) {
  const Eigen::Index m = state.Z.rows();
  const Eigen::Index n = ws.X.rows();
  const auto L_S = state.L_S.triangularView<Eigen::Lower>();

  const Eigen::MatrixXd Kzz = eval_matrix_cached(state.kernel, ws.cache_zz);
  const auto llt = chol_with_jitter(Kzz, state.jitter);
  const Eigen::MatrixXd Kxz = eval_matrix_cached(state.kernel, ws.cache_xz);

  const Eigen::MatrixXd A = llt.solve(Kxz.transpose()).transpose();  // n x m
  const Eigen::VectorXd d = state.m_u.array() - state.mean_const;
  const Eigen::VectorXd mf = (A * d).array() + state.mean_const;
  const Eigen::MatrixXd B = A * L_S;  // n x m

  const double k0 = kernel_zero_lag(state.kernel, nullptr);
  Eigen::VectorXd vf =
      (k0 - (A.cwiseProduct(Kxz)).rowwise().sum().array() + B.rowwise().squaredNorm().array())
          .matrix();
  int clamped = 0;
  Eigen::ArrayXd vf_mask = Eigen::ArrayXd::Ones(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (vf[i] < 0.0) {
      vf[i] = 0.0;
      vf_mask[i] = 0.0;
      ++clamped;
    }
  }
  if (clamped_out) *clamped_out = clamped;

  const Eigen::VectorXd e = (mf.array() + 0.5 * vf.array()).exp();
  const double data_term = ws.y.dot(mf) - e.sum() - ws.sum_logfact;

  // KL[q(u)||p(u)] through the Cholesky factor of K_zz + jitter*I.
  const Eigen::MatrixXd Lz = llt.matrixL();
  const Eigen::MatrixXd W = llt.matrixL().solve(state.L_S);
  const Eigen::VectorXd u_white = llt.matrixL().solve(d);
  const double logdet_K = 2.0 * Lz.diagonal().array().log().sum();
  const double logdet_S = 2.0 * state.L_S.diagonal().array().log().sum();
  const double kl = 0.5 * (W.squaredNorm() + u_white.squaredNorm() - static_cast<double>(m) +
                           logdet_K - logdet_S);

  ElboGradient out;
  out.value = data_term - kl;
  if (!want_grad) return out;

  const Eigen::VectorXd w_m = ws.y - e;
  const Eigen::VectorXd w_v = (-0.5 * e.array() * vf_mask).matrix();
  const Eigen::VectorXd alpha = llt.solve(d);

  // d/d m_u and d/d mean_const.
  const Eigen::VectorXd At_wm = A.transpose() * w_m;
  out.d_m_u = At_wm - alpha;
  out.d_mean_const = w_m.sum() - At_wm.sum() + alpha.sum();

  // d/d L_S: data term 2 A^T diag(w_v) B, KL term P L_S - diag(1/L_ii).
  const Eigen::MatrixXd WvB = w_v.asDiagonal() * B;
  Eigen::MatrixXd dL = 2.0 * (A.transpose() * WvB) - llt.solve(state.L_S);
  dL.diagonal() += state.L_S.diagonal().cwiseInverse();
  out.d_L_S = dL.triangularView<Eigen::Lower>();

  // Kernel-variance gradients via the matrix cotangents.
  const Eigen::MatrixXd G_A = w_m * d.transpose() + 2.0 * (WvB * state.L_S.transpose()) -
                              w_v.asDiagonal() * Kxz;
  const Eigen::MatrixXd GAP = llt.solve(G_A.transpose()).transpose();  // G_A P, n x m
  const Eigen::MatrixXd C_xz = GAP - w_v.asDiagonal() * A;

  const Eigen::MatrixXd P = llt.solve(Eigen::MatrixXd::Identity(m, m));
  const Eigen::MatrixXd S = state.L_S * state.L_S.transpose();
  const Eigen::MatrixXd PSP = llt.solve(S * P);
  Eigen::MatrixXd C_zz = -(A.transpose() * GAP);
  C_zz.noalias() -= 0.5 * (P - PSP - alpha * alpha.transpose());

  std::vector<double> zero_lag_grads;
  kernel_zero_lag(state.kernel, &zero_lag_grads);
  const auto dK_xz = grad_variances_cached(state.kernel, ws.cache_xz);
  const auto dK_zz = grad_variances_cached(state.kernel, ws.cache_zz);
  const std::vector<double> variances = trainable_variances(state.kernel);
  const double wv_sum = w_v.sum();

  out.d_log_variance.resize(static_cast<Eigen::Index>(variances.size()));
  for (std::size_t j = 0; j < variances.size(); ++j) {
    const double g = C_xz.cwiseProduct(dK_xz[j]).sum() + C_zz.cwiseProduct(dK_zz[j]).sum() +
                     wv_sum * zero_lag_grads[j];
    out.d_log_variance[static_cast<Eigen::Index>(j)] = variances[j] * g;
  }
  return out;
}

// Parameter vector layout: [m_u | packed lower L_S | log variances | mean].
struct Packing {
  Eigen::Index m = 0;
  Eigen::Index n_var = 0;

  Eigen::Index tri_size() const { return m * (m + 1) / 2; }
  Eigen::Index dim() const { return m + tri_size() + n_var + 1; }

  Eigen::VectorXd pack(const VariationalState& s) const {
    Eigen::VectorXd x(dim());
    x.head(m) = s.m_u;
    Eigen::Index p = m;
    for (Eigen::Index j = 0; j < m; ++j)
      for (Eigen::Index i = j; i < m; ++i)
        x[p++] = i == j ? softplus_inverse(s.L_S(i, j)) : s.L_S(i, j);
    for (double v : trainable_variances(s.kernel)) x[p++] = std::log(v);
    x[p] = s.mean_const;
    return x;
  }

  void unpack(const Eigen::VectorXd& x, VariationalState& s) const {
    s.m_u = x.head(m);
    Eigen::Index p = m;
    s.L_S.setZero(m, m);
    for (Eigen::Index j = 0; j < m; ++j)
      for (Eigen::Index i = j; i < m; ++i) {
        const double raw = x[p++];
        s.L_S(i, j) = i == j ? softplus(raw) : raw;
      }
    std::vector<double> vars(static_cast<std::size_t>(n_var));
    for (auto& v : vars) v = std::exp(x[p++]);
    set_trainable_variances(s.kernel, vars);
    s.mean_const = x[p];
  }

  Eigen::VectorXd pack_grad(const Eigen::VectorXd& x, const ElboGradient& g) const {
    Eigen::VectorXd out(dim());
    out.head(m) = g.d_m_u;
    Eigen::Index p = m;
    for (Eigen::Index j = 0; j < m; ++j)
      for (Eigen::Index i = j; i < m; ++i) {
        out[p] = i == j ? g.d_L_S(i, j) * sigmoid(x[p]) : g.d_L_S(i, j);
        ++p;
      }
    out.segment(p, n_var) = g.d_log_variance;
    out[p + n_var] = g.d_mean_const;
    return out;
  }
};

}  // namespace

void VariationalState::validate() const {
  if (Z.rows() == 0 || Z.cols() != 3) throw DataError("state needs m x 3 inducing inputs");
  if (m_u.size() != Z.rows() || L_S.rows() != Z.rows() || L_S.cols() != Z.rows())
    throw ShapeMismatch("variational parameters do not match the inducing inputs");
  if ((L_S.diagonal().array() <= 0.0).any())
    throw DataError("L_S must have a positive diagonal");
  if (!m_u.allFinite() || !L_S.allFinite() || !std::isfinite(mean_const))
    throw NonFiniteInput("variational state");
  if (!(jitter >= 0.0)) throw DataError("jitter must be non-negative");
  kernel.validate();
}

VariationalState init_state(const ModelConfig& config, const BinnedCounts& training) {
  if (config.num_inducing <= 0) throw DataError("num_inducing must be positive");
  const std::int64_t n = training.grid.n_bins();
  if (n < config.num_inducing)
    throw TooFewPoints("training set has " + std::to_string(n) + " bins, need at least " +
                       std::to_string(config.num_inducing));

  const Eigen::MatrixXd centers = training.grid.bin_centers();
  Rng rng(config.seed);
  const auto idx = rng.sample_without_replacement(static_cast<std::size_t>(n),
                                                  static_cast<std::size_t>(config.num_inducing));

  VariationalState s;
  s.Z.resize(config.num_inducing, 3);
  for (int i = 0; i < config.num_inducing; ++i) s.Z.row(i) = centers.row(idx[i]);
  s.m_u = Eigen::VectorXd::Zero(config.num_inducing);
  s.L_S = Eigen::MatrixXd::Identity(config.num_inducing, config.num_inducing);
  s.kernel = config.kernel;
  s.jitter = config.jitter;
  if (std::isfinite(config.mean_const)) {
    s.mean_const = config.mean_const;
  } else {
    const double mean_count = static_cast<double>(training.total()) / static_cast<double>(n);
    s.mean_const = std::log(std::max(mean_count, 1e-3));
  }
  s.validate();
  return s;
}

QfMarginals qf_marginals(const VariationalState& state, const Eigen::MatrixXd& X) {
  state.validate();
  if (X.cols() != 3) throw ShapeMismatch("query points must be n x 3");
  const Eigen::MatrixXd Kzz = eval_matrix(state.kernel, state.Z, state.Z);
  const auto llt = chol_with_jitter(Kzz, state.jitter);
  const Eigen::MatrixXd Kxz = eval_matrix(state.kernel, X, state.Z);
  const Eigen::MatrixXd A = llt.solve(Kxz.transpose()).transpose();
  const Eigen::VectorXd d = state.m_u.array() - state.mean_const;
  const Eigen::MatrixXd B = A * state.L_S.triangularView<Eigen::Lower>();

  QfMarginals q;
  q.mean = (A * d).array() + state.mean_const;
  q.var = eval_diag(state.kernel, X) - (A.cwiseProduct(Kxz)).rowwise().sum() +
          B.rowwise().squaredNorm();
  for (Eigen::Index i = 0; i < q.var.size(); ++i) {
    if (q.var[i] < 0.0) {
      q.var[i] = 0.0;
      ++q.clamped;
    }
  }
  return q;
}

double expected_poisson_loglik(std::int64_t y, double mean, double var) {
  if (y < 0) throw DataError("counts must be non-negative");
  if (var < 0.0) throw DataError("variance must be non-negative");
  return static_cast<double>(y) * mean - std::exp(mean + 0.5 * var) - log_factorial(y);
}

void expected_poisson_loglik_grad(std::int64_t y, double mean, double var, double& d_mean,
                                  double& d_var) {
  const double e = std::exp(mean + 0.5 * var);
  d_mean = static_cast<double>(y) - e;
  d_var = -0.5 * e;
}

double kl_q_p(const VariationalState& state) {
  state.validate();
  const Eigen::Index m = state.Z.rows();
  const Eigen::MatrixXd Kzz = eval_matrix(state.kernel, state.Z, state.Z);
  const auto llt = chol_with_jitter(Kzz, state.jitter);
  const Eigen::MatrixXd Lz = llt.matrixL();
  const Eigen::VectorXd d = state.m_u.array() - state.mean_const;
  const Eigen::MatrixXd W = llt.matrixL().solve(state.L_S);
  const Eigen::VectorXd u_white = llt.matrixL().solve(d);
  const double logdet_K = 2.0 * Lz.diagonal().array().log().sum();
  const double logdet_S = 2.0 * state.L_S.diagonal().array().log().sum();
  return 0.5 * (W.squaredNorm() + u_white.squaredNorm() - static_cast<double>(m) + logdet_K -
                logdet_S);
}

double elbo(const VariationalState& state, const BinnedCounts& training) {
  state.validate();
  const Workspace ws = make_workspace(state, training);
  return compute_elbo(state, ws, false).value;
}

ElboGradient elbo_grad(const VariationalState& state, const BinnedCounts& training) {
  state.validate();
  const Workspace ws = make_workspace(state, training);
  return compute_elbo(state, ws, true);
}

TrainResult train(const ModelConfig& config, const BinnedCounts& training,
                  const OptimizerConfig& opt_cfg) {
  if (training.grid.n_bins() == 0) throw EmptyInput("training data has no bins");
  VariationalState state0 = init_state(config, training);

  Packing packing;
  packing.m = state0.Z.rows();
  packing.n_var = count_trainable(state0.kernel);

  TrainResult result;
  for (int escalation = 0;; ++escalation) {
    Workspace ws = make_workspace(state0, training);
    VariationalState scratch = state0;
    int chol_failures = 0;

    Objective objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd& grad) -> double {
      packing.unpack(x, scratch);
      try {
        const ElboGradient g = compute_elbo(scratch, ws, true);
        grad = -packing.pack_grad(x, g);
        return -g.value;
      } catch (const CholeskyFailure&) {
        ++chol_failures;
        grad = Eigen::VectorXd::Zero(x.size());
        return std::numeric_limits<double>::infinity();
      }
    };

    bool start_failed = false;
    try {
      result.opt = minimize(objective, packing.pack(state0), opt_cfg);
    } catch (const NumericError&) {
      start_failed = true;
    }

    const bool needs_escalation =
        start_failed || (result.opt.status == OptStatus::LineSearchFailure && chol_failures > 0);
    if (!needs_escalation) break;
    if (escalation >= 3)
      throw CholeskyFailure("training failed after three jitter escalations (jitter " +
                            std::to_string(state0.jitter) + ")");
    state0.jitter = state0.jitter > 0.0 ? state0.jitter * 10.0 : 1e-8;
    result.jitter_escalations = escalation + 1;
  }

  if (result.opt.status == OptStatus::Diverged)
    throw OptimizerDiverged("ELBO maximisation diverged");

  result.state = state0;
  packing.unpack(result.opt.x_final, result.state);
  result.final_elbo = -result.opt.f_final;
  return result;
}

RateField predict_rate(const VariationalState& state, const Eigen::MatrixXd& points,
                       double bin_volume) {
  if (!(bin_volume > 0.0)) throw DataError("bin volume must be positive");
  const QfMarginals q = qf_marginals(state, points);
  RateField field;
  field.points = points;
  field.latent_mean = q.mean;
  field.latent_var = q.var;
  field.rate = ((q.mean.array() + 0.5 * q.var.array()).exp() / bin_volume).matrix();
  if (!field.rate.allFinite()) throw NumericError("predicted rate overflowed");
  return field;
}

namespace {

constexpr char kMagic[8] = {'S', 'T', 'G', 'P', 'M', '0', '0', '1'};

void write_bytes(std::ofstream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_bytes(std::ifstream& in, void* p, std::size_t n) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!in) throw IoError("model file truncated");
}

void write_f64(std::ofstream& out, double v) { write_bytes(out, &v, sizeof v); }
void write_i64(std::ofstream& out, std::int64_t v) { write_bytes(out, &v, sizeof v); }

double read_f64(std::ifstream& in) {
  double v;
  read_bytes(in, &v, sizeof v);
  return v;
}

std::int64_t read_i64(std::ifstream& in) {
  std::int64_t v;
  read_bytes(in, &v, sizeof v);
  return v;
}

void write_matrix(std::ofstream& out, const Eigen::MatrixXd& M) {
  write_i64(out, M.rows());
  write_i64(out, M.cols());
  write_bytes(out, M.data(), sizeof(double) * static_cast<std::size_t>(M.size()));
}

Eigen::MatrixXd read_matrix(std::ifstream& in) {
  const std::int64_t r = read_i64(in), c = read_i64(in);
  if (r < 0 || c < 0 || r * c > (1ll << 32)) throw IoError("corrupt matrix header");
  Eigen::MatrixXd M(r, c);
  read_bytes(in, M.data(), sizeof(double) * static_cast<std::size_t>(M.size()));
  return M;
}

void write_kernel(std::ofstream& out, const KernelExpr& k) {
  const std::int64_t kind = static_cast<std::int64_t>(k.kind);
  write_i64(out, kind);
  if (k.is_leaf()) {
    write_f64(out, k.params.variance);
    write_f64(out, k.params.lengthscale);
    write_f64(out, k.params.period);
    write_i64(out, k.params.trainable_variance ? 1 : 0);
    return;
  }
  write_i64(out, static_cast<std::int64_t>(k.children.size()));
  for (const auto& c : k.children) write_kernel(out, c);
}

KernelExpr read_kernel(std::ifstream& in) {
  KernelExpr k;
  k.kind = static_cast<KernelExpr::Kind>(read_i64(in));
  if (k.is_leaf()) {
    k.params.variance = read_f64(in);
    k.params.lengthscale = read_f64(in);
    k.params.period = read_f64(in);
    k.params.trainable_variance = read_i64(in) != 0;
    return k;
  }
  const std::int64_t n = read_i64(in);
  if (n < 0 || n > 64) throw IoError("corrupt kernel node");
  for (std::int64_t i = 0; i < n; ++i) k.children.push_back(read_kernel(in));
  return k;
}

}  // namespace

void save_model(const std::string& path, const VariationalState& state,
                const SpatioTemporalGrid& grid) {
  state.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_bytes(out, kMagic, sizeof kMagic);
  write_f64(out, state.mean_const);
  write_f64(out, state.jitter);
  write_matrix(out, state.Z);
  write_matrix(out, state.m_u);
  write_matrix(out, state.L_S);
  write_kernel(out, state.kernel);
  write_f64(out, grid.x_min);
  write_f64(out, grid.x_max);
  write_f64(out, grid.y_min);
  write_f64(out, grid.y_max);
  write_i64(out, grid.nx);
  write_i64(out, grid.ny);
  write_f64(out, grid.t_start);
  write_f64(out, grid.t_end);
  write_f64(out, grid.t_bin);
  if (!out) throw IoError("failed writing '" + path + "'");
}

void load_model(const std::string& path, VariationalState& state, SpatioTemporalGrid& grid) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  char magic[8];
  read_bytes(in, magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw IoError("'" + path + "' is not a model file of a supported version");
  state.mean_const = read_f64(in);
  state.jitter = read_f64(in);
  state.Z = read_matrix(in);
  state.m_u = read_matrix(in).col(0);
  state.L_S = read_matrix(in);
  state.kernel = read_kernel(in);
  grid.x_min = read_f64(in);
  grid.x_max = read_f64(in);
  grid.y_min = read_f64(in);
  grid.y_max = read_f64(in);
  grid.nx = static_cast<int>(read_i64(in));
  grid.ny = static_cast<int>(read_i64(in));
  grid.t_start = read_f64(in);
  grid.t_end = read_f64(in);
  grid.t_bin = read_f64(in);
  state.validate();
}

}  // namespace stgp
