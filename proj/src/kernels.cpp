#include "stgp/kernels.hpp"

#include <cmath>
#include <functional>

namespace stgp {

namespace {

constexpr double kPi = 3.14159265358979323846;

void validate_params(const KernelExpr& k) {
  if (!(k.params.variance > 0.0)) throw DataError("kernel variance must be positive");
  if (!(k.params.lengthscale > 0.0)) throw DataError("kernel lengthscale must be positive");
  if (k.kind == KernelExpr::Kind::PeriodicTime && !(k.params.period > 0.0))
    throw DataError("kernel period must be positive");
}

// Unit-variance leaf covariance between two points.
double leaf_unit_pair(const KernelExpr& k, const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  if (k.kind == KernelExpr::Kind::PeriodicTime) {
    const double s = std::sin(kPi * (a[2] - b[2]) / k.params.period);
    return std::exp(-(s * s) / (2.0 * k.params.lengthscale * k.params.lengthscale));
  }
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  return std::exp(-(dx * dx + dy * dy) / (k.params.lengthscale * k.params.lengthscale));
}

Eigen::MatrixXd leaf_unit_matrix(const KernelExpr& k, const Eigen::MatrixXd& A,
                                 const Eigen::MatrixXd& B) {
  const Eigen::Index n = A.rows(), m = B.rows();
  Eigen::MatrixXd out(n, m);
  if (k.kind == KernelExpr::Kind::PeriodicTime) {
    const double w = kPi / k.params.period;
    const double inv = 1.0 / (2.0 * k.params.lengthscale * k.params.lengthscale);
    for (Eigen::Index j = 0; j < m; ++j)
      for (Eigen::Index i = 0; i < n; ++i) {
        const double s = std::sin(w * (A(i, 2) - B(j, 2)));
        out(i, j) = std::exp(-(s * s) * inv);
      }
  } else {
    const double inv = 1.0 / (k.params.lengthscale * k.params.lengthscale);
    for (Eigen::Index j = 0; j < m; ++j)
      for (Eigen::Index i = 0; i < n; ++i) {
        const double dx = A(i, 0) - B(j, 0);
        const double dy = A(i, 1) - B(j, 1);
        out(i, j) = std::exp(-(dx * dx + dy * dy) * inv);
      }
  }
  return out;
}

// Shared recursion for evaluation and variance gradients. leaf_unit(i) must
// return the unit-variance matrix of the i-th leaf in depth-first order.
// When grads != nullptr it receives dK/dv for each trainable leaf, in the
// same order.
Eigen::MatrixXd eval_node(const KernelExpr& k, int& leaf_idx,
                          const std::function<Eigen::MatrixXd(int)>& leaf_unit,
                          std::vector<Eigen::MatrixXd>* grads) {
  if (k.is_leaf()) {
    validate_params(k);
    Eigen::MatrixXd unit = leaf_unit(leaf_idx++);
    if (grads && k.params.trainable_variance) grads->push_back(unit);
    return k.params.variance * unit;
  }
  if (k.children.empty()) throw DataError("kernel node has no children");

  if (k.kind == KernelExpr::Kind::Sum) {
    Eigen::MatrixXd total = eval_node(k.children[0], leaf_idx, leaf_unit, grads);
    for (std::size_t c = 1; c < k.children.size(); ++c)
      total += eval_node(k.children[c], leaf_idx, leaf_unit, grads);
    return total;
  }

  // Product: each child's gradients get multiplied by the other children.
  std::vector<Eigen::MatrixXd> child_vals;
  std::vector<std::pair<std::size_t, std::size_t>> grad_ranges;  // per child into *grads
  for (const auto& child : k.children) {
    const std::size_t g0 = grads ? grads->size() : 0;
    child_vals.push_back(eval_node(child, leaf_idx, leaf_unit, grads));
    grad_ranges.emplace_back(g0, grads ? grads->size() : 0);
  }
  Eigen::MatrixXd total = child_vals[0];
  for (std::size_t c = 1; c < child_vals.size(); ++c)
    total = total.cwiseProduct(child_vals[c]);
  if (grads) {
    for (std::size_t c = 0; c < k.children.size(); ++c) {
      for (std::size_t g = grad_ranges[c].first; g < grad_ranges[c].second; ++g)
        for (std::size_t o = 0; o < child_vals.size(); ++o)
          if (o != c) (*grads)[g] = (*grads)[g].cwiseProduct(child_vals[o]);
    }
  }
  return total;
}

void check_finite(const Eigen::MatrixXd& M, const char* what) {
  if (!M.allFinite()) throw NonFiniteInput(what);
}

}  // namespace

KernelExpr KernelExpr::periodic_time(const KernelParams& p) {
  KernelExpr k;
  k.kind = Kind::PeriodicTime;
  k.params = p;
  return k;
}

KernelExpr KernelExpr::rbf_space(const KernelParams& p) {
  KernelExpr k;
  k.kind = Kind::RbfSpace;
  k.params = p;
  return k;
}

KernelExpr KernelExpr::sum(std::vector<KernelExpr> children) {
  KernelExpr k;
  k.kind = Kind::Sum;
  k.children = std::move(children);
  return k;
}

KernelExpr KernelExpr::product(std::vector<KernelExpr> children) {
  KernelExpr k;
  k.kind = Kind::Product;
  k.children = std::move(children);
  return k;
}

KernelExpr KernelExpr::composed(const KernelParams& time_marginal,
                                const KernelParams& space_marginal,
                                const KernelParams& time_interaction,
                                const KernelParams& space_interaction) {
  return sum({periodic_time(time_marginal), rbf_space(space_marginal),
              product({periodic_time(time_interaction), rbf_space(space_interaction)})});
}

KernelExpr KernelExpr::composed_default() {
  KernelParams time_p{1.0, 8.0, 24.0, true};
  KernelParams space_p{1.0, 10.0, 24.0, true};
  return composed(time_p, space_p, time_p, space_p);
}

void KernelExpr::validate() const {
  if (is_leaf()) {
    validate_params(*this);
    return;
  }
  if (children.empty()) throw DataError("kernel node has no children");
  for (const auto& c : children) c.validate();
}

namespace {

void collect_trainable(const KernelExpr& k, std::vector<double>& out) {
  if (k.is_leaf()) {
    if (k.params.trainable_variance) out.push_back(k.params.variance);
    return;
  }
  for (const auto& c : k.children) collect_trainable(c, out);
}

void assign_trainable(KernelExpr& k, const std::vector<double>& values, std::size_t& pos) {
  if (k.is_leaf()) {
    if (k.params.trainable_variance) {
      if (pos >= values.size()) throw DataError("too few variance values");
      if (!(values[pos] > 0.0)) throw DataError("kernel variance must be positive");
      k.params.variance = values[pos++];
    }
    return;
  }
  for (auto& c : k.children) assign_trainable(c, values, pos);
}

}  // namespace

std::vector<double> trainable_variances(const KernelExpr& k) {
  std::vector<double> out;
  collect_trainable(k, out);
  return out;
}

void set_trainable_variances(KernelExpr& k, const std::vector<double>& values) {
  std::size_t pos = 0;
  assign_trainable(k, values, pos);
  if (pos != values.size()) throw DataError("too many variance values");
}

int count_trainable(const KernelExpr& k) {
  return static_cast<int>(trainable_variances(k).size());
}

double eval_pair(const KernelExpr& k, const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  if (!a.allFinite() || !b.allFinite()) throw NonFiniteInput("eval_pair inputs");
  if (k.is_leaf()) {
    validate_params(k);
    return k.params.variance * leaf_unit_pair(k, a, b);
  }
  if (k.children.empty()) throw DataError("kernel node has no children");
  double acc = k.kind == KernelExpr::Kind::Sum ? 0.0 : 1.0;
  for (const auto& c : k.children) {
    const double v = eval_pair(c, a, b);
    acc = k.kind == KernelExpr::Kind::Sum ? acc + v : acc * v;
  }
  return acc;
}

Eigen::MatrixXd eval_matrix(const KernelExpr& k, const Eigen::MatrixXd& A,
                            const Eigen::MatrixXd& B) {
  check_finite(A, "eval_matrix A");
  check_finite(B, "eval_matrix B");
  std::vector<const KernelExpr*> leaves;
  std::function<void(const KernelExpr&)> collect = [&](const KernelExpr& node) {
    if (node.is_leaf()) {
      leaves.push_back(&node);
      return;
    }
    for (const auto& c : node.children) collect(c);
  };
  collect(k);
  std::function<Eigen::MatrixXd(int)> unit = [&](int i) {
    return leaf_unit_matrix(*leaves[i], A, B);
  };
  int leaf_idx = 0;
  return eval_node(k, leaf_idx, unit, nullptr);
}

Eigen::VectorXd eval_diag(const KernelExpr& k, const Eigen::MatrixXd& A) {
  check_finite(A, "eval_diag A");
  Eigen::VectorXd out(A.rows());
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    const Eigen::Vector3d p = A.row(i);
    out[i] = eval_pair(k, p, p);
  }
  return out;
}

std::vector<Eigen::MatrixXd> grad_variances(const KernelExpr& k, const Eigen::MatrixXd& A,
                                            const Eigen::MatrixXd& B) {
  const KernelCache cache = make_kernel_cache(k, A, B);
  return grad_variances_cached(k, cache);
}

std::vector<Eigen::VectorXd> grad_variances_diag(const KernelExpr& k, const Eigen::MatrixXd& A) {
  // Diagonal gradients via 1-column matrices of self-covariances.
  std::vector<const KernelExpr*> leaves;
  std::function<void(const KernelExpr&)> collect = [&](const KernelExpr& node) {
    if (node.is_leaf()) {
      leaves.push_back(&node);
      return;
    }
    for (const auto& c : node.children) collect(c);
  };
  collect(k);
  std::function<Eigen::MatrixXd(int)> unit = [&](int li) {
    const KernelExpr& leaf = *leaves[li];
    Eigen::MatrixXd col(A.rows(), 1);
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
      const Eigen::Vector3d p = A.row(i);
      col(i, 0) = leaf_unit_pair(leaf, p, p);
    }
    return col;
  };
  int leaf_idx = 0;
  std::vector<Eigen::MatrixXd> grads;
  eval_node(k, leaf_idx, unit, &grads);
  std::vector<Eigen::VectorXd> out;
  out.reserve(grads.size());
  for (auto& g : grads) out.push_back(g.col(0));
  return out;
}

KernelCache make_kernel_cache(const KernelExpr& k, const Eigen::MatrixXd& A,
                              const Eigen::MatrixXd& B) {
  check_finite(A, "kernel cache A");
  check_finite(B, "kernel cache B");
  KernelCache cache;
  std::function<void(const KernelExpr&)> walk = [&](const KernelExpr& node) {
    if (node.is_leaf()) {
      cache.unit.push_back(leaf_unit_matrix(node, A, B));
      return;
    }
    for (const auto& c : node.children) walk(c);
  };
  walk(k);
  return cache;
}

Eigen::MatrixXd eval_matrix_cached(const KernelExpr& k, const KernelCache& cache) {
  int leaf_idx = 0;
  std::function<Eigen::MatrixXd(int)> unit = [&](int i) { return cache.unit[i]; };
  return eval_node(k, leaf_idx, unit, nullptr);
}

std::vector<Eigen::MatrixXd> grad_variances_cached(const KernelExpr& k,
                                                   const KernelCache& cache) {
  int leaf_idx = 0;
  std::function<Eigen::MatrixXd(int)> unit = [&](int i) { return cache.unit[i]; };
  std::vector<Eigen::MatrixXd> grads;
  eval_node(k, leaf_idx, unit, &grads);
  return grads;
}

}  // namespace stgp
