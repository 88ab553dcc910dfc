#include "protoreg/archetypes.hpp"

#include "protoreg/error.hpp"
#include "protoreg/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace protoreg {

void FitOptions::validate() const {
  if (!(tol > 0.0)) throw InvalidArgument("fit tolerance must be positive");
  if (max_outer_iter < 1) throw InvalidArgument("max_outer_iter must be at least 1");
  if (max_alternations < 1) throw InvalidArgument("max_alternations must be at least 1");
  if (!(qp.tol > 0.0) || qp.max_iter < 1) throw InvalidArgument("invalid inner solver settings");
}

namespace {

void check_shapes(const GramMatrix& G, const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  const Eigen::Index n = G.size();
  if (B.rows() != n) throw InvalidArgument("B must have one row per training point");
  if (A.cols() != n) throw InvalidArgument("A must have one column per training point");
  if (A.rows() != B.cols()) throw InvalidArgument("A rows and B columns must both equal k");
}

void check_lambda(double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidArgument("lambda must be finite and >= 0");
}

// Solves the subproblem warm-started at `previous` and keeps `previous`
// unless the new point is at least as good.
Eigen::VectorXd improve(Eigen::MatrixXd Q, Eigen::VectorXd q, const Eigen::VectorXd& previous,
                        const SolverSettings& settings) {
  const double before = qp_objective(Q, q, previous);
  QuadraticSubproblem p{std::move(Q), std::move(q), settings, previous};
  SimplexQpResult r = solve_simplex_qp_detailed(p);
  const double after = qp_objective(p.Q, p.q, r.w.values());
  return after <= before ? r.w.values() : previous;
}

}  // namespace

std::vector<Eigen::Index> seed_prototypes(const GramMatrix& G, Eigen::Index k, std::uint64_t seed) {
  const Eigen::Index n = G.size();
  if (k < 1 || k > n) throw InvalidArgument("prototype count k must satisfy 1 <= k <= n");
  SplitMix64 rng(seed);
  const Eigen::VectorXd diag = G.entries().diagonal();
  auto sq_dist = [&](Eigen::Index i, Eigen::Index l) {
    return std::max(0.0, diag[i] + diag[l] - 2.0 * G(i, l));
  };

  std::vector<Eigen::Index> chosen;
  std::vector<bool> taken(static_cast<std::size_t>(n), false);
  chosen.push_back(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
  taken[static_cast<std::size_t>(chosen.back())] = true;

  Eigen::VectorXd nearest(n);
  for (Eigen::Index i = 0; i < n; ++i) nearest[i] = sq_dist(i, chosen.back());

  while (static_cast<Eigen::Index>(chosen.size()) < k) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (!taken[static_cast<std::size_t>(i)]) total += nearest[i];

    Eigen::Index pick = -1;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double running = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (taken[static_cast<std::size_t>(i)] || nearest[i] <= 0.0) continue;
        running += nearest[i];
        pick = i;
        if (running > target) break;
      }
    } else {
      // Remaining points coincide with chosen ones; fall back to a uniform draw.
      const auto remaining = static_cast<std::uint64_t>(n - static_cast<Eigen::Index>(chosen.size()));
      auto skip = rng.below(remaining);
      for (Eigen::Index i = 0; i < n; ++i) {
        if (taken[static_cast<std::size_t>(i)]) continue;
        if (skip-- == 0) {
          pick = i;
          break;
        }
      }
    }
    chosen.push_back(pick);
    taken[static_cast<std::size_t>(pick)] = true;
    for (Eigen::Index i = 0; i < n; ++i) nearest[i] = std::min(nearest[i], sq_dist(i, pick));
  }
  return chosen;
}

Eigen::MatrixXd prototype_sq_distances(const GramMatrix& G, const Eigen::MatrixXd& B) {
  if (B.rows() != G.size()) throw InvalidArgument("B must have one row per training point");
  const Eigen::MatrixXd GB = G.entries() * B;
  const Eigen::VectorXd self = (B.transpose() * GB).diagonal();
  const Eigen::VectorXd diag = G.entries().diagonal();
  Eigen::MatrixXd D(B.cols(), G.size());
  for (Eigen::Index i = 0; i < G.size(); ++i)
    for (Eigen::Index j = 0; j < B.cols(); ++j) D(j, i) = diag[i] - 2.0 * GB(i, j) + self[j];
  return D;
}

double objective(const GramMatrix& G, const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, double lambda) {
  check_shapes(G, A, B);
  const Eigen::MatrixXd GB = G.entries() * B;
  const Eigen::MatrixXd M = B.transpose() * GB;
  const Eigen::VectorXd diag = G.entries().diagonal();
  double total = 0.0;
  for (Eigen::Index i = 0; i < G.size(); ++i) {
    const auto a = A.col(i);
    double recon = diag[i] - 2.0 * a.dot(GB.row(i).transpose()) + a.dot(M * a);
    double penalty = 0.0;
    if (lambda != 0.0) {
      for (Eigen::Index j = 0; j < A.rows(); ++j)
        penalty += a[j] * (diag[i] - 2.0 * GB(i, j) + M(j, j));
    }
    total += recon + lambda * penalty;
  }
  return total;
}

Eigen::MatrixXd update_A(const GramMatrix& G, const Eigen::MatrixXd& B, double lambda,
                         const SolverSettings& settings, const Eigen::MatrixXd* warm) {
  check_lambda(lambda);
  const Eigen::Index n = G.size();
  const Eigen::Index k = B.cols();
  if (B.rows() != n) throw InvalidArgument("B must have one row per training point");
  if (warm && (warm->rows() != k || warm->cols() != n)) throw InvalidArgument("warm start A has wrong shape");

  const Eigen::MatrixXd GB = G.entries() * B;
  const Eigen::MatrixXd M = B.transpose() * GB;
  const Eigen::MatrixXd Q = 2.0 * M;
  const Eigen::VectorXd uniform = SimplexWeights::uniform(k).values();

  Eigen::MatrixXd A(k, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd q = -2.0 * GB.row(i).transpose();
    if (lambda != 0.0) {
      for (Eigen::Index j = 0; j < k; ++j) q[j] += lambda * (G(i, i) - 2.0 * GB(i, j) + M(j, j));
    }
    const Eigen::VectorXd start = warm ? Eigen::VectorXd(warm->col(i)) : uniform;
    A.col(i) = improve(Q, std::move(q), start, settings);
  }
  return A;
}

Eigen::MatrixXd update_B(const GramMatrix& G, const Eigen::MatrixXd& A, Eigen::MatrixXd B, double lambda,
                         const SolverSettings& settings) {
  check_lambda(lambda);
  check_shapes(G, A, B);
  const Eigen::MatrixXd& g = G.entries();
  for (Eigen::Index j = 0; j < B.cols(); ++j) {
    const Eigen::VectorXd alpha = A.row(j).transpose();
    const double alpha_sq = alpha.squaredNorm();
    const double scale = alpha_sq + lambda * alpha.sum();
    if (scale <= 0.0) continue;  // unused prototype: b_j does not enter the objective

    // Residual cross terms with the other prototypes held fixed.
    const Eigen::VectorXd overlap = A * alpha;
    const Eigen::VectorXd target = (1.0 + lambda) * alpha - B * overlap + alpha_sq * B.col(j);
    Eigen::VectorXd q = -2.0 * (g * target);
    B.col(j) = improve(2.0 * scale * g, std::move(q), B.col(j), settings);
  }
  return B;
}

namespace {

void restart_unused(const GramMatrix& G, const Eigen::MatrixXd& A, Eigen::MatrixXd& B) {
  const Eigen::VectorXd usage = A.rowwise().sum();
  std::vector<Eigen::Index> unused;
  for (Eigen::Index j = 0; j < A.rows(); ++j)
    if (usage[j] < 1e-12) unused.push_back(j);
  if (unused.empty()) return;

  const Eigen::MatrixXd GB = G.entries() * B;
  const Eigen::MatrixXd M = B.transpose() * GB;
  std::vector<double> error(static_cast<std::size_t>(G.size()));
  for (Eigen::Index i = 0; i < G.size(); ++i) {
    const auto a = A.col(i);
    error[static_cast<std::size_t>(i)] = G(i, i) - 2.0 * a.dot(GB.row(i).transpose()) + a.dot(M * a);
  }
  std::vector<Eigen::Index> order(error.size());
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index l, Eigen::Index r) {
    return error[static_cast<std::size_t>(l)] > error[static_cast<std::size_t>(r)];
  });
  for (std::size_t u = 0; u < unused.size() && u < order.size(); ++u) {
    B.col(unused[u]).setZero();
    B(order[u], unused[u]) = 1.0;
  }
}

}  // namespace

PrototypeModel fit_prototypal(const GramMatrix& G, Eigen::Index k, double lambda, const FitOptions& opts) {
  opts.validate();
  check_lambda(lambda);
  const Eigen::Index n = G.size();
  if (k < 1 || k > n)
    throw InvalidArgument("prototype count k = " + std::to_string(k) + " must satisfy 1 <= k <= n = " +
                          std::to_string(n));

  PrototypeModel model;
  model.lambda = lambda;
  model.k = k;
  model.n = n;
  model.initial_points = seed_prototypes(G, k, opts.seed);
  model.B = Eigen::MatrixXd::Zero(n, k);
  for (Eigen::Index j = 0; j < k; ++j) model.B(model.initial_points[static_cast<std::size_t>(j)], j) = 1.0;
  model.A = Eigen::MatrixXd::Constant(k, n, 1.0 / static_cast<double>(k));

  double previous = 0.0;
  for (int it = 0; it < opts.max_outer_iter; ++it) {
    model.A = update_A(G, model.B, lambda, opts.qp, &model.A);
    if (opts.restart_degenerate) restart_unused(G, model.A, model.B);
    model.B = update_B(G, model.A, std::move(model.B), lambda, opts.qp);

    const double f = objective(G, model.A, model.B, lambda);
    if (!std::isfinite(f)) throw NumericalError("prototypal fit: objective became non-finite");
    model.objective_trace.push_back(f);
    if (it > 0 && std::abs(f - previous) / (1.0 + std::abs(f)) < opts.tol) break;
    previous = f;
  }
  model.prototype_gram = model.B.transpose() * G.entries() * model.B;
  return model;
}

PrototypeModel fit_archetypal(const GramMatrix& G, Eigen::Index k, const FitOptions& opts) {
  return fit_prototypal(G, k, 0.0, opts);
}

SimplexWeights encode(const PrototypeModel& model, const Eigen::Ref<const Eigen::VectorXd>& g0, double g00,
                      std::optional<double> lambda_override, const SolverSettings& settings) {
  if (g0.size() != model.n) throw InvalidArgument("encode: g0 must have one entry per training point");
  if (!g0.allFinite() || !std::isfinite(g00)) throw NumericalError("encode: non-finite inner products");
  const double lambda = lambda_override.value_or(model.lambda);
  check_lambda(lambda);
  const Eigen::MatrixXd& M = model.prototype_gram;
  const Eigen::VectorXd cross = model.B.transpose() * g0;
  Eigen::VectorXd q = -2.0 * cross;
  if (lambda != 0.0) {
    for (Eigen::Index j = 0; j < model.k; ++j) q[j] += lambda * (g00 - 2.0 * cross[j] + M(j, j));
  }
  QuadraticSubproblem p{2.0 * M, std::move(q), settings, std::nullopt};
  return solve_simplex_qp(p);
}

}  // namespace protoreg
