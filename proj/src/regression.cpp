#include "protoreg/regression.hpp"

#include "protoreg/error.hpp"

#include <cmath>
#include <string>

namespace protoreg {

namespace {

Eigen::MatrixXd mixture(std::span<const Eigen::MatrixXd> A, std::span<const Eigen::MatrixXd> C,
                        const Eigen::VectorXd& tau) {
  const Eigen::Index n = C.front().rows();
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t l = 0; l < A.size(); ++l) {
    const double t = tau[static_cast<Eigen::Index>(l)];
    if (t != 0.0) W.noalias() += t * (C[l] * A[l]);
  }
  return W;
}

Eigen::VectorXd improve(Eigen::MatrixXd Q, Eigen::VectorXd q, const Eigen::VectorXd& previous,
                        const SolverSettings& settings) {
  const double before = qp_objective(Q, q, previous);
  QuadraticSubproblem p{std::move(Q), std::move(q), settings, previous};
  SimplexQpResult r = solve_simplex_qp_detailed(p);
  return qp_objective(p.Q, p.q, r.w.values()) <= before ? r.w.values() : previous;
}

// Importance weights with the C's fixed: a simplex QP over the m predictors.
Eigen::VectorXd tau_step(const GramMatrix& Gy, std::span<const Eigen::MatrixXd> A,
                         std::span<const Eigen::MatrixXd> C, const Eigen::VectorXd& tau,
                         const SolverSettings& settings) {
  const auto m = static_cast<Eigen::Index>(A.size());
  std::vector<Eigen::MatrixXd> P(A.size());
  std::vector<Eigen::MatrixXd> GyP(A.size());
  for (std::size_t l = 0; l < A.size(); ++l) {
    P[l] = C[l] * A[l];
    GyP[l] = Gy.entries() * P[l];
  }
  Eigen::MatrixXd Q(m, m);
  Eigen::VectorXd q(m);
  for (Eigen::Index l = 0; l < m; ++l) {
    const auto ul = static_cast<std::size_t>(l);
    q[l] = -2.0 * GyP[ul].trace();
    for (Eigen::Index r = l; r < m; ++r) {
      Q(l, r) = 2.0 * P[ul].cwiseProduct(GyP[static_cast<std::size_t>(r)]).sum();
      Q(r, l) = Q(l, r);
    }
  }
  return improve(std::move(Q), std::move(q), tau, settings);
}

// One block-coordinate sweep over every column of every C with tau fixed.
void c_step(const GramMatrix& Gy, std::span<const Eigen::MatrixXd> A, std::span<Eigen::MatrixXd> C,
            const Eigen::VectorXd& tau, const SolverSettings& settings) {
  const Eigen::MatrixXd& gy = Gy.entries();
  Eigen::MatrixXd W = mixture(A, C, tau);
  for (std::size_t l = 0; l < A.size(); ++l) {
    const double t = tau[static_cast<Eigen::Index>(l)];
    if (t == 0.0) continue;
    for (Eigen::Index j = 0; j < C[l].cols(); ++j) {
      const Eigen::VectorXd alpha = A[l].row(j).transpose();
      const double alpha_sq = alpha.squaredNorm();
      if (alpha_sq == 0.0) continue;  // prototype unused by every training point
      const Eigen::VectorXd old = C[l].col(j);
      const Eigen::VectorXd residual = alpha - W * alpha + t * alpha_sq * old;
      Eigen::VectorXd q = -2.0 * t * (gy * residual);
      const Eigen::VectorXd updated = improve(2.0 * t * t * alpha_sq * gy, std::move(q), old, settings);
      W.noalias() += t * (updated - old) * alpha.transpose();
      C[l].col(j) = updated;
    }
  }
}

}  // namespace

double response_objective(const GramMatrix& Gy, std::span<const Eigen::MatrixXd> A,
                          std::span<const Eigen::MatrixXd> C, const Eigen::VectorXd& tau) {
  if (A.size() != C.size() || static_cast<Eigen::Index>(A.size()) != tau.size() || A.empty())
    throw InvalidArgument("response objective: A, C and tau must have one entry per predictor");
  const Eigen::MatrixXd W = mixture(A, C, tau);
  const Eigen::MatrixXd GyW = Gy.entries() * W;
  return Gy.entries().trace() - 2.0 * GyW.trace() + W.cwiseProduct(GyW).sum();
}

MultipleRegressionModel fit_response(std::vector<PrototypeModel> per_predictor, const GramMatrix& Gy,
                                     const FitOptions& opts, const std::optional<Eigen::VectorXd>& fixed_tau) {
  opts.validate();
  if (per_predictor.empty()) throw InvalidArgument("regression needs at least one predictor");
  const Eigen::Index n = Gy.size();
  for (const auto& p : per_predictor)
    if (p.n != n) throw InvalidArgument("predictor and response Gram matrices differ in size");
  const auto m = static_cast<Eigen::Index>(per_predictor.size());
  if (fixed_tau && (fixed_tau->size() != m || !on_simplex(*fixed_tau)))
    throw InvalidArgument("fixed tau must be a simplex vector with one entry per predictor");

  std::vector<Eigen::MatrixXd> A;
  std::vector<Eigen::MatrixXd> C;
  for (const auto& p : per_predictor) {
    A.push_back(p.A);
    C.emplace_back(Eigen::MatrixXd::Constant(n, p.k, 1.0 / static_cast<double>(n)));
  }
  Eigen::VectorXd tau = fixed_tau ? *fixed_tau : SimplexWeights::uniform(m).values();

  std::vector<double> trace;
  double previous = response_objective(Gy, A, C, tau);
  for (int it = 0; it < opts.max_alternations; ++it) {
    if (!fixed_tau) tau = tau_step(Gy, A, C, tau, opts.qp);
    c_step(Gy, A, C, tau, opts.qp);
    const double f = response_objective(Gy, A, C, tau);
    if (!std::isfinite(f)) throw NumericalError("regression fit: objective became non-finite");
    trace.push_back(f);
    if (std::abs(f - previous) / (1.0 + std::abs(f)) < opts.tol) break;
    previous = f;
  }

  MultipleRegressionModel model;
  model.per_predictor = std::move(per_predictor);
  model.C = std::move(C);
  model.tau = project_to_simplex(tau);
  model.fit_trace = std::move(trace);
  model.gy_ref = Gy.provenance();
  return model;
}

MultipleRegressionModel fit_multiple(std::span<const GramMatrix> Gx, const GramMatrix& Gy,
                                     std::span<const Eigen::Index> k, std::span<const double> lambda,
                                     const FitOptions& opts, const std::optional<Eigen::VectorXd>& fixed_tau) {
  if (Gx.empty()) throw InvalidArgument("regression needs at least one predictor");
  if (k.size() != Gx.size() || lambda.size() != Gx.size())
    throw InvalidArgument("need one k and one lambda per predictor");
  std::vector<PrototypeModel> models;
  for (std::size_t l = 0; l < Gx.size(); ++l) {
    if (Gx[l].size() != Gy.size()) throw InvalidArgument("predictor and response Gram matrices differ in size");
    models.push_back(fit_prototypal(Gx[l], k[l], lambda[l], opts));
  }
  return fit_response(std::move(models), Gy, opts, fixed_tau);
}

SimpleRegressionModel fit_simple(const GramMatrix& Gx, const GramMatrix& Gy, Eigen::Index k, double lambda,
                                 const FitOptions& opts) {
  const GramMatrix grams[] = {Gx};
  const Eigen::Index ks[] = {k};
  const double lambdas[] = {lambda};
  MultipleRegressionModel multi = fit_multiple(grams, Gy, ks, lambdas, opts);
  return {std::move(multi.per_predictor.front()), std::move(multi.C.front()), multi.gy_ref,
          std::move(multi.fit_trace)};
}

ResponseWeights predict_simple(const SimpleRegressionModel& model, const Eigen::Ref<const Eigen::VectorXd>& g0x,
                               double g00x, std::optional<double> lambda_override, const SolverSettings& settings) {
  const SimplexWeights a = encode(model.x_model, g0x, g00x, lambda_override, settings);
  Eigen::VectorXd w = model.C * a.values();
  return SimplexWeights(std::move(w));
}

ResponseWeights predict_multiple(const MultipleRegressionModel& model, std::span<const Eigen::VectorXd> g0,
                                 std::span<const double> g00, const SolverSettings& settings) {
  const std::size_t m = model.predictors();
  if (g0.size() != m || g00.size() != m)
    throw InvalidArgument("prediction needs inner products for every predictor");
  Eigen::VectorXd w = Eigen::VectorXd::Zero(model.C.front().rows());
  for (std::size_t l = 0; l < m; ++l) {
    const double t = model.tau[static_cast<Eigen::Index>(l)];
    const SimplexWeights a = encode(model.per_predictor[l], g0[l], g00[l], std::nullopt, settings);
    if (t != 0.0) w.noalias() += t * (model.C[l] * a.values());
  }
  return SimplexWeights(std::move(w));
}

Eigen::MatrixXd training_weights(const MultipleRegressionModel& model) {
  std::vector<Eigen::MatrixXd> A;
  for (const auto& p : model.per_predictor) A.push_back(p.A);
  return mixture(A, model.C, model.tau.values());
}

Eigen::VectorXd class_probabilities(const ResponseWeights& w, const Eigen::MatrixXd& labels) {
  if (labels.rows() != w.size()) throw InvalidArgument("labels need one row per training response");
  return labels.transpose() * w.values();
}

Eigen::Index classify(const ResponseWeights& w, const Eigen::MatrixXd& labels) {
  const Eigen::VectorXd p = class_probabilities(w, labels);
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < p.size(); ++c)
    if (p[c] > p[best]) best = c;
  return best;
}

}  // namespace protoreg
