#include "protoreg/simplex.hpp"

#include "protoreg/error.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <vector>

namespace protoreg {

bool on_simplex(const Eigen::Ref<const Eigen::VectorXd>& w, double tol) {
  if (w.size() == 0 || !w.allFinite()) return false;
  if (w.minCoeff() < 0.0) return false;
  return std::abs(w.sum() - 1.0) <= tol;
}

SimplexWeights::SimplexWeights(Eigen::VectorXd w) : w_(std::move(w)) {
  if (!on_simplex(w_)) throw InvalidArgument("weights are not on the probability simplex");
}

SimplexWeights SimplexWeights::uniform(Eigen::Index d) {
  if (d < 1) throw InvalidArgument("simplex dimension must be at least 1");
  return SimplexWeights(Eigen::VectorXd::Constant(d, 1.0 / static_cast<double>(d)), Unchecked{});
}

SimplexWeights SimplexWeights::vertex(Eigen::Index d, Eigen::Index at) {
  if (d < 1 || at < 0 || at >= d) throw InvalidArgument("simplex vertex index out of range");
  Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
  w[at] = 1.0;
  return SimplexWeights(std::move(w), Unchecked{});
}

SimplexWeights project_to_simplex(const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (v.size() == 0) throw InvalidArgument("cannot project an empty vector onto the simplex");
  if (!v.allFinite()) throw InvalidArgument("cannot project a vector with non-finite entries");

  std::vector<double> sorted(v.data(), v.data() + v.size());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());

  double running = 0.0;
  double theta = 0.0;
  for (std::size_t j = 0; j < sorted.size(); ++j) {
    running += sorted[j];
    const double candidate = (running - 1.0) / static_cast<double>(j + 1);
    if (sorted[j] - candidate > 0.0) theta = candidate;
  }
  Eigen::VectorXd w = (v.array() - theta).max(0.0);
  return SimplexWeights(std::move(w), SimplexWeights::Unchecked{});
}

double qp_objective(const Eigen::MatrixXd& Q, const Eigen::VectorXd& q,
                    const Eigen::Ref<const Eigen::VectorXd>& w) {
  return 0.5 * w.dot(Q * w) + q.dot(w);
}

namespace {

void validate(const QuadraticSubproblem& p) {
  const Eigen::Index d = p.q.size();
  if (d < 1) throw InvalidArgument("quadratic subproblem needs dimension >= 1");
  if (p.Q.rows() != d || p.Q.cols() != d)
    throw InvalidArgument("quadratic subproblem: Q must be d x d with d = size of q");
  if (!p.Q.allFinite() || !p.q.allFinite())
    throw NumericalError("quadratic subproblem has non-finite coefficients");
  const double scale = 1.0 + p.Q.cwiseAbs().maxCoeff();
  if ((p.Q - p.Q.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw InvalidArgument("quadratic subproblem: Q is not symmetric");
  if (!(p.settings.tol > 0.0) || p.settings.max_iter < 1)
    throw InvalidArgument("quadratic subproblem: tol must be > 0 and max_iter >= 1");
  if (p.start && p.start->size() != d)
    throw InvalidArgument("quadratic subproblem: start has wrong dimension");
}

void check_curvature(const Eigen::VectorXd& step, const Eigen::VectorXd& q_step, double lipschitz) {
  const double curvature = step.dot(q_step);
  if (curvature < -1e-6 * lipschitz * step.squaredNorm())
    throw NumericalError("simplex QP: negative curvature, Q is not positive semidefinite");
}

constexpr Eigen::Index kMaxPolishSupport = 200;

// Exact minimizer on the support of w, from the KKT system
//   Q_SS w_S + nu 1 = -q_S,  1'w_S = 1.
// Empty when the system is singular, the solution leaves the simplex, or an
// off-support coordinate has a smaller gradient than the support.
std::optional<Eigen::VectorXd> polish(const Eigen::MatrixXd& Q, const Eigen::VectorXd& q, const Eigen::VectorXd& w) {
  std::vector<Eigen::Index> support;
  for (Eigen::Index i = 0; i < w.size(); ++i)
    if (w[i] > 0.0) support.push_back(i);
  const auto m = static_cast<Eigen::Index>(support.size());
  if (m > kMaxPolishSupport) return std::nullopt;

  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(m + 1, m + 1);
  Eigen::VectorXd rhs(m + 1);
  for (Eigen::Index a = 0; a < m; ++a) {
    for (Eigen::Index b = 0; b < m; ++b) K(a, b) = Q(support[a], support[b]);
    K(a, m) = 1.0;
    K(m, a) = 1.0;
    rhs[a] = -q[support[a]];
  }
  rhs[m] = 1.0;
  // Singular systems show up as a non-finite or inexact solution.
  const Eigen::VectorXd sol = K.partialPivLu().solve(rhs);
  if (!sol.allFinite()) return std::nullopt;
  if ((K * sol - rhs).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + K.cwiseAbs().maxCoeff() * sol.cwiseAbs().maxCoeff()))
    return std::nullopt;

  Eigen::VectorXd v = Eigen::VectorXd::Zero(w.size());
  for (Eigen::Index a = 0; a < m; ++a) {
    if (sol[a] < 0.0) return std::nullopt;
    v[support[a]] = sol[a];
  }
  v /= v.sum();
  const Eigen::VectorXd grad = Q * v + q;
  const double level = -sol[m];
  const double slack = 1e-12 * (1.0 + grad.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < w.size(); ++i)
    if (v[i] == 0.0 && grad[i] < level - slack) return std::nullopt;
  return v;
}

}  // namespace

SimplexQpResult solve_simplex_qp_detailed(const QuadraticSubproblem& p) {
  validate(p);
  const Eigen::MatrixXd& Q = p.Q;
  const Eigen::VectorXd& q = p.q;
  const Eigen::Index d = q.size();

  const double lipschitz = Q.cwiseAbs().rowwise().sum().maxCoeff();
  if (lipschitz == 0.0) {
    // Linear objective: the lowest-index vertex of minimal coefficient.
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < d; ++j)
      if (q[j] < q[best]) best = j;
    SimplexWeights w = SimplexWeights::vertex(d, best);
    return {w, q[best], 0, 0.0};
  }

  Eigen::VectorXd w = p.start ? project_to_simplex(*p.start).values()
                              : SimplexWeights::uniform(d).values();
  Eigen::VectorXd Qw = Q * w;
  double f = 0.5 * w.dot(Qw) + q.dot(w);
  if (!std::isfinite(f)) throw NumericalError("simplex QP: non-finite objective");
  const double f_start = f;

  Eigen::VectorXd y = w;
  Eigen::VectorXd Qy = Qw;
  double t = 1.0;
  double gap = 0.0;
  int it = 0;
  const double step = 1.0 / lipschitz;
  const double tol = p.settings.tol;

  // Objective change of the move w -> z, formed from the step itself so that
  // small decreases are not lost to cancellation against |f|.
  auto change = [&](const Eigen::VectorXd& d, const Eigen::VectorXd& Qd, const Eigen::VectorXd& grad) {
    return d.dot(grad) + 0.5 * d.dot(Qd);
  };

  for (; it < p.settings.max_iter; ++it) {
    const Eigen::VectorXd grad = Qw + q;
    gap = grad.dot(w) - grad.minCoeff();
    if (gap <= tol * (1.0 + std::abs(f))) break;

    Eigen::VectorXd z = project_to_simplex(y - step * (Qy + q)).values();
    Eigen::VectorXd Qz = Q * z;
    Eigen::VectorXd d = z - w;
    Eigen::VectorXd Qd = Qz - Qw;
    double delta = change(d, Qd, grad);

    if (!(delta <= 0.0)) {
      // Restart: plain projected gradient step from the last accepted iterate.
      z = project_to_simplex(w - step * grad).values();
      Qz = Q * z;
      d = z - w;
      Qd = Qz - Qw;
      delta = change(d, Qd, grad);
      t = 1.0;
      check_curvature(d, Qd, lipschitz);
      if (!std::isfinite(delta)) throw NumericalError("simplex QP: non-finite objective");
      if (!(delta < 0.0)) break;
    } else {
      check_curvature(d, Qd, lipschitz);
    }

    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const double beta = (t - 1.0) / t_next;
    y = z + beta * d;
    Qy = Qz + beta * Qd;
    w = std::move(z);
    Qw = std::move(Qz);
    f += delta;
    t = t_next;
    if (-delta <= tol * (1.0 + std::abs(f))) {
      ++it;
      break;
    }
  }

  f = 0.5 * w.dot(Qw) + q.dot(w);
  if (auto v = p.settings.polish ? polish(Q, q, w) : std::nullopt) {
    // Accepted up to rounding of the objective, never above the start point.
    const Eigen::VectorXd Qv = Q * *v;
    const double fv = 0.5 * v->dot(Qv) + q.dot(*v);
    if (fv <= f + 1e-14 * (1.0 + std::abs(f)) && fv <= f_start) {
      w = std::move(*v);
      Qw = Qv;
      f = fv;
    }
  }
  const Eigen::VectorXd grad = Qw + q;
  gap = grad.dot(w) - grad.minCoeff();
  return {SimplexWeights(std::move(w), SimplexWeights::Unchecked{}), f, it, gap};
}

SimplexWeights solve_simplex_qp(const QuadraticSubproblem& p) {
  return solve_simplex_qp_detailed(p).w;
}

}  // namespace protoreg
