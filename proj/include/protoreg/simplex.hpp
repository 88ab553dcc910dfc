#pragma once

#include <Eigen/Dense>

#include <optional>

namespace protoreg {

struct QuadraticSubproblem;
struct SimplexQpResult;

/// Nonnegative weights that sum to one.
class SimplexWeights {
 public:
  SimplexWeights() = default;
  /// Takes ownership of `w`; throws InvalidArgument unless it lies on the simplex (1e-12).
  explicit SimplexWeights(Eigen::VectorXd w);

  static SimplexWeights uniform(Eigen::Index d);
  static SimplexWeights vertex(Eigen::Index d, Eigen::Index at);

  const Eigen::VectorXd& values() const noexcept { return w_; }
  Eigen::Index size() const noexcept { return w_.size(); }
  double operator[](Eigen::Index i) const { return w_[i]; }

 private:
  struct Unchecked {};
  SimplexWeights(Eigen::VectorXd w, Unchecked) : w_(std::move(w)) {}
  friend SimplexWeights project_to_simplex(const Eigen::Ref<const Eigen::VectorXd>& v);
  friend SimplexQpResult solve_simplex_qp_detailed(const QuadraticSubproblem& p);

  Eigen::VectorXd w_;
};

bool on_simplex(const Eigen::Ref<const Eigen::VectorXd>& w, double tol = 1e-12);

/// Euclidean projection onto the probability simplex (sort-based, O(d log d)).
SimplexWeights project_to_simplex(const Eigen::Ref<const Eigen::VectorXd>& v);

struct SolverSettings {
  double tol = 1e-9;
  int max_iter = 10000;
  /// Finish with an exact solve on the detected support (supports up to 200).
  bool polish = true;
};

/// minimize 0.5 w'Qw + q'w subject to w on the simplex.
struct QuadraticSubproblem {
  Eigen::MatrixXd Q;
  Eigen::VectorXd q;
  SolverSettings settings;
  /// Feasible starting point; the uniform vector when empty.
  std::optional<Eigen::VectorXd> start;
};

struct SimplexQpResult {
  SimplexWeights w;
  double objective = 0.0;
  int iterations = 0;
  /// Frank-Wolfe gap at `w`, an upper bound on objective - optimum.
  double gap = 0.0;
};

double qp_objective(const Eigen::MatrixXd& Q, const Eigen::VectorXd& q,
                    const Eigen::Ref<const Eigen::VectorXd>& w);

/**
 * Accelerated projected gradient with step 1/L, L the largest absolute row
 * sum of Q. When an accelerated step raises the objective the momentum is
 * dropped and a plain projected gradient step is taken from the last iterate,
 * so the accepted objective sequence never increases. Stops once the
 * Frank-Wolfe gap or the accepted decrease falls below tol * (1 + |f|), when
 * no step decreases the objective any more, or after max_iter iterations.
 * With settings.polish the final iterate is then refined by solving the
 * optimality conditions on its support; the refined point replaces it only
 * if it satisfies them and does not rise above the start point.
 *
 * Throws NumericalError when a step direction shows negative curvature
 * beyond rounding, or when inputs are non-finite.
 */
SimplexQpResult solve_simplex_qp_detailed(const QuadraticSubproblem& p);

SimplexWeights solve_simplex_qp(const QuadraticSubproblem& p);

}  // namespace protoreg
