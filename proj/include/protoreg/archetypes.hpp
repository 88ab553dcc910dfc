#pragma once

#include "protoreg/gram.hpp"
#include "protoreg/simplex.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <vector>

namespace protoreg {

struct FitOptions {
  int max_outer_iter = 500;
  /// Relative objective change |f_t - f_{t-1}| / (1 + |f_t|) that ends the outer loop.
  double tol = 1e-7;
  std::uint64_t seed = 0;
  bool restart_degenerate = true;
  /// Inner simplex-QP settings; fits skip the final exact solve.
  SolverSettings qp{.tol = 1e-9, .max_iter = 10000, .polish = false};
  /// Cap on response-side alternations in the regression fits.
  int max_alternations = 100;

  void validate() const;
};

/**
 * Fitted archetypal / prototypal analysis. Prototype j is the mixture
 * u_j = sum_l B(l, j) x_l of training points and point i is reconstructed
 * as sum_j A(j, i) u_j. Coordinates of the u_j are never stored: everything
 * goes through the training Gram matrix.
 */
struct PrototypeModel {
  Eigen::MatrixXd A;  ///< k x n, columns on the simplex
  Eigen::MatrixXd B;  ///< n x k, columns on the simplex
  double lambda = 0.0;
  Eigen::Index k = 0;
  Eigen::Index n = 0;
  std::vector<double> objective_trace;
  /// B' G B, the Gram matrix of the prototypes; all that encode() needs besides B.
  Eigen::MatrixXd prototype_gram;
  /// Training indices used as the initial one-hot prototypes.
  std::vector<Eigen::Index> initial_points;
};

/// D^2-weighted sequential sampling of k distinct points from Gram distances.
std::vector<Eigen::Index> seed_prototypes(const GramMatrix& G, Eigen::Index k, std::uint64_t seed);

/// Squared distances ||x_i - u_j||^2 as a k x n matrix.
Eigen::MatrixXd prototype_sq_distances(const GramMatrix& G, const Eigen::MatrixXd& B);

double objective(const GramMatrix& G, const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, double lambda);

/// Per point, the simplex QP for a_i with B fixed. `warm` (k x n) is the
/// previous A; a column is only replaced if its subproblem objective improves.
Eigen::MatrixXd update_A(const GramMatrix& G, const Eigen::MatrixXd& B, double lambda,
                         const SolverSettings& settings = {}, const Eigen::MatrixXd* warm = nullptr);

/// One block-coordinate sweep over the columns of B with A fixed.
Eigen::MatrixXd update_B(const GramMatrix& G, const Eigen::MatrixXd& A, Eigen::MatrixXd B, double lambda,
                         const SolverSettings& settings = {});

PrototypeModel fit_prototypal(const GramMatrix& G, Eigen::Index k, double lambda, const FitOptions& opts = {});
PrototypeModel fit_archetypal(const GramMatrix& G, Eigen::Index k, const FitOptions& opts = {});

/// Barycentric coordinates of a new point x0 given g0[i] = <x0, x_i> and g00 = <x0, x0>.
/// Uses the model's lambda unless `lambda_override` is set.
SimplexWeights encode(const PrototypeModel& model, const Eigen::Ref<const Eigen::VectorXd>& g0, double g00,
                      std::optional<double> lambda_override = std::nullopt, const SolverSettings& settings = {});

}  // namespace protoreg
