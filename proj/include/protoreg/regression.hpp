#pragma once

#include "protoreg/archetypes.hpp"
#include "protoreg/gram.hpp"
#include "protoreg/simplex.hpp"

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace protoreg {

/// Mixture weights over the n training responses; the prediction is sum_i w_i y_i.
using ResponseWeights = SimplexWeights;

struct SimpleRegressionModel {
  PrototypeModel x_model;
  /// n x k; column j mixes the training responses into the response prototype v_j.
  Eigen::MatrixXd C;
  std::string gy_ref;
  std::vector<double> fit_trace;
};

struct MultipleRegressionModel {
  std::vector<PrototypeModel> per_predictor;
  std::vector<Eigen::MatrixXd> C;  ///< one n x k_l matrix per predictor
  SimplexWeights tau;
  std::vector<double> fit_trace;
  std::string gy_ref;

  std::size_t predictors() const noexcept { return per_predictor.size(); }
};

/**
 * Squared error of the regression on its training data,
 * sum_i || y_i - sum_l tau_l sum_j A_l(j, i) v_j^(l) ||^2, through the response Gram.
 */
double response_objective(const GramMatrix& Gy, std::span<const Eigen::MatrixXd> A,
                          std::span<const Eigen::MatrixXd> C, const Eigen::VectorXd& tau);

SimpleRegressionModel fit_simple(const GramMatrix& Gx, const GramMatrix& Gy, Eigen::Index k, double lambda,
                                 const FitOptions& opts = {});

ResponseWeights predict_simple(const SimpleRegressionModel& model, const Eigen::Ref<const Eigen::VectorXd>& g0x,
                               double g00x, std::optional<double> lambda_override = std::nullopt,
                               const SolverSettings& settings = {});

/// `fixed_tau`, when given, is used as-is and the tau step is skipped.
MultipleRegressionModel fit_multiple(std::span<const GramMatrix> Gx, const GramMatrix& Gy,
                                     std::span<const Eigen::Index> k, std::span<const double> lambda,
                                     const FitOptions& opts = {},
                                     const std::optional<Eigen::VectorXd>& fixed_tau = std::nullopt);

/// Same, reusing already fitted predictor models.
MultipleRegressionModel fit_response(std::vector<PrototypeModel> per_predictor, const GramMatrix& Gy,
                                     const FitOptions& opts = {},
                                     const std::optional<Eigen::VectorXd>& fixed_tau = std::nullopt);

ResponseWeights predict_multiple(const MultipleRegressionModel& model, std::span<const Eigen::VectorXd> g0,
                                 std::span<const double> g00, const SolverSettings& settings = {});

/// Response mixture weights of every training point (column i), using the fitted A's.
Eigen::MatrixXd training_weights(const MultipleRegressionModel& model);

/// labels' * w, the predicted class probabilities for one-hot responses.
Eigen::VectorXd class_probabilities(const ResponseWeights& w, const Eigen::MatrixXd& labels);

/// Argmax of the class probabilities, lowest index on ties.
Eigen::Index classify(const ResponseWeights& w, const Eigen::MatrixXd& labels);

}  // namespace protoreg
