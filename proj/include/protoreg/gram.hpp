#pragma once

#include <Eigen/Dense>

#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace protoreg {

enum class KernelFamily { linear, gaussian, laplacian, bspline, energy };

/**
 * Positive semidefinite kernel on R^d.
 *
 *   linear     <x, y>
 *   gaussian   exp(-sigma |x - y|^2)
 *   laplacian  exp(-sigma |x - y|_1)
 *   bspline    prod_i B(x_i - y_i), B the unit-integral cardinal B-spline of degree 1 or 3
 *   energy     |x| + |y| - |x - y|
 */
struct KernelSpec {
  KernelFamily family = KernelFamily::linear;
  double sigma = 1.0;
  int degree = 3;

  static KernelSpec linear() { return {}; }
  static KernelSpec gaussian(double sigma) { return {KernelFamily::gaussian, sigma, 3}; }
  static KernelSpec laplacian(double sigma) { return {KernelFamily::laplacian, sigma, 3}; }
  static KernelSpec bspline(int degree) { return {KernelFamily::bspline, 1.0, degree}; }
  static KernelSpec energy() { return {KernelFamily::energy, 1.0, 3}; }

  /// Parses "family[:param]", e.g. "gaussian:0.5", "bspline:3", "energy".
  static KernelSpec parse(std::string_view text);
  std::string to_string() const;

  /// Throws InvalidArgument when sigma or degree is unusable for the family.
  void validate() const;

  friend bool operator==(const KernelSpec&, const KernelSpec&) = default;
};

/// Cardinal B-spline with unit integral, degree 1 or 3.
double cardinal_bspline(int degree, double x);

double kernel_eval(const KernelSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x,
                   const Eigen::Ref<const Eigen::VectorXd>& y);

/// A finite sample set standing for its empirical measure. Rows are samples.
class EmpiricalDistribution {
 public:
  /// One-dimensional samples are sorted on ingestion and flagged.
  explicit EmpiricalDistribution(Eigen::MatrixXd samples);
  explicit EmpiricalDistribution(const std::vector<double>& samples_1d);

  /// Keeps the given order; sorted_1d() reports whether it happens to be ascending.
  static EmpiricalDistribution unsorted(Eigen::MatrixXd samples);

  const Eigen::MatrixXd& samples() const noexcept { return samples_; }
  Eigen::Index size() const noexcept { return samples_.rows(); }
  Eigen::Index dimension() const noexcept { return samples_.cols(); }
  bool sorted_1d() const noexcept { return sorted_1d_; }

 private:
  struct Raw {};
  EmpiricalDistribution(Eigen::MatrixXd samples, Raw);

  Eigen::MatrixXd samples_;
  bool sorted_1d_ = false;
};

/// Empirical embedding inner product (1 / n1 n2) sum_ij K(x_i, y_j).
/// Dispatches to energy_inner_1d_sorted for the energy kernel on sorted 1D inputs.
double embed_inner(const KernelSpec& spec, const EmpiricalDistribution& a,
                   const EmpiricalDistribution& b);

/// The O(n1 n2) double sum, whatever the kernel.
double embed_inner_naive(const KernelSpec& spec, const EmpiricalDistribution& a,
                         const EmpiricalDistribution& b);

/// Energy-kernel embedding inner product of sorted 1D samples in O(n1 + n2) by merge counting.
double energy_inner_1d_sorted(const EmpiricalDistribution& a, const EmpiricalDistribution& b);

/// Squared MMD under `spec`, clamped below at zero. Equals the squared energy
/// distance for the energy kernel.
double squared_mmd(const KernelSpec& spec, const EmpiricalDistribution& a,
                   const EmpiricalDistribution& b);

/// Symmetric PSD matrix of pairwise inner products.
class GramMatrix {
 public:
  GramMatrix() = default;
  /// Throws InvalidArgument unless square, symmetric within 1e-10 (relative) and finite.
  explicit GramMatrix(Eigen::MatrixXd entries, std::string provenance = "explicit");

  const Eigen::MatrixXd& entries() const noexcept { return entries_; }
  const std::string& provenance() const noexcept { return provenance_; }
  Eigen::Index size() const noexcept { return entries_.rows(); }
  double operator()(Eigen::Index i, Eigen::Index j) const { return entries_(i, j); }

  double min_eigenvalue() const;
  /// Smallest eigenvalue >= -1e-8 * trace.
  bool is_psd() const;

  /// Principal submatrix on `indices` (in the given order).
  GramMatrix subset(std::span<const Eigen::Index> indices) const;

 private:
  Eigen::MatrixXd entries_;
  std::string provenance_;
};

using FeatureItem = std::variant<Eigen::VectorXd, EmpiricalDistribution>;

double inner(const KernelSpec& spec, const FeatureItem& a, const FeatureItem& b);

/// Upper triangle computed, lower mirrored. Items must all be vectors or all distributions.
GramMatrix gram_matrix(std::span<const FeatureItem> items, const KernelSpec& spec);
/// Rows of `points` are the items.
GramMatrix gram_matrix(const Eigen::MatrixXd& points, const KernelSpec& spec);
GramMatrix gram_matrix(std::span<const EmpiricalDistribution> items, const KernelSpec& spec);

/// Entry (r, i) = <queries[r], train[i]>.
Eigen::MatrixXd cross_gram(std::span<const FeatureItem> queries, std::span<const FeatureItem> train,
                           const KernelSpec& spec);
/// Entry r = <queries[r], queries[r]>.
Eigen::VectorXd self_inner(std::span<const FeatureItem> queries, const KernelSpec& spec);

}  // namespace protoreg
