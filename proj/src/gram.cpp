#include "protoreg/gram.hpp"

#include "protoreg/error.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

namespace protoreg {

namespace {

std::string_view family_name(KernelFamily f) {
  switch (f) {
    case KernelFamily::linear: return "linear";
    case KernelFamily::gaussian: return "gaussian";
    case KernelFamily::laplacian: return "laplacian";
    case KernelFamily::bspline: return "bspline";
    case KernelFamily::energy: return "energy";
  }
  return "unknown";
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

KernelSpec KernelSpec::parse(std::string_view text) {
  const auto colon = text.find(':');
  const std::string_view name = text.substr(0, colon);
  const std::string_view param = colon == std::string_view::npos ? std::string_view{} : text.substr(colon + 1);

  KernelSpec spec;
  if (name == "linear") spec.family = KernelFamily::linear;
  else if (name == "gaussian") spec.family = KernelFamily::gaussian;
  else if (name == "laplacian") spec.family = KernelFamily::laplacian;
  else if (name == "bspline") spec.family = KernelFamily::bspline;
  else if (name == "energy") spec.family = KernelFamily::energy;
  else throw InvalidArgument("unknown kernel family '" + std::string(name) + "'");

  if (!param.empty()) {
    if (spec.family == KernelFamily::gaussian || spec.family == KernelFamily::laplacian) {
      auto res = std::from_chars(param.data(), param.data() + param.size(), spec.sigma);
      if (res.ec != std::errc{} || res.ptr != param.data() + param.size())
        throw InvalidArgument("bad kernel bandwidth '" + std::string(param) + "'");
    } else if (spec.family == KernelFamily::bspline) {
      auto res = std::from_chars(param.data(), param.data() + param.size(), spec.degree);
      if (res.ec != std::errc{} || res.ptr != param.data() + param.size())
        throw InvalidArgument("bad B-spline degree '" + std::string(param) + "'");
    } else {
      throw InvalidArgument("kernel '" + std::string(name) + "' takes no parameter");
    }
  }
  spec.validate();
  return spec;
}

std::string KernelSpec::to_string() const {
  std::string out(family_name(family));
  if (family == KernelFamily::gaussian || family == KernelFamily::laplacian)
    out += ":" + format_double(sigma);
  else if (family == KernelFamily::bspline)
    out += ":" + std::to_string(degree);
  return out;
}

void KernelSpec::validate() const {
  if ((family == KernelFamily::gaussian || family == KernelFamily::laplacian) &&
      !(sigma > 0.0 && std::isfinite(sigma)))
    throw InvalidArgument("kernel bandwidth sigma must be positive and finite");
  if (family == KernelFamily::bspline && degree != 1 && degree != 3)
    throw InvalidArgument("B-spline kernel supports degrees 1 and 3 only");
}

double cardinal_bspline(int degree, double x) {
  const double ax = std::abs(x);
  if (degree == 1) return ax < 1.0 ? 1.0 - ax : 0.0;
  if (degree == 3) {
    if (ax < 1.0) return 2.0 / 3.0 - ax * ax + 0.5 * ax * ax * ax;
    if (ax < 2.0) {
      const double r = 2.0 - ax;
      return r * r * r / 6.0;
    }
    return 0.0;
  }
  throw InvalidArgument("B-spline kernel supports degrees 1 and 3 only");
}

double kernel_eval(const KernelSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x,
                   const Eigen::Ref<const Eigen::VectorXd>& y) {
  if (x.size() != y.size()) throw InvalidArgument("kernel arguments differ in dimension");
  switch (spec.family) {
    case KernelFamily::linear:
      return x.dot(y);
    case KernelFamily::gaussian:
      return std::exp(-spec.sigma * (x - y).squaredNorm());
    case KernelFamily::laplacian:
      return std::exp(-spec.sigma * (x - y).cwiseAbs().sum());
    case KernelFamily::bspline: {
      double prod = 1.0;
      for (Eigen::Index i = 0; i < x.size(); ++i) prod *= cardinal_bspline(spec.degree, x[i] - y[i]);
      return prod;
    }
    case KernelFamily::energy:
      return x.norm() + y.norm() - (x - y).norm();
  }
  throw InvalidArgument("unknown kernel family");
}

// ---------------------------------------------------------------------------
// Empirical distributions

EmpiricalDistribution::EmpiricalDistribution(Eigen::MatrixXd samples, Raw)
    : samples_(std::move(samples)) {
  if (samples_.rows() == 0 || samples_.cols() == 0)
    throw InvalidArgument("empirical distribution needs at least one sample of dimension >= 1");
  if (!samples_.allFinite()) throw InvalidArgument("empirical distribution has non-finite samples");
  if (samples_.cols() == 1) {
    const auto col = samples_.col(0);
    sorted_1d_ = std::is_sorted(col.data(), col.data() + col.size());
  }
}

EmpiricalDistribution::EmpiricalDistribution(Eigen::MatrixXd samples)
    : EmpiricalDistribution(std::move(samples), Raw{}) {
  if (samples_.cols() == 1 && !sorted_1d_) {
    std::sort(samples_.data(), samples_.data() + samples_.rows());
    sorted_1d_ = true;
  }
}

EmpiricalDistribution::EmpiricalDistribution(const std::vector<double>& samples_1d)
    : EmpiricalDistribution(Eigen::Map<const Eigen::MatrixXd>(samples_1d.data(),
                                                              static_cast<Eigen::Index>(samples_1d.size()), 1)) {}

EmpiricalDistribution EmpiricalDistribution::unsorted(Eigen::MatrixXd samples) {
  return EmpiricalDistribution(std::move(samples), Raw{});
}

double embed_inner_naive(const KernelSpec& spec, const EmpiricalDistribution& a,
                         const EmpiricalDistribution& b) {
  if (a.dimension() != b.dimension())
    throw InvalidArgument("distributions differ in sample dimension");
  spec.validate();
  const Eigen::MatrixXd& xs = a.samples();
  const Eigen::MatrixXd& ys = b.samples();
  double total = 0.0;
  for (Eigen::Index i = 0; i < xs.rows(); ++i) {
    double row = 0.0;
    for (Eigen::Index j = 0; j < ys.rows(); ++j)
      row += kernel_eval(spec, xs.row(i).transpose(), ys.row(j).transpose());
    total += row;
  }
  return total / (static_cast<double>(xs.rows()) * static_cast<double>(ys.rows()));
}

double energy_inner_1d_sorted(const EmpiricalDistribution& a, const EmpiricalDistribution& b) {
  if (a.dimension() != 1 || b.dimension() != 1)
    throw InvalidArgument("fast energy kernel needs one-dimensional samples");
  const auto x = a.samples().col(0);
  const auto y = b.samples().col(0);
  if (!std::is_sorted(x.data(), x.data() + x.size()) || !std::is_sorted(y.data(), y.data() + y.size()))
    throw InvalidArgument("fast energy kernel needs samples sorted ascending");

  const Eigen::Index nx = x.size();
  const Eigen::Index ny = y.size();
  // sum_ij |x_i - y_j| = sum_i (#{y < x_i} - #{y >= x_i}) x_i + sum_j (#{x <= y_j} - #{x > y_j}) y_j
  double sum_x = 0.0;
  double sum_y = 0.0;
  Eigen::Index i = 0;
  Eigen::Index j = 0;
  while (i < nx && j < ny) {
    if (x[i] <= y[j]) {
      sum_x += static_cast<double>(j - (ny - j)) * x[i];
      ++i;
    } else {
      sum_y += static_cast<double>(i - (nx - i)) * y[j];
      ++j;
    }
  }
  if (i == nx) {
    sum_y += static_cast<double>(nx) * y.segment(j, ny - j).sum();
  } else {
    sum_x += static_cast<double>(ny) * x.segment(i, nx - i).sum();
  }
  const double mean_abs_x = x.cwiseAbs().sum() / static_cast<double>(nx);
  const double mean_abs_y = y.cwiseAbs().sum() / static_cast<double>(ny);
  return mean_abs_x + mean_abs_y - (sum_x + sum_y) / (static_cast<double>(nx) * static_cast<double>(ny));
}

double embed_inner(const KernelSpec& spec, const EmpiricalDistribution& a,
                   const EmpiricalDistribution& b) {
  if (a.dimension() != b.dimension())
    throw InvalidArgument("distributions differ in sample dimension");
  if (spec.family == KernelFamily::energy && a.dimension() == 1 && a.sorted_1d() && b.sorted_1d())
    return energy_inner_1d_sorted(a, b);
  if (spec.family == KernelFamily::linear) {
    // <mean x, mean y>, exact for the linear kernel and O(n1 + n2).
    const Eigen::VectorXd ma = a.samples().colwise().mean().transpose();
    const Eigen::VectorXd mb = b.samples().colwise().mean().transpose();
    return ma.dot(mb);
  }
  return embed_inner_naive(spec, a, b);
}

double squared_mmd(const KernelSpec& spec, const EmpiricalDistribution& a,
                   const EmpiricalDistribution& b) {
  const double value = embed_inner(spec, a, a) + embed_inner(spec, b, b) - 2.0 * embed_inner(spec, a, b);
  return std::max(0.0, value);
}

// ---------------------------------------------------------------------------
// Gram matrices

GramMatrix::GramMatrix(Eigen::MatrixXd entries, std::string provenance)
    : entries_(std::move(entries)), provenance_(std::move(provenance)) {
  if (entries_.rows() != entries_.cols()) throw InvalidArgument("Gram matrix must be square");
  if (entries_.rows() == 0) throw InvalidArgument("Gram matrix must be non-empty");
  if (!entries_.allFinite()) throw InvalidArgument("Gram matrix has non-finite entries");
  const double scale = 1.0 + entries_.cwiseAbs().maxCoeff();
  if ((entries_ - entries_.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw InvalidArgument("Gram matrix is not symmetric");
}

double GramMatrix::min_eigenvalue() const {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(entries_, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

bool GramMatrix::is_psd() const {
  return min_eigenvalue() >= -1e-8 * std::max(entries_.trace(), 0.0);
}

GramMatrix GramMatrix::subset(std::span<const Eigen::Index> indices) const {
  const auto m = static_cast<Eigen::Index>(indices.size());
  Eigen::MatrixXd out(m, m);
  for (Eigen::Index r = 0; r < m; ++r) {
    if (indices[r] < 0 || indices[r] >= size()) throw InvalidArgument("Gram subset index out of range");
    for (Eigen::Index c = 0; c < m; ++c) out(r, c) = entries_(indices[r], indices[c]);
  }
  return GramMatrix(std::move(out), provenance_);
}

double inner(const KernelSpec& spec, const FeatureItem& a, const FeatureItem& b) {
  if (a.index() != b.index())
    throw InvalidArgument("cannot take inner products between a vector and a distribution");
  if (const auto* va = std::get_if<Eigen::VectorXd>(&a))
    return kernel_eval(spec, *va, std::get<Eigen::VectorXd>(b));
  return embed_inner(spec, std::get<EmpiricalDistribution>(a), std::get<EmpiricalDistribution>(b));
}

GramMatrix gram_matrix(std::span<const FeatureItem> items, const KernelSpec& spec) {
  spec.validate();
  if (items.empty()) throw InvalidArgument("Gram matrix of an empty item list");
  for (const auto& item : items)
    if (item.index() != items.front().index())
      throw InvalidArgument("Gram matrix items must all be vectors or all be distributions");
  const auto n = static_cast<Eigen::Index>(items.size());
  Eigen::MatrixXd g(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      g(i, j) = inner(spec, items[i], items[j]);
      g(j, i) = g(i, j);
    }
  }
  return GramMatrix(std::move(g), spec.to_string());
}

GramMatrix gram_matrix(const Eigen::MatrixXd& points, const KernelSpec& spec) {
  spec.validate();
  if (points.rows() == 0) throw InvalidArgument("Gram matrix of an empty item list");
  if (spec.family == KernelFamily::linear) {
    Eigen::MatrixXd g = points * points.transpose();
    // Mirror the upper triangle so the result is exactly symmetric.
    g.triangularView<Eigen::StrictlyLower>() = g.transpose().eval();
    return GramMatrix(std::move(g), spec.to_string());
  }
  const Eigen::Index n = points.rows();
  Eigen::MatrixXd g(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      g(i, j) = kernel_eval(spec, points.row(i).transpose(), points.row(j).transpose());
      g(j, i) = g(i, j);
    }
  }
  return GramMatrix(std::move(g), spec.to_string());
}

GramMatrix gram_matrix(std::span<const EmpiricalDistribution> items, const KernelSpec& spec) {
  spec.validate();
  if (items.empty()) throw InvalidArgument("Gram matrix of an empty item list");
  const auto n = static_cast<Eigen::Index>(items.size());
  Eigen::MatrixXd g(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      g(i, j) = embed_inner(spec, items[i], items[j]);
      g(j, i) = g(i, j);
    }
  }
  return GramMatrix(std::move(g), spec.to_string());
}

Eigen::MatrixXd cross_gram(std::span<const FeatureItem> queries, std::span<const FeatureItem> train,
                           const KernelSpec& spec) {
  spec.validate();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(queries.size()), static_cast<Eigen::Index>(train.size()));
  for (std::size_t r = 0; r < queries.size(); ++r)
    for (std::size_t i = 0; i < train.size(); ++i)
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)) = inner(spec, queries[r], train[i]);
  return out;
}

Eigen::VectorXd self_inner(std::span<const FeatureItem> queries, const KernelSpec& spec) {
  spec.validate();
  Eigen::VectorXd out(static_cast<Eigen::Index>(queries.size()));
  for (std::size_t r = 0; r < queries.size(); ++r)
    out[static_cast<Eigen::Index>(r)] = inner(spec, queries[r], queries[r]);
  return out;
}

}  // namespace protoreg
