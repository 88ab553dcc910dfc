#include "oracles.hpp"

#include "protoreg/error.hpp"
#include "protoreg/gram.hpp"
#include "protoreg/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace protoreg;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

std::vector<double> draw(SplitMix64& rng, std::size_t n, double shift) {
  std::vector<double> v(n);
  for (auto& x : v) x = shift + 2.0 * rng.normal();
  return v;
}

}  // namespace

TEST_CASE("kernel examples") {
  CHECK(kernel_eval(KernelSpec::gaussian(1), vec({0.3, -0.7}), vec({0.3, -0.7})) == 1.0);
  CHECK(kernel_eval(KernelSpec::energy(), vec({0}), vec({0})) == 0.0);
  CHECK(kernel_eval(KernelSpec::laplacian(2), vec({1, 0}), vec({0, 0})) == doctest::Approx(std::exp(-2.0)));
  CHECK(kernel_eval(KernelSpec::linear(), vec({1, 2}), vec({3, 4})) == 11.0);
  CHECK(kernel_eval(KernelSpec::gaussian(0.5), vec({1, 1}), vec({0, 0})) == doctest::Approx(std::exp(-1.0)));
  CHECK(kernel_eval(KernelSpec::energy(), vec({3, 4}), vec({0, 1})) ==
        doctest::Approx(5.0 + 1.0 - std::sqrt(18.0)));
}

TEST_CASE("kernel dimension mismatch") {
  CHECK_THROWS_AS(kernel_eval(KernelSpec::linear(), vec({1, 2}), vec({1})), InvalidArgument);
}

TEST_CASE("cardinal B-splines") {
  CHECK(cardinal_bspline(1, 0.0) == 1.0);
  CHECK(cardinal_bspline(1, 0.25) == 0.75);
  CHECK(cardinal_bspline(1, -1.5) == 0.0);
  CHECK(cardinal_bspline(3, 0.0) == doctest::Approx(2.0 / 3.0));
  CHECK(cardinal_bspline(3, 1.0) == doctest::Approx(1.0 / 6.0));
  CHECK(cardinal_bspline(3, -2.5) == 0.0);
  // Unit integral, midpoint rule.
  for (int degree : {1, 3}) {
    double integral = 0.0;
    const double h = 1e-4;
    for (double x = -3 + h / 2; x < 3; x += h) integral += h * cardinal_bspline(degree, x);
    CHECK(integral == doctest::Approx(1.0).epsilon(1e-7));
  }
  CHECK(kernel_eval(KernelSpec::bspline(1), vec({0.5, 0.25}), vec({0, 0})) == doctest::Approx(0.5 * 0.75));
}

TEST_CASE("kernel spec parsing and validation") {
  CHECK(KernelSpec::parse("gaussian:0.5") == KernelSpec::gaussian(0.5));
  CHECK(KernelSpec::parse("bspline:1") == KernelSpec::bspline(1));
  CHECK(KernelSpec::parse("energy") == KernelSpec::energy());
  CHECK(KernelSpec::parse("linear") == KernelSpec::linear());
  CHECK(KernelSpec::parse(KernelSpec::laplacian(0.25).to_string()) == KernelSpec::laplacian(0.25));
  CHECK_THROWS_AS(KernelSpec::parse("gaussian:-1"), InvalidArgument);
  CHECK_THROWS_AS(KernelSpec::parse("bspline:2"), InvalidArgument);
  CHECK_THROWS_AS(KernelSpec::parse("bspline:5"), InvalidArgument);
  CHECK_THROWS_AS(KernelSpec::parse("cosine"), InvalidArgument);
  CHECK_THROWS_AS(KernelSpec::parse("gaussian:abc"), InvalidArgument);
}

TEST_CASE("embedding inner product examples") {
  const EmpiricalDistribution zero(std::vector<double>{0.0});
  const EmpiricalDistribution one(std::vector<double>{1.0});
  CHECK(embed_inner(KernelSpec::energy(), zero, zero) == 0.0);
  CHECK(embed_inner(KernelSpec::energy(), one, one) == 2.0);
  const EmpiricalDistribution x(Eigen::MatrixXd::Constant(1, 3, 0.7));
  CHECK(embed_inner(KernelSpec::gaussian(1), x, x) == 1.0);
  CHECK_THROWS_AS(embed_inner(KernelSpec::energy(), one, x), InvalidArgument);
}

TEST_CASE("fast energy path examples") {
  CHECK(energy_inner_1d_sorted(EmpiricalDistribution(std::vector<double>{0}),
                               EmpiricalDistribution(std::vector<double>{0})) == 0.0);
  CHECK(energy_inner_1d_sorted(EmpiricalDistribution(std::vector<double>{0, 2}),
                               EmpiricalDistribution(std::vector<double>{1})) == doctest::Approx(1.0));
  // Negative samples exercise the mean-norm terms.
  CHECK(energy_inner_1d_sorted(EmpiricalDistribution(std::vector<double>{-3, -1}),
                               EmpiricalDistribution(std::vector<double>{-2, 4})) ==
        doctest::Approx(oracle::energy_naive({-3, -1}, {-2, 4})));
}

TEST_CASE("fast energy path rejects unsorted input") {
  Eigen::MatrixXd s(3, 1);
  s << 2, 0, 1;
  const auto raw = EmpiricalDistribution::unsorted(s);
  CHECK_FALSE(raw.sorted_1d());
  CHECK_THROWS_AS(energy_inner_1d_sorted(raw, raw), InvalidArgument);
  // The general entry point still works, through the double sum.
  CHECK(embed_inner(KernelSpec::energy(), raw, raw) == doctest::Approx(oracle::energy_naive({2, 0, 1}, {2, 0, 1})));
  CHECK(EmpiricalDistribution(s).sorted_1d());
}

TEST_CASE("fast energy path equals the naive double sum on random pairs") {
  SplitMix64 rng(41);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = draw(rng, 1 + rng.below(800), rng.normal());
    const auto b = draw(rng, 1 + rng.below(500), rng.normal());
    const double naive = oracle::energy_naive(a, b);
    const double fast = energy_inner_1d_sorted(EmpiricalDistribution(a), EmpiricalDistribution(b));
    CHECK(std::abs(fast - naive) <= 1e-9 * (1.0 + std::abs(naive)));
  }
}

TEST_CASE("fast energy path handles ties") {
  const std::vector<double> a{-1, 0, 0, 2, 2, 2};
  const std::vector<double> b{0, 2, 2, 5};
  CHECK(energy_inner_1d_sorted(EmpiricalDistribution(a), EmpiricalDistribution(b)) ==
        doctest::Approx(oracle::energy_naive(a, b)).epsilon(1e-12));
}

TEST_CASE("embedding depends only on the empirical measure") {
  SplitMix64 rng(43);
  for (int trial = 0; trial < 50; ++trial) {
    auto a = draw(rng, 50, 0.0);
    const auto b = draw(rng, 30, 1.0);
    const double before = embed_inner(KernelSpec::energy(), EmpiricalDistribution(a), EmpiricalDistribution(b));
    for (std::size_t i = a.size(); i > 1; --i) std::swap(a[i - 1], a[rng.below(i)]);
    const double after = embed_inner(KernelSpec::energy(), EmpiricalDistribution(a), EmpiricalDistribution(b));
    CHECK(std::abs(before - after) <= 1e-12 * (1.0 + std::abs(before)));

    Eigen::MatrixXd m2(4, 2), p2(4, 2);
    for (Eigen::Index i = 0; i < m2.size(); ++i) m2.data()[i] = rng.normal();
    p2 << m2.row(2), m2.row(0), m2.row(3), m2.row(1);
    const EmpiricalDistribution q(Eigen::MatrixXd::Random(3, 2));
    CHECK(embed_inner(KernelSpec::gaussian(0.7), EmpiricalDistribution(m2), q) ==
          doctest::Approx(embed_inner(KernelSpec::gaussian(0.7), EmpiricalDistribution(p2), q)).epsilon(1e-12));
  }
}

TEST_CASE("squared MMD") {
  const EmpiricalDistribution zero(std::vector<double>{0.0});
  const EmpiricalDistribution one(std::vector<double>{1.0});
  // 0 + 2 - 2 * (0 + 1 - 1), twice the mean distance between the two points.
  CHECK(squared_mmd(KernelSpec::energy(), zero, one) == doctest::Approx(2.0));
  for (double t : {0.1, 0.5, 2.0}) {
    const EmpiricalDistribution tt(std::vector<double>{t});
    CHECK(squared_mmd(KernelSpec::gaussian(1), zero, tt) == doctest::Approx(2.0 - 2.0 * std::exp(-t * t)));
  }
  SplitMix64 rng(47);
  for (int trial = 0; trial < 20; ++trial) {
    const EmpiricalDistribution a(draw(rng, 40, 0.0));
    const EmpiricalDistribution b(draw(rng, 25, 0.5));
    for (const auto& spec : {KernelSpec::energy(), KernelSpec::gaussian(0.3), KernelSpec::laplacian(1.0)}) {
      CHECK(squared_mmd(spec, a, a) == 0.0);
      CHECK(std::abs(squared_mmd(spec, a, b) - squared_mmd(spec, b, a)) <= 1e-12);
      CHECK(squared_mmd(spec, a, b) >= 0.0);
    }
  }
}

TEST_CASE("Gram matrix examples") {
  Eigen::MatrixXd one(1, 2);
  one << 3, 4;
  CHECK(gram_matrix(one, KernelSpec::linear()).entries()(0, 0) == 25.0);
  CHECK(gram_matrix(Eigen::MatrixXd::Identity(2, 2), KernelSpec::linear()).entries() ==
        Eigen::MatrixXd::Identity(2, 2));

  std::vector<EmpiricalDistribution> singles;
  for (double v : {0.0, 1.0, 2.0}) singles.emplace_back(std::vector<double>{v});
  const GramMatrix g = gram_matrix(singles, KernelSpec::energy());
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(g(i, j) == doctest::Approx(oracle::energy_naive({double(i)}, {double(j)})));
}

TEST_CASE("Gram matrix rejects mixed item kinds") {
  std::vector<FeatureItem> items{Eigen::VectorXd::Ones(1), EmpiricalDistribution(std::vector<double>{1.0})};
  CHECK_THROWS_AS(gram_matrix(items, KernelSpec::energy()), InvalidArgument);
  CHECK_THROWS_AS(inner(KernelSpec::energy(), items[0], items[1]), InvalidArgument);
}

TEST_CASE("GramMatrix validates entries") {
  Eigen::MatrixXd m(2, 2);
  m << 1, 0.5, 0.4, 1;
  CHECK_THROWS_AS(GramMatrix{m}, InvalidArgument);
  CHECK_THROWS_AS(GramMatrix{Eigen::MatrixXd::Ones(2, 3)}, InvalidArgument);
  CHECK_THROWS_AS(GramMatrix{Eigen::MatrixXd()}, InvalidArgument);
  m(1, 0) = std::nan("");
  CHECK_THROWS_AS(GramMatrix{m}, InvalidArgument);
  m << 1, 2, 2, 1;
  const GramMatrix indefinite(m);
  CHECK_FALSE(indefinite.is_psd());
  CHECK(indefinite.min_eigenvalue() == doctest::Approx(-1.0));
}

TEST_CASE("Gram matrices are exactly symmetric and PSD for every kernel") {
  SplitMix64 rng(53);
  const std::vector<KernelSpec> specs{KernelSpec::linear(), KernelSpec::gaussian(0.5), KernelSpec::laplacian(0.8),
                                      KernelSpec::bspline(1), KernelSpec::bspline(3), KernelSpec::energy()};
  for (const auto& spec : specs) {
    Eigen::MatrixXd X(120, 3);
    for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
    const GramMatrix g = gram_matrix(X, spec);
    CHECK(g.entries() == g.entries().transpose());
    CHECK(g.is_psd());
    CHECK(g.min_eigenvalue() >= -1e-8 * g.entries().trace());
  }
  std::vector<EmpiricalDistribution> dists;
  for (int i = 0; i < 60; ++i) dists.emplace_back(draw(rng, 5 + rng.below(40), rng.normal()));
  for (const auto& spec : {KernelSpec::energy(), KernelSpec::gaussian(0.2), KernelSpec::bspline(3)}) {
    const GramMatrix g = gram_matrix(dists, spec);
    CHECK(g.entries() == g.entries().transpose());
    CHECK(g.is_psd());
  }
}

TEST_CASE("linear Gram equals explicit dot products; cross and self products agree with it") {
  SplitMix64 rng(59);
  Eigen::MatrixXd X(15, 4);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
  const GramMatrix g = gram_matrix(X, KernelSpec::linear());
  CHECK((g.entries() - X * X.transpose()).cwiseAbs().maxCoeff() < 1e-12);

  std::vector<FeatureItem> items;
  for (Eigen::Index i = 0; i < X.rows(); ++i) items.emplace_back(Eigen::VectorXd(X.row(i).transpose()));
  const auto spec = KernelSpec::gaussian(0.3);
  const GramMatrix gi = gram_matrix(items, spec);
  const Eigen::MatrixXd cross = cross_gram(items, items, spec);
  CHECK((cross - gi.entries()).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((self_inner(items, spec) - gi.entries().diagonal()).cwiseAbs().maxCoeff() < 1e-14);

  const std::vector<Eigen::Index> idx{3, 0, 7};
  const GramMatrix sub = gi.subset(idx);
  CHECK(sub(0, 1) == gi(3, 0));
  CHECK(sub(2, 2) == gi(7, 7));
}
