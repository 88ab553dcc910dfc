// Runs the ten acceptance checks and prints one PASS/FAIL line each.
// Exit status is non-zero when any check fails.

#include "../oracles.hpp"

#include "protoreg/archetypes.hpp"
#include "protoreg/data_io.hpp"
#include "protoreg/gram.hpp"
#include "protoreg/regression.hpp"
#include "protoreg/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

using namespace protoreg;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass;
  std::string detail;
};

char buf[512];

template <typename... Args>
std::string format(const char* f, Args... args) {
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

GramMatrix linear_gram(const Eigen::MatrixXd& X) { return gram_matrix(X, KernelSpec::linear()); }

Eigen::MatrixXd normal_points(SplitMix64& rng, Eigen::Index n, Eigen::Index d) {
  Eigen::MatrixXd X(n, d);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
  return X;
}

bool non_increasing(const std::vector<double>& trace) {
  for (std::size_t t = 1; t < trace.size(); ++t)
    if (trace[t] > trace[t - 1] + 1e-10 * (1.0 + std::abs(trace[t - 1]))) return false;
  return true;
}

// 1. Iris classification with two predictor blocks.
Outcome iris() {
  constexpr double kMeanAccuracy = 0.93, kBestAccuracy = 0.97, kTauPetal = 0.9, kSeconds = 60.0;
  const auto t0 = Clock::now();
  const std::vector<ColumnBlock> schema{ColumnBlock::parse("sepal=sepal_length,sepal_width"),
                                        ColumnBlock::parse("petal=petal_length,petal_width"),
                                        ColumnBlock::parse("species:onehot=species")};
  const auto blocks = load_table(PROTOREG_IRIS_CSV, schema);
  const Dataset data{{blocks[0], blocks[1]}, blocks[2]};
  double total = 0.0, best = 0.0, min_tau = 1.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto [tr, te] = stratified_split(data.response.labels(), 0.7, seed);
    const Dataset train = data.select(tr), test = data.select(te);
    const std::vector<GramMatrix> gx{linear_gram(train.predictors[0].values),
                                     linear_gram(train.predictors[1].values)};
    const std::vector<Eigen::Index> k{11, 11};
    const std::vector<double> lambda{0.1, 0.1};
    FitOptions opts;
    opts.seed = seed;
    const MultipleRegressionModel m = fit_multiple(gx, linear_gram(train.response.values), k, lambda, opts);
    int correct = 0;
    const auto truth = test.response.labels();
    for (Eigen::Index r = 0; r < test.rows(); ++r) {
      std::vector<Eigen::VectorXd> g0;
      std::vector<double> g00;
      for (std::size_t l = 0; l < 2; ++l) {
        const Eigen::VectorXd x = test.predictors[l].values.row(r).transpose();
        g0.push_back(train.predictors[l].values * x);
        g00.push_back(x.squaredNorm());
      }
      if (classify(predict_multiple(m, g0, g00), train.response.values) == truth[static_cast<std::size_t>(r)])
        ++correct;
    }
    const double acc = static_cast<double>(correct) / static_cast<double>(test.rows());
    total += acc;
    best = std::max(best, acc);
    min_tau = std::min(min_tau, m.tau[1]);
  }
  const double mean = total / 10.0, elapsed = seconds_since(t0);
  return {mean >= kMeanAccuracy && best >= kBestAccuracy && min_tau >= kTauPetal && elapsed < kSeconds,
          format("mean acc %.4f (>= %.2f), best %.4f (>= %.2f), min tau_petal %.7f (>= %.1f), %.1fs (< %.0fs)", mean,
                 kMeanAccuracy, best, kBestAccuracy, min_tau, kTauPetal, elapsed, kSeconds)};
}

// 2. Noisy sin(x) - x^3 regression.
Outcome toy_regression() {
  constexpr double kRmse = 0.15, kSeconds = 5.0;
  const auto t0 = Clock::now();
  std::vector<double> rmses;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SplitMix64 rng(1000 + seed);
    Eigen::MatrixXd X(100, 1), Y(100, 1);
    for (Eigen::Index i = 0; i < 100; ++i) {
      X(i, 0) = rng.uniform();
      Y(i, 0) = std::sin(X(i, 0)) - std::pow(X(i, 0), 3) + 0.1 * rng.normal();
    }
    FitOptions opts;
    opts.seed = seed;
    const SimpleRegressionModel m = fit_simple(linear_gram(X), linear_gram(Y), 6, 0.01, opts);
    double sq = 0.0;
    for (int g = 0; g < 200; ++g) {
      const double x = g / 199.0;
      const double fhat = predict_simple(m, X.col(0) * x, x * x).values().dot(Y.col(0));
      const double truth = std::sin(x) - x * x * x;
      sq += (fhat - truth) * (fhat - truth);
    }
    rmses.push_back(std::sqrt(sq / 200.0));
  }
  std::sort(rmses.begin(), rmses.end());
  const double median = 0.5 * (rmses[4] + rmses[5]), elapsed = seconds_since(t0);
  return {median <= kRmse && elapsed < kSeconds,
          format("median RMSE %.4f (<= %.2f), worst %.4f, %.2fs (< %.0fs)", median, kRmse, rmses.back(), elapsed,
                 kSeconds)};
}

// 3. Fast 1D energy kernel: agreement and scaling.
Outcome fast_energy() {
  constexpr double kRelTol = 1e-9, kMaxRatio = 15.0, kSeconds = 30.0;
  const auto t0 = Clock::now();
  SplitMix64 rng(7);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> a(1 + rng.below(1000)), b(1 + rng.below(1000));
    const double shift = rng.normal();
    for (auto& x : a) x = 2.0 * rng.normal();
    for (auto& x : b) x = shift + rng.normal();
    const double naive = oracle::energy_naive(a, b);
    const double fast = energy_inner_1d_sorted(EmpiricalDistribution(a), EmpiricalDistribution(b));
    worst = std::max(worst, std::abs(fast - naive) / (1.0 + std::abs(naive)));
  }
  auto per_call = [&](std::size_t n, int reps) {
    std::vector<double> a(n), b(n);
    for (auto& x : a) x = rng.normal();
    for (auto& x : b) x = rng.normal() + 0.3;
    const EmpiricalDistribution da(a), db(b);
    double sink = 0.0, best = 1e300;
    for (int round = 0; round < 5; ++round) {
      const auto t = Clock::now();
      for (int r = 0; r < reps; ++r) sink += energy_inner_1d_sorted(da, db);
      best = std::min(best, seconds_since(t) / reps);
    }
    if (sink == 42.0) std::puts("");
    return best;
  };
  const double small = per_call(10000, 200), large = per_call(100000, 20);
  const double ratio = large / small, elapsed = seconds_since(t0);
  return {worst <= kRelTol && ratio <= kMaxRatio && elapsed < kSeconds,
          format("max rel error %.2e (<= %.0e), time ratio n=1e5/1e4 %.2f (<= %.0f), %.1fs (< %.0fs)", worst, kRelTol,
                 ratio, kMaxRatio, elapsed, kSeconds)};
}

Eigen::MatrixXd three_blobs(SplitMix64& rng) {
  Eigen::MatrixXd X(90, 2);
  const double centers[3][2] = {{0, 0}, {10, 0}, {5, 8}};
  for (Eigen::Index i = 0; i < 90; ++i)
    for (int c = 0; c < 2; ++c) X(i, c) = centers[i / 30][c] + rng.normal();
  return X;
}

// 4. Large-penalty fits behave like k-means.
Outcome kmeans_limit() {
  constexpr double kBarycenterTol = 1e-6, kOneHotTol = 1e-9;
  SplitMix64 rng(4);
  const Eigen::MatrixXd X = three_blobs(rng);
  const Eigen::RowVectorXd centroid = X.colwise().mean();
  const double radius = (X.rowwise() - centroid).rowwise().norm().maxCoeff();
  const GramMatrix G = linear_gram(X);
  FitOptions opts;
  opts.tol = 1e-14;
  opts.max_outer_iter = 2000;
  opts.qp.tol = 1e-15;
  opts.qp.max_iter = 100000;
  const PrototypeModel m = fit_prototypal(G, 3, 1e6, opts);

  const Eigen::MatrixXd D = prototype_sq_distances(G, m.B);
  std::vector<Eigen::Index> assign(90);
  double onehot_err = 0.0;
  for (Eigen::Index i = 0; i < 90; ++i) {
    Eigen::Index nearest = 0;
    D.col(i).minCoeff(&nearest);
    assign[static_cast<std::size_t>(i)] = nearest;
    onehot_err = std::max(onehot_err, 1.0 - m.A(nearest, i));
  }
  const Eigen::MatrixXd U = m.B.transpose() * X;
  double bary_err = 0.0;
  for (Eigen::Index j = 0; j < 3; ++j) {
    Eigen::RowVector2d sum = Eigen::RowVector2d::Zero();
    int count = 0;
    for (Eigen::Index i = 0; i < 90; ++i)
      if (assign[static_cast<std::size_t>(i)] == j) sum += X.row(i), ++count;
    bary_err = count == 0 ? 1e300 : std::max(bary_err, (U.row(j) - sum / count).norm() / radius);
  }
  Eigen::MatrixXd init(3, 2);
  for (Eigen::Index j = 0; j < 3; ++j) init.row(j) = X.row(m.initial_points[static_cast<std::size_t>(j)]);
  const bool lloyd_match = oracle::lloyd(X, init).assignment == assign;
  return {onehot_err <= kOneHotTol && bary_err <= kBarycenterTol && lloyd_match,
          format("one-hot deficit %.1e (<= %.0e), barycenter error / radius %.1e (<= %.0e), Lloyd match %s",
                 onehot_err, kOneHotTol, bary_err, kBarycenterTol, lloyd_match ? "yes" : "no")};
}

// 5. Zero penalty reduces to archetypal analysis.
Outcome lambda_zero() {
  SplitMix64 rng(5);
  int equal = 0;
  for (int inst = 0; inst < 20; ++inst) {
    const Eigen::Index n = 10 + static_cast<Eigen::Index>(rng.below(40));
    const Eigen::Index k = 1 + static_cast<Eigen::Index>(rng.below(6));
    const GramMatrix G = linear_gram(normal_points(rng, n, 1 + static_cast<Eigen::Index>(rng.below(3))));
    FitOptions opts;
    opts.seed = static_cast<std::uint64_t>(inst);
    if (fit_archetypal(G, k, opts).objective_trace == fit_prototypal(G, k, 0.0, opts).objective_trace) ++equal;
  }
  return {equal == 20, format("%d / 20 traces identical", equal)};
}

// 6. Non-increasing objective traces across a hyperparameter grid.
Outcome monotonicity() {
  SplitMix64 rng(6);
  int ok = 0, total = 0;
  for (double lambda : {0.0, 0.05, 1.0, 1e6}) {
    for (Eigen::Index k = 1; k <= 8; ++k) {
      const GramMatrix G = linear_gram(normal_points(rng, 60, 2));
      FitOptions opts;
      opts.seed = static_cast<std::uint64_t>(total);
      ++total;
      if (non_increasing(fit_prototypal(G, k, lambda, opts).objective_trace)) ++ok;
    }
  }
  return {ok == total, format("%d / %d traces non-increasing (slack 1e-10)", ok, total)};
}

// 7. Simplex QP against grid search.
Outcome qp_oracle() {
  constexpr double kTol = 1e-6;
  SplitMix64 rng(7);
  double worst = -1e300;
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.below(3));
    Eigen::MatrixXd M(d, d);
    for (Eigen::Index i = 0; i < M.size(); ++i) M.data()[i] = rng.normal();
    QuadraticSubproblem p;
    p.Q = M * M.transpose();
    p.q = Eigen::VectorXd(d);
    for (Eigen::Index i = 0; i < d; ++i) p.q[i] = rng.normal();
    const double solver = solve_simplex_qp_detailed(p).objective;
    worst = std::max(worst, solver - oracle::grid_min(p.Q, p.q, 1e-3));
  }
  return {worst <= kTol, format("max (solver - grid) objective %.2e (<= %.0e)", worst, kTol)};
}

// 8. Prototypes move less than archetypes when an outlier is added.
Outcome outlier() {
  int wins = 0;
  double worst_margin = 1e300;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SplitMix64 rng(800 + seed);
    const Eigen::MatrixXd blob = normal_points(rng, 60, 2);
    const double radius = blob.rowwise().norm().maxCoeff();
    const double angle = 2.0 * M_PI * rng.uniform();
    Eigen::MatrixXd with(61, 2);
    with.topRows(60) = blob;
    with.row(60) << 5.0 * radius * std::cos(angle), 5.0 * radius * std::sin(angle);
    FitOptions opts;
    opts.seed = seed;
    auto displacement = [&](double lambda) {
      const PrototypeModel clean = fit_prototypal(linear_gram(blob), 4, lambda, opts);
      const PrototypeModel dirty = fit_prototypal(linear_gram(with), 4, lambda, opts);
      return oracle::matched_max_distance(clean.B.transpose() * blob, dirty.B.transpose() * with);
    };
    const double aa = displacement(0.0), pa = displacement(0.05);
    if (pa < aa) ++wins;
    worst_margin = std::min(worst_margin, aa - pa);
  }
  return {wins == 10, format("%d / 10 seeds with smaller prototype displacement, min margin %.3f", wins, worst_margin)};
}

// 9. Classifying 1D sample sets by their number of mixture components.
Outcome distributions() {
  constexpr double kAccuracy = 0.9, kSeconds = 60.0;
  const auto t0 = Clock::now();
  SplitMix64 rng(9);
  std::vector<EmpiricalDistribution> sets;
  std::vector<Eigen::Index> labels;
  for (int i = 0; i < 150; ++i) {
    const int components = 1 + i % 3;
    const double center = 0.5 * rng.normal();
    std::vector<double> s(100);
    for (auto& x : s) {
      const auto c = static_cast<double>(rng.below(static_cast<std::uint64_t>(components)));
      const double mean = components == 1 ? 0.0 : -3.0 + 6.0 * c / (components - 1);
      x = center + mean + 0.5 * rng.normal();
    }
    sets.emplace_back(s);
    labels.push_back(components - 1);
  }
  const auto [tr, te] = stratified_split(labels, 0.8, 9);
  std::vector<EmpiricalDistribution> train, test;
  Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(tr.size()), 3);
  for (std::size_t r = 0; r < tr.size(); ++r) {
    train.push_back(sets[static_cast<std::size_t>(tr[r])]);
    Y(static_cast<Eigen::Index>(r), labels[static_cast<std::size_t>(tr[r])]) = 1.0;
  }
  for (Eigen::Index i : te) test.push_back(sets[static_cast<std::size_t>(i)]);
  const KernelSpec energy = KernelSpec::energy();
  const SimpleRegressionModel m = fit_simple(gram_matrix(train, energy), linear_gram(Y), 15, 1.0);
  int correct = 0;
  for (std::size_t r = 0; r < test.size(); ++r) {
    Eigen::VectorXd g0(static_cast<Eigen::Index>(train.size()));
    for (std::size_t i = 0; i < train.size(); ++i) g0[static_cast<Eigen::Index>(i)] = embed_inner(energy, test[r], train[i]);
    const auto w = predict_simple(m, g0, embed_inner(energy, test[r], test[r]));
    if (classify(w, Y) == labels[static_cast<std::size_t>(te[r])]) ++correct;
  }
  const double acc = static_cast<double>(correct) / static_cast<double>(test.size()), elapsed = seconds_since(t0);
  return {acc >= kAccuracy && elapsed < kSeconds && tr.size() == 120 && te.size() == 30,
          format("%zu train / %zu test, accuracy %.4f (>= %.1f), %.1fs (< %.0fs)", tr.size(), te.size(), acc,
                 kAccuracy, elapsed, kSeconds)};
}

// 10. Gram-space predictions against explicit coordinates.
Outcome gram_vs_coordinates() {
  constexpr double kTol = 1e-8;
  SplitMix64 rng(10);
  const SolverSettings exact{1e-15, 200000};
  double worst = 0.0;
  for (int inst = 0; inst < 10; ++inst) {
    const Eigen::Index n = 12 + static_cast<Eigen::Index>(rng.below(9));
    const Eigen::MatrixXd X1 = normal_points(rng, n, 3), X2 = normal_points(rng, n, 2), Y = normal_points(rng, n, 2);
    const std::vector<double> lambda{0.2, 0.5};
    FitOptions opts;
    opts.seed = static_cast<std::uint64_t>(inst);

    // Simple regression (one predictor) and multiple regression (two predictors).
    const SimpleRegressionModel s = fit_simple(linear_gram(X1), linear_gram(Y), 3, lambda[0], opts);
    const std::vector<GramMatrix> gx{linear_gram(X1), linear_gram(X2)};
    const std::vector<Eigen::Index> k{3, 2};
    const MultipleRegressionModel m = fit_multiple(gx, linear_gram(Y), k, lambda, opts);

    for (int q = 0; q < 5; ++q) {
      const Eigen::VectorXd a = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal());
      const Eigen::VectorXd b = Eigen::Vector2d(rng.normal(), rng.normal());
      const Eigen::VectorXd simple_gram = Y.transpose() * predict_simple(s, X1 * a, a.squaredNorm(), std::nullopt, exact).values();
      const Eigen::VectorXd simple_dense =
          oracle::dense_predict({X1}, {s.x_model.B}, {s.C}, {lambda[0]}, Eigen::VectorXd::Ones(1), Y, {a});
      worst = std::max(worst, (simple_gram - simple_dense).cwiseAbs().maxCoeff());

      const std::vector<Eigen::VectorXd> g0{X1 * a, X2 * b};
      const std::vector<double> g00{a.squaredNorm(), b.squaredNorm()};
      const Eigen::VectorXd multi_gram = Y.transpose() * predict_multiple(m, g0, g00, exact).values();
      const Eigen::VectorXd multi_dense = oracle::dense_predict({X1, X2}, {m.per_predictor[0].B, m.per_predictor[1].B},
                                                                m.C, lambda, m.tau.values(), Y, {a, b});
      worst = std::max(worst, (multi_gram - multi_dense).cwiseAbs().maxCoeff());
    }
  }
  return {worst <= kTol, format("max |gram - dense| %.2e (<= %.0e) over 100 predictions", worst, kTol)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> checks{
      {"iris", iris},
      {"toy-regression", toy_regression},
      {"fast-energy-kernel", fast_energy},
      {"kmeans-limit", kmeans_limit},
      {"lambda-zero-equivalence", lambda_zero},
      {"monotonicity", monotonicity},
      {"simplex-qp-oracle", qp_oracle},
      {"outlier-robustness", outlier},
      {"distribution-classification", distributions},
      {"gram-vs-coordinates", gram_vs_coordinates},
  };
  int failed = 0;
  for (std::size_t i = 0; i < checks.size(); ++i) {
    Outcome o;
    try {
      o = checks[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("%s %2zu %-28s %s\n", o.pass ? "PASS" : "FAIL", i + 1, checks[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
