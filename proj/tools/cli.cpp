#include "cli.hpp"

#include "protoreg/archetypes.hpp"
#include "protoreg/data_io.hpp"
#include "protoreg/error.hpp"
#include "protoreg/gram.hpp"
#include "protoreg/regression.hpp"
#include "protoreg/rng.hpp"
#include "svg.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>

namespace protoreg::cli {

namespace {

using nlohmann::json;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string short_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Block descriptions and data loading

BlockDescriptor parse_block(const std::string& text) {
  BlockDescriptor d;
  const auto at = text.find('@');
  if (at != std::string::npos && text.find('=') == std::string::npos) {
    d.name = text.substr(0, at);
    d.samples_path = text.substr(at + 1);
    d.kind = BlockKind::distribution;
    if (d.name.empty() || d.samples_path.empty()) throw ConfigError("bad block '" + text + "': use name@samples.csv");
    d.kernel = KernelSpec::energy();
    return d;
  }
  try {
    const ColumnBlock c = ColumnBlock::parse(text);
    d.name = c.name;
    d.kind = c.kind;
    d.columns = c.columns;
    d.kernel = KernelSpec::linear();
    return d;
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
}

std::vector<std::string> read_header(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      const auto b = cell.find_first_not_of(" \t\r");
      const auto e = cell.find_last_not_of(" \t\r");
      cells.push_back(b == std::string::npos ? std::string{} : cell.substr(b, e - b + 1));
    }
    return cells;
  }
  throw DataError("'" + path + "' is empty");
}

struct Blocks {
  std::vector<FeatureBlock> predictors;
  std::optional<FeatureBlock> response;
  Eigen::Index rows = 0;
};

/// Loads the named blocks. Table blocks come from `table`; distribution blocks
/// from their sample files (or `overrides`), aligned to table rows through a
/// `group_id` column when the table has one.
Blocks load_blocks(const std::vector<BlockDescriptor>& predictors, const std::optional<BlockDescriptor>& response,
                   const std::string& table, const std::map<std::string, std::string>& overrides,
                   bool fixed_categories) {
  try {
    std::vector<ColumnBlock> schema;
    auto add_column_block = [&](const BlockDescriptor& d) {
      if (d.kind == BlockKind::distribution) return;
      ColumnBlock c{d.name, d.kind, d.columns, fixed_categories ? d.categories : std::vector<std::string>{}};
      schema.push_back(std::move(c));
    };
    for (const auto& d : predictors) add_column_block(d);
    if (response) add_column_block(*response);

    std::map<std::string, FeatureBlock> loaded;
    std::optional<std::vector<std::string>> group_ids;
    if (!table.empty()) {
      const auto header = read_header(table);
      if (std::find(header.begin(), header.end(), "group_id") != header.end())
        schema.push_back(ColumnBlock{"__group_id", BlockKind::onehot, {"group_id"}, {}});
      if (!schema.empty()) {
        for (auto& block : load_table(table, schema)) {
          if (block.name == "__group_id") {
            group_ids.emplace();
            for (Eigen::Index label : block.labels()) group_ids->push_back(block.categories[static_cast<std::size_t>(label)]);
          } else {
            std::string name = block.name;
            loaded.emplace(std::move(name), std::move(block));
          }
        }
      }
    } else if (!schema.empty()) {
      throw ConfigError("--data is required for table columns");
    }

    auto distribution_block = [&](const BlockDescriptor& d) {
      const auto it = overrides.find(d.name);
      const std::string path = it != overrides.end() ? it->second : d.samples_path;
      FeatureBlock block = load_grouped_samples(path, d.name);
      if (!group_ids) return block;
      std::map<std::string, Eigen::Index> position;
      for (std::size_t g = 0; g < block.group_ids.size(); ++g)
        position.emplace(block.group_ids[g], static_cast<Eigen::Index>(g));
      std::vector<Eigen::Index> order;
      for (const auto& id : *group_ids) {
        const auto found = position.find(id);
        if (found == position.end())
          throw DataError("group '" + id + "' listed in '" + table + "' has no samples in '" + path + "'");
        order.push_back(found->second);
      }
      return block.select(order);
    };

    Blocks out;
    auto fetch = [&](const BlockDescriptor& d) {
      return d.kind == BlockKind::distribution ? distribution_block(d) : loaded.at(d.name);
    };
    for (const auto& d : predictors) out.predictors.push_back(fetch(d));
    if (response) out.response = fetch(*response);

    out.rows = out.predictors.empty() ? (out.response ? out.response->rows() : 0) : out.predictors.front().rows();
    for (const auto& b : out.predictors)
      if (b.rows() != out.rows) throw DataError("block '" + b.name + "' has a different number of rows");
    if (out.response && out.response->rows() != out.rows)
      throw DataError("response block '" + out.response->name + "' has a different number of rows");
    for (const auto& b : out.predictors) b.validate();
    if (out.response) out.response->validate();
    return out;
  } catch (const ParseError& e) {
    throw DataError(e.what());
  } catch (const InvalidArgument& e) {
    throw DataError(e.what());
  }
}

Dataset as_dataset(const Blocks& b) {
  Dataset d;
  d.predictors = b.predictors;
  if (b.response) d.response = *b.response;
  else if (!b.predictors.empty()) d.response = b.predictors.front();
  return d;
}

std::vector<Eigen::Index> all_rows(Eigen::Index n) {
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), Eigen::Index{0});
  return rows;
}

// ---------------------------------------------------------------------------
// Fitting

struct FitArgs {
  std::string data;
  std::vector<std::string> predictors;
  std::string response;
  std::vector<std::string> kernels;
  std::string response_kernel;
  std::vector<long long> k;
  std::vector<double> lambda;
  std::uint64_t seed = 0;
  double tol = 1e-7;
  int max_iter = 500;
  double qp_tol = 1e-9;
  int qp_max_iter = 10000;
  int max_alternations = 100;
  double train_frac = 0.0;
  bool archetypal = false;
  std::string out;
  std::string report_out;
  std::string report_format = "csv";

  FitOptions options() const {
    FitOptions o;
    o.seed = seed;
    o.tol = tol;
    o.max_outer_iter = max_iter;
    o.qp.tol = qp_tol;
    o.qp.max_iter = qp_max_iter;
    o.max_alternations = max_alternations;
    return o;
  }
};

template <typename T>
std::vector<T> broadcast(const std::vector<T>& values, std::size_t m, const std::string& flag, T fallback) {
  if (values.empty()) return std::vector<T>(m, fallback);
  if (values.size() == 1) return std::vector<T>(m, values.front());
  if (values.size() != m)
    throw ConfigError(flag + " must be given once or once per predictor (" + std::to_string(m) + ")");
  return values;
}

struct FitPlan {
  std::vector<BlockDescriptor> predictors;
  std::optional<BlockDescriptor> response;
  std::vector<Eigen::Index> k;
  std::vector<double> lambda;
  std::string kind;
};

FitPlan plan_fit(const FitArgs& a) {
  FitPlan plan;
  if (a.predictors.empty()) throw ConfigError("at least one --predictor is required");
  for (const auto& p : a.predictors) plan.predictors.push_back(parse_block(p));
  if (!a.response.empty()) plan.response = parse_block(a.response);
  const std::size_t m = plan.predictors.size();

  try {
    const auto kernels = broadcast<std::string>(a.kernels, m, "--kernel", "");
    for (std::size_t l = 0; l < m; ++l)
      if (!kernels[l].empty()) plan.predictors[l].kernel = KernelSpec::parse(kernels[l]);
    if (plan.response && !a.response_kernel.empty()) plan.response->kernel = KernelSpec::parse(a.response_kernel);
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }

  if (a.k.empty()) throw ConfigError("--k is required");
  for (long long k : broadcast<long long>(a.k, m, "--k", 0)) {
    if (k < 1) throw ConfigError("--k must be at least 1");
    plan.k.push_back(static_cast<Eigen::Index>(k));
  }
  plan.lambda = broadcast<double>(a.lambda, m, "--lambda", 0.0);
  for (double l : plan.lambda)
    if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("--lambda must be finite and >= 0");
  if (a.archetypal)
    for (double& l : plan.lambda) l = 0.0;

  if (!plan.response) {
    if (m != 1) throw ConfigError("prototypal/archetypal fits take exactly one predictor (or add --response)");
    plan.kind = a.archetypal ? "archetypal" : "prototypal";
  } else {
    plan.kind = m == 1 ? "simple_regression" : "multiple_regression";
  }
  if (a.train_frac != 0.0 && !(a.train_frac > 0.0 && a.train_frac < 1.0))
    throw ConfigError("--train-frac must lie strictly between 0 and 1");
  try {
    a.options().validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  return plan;
}

GramMatrix block_gram(const FeatureBlock& block, const KernelSpec& kernel) {
  if (block.kind == BlockKind::distribution) return gram_matrix(block.distributions, kernel);
  return gram_matrix(block.values, kernel);
}

/// Fits on `train` and fills the model-specific fields of a ModelFile.
ModelFile fit_model(const FitPlan& plan, const Blocks& train, const FitOptions& opts) {
  for (std::size_t l = 0; l < plan.k.size(); ++l)
    if (plan.k[l] > train.rows)
      throw ConfigError("k = " + std::to_string(plan.k[l]) + " exceeds the number of training rows (" +
                        std::to_string(train.rows) + ")");

  ModelFile file;
  file.kind = plan.kind;
  file.predictors = plan.predictors;
  file.response = plan.response;
  for (std::size_t l = 0; l < file.predictors.size(); ++l)
    file.predictors[l].categories = train.predictors[l].categories;
  if (file.response) file.response->categories = train.response->categories;
  file.seed = opts.seed;

  std::vector<GramMatrix> grams;
  for (std::size_t l = 0; l < plan.predictors.size(); ++l)
    grams.push_back(block_gram(train.predictors[l], plan.predictors[l].kernel));

  if (!plan.response) {
    file.prototypes.push_back(fit_prototypal(grams.front(), plan.k.front(), plan.lambda.front(), opts));
    file.tau = Eigen::VectorXd::Ones(1);
    return file;
  }
  const GramMatrix gy = block_gram(*train.response, plan.response->kernel);
  MultipleRegressionModel model = fit_multiple(grams, gy, plan.k, plan.lambda, opts);
  file.prototypes = std::move(model.per_predictor);
  file.C = std::move(model.C);
  file.tau = model.tau.values();
  file.fit_trace = std::move(model.fit_trace);
  return file;
}

std::string fit_report(const ModelFile& m, const std::string& format) {
  std::ostringstream os;
  const bool csv = format == "csv";
  auto row_of = [&](Eigen::Index i) { return m.train_rows[static_cast<std::size_t>(i)]; };
  if (csv) os << "section,block,index,key,value\n";
  else os << "model " << m.kind << ", " << m.fingerprint.rows << " training rows\n";
  for (std::size_t l = 0; l < m.prototypes.size(); ++l) {
    const PrototypeModel& p = m.prototypes[l];
    const std::string& name = m.predictors[l].name;
    if (!csv) {
      os << "\npredictor " << name << ": k=" << p.k << " lambda=" << short_num(p.lambda)
         << " kernel=" << m.predictors[l].kernel.to_string() << " outer_iterations=" << p.objective_trace.size()
         << " objective=" << num(p.objective_trace.empty() ? 0.0 : p.objective_trace.back()) << "\n";
      os << "  objective trace:";
      for (double f : p.objective_trace) os << ' ' << short_num(f);
      os << "\n";
    } else {
      for (std::size_t t = 0; t < p.objective_trace.size(); ++t)
        os << "objective," << name << "," << t << ",objective," << num(p.objective_trace[t]) << "\n";
    }
    for (Eigen::Index j = 0; j < p.k; ++j) {
      std::vector<Eigen::Index> order = all_rows(p.n);
      std::stable_sort(order.begin(), order.end(), [&](Eigen::Index x, Eigen::Index y) { return p.B(x, j) > p.B(y, j); });
      if (!csv) os << "  prototype " << j << ":";
      for (std::size_t r = 0; r < 5 && r < order.size(); ++r) {
        const double w = p.B(order[r], j);
        if (w <= 0.0) break;
        if (csv) os << "mixing," << name << "," << j << ",row " << row_of(order[r]) << "," << num(w) << "\n";
        else os << " row " << row_of(order[r]) << " (" << short_num(w) << ")";
      }
      if (!csv) os << "\n";
    }
  }
  if (m.is_regression()) {
    if (csv) {
      for (std::size_t t = 0; t < m.fit_trace.size(); ++t)
        os << "response_objective," << m.response->name << "," << t << ",objective," << num(m.fit_trace[t]) << "\n";
      for (std::size_t l = 0; l < m.predictors.size(); ++l)
        os << "tau," << m.predictors[l].name << "," << l << ",tau," << num(m.tau[static_cast<Eigen::Index>(l)]) << "\n";
    } else {
      os << "\nresponse " << m.response->name << ": alternations=" << m.fit_trace.size()
         << " objective=" << num(m.fit_trace.empty() ? 0.0 : m.fit_trace.back()) << "\n";
      os << "tau:";
      for (std::size_t l = 0; l < m.predictors.size(); ++l)
        os << ' ' << m.predictors[l].name << '=' << short_num(m.tau[static_cast<Eigen::Index>(l)]);
      os << "\n";
    }
  }
  return os.str();
}

Blocks select_rows(const Blocks& b, std::span<const Eigen::Index> rows) {
  Blocks out;
  for (const auto& p : b.predictors) out.predictors.push_back(p.select(rows));
  if (b.response) out.response = b.response->select(rows);
  out.rows = static_cast<Eigen::Index>(rows.size());
  return out;
}

std::pair<std::vector<Eigen::Index>, std::vector<Eigen::Index>> split_rows(const Blocks& b, double frac,
                                                                           std::uint64_t seed) {
  if (frac == 0.0) return {all_rows(b.rows), {}};
  std::vector<Eigen::Index> labels(static_cast<std::size_t>(b.rows), 0);
  if (b.response && b.response->kind == BlockKind::onehot) labels = b.response->labels();
  try {
    return stratified_split(labels, frac, seed);
  } catch (const InvalidArgument& e) {
    throw DataError(e.what());
  }
}

int cmd_fit(const FitArgs& a, std::ostream& out, std::ostream& err) {
  const FitPlan plan = plan_fit(a);
  if (a.out.empty()) throw ConfigError("--out is required");
  const Blocks data = load_blocks(plan.predictors, plan.response, a.data, {}, false);
  auto [train_rows, test_rows] = split_rows(data, a.train_frac, a.seed);
  const Blocks train = select_rows(data, train_rows);

  ModelFile file = fit_model(plan, train, a.options());
  file.train_rows = std::move(train_rows);
  file.test_rows = std::move(test_rows);
  file.fingerprint = fingerprint(as_dataset(train));
  save_model(a.out, file);

  const std::string report = fit_report(file, a.report_format);
  if (a.report_out.empty()) out << report;
  else write_file_atomic(a.report_out, report);
  (void)err;
  return kOk;
}

// ---------------------------------------------------------------------------
// Prediction

struct QueryArgs {
  std::string model;
  std::string train_data;
  std::string data;
  std::vector<std::string> samples;
  std::string subset = "all";
  std::string out;
  double encode_lambda = -1.0;
};

std::map<std::string, std::string> parse_overrides(const std::vector<std::string>& samples) {
  std::map<std::string, std::string> out;
  for (const auto& s : samples) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == s.size())
      throw ConfigError("--samples expects name=path, got '" + s + "'");
    out[s.substr(0, eq)] = s.substr(eq + 1);
  }
  return out;
}

struct Prepared {
  ModelFile model;
  Blocks train;
  Blocks query;
  std::vector<Eigen::Index> query_rows;  ///< rows of the query file used
};

Prepared prepare(const QueryArgs& a, bool need_response, std::ostream& err) {
  if (a.model.empty()) throw ConfigError("--model is required");
  Prepared p;
  try {
    p.model = load_model(a.model);
  } catch (const ParseError& e) {
    throw DataError(e.what());
  }
  const std::string train_table = a.train_data.empty() ? a.data : a.train_data;
  const Blocks full_train = load_blocks(p.model.predictors, p.model.response, train_table, {}, true);
  for (Eigen::Index r : p.model.train_rows)
    if (r < 0 || r >= full_train.rows) throw DataError("training data has fewer rows than the model was fitted on");
  p.train = select_rows(full_train, p.model.train_rows);
  if (fingerprint(as_dataset(p.train)) != p.model.fingerprint)
    err << "warning: training data fingerprint differs from the one recorded in the model; predicting anyway\n";

  std::optional<BlockDescriptor> response;
  if (need_response) {
    if (!p.model.response) throw ConfigError("this model has no response to evaluate against");
    response = p.model.response;
  }
  const Blocks query = load_blocks(p.model.predictors, response, a.data.empty() ? train_table : a.data,
                                   parse_overrides(a.samples), true);
  if (a.subset == "all") p.query_rows = all_rows(query.rows);
  else if (a.subset == "train") p.query_rows = p.model.train_rows;
  else if (a.subset == "test") p.query_rows = p.model.test_rows;
  else throw ConfigError("--subset must be all, train or test");
  for (Eigen::Index r : p.query_rows)
    if (r >= query.rows) throw DataError("query data has fewer rows than the model's split");
  p.query = select_rows(query, p.query_rows);
  return p;
}

struct Predictions {
  /// Column r: response mixture weights (regression) or barycentric coordinates (analysis).
  Eigen::MatrixXd weights;
};

Predictions predict_all(const ModelFile& model, const Blocks& train, const Blocks& query,
                        std::optional<double> encode_lambda) {
  const std::size_t m = model.predictors.size();
  std::vector<Eigen::MatrixXd> cross(m);
  std::vector<Eigen::VectorXd> self(m);
  for (std::size_t l = 0; l < m; ++l) {
    const auto q_items = query.predictors[l].items();
    const auto t_items = train.predictors[l].items();
    cross[l] = cross_gram(q_items, t_items, model.predictors[l].kernel);
    self[l] = self_inner(q_items, model.predictors[l].kernel);
  }

  Predictions out;
  if (!model.is_regression()) {
    const PrototypeModel& p = model.prototypes.front();
    out.weights.resize(p.k, query.rows);
    for (Eigen::Index r = 0; r < query.rows; ++r)
      out.weights.col(r) = encode(p, cross[0].row(r).transpose(), self[0][r], encode_lambda).values();
    return out;
  }

  MultipleRegressionModel reg = model.regression();
  if (encode_lambda)
    for (auto& p : reg.per_predictor) p.lambda = *encode_lambda;
  out.weights.resize(train.rows, query.rows);
  for (Eigen::Index r = 0; r < query.rows; ++r) {
    std::vector<Eigen::VectorXd> g0;
    std::vector<double> g00;
    for (std::size_t l = 0; l < m; ++l) {
      g0.emplace_back(cross[l].row(r).transpose());
      g00.push_back(self[l][r]);
    }
    out.weights.col(r) = predict_multiple(reg, g0, g00).values();
  }
  return out;
}

std::optional<double> encode_override(const QueryArgs& a) {
  if (a.encode_lambda < 0.0) return std::nullopt;
  return a.encode_lambda;
}

std::string predictions_csv(const ModelFile& model, const Blocks& train, const Predictions& pred,
                            std::span<const Eigen::Index> rows) {
  std::ostringstream os;
  const Eigen::MatrixXd& W = pred.weights;
  if (!model.is_regression()) {
    os << "row";
    for (Eigen::Index j = 0; j < W.rows(); ++j) os << ",a" << j;
    os << "\n";
    for (Eigen::Index r = 0; r < W.cols(); ++r) {
      os << rows[static_cast<std::size_t>(r)];
      for (Eigen::Index j = 0; j < W.rows(); ++j) os << ',' << num(W(j, r));
      os << "\n";
    }
    return os.str();
  }
  const FeatureBlock& y = *train.response;
  if (y.kind == BlockKind::onehot) {
    os << "row";
    for (const auto& c : y.categories) os << ",p_" << c;
    os << ",label\n";
    for (Eigen::Index r = 0; r < W.cols(); ++r) {
      const SimplexWeights w(W.col(r));
      const Eigen::VectorXd probs = class_probabilities(w, y.values);
      os << rows[static_cast<std::size_t>(r)];
      for (Eigen::Index c = 0; c < probs.size(); ++c) os << ',' << num(probs[c]);
      os << ',' << y.categories[static_cast<std::size_t>(classify(w, y.values))] << "\n";
    }
  } else if (y.kind == BlockKind::vector) {
    os << "row";
    for (const auto& c : model.response->columns) os << "," << c;
    os << "\n";
    const Eigen::MatrixXd yhat = W.transpose() * y.values;
    for (Eigen::Index r = 0; r < yhat.rows(); ++r) {
      os << rows[static_cast<std::size_t>(r)];
      for (Eigen::Index c = 0; c < yhat.cols(); ++c) os << ',' << num(yhat(r, c));
      os << "\n";
    }
  } else {
    // Distributional response: the prediction is the mixture of training response distributions.
    os << "row";
    for (const auto& id : y.group_ids) os << ",w_" << id;
    os << "\n";
    for (Eigen::Index r = 0; r < W.cols(); ++r) {
      os << rows[static_cast<std::size_t>(r)];
      for (Eigen::Index i = 0; i < W.rows(); ++i) os << ',' << num(W(i, r));
      os << "\n";
    }
  }
  return os.str();
}

int cmd_predict(const QueryArgs& a, std::ostream& out, std::ostream& err) {
  const Prepared p = prepare(a, false, err);
  const Predictions pred = predict_all(p.model, p.train, p.query, encode_override(a));
  const std::string csv = predictions_csv(p.model, p.train, pred, p.query_rows);
  if (a.out.empty()) out << csv;
  else write_file_atomic(a.out, csv);
  return kOk;
}

// ---------------------------------------------------------------------------
// Evaluation

struct Metrics {
  std::optional<double> accuracy;
  Eigen::MatrixXi confusion;
  std::optional<double> rmse;
};

Metrics score(const ModelFile& model, const Blocks& train, const Blocks& query, const Predictions& pred) {
  Metrics m;
  const FeatureBlock& y = *train.response;
  const FeatureBlock& truth = *query.response;
  const Eigen::MatrixXd& W = pred.weights;
  if (y.kind == BlockKind::onehot) {
    const auto c = static_cast<Eigen::Index>(y.categories.size());
    m.confusion = Eigen::MatrixXi::Zero(c, c);
    const auto actual = truth.labels();
    Eigen::Index correct = 0;
    for (Eigen::Index r = 0; r < W.cols(); ++r) {
      const Eigen::Index predicted = classify(SimplexWeights(W.col(r)), y.values);
      const Eigen::Index act = actual[static_cast<std::size_t>(r)];
      ++m.confusion(act, predicted);
      if (act == predicted) ++correct;
    }
    m.accuracy = W.cols() == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(W.cols());
  } else if (y.kind == BlockKind::vector) {
    const Eigen::MatrixXd yhat = W.transpose() * y.values;
    m.rmse = std::sqrt((yhat - truth.values).rowwise().squaredNorm().mean());
  } else {
    const KernelSpec& kernel = model.response->kernel;
    const auto t_items = y.items();
    const auto q_items = truth.items();
    const Eigen::MatrixXd gy = block_gram(y, kernel).entries();
    const Eigen::MatrixXd cross = cross_gram(q_items, t_items, kernel);
    const Eigen::VectorXd self = self_inner(q_items, kernel);
    double total = 0.0;
    for (Eigen::Index r = 0; r < W.cols(); ++r) {
      const Eigen::VectorXd w = W.col(r);
      total += std::max(0.0, self[r] - 2.0 * cross.row(r).dot(w) + w.dot(gy * w));
    }
    m.rmse = std::sqrt(total / static_cast<double>(std::max<Eigen::Index>(W.cols(), 1)));
  }
  return m;
}

struct EvalArgs : QueryArgs {
  std::vector<long long> grid_k;
  std::vector<double> grid_lambda;
  int folds = 5;
  std::uint64_t seed = 0;
  double tol = 1e-7;
  int max_iter = 500;
};

json metrics_json(const Metrics& m, const ModelFile& model) {
  json j;
  if (m.accuracy) {
    j["accuracy"] = *m.accuracy;
    j["confusion_labels"] = model.response->categories;
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.confusion.rows(); ++r) {
      json row = json::array();
      for (Eigen::Index c = 0; c < m.confusion.cols(); ++c) row.push_back(m.confusion(r, c));
      rows.push_back(std::move(row));
    }
    j["confusion"] = std::move(rows);
  }
  if (m.rmse) j["rmse"] = *m.rmse;
  return j;
}

std::vector<std::vector<Eigen::Index>> make_folds(const Blocks& train, int folds, std::uint64_t seed) {
  std::vector<Eigen::Index> labels(static_cast<std::size_t>(train.rows), 0);
  if (train.response && train.response->kind == BlockKind::onehot) labels = train.response->labels();
  std::map<Eigen::Index, std::vector<Eigen::Index>> classes;
  for (std::size_t i = 0; i < labels.size(); ++i) classes[labels[i]].push_back(static_cast<Eigen::Index>(i));
  SplitMix64 rng(seed);
  std::vector<std::vector<Eigen::Index>> out(static_cast<std::size_t>(folds));
  std::size_t next = 0;
  for (auto& [label, members] : classes) {
    for (std::size_t i = members.size(); i > 1; --i) std::swap(members[i - 1], members[rng.below(i)]);
    for (Eigen::Index idx : members) out[next++ % out.size()].push_back(idx);
  }
  for (auto& f : out) std::sort(f.begin(), f.end());
  return out;
}

json grid_search(const EvalArgs& a, const Prepared& p) {
  if (a.folds < 2) throw ConfigError("--folds must be at least 2");
  if (a.grid_k.empty() || a.grid_lambda.empty()) throw ConfigError("grid search needs --grid-k and --grid-lambda");
  const auto folds = make_folds(p.train, a.folds, a.seed);
  const bool classify_task = p.train.response->kind == BlockKind::onehot;

  FitOptions opts;
  opts.seed = a.seed;
  opts.tol = a.tol;
  opts.max_outer_iter = a.max_iter;

  json cells = json::array();
  json best;
  double best_score = classify_task ? -1.0 : std::numeric_limits<double>::infinity();
  for (long long k : a.grid_k) {
    for (double lambda : a.grid_lambda) {
      FitPlan plan;
      plan.predictors = p.model.predictors;
      plan.response = p.model.response;
      plan.kind = p.model.kind;
      plan.k.assign(plan.predictors.size(), static_cast<Eigen::Index>(k));
      plan.lambda.assign(plan.predictors.size(), lambda);
      double total = 0.0;
      for (std::size_t f = 0; f < folds.size(); ++f) {
        std::vector<Eigen::Index> fit_rows;
        for (std::size_t g = 0; g < folds.size(); ++g)
          if (g != f) fit_rows.insert(fit_rows.end(), folds[g].begin(), folds[g].end());
        std::sort(fit_rows.begin(), fit_rows.end());
        const Blocks fit_part = select_rows(p.train, fit_rows);
        const Blocks held = select_rows(p.train, folds[f]);
        ModelFile m = fit_model(plan, fit_part, opts);
        const Metrics s = score(m, fit_part, held, predict_all(m, fit_part, held, std::nullopt));
        total += classify_task ? *s.accuracy : *s.rmse;
      }
      const double mean = total / static_cast<double>(folds.size());
      json cell{{"k", k}, {"lambda", lambda}, {classify_task ? "cv_accuracy" : "cv_rmse", mean}};
      const bool better = classify_task ? mean > best_score : mean < best_score;
      if (better) {
        best_score = mean;
        best = cell;
      }
      cells.push_back(std::move(cell));
    }
  }
  return json{{"folds", a.folds}, {"cells", std::move(cells)}, {"best", std::move(best)}};
}

int cmd_evaluate(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  const Prepared p = prepare(a, true, err);
  const Predictions pred = predict_all(p.model, p.train, p.query, encode_override(a));
  const Metrics m = score(p.model, p.train, p.query, pred);
  json doc = metrics_json(m, p.model);
  doc["rows"] = p.query.rows;
  doc["subset"] = a.subset;
  if (!a.grid_k.empty() || !a.grid_lambda.empty()) doc["grid"] = grid_search(a, p);
  const std::string text = doc.dump(2) + "\n";
  if (a.out.empty()) out << text;
  else write_file_atomic(a.out, text);
  return kOk;
}

// ---------------------------------------------------------------------------
// Gram cache

struct GramArgs {
  std::string data;
  std::string block;
  std::string kernel;
  std::string out;
};

int cmd_gram(const GramArgs& a, std::ostream&, std::ostream&) {
  if (a.out.empty()) throw ConfigError("--out is required");
  BlockDescriptor d = parse_block(a.block);
  if (!a.kernel.empty()) {
    try {
      d.kernel = KernelSpec::parse(a.kernel);
    } catch (const InvalidArgument& e) {
      throw ConfigError(e.what());
    }
  }
  const Blocks b = load_blocks({d}, std::nullopt, a.data, {}, false);
  const FeatureBlock& block = b.predictors.front();
  Dataset ds;
  ds.response = block;
  save_gram(a.out, GramFile{block_gram(block, d.kernel), d.kernel, fingerprint(ds)});
  return kOk;
}

// ---------------------------------------------------------------------------
// Reports

struct ReportArgs : QueryArgs {
  std::string format = "svg";
};

struct Figure {
  report::SvgCanvas svg;
  std::ostringstream csv;
  Figure() { csv << "element,series,index,x,y\n"; }
  void record(const std::string& element, const std::string& series, Eigen::Index index, double x, double y) {
    csv << element << ',' << series << ',' << index << ',' << num(x) << ',' << num(y) << "\n";
  }
};

Eigen::MatrixXd prototype_coordinates(const PrototypeModel& p, const Eigen::MatrixXd& x) {
  return p.B.transpose() * x;
}

void ternary_figure(Figure& fig, const ModelFile& model, const Blocks& train) {
  const FeatureBlock& y = *train.response;
  const double h = std::sqrt(3.0) / 2.0;
  const report::Viewport vp(-0.05, 1.05, -0.05, h + 0.05);
  auto to_xy = [&](const Eigen::VectorXd& p) {
    return std::pair<double, double>{p[1] + 0.5 * p[2], h * p[2]};
  };
  fig.svg.polygon({{vp.x(0), vp.y(0)}, {vp.x(1), vp.y(0)}, {vp.x(0.5), vp.y(h)}}, "#333333", "simplex");
  fig.svg.text(vp.x(0) - 20, vp.y(0) + 25, y.categories[0], "vertex");
  fig.svg.text(vp.x(1) - 20, vp.y(0) + 25, y.categories[1], "vertex");
  fig.svg.text(vp.x(0.5) - 20, vp.y(h) - 12, y.categories[2], "vertex");

  const MultipleRegressionModel reg = model.regression();
  const Eigen::MatrixXd W = training_weights(reg);
  const auto labels = y.labels();
  for (Eigen::Index i = 0; i < W.cols(); ++i) {
    const Eigen::VectorXd probs = y.values.transpose() * W.col(i);
    const auto [px, py] = to_xy(probs);
    fig.svg.circle(vp.x(px), vp.y(py), 4, report::palette(static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])),
                   "data");
    fig.record("data", y.categories[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])], i, px, py);
  }
  // Response prototypes of the most important predictor.
  Eigen::Index top = 0;
  reg.tau.values().maxCoeff(&top);
  const Eigen::MatrixXd V = y.values.transpose() * reg.C[static_cast<std::size_t>(top)];
  for (Eigen::Index j = 0; j < V.cols(); ++j) {
    const auto [px, py] = to_xy(V.col(j));
    fig.svg.plus(vp.x(px), vp.y(py), 8, "#000000", "prototype");
    fig.record("prototype", model.predictors[static_cast<std::size_t>(top)].name, j, px, py);
  }
}

void curve_figure(Figure& fig, const ModelFile& model, const Blocks& train) {
  const Eigen::VectorXd x = train.predictors.front().values.col(0);
  const Eigen::VectorXd y = train.response->values.col(0);
  const MultipleRegressionModel reg = model.regression();
  const PrototypeModel& p = reg.per_predictor.front();
  const KernelSpec& kernel = model.predictors.front().kernel;

  constexpr int kGrid = 200;
  const double lo = x.minCoeff();
  const double hi = x.maxCoeff();
  std::vector<FeatureItem> grid_items;
  for (int g = 0; g < kGrid; ++g) {
    const double t = kGrid == 1 ? lo : lo + (hi - lo) * g / (kGrid - 1);
    grid_items.emplace_back(Eigen::VectorXd::Constant(1, t));
  }
  const auto t_items = train.predictors.front().items();
  const Eigen::MatrixXd cross = cross_gram(grid_items, t_items, kernel);
  const Eigen::VectorXd self = self_inner(grid_items, kernel);
  Eigen::VectorXd curve(kGrid);
  for (int g = 0; g < kGrid; ++g) {
    const Eigen::VectorXd g0 = cross.row(g).transpose();
    const std::vector<Eigen::VectorXd> g0s{g0};
    const std::vector<double> g00s{self[g]};
    curve[g] = predict_multiple(reg, g0s, g00s).values().dot(y);
  }
  const Eigen::VectorXd u = p.B.transpose() * x;
  const Eigen::VectorXd v = reg.C.front().transpose() * y;

  const double ylo = std::min({y.minCoeff(), curve.minCoeff(), v.minCoeff()});
  const double yhi = std::max({y.maxCoeff(), curve.maxCoeff(), v.maxCoeff()});
  const report::Viewport vp(lo, hi, ylo, yhi);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    fig.svg.circle(vp.x(x[i]), vp.y(y[i]), 3, report::palette(0), "data");
    fig.record("data", "train", i, x[i], y[i]);
  }
  std::vector<std::pair<double, double>> pts;
  for (int g = 0; g < kGrid; ++g) {
    const double t = std::get<Eigen::VectorXd>(grid_items[static_cast<std::size_t>(g)])[0];
    pts.emplace_back(vp.x(t), vp.y(curve[g]));
    fig.record("curve", "fhat", g, t, curve[g]);
  }
  fig.svg.polyline(pts, report::palette(1), 2, "curve");
  for (Eigen::Index j = 0; j < u.size(); ++j) {
    fig.svg.plus(vp.x(u[j]), vp.y(v[j]), 8, "#000000", "prototype");
    fig.record("prototype", "pair", j, u[j], v[j]);
  }
}

void scatter_figure(Figure& fig, const ModelFile& model, const Blocks& train) {
  const Eigen::MatrixXd& x = train.predictors.front().values;
  const PrototypeModel& p = model.prototypes.front();
  const Eigen::MatrixXd u = prototype_coordinates(p, x);  // k x d
  const Eigen::MatrixXd recon = p.A.transpose() * u;        // n x d
  auto coord = [&](const Eigen::MatrixXd& m, Eigen::Index r) {
    return std::pair<double, double>{m(r, 0), m.cols() > 1 ? m(r, 1) : 0.0};
  };
  double xlo = x.col(0).minCoeff(), xhi = x.col(0).maxCoeff();
  double ylo = x.cols() > 1 ? x.col(1).minCoeff() : -1.0, yhi = x.cols() > 1 ? x.col(1).maxCoeff() : 1.0;
  const report::Viewport vp(xlo, xhi, ylo, yhi);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const auto [px, py] = coord(x, i);
    const auto [rx, ry] = coord(recon, i);
    fig.svg.line(vp.x(px), vp.y(py), vp.x(rx), vp.y(ry), "#bbbbbb", 1, "reconstruction");
    fig.record("reconstruction", "xhat", i, rx, ry);
  }
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const auto [px, py] = coord(x, i);
    fig.svg.circle(vp.x(px), vp.y(py), 3, report::palette(0), "data");
    fig.record("data", "train", i, px, py);
  }
  for (Eigen::Index j = 0; j < u.rows(); ++j) {
    const auto [px, py] = coord(u, j);
    fig.svg.plus(vp.x(px), vp.y(py), 8, report::palette(1), "prototype");
    fig.record("prototype", "u", j, px, py);
  }
}

int cmd_report(const ReportArgs& a, std::ostream& out, std::ostream& err) {
  if (a.format != "svg" && a.format != "csv") throw ConfigError("--report must be svg or csv");
  QueryArgs q = a;
  if (q.data.empty()) q.data = q.train_data;
  const Prepared p = prepare(q, false, err);
  const ModelFile& model = p.model;

  const FeatureBlock& x0 = p.train.predictors.front();
  const bool vector_x = x0.kind == BlockKind::vector && (x0.values.cols() == 1 || x0.values.cols() == 2);
  Figure fig;
  if (model.is_regression() && p.train.response->kind == BlockKind::onehot &&
      p.train.response->categories.size() == 3) {
    ternary_figure(fig, model, p.train);
  } else if (model.kind == "simple_regression" && vector_x && x0.values.cols() == 1 &&
             p.train.response->kind == BlockKind::vector && p.train.response->values.cols() == 1) {
    curve_figure(fig, model, p.train);
  } else if (!model.is_regression() && vector_x) {
    scatter_figure(fig, model, p.train);
  } else {
    throw ConfigError(
        "report supports: prototypal/archetypal models on 1D or 2D vector data; simple regression 1D -> 1D; "
        "regression with a 3-class one-hot response");
  }
  const std::string text = a.format == "svg" ? fig.svg.str() : fig.csv.str();
  if (a.out.empty()) out << text;
  else write_file_atomic(a.out, text);
  return kOk;
}

// ---------------------------------------------------------------------------

void add_query_options(CLI::App* cmd, QueryArgs& a) {
  cmd->add_option("--model", a.model, "fitted model file")->required();
  cmd->add_option("--train-data", a.train_data, "table the model was fitted on (default: --data)");
  cmd->add_option("--data", a.data, "table with the rows to predict");
  cmd->add_option("--samples", a.samples, "name=path: sample file for a distribution predictor")->take_all();
  cmd->add_option("--subset", a.subset, "rows of --data to use: all, train or test")->capture_default_str();
  cmd->add_option("--encode-lambda", a.encode_lambda, "penalty used when encoding new points (default: training lambda)");
  cmd->add_option("--out", a.out, "output file (default: standard output)");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Archetypal and prototypal analysis and regression on Gram matrices", "protoreg"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML/INI file with default option values; flags take precedence");

  FitArgs fit;
  CLI::App* fit_cmd = app.add_subcommand("fit", "fit a prototypal/archetypal model or a prototypal regression");
  fit_cmd->add_option("--data", fit.data, "comma-separated table with a header row");
  fit_cmd->add_option("--predictor", fit.predictors,
                      "predictor block: name=col1,col2 | name:onehot=col | name@samples.csv (repeatable)")
      ->take_all();
  fit_cmd->add_option("--response", fit.response, "response block, same syntax as --predictor");
  fit_cmd->add_option("--kernel", fit.kernels, "family[:param] per predictor (or once for all)")->take_all();
  fit_cmd->add_option("--response-kernel", fit.response_kernel, "family[:param] for the response");
  fit_cmd->add_option("--k", fit.k, "number of prototypes per predictor (or once for all)")->take_all();
  fit_cmd->add_option("--lambda", fit.lambda, "penalty per predictor (or once for all)")->take_all();
  fit_cmd->add_option("--seed", fit.seed, "random seed")->capture_default_str();
  fit_cmd->add_option("--tol", fit.tol, "relative objective change that stops the outer loop")->capture_default_str();
  fit_cmd->add_option("--max-iter", fit.max_iter, "outer iteration cap")->capture_default_str();
  fit_cmd->add_option("--qp-tol", fit.qp_tol, "inner simplex QP tolerance")->capture_default_str();
  fit_cmd->add_option("--qp-max-iter", fit.qp_max_iter, "inner simplex QP iteration cap")->capture_default_str();
  fit_cmd->add_option("--max-alternations", fit.max_alternations, "response-side alternation cap")
      ->capture_default_str();
  fit_cmd->add_option("--train-frac", fit.train_frac, "hold out rows by stratified split (0 = use all rows)");
  fit_cmd->add_flag("--archetypal", fit.archetypal, "plain archetypal analysis (lambda = 0)");
  fit_cmd->add_option("--out", fit.out, "model file to write");
  fit_cmd->add_option("--report-out", fit.report_out, "fit report file (default: standard output)");
  fit_cmd->add_option("--report", fit.report_format, "fit report format: csv or text")->capture_default_str();

  QueryArgs predict;
  CLI::App* predict_cmd = app.add_subcommand("predict", "predict responses or barycentric coordinates");
  add_query_options(predict_cmd, predict);

  EvalArgs eval;
  CLI::App* eval_cmd = app.add_subcommand("evaluate", "accuracy / confusion matrix / RMSE, optional grid search");
  add_query_options(eval_cmd, eval);
  eval_cmd->add_option("--grid-k", eval.grid_k, "k values for cross-validated grid search")->delimiter(',');
  eval_cmd->add_option("--grid-lambda", eval.grid_lambda, "lambda values for grid search")->delimiter(',');
  eval_cmd->add_option("--folds", eval.folds, "cross-validation folds")->capture_default_str();
  eval_cmd->add_option("--seed", eval.seed, "seed for fold assignment and refits")->capture_default_str();
  eval_cmd->add_option("--tol", eval.tol, "outer tolerance for grid refits")->capture_default_str();
  eval_cmd->add_option("--max-iter", eval.max_iter, "outer iteration cap for grid refits")->capture_default_str();

  GramArgs gram;
  CLI::App* gram_cmd = app.add_subcommand("gram", "compute and cache the Gram matrix of one block");
  gram_cmd->add_option("--data", gram.data, "comma-separated table");
  gram_cmd->add_option("--block", gram.block, "block description, same syntax as --predictor")->required();
  gram_cmd->add_option("--kernel", gram.kernel, "family[:param]");
  gram_cmd->add_option("--out", gram.out, "Gram file to write");

  ReportArgs rep;
  CLI::App* report_cmd = app.add_subcommand("report", "render prototypes, reconstructions or regression curves");
  add_query_options(report_cmd, rep);
  report_cmd->add_option("--report", rep.format, "svg or csv")->capture_default_str();

  std::vector<const char*> argv{"protoreg"};
  for (const auto& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  }

  try {
    if (fit_cmd->parsed()) return cmd_fit(fit, out, err);
    if (predict_cmd->parsed()) return cmd_predict(predict, out, err);
    if (eval_cmd->parsed()) return cmd_evaluate(eval, out, err);
    if (gram_cmd->parsed()) return cmd_gram(gram, out, err);
    if (report_cmd->parsed()) return cmd_report(rep, out, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const NumericalError& e) {
    err << "error: numerical failure: " << e.what() << "\n";
    return kNumericalError;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kConfigError;
}

}  // namespace protoreg::cli
