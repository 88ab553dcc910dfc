#include "protoreg/data_io.hpp"

#include "protoreg/error.hpp"
#include "protoreg/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace protoreg {

using nlohmann::json;

std::string to_string(BlockKind kind) {
  switch (kind) {
    case BlockKind::vector: return "vector";
    case BlockKind::onehot: return "onehot";
    case BlockKind::distribution: return "distribution";
  }
  return "vector";
}

BlockKind block_kind_from_string(const std::string& text) {
  if (text == "vector") return BlockKind::vector;
  if (text == "onehot") return BlockKind::onehot;
  if (text == "distribution") return BlockKind::distribution;
  throw InvalidArgument("unknown block kind '" + text + "'");
}

// ---------------------------------------------------------------------------
// Blocks

Eigen::Index FeatureBlock::rows() const {
  return kind == BlockKind::distribution ? static_cast<Eigen::Index>(distributions.size()) : values.rows();
}

std::vector<FeatureItem> FeatureBlock::items() const {
  std::vector<FeatureItem> out;
  out.reserve(static_cast<std::size_t>(rows()));
  if (kind == BlockKind::distribution) {
    for (const auto& d : distributions) out.emplace_back(d);
  } else {
    for (Eigen::Index i = 0; i < values.rows(); ++i) out.emplace_back(Eigen::VectorXd(values.row(i).transpose()));
  }
  return out;
}

FeatureBlock FeatureBlock::select(std::span<const Eigen::Index> rows_wanted) const {
  FeatureBlock out;
  out.kind = kind;
  out.name = name;
  out.categories = categories;
  const Eigen::Index n = rows();
  for (Eigen::Index r : rows_wanted)
    if (r < 0 || r >= n) throw InvalidArgument("row index out of range in block '" + name + "'");
  if (kind == BlockKind::distribution) {
    for (Eigen::Index r : rows_wanted) {
      out.distributions.push_back(distributions[static_cast<std::size_t>(r)]);
      if (!group_ids.empty()) out.group_ids.push_back(group_ids[static_cast<std::size_t>(r)]);
    }
  } else {
    out.values.resize(static_cast<Eigen::Index>(rows_wanted.size()), values.cols());
    for (std::size_t i = 0; i < rows_wanted.size(); ++i)
      out.values.row(static_cast<Eigen::Index>(i)) = values.row(rows_wanted[i]);
  }
  return out;
}

std::vector<Eigen::Index> FeatureBlock::labels() const {
  if (kind != BlockKind::onehot) throw InvalidArgument("block '" + name + "' is not one-hot");
  std::vector<Eigen::Index> out(static_cast<std::size_t>(values.rows()));
  for (Eigen::Index i = 0; i < values.rows(); ++i) values.row(i).maxCoeff(&out[static_cast<std::size_t>(i)]);
  return out;
}

void FeatureBlock::validate() const {
  switch (kind) {
    case BlockKind::vector:
      if (!values.allFinite()) throw InvalidArgument("block '" + name + "' has non-finite entries");
      break;
    case BlockKind::onehot:
      if (static_cast<std::size_t>(values.cols()) != categories.size())
        throw InvalidArgument("block '" + name + "' has mismatched category list");
      for (Eigen::Index i = 0; i < values.rows(); ++i) {
        const auto row = values.row(i);
        const bool ok = (row.array() == 0.0 || row.array() == 1.0).all() && row.sum() == 1.0;
        if (!ok) throw InvalidArgument("block '" + name + "' row " + std::to_string(i) + " is not one-hot");
      }
      break;
    case BlockKind::distribution:
      if (!group_ids.empty() && group_ids.size() != distributions.size())
        throw InvalidArgument("block '" + name + "' has mismatched group ids");
      break;
  }
}

void Dataset::validate() const {
  std::set<std::string> names;
  for (const auto& b : predictors) {
    b.validate();
    if (b.rows() != rows()) throw InvalidArgument("block '" + b.name + "' row count differs from the response");
    if (!names.insert(b.name).second) throw InvalidArgument("duplicate block name '" + b.name + "'");
  }
  response.validate();
  if (!names.insert(response.name).second) throw InvalidArgument("duplicate block name '" + response.name + "'");
}

Dataset Dataset::select(std::span<const Eigen::Index> rows_wanted) const {
  Dataset out;
  for (const auto& b : predictors) out.predictors.push_back(b.select(rows_wanted));
  out.response = response.select(rows_wanted);
  return out;
}

// ---------------------------------------------------------------------------
// Text input

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_commas(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
};

Csv read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  Csv csv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_commas(line);
    if (csv.header.empty()) {
      csv.header = std::move(cells);
      continue;
    }
    if (cells.size() != csv.header.size())
      throw ParseError("'" + path.string() + "': expected " + std::to_string(csv.header.size()) + " cells, found " +
                           std::to_string(cells.size()),
                       line_no);
    csv.rows.push_back(std::move(cells));
    csv.line_numbers.push_back(line_no);
  }
  if (csv.header.empty()) throw ParseError("'" + path.string() + "' is empty");
  return csv;
}

double parse_number(const std::string& cell, std::size_t row, std::size_t column) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  auto res = std::from_chars(first, last, value);
  if (cell.empty() || res.ec != std::errc{} || res.ptr != last || !std::isfinite(value))
    throw ParseError("non-numeric value '" + cell + "'", row, column);
  return value;
}

}  // namespace

ColumnBlock ColumnBlock::parse(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == text.size())
    throw InvalidArgument("block description '" + text + "' must look like name=col1,col2 or name:onehot=col");
  ColumnBlock block;
  std::string head = text.substr(0, eq);
  const auto colon = head.find(':');
  if (colon != std::string::npos) {
    block.kind = block_kind_from_string(head.substr(colon + 1));
    head = head.substr(0, colon);
    if (block.kind == BlockKind::distribution)
      throw InvalidArgument("distribution blocks come from sample files, not table columns");
  }
  block.name = head;
  block.columns = split_commas(text.substr(eq + 1));
  if (block.kind == BlockKind::onehot && block.columns.size() != 1)
    throw InvalidArgument("one-hot block '" + block.name + "' must name exactly one column");
  return block;
}

std::vector<FeatureBlock> load_table(const std::filesystem::path& path, std::span<const ColumnBlock> schema) {
  const Csv csv = read_csv(path);
  if (csv.rows.empty()) throw ParseError("'" + path.string() + "' has a header but no rows");

  auto column_index = [&](const std::string& name) {
    const auto it = std::find(csv.header.begin(), csv.header.end(), name);
    if (it == csv.header.end()) throw ParseError("'" + path.string() + "': missing column '" + name + "'");
    return static_cast<std::size_t>(it - csv.header.begin());
  };

  const auto n = static_cast<Eigen::Index>(csv.rows.size());
  std::vector<FeatureBlock> blocks;
  for (const auto& spec : schema) {
    FeatureBlock block;
    block.name = spec.name;
    block.kind = spec.kind;
    if (spec.kind == BlockKind::vector) {
      block.values.resize(n, static_cast<Eigen::Index>(spec.columns.size()));
      for (std::size_t c = 0; c < spec.columns.size(); ++c) {
        const std::size_t col = column_index(spec.columns[c]);
        for (Eigen::Index r = 0; r < n; ++r) {
          const auto ur = static_cast<std::size_t>(r);
          block.values(r, static_cast<Eigen::Index>(c)) = parse_number(csv.rows[ur][col], csv.line_numbers[ur], col + 1);
        }
      }
    } else {
      const std::size_t col = column_index(spec.columns.front());
      const bool fixed = !spec.categories.empty();
      block.categories = spec.categories;
      std::vector<Eigen::Index> label(static_cast<std::size_t>(n));
      for (Eigen::Index r = 0; r < n; ++r) {
        const auto ur = static_cast<std::size_t>(r);
        const std::string& cell = csv.rows[ur][col];
        auto it = std::find(block.categories.begin(), block.categories.end(), cell);
        if (it == block.categories.end()) {
          if (fixed) throw ParseError("unknown category '" + cell + "'", csv.line_numbers[ur], col + 1);
          block.categories.push_back(cell);
          it = block.categories.end() - 1;
        }
        label[ur] = static_cast<Eigen::Index>(it - block.categories.begin());
      }
      block.values = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(block.categories.size()));
      for (Eigen::Index r = 0; r < n; ++r) block.values(r, label[static_cast<std::size_t>(r)]) = 1.0;
    }
    blocks.push_back(std::move(block));
  }
  return blocks;
}

FeatureBlock load_grouped_samples(const std::filesystem::path& path, const std::string& name) {
  const Csv csv = read_csv(path);
  if (csv.header.size() < 2) throw ParseError("'" + path.string() + "': need columns group_id,v1[,v2,...]", 1);
  if (csv.rows.empty()) throw ParseError("'" + path.string() + "' has a header but no rows");
  const std::size_t dim = csv.header.size() - 1;

  std::vector<std::string> order;
  std::map<std::string, std::vector<std::vector<double>>> groups;
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    const auto& row = csv.rows[r];
    std::vector<double> sample(dim);
    for (std::size_t c = 0; c < dim; ++c) sample[c] = parse_number(row[c + 1], csv.line_numbers[r], c + 2);
    auto [it, inserted] = groups.try_emplace(row[0]);
    if (inserted) order.push_back(row[0]);
    it->second.push_back(std::move(sample));
  }

  FeatureBlock block;
  block.kind = BlockKind::distribution;
  block.name = name;
  for (const auto& id : order) {
    auto& samples = groups[id];
    if (dim > 1) {
      // Canonical row order so that shuffled input files give identical blocks.
      std::sort(samples.begin(), samples.end());
    }
    Eigen::MatrixXd m(static_cast<Eigen::Index>(samples.size()), static_cast<Eigen::Index>(dim));
    for (std::size_t s = 0; s < samples.size(); ++s)
      for (std::size_t c = 0; c < dim; ++c) m(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(c)) = samples[s][c];
    block.distributions.emplace_back(std::move(m));
    block.group_ids.push_back(id);
  }
  return block;
}

std::pair<std::vector<Eigen::Index>, std::vector<Eigen::Index>> stratified_split(
    std::span<const Eigen::Index> labels, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw InvalidArgument("train fraction must lie strictly between 0 and 1");
  std::map<Eigen::Index, std::vector<Eigen::Index>> classes;
  for (std::size_t i = 0; i < labels.size(); ++i) classes[labels[i]].push_back(static_cast<Eigen::Index>(i));

  SplitMix64 rng(seed);
  std::vector<Eigen::Index> train;
  std::vector<Eigen::Index> test;
  for (auto& [label, members] : classes) {
    if (members.size() < 2)
      throw InvalidArgument("class " + std::to_string(label) + " has fewer than 2 members; cannot stratify");
    for (std::size_t i = members.size() - 1; i > 0; --i) {
      const auto j = static_cast<std::size_t>(rng.below(i + 1));
      std::swap(members[i], members[j]);
    }
    const auto take = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(members.size())));
    train.insert(train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(take));
    test.insert(test.end(), members.begin() + static_cast<std::ptrdiff_t>(take), members.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// Fingerprints

namespace {

class Fnv1a {
 public:
  void bytes(const void* data, std::size_t size) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
      state_ ^= p[i];
      state_ *= 0x100000001B3ULL;
    }
  }
  void number(double v) { bytes(&v, sizeof v); }
  void text(const std::string& s) {
    bytes(s.data(), s.size());
    bytes("\0", 1);
  }
  std::string hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(state_));
    return buf;
  }

 private:
  std::uint64_t state_ = 0xCBF29CE484222325ULL;
};

void hash_block(Fnv1a& h, const FeatureBlock& b) {
  h.text(b.name);
  h.text(to_string(b.kind));
  if (b.kind == BlockKind::distribution) {
    for (const auto& d : b.distributions) {
      const Eigen::MatrixXd& s = d.samples();
      for (Eigen::Index i = 0; i < s.size(); ++i) h.number(s.data()[i]);
      h.text("|");
    }
  } else {
    for (Eigen::Index r = 0; r < b.values.rows(); ++r)
      for (Eigen::Index c = 0; c < b.values.cols(); ++c) h.number(b.values(r, c));
  }
}

}  // namespace

Fingerprint fingerprint(const Dataset& data) {
  Fnv1a h;
  for (const auto& b : data.predictors) hash_block(h, b);
  hash_block(h, data.response);
  return {data.rows(), h.hex()};
}

// ---------------------------------------------------------------------------
// Model files

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  if (!j.is_array()) throw ParseError("expected a matrix (array of rows)");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = rows == 0 ? 0 : static_cast<Eigen::Index>(j.front().size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) throw ParseError("ragged matrix in model file");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

json vector_to_json(const Eigen::VectorXd& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

Eigen::VectorXd vector_from_json(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

json block_to_json(const BlockDescriptor& b) {
  json j;
  j["name"] = b.name;
  j["kind"] = to_string(b.kind);
  j["columns"] = b.columns;
  j["categories"] = b.categories;
  j["samples_path"] = b.samples_path;
  j["kernel"] = b.kernel.to_string();
  return j;
}

BlockDescriptor block_from_json(const json& j) {
  BlockDescriptor b;
  b.name = j.at("name").get<std::string>();
  b.kind = block_kind_from_string(j.at("kind").get<std::string>());
  b.columns = j.at("columns").get<std::vector<std::string>>();
  b.categories = j.at("categories").get<std::vector<std::string>>();
  b.samples_path = j.at("samples_path").get<std::string>();
  b.kernel = KernelSpec::parse(j.at("kernel").get<std::string>());
  return b;
}

json fingerprint_to_json(const Fingerprint& f) { return json{{"rows", f.rows}, {"hash", f.hash}}; }

Fingerprint fingerprint_from_json(const json& j) {
  return {j.at("rows").get<Eigen::Index>(), j.at("hash").get<std::string>()};
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_document(const std::string& text, const std::filesystem::path& path) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("malformed document '" + path.string() + "': " + e.what());
  }
}

void check_version(const json& doc) {
  const int version = doc.at("schema_version").get<int>();
  if (version != ModelFile::kSchemaVersion)
    throw ParseError("unsupported schema_version " + std::to_string(version) + " (expected " +
                     std::to_string(ModelFile::kSchemaVersion) + ")");
}

}  // namespace

MultipleRegressionModel ModelFile::regression() const {
  if (!is_regression()) throw InvalidArgument("model kind '" + kind + "' is not a regression");
  MultipleRegressionModel m;
  m.per_predictor = prototypes;
  m.C = C;
  m.tau = SimplexWeights(tau);
  m.fit_trace = fit_trace;
  m.gy_ref = response ? response->kernel.to_string() : std::string{};
  return m;
}

json to_json(const ModelFile& model) {
  json doc;
  doc["schema_version"] = model.schema_version;
  doc["kind"] = model.kind;

  json kernels = json::array();
  for (const auto& b : model.predictors)
    kernels.push_back({{"block", b.name}, {"role", "predictor"}, {"kernel", b.kernel.to_string()}});
  if (model.response)
    kernels.push_back({{"block", model.response->name}, {"role", "response"}, {"kernel", model.response->kernel.to_string()}});
  doc["kernel_specs"] = std::move(kernels);

  json blocks = json::array();
  for (const auto& b : model.predictors) blocks.push_back(block_to_json(b));
  doc["predictors"] = std::move(blocks);
  doc["response"] = model.response ? block_to_json(*model.response) : json(nullptr);

  json lambda = json::array();
  json k = json::array();
  json A = json::array();
  json B = json::array();
  json M = json::array();
  json traces = json::array();
  json initial = json::array();
  for (const auto& p : model.prototypes) {
    lambda.push_back(p.lambda);
    k.push_back(p.k);
    A.push_back(matrix_to_json(p.A));
    B.push_back(matrix_to_json(p.B));
    M.push_back(matrix_to_json(p.prototype_gram));
    traces.push_back(p.objective_trace);
    initial.push_back(p.initial_points);
  }
  doc["lambda"] = std::move(lambda);
  doc["k"] = std::move(k);
  doc["A"] = std::move(A);
  doc["B"] = std::move(B);
  doc["prototype_gram"] = std::move(M);
  doc["objective_trace"] = std::move(traces);
  doc["initial_points"] = std::move(initial);

  json C = json::array();
  for (const auto& c : model.C) C.push_back(matrix_to_json(c));
  doc["C"] = std::move(C);
  doc["tau"] = vector_to_json(model.tau);
  doc["fit_trace"] = model.fit_trace;
  doc["fingerprint"] = fingerprint_to_json(model.fingerprint);
  doc["train_rows"] = model.train_rows;
  doc["test_rows"] = model.test_rows;
  doc["seed"] = model.seed;
  return doc;
}

ModelFile model_from_json(const json& doc) {
  try {
    check_version(doc);
    ModelFile model;
    model.kind = doc.at("kind").get<std::string>();
    if (model.kind != "prototypal" && model.kind != "archetypal" && model.kind != "simple_regression" &&
        model.kind != "multiple_regression")
      throw ParseError("unknown model kind '" + model.kind + "'");
    for (const auto& b : doc.at("predictors")) model.predictors.push_back(block_from_json(b));
    if (!doc.at("response").is_null()) model.response = block_from_json(doc.at("response"));

    const json& lambda = doc.at("lambda");
    const json& k = doc.at("k");
    const json& A = doc.at("A");
    const json& B = doc.at("B");
    const json& M = doc.at("prototype_gram");
    const json& traces = doc.at("objective_trace");
    const json& initial = doc.at("initial_points");
    const std::size_t m = lambda.size();
    if (k.size() != m || A.size() != m || B.size() != m || M.size() != m || traces.size() != m || initial.size() != m)
      throw ParseError("model file: per-predictor arrays differ in length");
    for (std::size_t l = 0; l < m; ++l) {
      PrototypeModel p;
      p.lambda = lambda[l].get<double>();
      p.k = k[l].get<Eigen::Index>();
      p.A = matrix_from_json(A[l]);
      p.B = matrix_from_json(B[l]);
      p.prototype_gram = matrix_from_json(M[l]);
      p.objective_trace = traces[l].get<std::vector<double>>();
      p.initial_points = initial[l].get<std::vector<Eigen::Index>>();
      p.n = p.B.rows();
      if (p.A.rows() != p.k || p.B.cols() != p.k || p.A.cols() != p.n)
        throw ParseError("model file: A/B shapes disagree with k");
      model.prototypes.push_back(std::move(p));
    }
    for (const auto& c : doc.at("C")) model.C.push_back(matrix_from_json(c));
    model.tau = vector_from_json(doc.at("tau"));
    model.fit_trace = doc.at("fit_trace").get<std::vector<double>>();
    model.fingerprint = fingerprint_from_json(doc.at("fingerprint"));
    model.train_rows = doc.at("train_rows").get<std::vector<Eigen::Index>>();
    model.test_rows = doc.at("test_rows").get<std::vector<Eigen::Index>>();
    model.seed = doc.at("seed").get<std::uint64_t>();
    return model;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed model file: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ParseError(std::string("malformed model file: ") + e.what());
  }
}

std::string serialize_model(const ModelFile& model) { return to_json(model).dump() + "\n"; }

void save_model(const std::filesystem::path& path, const ModelFile& model) {
  write_file_atomic(path, serialize_model(model));
}

ModelFile load_model(const std::filesystem::path& path) {
  return model_from_json(parse_document(read_text(path), path));
}

std::string serialize_gram(const GramFile& file) {
  json doc;
  doc["schema_version"] = ModelFile::kSchemaVersion;
  doc["kind"] = "gram";
  doc["kernel_specs"] = json::array({file.kernel.to_string()});
  doc["gram"] = matrix_to_json(file.gram.entries());
  doc["fingerprint"] = fingerprint_to_json(file.fingerprint);
  return doc.dump() + "\n";
}

void save_gram(const std::filesystem::path& path, const GramFile& file) {
  write_file_atomic(path, serialize_gram(file));
}

GramFile load_gram(const std::filesystem::path& path) {
  const json doc = parse_document(read_text(path), path);
  try {
    check_version(doc);
    if (doc.at("kind").get<std::string>() != "gram") throw ParseError("'" + path.string() + "' is not a Gram file");
    const KernelSpec kernel = KernelSpec::parse(doc.at("kernel_specs").at(0).get<std::string>());
    return {GramMatrix(matrix_from_json(doc.at("gram")), kernel.to_string()), kernel,
            fingerprint_from_json(doc.at("fingerprint"))};
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed Gram file: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ParseError(std::string("malformed Gram file: ") + e.what());
  }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ParseError("cannot write '" + tmp.string() + "'");
    out << contents;
    out.flush();
    if (!out) {
      std::filesystem::remove(tmp);
      throw ParseError("failed writing '" + tmp.string() + "'");
    }
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace protoreg
