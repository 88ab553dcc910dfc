#pragma once

#include "protoreg/archetypes.hpp"
#include "protoreg/gram.hpp"
#include "protoreg/regression.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace protoreg {

enum class BlockKind { vector, onehot, distribution };

std::string to_string(BlockKind kind);
BlockKind block_kind_from_string(const std::string& text);

/// One predictor or the response, one entry per observation.
struct FeatureBlock {
  BlockKind kind = BlockKind::vector;
  std::string name;
  /// n x d for vector blocks, n x c indicator matrix for one-hot blocks.
  Eigen::MatrixXd values;
  /// Category names of a one-hot block, column order.
  std::vector<std::string> categories;
  /// One sample set per observation for distribution blocks.
  std::vector<EmpiricalDistribution> distributions;
  /// Group identifiers of a distribution block, row order.
  std::vector<std::string> group_ids;

  Eigen::Index rows() const;
  std::vector<FeatureItem> items() const;
  FeatureBlock select(std::span<const Eigen::Index> rows) const;
  /// Class index per row of a one-hot block.
  std::vector<Eigen::Index> labels() const;
  /// Throws InvalidArgument when the kind-specific invariants do not hold.
  void validate() const;
};

struct Dataset {
  std::vector<FeatureBlock> predictors;
  FeatureBlock response;

  Eigen::Index rows() const { return response.rows(); }
  void validate() const;
  Dataset select(std::span<const Eigen::Index> rows) const;
};

/// Which table columns make up one block.
struct ColumnBlock {
  std::string name;
  BlockKind kind = BlockKind::vector;
  std::vector<std::string> columns;
  /// For one-hot blocks: fixed category order. Empty means "first appearance order";
  /// when set, unseen categories are a parse error.
  std::vector<std::string> categories;

  /// "name=col1,col2" for vectors, "name:onehot=col" for categorical columns.
  static ColumnBlock parse(const std::string& text);
};

/// Reads a comma-separated table with a header row into one block per schema entry.
std::vector<FeatureBlock> load_table(const std::filesystem::path& path, std::span<const ColumnBlock> schema);

/// Long format "group_id,v1[,v2,...]": one empirical distribution per group,
/// groups in order of first appearance.
FeatureBlock load_grouped_samples(const std::filesystem::path& path, const std::string& name = "samples");

/// Per class, round(train_fraction * class size) members go to training. Both
/// index lists come back sorted.
std::pair<std::vector<Eigen::Index>, std::vector<Eigen::Index>> stratified_split(
    std::span<const Eigen::Index> labels, double train_fraction, std::uint64_t seed);

struct Fingerprint {
  Eigen::Index rows = 0;
  std::string hash;

  friend bool operator==(const Fingerprint&, const Fingerprint&) = default;
};

/// Row count and FNV-1a hash of every value in the dataset.
Fingerprint fingerprint(const Dataset& data);

/// How to rebuild one block of a fitted model from input files.
struct BlockDescriptor {
  std::string name;
  BlockKind kind = BlockKind::vector;
  std::vector<std::string> columns;
  std::vector<std::string> categories;
  /// Long-format sample file for distribution blocks.
  std::string samples_path;
  KernelSpec kernel;
};

/// Everything persisted about a fitted model.
struct ModelFile {
  static constexpr int kSchemaVersion = 1;

  int schema_version = kSchemaVersion;
  /// "prototypal" | "archetypal" | "simple_regression" | "multiple_regression"
  std::string kind;
  std::vector<BlockDescriptor> predictors;
  std::optional<BlockDescriptor> response;
  std::vector<PrototypeModel> prototypes;
  std::vector<Eigen::MatrixXd> C;
  Eigen::VectorXd tau;
  std::vector<double> fit_trace;
  Fingerprint fingerprint;
  std::vector<Eigen::Index> train_rows;
  std::vector<Eigen::Index> test_rows;
  std::uint64_t seed = 0;

  bool is_regression() const { return kind == "simple_regression" || kind == "multiple_regression"; }
  MultipleRegressionModel regression() const;
};

nlohmann::json to_json(const ModelFile& model);
ModelFile model_from_json(const nlohmann::json& doc);

std::string serialize_model(const ModelFile& model);
void save_model(const std::filesystem::path& path, const ModelFile& model);
ModelFile load_model(const std::filesystem::path& path);

struct GramFile {
  GramMatrix gram;
  KernelSpec kernel;
  Fingerprint fingerprint;
};

std::string serialize_gram(const GramFile& file);
void save_gram(const std::filesystem::path& path, const GramFile& file);
GramFile load_gram(const std::filesystem::path& path);

/// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace protoreg
