#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "bmtl/baselines.hpp"
#include "bmtl/inference.hpp"
#include "bmtl/model.hpp"
#include "bmtl/synthgen.hpp"

namespace bmtl {

/// log(c) - mean(log(c)). Entries must be strictly positive.
Eigen::VectorXd clr_transform(const Eigen::VectorXd& counts);

struct LoadOptions {
  double pseudocount = 1.0;  // added to every count before CLR
  bool apply_clr = false;
  /// Column that splits rows into independent datasets. Only used by
  /// load_grouped_datasets; load_dataset ignores a column of that name.
  std::string group_column = "group_id";
  bool append_intercept = false;  // trailing constant-1 feature, never CLR-transformed
};

/// Name of the feature appended by LoadOptions::append_intercept.
inline constexpr const char* kInterceptFeature = "(intercept)";

/// Reads a CSV with columns sample_id, task_id, label and one column per
/// feature. Tasks appear in order of first occurrence, rows in file order.
MultitaskDataset load_dataset(const std::filesystem::path& path, const LoadOptions& options = {});

struct DatasetGroup {
  std::string group;
  MultitaskDataset dataset;
};

/// Splits the rows by options.group_column, one dataset per group in order
/// of first occurrence. Throws ParseError if the column is missing.
std::vector<DatasetGroup> load_grouped_datasets(const std::filesystem::path& path,
                                                const LoadOptions& options = {});

/// Writes the dataset in the format load_dataset reads. Rows without a
/// stored sample id are named <task_id>_<row>. A non-empty group value adds
/// a group column.
void save_dataset(const MultitaskDataset& data, const std::filesystem::path& path);
void save_grouped_datasets(const std::vector<DatasetGroup>& groups, const std::filesystem::path& path,
                           const std::string& group_column = "group_id");

/// Ground truth CSV: an `entry` column (z0, w0, theta0, sigma0), a task_id
/// column and one column per feature.
void save_truth(const GroundTruth& truth, const MultitaskDataset& data,
                const std::filesystem::path& path);
GroundTruth load_truth(const std::filesystem::path& path);

/// CRC-32 over the task ids, feature names, labels and design entries.
std::string dataset_fingerprint(const MultitaskDataset& data);

/// CRC-32 of a file's bytes, "crc32:xxxxxxxx".
std::string file_checksum(const std::filesystem::path& path);

/// Decimal text with 17 significant digits, enough for an exact round trip.
std::string format_double(double value);

struct Preprocessing {
  bool apply_clr = false;
  double pseudocount = 1.0;
  bool intercept = false;
};

struct BayesModel {
  Hyperparameters hyper;
  FitConfig config;
  FitResult fit;
};

struct LinearModel {
  std::vector<L1LogisticModel> models;  // one per task, or a single pooled model
  bool pooled = false;
};

/// A fitted model with everything needed to predict and score it later.
struct ModelArchive {
  static constexpr int kFormatVersion = 1;

  std::string method;  // "bayes-mtl", "stl-lc" or "pooled-lc"
  std::string group;   // empty unless fitted on one group of a grouped file
  std::vector<std::string> task_ids;
  std::vector<std::string> feature_names;
  std::string data_fingerprint;
  Preprocessing preprocessing;
  std::optional<BayesModel> bayes;
  std::optional<LinearModel> linear;

  std::size_t num_tasks() const noexcept { return task_ids.size(); }
  Eigen::Index feature_dim() const noexcept { return static_cast<Eigen::Index>(feature_names.size()); }

  /// Plug-in probabilities for rows of X under task `task`.
  Eigen::VectorXd predict_proba(std::size_t task, const Eigen::MatrixXd& X) const;
  /// T x d point estimate of w_t o z.
  Eigen::MatrixXd effective_weights() const;
  /// Per-feature selection scores: phi for the Bayesian model, max_t |w_tj| otherwise.
  Eigen::VectorXd support_scores() const;
  /// Binary support: phi >= 0.5, or any |w_tj| > 1e-8.
  Eigen::VectorXd selected_support() const;
  /// Weights entering the sparsity ratio: m_tj [phi_j >= 0.5] for the
  /// Bayesian model, the fitted coefficients otherwise.
  Eigen::MatrixXd thresholded_weights() const;

  /// Throws ShapeError if `data` does not match the model's tasks/features.
  void check_compatible(const MultitaskDataset& data) const;
  /// Index of `task_id` among the model's tasks.
  std::size_t task_index(const std::string& task_id) const;
};

void save_model(const ModelArchive& model, const std::filesystem::path& path);
ModelArchive load_model(const std::filesystem::path& path);

/// Writes `text` to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace bmtl
