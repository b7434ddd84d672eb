#pragma once

#include "cal/common.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace cal {

class MixtureModel;

enum class ColumnKind { continuous, categorical };

struct ColumnSpec {
    std::string name;
    ColumnKind kind = ColumnKind::continuous;
    std::vector<std::string> categories;  // categorical only, in index order
};

// Feature columns plus the name of the label column. The label column is not
// part of `columns` unless it is declared there as categorical, in which case
// its categories fix the class order.
struct FeatureSchema {
    std::vector<ColumnSpec> columns;
    std::string label = "class";
    std::vector<std::string> label_categories;

    [[nodiscard]] std::size_t dims() const noexcept { return columns.size(); }
    [[nodiscard]] std::vector<std::size_t> continuous_columns() const;
    [[nodiscard]] std::vector<std::size_t> categorical_columns() const;
    [[nodiscard]] std::optional<std::size_t> index_of(const std::string& name) const;

    // Throws IngestionError on duplicate names or categorical columns with <2 categories.
    void validate() const;

    [[nodiscard]] nlohmann::json to_json() const;
    static FeatureSchema from_json(const nlohmann::json& j);
};

FeatureSchema load_schema(const std::filesystem::path& path);
void save_schema(const FeatureSchema& schema, const std::filesystem::path& path);

struct Dataset {
    std::string name;
    FeatureSchema schema;
    RowMatrix rows;           // categorical cells hold the category index
    std::vector<int> labels;  // class indices
    std::vector<std::string> class_names;

    [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(rows.rows()); }
    [[nodiscard]] std::size_t n_classes() const noexcept { return class_names.size(); }
    [[nodiscard]] std::vector<std::size_t> class_counts() const;
    [[nodiscard]] Dataset subset(std::span<const RowId> ids) const;
};

Dataset load_dataset(const std::filesystem::path& csv_path, const std::filesystem::path& schema_path);
Dataset parse_dataset(const std::string& csv_text, const FeatureSchema& schema);
void save_dataset_csv(const Dataset& d, const std::filesystem::path& csv_path);

// Squared distance between two rows: Euclidean over continuous columns plus
// 2 per mismatching categorical column (one-hot encoding distance).
double row_distance_sq(const FeatureSchema& schema, std::span<const double> a, std::span<const double> b);

inline std::span<const double> row_span(const RowMatrix& m, Eigen::Index i) {
    return {m.data() + i * m.cols(), static_cast<std::size_t>(m.cols())};
}

struct ZScoreStats {
    std::vector<double> mean;
    std::vector<double> stddev;  // population std; 0 marks a zero-variance column
    [[nodiscard]] nlohmann::json to_json() const;
};

ZScoreStats zscore_fit(const Dataset& train);
void zscore_apply(const ZScoreStats& stats, Dataset& d);

struct NormalizedSets {
    Dataset train;
    std::vector<Dataset> others;
    ZScoreStats stats;
};

// Statistics come from `train` only; continuous columns of every set are transformed.
NormalizedSets zscore_fit_apply(const Dataset& train, const std::vector<Dataset>& others);

struct FoldSplit {
    std::size_t k = 0;
    std::vector<std::size_t> assignments;
    std::uint64_t seed = 0;

    [[nodiscard]] std::vector<RowId> test_ids(std::size_t fold) const;
    [[nodiscard]] std::vector<RowId> train_ids(std::size_t fold) const;
};

FoldSplit stratified_kfold(const Dataset& d, std::size_t k, std::uint64_t seed);
void save_folds_csv(const FoldSplit& split, const std::filesystem::path& path);

// Training/test pair for one fold, normalized with training statistics.
struct FoldData {
    Dataset train;
    Dataset test;
    ZScoreStats stats;
    std::size_t fold = 0;
};

FoldData make_fold(const Dataset& d, const FoldSplit& split, std::size_t fold);

// Pool bookkeeping over the training rows of one fold.
class PoolState {
  public:
    PoolState() = default;
    explicit PoolState(std::size_t n_train);

    [[nodiscard]] const std::vector<RowId>& labeled_ids() const noexcept { return labeled_; }
    [[nodiscard]] const std::map<RowId, int>& acquired_labels() const noexcept { return acquired_; }
    [[nodiscard]] const std::set<RowId>& unlabeled_ids() const noexcept { return unlabeled_; }
    [[nodiscard]] std::vector<RowId> unlabeled_vector() const { return {unlabeled_.begin(), unlabeled_.end()}; }
    [[nodiscard]] bool is_labeled(RowId id) const { return acquired_.contains(id); }
    [[nodiscard]] std::size_t n_train() const noexcept { return n_train_; }

    // Moves `id` to the labeled set, or replaces its label when already labeled.
    void set_label(RowId id, int label);

  private:
    std::size_t n_train_ = 0;
    std::vector<RowId> labeled_;
    std::map<RowId, int> acquired_;
    std::set<RowId> unlabeled_;
};

// Unsupervised initial selection: density-weighted farthest-first traversal.
std::vector<RowId> select_initial(const Dataset& train, std::size_t n_init, const MixtureModel& mixture, std::uint64_t seed);

}  // namespace cal
