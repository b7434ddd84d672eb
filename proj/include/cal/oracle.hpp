#pragma once

#include "cal/common.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cal {

enum class QueryType { sample, rule };
enum class OracleKind { truth, uniform_noise, expert };

std::string to_string(QueryType t);
std::string to_string(OracleKind k);

// cost = base + class_surcharge[class] + boundary * (1 - margin_norm) + per-type cost
struct CostModel {
    double base = 1.0;
    std::vector<double> class_surcharge;
    double boundary = 0.0;
    double sample = 0.0;
    double rule = 0.0;

    [[nodiscard]] double cost(int cls, double margin_norm, QueryType type) const;
    // Lowest cost any query of this type can have.
    [[nodiscard]] double min_cost(QueryType type) const;
    void validate() const;
    [[nodiscard]] nlohmann::json to_json() const;
    static CostModel from_json(const nlohmann::json& j);
};

struct OracleSpec {
    std::string id = "oracle";
    OracleKind kind = OracleKind::truth;
    double noise = 0.0;         // uniform_noise: probability of a wrong label
    Eigen::MatrixXd confusion;  // expert: row = true class, column = emitted class
    double availability = 1.0;
    CostModel cost;
    std::uint64_t seed = 0;

    // Known probability of answering class `cls` correctly.
    [[nodiscard]] double expertise(int cls) const;
    void validate(std::size_t n_classes) const;
    [[nodiscard]] nlohmann::json to_json() const;
    static OracleSpec from_json(const nlohmann::json& j);
};

std::vector<OracleSpec> load_roster(const std::filesystem::path& path);
std::vector<OracleSpec> roster_from_json(const nlohmann::json& j);

struct LabelResponse {
    std::string oracle_id;
    RowId row = 0;
    int label = -1;
    double confidence = 0.0;
    double cost = 0.0;
    bool answered = false;
    [[nodiscard]] nlohmann::json to_json() const;
};

// Simulated answer; deterministic per (oracle seed, row, cycle, draw).
LabelResponse answer(const OracleSpec& oracle, RowId row, int true_label, std::size_t n_classes, double margin_norm,
                     std::size_t cycle, QueryType type = QueryType::sample, std::uint64_t draw = 0);

enum class OraclePolicy { best_expertise, cheapest_adequate };

struct PolicyConfig {
    OraclePolicy policy = OraclePolicy::best_expertise;
    double threshold = 0.8;     // cheapest_adequate: minimal expertise
    std::size_t committee = 1;  // oracles asked per query
    [[nodiscard]] nlohmann::json to_json() const;
    static PolicyConfig from_json(const nlohmann::json& j);
};

struct OracleChoice {
    std::size_t index = 0;
    bool fallback = false;  // no oracle met the adequacy threshold
};

OracleChoice choose_oracle(std::span<const OracleSpec> oracles, int predicted_class, QueryType type,
                           const PolicyConfig& policy, double margin_norm = 1.0);

// All oracles in preference order under `policy` (used for committees and re-routing).
std::vector<std::size_t> rank_oracles(std::span<const OracleSpec> oracles, int predicted_class, QueryType type,
                                      const PolicyConfig& policy, double margin_norm = 1.0);

struct FusedLabel {
    int label = -1;
    double confidence = 0.0;
};

// Confidence-weighted vote over answered responses; ties go to the lowest class.
FusedLabel fuse(std::span<const LabelResponse> responses);

struct LedgerEntry {
    std::size_t cycle = 0;
    std::string oracle_id;
    QueryType type = QueryType::sample;
    double cost = 0.0;
};

class CostLedger {
  public:
    void charge(std::size_t cycle, const std::string& oracle_id, QueryType type, double cost);
    [[nodiscard]] double total() const noexcept { return total_; }
    [[nodiscard]] const std::vector<LedgerEntry>& entries() const noexcept { return entries_; }
    [[nodiscard]] double remaining(double budget) const noexcept { return budget - total_; }
    [[nodiscard]] std::string to_csv() const;
    [[nodiscard]] nlohmann::json to_json() const;

  private:
    std::vector<LedgerEntry> entries_;
    double total_ = 0.0;
};

}  // namespace cal
