#pragma once

#include "cal/data.hpp"
#include "cal/evalx.hpp"
#include "cal/learner.hpp"
#include "cal/oracle.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace cal {

// Malformed experiment configuration; the message starts with a JSON pointer.
class ConfigError : public Error {
  public:
    using Error::Error;
};

struct DatasetSource {
    std::string name;
    std::filesystem::path csv;
    std::filesystem::path schema;
    // generated instead of read: kind, n, noise, seed
    std::optional<nlohmann::json> synthetic;

    [[nodiscard]] Dataset load() const;
};

struct MethodSpec {
    std::string name;
    LearnerConfig learner;
};

struct ExperimentConfig {
    std::vector<DatasetSource> datasets;
    std::vector<MethodSpec> methods;
    std::size_t folds = 5;
    std::uint64_t fold_seed = 0;
    std::vector<std::uint64_t> seeds{0};
    std::vector<OracleSpec> oracles;  // empty: a single truth oracle
    std::optional<std::filesystem::path> out;

    // Relative paths resolve against `base_dir`. Throws ConfigError.
    static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
    static ExperimentConfig load(const std::filesystem::path& path);
};

struct RunJob {
    std::size_t dataset = 0;
    std::size_t method = 0;
    std::size_t fold = 0;
    std::uint64_t seed = 0;
};

struct RunFailure {
    std::string file;
    std::string error;
};

struct ExperimentSummary {
    std::size_t produced = 0;
    std::size_t skipped = 0;
    std::vector<RunFailure> failures;
};

std::vector<RunJob> expand_jobs(const ExperimentConfig& cfg);
RunMeta job_meta(const ExperimentConfig& cfg, const RunJob& job);
// Oracles of one run: roster seeds mixed with the run seed and fold.
std::vector<OracleSpec> run_oracles(const ExperimentConfig& cfg, const RunJob& job);
// Everything one job needs, from the loaded dataset.
RunRecord execute_job(const ExperimentConfig& cfg, const RunJob& job, const Dataset& data);

// Runs every job over `parallel` workers, writes one JSONL per run and
// manifest.json. Completed runs are skipped unless `force`.
ExperimentSummary run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out, std::size_t parallel,
                                 bool force);

struct VerifyResult {
    bool ok = true;
    std::vector<std::string> problems;
};

// Recomputes every hash listed in the manifest.
VerifyResult verify_manifest(const std::filesystem::path& manifest);

std::vector<RunRecord> load_results(const std::filesystem::path& dir);

struct EvalOutput {
    nlohmann::json report;  // "report-v1"
    std::string text;
    nlohmann::json cdplot;  // "cdplot-v1", null with fewer than two methods
};

EvalOutput evaluate_results(const std::vector<RunRecord>& runs, const std::string& baseline, double alpha);

struct VizOptions {
    std::optional<std::pair<std::size_t, std::size_t>> dims;  // continuous column positions
    std::optional<std::size_t> cycle;                         // default: last recorded cycle
    std::size_t grid = 60;
};

// Decision grid, unit-Mahalanobis ellipses and selection history of a 2-D run.
nlohmann::json viz_data(const RunRecord& run, const VizOptions& opt = {});

std::string sanitize_name(const std::string& s);

}  // namespace cal
