#pragma once

#include "cal/cmm.hpp"
#include "cal/common.hpp"
#include "cal/data.hpp"
#include "cal/kernels.hpp"
#include "cal/mixture.hpp"
#include "cal/oracle.hpp"
#include "cal/rules.hpp"
#include "cal/strategy.hpp"
#include "cal/svm.hpp"

#include <nlohmann/json.hpp>

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace cal {

enum class ModelKind { cmm, svm_rbf, svm_rwm };
std::string to_string(ModelKind k);
ModelKind model_from_string(const std::string& s);

struct LearnerConfig {
    ModelKind model = ModelKind::svm_rwm;
    StrategyKind strategy = StrategyKind::four_ds;
    std::size_t query_size = 1;
    std::size_t n_init = 8;
    std::optional<double> budget;
    std::optional<std::size_t> max_cycles;
    std::size_t saturation_window = 0;  // 0 disables the saturation test
    double saturation_epsilon = 1e-3;
    PolicyConfig oracle_policy;
    bool requery = false;        // allow asking again about labeled rows (multi-oracle only)
    std::size_t rule_cadence = 0;  // every r-th cycle one rule query replaces a sample query
    double diversity = 0.5;        // user diversity weight, used when q > 1
    ScheduleConstants schedule;
    VIConfig vi;
    SmoOptions smo;
    std::optional<double> C;      // fixed instead of cross-validated
    std::optional<double> gamma;  // fixed instead of the median heuristic
    std::uint64_t seed = 0;

    void validate() const;
    [[nodiscard]] nlohmann::json to_json() const;
    static LearnerConfig from_json(const nlohmann::json& j);
};

enum class StopReason { none, budget, max_cycles, pool_exhausted, saturated, oracle_unavailable, stopped };
std::string to_string(StopReason r);

struct QueryRecord {
    QueryType type = QueryType::sample;
    RowId row = 0;           // sample: training row id
    std::size_t component = 0;  // rule: mixture component
    std::vector<double> x;
    int label = -1;          // fused label or rule conclusion; -1 when nothing was acquired
    double confidence = 0.0;
    std::optional<int> true_label;
    std::vector<LabelResponse> responses;
    bool initial = false;
    [[nodiscard]] nlohmann::json to_json() const;
};

struct CycleRecord {
    std::size_t cycle = 0;
    std::size_t n_labeled = 0;
    double accuracy = 0.0;
    std::size_t pool_size = 0;
    std::optional<SelectionWeights> weights;
    double cost_spent = 0.0;
    double cdm = 0.0;  // labeled-set class distribution vs the training fold's
    double C = 0.0;
    double gamma = 0.0;
    std::vector<QueryRecord> queries;
    [[nodiscard]] nlohmann::json to_json() const;
};

struct RunMeta {
    std::string dataset = "dataset";
    std::string method = "method";
    std::size_t fold = 0;
    std::uint64_t seed = 0;
};

struct RunRecord {
    RunMeta meta;
    std::vector<CycleRecord> cycles;
    StopReason stop_reason = StopReason::none;
    nlohmann::json footer;  // final metrics and model references

    [[nodiscard]] std::string to_jsonl() const;
    // Lines of a JSONL record: cycle objects followed by one footer object.
    static RunRecord from_jsonl(const std::string& text);
    [[nodiscard]] std::string file_name() const;
};

std::string run_file_name(const RunMeta& meta);

// One query waiting for an answer.
struct PendingQuery {
    QueryType type = QueryType::sample;
    RowId row = 0;
    std::size_t component = 0;
    std::size_t cycle = 0;
    std::size_t sequence = 0;  // monotone over the whole run
    bool initial = false;
    std::vector<double> x;
    std::vector<double> posterior;
    int predicted = -1;
    double margin_norm = 1.0;
    nlohmann::json scores;  // criterion scores of the row, or null
    std::optional<Rule> rule;
};

// Stepwise PAL loop over one fold. Batch runs answer every pending query from
// simulated oracles; the session server feeds human answers instead.
class ActiveLearner {
  public:
    // `mixture` may carry a model already fitted on this fold's training rows.
    ActiveLearner(FoldData fold, LearnerConfig cfg, RunMeta meta = {},
                  std::shared_ptr<const MixtureModel> mixture = nullptr);

    [[nodiscard]] const LearnerConfig& config() const noexcept { return cfg_; }
    [[nodiscard]] const FoldData& fold() const noexcept { return fold_; }
    [[nodiscard]] const MixtureModel& mixture() const noexcept { return *mixture_; }
    [[nodiscard]] std::shared_ptr<const MixtureModel> mixture_ptr() const noexcept { return mixture_; }
    [[nodiscard]] const CmmClassifier& cmm() const noexcept { return cmm_; }
    [[nodiscard]] const std::optional<SvmModel>& svm() const noexcept { return svm_; }
    [[nodiscard]] const PoolState& pool() const noexcept { return pool_; }
    [[nodiscard]] const CostLedger& ledger() const noexcept { return ledger_; }
    [[nodiscard]] const RunRecord& record() const noexcept { return record_; }
    [[nodiscard]] const std::vector<RowId>& initial_ids() const noexcept { return initial_; }
    [[nodiscard]] bool stopped() const noexcept { return reason_ != StopReason::none; }
    [[nodiscard]] StopReason stop_reason() const noexcept { return reason_; }
    [[nodiscard]] std::size_t cycle() const noexcept { return cycle_; }
    [[nodiscard]] std::size_t remaining_in_batch() const noexcept { return queue_.size(); }
    [[nodiscard]] std::vector<Rule> rules() const;

    [[nodiscard]] std::optional<PendingQuery> pending() const;

    // Answers the pending query. Unanswered responses are allowed; an empty
    // answered set leaves the row unlabeled. Charges every answered response.
    void answer_sample(const std::vector<LabelResponse>& responses);
    // Rule conclusion with confidence gamma in (0,1].
    void answer_rule(int conclusion, double confidence, const std::string& oracle_id, double cost);
    void stop(StopReason reason = StopReason::stopped);

    // Answers queries from `oracles` (ground truth from the fold) until the run stops.
    void run_simulated(const std::vector<OracleSpec>& oracles);
    // Oracles whose cost models bound the budget pre-check (the session server registers its annotators here).
    void set_oracles(std::vector<OracleSpec> oracles);

    // Predictions of the current model.
    [[nodiscard]] std::vector<int> predict(const RowMatrix& rows) const;
    // Current-model decision values on `rows` (rows x machines for SVMs, rows x classes posteriors for CMM).
    [[nodiscard]] RowMatrix decision(const RowMatrix& rows) const;

    // Component class by responsibility-weighted majority of the true training labels (simulation only).
    [[nodiscard]] int component_truth(std::size_t component) const;

  private:
    void begin_initial();
    void complete_cycle();
    void plan_cycle(bool retry = false);
    void retrain();
    double evaluate_test() const;
    std::optional<StopReason> check_stop() const;
    [[nodiscard]] double min_query_cost(QueryType type) const;
    void pop_and_advance();
    nlohmann::json build_footer() const;
    std::size_t horizon() const;
    void accept_sample(const std::vector<LabelResponse>& responses, bool charge);
    void accept_rule(int conclusion, double confidence, const std::vector<LabelResponse>& responses, bool charge);

    FoldData fold_;
    LearnerConfig cfg_;
    std::shared_ptr<const MixtureModel> mixture_;
    RowMatrix train_resp_;
    RowMatrix test_resp_;
    std::vector<double> train_logdens_;
    PreparedRows train_prepared_;
    PreparedRows test_prepared_;
    KernelSpec kernel_;
    double gamma_ = 1.0;
    double C_ = 1.0;
    CmmClassifier base_cmm_;
    CmmClassifier cmm_;
    std::optional<SvmModel> svm_;
    TermBoundaries bounds_;
    std::vector<std::tuple<std::size_t, int, double>> conclusions_;
    PoolState pool_;
    CostLedger ledger_;
    RunRecord record_;
    std::vector<RowId> initial_;
    std::vector<PendingQuery> queue_;
    std::vector<QueryRecord> cycle_queries_;
    std::vector<RowId> attempted_;
    std::size_t acquired_in_cycle_ = 0;
    std::size_t samples_in_cycle_ = 0;
    bool retried_ = false;
    bool budget_blocked_ = false;
    std::optional<SelectionWeights> cycle_weights_;
    std::size_t cycle_ = 0;
    std::size_t sequence_ = 0;
    StopReason reason_ = StopReason::none;
    std::vector<OracleSpec> oracles_;
};

// Acquires one label from `oracles` per the policy: a committee of
// `policy.committee` answered oracles in preference order (unanswered ones are
// re-routed to the next oracle), fused. Charges only answered responses and
// refuses a query the remaining budget cannot cover.
struct Acquisition {
    std::vector<LabelResponse> responses;
    std::optional<FusedLabel> fused;
    bool budget_refused = false;
};

Acquisition acquire_label(RowId row, int true_label, int predicted, double margin_norm, QueryType type,
                          const std::vector<OracleSpec>& oracles, const PolicyConfig& policy, std::size_t n_classes,
                          std::size_t cycle, CostLedger& ledger, std::optional<double> budget);

// Batch form: every acquired label is merged into `pool` (fused label wins on re-query).
std::vector<Acquisition> acquire_labels(std::span<const RowId> ids, std::span<const int> true_labels,
                                        std::span<const int> predicted, std::span<const double> margins,
                                        const std::vector<OracleSpec>& oracles, const PolicyConfig& policy,
                                        std::size_t n_classes, std::size_t cycle, CostLedger& ledger,
                                        std::optional<double> budget, PoolState& pool);

// check_stop for a saturation window: the best accuracy of the last w cycles
// improves on the best of the preceding w by less than epsilon.
bool saturated(std::span<const double> accuracy, std::size_t window, double epsilon);

// Simulated run with ground-truth answers from `oracles`.
RunRecord run(const FoldData& fold, const LearnerConfig& cfg, const std::vector<OracleSpec>& oracles,
              const RunMeta& meta = {}, std::shared_ptr<const MixtureModel> mixture = nullptr);

// The mixture the learner fits for `fold` under `cfg` (shareable across methods with equal VI settings and seed).
std::shared_ptr<const MixtureModel> fit_fold_mixture(const FoldData& fold, const LearnerConfig& cfg);

}  // namespace cal
