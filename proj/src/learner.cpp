#include "cal/learner.hpp"

#include "cal/evalx.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace cal {

std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::cmm:
            return "cmm";
        case ModelKind::svm_rbf:
            return "svm_rbf";
        case ModelKind::svm_rwm:
            return "svm_rwm";
    }
    return "?";
}

ModelKind model_from_string(const std::string& s) {
    if (s == "cmm" || s == "CMM") {
        return ModelKind::cmm;
    }
    if (s == "svm_rbf" || s == "rbf" || s == "RBF") {
        return ModelKind::svm_rbf;
    }
    if (s == "svm_rwm" || s == "rwm" || s == "RWM") {
        return ModelKind::svm_rwm;
    }
    throw Error("unknown model '" + s + "' (expected cmm, svm_rbf or svm_rwm)");
}

std::string to_string(StopReason r) {
    switch (r) {
        case StopReason::none:
            return "none";
        case StopReason::budget:
            return "budget";
        case StopReason::max_cycles:
            return "max_cycles";
        case StopReason::pool_exhausted:
            return "pool_exhausted";
        case StopReason::saturated:
            return "saturated";
        case StopReason::oracle_unavailable:
            return "oracle_unavailable";
        case StopReason::stopped:
            return "stopped";
    }
    return "?";
}

void LearnerConfig::validate() const {
    if (query_size < 1) {
        throw Error("config: query_size must be >= 1");
    }
    if (n_init < 1) {
        throw Error("config: n_init must be >= 1");
    }
    if (!budget && !max_cycles) {
        throw Error("config: budget and max_cycles cannot both be unbounded");
    }
    if (budget && !(*budget >= 0.0)) {
        throw Error("config: budget must be non-negative");
    }
    if (saturation_window > 0 && !(saturation_epsilon >= 0.0)) {
        throw Error("config: saturation epsilon must be non-negative");
    }
    if (!(diversity >= 0.0 && diversity <= 1.0)) {
        throw Error("config: diversity must be in [0,1]");
    }
    if (oracle_policy.committee < 1) {
        throw Error("config: committee size must be >= 1");
    }
    if (C && !(*C > 0.0)) {
        throw Error("config: C must be positive");
    }
    if (gamma && !(*gamma > 0.0)) {
        throw Error("config: gamma must be positive");
    }
    vi.validate();
}

nlohmann::json LearnerConfig::to_json() const {
    nlohmann::json j{{"model", to_string(model)},
                     {"strategy", to_string(strategy)},
                     {"query_size", query_size},
                     {"n_init", n_init},
                     {"budget", budget ? nlohmann::json(*budget) : nlohmann::json(nullptr)},
                     {"max_cycles", max_cycles ? nlohmann::json(*max_cycles) : nlohmann::json(nullptr)},
                     {"saturation", {{"window", saturation_window}, {"epsilon", saturation_epsilon}}},
                     {"oracle_policy", oracle_policy.to_json()},
                     {"requery", requery},
                     {"rule_cadence", rule_cadence},
                     {"diversity", diversity},
                     {"schedule",
                      {{"distribution_start", schedule.distribution_start},
                       {"distribution_decay", schedule.distribution_decay},
                       {"density_start", schedule.density_start},
                       {"density_decay", schedule.density_decay}}},
                     {"vi", vi.to_json()},
                     {"smo", {{"tolerance", smo.tolerance}, {"max_iterations", smo.max_iterations}}},
                     {"C", C ? nlohmann::json(*C) : nlohmann::json(nullptr)},
                     {"gamma", gamma ? nlohmann::json(*gamma) : nlohmann::json(nullptr)},
                     {"seed", seed}};
    return j;
}

LearnerConfig LearnerConfig::from_json(const nlohmann::json& j) {
    if (!j.is_object()) {
        throw Error("config: learner config must be an object");
    }
    LearnerConfig c;
    try {
        if (j.contains("model")) {
            c.model = model_from_string(j["model"].get<std::string>());
        }
        if (j.contains("strategy")) {
            c.strategy = strategy_from_string(j["strategy"].get<std::string>());
        }
        c.query_size = j.value("query_size", c.query_size);
        c.n_init = j.value("n_init", c.n_init);
        if (j.contains("budget") && !j["budget"].is_null()) {
            c.budget = j["budget"].get<double>();
        }
        if (j.contains("max_cycles") && !j["max_cycles"].is_null()) {
            c.max_cycles = j["max_cycles"].get<std::size_t>();
        }
        if (j.contains("saturation")) {
            c.saturation_window = j["saturation"].value("window", c.saturation_window);
            c.saturation_epsilon = j["saturation"].value("epsilon", c.saturation_epsilon);
        }
        if (j.contains("oracle_policy")) {
            c.oracle_policy = PolicyConfig::from_json(j["oracle_policy"]);
        }
        c.requery = j.value("requery", c.requery);
        c.rule_cadence = j.value("rule_cadence", c.rule_cadence);
        c.diversity = j.value("diversity", c.diversity);
        if (j.contains("schedule")) {
            const auto& s = j["schedule"];
            c.schedule.distribution_start = s.value("distribution_start", c.schedule.distribution_start);
            c.schedule.distribution_decay = s.value("distribution_decay", c.schedule.distribution_decay);
            c.schedule.density_start = s.value("density_start", c.schedule.density_start);
            c.schedule.density_decay = s.value("density_decay", c.schedule.density_decay);
        }
        if (j.contains("vi")) {
            c.vi = VIConfig::from_json(j["vi"]);
        }
        if (j.contains("smo")) {
            c.smo.tolerance = j["smo"].value("tolerance", c.smo.tolerance);
            c.smo.max_iterations = j["smo"].value("max_iterations", c.smo.max_iterations);
        }
        if (j.contains("C") && !j["C"].is_null()) {
            c.C = j["C"].get<double>();
        }
        if (j.contains("gamma") && !j["gamma"].is_null()) {
            c.gamma = j["gamma"].get<double>();
        }
        c.seed = j.value("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

nlohmann::json QueryRecord::to_json() const {
    nlohmann::json responses_j = nlohmann::json::array();
    for (const auto& r : responses) {
        responses_j.push_back(r.to_json());
    }
    nlohmann::json j{{"type", to_string(type)},
                     {"initial", initial},
                     {"label", label >= 0 ? nlohmann::json(label) : nlohmann::json(nullptr)},
                     {"confidence", confidence},
                     {"true_label", true_label ? nlohmann::json(*true_label) : nlohmann::json(nullptr)},
                     {"responses", responses_j}};
    if (type == QueryType::sample) {
        j["row"] = row;
        j["x"] = x;
    } else {
        j["component"] = component;
    }
    return j;
}

nlohmann::json CycleRecord::to_json() const {
    nlohmann::json q = nlohmann::json::array();
    for (const auto& r : queries) {
        q.push_back(r.to_json());
    }
    return {{"type", "cycle"},
            {"cycle", cycle},
            {"n_labeled", n_labeled},
            {"accuracy", accuracy},
            {"pool_size", pool_size},
            {"weights", weights ? weights->to_json() : nlohmann::json(nullptr)},
            {"cost_spent", cost_spent},
            {"cdm", cdm},
            {"C", C},
            {"gamma", gamma},
            {"queries", q}};
}

std::string run_file_name(const RunMeta& meta) {
    return meta.dataset + "_" + meta.method + "_" + std::to_string(meta.fold) + "_" + std::to_string(meta.seed) +
           ".jsonl";
}

std::string RunRecord::file_name() const { return run_file_name(meta); }

std::string RunRecord::to_jsonl() const {
    std::string out;
    for (const auto& c : cycles) {
        out += c.to_json().dump();
        out += '\n';
    }
    out += footer.dump();
    out += '\n';
    return out;
}

RunRecord RunRecord::from_jsonl(const std::string& text) {
    RunRecord r;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    bool have_footer = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw Error("run record line " + std::to_string(lineno) + ": " + e.what());
        }
        auto type = j.value("type", std::string());
        if (type == "cycle") {
            CycleRecord c;
            c.cycle = j.at("cycle").get<std::size_t>();
            c.n_labeled = j.at("n_labeled").get<std::size_t>();
            c.accuracy = j.at("accuracy").get<double>();
            c.pool_size = j.value("pool_size", std::size_t{0});
            c.cost_spent = j.value("cost_spent", 0.0);
            c.cdm = j.value("cdm", 0.0);
            c.C = j.value("C", 0.0);
            c.gamma = j.value("gamma", 0.0);
            if (j.contains("weights") && j["weights"].is_object()) {
                const auto& w = j["weights"];
                c.weights = SelectionWeights{w.value("density", 0.0), w.value("distance", 0.0),
                                             w.value("diversity", 0.0), w.value("distribution", 0.0)};
            }
            if (j.contains("queries")) {
                for (const auto& jq : j["queries"]) {
                    QueryRecord q;
                    q.type = jq.value("type", std::string("sample")) == "rule" ? QueryType::rule : QueryType::sample;
                    q.initial = jq.value("initial", false);
                    q.row = jq.value("row", RowId{0});
                    q.component = jq.value("component", std::size_t{0});
                    q.x = jq.value("x", std::vector<double>{});
                    q.label = jq["label"].is_null() ? -1 : jq["label"].get<int>();
                    q.confidence = jq.value("confidence", 0.0);
                    if (jq.contains("true_label") && !jq["true_label"].is_null()) {
                        q.true_label = jq["true_label"].get<int>();
                    }
                    for (const auto& jr : jq.value("responses", nlohmann::json::array())) {
                        LabelResponse resp;
                        resp.oracle_id = jr.value("oracle", std::string());
                        resp.row = jr.value("row", RowId{0});
                        resp.label = jr.value("label", -1);
                        resp.confidence = jr.value("confidence", 0.0);
                        resp.cost = jr.value("cost", 0.0);
                        resp.answered = jr.value("answered", false);
                        q.responses.push_back(std::move(resp));
                    }
                    c.queries.push_back(std::move(q));
                }
            }
            r.cycles.push_back(std::move(c));
        } else if (type == "footer") {
            r.footer = j;
            have_footer = true;
            r.meta.dataset = j.value("dataset", r.meta.dataset);
            r.meta.method = j.value("method", r.meta.method);
            r.meta.fold = j.value("fold", r.meta.fold);
            r.meta.seed = j.value("seed", r.meta.seed);
            auto reason = j.value("stop_reason", std::string("none"));
            for (auto s : {StopReason::none, StopReason::budget, StopReason::max_cycles, StopReason::pool_exhausted,
                           StopReason::saturated, StopReason::oracle_unavailable, StopReason::stopped}) {
                if (to_string(s) == reason) {
                    r.stop_reason = s;
                }
            }
        } else {
            throw Error("run record line " + std::to_string(lineno) + ": unknown line type '" + type + "'");
        }
    }
    if (!have_footer) {
        throw Error("run record has no footer line");
    }
    for (std::size_t i = 0; i < r.cycles.size(); ++i) {
        if (r.cycles[i].cycle != i) {
            throw Error("run record cycles are not contiguous from 0");
        }
    }
    return r;
}

bool saturated(std::span<const double> accuracy, std::size_t window, double epsilon) {
    if (window == 0 || accuracy.size() < 2 * window) {
        return false;
    }
    auto end = accuracy.end();
    double last = *std::max_element(end - static_cast<std::ptrdiff_t>(window), end);
    double prev = *std::max_element(end - static_cast<std::ptrdiff_t>(2 * window), end - static_cast<std::ptrdiff_t>(window));
    return last - prev < epsilon;
}

Acquisition acquire_label(RowId row, int true_label, int predicted, double margin_norm, QueryType type,
                          const std::vector<OracleSpec>& oracles, const PolicyConfig& policy, std::size_t n_classes,
                          std::size_t cycle, CostLedger& ledger, std::optional<double> budget) {
    if (oracles.empty()) {
        throw Error("acquire_label: no oracle configured");
    }
    Acquisition acq;
    auto order = rank_oracles(oracles, predicted, type, policy, margin_norm);
    std::vector<LabelResponse> answered;
    for (auto idx : order) {
        if (answered.size() >= policy.committee) {
            break;
        }
        const auto& o = oracles[idx];
        if (budget && ledger.remaining(*budget) < o.cost.min_cost(type)) {
            acq.budget_refused = true;
            break;
        }
        auto r = answer(o, row, true_label, n_classes, margin_norm, cycle, type);
        if (r.answered) {
            ledger.charge(cycle, o.id, type, r.cost);
            answered.push_back(r);
        }
        acq.responses.push_back(std::move(r));
    }
    if (!answered.empty()) {
        acq.fused = fuse(answered);
    }
    return acq;
}

std::vector<Acquisition> acquire_labels(std::span<const RowId> ids, std::span<const int> true_labels,
                                        std::span<const int> predicted, std::span<const double> margins,
                                        const std::vector<OracleSpec>& oracles, const PolicyConfig& policy,
                                        std::size_t n_classes, std::size_t cycle, CostLedger& ledger,
                                        std::optional<double> budget, PoolState& pool) {
    std::vector<Acquisition> out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        int pred = i < predicted.size() ? predicted[i] : -1;
        double margin = i < margins.size() ? margins[i] : 1.0;
        auto acq = acquire_label(ids[i], true_labels[ids[i]], pred, margin, QueryType::sample, oracles, policy,
                                 n_classes, cycle, ledger, budget);
        if (acq.fused) {
            pool.set_label(ids[i], acq.fused->label);
        }
        bool refused = acq.budget_refused;
        out.push_back(std::move(acq));
        if (refused) {
            break;
        }
    }
    return out;
}

namespace {

RowMatrix gather_rows(const RowMatrix& m, std::span<const RowId> ids) {
    RowMatrix out(static_cast<Eigen::Index>(ids.size()), m.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(ids[i]));
    }
    return out;
}

std::vector<double> row_vector(const RowMatrix& m, Eigen::Index i) {
    auto s = row_span(m, i);
    return {s.begin(), s.end()};
}

}  // namespace

std::shared_ptr<const MixtureModel> fit_fold_mixture(const FoldData& fold, const LearnerConfig& cfg) {
    VIConfig vi = cfg.vi;
    vi.seed = derive_seed(cfg.seed, vi.seed, fold.fold, 0x6d);
    vi.max_components = std::min(vi.max_components, fold.train.size());
    return std::make_shared<const MixtureModel>(fit_vi(fold.train.rows, fold.train.schema, vi));
}

ActiveLearner::ActiveLearner(FoldData fold, LearnerConfig cfg, RunMeta meta,
                             std::shared_ptr<const MixtureModel> mixture)
    : fold_(std::move(fold)), cfg_(std::move(cfg)), mixture_(std::move(mixture)) {
    cfg_.validate();
    const auto n_train = fold_.train.size();
    if (n_train < 2) {
        throw Error("learner: the training fold needs at least 2 rows");
    }
    if (fold_.train.n_classes() < 2) {
        throw Error("learner: need at least 2 classes");
    }
    if (cfg_.query_size > n_train) {
        throw Error("learner: query size " + std::to_string(cfg_.query_size) + " exceeds pool size " +
                    std::to_string(n_train));
    }
    const auto& schema = fold_.train.schema;
    if (!mixture_) {
        mixture_ = fit_fold_mixture(fold_, cfg_);
    }
    train_resp_ = kernels::responsibilities(*mixture_, fold_.train.rows);
    test_resp_ = kernels::responsibilities(*mixture_, fold_.test.rows);
    train_logdens_ = kernels::log_densities(*mixture_, fold_.train.rows);
    bounds_ = term_boundaries(fold_.train.rows, schema);
    base_cmm_ = fit_assignments(mixture_, RowMatrix(0, static_cast<Eigen::Index>(mixture_->size())), {},
                                fold_.train.n_classes());
    cmm_ = base_cmm_;

    kernel_.kind = cfg_.model == ModelKind::svm_rwm ? KernelKind::rwm : KernelKind::rbf;
    kernel_.mixture = mixture_;
    kernel_.gamma = 1.0;
    if (cfg_.model != ModelKind::cmm) {
        train_prepared_ = kernels::prepare(kernel_, fold_.train.rows);
        test_prepared_ = kernels::prepare(kernel_, fold_.test.rows);
        gamma_ = cfg_.gamma ? *cfg_.gamma : median_heuristic_gamma(fold_.train.rows, schema, derive_seed(cfg_.seed, 0x67));
        kernel_.gamma = gamma_;
    }
    pool_ = PoolState(n_train);
    record_.meta = std::move(meta);
    initial_ = select_initial(fold_.train, std::min(cfg_.n_init, n_train), *mixture_, derive_seed(cfg_.seed, 0x69));
    begin_initial();
}

void ActiveLearner::set_oracles(std::vector<OracleSpec> oracles) {
    for (const auto& o : oracles) {
        o.validate(fold_.train.n_classes());
    }
    oracles_ = std::move(oracles);
}

void ActiveLearner::begin_initial() {
    cycle_ = 0;
    for (auto id : initial_) {
        PendingQuery q;
        q.type = QueryType::sample;
        q.row = id;
        q.cycle = 0;
        q.sequence = sequence_++;
        q.initial = true;
        q.x = row_vector(fold_.train.rows, static_cast<Eigen::Index>(id));
        queue_.push_back(std::move(q));
    }
    samples_in_cycle_ = queue_.size();
}

std::optional<PendingQuery> ActiveLearner::pending() const {
    if (stopped() || queue_.empty()) {
        return std::nullopt;
    }
    return queue_.front();
}

std::vector<Rule> ActiveLearner::rules() const { return extract_rules(cmm_, bounds_); }

double ActiveLearner::min_query_cost(QueryType type) const {
    if (oracles_.empty()) {
        return CostModel{}.min_cost(type);
    }
    double best = std::numeric_limits<double>::infinity();
    for (const auto& o : oracles_) {
        best = std::min(best, o.cost.min_cost(type));
    }
    return best;
}

void ActiveLearner::accept_sample(const std::vector<LabelResponse>& responses, bool charge) {
    if (stopped() || queue_.empty()) {
        throw Error("learner: no pending query");
    }
    const auto& q = queue_.front();
    if (q.type != QueryType::sample) {
        throw Error("learner: pending query is a rule query");
    }
    std::vector<LabelResponse> answered;
    for (const auto& r : responses) {
        if (r.answered) {
            if (r.label < 0 || static_cast<std::size_t>(r.label) >= fold_.train.n_classes()) {
                throw Error("learner: label out of range");
            }
            if (!(r.confidence >= 0.0 && r.confidence <= 1.0)) {
                throw Error("learner: confidence must be in [0,1]");
            }
            answered.push_back(r);
        }
    }
    QueryRecord rec;
    rec.type = QueryType::sample;
    rec.row = q.row;
    rec.x = q.x;
    rec.initial = q.initial;
    rec.true_label = fold_.train.labels[q.row];
    rec.responses = responses;
    if (!answered.empty()) {
        if (charge) {
            for (const auto& r : answered) {
                ledger_.charge(cycle_, r.oracle_id, QueryType::sample, r.cost);
            }
        }
        auto f = fuse(answered);
        rec.label = f.label;
        rec.confidence = f.confidence;
        pool_.set_label(q.row, f.label);
        ++acquired_in_cycle_;
    }
    attempted_.push_back(q.row);
    cycle_queries_.push_back(std::move(rec));
}

void ActiveLearner::accept_rule(int conclusion, double confidence, const std::vector<LabelResponse>& responses,
                                bool charge) {
    if (stopped() || queue_.empty()) {
        throw Error("learner: no pending query");
    }
    const auto& q = queue_.front();
    if (q.type != QueryType::rule) {
        throw Error("learner: pending query is a sample query");
    }
    QueryRecord rec;
    rec.type = QueryType::rule;
    rec.component = q.component;
    rec.responses = responses;
    rec.true_label = component_truth(q.component);
    if (conclusion >= 0) {
        if (static_cast<std::size_t>(conclusion) >= fold_.train.n_classes()) {
            throw Error("learner: conclusion out of range");
        }
        if (!(confidence > 0.0 && confidence <= 1.0)) {
            throw Error("learner: rule confidence must be in (0,1]");
        }
        if (charge) {
            for (const auto& r : responses) {
                if (r.answered) {
                    ledger_.charge(cycle_, r.oracle_id, QueryType::rule, r.cost);
                }
            }
        }
        conclusions_.emplace_back(q.component, conclusion, confidence);
        cmm_ = apply_conclusion(cmm_, q.component, conclusion, confidence);
        rec.label = conclusion;
        rec.confidence = confidence;
        ++acquired_in_cycle_;
    }
    cycle_queries_.push_back(std::move(rec));
}

void ActiveLearner::answer_sample(const std::vector<LabelResponse>& responses) {
    accept_sample(responses, true);
    pop_and_advance();
}

void ActiveLearner::answer_rule(int conclusion, double confidence, const std::string& oracle_id, double cost) {
    LabelResponse r;
    r.oracle_id = oracle_id;
    r.row = queue_.empty() ? 0 : queue_.front().component;
    r.label = conclusion;
    r.confidence = confidence;
    r.cost = cost;
    r.answered = true;
    accept_rule(conclusion, confidence, {r}, true);
    pop_and_advance();
}

void ActiveLearner::stop(StopReason reason) {
    if (stopped()) {
        return;
    }
    reason_ = reason;
    queue_.clear();
    record_.stop_reason = reason_;
    record_.footer = build_footer();
}

void ActiveLearner::pop_and_advance() {
    queue_.erase(queue_.begin());
    if (!queue_.empty()) {
        return;
    }
    complete_cycle();
}

void ActiveLearner::complete_cycle() {
    bool failed = cycle_ > 0 && samples_in_cycle_ > 0 && acquired_in_cycle_ == 0 && !budget_blocked_;
    if (failed && !retried_) {
        retried_ = true;
        plan_cycle(true);
        return;
    }
    retrain();
    CycleRecord c;
    c.cycle = cycle_;
    c.n_labeled = pool_.labeled_ids().size();
    c.accuracy = evaluate_test();
    c.pool_size = pool_.unlabeled_ids().size();
    c.weights = cycle_weights_;
    c.cost_spent = ledger_.total();
    std::vector<double> have(fold_.train.n_classes(), 0.0);
    for (const auto& [id, label] : pool_.acquired_labels()) {
        have[static_cast<std::size_t>(label)] += 1.0;
    }
    std::vector<double> truth(fold_.train.n_classes(), 0.0);
    for (auto l : fold_.train.labels) {
        truth[static_cast<std::size_t>(l)] += 1.0;
    }
    double nh = static_cast<double>(pool_.acquired_labels().size());
    for (std::size_t k = 0; k < have.size(); ++k) {
        have[k] = nh > 0.0 ? have[k] / nh : 0.0;
        truth[k] /= static_cast<double>(fold_.train.size());
    }
    c.cdm = nh > 0.0 ? cdm(have, truth) : 1.0;
    c.C = cfg_.model == ModelKind::cmm ? 0.0 : C_;
    c.gamma = cfg_.model == ModelKind::cmm ? 0.0 : gamma_;
    c.queries = std::move(cycle_queries_);
    record_.cycles.push_back(std::move(c));

    cycle_queries_.clear();
    attempted_.clear();
    acquired_in_cycle_ = 0;
    samples_in_cycle_ = 0;
    if (failed) {
        stop(StopReason::oracle_unavailable);
        return;
    }
    retried_ = false;
    plan_cycle(false);
}

std::size_t ActiveLearner::horizon() const {
    if (cfg_.max_cycles) {
        return std::max<std::size_t>(*cfg_.max_cycles, 1);
    }
    double per_cycle = static_cast<double>(cfg_.query_size) * min_query_cost(QueryType::sample);
    if (cfg_.budget && per_cycle > 0.0) {
        return std::max<std::size_t>(static_cast<std::size_t>(std::floor(*cfg_.budget / per_cycle)), 1);
    }
    return std::max<std::size_t>((fold_.train.size() + cfg_.query_size - 1) / cfg_.query_size, 1);
}

std::optional<StopReason> ActiveLearner::check_stop() const {
    std::size_t pool = cfg_.requery ? fold_.train.size() : pool_.unlabeled_ids().size();
    if (cfg_.budget && pool > 0) {
        double need = static_cast<double>(std::min(cfg_.query_size, pool)) * min_query_cost(QueryType::sample);
        if (budget_blocked_ || ledger_.remaining(*cfg_.budget) < need) {
            return StopReason::budget;
        }
    }
    if (cfg_.max_cycles && cycle_ >= *cfg_.max_cycles) {
        return StopReason::max_cycles;
    }
    if (pool == 0) {
        return StopReason::pool_exhausted;
    }
    if (cfg_.saturation_window > 0) {
        std::vector<double> acc;
        for (const auto& c : record_.cycles) {
            acc.push_back(c.accuracy);
        }
        if (saturated(acc, cfg_.saturation_window, cfg_.saturation_epsilon)) {
            return StopReason::saturated;
        }
    }
    return std::nullopt;
}

void ActiveLearner::plan_cycle(bool retry) {
    if (!retry) {
        if (auto r = check_stop()) {
            stop(*r);
            return;
        }
        ++cycle_;
    }
    const auto& schema = fold_.train.schema;
    std::vector<RowId> candidates;
    if (cfg_.requery) {
        for (RowId i = 0; i < fold_.train.size(); ++i) {
            candidates.push_back(i);
        }
    } else {
        candidates = pool_.unlabeled_vector();
    }
    if (retry) {
        std::erase_if(candidates, [&](RowId id) {
            return std::find(attempted_.begin(), attempted_.end(), id) != attempted_.end();
        });
    }
    if (candidates.empty()) {
        if (retry) {
            queue_.clear();
            samples_in_cycle_ = 1;
            complete_cycle();
        } else {
            stop(StopReason::pool_exhausted);
        }
        return;
    }
    std::size_t q = std::min(cfg_.query_size, candidates.size());
    std::optional<Rule> rule;
    if (!retry && cfg_.rule_cadence > 0 && cycle_ % cfg_.rule_cadence == 0) {
        rule = next_rule_query(rules());
    }
    std::size_t n_samples = rule ? q - 1 : q;

    SelectionWeights w;
    if (cfg_.strategy != StrategyKind::us) {
        w = adapt_weights(cycle_ - 1, horizon(), cfg_.diversity, cfg_.query_size, cfg_.strategy, cfg_.schedule);
    }
    cycle_weights_ = w;

    const auto n = candidates.size();
    RowMatrix pool_rows = gather_rows(fold_.train.rows, candidates);
    RowMatrix pool_resp = gather_rows(train_resp_, candidates);
    CriterionScores scores;
    scores.ids = candidates;
    std::vector<double> ld(n);
    for (std::size_t i = 0; i < n; ++i) {
        ld[i] = train_logdens_[candidates[i]];
    }
    scores.density = score_density(ld);

    std::vector<double> margins(n, 0.0);
    std::vector<int> predicted(n, 0);
    std::vector<std::vector<double>> posts(n);
    for (std::size_t i = 0; i < n; ++i) {
        posts[i] = cmm_.posterior_from_responsibilities(
            std::span<const double>(pool_resp.data() + static_cast<Eigen::Index>(i) * pool_resp.cols(),
                                    static_cast<std::size_t>(pool_resp.cols())));
    }
    if (cfg_.model == ModelKind::cmm) {
        double mx = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            margins[i] = top_two_margin(posts[i]);
            predicted[i] = argmax_lowest(posts[i]);
            mx = std::max(mx, margins[i]);
        }
        for (auto& m : margins) {
            m = mx > 0.0 ? m / mx : 0.0;
        }
    } else {
        std::vector<std::size_t> pos(candidates.begin(), candidates.end());
        auto prepared = kernels::select_rows(train_prepared_, pos);
        auto d = svm_->decision(prepared);
        margins = margin_norm(d);
        for (std::size_t i = 0; i < n; ++i) {
            predicted[i] = d.cols() == 0
                               ? svm_->constant_class()
                               : svm_->vote(std::span<const double>(d.data() + static_cast<Eigen::Index>(i) * d.cols(),
                                                                    static_cast<std::size_t>(d.cols())));
        }
    }
    scores.distance = score_distance(margins);
    std::vector<int> labeled_labels;
    for (const auto& [id, label] : pool_.acquired_labels()) {
        labeled_labels.push_back(label);
    }
    scores.distribution = score_distribution(cmm_, pool_resp, labeled_labels);

    std::vector<std::size_t> chosen;
    if (n_samples > 0) {
        chosen = select_batch(scores, w, n_samples, schema, pool_rows);
    }
    queue_.clear();
    for (auto p : chosen) {
        PendingQuery pq;
        pq.type = QueryType::sample;
        pq.row = candidates[p];
        pq.cycle = cycle_;
        pq.sequence = sequence_++;
        pq.x = row_vector(pool_rows, static_cast<Eigen::Index>(p));
        pq.posterior = posts[p];
        pq.predicted = predicted[p];
        pq.margin_norm = margins[p];
        pq.scores = scores.row_json(p);
        pq.scores["weights"] = w.to_json();
        queue_.push_back(std::move(pq));
    }
    samples_in_cycle_ = chosen.size();
    if (rule) {
        PendingQuery pq;
        pq.type = QueryType::rule;
        pq.component = rule->component;
        pq.cycle = cycle_;
        pq.sequence = sequence_++;
        pq.rule = rule;
        Eigen::VectorXd col = cmm_.assignments().col(static_cast<Eigen::Index>(rule->component));
        pq.posterior.assign(col.data(), col.data() + col.size());
        pq.predicted = argmax_lowest(pq.posterior);
        queue_.push_back(std::move(pq));
    }
}

void ActiveLearner::retrain() {
    std::vector<RowId> ids;
    std::vector<int> labels;
    for (const auto& [id, label] : pool_.acquired_labels()) {
        ids.push_back(id);
        labels.push_back(label);
    }
    const auto K = fold_.train.n_classes();
    base_cmm_ = fit_assignments(mixture_, gather_rows(train_resp_, ids), labels, K);
    cmm_ = base_cmm_;
    for (const auto& [j, c, g] : conclusions_) {
        cmm_ = apply_conclusion(cmm_, j, c, g);
    }
    if (cfg_.model == ModelKind::cmm) {
        return;
    }
    std::vector<std::size_t> pos(ids.begin(), ids.end());
    auto prepared = kernels::select_rows(train_prepared_, pos);
    C_ = cfg_.C ? *cfg_.C
                : select_C(prepared, labels, K, kernel_, fold_.train.schema, derive_seed(cfg_.seed, 0x43, cycle_));
    svm_ = train_svm(prepared, labels, ids, K, C_, kernel_, fold_.train.schema, cfg_.smo);
}

double ActiveLearner::evaluate_test() const {
    const auto n = fold_.test.size();
    if (n == 0) {
        return 0.0;
    }
    std::vector<int> pred;
    if (cfg_.model == ModelKind::cmm) {
        pred.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            auto p = cmm_.posterior_from_responsibilities(
                std::span<const double>(test_resp_.data() + static_cast<Eigen::Index>(i) * test_resp_.cols(),
                                        static_cast<std::size_t>(test_resp_.cols())));
            pred[i] = argmax_lowest(p);
        }
    } else {
        pred = svm_->predict(test_prepared_);
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
        correct += pred[i] == fold_.test.labels[i] ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

std::vector<int> ActiveLearner::predict(const RowMatrix& rows) const {
    if (cfg_.model == ModelKind::cmm) {
        std::vector<int> out;
        for (Eigen::Index i = 0; i < rows.rows(); ++i) {
            out.push_back(cmm_.predict(row_span(rows, i)));
        }
        return out;
    }
    if (!svm_) {
        return std::vector<int>(static_cast<std::size_t>(rows.rows()), 0);
    }
    return svm_->predict(rows);
}

RowMatrix ActiveLearner::decision(const RowMatrix& rows) const {
    if (cfg_.model == ModelKind::cmm) {
        RowMatrix out(rows.rows(), static_cast<Eigen::Index>(cmm_.n_classes()));
        for (Eigen::Index i = 0; i < rows.rows(); ++i) {
            auto p = cmm_.posterior(row_span(rows, i));
            for (std::size_t c = 0; c < p.size(); ++c) {
                out(i, static_cast<Eigen::Index>(c)) = p[c];
            }
        }
        return out;
    }
    if (!svm_) {
        return RowMatrix(rows.rows(), 0);
    }
    return svm_->decision(rows);
}

int ActiveLearner::component_truth(std::size_t component) const {
    std::vector<double> mass(fold_.train.n_classes(), 0.0);
    for (std::size_t i = 0; i < fold_.train.size(); ++i) {
        mass[static_cast<std::size_t>(fold_.train.labels[i])] +=
            train_resp_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(component));
    }
    return argmax_lowest(mass);
}

nlohmann::json ActiveLearner::build_footer() const {
    nlohmann::json rules_j = nlohmann::json::array();
    for (const auto& r : rules()) {
        rules_j.push_back(r.to_json(fold_.train.class_names));
    }
    nlohmann::json model;
    if (cfg_.model == ModelKind::cmm) {
        model = cmm_.to_json("mixture");
    } else if (svm_) {
        model = svm_->to_json();
    }
    const auto* last = record_.cycles.empty() ? nullptr : &record_.cycles.back();
    return {{"type", "footer"},
            {"dataset", record_.meta.dataset},
            {"method", record_.meta.method},
            {"fold", record_.meta.fold},
            {"seed", record_.meta.seed},
            {"stop_reason", to_string(reason_)},
            {"cycles", record_.cycles.size()},
            {"final_accuracy", last ? last->accuracy : 0.0},
            {"final_n_labeled", last ? last->n_labeled : 0},
            {"final_cdm", last ? last->cdm : 1.0},
            {"cost_spent", ledger_.total()},
            {"class_names", fold_.train.class_names},
            {"schema", fold_.train.schema.to_json()},
            {"config", cfg_.to_json()},
            {"normalization", fold_.stats.to_json()},
            {"initial_ids", initial_},
            {"term_boundaries", bounds_.to_json()},
            {"rules", rules_j},
            {"ledger", ledger_.to_json()},
            {"mixture", mixture_->to_json()},
            {"cmm", cmm_.to_json("mixture")},
            {"model", model}};
}

void ActiveLearner::run_simulated(const std::vector<OracleSpec>& oracles) {
    if (oracles.empty()) {
        throw Error("run: no oracle configured");
    }
    set_oracles(oracles);
    const auto K = fold_.train.n_classes();
    while (!stopped()) {
        auto q = pending();
        if (!q) {
            break;
        }
        if (q->type == QueryType::sample) {
            auto acq = acquire_label(q->row, fold_.train.labels[q->row], q->predicted, q->margin_norm,
                                     QueryType::sample, oracles_, cfg_.oracle_policy, K, cycle_, ledger_, cfg_.budget);
            accept_sample(acq.responses, false);
            if (acq.budget_refused) {
                budget_blocked_ = true;
                queue_.resize(1);
            }
        } else {
            int truth = component_truth(q->component);
            auto acq = acquire_label(fold_.train.size() + q->component, truth, q->predicted, 1.0, QueryType::rule,
                                     oracles_, cfg_.oracle_policy, K, cycle_, ledger_, cfg_.budget);
            int conclusion = -1;
            double gamma = 0.0;
            if (acq.fused) {
                conclusion = acq.fused->label;
                double s = 0.0;
                std::size_t m = 0;
                for (const auto& r : acq.responses) {
                    if (r.answered && r.label == conclusion) {
                        s += r.confidence;
                        ++m;
                    }
                }
                gamma = m > 0 ? s / static_cast<double>(m) : 0.0;
                if (!(gamma > 0.0)) {
                    conclusion = -1;
                }
            }
            accept_rule(conclusion, gamma, acq.responses, false);
            if (acq.budget_refused) {
                budget_blocked_ = true;
                queue_.resize(1);
            }
        }
        pop_and_advance();
    }
}

RunRecord run(const FoldData& fold, const LearnerConfig& cfg, const std::vector<OracleSpec>& oracles,
              const RunMeta& meta, std::shared_ptr<const MixtureModel> mixture) {
    ActiveLearner learner(fold, cfg, meta, std::move(mixture));
    learner.run_simulated(oracles);
    return learner.record();
}

}  // namespace cal
