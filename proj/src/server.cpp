#include "cal/server.hpp"

#include "cal/hash.hpp"

#include <httplib.h>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

namespace cal {

namespace fs = std::filesystem;

struct SessionService::Session {
    std::mutex mutex;
    std::string id;
    std::string dataset;
    nlohmann::json request;
    OracleSpec annotator;
    std::unique_ptr<ActiveLearner> learner;
    std::optional<fs::path> journal;
};

namespace {

ApiResponse error(int status, const std::string& message) {
    return {status, {{"format", "api-v1"}, {"error", message}}, {}};
}

std::string query_token(const std::string& session, std::size_t sequence) {
    return sha256_hex(session + ":" + std::to_string(sequence)).substr(0, 16);
}

void append_event(const std::optional<fs::path>& path, const nlohmann::json& event) {
    if (!path) {
        return;
    }
    std::ofstream out(*path, std::ios::app);
    out << event.dump() << '\n';
    out.flush();
    if (!out) {
        throw Error("cannot append to journal '" + path->string() + "'");
    }
}

// Class index from an integer or a class name; nullopt for out-of-range or unknown.
std::optional<int> class_index(const nlohmann::json& v, const std::vector<std::string>& names) {
    if (v.is_number_integer()) {
        auto c = v.get<long long>();
        if (c >= 0 && static_cast<std::size_t>(c) < names.size()) {
            return static_cast<int>(c);
        }
        return std::nullopt;
    }
    if (v.is_string()) {
        auto it = std::find(names.begin(), names.end(), v.get<std::string>());
        if (it != names.end()) {
            return static_cast<int>(it - names.begin());
        }
    }
    return std::nullopt;
}

nlohmann::json raw_features(const FoldData& fold, std::span<const double> x) {
    nlohmann::json out = nlohmann::json::object();
    const auto& schema = fold.train.schema;
    for (std::size_t c = 0; c < schema.dims() && c < x.size(); ++c) {
        const auto& col = schema.columns[c];
        if (col.kind == ColumnKind::categorical) {
            auto k = static_cast<std::size_t>(std::clamp(std::lround(x[c]), 0L, static_cast<long>(col.categories.size()) - 1));
            out[col.name] = col.categories[k];
        } else {
            double sd = c < fold.stats.stddev.size() ? fold.stats.stddev[c] : 1.0;
            double mu = c < fold.stats.mean.size() ? fold.stats.mean[c] : 0.0;
            out[col.name] = sd > 0.0 ? x[c] * sd + mu : mu;
        }
    }
    return out;
}

nlohmann::json query_json(const std::string& session, const ActiveLearner& l) {
    auto q = l.pending();
    const auto& names = l.fold().train.class_names;
    if (!q) {
        return {{"format", "api-v1"},
                {"type", "none"},
                {"stop_reason", l.stopped() ? nlohmann::json(to_string(l.stop_reason())) : nlohmann::json(nullptr)}};
    }
    nlohmann::json j{{"format", "api-v1"},
                     {"token", query_token(session, q->sequence)},
                     {"cycle", q->cycle},
                     {"sequence", q->sequence},
                     {"class_names", names},
                     {"posterior", q->posterior},
                     {"remaining_in_batch", l.remaining_in_batch()}};
    if (q->type == QueryType::sample) {
        j["type"] = "sample";
        j["row"] = q->row;
        j["initial"] = q->initial;
        j["remaining_initial"] = q->initial ? l.remaining_in_batch() : 0;
        j["x"] = q->x;
        j["features"] = raw_features(l.fold(), q->x);
        j["predicted"] = q->predicted >= 0 ? nlohmann::json(names[static_cast<std::size_t>(q->predicted)])
                                           : nlohmann::json(nullptr);
        j["scores"] = q->scores;
    } else {
        j["type"] = "rule";
        j["component"] = q->component;
        j["premise"] = q->rule ? q->rule->premise() : "true";
        j["text"] = "if " + j["premise"].get<std::string>() + " then class = ?";
    }
    return j;
}

nlohmann::json cycle_summary(const CycleRecord& c) {
    return {{"cycle", c.cycle},
            {"n_labeled", c.n_labeled},
            {"accuracy", c.accuracy},
            {"cost_spent", c.cost_spent},
            {"cdm", c.cdm}};
}

}  // namespace

SessionService::SessionService(fs::path data_dir, std::optional<fs::path> journal_dir)
    : data_dir_(std::move(data_dir)), journal_dir_(std::move(journal_dir)) {
    if (!journal_dir_) {
        return;
    }
    fs::create_directories(*journal_dir_);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(*journal_dir_)) {
        if (e.is_regular_file() && e.path().extension() == ".jsonl") {
            files.push_back(e.path());
        }
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        try {
            replay(f);
        } catch (const std::exception& e) {
            std::cerr << "journal " << f.filename().string() << ": " << e.what() << " (session skipped)\n";
        }
    }
}

SessionService::~SessionService() = default;

std::size_t SessionService::size() const {
    std::shared_lock lock(mutex_);
    return sessions_.size();
}

ApiResponse SessionService::datasets() const {
    nlohmann::json list = nlohmann::json::array();
    std::vector<std::string> ids;
    if (fs::is_directory(data_dir_)) {
        for (const auto& e : fs::directory_iterator(data_dir_)) {
            const auto& p = e.path();
            if (e.is_regular_file() && p.extension() == ".csv" &&
                fs::exists(p.parent_path() / (p.stem().string() + ".schema.json"))) {
                ids.push_back(p.stem().string());
            }
        }
    }
    std::sort(ids.begin(), ids.end());
    for (const auto& id : ids) {
        list.push_back({{"id", id}, {"csv", id + ".csv"}, {"schema", id + ".schema.json"}});
    }
    return {200, {{"format", "api-v1"}, {"datasets", list}}, {}};
}

Dataset SessionService::dataset(const std::string& id) {
    std::lock_guard lock(data_mutex_);
    auto it = datasets_.find(id);
    if (it != datasets_.end()) {
        return it->second;
    }
    if (id.empty() || id.find('/') != std::string::npos || id.find("..") != std::string::npos) {
        throw Error("unknown dataset '" + id + "'");
    }
    auto csv = data_dir_ / (id + ".csv");
    auto schema = data_dir_ / (id + ".schema.json");
    if (!fs::exists(csv) || !fs::exists(schema)) {
        throw Error("unknown dataset '" + id + "'");
    }
    auto d = load_dataset(csv, schema);
    d.name = id;
    datasets_.emplace(id, d);
    return d;
}

std::shared_ptr<SessionService::Session> SessionService::find(const std::string& id) const {
    std::shared_lock lock(mutex_);
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
}

std::shared_ptr<SessionService::Session> SessionService::build(const std::string& id, const nlohmann::json& body) {
    if (!body.is_object()) {
        throw Error("request body must be a JSON object");
    }
    if (!body.contains("dataset") || !body["dataset"].is_string()) {
        throw Error("dataset: required string");
    }
    auto s = std::make_shared<Session>();
    s->id = id;
    s->dataset = body["dataset"].get<std::string>();
    s->request = body;
    auto data = dataset(s->dataset);
    LearnerConfig cfg;
    try {
        cfg = LearnerConfig::from_json(body.value("learner", nlohmann::json::object()));
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("learner: ") + e.what());
    }
    auto folds = body.value("folds", std::size_t{5});
    auto fold = body.value("fold", std::size_t{0});
    auto fold_seed = body.value("fold_seed", std::uint64_t{0});
    if (folds < 2 || fold >= folds) {
        throw Error("fold must be below folds (>= 2)");
    }
    auto split = stratified_kfold(data, folds, fold_seed);
    auto fd = make_fold(data, split, fold);
    if (cfg.query_size > fd.train.size()) {
        throw Error("query_size " + std::to_string(cfg.query_size) + " exceeds the pool of " +
                    std::to_string(fd.train.size()) + " training rows");
    }
    s->annotator.id = "human";
    s->annotator.kind = OracleKind::expert;
    if (body.contains("annotator")) {
        const auto& a = body["annotator"];
        if (a.is_string()) {
            s->annotator.id = a.get<std::string>();
        } else if (a.is_object()) {
            s->annotator.id = a.value("id", s->annotator.id);
            if (a.contains("cost")) {
                s->annotator.cost = CostModel::from_json(a["cost"]);
            }
        } else {
            throw Error("annotator: must be a string or an object");
        }
    }
    RunMeta meta{s->dataset, body.value("method", std::string("session")), fold, cfg.seed};
    s->learner = std::make_unique<ActiveLearner>(std::move(fd), cfg, meta);
    s->learner->set_oracles({s->annotator});
    if (journal_dir_) {
        s->journal = *journal_dir_ / (id + ".jsonl");
    }
    return s;
}

namespace {

// Applies one label submission; the caller holds the session lock.
ApiResponse apply_label(const std::string& id, ActiveLearner& l, const OracleSpec& annotator,
                        const nlohmann::json& body) {
    if (!body.is_object()) {
        return error(400, "request body must be a JSON object");
    }
    if (l.stopped()) {
        return error(409, "session stopped (" + to_string(l.stop_reason()) + ")");
    }
    auto q = l.pending();
    if (!q) {
        return error(409, "no pending query");
    }
    if (!body.contains("token") || !body["token"].is_string()) {
        return error(422, "token: required string");
    }
    if (body["token"].get<std::string>() != query_token(id, q->sequence)) {
        return error(409, "stale token: the query was already answered");
    }
    double confidence = 1.0;
    if (body.contains("confidence")) {
        if (!body["confidence"].is_number()) {
            return error(422, "confidence: must be a number");
        }
        confidence = body["confidence"].get<double>();
    }
    const auto& names = l.fold().train.class_names;
    std::string who = body.value("annotator", annotator.id);
    const auto before = l.record().cycles.size();
    try {
        if (q->type == QueryType::sample) {
            if (!body.contains("label")) {
                return error(422, "label: required (class index, class name or null to skip)");
            }
            LabelResponse r;
            r.oracle_id = who;
            r.row = q->row;
            if (!body["label"].is_null()) {
                auto c = class_index(body["label"], names);
                if (!c) {
                    return error(422, "label out of range");
                }
                if (!(confidence >= 0.0 && confidence <= 1.0)) {
                    return error(422, "confidence must be in [0,1]");
                }
                r.label = *c;
                r.confidence = confidence;
                r.cost = annotator.cost.cost(*c, q->margin_norm, QueryType::sample);
                r.answered = true;
            }
            l.answer_sample({r});
        } else {
            const auto& v = body.contains("conclusion") ? body["conclusion"] : body.value("label", nlohmann::json());
            int conclusion = -1;
            double cost = 0.0;
            if (!v.is_null()) {
                auto c = class_index(v, names);
                if (!c) {
                    return error(422, "conclusion out of range");
                }
                if (!(confidence > 0.0 && confidence <= 1.0)) {
                    return error(422, "confidence must be in (0,1]");
                }
                conclusion = *c;
                cost = annotator.cost.cost(*c, 1.0, QueryType::rule);
            }
            l.answer_rule(conclusion, conclusion >= 0 ? confidence : 0.0, who, cost);
        }
    } catch (const Error& e) {
        return error(422, e.what());
    }
    const auto& cycles = l.record().cycles;
    nlohmann::json j{{"format", "api-v1"},
                     {"accepted", true},
                     {"cycle", cycles.size() > before ? cycle_summary(cycles.back()) : nlohmann::json(nullptr)},
                     {"accuracy", cycles.empty() ? nlohmann::json(nullptr) : nlohmann::json(cycles.back().accuracy)},
                     {"stopped", l.stopped()},
                     {"stop_reason", l.stopped() ? nlohmann::json(to_string(l.stop_reason())) : nlohmann::json(nullptr)},
                     {"next", query_json(id, l)}};
    return {200, j, {}};
}

}  // namespace

void SessionService::replay(const fs::path& journal) {
    std::ifstream in(journal);
    std::string line;
    std::shared_ptr<Session> s;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        nlohmann::json e;
        try {
            e = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception&) {
            break;  // torn final line from a crash
        }
        auto kind = e.value("event", std::string());
        if (kind == "create") {
            s = build(e.at("id").get<std::string>(), e.at("request"));
        } else if (!s) {
            throw Error("journal does not start with a create event");
        } else if (kind == "label") {
            auto r = apply_label(s->id, *s->learner, s->annotator, e.at("body"));
            if (r.status != 200) {
                throw Error("replayed label rejected: " + r.body.value("error", std::string()));
            }
        } else if (kind == "stop") {
            s->learner->stop();
        }
    }
    if (!s) {
        throw Error("empty journal");
    }
    std::unique_lock lock(mutex_);
    sessions_[s->id] = s;
}

ApiResponse SessionService::create(const nlohmann::json& body) {
    std::string id;
    {
        std::unique_lock lock(mutex_);
        std::random_device rd;
        id = sha256_hex(std::to_string(rd()) + ":" + std::to_string(rd()) + ":" + std::to_string(++counter_))
                 .substr(0, 24);
    }
    std::shared_ptr<Session> s;
    try {
        s = build(id, body);
    } catch (const std::exception& e) {
        return error(400, e.what());
    }
    std::lock_guard guard(s->mutex);
    append_event(s->journal, {{"event", "create"}, {"format", "api-v1"}, {"id", id}, {"request", body}});
    {
        std::unique_lock lock(mutex_);
        sessions_[id] = s;
    }
    return {201, {{"format", "api-v1"}, {"id", id}, {"query", query_json(id, *s->learner)}}, {}};
}

ApiResponse SessionService::query(const std::string& id) {
    auto s = find(id);
    if (!s) {
        return error(404, "unknown session '" + id + "'");
    }
    std::lock_guard lock(s->mutex);
    return {200, query_json(id, *s->learner), {}};
}

ApiResponse SessionService::label(const std::string& id, const nlohmann::json& body) {
    auto s = find(id);
    if (!s) {
        return error(404, "unknown session '" + id + "'");
    }
    std::lock_guard lock(s->mutex);
    auto r = apply_label(id, *s->learner, s->annotator, body);
    if (r.status == 200) {
        append_event(s->journal, {{"event", "label"}, {"body", body}});
    }
    return r;
}

ApiResponse SessionService::status(const std::string& id) {
    auto s = find(id);
    if (!s) {
        return error(404, "unknown session '" + id + "'");
    }
    std::lock_guard lock(s->mutex);
    const auto& l = *s->learner;
    const auto& names = l.fold().train.class_names;
    nlohmann::json curve = nlohmann::json::array();
    nlohmann::json weights = nlohmann::json::array();
    for (const auto& c : l.record().cycles) {
        curve.push_back(cycle_summary(c));
        weights.push_back({{"cycle", c.cycle}, {"weights", c.weights ? c.weights->to_json() : nlohmann::json(nullptr)}});
    }
    nlohmann::json rules = nlohmann::json::array();
    nlohmann::json prompts = nlohmann::json::array();
    for (const auto& r : l.rules()) {
        rules.push_back(r.to_json(names));
        if (r.conclusion >= 0 && r.confidence > 0.9) {
            prompts.push_back({{"component", r.component}, {"text", confirmation_prompt(r, names)}});
        }
    }
    auto q = l.pending();
    nlohmann::json j{{"format", "api-v1"},
                     {"id", id},
                     {"dataset", s->dataset},
                     {"class_names", names},
                     {"cycle", l.cycle()},
                     {"curve", curve},
                     {"weights", weights},
                     {"ledger", l.ledger().to_json()},
                     {"cost_spent", l.ledger().total()},
                     {"stopped", l.stopped()},
                     {"stop_reason", l.stopped() ? nlohmann::json(to_string(l.stop_reason())) : nlohmann::json(nullptr)},
                     {"pending", q ? nlohmann::json(q->type == QueryType::sample ? "sample" : "rule") : "none"},
                     {"rules", rules},
                     {"prompts", prompts}};
    return {200, j, {}};
}

ApiResponse SessionService::stop(const std::string& id) {
    auto s = find(id);
    if (!s) {
        return error(404, "unknown session '" + id + "'");
    }
    std::lock_guard lock(s->mutex);
    if (!s->learner->stopped()) {
        s->learner->stop();
        append_event(s->journal, {{"event", "stop"}});
    }
    return {200,
            {{"format", "api-v1"}, {"stopped", true}, {"stop_reason", to_string(s->learner->stop_reason())}},
            {}};
}

ApiResponse SessionService::record(const std::string& id) {
    auto s = find(id);
    if (!s) {
        return error(404, "unknown session '" + id + "'");
    }
    std::lock_guard lock(s->mutex);
    if (!s->learner->stopped()) {
        return error(409, "session is still active");
    }
    return {200, nullptr, s->learner->record().to_jsonl()};
}

void mount_api(httplib::Server& server, SessionService& service) {
    auto send = [](httplib::Response& res, const ApiResponse& r) {
        res.status = r.status;
        if (!r.text.empty()) {
            res.set_content(r.text, "application/x-ndjson");
        } else {
            res.set_content(r.body.dump(), "application/json");
        }
    };
    auto parse = [](const httplib::Request& req, nlohmann::json& out) {
        try {
            out = req.body.empty() ? nlohmann::json::object() : nlohmann::json::parse(req.body);
            return true;
        } catch (const nlohmann::json::exception&) {
            return false;
        }
    };
    server.Get("/api/v1/datasets", [&, send](const httplib::Request&, httplib::Response& res) {
        send(res, service.datasets());
    });
    server.Post("/api/v1/sessions", [&, send, parse](const httplib::Request& req, httplib::Response& res) {
        nlohmann::json body;
        send(res, parse(req, body) ? service.create(body) : error(400, "request body is not valid JSON"));
    });
    server.Get(R"(/api/v1/sessions/([^/]+)/query)", [&, send](const httplib::Request& req, httplib::Response& res) {
        send(res, service.query(req.matches[1]));
    });
    server.Post(R"(/api/v1/sessions/([^/]+)/label)",
                [&, send, parse](const httplib::Request& req, httplib::Response& res) {
                    nlohmann::json body;
                    send(res, parse(req, body) ? service.label(req.matches[1], body)
                                               : error(400, "request body is not valid JSON"));
                });
    server.Get(R"(/api/v1/sessions/([^/]+)/status)", [&, send](const httplib::Request& req, httplib::Response& res) {
        send(res, service.status(req.matches[1]));
    });
    server.Post(R"(/api/v1/sessions/([^/]+)/stop)", [&, send](const httplib::Request& req, httplib::Response& res) {
        send(res, service.stop(req.matches[1]));
    });
    server.Get(R"(/api/v1/sessions/([^/]+)/record)", [&, send](const httplib::Request& req, httplib::Response& res) {
        send(res, service.record(req.matches[1]));
    });
}

bool serve(const ServeOptions& opt) {
    SessionService service(opt.data_dir, opt.journal_dir);
    httplib::Server server;
    mount_api(server, service);
    if (opt.static_dir) {
        server.set_mount_point("/", opt.static_dir->string());
    }
    if (!server.bind_to_port(opt.host, opt.port)) {
        return false;
    }
    std::cerr << "listening on http://" << opt.host << ":" << opt.port << "/api/v1\n";
    return server.listen_after_bind();
}

}  // namespace cal
