#include "cal/experiment.hpp"

#include "cal/hash.hpp"
#include "cal/synth.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

namespace cal {

namespace fs = std::filesystem;

std::string sanitize_name(const std::string& s) {
    std::string out;
    for (char c : s) {
        bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' || c == '.';
        out += ok ? c : '-';
    }
    return out.empty() ? "unnamed" : out;
}

Dataset DatasetSource::load() const {
    Dataset d;
    if (synthetic) {
        const auto& s = *synthetic;
        d = synth::generate(s.value("kind", std::string("two_moons")), s.value("n", std::size_t{200}),
                            s.value("noise", 0.1), s.value("seed", std::uint64_t{0}));
    } else {
        d = load_dataset(csv, schema);
    }
    d.name = name;
    return d;
}

namespace {

std::string ptr(const std::string& base, std::size_t i) { return base + "/" + std::to_string(i); }

fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) {
        throw Error("cannot read '" + p.string() + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const fs::path& p, const std::string& content) {
    auto tmp = p;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error("cannot write '" + tmp.string() + "'");
        }
        out << content;
        if (!out) {
            throw Error("write failed for '" + tmp.string() + "'");
        }
    }
    fs::rename(tmp, p);
}

bool complete_run_file(const fs::path& p) {
    std::ifstream in(p);
    if (!in) {
        return false;
    }
    std::string line;
    std::string last;
    while (std::getline(in, line)) {
        if (!line.empty()) {
            last = line;
        }
    }
    try {
        auto j = nlohmann::json::parse(last);
        return j.value("type", std::string()) == "footer";
    } catch (const nlohmann::json::exception&) {
        return false;
    }
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j, const fs::path& base_dir) {
    if (!j.is_object()) {
        throw ConfigError("/: config must be a JSON object");
    }
    ExperimentConfig c;
    if (!j.contains("datasets") || !j["datasets"].is_array() || j["datasets"].empty()) {
        throw ConfigError("/datasets: must be a non-empty array");
    }
    std::set<std::string> names;
    for (std::size_t i = 0; i < j["datasets"].size(); ++i) {
        const auto& jd = j["datasets"][i];
        auto p = ptr("/datasets", i);
        if (!jd.is_object()) {
            throw ConfigError(p + ": must be an object");
        }
        DatasetSource d;
        if (jd.contains("synthetic")) {
            if (!jd["synthetic"].is_object()) {
                throw ConfigError(p + "/synthetic: must be an object");
            }
            d.synthetic = jd["synthetic"];
            auto kind = jd["synthetic"].value("kind", std::string("two_moons"));
            d.name = jd.value("name", kind);
        } else {
            if (!jd.contains("csv") || !jd["csv"].is_string()) {
                throw ConfigError(p + "/csv: missing (or give \"synthetic\")");
            }
            if (!jd.contains("schema") || !jd["schema"].is_string()) {
                throw ConfigError(p + "/schema: missing");
            }
            d.csv = resolve(base_dir, jd["csv"].get<std::string>());
            d.schema = resolve(base_dir, jd["schema"].get<std::string>());
            if (!fs::exists(d.csv)) {
                throw ConfigError(p + "/csv: file not found: " + d.csv.string());
            }
            if (!fs::exists(d.schema)) {
                throw ConfigError(p + "/schema: file not found: " + d.schema.string());
            }
            d.name = jd.value("name", d.csv.stem().string());
        }
        d.name = sanitize_name(d.name);
        if (!names.insert(d.name).second) {
            throw ConfigError(p + "/name: duplicate dataset name '" + d.name + "'");
        }
        c.datasets.push_back(std::move(d));
    }
    if (!j.contains("methods") || !j["methods"].is_array() || j["methods"].empty()) {
        throw ConfigError("/methods: must be a non-empty array");
    }
    nlohmann::json base = j.value("learner", nlohmann::json::object());
    if (!base.is_object()) {
        throw ConfigError("/learner: must be an object");
    }
    names.clear();
    for (std::size_t i = 0; i < j["methods"].size(); ++i) {
        const auto& jm = j["methods"][i];
        auto p = ptr("/methods", i);
        if (!jm.is_object()) {
            throw ConfigError(p + ": must be an object");
        }
        nlohmann::json merged = base;
        if (jm.contains("learner")) {
            if (!jm["learner"].is_object()) {
                throw ConfigError(p + "/learner: must be an object");
            }
            merged.merge_patch(jm["learner"]);
        }
        for (const char* key : {"model", "strategy"}) {
            if (jm.contains(key)) {
                merged[key] = jm[key];
            }
        }
        MethodSpec m;
        try {
            m.learner = LearnerConfig::from_json(merged);
        } catch (const Error& e) {
            throw ConfigError(p + "/learner: " + e.what());
        }
        std::string model = m.learner.model == ModelKind::cmm       ? "cmm"
                            : m.learner.model == ModelKind::svm_rbf ? "rbf"
                                                                    : "rwm";
        m.name = sanitize_name(jm.value("name", model + "-" + to_string(m.learner.strategy)));
        if (!names.insert(m.name).second) {
            throw ConfigError(p + "/name: duplicate method name '" + m.name + "'");
        }
        c.methods.push_back(std::move(m));
    }
    try {
        c.folds = j.value("folds", c.folds);
        c.fold_seed = j.value("fold_seed", c.fold_seed);
        if (j.contains("seeds")) {
            c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("/: ") + e.what());
    }
    if (c.folds < 2) {
        throw ConfigError("/folds: must be at least 2");
    }
    if (c.seeds.empty()) {
        throw ConfigError("/seeds: must be a non-empty array");
    }
    if (j.contains("oracles")) {
        try {
            if (j["oracles"].is_string()) {
                auto path = resolve(base_dir, j["oracles"].get<std::string>());
                if (!fs::exists(path)) {
                    throw ConfigError("/oracles: file not found: " + path.string());
                }
                c.oracles = load_roster(path);
            } else {
                c.oracles = roster_from_json(j["oracles"]);
            }
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigError(std::string("/oracles: ") + e.what());
        }
    }
    if (j.contains("out")) {
        if (!j["out"].is_string()) {
            throw ConfigError("/out: must be a string");
        }
        c.out = resolve(base_dir, j["out"].get<std::string>());
    }
    return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("/: cannot open config '" + path.string() + "'");
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("/: invalid JSON: ") + e.what());
    }
    return from_json(j, path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

std::vector<RunJob> expand_jobs(const ExperimentConfig& cfg) {
    std::vector<RunJob> jobs;
    for (std::size_t d = 0; d < cfg.datasets.size(); ++d) {
        for (std::size_t m = 0; m < cfg.methods.size(); ++m) {
            for (std::size_t f = 0; f < cfg.folds; ++f) {
                for (auto s : cfg.seeds) {
                    jobs.push_back({d, m, f, s});
                }
            }
        }
    }
    return jobs;
}

RunMeta job_meta(const ExperimentConfig& cfg, const RunJob& job) {
    return {cfg.datasets[job.dataset].name, cfg.methods[job.method].name, job.fold, job.seed};
}

std::vector<OracleSpec> run_oracles(const ExperimentConfig& cfg, const RunJob& job) {
    std::vector<OracleSpec> out = cfg.oracles;
    if (out.empty()) {
        OracleSpec truth;
        truth.id = "truth";
        out.push_back(truth);
    }
    for (auto& o : out) {
        o.seed = derive_seed(o.seed, job.seed, job.fold, 0x0c);
    }
    return out;
}

RunRecord execute_job(const ExperimentConfig& cfg, const RunJob& job, const Dataset& data) {
    auto split = stratified_kfold(data, cfg.folds, derive_seed(cfg.fold_seed, job.seed));
    auto fold = make_fold(data, split, job.fold);
    auto lc = cfg.methods[job.method].learner;
    lc.seed = derive_seed(job.seed, lc.seed);
    return run(fold, lc, run_oracles(cfg, job), job_meta(cfg, job));
}

ExperimentSummary run_experiment(const ExperimentConfig& cfg, const fs::path& out, std::size_t parallel, bool force) {
    fs::create_directories(out);
    std::vector<std::optional<Dataset>> data(cfg.datasets.size());
    std::vector<std::string> load_errors(cfg.datasets.size());
    for (std::size_t d = 0; d < cfg.datasets.size(); ++d) {
        try {
            data[d] = cfg.datasets[d].load();
        } catch (const std::exception& e) {
            load_errors[d] = e.what();
        }
    }
    auto jobs = expand_jobs(cfg);
    std::vector<int> status(jobs.size(), 0);  // 0 produced, 1 skipped, 2 failed
    std::vector<std::string> errors(jobs.size());
    const auto n = static_cast<std::ptrdiff_t>(jobs.size());
    const int threads = static_cast<int>(std::max<std::size_t>(parallel, 1));
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto& job = jobs[static_cast<std::size_t>(i)];
        auto file = out / run_file_name(job_meta(cfg, job));
        if (!force && complete_run_file(file)) {
            status[static_cast<std::size_t>(i)] = 1;
            continue;
        }
        try {
            if (!data[job.dataset]) {
                throw Error("dataset '" + cfg.datasets[job.dataset].name + "': " + load_errors[job.dataset]);
            }
            auto rec = execute_job(cfg, job, *data[job.dataset]);
            write_file_atomic(file, rec.to_jsonl());
        } catch (const std::exception& e) {
            status[static_cast<std::size_t>(i)] = 2;
            errors[static_cast<std::size_t>(i)] = e.what();
        }
    }

    ExperimentSummary summary;
    nlohmann::json runs = nlohmann::json::array();
    nlohmann::json failures = nlohmann::json::array();
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        auto meta = job_meta(cfg, jobs[i]);
        auto name = run_file_name(meta);
        if (status[i] == 2) {
            summary.failures.push_back({name, errors[i]});
            failures.push_back({{"file", name}, {"error", errors[i]}});
            continue;
        }
        (status[i] == 0 ? summary.produced : summary.skipped) += 1;
        runs.push_back({{"file", name},
                        {"sha256", sha256_file(out / name)},
                        {"dataset", meta.dataset},
                        {"method", meta.method},
                        {"fold", meta.fold},
                        {"seed", meta.seed}});
    }
    nlohmann::json manifest{{"format", "manifest-v1"}, {"runs", runs}, {"failures", failures}};
    write_file_atomic(out / "manifest.json", manifest.dump(2) + "\n");
    return summary;
}

VerifyResult verify_manifest(const fs::path& manifest) {
    VerifyResult r;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(manifest));
    } catch (const nlohmann::json::exception& e) {
        r.ok = false;
        r.problems.push_back(std::string("manifest is not valid JSON: ") + e.what());
        return r;
    }
    auto dir = manifest.parent_path();
    for (const auto& run : j.value("runs", nlohmann::json::array())) {
        auto name = run.value("file", std::string());
        auto path = dir / name;
        if (!fs::exists(path)) {
            r.ok = false;
            r.problems.push_back(name + ": missing");
            continue;
        }
        if (sha256_file(path) != run.value("sha256", std::string())) {
            r.ok = false;
            r.problems.push_back(name + ": hash mismatch");
        }
    }
    return r;
}

std::vector<RunRecord> load_results(const fs::path& dir) {
    if (!fs::is_directory(dir)) {
        throw Error("results directory '" + dir.string() + "' does not exist");
    }
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".jsonl") {
            files.push_back(e.path());
        }
    }
    std::sort(files.begin(), files.end());
    std::vector<RunRecord> out;
    for (const auto& f : files) {
        try {
            out.push_back(RunRecord::from_jsonl(read_file(f)));
        } catch (const Error& e) {
            throw Error(f.filename().string() + ": " + e.what());
        }
    }
    return out;
}

namespace {

struct MeanCurve {
    LearningCurve curve;
    double final_accuracy = 0.0;  // percent
    double cdm = 0.0;
    std::size_t runs = 0;
};

MeanCurve mean_curve(const std::vector<const RunRecord*>& runs) {
    MeanCurve m;
    std::size_t len = std::numeric_limits<std::size_t>::max();
    for (const auto* r : runs) {
        len = std::min(len, r->cycles.size());
    }
    if (runs.empty() || len == 0) {
        throw Error("empty run record");
    }
    m.curve.n_labeled.assign(len, 0.0);
    m.curve.accuracy.assign(len, 0.0);
    for (const auto* r : runs) {
        for (std::size_t i = 0; i < len; ++i) {
            m.curve.n_labeled[i] += static_cast<double>(r->cycles[i].n_labeled);
            m.curve.accuracy[i] += r->cycles[i].accuracy;
        }
        m.final_accuracy += 100.0 * r->cycles.back().accuracy;
        double c = 0.0;
        for (const auto& cy : r->cycles) {
            c += cy.cdm;
        }
        m.cdm += c / static_cast<double>(r->cycles.size());
    }
    auto k = static_cast<double>(runs.size());
    for (std::size_t i = 0; i < len; ++i) {
        m.curve.n_labeled[i] /= k;
        m.curve.accuracy[i] /= k;
    }
    m.final_accuracy /= k;
    m.cdm /= k;
    m.runs = runs.size();
    return m;
}

// Both curves cut to a common length and put on the baseline's grid.
std::pair<LearningCurve, LearningCurve> align(const LearningCurve& a, const LearningCurve& b) {
    auto len = std::min(a.accuracy.size(), b.accuracy.size());
    LearningCurve ca;
    LearningCurve cb;
    cb.n_labeled.assign(b.n_labeled.begin(), b.n_labeled.begin() + static_cast<std::ptrdiff_t>(len));
    cb.accuracy.assign(b.accuracy.begin(), b.accuracy.begin() + static_cast<std::ptrdiff_t>(len));
    ca.n_labeled = cb.n_labeled;
    ca.accuracy.assign(a.accuracy.begin(), a.accuracy.begin() + static_cast<std::ptrdiff_t>(len));
    return {ca, cb};
}

std::string fmt(double v, int prec) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(prec) << v;
    return s.str();
}

std::string table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> width(header.size(), 0);
    auto widen = [&](const std::vector<std::string>& r) {
        for (std::size_t c = 0; c < r.size() && c < width.size(); ++c) {
            width[c] = std::max(width[c], r[c].size());
        }
    };
    widen(header);
    for (const auto& r : rows) {
        widen(r);
    }
    std::ostringstream out;
    auto line = [&](const std::vector<std::string>& r) {
        for (std::size_t c = 0; c < r.size(); ++c) {
            if (c == 0) {
                out << std::left << std::setw(static_cast<int>(width[c])) << r[c];
            } else {
                out << "  " << std::right << std::setw(static_cast<int>(width[c])) << r[c];
            }
        }
        out << '\n';
    };
    line(header);
    for (const auto& r : rows) {
        line(r);
    }
    return out.str();
}

}  // namespace

EvalOutput evaluate_results(const std::vector<RunRecord>& runs, const std::string& baseline, double alpha) {
    if (runs.empty()) {
        throw Error("no run records found");
    }
    std::set<std::string> dset;
    std::set<std::string> mset;
    std::map<std::pair<std::string, std::string>, std::vector<const RunRecord*>> groups;
    for (const auto& r : runs) {
        if (r.cycles.empty()) {
            throw Error("run " + r.file_name() + " has no cycles");
        }
        dset.insert(r.meta.dataset);
        mset.insert(r.meta.method);
        groups[{r.meta.dataset, r.meta.method}].push_back(&r);
    }
    std::vector<std::string> datasets(dset.begin(), dset.end());
    std::vector<std::string> methods(mset.begin(), mset.end());
    if (!mset.contains(baseline)) {
        throw Error("baseline method '" + baseline + "' not found in the results");
    }
    std::map<std::pair<std::string, std::string>, MeanCurve> curves;
    for (const auto& d : datasets) {
        for (const auto& m : methods) {
            auto it = groups.find({d, m});
            if (it == groups.end()) {
                throw Error("no runs for dataset '" + d + "' and method '" + m + "'");
            }
            curves[{d, m}] = mean_curve(it->second);
        }
    }
    const auto k = methods.size();
    std::vector<std::vector<double>> acc(datasets.size(), std::vector<double>(k));
    std::vector<std::vector<double>> aulc_m(datasets.size(), std::vector<double>(k));
    std::vector<std::vector<double>> dur_m(datasets.size(), std::vector<double>(k));
    std::vector<std::vector<double>> cdm_m(datasets.size(), std::vector<double>(k));
    nlohmann::json curves_j = nlohmann::json::object();
    for (std::size_t d = 0; d < datasets.size(); ++d) {
        const auto& base = curves.at({datasets[d], baseline}).curve;
        for (std::size_t m = 0; m < k; ++m) {
            const auto& mc = curves.at({datasets[d], methods[m]});
            acc[d][m] = mc.final_accuracy;
            auto [a, b] = align(mc.curve, base);
            aulc_m[d][m] = aulc(a, b);
            dur_m[d][m] = dur(a, b).value;
            cdm_m[d][m] = mc.cdm;
            curves_j[datasets[d]][methods[m]] = {{"n_labeled", mc.curve.n_labeled},
                                                 {"accuracy", mc.curve.accuracy},
                                                 {"runs", mc.runs}};
        }
    }
    auto mean_col = [&](const std::vector<std::vector<double>>& v, std::size_t m) {
        double s = 0.0;
        for (const auto& row : v) {
            s += row[m];
        }
        return s / static_cast<double>(v.size());
    };

    EvalOutput out;
    nlohmann::json metrics = nlohmann::json::object();
    nlohmann::json test = nullptr;
    std::optional<RankReport> ranks;
    std::optional<RankReport> aulc_wins;
    std::optional<RankReport> dur_wins;
    std::optional<RankReport> cdm_wins;
    if (k >= 2) {
        ranks = rank_methods(acc, methods, datasets);
        aulc_wins = rank_methods(aulc_m, methods, datasets);
        dur_wins = rank_methods_ascending(dur_m, methods, datasets);
        cdm_wins = rank_methods_ascending(cdm_m, methods, datasets);
        if (datasets.size() >= 2) {
            auto f = friedman(ranks->average_ranks, datasets.size(), alpha);
            double cd = nemenyi_cd(k, datasets.size(), alpha);
            test = {{"friedman",
                     {{"statistic", f.statistic}, {"df", f.df}, {"critical_value", f.critical_value}, {"reject", f.reject}}},
                    {"nemenyi", {{"q", nemenyi_q(k, alpha)}, {"cd", cd}}}};
            out.cdplot = cd_plot_data(*ranks, cd).to_json();
        }
    }
    for (std::size_t m = 0; m < k; ++m) {
        nlohmann::json mj{{"final_accuracy", mean_col(acc, m)},
                          {"aulc", mean_col(aulc_m, m)},
                          {"dur", mean_col(dur_m, m)},
                          {"cdm", mean_col(cdm_m, m)}};
        if (ranks) {
            mj["average_rank"] = ranks->average_ranks[m];
            mj["wins"] = ranks->wins[m];
            mj["aulc_wins"] = aulc_wins->wins[m];
            mj["dur_wins"] = dur_wins->wins[m];
            mj["cdm_wins"] = cdm_wins->wins[m];
        }
        std::vector<double> per_aulc;
        std::vector<double> per_dur;
        std::vector<double> per_cdm;
        for (std::size_t d = 0; d < datasets.size(); ++d) {
            per_aulc.push_back(aulc_m[d][m]);
            per_dur.push_back(dur_m[d][m]);
            per_cdm.push_back(cdm_m[d][m]);
        }
        mj["per_dataset"] = {{"aulc", per_aulc}, {"dur", per_dur}, {"cdm", per_cdm}};
        metrics[methods[m]] = mj;
    }
    out.report = {{"format", "report-v1"},
                  {"alpha", alpha},
                  {"baseline", baseline},
                  {"methods", methods},
                  {"datasets", datasets},
                  {"accuracy", acc},
                  {"ranks", ranks ? ranks->to_json() : nlohmann::json(nullptr)},
                  {"metrics", metrics},
                  {"test", test},
                  {"curves", curves_j}};

    std::ostringstream text;
    std::vector<std::string> header{"Dataset"};
    header.insert(header.end(), methods.begin(), methods.end());
    std::vector<std::vector<std::string>> rows;
    for (std::size_t d = 0; d < datasets.size(); ++d) {
        std::vector<std::string> r{datasets[d]};
        for (std::size_t m = 0; m < k; ++m) {
            r.push_back(fmt(acc[d][m], 2));
        }
        rows.push_back(r);
    }
    if (ranks) {
        std::vector<std::string> rr{"Rank"};
        std::vector<std::string> wr{"Wins"};
        for (std::size_t m = 0; m < k; ++m) {
            rr.push_back(fmt(ranks->average_ranks[m], 3));
            wr.push_back(fmt(ranks->wins[m], ranks->wins[m] == std::floor(ranks->wins[m]) ? 0 : 1));
        }
        rows.push_back(rr);
        rows.push_back(wr);
    }
    text << "Final accuracy (%)\n" << table(header, rows) << '\n';

    std::vector<std::vector<std::string>> mrows;
    for (std::size_t m = 0; m < k; ++m) {
        std::vector<std::string> r{methods[m], fmt(mean_col(aulc_m, m), 3), fmt(mean_col(dur_m, m), 3),
                                   fmt(mean_col(cdm_m, m), 3)};
        if (ranks) {
            r.push_back(fmt(aulc_wins->wins[m], 1));
            r.push_back(fmt(dur_wins->wins[m], 1));
            r.push_back(fmt(cdm_wins->wins[m], 1));
        }
        mrows.push_back(r);
    }
    std::vector<std::string> mh{"Method", "AULC", "DUR", "CDM"};
    if (ranks) {
        mh.insert(mh.end(), {"AULC wins", "DUR wins", "CDM wins"});
    }
    text << "Learning-curve metrics (baseline " << baseline << ")\n" << table(mh, mrows);
    if (!test.is_null()) {
        text << "\nFriedman chi2 = " << fmt(test["friedman"]["statistic"].get<double>(), 3)
             << " (critical " << fmt(test["friedman"]["critical_value"].get<double>(), 3) << ", alpha " << alpha
             << "): " << (test["friedman"]["reject"].get<bool>() ? "reject" : "retain") << " H0\n"
             << "Nemenyi CD = " << fmt(test["nemenyi"]["cd"].get<double>(), 3) << "\n";
    } else {
        text << "\nNo significance test (needs at least 2 methods and 2 datasets)\n";
    }
    out.text = text.str();
    return out;
}

nlohmann::json viz_data(const RunRecord& run, const VizOptions& opt) {
    const auto& f = run.footer;
    if (!f.contains("schema") || !f.contains("mixture")) {
        throw Error("run record footer lacks schema or mixture");
    }
    auto schema = FeatureSchema::from_json(f["schema"]);
    auto mixture = std::make_shared<const MixtureModel>(MixtureModel::from_json(f["mixture"]));
    auto cont = schema.continuous_columns();
    std::pair<std::size_t, std::size_t> dims{0, 1};
    if (opt.dims) {
        dims = *opt.dims;
        if (dims.first >= cont.size() || dims.second >= cont.size() || dims.first == dims.second) {
            throw Error("--dims must name two different continuous dimensions below " + std::to_string(cont.size()));
        }
    } else if (cont.size() > 2) {
        throw Error("run has " + std::to_string(cont.size()) +
                    " continuous dimensions; choose a pair with --dims i,j");
    } else if (cont.size() < 2) {
        throw Error("viz needs two continuous dimensions, run has " + std::to_string(cont.size()));
    }
    const auto ci = cont[dims.first];
    const auto cj = cont[dims.second];
    auto cfg = LearnerConfig::from_json(f.at("config"));
    auto class_names = f.value("class_names", std::vector<std::string>{});

    std::optional<SvmModel> svm;
    std::optional<CmmClassifier> cmm;
    if (cfg.model == ModelKind::cmm) {
        cmm = CmmClassifier::from_json(f.at("cmm"), mixture);
    } else {
        svm = SvmModel::from_json(f.at("model"), schema, mixture);
    }

    double x0 = std::numeric_limits<double>::infinity();
    double x1 = -x0;
    double y0 = x0;
    double y1 = -x0;
    auto extend = [&](double x, double y) {
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
    };
    nlohmann::json ellipses = nlohmann::json::array();
    for (std::size_t j = 0; j < mixture->size(); ++j) {
        const auto& c = mixture->component(j);
        auto a = static_cast<Eigen::Index>(dims.first);
        auto b = static_cast<Eigen::Index>(dims.second);
        Eigen::Matrix2d cov;
        cov << c.covariance(a, a), c.covariance(a, b), c.covariance(b, a), c.covariance(b, b);
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
        Eigen::Vector2d ev = es.eigenvalues().cwiseMax(0.0);
        Eigen::Vector2d major = es.eigenvectors().col(1);
        double mx = c.mean(a);
        double my = c.mean(b);
        extend(mx - 2.5 * std::sqrt(cov(0, 0)), my - 2.5 * std::sqrt(cov(1, 1)));
        extend(mx + 2.5 * std::sqrt(cov(0, 0)), my + 2.5 * std::sqrt(cov(1, 1)));
        ellipses.push_back({{"component", j},
                            {"weight", c.weight},
                            {"center", {mx, my}},
                            {"radii", {std::sqrt(ev(1)), std::sqrt(ev(0))}},
                            {"angle", std::atan2(major(1), major(0))}});
    }

    std::size_t upto = opt.cycle ? *opt.cycle : (run.cycles.empty() ? 0 : run.cycles.size() - 1);
    if (!run.cycles.empty() && upto >= run.cycles.size()) {
        throw Error("--cycle " + std::to_string(upto) + " beyond the last recorded cycle " +
                    std::to_string(run.cycles.size() - 1));
    }
    nlohmann::json history = nlohmann::json::array();
    for (std::size_t t = 0; t <= upto && t < run.cycles.size(); ++t) {
        for (const auto& q : run.cycles[t].queries) {
            if (q.type != QueryType::sample || q.x.size() != schema.dims()) {
                continue;
            }
            std::string role = q.initial ? "initial" : (t == upto ? "current" : "previous");
            double x = q.x[ci];
            double y = q.x[cj];
            extend(x, y);
            history.push_back({{"row", q.row},
                               {"cycle", t},
                               {"x", {x, y}},
                               {"label", q.label >= 0 ? nlohmann::json(q.label) : nlohmann::json(nullptr)},
                               {"role", role}});
        }
    }
    if (!std::isfinite(x0)) {
        x0 = y0 = -3.0;
        x1 = y1 = 3.0;
    }
    double px = 0.05 * (x1 - x0 + 1e-9);
    double py = 0.05 * (y1 - y0 + 1e-9);
    x0 -= px;
    x1 += px;
    y0 -= py;
    y1 += py;

    const auto g = std::max<std::size_t>(opt.grid, 2);
    std::vector<double> xs(g);
    std::vector<double> ys(g);
    for (std::size_t i = 0; i < g; ++i) {
        xs[i] = x0 + (x1 - x0) * static_cast<double>(i) / static_cast<double>(g - 1);
        ys[i] = y0 + (y1 - y0) * static_cast<double>(i) / static_cast<double>(g - 1);
    }
    RowMatrix pts = RowMatrix::Zero(static_cast<Eigen::Index>(g * g), static_cast<Eigen::Index>(schema.dims()));
    for (std::size_t r = 0; r < g; ++r) {
        for (std::size_t c = 0; c < g; ++c) {
            auto i = static_cast<Eigen::Index>(r * g + c);
            pts(i, static_cast<Eigen::Index>(ci)) = xs[c];
            pts(i, static_cast<Eigen::Index>(cj)) = ys[r];
        }
    }
    const bool binary = class_names.size() == 2;
    std::vector<std::vector<double>> values(g, std::vector<double>(g, 0.0));
    std::vector<std::vector<int>> predicted(g, std::vector<int>(g, 0));
    if (svm) {
        auto d = svm->decision(pts);
        for (std::size_t r = 0; r < g; ++r) {
            for (std::size_t c = 0; c < g; ++c) {
                auto i = static_cast<Eigen::Index>(r * g + c);
                std::span<const double> di(d.data() + i * d.cols(), static_cast<std::size_t>(d.cols()));
                predicted[r][c] = d.cols() == 0 ? svm->constant_class() : svm->vote(di);
                if (binary && d.cols() == 1) {
                    // positive decision = class 0 side
                    values[r][c] = svm->machines()[0].positive_class == 0 ? di[0] : -di[0];
                }
            }
        }
    } else {
        for (std::size_t r = 0; r < g; ++r) {
            for (std::size_t c = 0; c < g; ++c) {
                auto p = cmm->posterior(row_span(pts, static_cast<Eigen::Index>(r * g + c)));
                predicted[r][c] = argmax_lowest(p);
                values[r][c] = binary ? p[0] - p[1] : top_two_margin(p);
            }
        }
    }
    std::vector<std::string> dim_names{schema.columns[ci].name, schema.columns[cj].name};
    return {{"format", "vizdata-v1"},
            {"dataset", run.meta.dataset},
            {"method", run.meta.method},
            {"dims", dim_names},
            {"cycle", upto},
            {"class_names", class_names},
            {"grid",
             {{"x", xs},
              {"y", ys},
              {"value_meaning", binary ? "positive: class 0 side" : "top-two margin"},
              {"values", values},
              {"predicted", predicted}}},
            {"ellipses", ellipses},
            {"history", history}};
}

}  // namespace cal
