#include "cal/experiment.hpp"
#include "cal/server.hpp"
#include "cal/synth.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_config = 1;
constexpr int exit_partial = 2;

// CAL_LAB_OUT wins over --out.
std::optional<fs::path> out_dir(const std::string& flag) {
    if (const char* env = std::getenv("CAL_LAB_OUT"); env && *env) {
        return fs::path(env);
    }
    if (!flag.empty()) {
        return fs::path(flag);
    }
    return std::nullopt;
}

void write_text(const fs::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw cal::Error("cannot write '" + p.string() + "'");
    }
    out << s;
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) {
        throw cal::Error("cannot read '" + p.string() + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cal_lab: generative-model active learning experiments"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "execute every (dataset, method, fold, seed) run of a config");
    std::string run_config;
    std::string run_out;
    std::size_t parallel = 1;
    bool force = false;
    run->add_option("--config", run_config, "experiment config (JSON)")->required();
    run->add_option("--out", run_out, "output directory");
    run->add_option("--parallel", parallel, "worker count")->check(CLI::PositiveNumber);
    run->add_flag("--force", force, "recompute completed runs");

    auto* eval = app.add_subcommand("eval", "aggregate run records into tables and tests");
    std::string results;
    std::string baseline;
    double alpha = 0.05;
    std::string eval_out;
    eval->add_option("--results", results, "directory of run records")->required();
    eval->add_option("--baseline", baseline, "baseline method name")->required();
    eval->add_option("--alpha", alpha, "significance level (0.10, 0.05 or 0.01)");
    eval->add_option("--out", eval_out, "report directory (default: --results)");

    auto* viz = app.add_subcommand("viz", "plot data of one run");
    std::string run_file;
    std::vector<std::size_t> dims;
    std::optional<std::size_t> cycle;
    std::size_t grid = 60;
    std::string viz_out;
    viz->add_option("--run", run_file, "run record (JSONL)")->required();
    viz->add_option("--dims", dims, "two continuous dimension positions, e.g. 0,1")->delimiter(',')->expected(2);
    viz->add_option("--cycle", cycle, "last cycle of the selection history");
    viz->add_option("--grid", grid, "grid resolution per axis")->check(CLI::Range(2, 1000));
    viz->add_option("--out", viz_out, "output file (default: stdout)");

    auto* gen = app.add_subcommand("gen", "write a synthetic dataset with its schema");
    std::string kind = "two_moons";
    std::size_t n = 1000;
    double noise = 0.1;
    std::uint64_t seed = 0;
    std::string gen_out;
    std::string gen_name;
    gen->add_option("--kind", kind, "two_moons or clouds");
    gen->add_option("--n", n, "rows");
    gen->add_option("--noise", noise, "noise level");
    gen->add_option("--seed", seed, "seed");
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--name", gen_name, "dataset id (default: kind)");

    auto* verify = app.add_subcommand("verify", "recompute the hashes listed in a manifest");
    std::string manifest;
    verify->add_option("--manifest", manifest, "manifest.json")->required();

    auto* serve = app.add_subcommand("serve", "start the labeling session server");
    cal::ServeOptions sopt;
    std::string journal;
    std::string static_dir;
    serve->add_option("--host", sopt.host, "bind address");
    serve->add_option("--port", sopt.port, "port");
    serve->add_option("--data-dir", sopt.data_dir, "datasets (<id>.csv + <id>.schema.json)");
    serve->add_option("--journal-dir", journal, "session journals");
    serve->add_option("--static-dir", static_dir, "static files served at /");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            cal::ExperimentConfig cfg;
            try {
                cfg = cal::ExperimentConfig::load(run_config);
            } catch (const cal::ConfigError& e) {
                std::cerr << "config error: " << e.what() << '\n';
                return exit_config;
            }
            auto out = out_dir(run_out);
            if (!out) {
                out = cfg.out;
            }
            if (!out) {
                std::cerr << "config error: /out: no output directory (use --out or CAL_LAB_OUT)\n";
                return exit_config;
            }
            auto s = cal::run_experiment(cfg, *out, parallel, force);
            std::cout << s.produced << " produced, " << s.skipped << " skipped, " << s.failures.size()
                      << " failed\n";
            for (const auto& f : s.failures) {
                std::cerr << "failed: " << f.file << ": " << f.error << '\n';
            }
            return s.failures.empty() ? exit_ok : exit_partial;
        }
        if (*eval) {
            auto runs = cal::load_results(results);
            auto r = cal::evaluate_results(runs, baseline, alpha);
            auto out = out_dir(eval_out).value_or(fs::path(results));
            fs::create_directories(out);
            write_text(out / "report.json", r.report.dump(2) + "\n");
            write_text(out / "report.txt", r.text);
            if (!r.cdplot.is_null()) {
                write_text(out / "cdplot.json", r.cdplot.dump(2) + "\n");
            }
            std::cout << r.text;
            return exit_ok;
        }
        if (*viz) {
            auto rec = cal::RunRecord::from_jsonl(read_text(run_file));
            cal::VizOptions opt;
            if (dims.size() == 2) {
                opt.dims = std::make_pair(dims[0], dims[1]);
            }
            opt.cycle = cycle;
            opt.grid = grid;
            auto j = cal::viz_data(rec, opt).dump(2) + "\n";
            if (viz_out.empty()) {
                std::cout << j;
            } else {
                write_text(viz_out, j);
            }
            return exit_ok;
        }
        if (*gen) {
            auto d = cal::synth::generate(kind, n, noise, seed);
            auto out = *out_dir(gen_out);
            fs::create_directories(out);
            auto id = gen_name.empty() ? kind : gen_name;
            cal::save_dataset_csv(d, out / (id + ".csv"));
            cal::save_schema(d.schema, out / (id + ".schema.json"));
            std::cout << "wrote " << (out / (id + ".csv")).string() << '\n';
            return exit_ok;
        }
        if (*verify) {
            auto r = cal::verify_manifest(manifest);
            for (const auto& p : r.problems) {
                std::cerr << p << '\n';
            }
            std::cout << (r.ok ? "ok" : "verification failed") << '\n';
            return r.ok ? exit_ok : exit_partial;
        }
        if (*serve) {
            if (!journal.empty()) {
                sopt.journal_dir = journal;
            }
            if (!static_dir.empty()) {
                sopt.static_dir = static_dir;
            }
            if (!cal::serve(sopt)) {
                std::cerr << "cannot bind " << sopt.host << ":" << sopt.port << '\n';
                return exit_config;
            }
            return exit_ok;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_config;
    }
    return exit_ok;
}
