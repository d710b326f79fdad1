// Command-line front end: simulate generators, build/cache Gram matrices,
// fit strategies, backtest model files and run experiment sweeps.

#include "ktrade/experiments.hpp"
#include "ktrade/numeric.hpp"
#include "ktrade/parallel.hpp"
#include "ktrade/rng.hpp"
#include "ktrade/serde.hpp"
#include "ktrade/strategies.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace {

using ktrade::json;

struct StageTimer {
    bool enabled = false;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    void stage(const std::string& name) {
        if (!enabled) return;
        const auto now = std::chrono::steady_clock::now();
        const auto ms =
            std::chrono::duration_cast<std::chrono::milliseconds>(now - start).count();
        std::cerr << "[time] " << name << ": " << ms << " ms\n";
        start = now;
    }
};

json require_config(const std::string& path) {
    if (path.empty()) throw CLI::ValidationError("--config", "config file required");
    return ktrade::load_json_file(path);
}

int cmd_simulate(const std::string& config_file, const std::string& out,
                 std::optional<std::uint64_t> seed_override, StageTimer& timer) {
    const json j = require_config(config_file);
    ktrade::reject_unknown_keys(j, {"generator", "seed", "bars", "session", "bar_minutes"},
                                "simulate config");
    ktrade::GeneratorConfig gen;
    {
        // Reuse the experiment-config parser for the generator block.
        json wrapper;
        wrapper["experiment"] = "lambda_sweep";
        wrapper["generator"] = j.at("generator");
        gen = ktrade::experiment_config_from_json(wrapper).generator;
    }
    const std::uint64_t seed = seed_override.value_or(j.value("seed", std::uint64_t{1}));

    if (gen.type == "pathdep_drift") {
        const auto world = ktrade::gen_pathdep_drift(gen.drift, gen.n_paths, gen.n_steps, gen.dt,
                                                     seed);
        ktrade::save_json_file(out + ".asset.json", ktrade::to_json(world.asset));
        ktrade::save_json_file(out + ".signal.json", ktrade::to_json(world.signal));
        ktrade::save_json_file(out + ".drift.json", ktrade::to_json(world.drift));
        std::cout << "wrote " << out << ".{asset,signal,drift}.json (gain "
                  << ktrade::format_full(world.gain) << ")\n";
    } else {
        const ktrade::PathBatch batch = ktrade::generate_batch(gen, seed);
        if (j.value("bars", false)) {
            const auto window =
                ktrade::parse_session_window(j.value("session", std::string("09:30-16:00")));
            std::ofstream os(out);
            if (!os) throw std::runtime_error("cannot write " + out);
            ktrade::write_bars_csv(os, batch, window, j.value("bar_minutes", 5));
            std::cout << "wrote " << out << " (" << batch.size() << " sessions)\n";
        } else {
            ktrade::save_json_file(out, ktrade::to_json(batch));
            std::cout << "wrote " << out << " (" << batch.size() << " paths)\n";
        }
    }
    timer.stage("simulate");
    return 0;
}

int cmd_gram(const std::string& config_file, const std::string& data_file,
             const std::string& out, StageTimer& timer) {
    const json j = require_config(config_file);
    ktrade::reject_unknown_keys(j, {"kernel", "embedding", "lift"}, "gram config");
    const ktrade::KernelSpec kspec = ktrade::kernel_spec_from_json(j.at("kernel"));
    ktrade::EmbeddingSpec espec;
    if (j.contains("embedding")) espec = ktrade::embedding_spec_from_json(j.at("embedding"));

    const ktrade::PathBatch batch = ktrade::batch_from_json(ktrade::load_json_file(data_file));
    espec = ktrade::with_pinned_horizon(espec, batch);
    const ktrade::OperatorLift lift = j.contains("lift")
                                          ? ktrade::lift_from_json(j.at("lift"))
                                          : ktrade::OperatorLift::identity(batch.channels());
    timer.stage("load");

    const std::string fingerprint = ktrade::kphi_fingerprint(kspec, espec, lift, batch);
    if (std::filesystem::exists(out)) {
        try {
            const ktrade::GramMatrix cached = ktrade::gram_from_json(ktrade::load_json_file(out));
            if (cached.fingerprint == fingerprint) {
                std::cout << "cache hit: " << out << " (fingerprint " << fingerprint << ")\n";
                return 0;
            }
        } catch (const std::exception&) {
            // stale or foreign file, rebuild
        }
    }

    const ktrade::GramMatrix gram = ktrade::kphi_gram(kspec, espec, lift, batch);
    timer.stage("gram");
    ktrade::save_json_file(out, ktrade::to_json(gram));
    std::cout << "wrote " << out << " (" << gram.size() << "x" << gram.size() << ", fingerprint "
              << gram.fingerprint << ")\n";
    return 0;
}

int cmd_fit(const std::string& config_file, const std::string& data_file, const std::string& out,
            StageTimer& timer) {
    const json j = require_config(config_file);
    ktrade::reject_unknown_keys(j, {"kernel", "embedding", "fit", "lift"}, "fit config");

    json wrapper;
    wrapper["experiment"] = "lambda_sweep";
    if (j.contains("kernel")) wrapper["kernel"] = j.at("kernel");
    if (j.contains("embedding")) wrapper["embedding"] = j.at("embedding");
    if (j.contains("fit")) wrapper["fit"] = j.at("fit");
    const ktrade::ExperimentConfig cfg = ktrade::experiment_config_from_json(wrapper);

    const ktrade::PathBatch batch = ktrade::batch_from_json(ktrade::load_json_file(data_file));
    const ktrade::EmbeddingSpec espec = ktrade::with_pinned_horizon(cfg.embedding, batch);
    const ktrade::OperatorLift lift = j.contains("lift")
                                          ? ktrade::lift_from_json(j.at("lift"))
                                          : ktrade::OperatorLift::identity(batch.channels());
    timer.stage("load");

    ktrade::GridSearchResult result;
    ktrade::PathBatch fit_batch;
    if (cfg.fit.folds > 1) {
        result = ktrade::grid_search_kfold(batch, cfg.fit.folds, cfg.kernel, espec, lift,
                                           cfg.fit.gamma_grid, cfg.fit.lambda_grid,
                                           cfg.fit.m_grid, cfg.fit.eta);
        fit_batch = batch;
    } else {
        ktrade::TrainValSplit split = ktrade::split_batch(batch, cfg.fit.validation_fraction);
        result = ktrade::grid_search(split.train, split.validation, cfg.kernel, espec, lift,
                                     cfg.fit.gamma_grid, cfg.fit.lambda_grid, cfg.fit.m_grid,
                                     cfg.fit.eta);
        fit_batch = std::move(split.train);
    }
    timer.stage("grid search");
    for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';

    ktrade::EmbeddingSpec best_espec = espec;
    best_espec.scale_gamma = result.scale_gamma;
    const ktrade::StrategyModel model =
        ktrade::make_strategy_model(best_espec, cfg.kernel, lift, fit_batch, result.weights);
    ktrade::save_model(model, out);

    // Score table next to the model file.
    const std::string scores_file = out + ".scores.csv";
    std::ofstream scores(scores_file);
    scores << "scale_gamma,lambda,m,objective_train,objective_val,J,R_contrib\n";
    for (const auto& cell : result.table) {
        scores << ktrade::format_full(cell.scale_gamma) << ',' << ktrade::format_full(cell.lambda)
               << ',' << (cell.rank_m <= 0 ? std::string("full") : std::to_string(cell.rank_m))
               << ',' << (cell.failed ? "nan" : ktrade::format_full(cell.objective_train)) << ','
               << (cell.failed ? "nan" : ktrade::format_full(cell.objective_val)) << ','
               << (cell.failed ? "nan" : ktrade::format_full(cell.j_val)) << ','
               << ktrade::format_full(cell.r_contrib) << '\n';
    }
    std::cout << "wrote " << out << " (gamma " << ktrade::format_full(result.scale_gamma)
              << ", lambda " << ktrade::format_full(result.lambda) << ", m "
              << (result.rank_m <= 0 ? std::string("full") : std::to_string(result.rank_m))
              << ", val objective " << ktrade::format_full(result.best_score) << ")\n"
              << "wrote " << scores_file << '\n';
    timer.stage("save");
    return 0;
}

int cmd_backtest(const std::string& model_file, const std::string& data_file,
                 const std::string& out, StageTimer& timer) {
    const ktrade::StrategyModel model = ktrade::load_model(model_file);
    const ktrade::PathBatch batch = ktrade::batch_from_json(ktrade::load_json_file(data_file));
    timer.stage("load");

    const double eta = model.weights.config.eta;
    const ktrade::BacktestReport report = ktrade::backtest(model, batch, eta);
    timer.stage("backtest");

    const std::string csv_file = out + ".csv";
    std::ofstream csv(csv_file);
    if (!csv) throw std::runtime_error("cannot write " + csv_file);
    csv << "path,terminal_pnl,turnover\n";
    for (Eigen::Index i = 0; i < report.terminal_pnl.size(); ++i) {
        csv << i << ',' << ktrade::format_full(report.terminal_pnl(i)) << ','
            << ktrade::format_full(report.turnover(i)) << '\n';
    }

    json summary;
    summary["n_paths"] = report.terminal_pnl.size();
    summary["mean"] = report.mean;
    summary["variance"] = report.variance;
    summary["penalised_objective"] = report.penalised_objective;
    summary["eta"] = report.eta;
    const std::string summary_file = out + ".json";
    ktrade::save_json_file(summary_file, summary);

    std::cout << "wrote " << csv_file << " and " << summary_file << " (mean "
              << ktrade::format_full(report.mean) << ", variance "
              << ktrade::format_full(report.variance) << ")\n";
    return 0;
}

int cmd_sweep(const std::string& config_file, const std::string& out, StageTimer& timer) {
    json j = require_config(config_file);
    if (!out.empty()) j["output_dir"] = out;
    if (timer.enabled) j["time"] = true;
    const ktrade::ExperimentConfig cfg = ktrade::experiment_config_from_json(j);
    const ktrade::RunOutcome outcome = ktrade::run_experiment(cfg);
    for (const auto& f : outcome.output_files) std::cout << "wrote " << f << '\n';
    if (outcome.cell_failures > 0) {
        std::cerr << outcome.cell_failures << " cell(s) failed; see summary.json\n";
    }
    timer.stage("sweep");
    return 0;
}

int cmd_eval_kernel(const std::string& config_file, const std::string& path_a,
                    const std::string& path_b) {
    ktrade::KernelSpec kspec = ktrade::KernelSpec::sig_pde(2);
    if (!config_file.empty()) {
        const json j = ktrade::load_json_file(config_file);
        ktrade::reject_unknown_keys(j, {"kernel"}, "eval-kernel config");
        kspec = ktrade::kernel_spec_from_json(j.at("kernel"));
    }
    const ktrade::Path a = ktrade::path_from_json(ktrade::load_json_file(path_a));
    const ktrade::Path b = ktrade::path_from_json(ktrade::load_json_file(path_b));
    std::cout << ktrade::format_full(ktrade::kernel_eval(kspec, a, b)) << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Path-kernel mean-variance trading toolkit"};
    app.require_subcommand(1);

    std::string config_file, data_file, model_file, out_file;
    std::optional<std::uint64_t> seed;
    int threads = 0;
    bool time_stages = false;

    app.add_option("--threads", threads, "worker threads (0 = hardware)");
    app.add_flag("--time", time_stages, "print per-stage wall times to stderr");

    auto* simulate = app.add_subcommand("simulate", "run a generator, write batch files");
    simulate->add_option("--config", config_file)->required();
    simulate->add_option("--out", out_file)->required();
    simulate->add_option("--seed", seed);

    auto* gram = app.add_subcommand("gram", "build or reuse a cached PnL-kernel Gram matrix");
    gram->add_option("--config", config_file)->required();
    gram->add_option("--data", data_file)->required();
    gram->add_option("--out", out_file)->required();

    auto* fit = app.add_subcommand("fit", "grid-search fit, write a model file");
    fit->add_option("--config", config_file)->required();
    fit->add_option("--data", data_file)->required();
    fit->add_option("--out", out_file)->required();

    auto* backtest = app.add_subcommand("backtest", "backtest a model file on a batch");
    backtest->add_option("--model", model_file)->required();
    backtest->add_option("--data", data_file)->required();
    backtest->add_option("--out", out_file)->required();

    auto* sweep = app.add_subcommand("sweep", "run an experiment config");
    sweep->add_option("--config", config_file)->required();
    sweep->add_option("--out", out_file);

    std::string path_a, path_b;
    auto* eval = app.add_subcommand("eval-kernel", "kernel value of two path files");
    eval->add_option("--config", config_file);
    eval->add_option("path_a", path_a)->required();
    eval->add_option("path_b", path_b)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        app.exit(e);
        return 2;
    }

    ktrade::set_num_threads(threads);
    StageTimer timer;
    timer.enabled = time_stages;

    try {
        if (simulate->parsed()) return cmd_simulate(config_file, out_file, seed, timer);
        if (gram->parsed()) return cmd_gram(config_file, data_file, out_file, timer);
        if (fit->parsed()) return cmd_fit(config_file, data_file, out_file, timer);
        if (backtest->parsed()) return cmd_backtest(model_file, data_file, out_file, timer);
        if (sweep->parsed()) return cmd_sweep(config_file, out_file, timer);
        if (eval->parsed()) return cmd_eval_kernel(config_file, path_a, path_b);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
