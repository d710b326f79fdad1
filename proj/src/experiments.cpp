#include "ktrade/experiments.hpp"

#include "ktrade/numeric.hpp"
#include "ktrade/parallel.hpp"
#include "ktrade/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace ktrade {

namespace {

// ---------------------------------------------------------------- config

OUParams ou_from_json(const json& j, std::size_t, const json& full) {
    reject_unknown_keys(full, {"type", "n_paths", "n_steps", "dt", "theta", "mu", "sigma", "corr",
                               "x0"},
                        "generator");
    auto vec = [&](const char* key, double fallback, Eigen::Index d) {
        Eigen::VectorXd v = Eigen::VectorXd::Constant(d, fallback);
        if (j.contains(key)) {
            const auto arr = j.at(key).get<std::vector<double>>();
            if (static_cast<Eigen::Index>(arr.size()) != d) {
                throw std::runtime_error(std::string("generator: bad length for ") + key);
            }
            for (Eigen::Index i = 0; i < d; ++i) v(i) = arr[static_cast<std::size_t>(i)];
        }
        return v;
    };
    Eigen::Index d = 1;
    if (j.contains("theta")) d = static_cast<Eigen::Index>(j.at("theta").size());
    OUParams p = OUParams::standard(d);
    p.theta = vec("theta", 1.0, d);
    p.mu = vec("mu", 0.0, d);
    p.sigma = vec("sigma", 0.2, d);
    p.x0 = vec("x0", 0.0, d);
    if (j.contains("corr")) {
        const auto& cj = j.at("corr");
        p.corr.resize(d, d);
        for (Eigen::Index r = 0; r < d; ++r) {
            for (Eigen::Index c = 0; c < d; ++c) {
                p.corr(r, c) = cj.at(static_cast<std::size_t>(r))
                                   .at(static_cast<std::size_t>(c))
                                   .get<double>();
            }
        }
    }
    p.validate();
    return p;
}

GeneratorConfig generator_from_json(const json& j) {
    GeneratorConfig g;
    g.type = j.value("type", "ou");
    g.n_paths = j.value("n_paths", std::size_t{100});
    g.n_steps = j.value("n_steps", std::size_t{20});
    g.dt = j.value("dt", 0.1);
    if (g.type == "ou") {
        g.ou = ou_from_json(j, g.n_paths, j);
    } else if (g.type == "pathdep_drift") {
        reject_unknown_keys(j, {"type", "n_paths", "n_steps", "dt", "kappa", "sigma_I", "sigma_X",
                                "decay_alpha", "decay_c", "rho"},
                            "generator");
        g.drift.kappa = j.value("kappa", 1.0);
        g.drift.sigma_I = j.value("sigma_I", 1.0);
        g.drift.sigma_X = j.value("sigma_X", 1.0);
        g.drift.decay_alpha = j.value("decay_alpha", 0.6);
        g.drift.decay_c = j.value("decay_c", 1.0);
        g.drift.rho = j.value("rho", 0.1);
        g.drift.validate();
    } else {
        throw std::runtime_error("generator: unknown type '" + g.type + "'");
    }
    return g;
}

json generator_to_json(const GeneratorConfig& g) {
    json j;
    j["type"] = g.type;
    j["n_paths"] = g.n_paths;
    j["n_steps"] = g.n_steps;
    j["dt"] = g.dt;
    if (g.type == "ou") {
        const Eigen::Index d = g.ou.theta.size();
        auto vec = [](const Eigen::VectorXd& v) {
            return std::vector<double>(v.data(), v.data() + v.size());
        };
        j["theta"] = vec(g.ou.theta);
        j["mu"] = vec(g.ou.mu);
        j["sigma"] = vec(g.ou.sigma);
        j["x0"] = vec(g.ou.x0);
        json corr = json::array();
        for (Eigen::Index r = 0; r < d; ++r) {
            json row = json::array();
            for (Eigen::Index c = 0; c < d; ++c) row.push_back(g.ou.corr(r, c));
            corr.push_back(std::move(row));
        }
        j["corr"] = std::move(corr);
    } else {
        j["kappa"] = g.drift.kappa;
        j["sigma_I"] = g.drift.sigma_I;
        j["sigma_X"] = g.drift.sigma_X;
        j["decay_alpha"] = g.drift.decay_alpha;
        j["decay_c"] = g.drift.decay_c;
        j["rho"] = g.drift.rho;
    }
    return j;
}

SignalParams signal_params_from_json(const json& j) {
    reject_unknown_keys(j, {"horizon_w", "rho", "sv_gamma", "decay", "vol_proxy", "seed"},
                        "signal");
    SignalParams p;
    p.horizon_w = j.value("horizon_w", Eigen::Index{1});
    p.rho = j.value("rho", 0.05);
    p.sv_gamma = j.value("sv_gamma", 0.0);
    if (j.contains("decay")) {
        const auto& dj = j.at("decay");
        reject_unknown_keys(dj, {"kind", "c", "alpha", "rate"}, "signal.decay");
        const std::string kind = dj.value("kind", "power_law");
        if (kind == "power_law") {
            p.decay.kind = DecayKind::PowerLaw;
        } else if (kind == "exponential") {
            p.decay.kind = DecayKind::Exponential;
        } else if (kind == "flat") {
            p.decay.kind = DecayKind::Flat;
        } else {
            throw std::runtime_error("signal.decay: unknown kind '" + kind + "'");
        }
        p.decay.c = dj.value("c", 1.0);
        p.decay.alpha = dj.value("alpha", 0.5);
        p.decay.rate = dj.value("rate", 1.0);
    }
    const std::string proxy = j.value("vol_proxy", "window_rms");
    if (proxy == "window_rms") {
        p.vol_proxy = VolProxyMode::WindowRms;
    } else if (proxy == "abs_return") {
        p.vol_proxy = VolProxyMode::AbsReturn;
    } else {
        throw std::runtime_error("signal: unknown vol_proxy '" + proxy + "'");
    }
    p.seed = j.value("seed", std::uint64_t{0});
    p.validate();
    return p;
}

json signal_params_to_json(const SignalParams& p) {
    json j;
    j["horizon_w"] = p.horizon_w;
    j["rho"] = p.rho;
    j["sv_gamma"] = p.sv_gamma;
    json dj;
    dj["kind"] = p.decay.kind == DecayKind::PowerLaw
                     ? "power_law"
                     : (p.decay.kind == DecayKind::Exponential ? "exponential" : "flat");
    dj["c"] = p.decay.c;
    dj["alpha"] = p.decay.alpha;
    dj["rate"] = p.decay.rate;
    j["decay"] = std::move(dj);
    j["vol_proxy"] = p.vol_proxy == VolProxyMode::WindowRms ? "window_rms" : "abs_return";
    j["seed"] = p.seed;
    return j;
}

const std::vector<std::string> kExperiments = {
    "ou_convergence", "truncation_convergence", "lambda_sweep",    "scale_sweep",
    "rank_sweep",     "eta_delta_surface",      "pathdep_drift",   "signal_study"};

} // namespace

void ExperimentConfig::validate() const {
    if (std::find(kExperiments.begin(), kExperiments.end(), experiment) == kExperiments.end()) {
        throw std::runtime_error("experiment: unknown experiment '" + experiment + "'");
    }
    if (seeds.empty()) throw std::runtime_error("experiment: at least one seed required");
    if (fit.lambda_grid.empty() || fit.gamma_grid.empty() || fit.m_grid.empty()) {
        throw std::runtime_error("experiment: fit grids must be nonempty");
    }
    if (!(fit.validation_fraction > 0.0) || !(fit.validation_fraction < 1.0)) {
        throw std::runtime_error("experiment: validation_fraction must be in (0, 1)");
    }
    kernel.validate();
    embedding.validate();
}

ExperimentConfig experiment_config_from_json(const json& j) {
    reject_unknown_keys(j, {"experiment", "seeds", "output_dir", "generator", "kernel",
                            "embedding", "fit", "sweep", "time"},
                        "config");
    ExperimentConfig c;
    c.experiment = j.at("experiment").get<std::string>();
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    c.output_dir = j.value("output_dir", "out");
    if (j.contains("generator")) c.generator = generator_from_json(j.at("generator"));
    if (j.contains("kernel")) c.kernel = kernel_spec_from_json(j.at("kernel"));
    if (j.contains("embedding")) {
        reject_unknown_keys(j.at("embedding"),
                            {"time_augment", "scale_gamma", "basepoint", "time_horizon"},
                            "embedding");
        c.embedding = embedding_spec_from_json(j.at("embedding"));
    }
    if (j.contains("fit")) {
        const auto& f = j.at("fit");
        reject_unknown_keys(f, {"lambda_grid", "gamma_grid", "m_grid", "eta",
                                "validation_fraction", "test_paths", "folds"},
                            "fit");
        if (f.contains("lambda_grid")) c.fit.lambda_grid = f.at("lambda_grid").get<std::vector<double>>();
        if (f.contains("gamma_grid")) c.fit.gamma_grid = f.at("gamma_grid").get<std::vector<double>>();
        if (f.contains("m_grid")) {
            c.fit.m_grid.clear();
            for (const auto& m : f.at("m_grid")) {
                c.fit.m_grid.push_back(m.is_string() ? 0 : m.get<Eigen::Index>());
            }
        }
        c.fit.eta = f.value("eta", 1.0);
        c.fit.validation_fraction = f.value("validation_fraction", 0.3);
        c.fit.test_paths = f.value("test_paths", std::size_t{200});
        c.fit.folds = f.value("folds", 1);
    }
    if (j.contains("sweep")) {
        const auto& s = j.at("sweep");
        reject_unknown_keys(s, {"sample_sizes", "path_lengths", "truncation_orders",
                                "delta_targets", "decay_alphas", "sv_gammas", "signal", "vary",
                                "bars_csv", "bars_per_session", "session", "sig_order"},
                            "sweep");
        if (s.contains("sample_sizes")) {
            c.sweep.sample_sizes = s.at("sample_sizes").get<std::vector<std::size_t>>();
        }
        if (s.contains("path_lengths")) {
            c.sweep.path_lengths = s.at("path_lengths").get<std::vector<std::size_t>>();
        }
        if (s.contains("truncation_orders")) {
            c.sweep.truncation_orders = s.at("truncation_orders").get<std::vector<int>>();
        }
        if (s.contains("delta_targets")) {
            c.sweep.delta_targets = s.at("delta_targets").get<std::vector<double>>();
        }
        if (s.contains("decay_alphas")) {
            c.sweep.decay_alphas = s.at("decay_alphas").get<std::vector<double>>();
        }
        if (s.contains("sv_gammas")) {
            c.sweep.sv_gammas = s.at("sv_gammas").get<std::vector<double>>();
        }
        if (s.contains("signal")) c.sweep.signal = signal_params_from_json(s.at("signal"));
        c.sweep.vary = s.value("vary", "decay_alpha");
        c.sweep.bars_csv = s.value("bars_csv", "");
        c.sweep.bars_per_session = s.value("bars_per_session", std::size_t{78});
        c.sweep.session = s.value("session", "09:30-16:00");
        c.sweep.sig_order = s.value("sig_order", 3);
    }
    c.time_stages = j.value("time", false);
    c.validate();
    return c;
}

json to_json(const ExperimentConfig& c) {
    json j;
    j["experiment"] = c.experiment;
    j["seeds"] = c.seeds;
    j["output_dir"] = c.output_dir;
    j["generator"] = generator_to_json(c.generator);
    j["kernel"] = to_json(c.kernel);
    j["embedding"] = to_json(c.embedding);
    json f;
    f["lambda_grid"] = c.fit.lambda_grid;
    f["gamma_grid"] = c.fit.gamma_grid;
    f["m_grid"] = c.fit.m_grid;
    f["eta"] = c.fit.eta;
    f["validation_fraction"] = c.fit.validation_fraction;
    f["test_paths"] = c.fit.test_paths;
    f["folds"] = c.fit.folds;
    j["fit"] = std::move(f);
    json s;
    s["sample_sizes"] = c.sweep.sample_sizes;
    s["path_lengths"] = c.sweep.path_lengths;
    s["truncation_orders"] = c.sweep.truncation_orders;
    s["delta_targets"] = c.sweep.delta_targets;
    s["decay_alphas"] = c.sweep.decay_alphas;
    s["sv_gammas"] = c.sweep.sv_gammas;
    s["signal"] = signal_params_to_json(c.sweep.signal);
    s["vary"] = c.sweep.vary;
    s["bars_csv"] = c.sweep.bars_csv;
    s["bars_per_session"] = c.sweep.bars_per_session;
    s["session"] = c.sweep.session;
    s["sig_order"] = c.sweep.sig_order;
    j["sweep"] = std::move(s);
    j["time"] = c.time_stages;
    return j;
}

// ---------------------------------------------------------------- helpers

PathBatch generate_batch(const GeneratorConfig& gen, std::uint64_t seed) {
    if (gen.type == "ou") {
        return gen_ou(gen.ou, gen.n_paths, gen.n_steps, gen.dt, seed);
    }
    if (gen.type == "pathdep_drift") {
        return gen_pathdep_drift(gen.drift, gen.n_paths, gen.n_steps, gen.dt, seed).asset;
    }
    throw std::runtime_error("generator: unknown type '" + gen.type + "'");
}

TrainValSplit split_batch(const PathBatch& batch, double validation_fraction) {
    const std::size_t n = batch.size();
    std::size_t n_val = static_cast<std::size_t>(std::ceil(validation_fraction * static_cast<double>(n)));
    n_val = std::min(std::max<std::size_t>(n_val, 1), n - 1);
    TrainValSplit split;
    split.train.label = batch.label + "_train";
    split.validation.label = batch.label + "_val";
    split.train.paths.assign(batch.paths.begin(),
                             batch.paths.begin() + static_cast<std::ptrdiff_t>(n - n_val));
    split.validation.paths.assign(batch.paths.begin() + static_cast<std::ptrdiff_t>(n - n_val),
                                  batch.paths.end());
    return split;
}

GridSearchResult grid_search_kfold(const PathBatch& batch, int folds, const KernelSpec& kspec,
                                   const EmbeddingSpec& espec, const OperatorLift& lift,
                                   const std::vector<double>& gamma_grid,
                                   const std::vector<double>& lambda_grid,
                                   const std::vector<Eigen::Index>& m_grid, double eta) {
    if (folds <= 1) {
        throw std::invalid_argument("grid_search_kfold: folds must be >= 2");
    }
    const std::size_t n = batch.size();
    if (static_cast<std::size_t>(folds) > n) {
        throw std::invalid_argument("grid_search_kfold: more folds than paths");
    }

    // Accumulate per-cell validation scores over the folds.
    std::vector<GridSearchResult> fold_results;
    for (int f = 0; f < folds; ++f) {
        PathBatch train, val;
        train.label = batch.label + "_train";
        val.label = batch.label + "_val";
        for (std::size_t i = 0; i < n; ++i) {
            if (static_cast<int>(i % static_cast<std::size_t>(folds)) == f) {
                val.paths.push_back(batch.paths[i]);
            } else {
                train.paths.push_back(batch.paths[i]);
            }
        }
        fold_results.push_back(
            grid_search(train, val, kspec, espec, lift, gamma_grid, lambda_grid, m_grid, eta));
    }

    const auto& table0 = fold_results.front().table;
    double best_score = 0.0;
    std::size_t best_cell = table0.size();
    for (std::size_t c = 0; c < table0.size(); ++c) {
        double score = 0.0;
        bool ok = true;
        for (const auto& fr : fold_results) {
            if (fr.table[c].failed) {
                ok = false;
                break;
            }
            score += fr.table[c].objective_val;
        }
        if (!ok) continue;
        score /= static_cast<double>(folds);
        const auto& cell = table0[c];
        const bool better =
            best_cell == table0.size() || score > best_score ||
            (score == best_score &&
             (cell.lambda > table0[best_cell].lambda ||
              (cell.lambda == table0[best_cell].lambda && cell.rank_m < table0[best_cell].rank_m)));
        if (better) {
            best_score = score;
            best_cell = c;
        }
    }
    if (best_cell == table0.size()) {
        throw std::runtime_error("grid_search_kfold: all fits failed");
    }

    // Refit the winning cell on the full batch.
    const auto& cell = table0[best_cell];
    EmbeddingSpec refit_espec = espec;
    refit_espec.scale_gamma = cell.scale_gamma;
    const GramMatrix gram = kphi_gram(kspec, refit_espec, lift, batch);
    FitConfig config;
    config.lambda = cell.lambda;
    config.eta = eta;
    config.rank_m = cell.rank_m;

    GridSearchResult result;
    result.scale_gamma = cell.scale_gamma;
    result.lambda = cell.lambda;
    result.rank_m = cell.rank_m;
    result.best_score = best_score;
    result.weights = alpha_spectral(gram, config);
    result.table = table0;
    for (std::size_t c = 0; c < result.table.size(); ++c) {
        double score = 0.0;
        int ok_folds = 0;
        for (const auto& fr : fold_results) {
            if (!fr.table[c].failed) {
                score += fr.table[c].objective_val;
                ++ok_folds;
            }
        }
        result.table[c].objective_val =
            ok_folds == folds ? score / static_cast<double>(folds) : 0.0;
    }
    return result;
}

Eigen::VectorXd MarkovitzLinearModel::position(const Eigen::VectorXd& state) const {
    return markowitz_position(covariance, intercept + slope * state, eta);
}

MarkovitzLinearModel fit_markowitz_linear(const PathBatch& batch, double eta) {
    if (batch.paths.empty()) throw std::invalid_argument("markowitz fit: empty batch");
    const Eigen::Index d = batch.channels();

    std::size_t total = 0;
    for (const auto& p : batch.paths) total += static_cast<std::size_t>(p.length());
    Eigen::MatrixXd design(static_cast<Eigen::Index>(total), d + 1);
    Eigen::MatrixXd target(static_cast<Eigen::Index>(total), d); // dX/dt
    Eigen::Index at = 0;
    double dt = 1.0;
    for (const auto& p : batch.paths) {
        dt = p.times()[1] - p.times()[0];
        const Eigen::MatrixXd inc = p.increments();
        for (Eigen::Index t = 0; t < p.length(); ++t) {
            design(at, 0) = 1.0;
            design.row(at).tail(d) = p.values().row(t);
            target.row(at) = inc.row(t) / dt;
            ++at;
        }
    }

    const Eigen::MatrixXd coeffs =
        (design.transpose() * design)
            .ldlt()
            .solve(design.transpose() * target); // (d+1) x d

    MarkovitzLinearModel model;
    model.eta = eta;
    model.intercept = coeffs.row(0).transpose();
    model.slope = coeffs.bottomRows(d).transpose();

    const Eigen::MatrixXd residuals = target - design * coeffs; // per unit time
    Eigen::MatrixXd cov =
        residuals.transpose() * residuals / static_cast<double>(residuals.rows());
    model.covariance = cov * dt; // back to increment covariance per unit time
    return model;
}

BacktestReport backtest(const MarkovitzLinearModel& model, const PathBatch& batch, double eta) {
    auto fn = [&model](const Path& live, Eigen::Index t) {
        return model.position(live.values().row(t).transpose());
    };
    return backtest(PositionFn(fn), batch, eta);
}

SignalProportionalModel fit_signal_proportional(const PathBatch& batch,
                                                Eigen::Index signal_channel, double eta) {
    if (batch.paths.empty()) throw std::invalid_argument("signal fit: empty batch");
    if (signal_channel < 0 || signal_channel >= batch.channels()) {
        throw std::invalid_argument("signal fit: bad signal channel");
    }
    Eigen::VectorXd unit_pnl(static_cast<Eigen::Index>(batch.size()));
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Path& p = batch.paths[i];
        const Eigen::MatrixXd inc = p.increments();
        double v = 0.0;
        for (Eigen::Index t = 0; t < p.length(); ++t) {
            v += p.values()(t, signal_channel) * inc(t, 0);
        }
        unit_pnl(static_cast<Eigen::Index>(i)) = v;
    }
    const double var = variance_of(unit_pnl);
    SignalProportionalModel model;
    model.signal_channel = signal_channel;
    model.beta = var > 0.0 ? mean_of(unit_pnl) / (eta * var) : 0.0;
    return model;
}

BacktestReport backtest(const SignalProportionalModel& model, const PathBatch& batch,
                        double eta) {
    auto fn = [&model](const Path& live, Eigen::Index t) {
        Eigen::VectorXd pos = Eigen::VectorXd::Zero(live.channels());
        pos(0) = model.beta * live.values()(t, model.signal_channel);
        return pos;
    };
    return backtest(PositionFn(fn), batch, eta);
}

Outperformance outperformance(double j_strategy, double j_baseline) {
    Outperformance o;
    if (j_baseline > 0.0) {
        o.value = (j_strategy - j_baseline) / std::abs(j_baseline);
    } else {
        o.value = j_strategy - j_baseline;
        o.absolute = true;
    }
    return o;
}

PathBatch combine_channels(const PathBatch& a, const PathBatch& b, const std::string& label) {
    if (a.size() != b.size()) throw std::invalid_argument("combine: batch size mismatch");
    std::vector<Path> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        const Path& pa = a.paths[i];
        const Path& pb = b.paths[i];
        const Eigen::Index rows =
            std::min(pa.values().rows(), pb.values().rows());
        for (Eigen::Index k = 0; k < rows; ++k) {
            if (pa.times()[static_cast<std::size_t>(k)] != pb.times()[static_cast<std::size_t>(k)]) {
                throw std::invalid_argument("combine: grid mismatch");
            }
        }
        Eigen::MatrixXd values(rows, pa.channels() + pb.channels());
        values.leftCols(pa.channels()) = pa.values().topRows(rows);
        values.rightCols(pb.channels()) = pb.values().topRows(rows);
        std::vector<double> times(pa.times().begin(), pa.times().begin() + rows);
        out[i] = Path(std::move(times), std::move(values));
    }
    return PathBatch(std::move(out), label);
}

OperatorLift mask_lift(Eigen::Index d_total, Eigen::Index d_tradable) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d_total, d_total);
    a.topLeftCorner(d_tradable, d_tradable).setIdentity();
    return OperatorLift{std::move(a)};
}

// ---------------------------------------------------------------- runners

namespace {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void write(const std::string& file) const {
        std::ofstream out(file);
        if (!out) throw std::runtime_error("cannot write " + file);
        for (std::size_t i = 0; i < header.size(); ++i) {
            out << header[i] << (i + 1 < header.size() ? ',' : '\n');
        }
        for (const auto& row : rows) {
            for (std::size_t i = 0; i < row.size(); ++i) {
                out << row[i] << (i + 1 < row.size() ? ',' : '\n');
            }
        }
    }
};

std::string fmt_idx(Eigen::Index m) { return m <= 0 ? std::string("full") : std::to_string(m); }

struct MeanStd {
    double mean = 0;
    double stddev = 0;
};

MeanStd mean_std(const std::vector<double>& xs) {
    MeanStd ms;
    if (xs.empty()) return ms;
    for (double x : xs) ms.mean += x;
    ms.mean /= static_cast<double>(xs.size());
    for (double x : xs) ms.stddev += (x - ms.mean) * (x - ms.mean);
    ms.stddev = std::sqrt(ms.stddev / static_cast<double>(xs.size()));
    return ms;
}

struct RunState {
    const ExperimentConfig& config;
    CsvTable table;
    json summary;
    std::vector<std::string> failures;

    void fail(const std::string& where, const std::string& what) {
        failures.push_back(where + ": " + what);
        std::cerr << "[cell failed] " << where << ": " << what << '\n';
    }
};

// Kernel fit on a train/val split plus Gram-based out-of-sample scores.
struct KernelFitScores {
    GridSearchResult fit;
    double objective_test = 0;
    double j_test = 0;
};

KernelFitScores fit_and_score_kernel(const ExperimentConfig& cfg, const PathBatch& train_all,
                                     const PathBatch& test, const OperatorLift& lift) {
    const EmbeddingSpec espec = with_pinned_horizon(cfg.embedding, train_all);
    KernelFitScores out;
    PathBatch fit_batch; // batch the returned weights are defined over
    if (cfg.fit.folds > 1) {
        out.fit = grid_search_kfold(train_all, cfg.fit.folds, cfg.kernel, espec, lift,
                                    cfg.fit.gamma_grid, cfg.fit.lambda_grid, cfg.fit.m_grid,
                                    cfg.fit.eta);
        fit_batch = train_all;
    } else {
        TrainValSplit split = split_batch(train_all, cfg.fit.validation_fraction);
        out.fit = grid_search(split.train, split.validation, cfg.kernel, espec, lift,
                              cfg.fit.gamma_grid, cfg.fit.lambda_grid, cfg.fit.m_grid,
                              cfg.fit.eta);
        fit_batch = std::move(split.train);
    }

    EmbeddingSpec best_espec = espec;
    best_espec.scale_gamma = out.fit.scale_gamma;
    const Eigen::MatrixXd cross = kphi_cross(cfg.kernel, best_espec, lift, fit_batch, test);
    const double e = expected_pnl(out.fit.weights.alpha, cross);
    const double v = pnl_variance(out.fit.weights.alpha, cross);
    out.objective_test = e - 0.5 * cfg.fit.eta * v;
    out.j_test = v > 0.0 ? e / std::sqrt(v) : 0.0;
    return out;
}

void run_lambda_sweep(RunState& state) {
    const auto& cfg = state.config;
    state.table.header = {"seed",          "scale_gamma", "lambda",   "m",
                          "objective_train", "objective_val", "j_val", "r_contrib", "failed"};
    json agg = json::array();
    for (std::uint64_t seed : cfg.seeds) {
        const PathBatch batch = generate_batch(cfg.generator, derive_seed(seed, 1));
        const TrainValSplit split = split_batch(batch, cfg.fit.validation_fraction);
        const EmbeddingSpec espec = with_pinned_horizon(cfg.embedding, split.train);
        const OperatorLift lift = OperatorLift::identity(batch.channels());
        GridSearchResult res;
        try {
            res = grid_search(split.train, split.validation, cfg.kernel, espec, lift,
                              {cfg.fit.gamma_grid.front()}, cfg.fit.lambda_grid,
                              {cfg.fit.m_grid.front()}, cfg.fit.eta);
        } catch (const std::exception& e) {
            state.fail("seed " + std::to_string(seed), e.what());
            continue;
        }
        for (const auto& cell : res.table) {
            if (cell.failed) state.fail("seed " + std::to_string(seed), cell.diagnostic);
            state.table.rows.push_back({std::to_string(seed), format_full(cell.scale_gamma),
                                        format_full(cell.lambda), fmt_idx(cell.rank_m),
                                        format_full(cell.objective_train),
                                        format_full(cell.objective_val), format_full(cell.j_val),
                                        format_full(cell.r_contrib), cell.failed ? "1" : "0"});
        }
        json entry;
        entry["seed"] = seed;
        entry["best_lambda"] = res.lambda;
        entry["best_objective_val"] = res.best_score;
        agg.push_back(std::move(entry));
    }
    state.summary["per_seed"] = std::move(agg);
}

void run_scale_sweep(RunState& state) {
    const auto& cfg = state.config;
    state.table.header = {"seed", "scale_gamma", "lambda", "m", "objective_train",
                          "objective_val", "j_val", "failed"};
    for (std::uint64_t seed : cfg.seeds) {
        const PathBatch batch = generate_batch(cfg.generator, derive_seed(seed, 1));
        const TrainValSplit split = split_batch(batch, cfg.fit.validation_fraction);
        const EmbeddingSpec espec = with_pinned_horizon(cfg.embedding, split.train);
        const OperatorLift lift = OperatorLift::identity(batch.channels());
        GridSearchResult res;
        try {
            res = grid_search(split.train, split.validation, cfg.kernel, espec, lift,
                              cfg.fit.gamma_grid, {cfg.fit.lambda_grid.front()},
                              {cfg.fit.m_grid.front()}, cfg.fit.eta);
        } catch (const std::exception& e) {
            state.fail("seed " + std::to_string(seed), e.what());
            continue;
        }
        for (const auto& cell : res.table) {
            if (cell.failed) {
                state.fail("seed " + std::to_string(seed) + " gamma " +
                               format_full(cell.scale_gamma),
                           cell.diagnostic);
            }
            state.table.rows.push_back({std::to_string(seed), format_full(cell.scale_gamma),
                                        format_full(cell.lambda), fmt_idx(cell.rank_m),
                                        format_full(cell.objective_train),
                                        format_full(cell.objective_val), format_full(cell.j_val),
                                        cell.failed ? "1" : "0"});
        }
    }
}

void run_rank_sweep(RunState& state) {
    const auto& cfg = state.config;
    state.table.header = {"seed", "m", "lambda", "objective_train", "objective_val",
                          "j_val", "r_contrib", "failed"};
    std::map<Eigen::Index, std::vector<double>> r_by_m;
    for (std::uint64_t seed : cfg.seeds) {
        const PathBatch batch = generate_batch(cfg.generator, derive_seed(seed, 1));
        const TrainValSplit split = split_batch(batch, cfg.fit.validation_fraction);
        const EmbeddingSpec espec = with_pinned_horizon(cfg.embedding, split.train);
        const OperatorLift lift = OperatorLift::identity(batch.channels());
        GridSearchResult res;
        try {
            res = grid_search(split.train, split.validation, cfg.kernel, espec, lift,
                              {cfg.fit.gamma_grid.front()}, cfg.fit.lambda_grid, cfg.fit.m_grid,
                              cfg.fit.eta);
        } catch (const std::exception& e) {
            state.fail("seed " + std::to_string(seed), e.what());
            continue;
        }
        std::map<Eigen::Index, double> r_sum;
        for (const auto& cell : res.table) {
            if (cell.failed) state.fail("seed " + std::to_string(seed), cell.diagnostic);
            state.table.rows.push_back({std::to_string(seed), fmt_idx(cell.rank_m),
                                        format_full(cell.lambda),
                                        format_full(cell.objective_train),
                                        format_full(cell.objective_val), format_full(cell.j_val),
                                        format_full(cell.r_contrib), cell.failed ? "1" : "0"});
            if (!cell.failed) r_sum[cell.rank_m] += cell.r_contrib;
        }
        for (const auto& [m, s] : r_sum) r_by_m[m].push_back(std::sqrt(s));
    }
    json rj = json::array();
    for (const auto& [m, rs] : r_by_m) {
        const MeanStd ms = mean_std(rs);
        json entry;
        entry["m"] = fmt_idx(m);
        entry["stability_r_mean"] = ms.mean;
        entry["stability_r_std"] = ms.stddev;
        rj.push_back(std::move(entry));
    }
    state.summary["stability"] = std::move(rj);
}

void run_eta_delta_surface(RunState& state) {
    const auto& cfg = state.config;
    if (cfg.sweep.delta_targets.empty()) {
        throw std::runtime_error("eta_delta_surface: sweep.delta_targets required");
    }
    state.table.header = {"seed", "lambda", "delta", "eta_star", "failed"};
    std::map<double, std::map<double, std::vector<double>>> eta_by_delta_lambda;
    for (std::uint64_t seed : cfg.seeds) {
        const PathBatch batch = generate_batch(cfg.generator, derive_seed(seed, 1));
        const EmbeddingSpec espec = with_pinned_horizon(cfg.embedding, batch);
        const OperatorLift lift = OperatorLift::identity(batch.channels());
        GramMatrix gram;
        try {
            gram = kphi_gram(cfg.kernel, espec, lift, batch);
        } catch (const std::exception& e) {
            state.fail("seed " + std::to_string(seed), e.what());
            continue;
        }
        for (double lambda : cfg.fit.lambda_grid) {
            for (double delta : cfg.sweep.delta_targets) {
                std::string where = "seed " + std::to_string(seed) + " lambda " +
                                    format_full(lambda) + " delta " + format_full(delta);
                try {
                    const double eta_star = calibrate_eta(gram, lambda, delta);
                    state.table.rows.push_back({std::to_string(seed), format_full(lambda),
                                                format_full(delta), format_full(eta_star), "0"});
                    eta_by_delta_lambda[delta][lambda].push_back(eta_star);
                } catch (const std::exception& e) {
                    state.fail(where, e.what());
                    state.table.rows.push_back({std::to_string(seed), format_full(lambda),
                                                format_full(delta), "nan", "1"});
                }
            }
        }
    }
    // Power-law fit eta*(lambda) = a * lambda^p per delta.
    json fits = json::array();
    for (const auto& [delta, by_lambda] : eta_by_delta_lambda) {
        std::vector<double> xs, ys;
        for (const auto& [lambda, etas] : by_lambda) {
            const MeanStd ms = mean_std(etas);
            if (ms.mean > 0.0) {
                xs.push_back(std::log(lambda));
                ys.push_back(std::log(ms.mean));
            }
        }
        if (xs.size() < 2) continue;
        const double n = static_cast<double>(xs.size());
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            sx += xs[i];
            sy += ys[i];
            sxx += xs[i] * xs[i];
            sxy += xs[i] * ys[i];
        }
        const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        const double intercept = (sy - slope * sx) / n;
        json entry;
        entry["delta"] = delta;
        entry["power_p"] = slope;
        entry["prefactor_a"] = std::exp(intercept);
        fits.push_back(std::move(entry));
    }
    state.summary["power_law_fits"] = std::move(fits);
}

void run_ou_convergence(RunState& state) {
    const auto& cfg = state.config;
    if (cfg.sweep.sample_sizes.empty()) {
        throw std::runtime_error("ou_convergence: sweep.sample_sizes required");
    }
    state.table.header = {"n_train",       "seed",           "lambda_star",
                          "objective_val", "objective_test", "j_test",
                          "objective_markowitz", "outperformance", "outperf_absolute"};
    json agg = json::array();
    for (std::size_t n_train : cfg.sweep.sample_sizes) {
        std::vector<double> test_objs, outperfs;
        for (std::uint64_t seed : cfg.seeds) {
            GeneratorConfig gen = cfg.generator;
            gen.n_paths = n_train;
            const PathBatch train = generate_batch(gen, derive_seed(seed, 1));
            gen.n_paths = cfg.fit.test_paths;
            const PathBatch test = generate_batch(gen, derive_seed(seed, 2));
            const OperatorLift lift = OperatorLift::identity(train.channels());
            try {
                const KernelFitScores scores = fit_and_score_kernel(cfg, train, test, lift);
                const MarkovitzLinearModel markowitz = fit_markowitz_linear(train, cfg.fit.eta);
                const BacktestReport mk = backtest(markowitz, test, cfg.fit.eta);
                const Outperformance perf =
                    outperformance(scores.objective_test, mk.penalised_objective);
                state.table.rows.push_back(
                    {std::to_string(n_train), std::to_string(seed),
                     format_full(scores.fit.lambda), format_full(scores.fit.best_score),
                     format_full(scores.objective_test), format_full(scores.j_test),
                     format_full(mk.penalised_objective), format_full(perf.value),
                     perf.absolute ? "1" : "0"});
                test_objs.push_back(scores.objective_test);
                outperfs.push_back(perf.value);
            } catch (const std::exception& e) {
                state.fail("n " + std::to_string(n_train) + " seed " + std::to_string(seed),
                           e.what());
            }
        }
        const MeanStd obj = mean_std(test_objs);
        const MeanStd perf = mean_std(outperfs);
        json entry;
        entry["n_train"] = n_train;
        entry["objective_test_mean"] = obj.mean;
        entry["objective_test_std"] = obj.stddev;
        entry["outperformance_mean"] = perf.mean;
        entry["outperformance_std"] = perf.stddev;
        agg.push_back(std::move(entry));
    }
    state.summary["by_sample_size"] = std::move(agg);
}

void run_truncation_convergence(RunState& state) {
    const auto& cfg = state.config;
    if (cfg.sweep.truncation_orders.empty()) {
        throw std::runtime_error("truncation_convergence: sweep.truncation_orders required");
    }
    state.table.header = {"seed", "order", "objective_sig_in", "objective_kernel_in"};
    std::map<int, std::vector<double>> sig_by_order;
    std::vector<double> kernel_objs;
    for (std::uint64_t seed : cfg.seeds) {
        const PathBatch train = generate_batch(cfg.generator, derive_seed(seed, 1));
        const EmbeddingSpec espec = with_pinned_horizon(cfg.embedding, train);
        const OperatorLift lift = OperatorLift::identity(train.channels());

        double kernel_obj;
        try {
            const GramMatrix gram = kphi_gram(cfg.kernel, espec, lift, train);
            FitConfig fc;
            fc.lambda = cfg.fit.lambda_grid.front();
            fc.eta = cfg.fit.eta;
            fc.rank_m = cfg.fit.m_grid.front();
            const FittedWeights w = alpha_spectral(gram, fc);
            const MomentSummary mom = moments(gram);
            kernel_obj = w.alpha.dot(mom.mu_phi) -
                         0.5 * cfg.fit.eta * w.alpha.dot(mom.sigma_phi * w.alpha);
            kernel_objs.push_back(kernel_obj);
        } catch (const std::exception& e) {
            state.fail("seed " + std::to_string(seed) + " kernel", e.what());
            continue;
        }

        for (int order : cfg.sweep.truncation_orders) {
            try {
                const SigTraderModel sig =
                    fit_sig_trader(train, espec, order, cfg.fit.lambda_grid.front(), cfg.fit.eta);
                const BacktestReport rep = backtest(sig, train, cfg.fit.eta);
                state.table.rows.push_back({std::to_string(seed), std::to_string(order),
                                            format_full(rep.penalised_objective),
                                            format_full(kernel_obj)});
                sig_by_order[order].push_back(rep.penalised_objective);
            } catch (const std::exception& e) {
                state.fail("seed " + std::to_string(seed) + " order " + std::to_string(order),
                           e.what());
            }
        }
    }
    json agg = json::array();
    for (const auto& [order, objs] : sig_by_order) {
        const MeanStd ms = mean_std(objs);
        json entry;
        entry["order"] = order;
        entry["objective_sig_mean"] = ms.mean;
        entry["objective_sig_std"] = ms.stddev;
        agg.push_back(std::move(entry));
    }
    state.summary["by_order"] = std::move(agg);
    const MeanStd k = mean_std(kernel_objs);
    state.summary["objective_kernel_mean"] = k.mean;
    state.summary["objective_kernel_std"] = k.stddev;
}

void run_pathdep_drift(RunState& state) {
    const auto& cfg = state.config;
    const std::vector<double> alphas = cfg.sweep.decay_alphas.empty()
                                           ? std::vector<double>{cfg.generator.drift.decay_alpha}
                                           : cfg.sweep.decay_alphas;
    state.table.header = {"decay_alpha", "seed", "objective_kernel", "objective_markovian",
                          "outperformance", "outperf_absolute"};
    json agg = json::array();
    for (double alpha : alphas) {
        std::vector<double> perfs;
        for (std::uint64_t seed : cfg.seeds) {
            DriftModelParams params = cfg.generator.drift;
            params.decay_alpha = alpha;
            try {
                const PathDepDriftWorld train_world = gen_pathdep_drift(
                    params, cfg.generator.n_paths, cfg.generator.n_steps, cfg.generator.dt,
                    derive_seed(seed, 1));
                const PathDepDriftWorld test_world =
                    gen_pathdep_drift(params, cfg.fit.test_paths, cfg.generator.n_steps,
                                      cfg.generator.dt, derive_seed(seed, 2));
                const PathBatch train =
                    combine_channels(train_world.asset, train_world.signal, "train");
                const PathBatch test =
                    combine_channels(test_world.asset, test_world.signal, "test");
                const OperatorLift lift = mask_lift(train.channels(), 1);

                const KernelFitScores scores = fit_and_score_kernel(cfg, train, test, lift);
                const SignalProportionalModel markov =
                    fit_signal_proportional(train, 1, cfg.fit.eta);
                const BacktestReport mk = backtest(markov, test, cfg.fit.eta);
                const Outperformance perf =
                    outperformance(scores.objective_test, mk.penalised_objective);
                state.table.rows.push_back({format_full(alpha), std::to_string(seed),
                                            format_full(scores.objective_test),
                                            format_full(mk.penalised_objective),
                                            format_full(perf.value), perf.absolute ? "1" : "0"});
                perfs.push_back(perf.value);
            } catch (const std::exception& e) {
                state.fail("alpha " + format_full(alpha) + " seed " + std::to_string(seed),
                           e.what());
            }
        }
        const MeanStd ms = mean_std(perfs);
        json entry;
        entry["decay_alpha"] = alpha;
        entry["outperformance_mean"] = ms.mean;
        entry["outperformance_std"] = ms.stddev;
        agg.push_back(std::move(entry));
    }
    state.summary["by_decay_alpha"] = std::move(agg);
}

void run_signal_study(RunState& state) {
    const auto& cfg = state.config;
    const bool vary_alpha = cfg.sweep.vary == "decay_alpha";
    const std::vector<double> values = vary_alpha ? cfg.sweep.decay_alphas : cfg.sweep.sv_gammas;
    if (values.empty()) {
        throw std::runtime_error("signal_study: sweep values required (decay_alphas/sv_gammas)");
    }

    // Session paths come from a bar CSV when given, otherwise from the
    // configured generator rendered as synthetic sessions.
    PathBatch sessions;
    if (!cfg.sweep.bars_csv.empty()) {
        std::ifstream in(cfg.sweep.bars_csv);
        if (!in) throw std::runtime_error("signal_study: cannot open " + cfg.sweep.bars_csv);
        LoadBarsReport report;
        sessions = load_bars(in, parse_session_window(cfg.sweep.session),
                             cfg.sweep.bars_per_session, &report);
        state.summary["bars_dropped_sessions"] = report.dropped;
    } else {
        GeneratorConfig gen = cfg.generator;
        gen.n_steps = cfg.sweep.bars_per_session - 1;
        sessions = generate_batch(gen, derive_seed(cfg.seeds.front(), 99));
    }
    const TrainValSplit session_split = split_batch(sessions, cfg.fit.validation_fraction);
    const PathBatch& train_sessions = session_split.train;
    const PathBatch& test_sessions = session_split.validation;

    state.table.header = {"vary",       "value",         "seed",
                          "objective_kernel", "objective_sig", "objective_markovian",
                          "outperf_kernel", "outperf_sig", "outperf_absolute"};
    json agg = json::array();
    for (double value : values) {
        std::vector<double> perf_kernel, perf_sig;
        for (std::uint64_t seed : cfg.seeds) {
            SignalParams sp = cfg.sweep.signal;
            if (vary_alpha) {
                sp.decay.kind = DecayKind::PowerLaw;
                sp.decay.alpha = value;
            } else {
                sp.sv_gamma = value;
            }
            sp.seed = derive_seed(seed, 7);
            try {
                const SignalBatchResult train_sig = gen_signal_batch(train_sessions, sp);
                SignalParams sp_test = sp;
                sp_test.seed = derive_seed(seed, 8);
                const SignalBatchResult test_sig =
                    gen_signal_batch(test_sessions, sp_test, train_sig.stats);

                const PathBatch train =
                    combine_channels(train_sessions, train_sig.predictions, "train");
                const PathBatch test =
                    combine_channels(test_sessions, test_sig.predictions, "test");
                const OperatorLift lift = mask_lift(train.channels(), 1);

                const KernelFitScores scores = fit_and_score_kernel(cfg, train, test, lift);

                const EmbeddingSpec espec = with_pinned_horizon(cfg.embedding, train);
                const SigTraderModel sig_model = fit_sig_trader(
                    train, espec, cfg.sweep.sig_order, cfg.fit.lambda_grid.front(), cfg.fit.eta);
                const BacktestReport sig_rep = backtest(sig_model, test, cfg.fit.eta);

                const SignalProportionalModel markov =
                    fit_signal_proportional(train, 1, cfg.fit.eta);
                const BacktestReport mk = backtest(markov, test, cfg.fit.eta);

                const Outperformance pk =
                    outperformance(scores.objective_test, mk.penalised_objective);
                const Outperformance ps =
                    outperformance(sig_rep.penalised_objective, mk.penalised_objective);
                state.table.rows.push_back(
                    {cfg.sweep.vary, format_full(value), std::to_string(seed),
                     format_full(scores.objective_test), format_full(sig_rep.penalised_objective),
                     format_full(mk.penalised_objective), format_full(pk.value),
                     format_full(ps.value), pk.absolute ? "1" : "0"});
                perf_kernel.push_back(pk.value);
                perf_sig.push_back(ps.value);
            } catch (const std::exception& e) {
                state.fail(cfg.sweep.vary + " " + format_full(value) + " seed " +
                               std::to_string(seed),
                           e.what());
            }
        }
        const MeanStd mk = mean_std(perf_kernel);
        const MeanStd ms = mean_std(perf_sig);
        json entry;
        entry[cfg.sweep.vary] = value;
        entry["outperf_kernel_mean"] = mk.mean;
        entry["outperf_kernel_std"] = mk.stddev;
        entry["outperf_sig_mean"] = ms.mean;
        entry["outperf_sig_std"] = ms.stddev;
        agg.push_back(std::move(entry));
    }
    state.summary["by_value"] = std::move(agg);
}

} // namespace

RunOutcome run_experiment(const ExperimentConfig& config) {
    config.validate();
    namespace fs = std::filesystem;
    fs::create_directories(config.output_dir);

    const auto t0 = std::chrono::steady_clock::now();
    RunState state{config, {}, json::object(), {}};
    state.summary["experiment"] = config.experiment;

    if (config.experiment == "lambda_sweep") {
        run_lambda_sweep(state);
    } else if (config.experiment == "scale_sweep") {
        run_scale_sweep(state);
    } else if (config.experiment == "rank_sweep") {
        run_rank_sweep(state);
    } else if (config.experiment == "eta_delta_surface") {
        run_eta_delta_surface(state);
    } else if (config.experiment == "ou_convergence") {
        run_ou_convergence(state);
    } else if (config.experiment == "truncation_convergence") {
        run_truncation_convergence(state);
    } else if (config.experiment == "pathdep_drift") {
        run_pathdep_drift(state);
    } else if (config.experiment == "signal_study") {
        run_signal_study(state);
    } else {
        throw std::runtime_error("experiment: unknown experiment '" + config.experiment + "'");
    }

    if (state.table.rows.empty()) {
        throw std::runtime_error("experiment: fully failed run (" +
                                 std::to_string(state.failures.size()) + " failures)");
    }

    const std::string results_file = config.output_dir + "/results.csv";
    state.table.write(results_file);

    state.summary["failures"] = state.failures;
    state.summary["rows"] = state.table.rows.size();
    const std::string summary_file = config.output_dir + "/summary.json";
    save_json_file(summary_file, state.summary);

    const auto wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::steady_clock::now() - t0)
                             .count();
    Fnv1a hash;
    hash.update(to_json(config).dump());
    json manifest;
    manifest["config_hash"] = hash.hex();
    manifest["tool"] = "ktrade";
    manifest["version"] = "0.1.0";
    manifest["wall_ms"] = wall_ms;
    manifest["threads"] = num_threads();
    const std::string manifest_file = config.output_dir + "/manifest.json";
    save_json_file(manifest_file, manifest);

    if (config.time_stages) {
        std::cerr << "[time] total " << wall_ms << " ms\n";
    }

    RunOutcome outcome;
    outcome.output_files = {results_file, summary_file, manifest_file};
    outcome.cell_failures = state.failures.size();
    return outcome;
}

} // namespace ktrade
