#pragma once

#include "ktrade/kernels.hpp"
#include "ktrade/mean_variance.hpp"
#include "ktrade/path.hpp"
#include "ktrade/pnl_kernel.hpp"
#include "ktrade/serde.hpp"
#include "ktrade/strategies.hpp"
#include "ktrade/synth.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ktrade {

struct GeneratorConfig {
    std::string type = "ou"; // "ou" | "pathdep_drift"
    std::size_t n_paths = 100;
    std::size_t n_steps = 20;
    double dt = 0.1;
    OUParams ou = OUParams::standard(1);
    DriftModelParams drift;
};

struct FitSettings {
    std::vector<double> lambda_grid{1e-3};
    std::vector<double> gamma_grid{1.0};
    std::vector<Eigen::Index> m_grid{0}; // 0 = full rank
    double eta = 1.0;
    double validation_fraction = 0.3;
    std::size_t test_paths = 200;
    int folds = 1;
};

struct SweepSettings {
    std::vector<std::size_t> sample_sizes;
    std::vector<std::size_t> path_lengths;
    std::vector<int> truncation_orders;
    std::vector<double> delta_targets;
    std::vector<double> decay_alphas;
    std::vector<double> sv_gammas;
    SignalParams signal;
    std::string vary = "decay_alpha"; // signal_study: "decay_alpha" | "sv_gamma"
    std::string bars_csv;
    std::size_t bars_per_session = 78;
    std::string session = "09:30-16:00";
    int sig_order = 3;
};

struct ExperimentConfig {
    std::string experiment;
    std::vector<std::uint64_t> seeds{1};
    std::string output_dir = "out";
    GeneratorConfig generator;
    KernelSpec kernel;
    EmbeddingSpec embedding;
    FitSettings fit;
    SweepSettings sweep;
    bool time_stages = false;

    void validate() const;
};

ExperimentConfig experiment_config_from_json(const json& j); // unknown keys rejected
json to_json(const ExperimentConfig& c);

struct RunOutcome {
    std::vector<std::string> output_files;
    std::size_t cell_failures = 0;
};

/// Runs the configured experiment: results.csv, summary.json and a manifest
/// are written into output_dir. Per-cell failures are logged and the run
/// continues; a fully failed run throws.
RunOutcome run_experiment(const ExperimentConfig& config);

// ---- shared building blocks (also used by the CLI and tests) ----

PathBatch generate_batch(const GeneratorConfig& gen, std::uint64_t seed);

struct TrainValSplit {
    PathBatch train;
    PathBatch validation;
};
/// Deterministic split: the trailing fraction becomes the validation set.
TrainValSplit split_batch(const PathBatch& batch, double validation_fraction);

/// Grid search with k-fold averaged validation scores; refits the winning
/// cell on the full batch. folds == 1 delegates to the single-split search.
GridSearchResult grid_search_kfold(const PathBatch& batch, int folds, const KernelSpec& kspec,
                                   const EmbeddingSpec& espec, const OperatorLift& lift,
                                   const std::vector<double>& gamma_grid,
                                   const std::vector<double>& lambda_grid,
                                   const std::vector<Eigen::Index>& m_grid, double eta);

/// Pooled OLS drift fit dX = (a + B x) dt + noise and residual covariance;
/// the classical Markovian comparator for worlds where the state is the
/// asset level itself.
struct MarkovitzLinearModel {
    Eigen::VectorXd intercept;  // a
    Eigen::MatrixXd slope;      // B
    Eigen::MatrixXd covariance; // Sigma, per unit time
    double eta = 1.0;

    Eigen::VectorXd position(const Eigen::VectorXd& state) const;
};
MarkovitzLinearModel fit_markowitz_linear(const PathBatch& batch, double eta);
BacktestReport backtest(const MarkovitzLinearModel& model, const PathBatch& batch, double eta);

/// Scalar comparator xi_t = beta * s_t trading channel 0 on a signal channel,
/// beta = mean(P)/(eta Var(P)) with P the per-path PnL of the unit strategy.
struct SignalProportionalModel {
    double beta = 0;
    Eigen::Index signal_channel = 1;
};
SignalProportionalModel fit_signal_proportional(const PathBatch& batch,
                                                Eigen::Index signal_channel, double eta);
BacktestReport backtest(const SignalProportionalModel& model, const PathBatch& batch, double eta);

/// (J_strategy - J_baseline)/|J_baseline|; falls back to the absolute
/// difference (flagged) when the baseline objective is not positive.
struct Outperformance {
    double value = 0;
    bool absolute = false;
};
Outperformance outperformance(double j_strategy, double j_baseline);

/// Channel-wise concatenation on the common leading grid.
PathBatch combine_channels(const PathBatch& a, const PathBatch& b, const std::string& label);

OperatorLift mask_lift(Eigen::Index d_total, Eigen::Index d_tradable);

} // namespace ktrade
