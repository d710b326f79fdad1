#pragma once

#include "ktrade/kernels.hpp"
#include "ktrade/mean_variance.hpp"
#include "ktrade/path.hpp"
#include "ktrade/pnl_kernel.hpp"

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace ktrade {

/// Everything the online phase needs: specs, co-location paths, fitted
/// weights and the position prefactor folded in at save time.
struct StrategyModel {
    EmbeddingSpec embedding;
    KernelSpec kernel;
    OperatorLift lift;
    PathBatch colocation;
    FittedWeights weights;
    double position_scale = 1.0;

    /// Weights in the theorem normalisation (positions = (1/N) Gamma w),
    /// i.e. N * position_scale * alpha. Feeding these to expected_pnl /
    /// pnl_variance reproduces the backtest of this model exactly.
    Eigen::VectorXd effective_weights() const;

    void validate() const;
};

/// Builds a model from a fit, folding the 1/(N lambda) prefactor into
/// position_scale and pinning the embedding time horizon so that online
/// prefixes embed exactly like fit-time prefixes.
StrategyModel make_strategy_model(const EmbeddingSpec& espec, const KernelSpec& kspec,
                                  const OperatorLift& lift, const PathBatch& colocation,
                                  const FittedWeights& weights);

/// Position at time index t; uses samples 0..t of `live` only.
Eigen::VectorXd position(const StrategyModel& model, const Path& live, Eigen::Index t_index);

/// Positions at every time index 0..L-1 of `live` in one pass (one
/// prefix-kernel matrix per co-location path); bitwise identical to
/// per-index position() calls.
Eigen::MatrixXd position_series(const StrategyModel& model, const Path& live);

using PositionFn = std::function<Eigen::VectorXd(const Path& live, Eigen::Index t_index)>;

struct BacktestReport {
    Eigen::VectorXd terminal_pnl;
    Eigen::VectorXd turnover; // per path, sum_t |xi_{t} - xi_{t-1}|_1
    double mean = 0;
    double variance = 0;
    double penalised_objective = 0; // mean - (eta/2) variance
    double eta = 0;
    std::vector<Eigen::MatrixXd> positions; // per path, L x d; kept on request
};

/// Ito backtest V_T = sum_t <xi_t, X_{t+1} - X_t> per path, xi_t evaluated
/// on the prefix ending at t.
BacktestReport backtest(const PositionFn& strategy, const PathBatch& batch, double eta,
                        bool keep_positions = false);

/// Same, but uses position_series for the kernel strategy.
BacktestReport backtest(const StrategyModel& model, const PathBatch& batch, double eta,
                        bool keep_positions = false);

/// Truncated-signature trader: linear functionals on the running signature,
/// fitted by a ridge mean-variance solve in feature space.
struct SigTraderModel {
    int order = 0;
    Eigen::MatrixXd ell; // (#words) x d
    EmbeddingSpec embedding;
    double lambda = 0;
    double eta = 0;
};

SigTraderModel fit_sig_trader(const PathBatch& batch, const EmbeddingSpec& espec, int order,
                              double lambda, double eta);

Eigen::VectorXd sig_trader_position(const SigTraderModel& model, const Path& live,
                                    Eigen::Index t_index);

BacktestReport backtest(const SigTraderModel& model, const PathBatch& batch, double eta,
                        bool keep_positions = false);

/// Myopic mean-variance position (1/eta) Sigma^+ mu.
Eigen::VectorXd markowitz_position(const Eigen::MatrixXd& sigma,
                                   const Eigen::VectorXd& mu_estimate, double eta);

void save_model(const StrategyModel& model, const std::string& file);
StrategyModel load_model(const std::string& file);

} // namespace ktrade
