#pragma once

#include "ktrade/path.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>

namespace ktrade {

/// Multivariate Ornstein-Uhlenbeck parameters with correlated driving noise.
struct OUParams {
    Eigen::VectorXd theta; // mean-reversion speeds, >= 0
    Eigen::VectorXd mu;    // long-run levels
    Eigen::VectorXd sigma; // volatilities
    Eigen::MatrixXd corr;  // noise correlation, unit diagonal, PSD
    Eigen::VectorXd x0;

    static OUParams standard(Eigen::Index d);
    void validate() const;
};

/// Exact-discretisation OU batch; deterministic per (params, seed) with
/// per-path derived seeds.
PathBatch gen_ou(const OUParams& params, std::size_t n_paths, std::size_t n_steps, double dt,
                 std::uint64_t seed);

/// Path-dependent-drift model: signal I is an OU process, the drift is its
/// power-law convolution, the asset follows the drift plus independent noise.
struct DriftModelParams {
    double kappa = 1.0;       // signal mean reversion
    double sigma_I = 1.0;     // signal vol
    double sigma_X = 1.0;     // asset vol
    double decay_alpha = 0.6; // power-law exponent, > 0
    double decay_c = 1.0;     // kernel offset, > 0
    double rho = 0.1;         // target corr(mu dt, dX), |rho| < 1

    void validate() const;
};

/// gamma = (sigma_X / sigma_mu) * rho / sqrt(1 - rho^2).
double drift_gain(double sigma_x, double sigma_mu_hat, double rho);

struct PathDepDriftWorld {
    PathBatch asset;  // X
    PathBatch signal; // I
    PathBatch drift;  // mu
    double gain = 0;  // calibrated gamma
};

PathDepDriftWorld gen_pathdep_drift(const DriftModelParams& params, std::size_t n_paths,
                                    std::size_t n_steps, double dt, std::uint64_t seed);

enum class DecayKind { PowerLaw, Exponential, Flat };

struct DecaySpec {
    DecayKind kind = DecayKind::PowerLaw;
    double c = 1.0;     // power-law offset
    double alpha = 0.5; // power-law exponent
    double rate = 1.0;  // exponential rate

    double weight(double lag) const;
};

enum class VolProxyMode { WindowRms, AbsReturn };

/// Synthetic-prediction parameters: forecast horizon in steps, target
/// correlation, stochastic-vol share of the residual noise, alpha-decay
/// kernel and volatility proxy.
struct SignalParams {
    Eigen::Index horizon_w = 1;
    double rho = 0.05;
    double sv_gamma = 0.0;
    DecaySpec decay;
    VolProxyMode vol_proxy = VolProxyMode::WindowRms;
    std::uint64_t seed = 0;

    void validate() const;
};

/// In-sample normalisers of the prediction mixture; frozen on the training
/// sample and reused for test-batch generation.
struct SignalStats {
    double sigma_y = 0;
    double sigma_eta = 0;
    double sigma_z = 0;
    double rho_yeta = 0;
    double mu_v = 0;
};

struct SignalResult {
    Path predictions; // one channel, grid = first L+1-w points of the asset grid
    SignalStats stats;
};

struct SignalBatchResult {
    PathBatch predictions;
    SignalStats stats;
};

/// Correlated admissible prediction of the w-step-ahead return: exact target
/// correlation rho, R^2 = rho^2, residual noise mixing stochastic-vol and
/// additive components. The last w grid points carry no prediction.
///
/// The predictions are forecasts of future returns: y_hat at t is built from
/// returns over [t, t+w) plus noise, and is treated as known at t by any
/// backtest (it stands in for a live model output).
SignalResult gen_signal(const Path& asset, const SignalParams& params,
                        const std::optional<SignalStats>& frozen = std::nullopt);

/// Batch variant with normalisers pooled across all asset paths; pass the
/// returned stats back as `frozen` to generate test-batch signals without
/// leaking test statistics. Per-path randomness derives from (seed, index).
SignalBatchResult gen_signal_batch(const PathBatch& assets, const SignalParams& params,
                                   const std::optional<SignalStats>& frozen = std::nullopt);

/// Instantaneous-volatility proxies from a return series: forward-window RMS
/// (per unit time) or absolute return over the grid spacing.
Eigen::VectorXd vol_proxy(const Eigen::VectorXd& returns, VolProxyMode mode, Eigen::Index window,
                          double dt = 1.0);

} // namespace ktrade
