#include "ktrade/synth.hpp"

#include "ktrade/numeric.hpp"
#include "ktrade/parallel.hpp"
#include "ktrade/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace ktrade {

OUParams OUParams::standard(Eigen::Index d) {
    OUParams p;
    p.theta = Eigen::VectorXd::Constant(d, 1.0);
    p.mu = Eigen::VectorXd::Zero(d);
    p.sigma = Eigen::VectorXd::Constant(d, 0.2);
    p.corr = Eigen::MatrixXd::Identity(d, d);
    p.x0 = Eigen::VectorXd::Zero(d);
    return p;
}

void OUParams::validate() const {
    const Eigen::Index d = theta.size();
    if (d < 1 || mu.size() != d || sigma.size() != d || x0.size() != d || corr.rows() != d ||
        corr.cols() != d) {
        throw std::invalid_argument("ou: parameter dimension mismatch");
    }
    if ((theta.array() < 0.0).any()) throw std::invalid_argument("ou: theta must be >= 0");
    if ((sigma.array() < 0.0).any()) throw std::invalid_argument("ou: sigma must be >= 0");
    for (Eigen::Index i = 0; i < d; ++i) {
        if (std::abs(corr(i, i) - 1.0) > 1e-12) {
            throw std::invalid_argument("ou: corr must have unit diagonal");
        }
    }
    if ((corr - corr.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
        throw std::invalid_argument("ou: corr must be symmetric");
    }
}

namespace {

Eigen::MatrixXd cholesky_corr(const Eigen::MatrixXd& corr) {
    Eigen::LLT<Eigen::MatrixXd> llt(corr);
    if (llt.info() != Eigen::Success) {
        // Semi-definite correlation (e.g. perfectly correlated channels):
        // fall back to an eigenvalue square root.
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(corr);
        if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() < -1e-10) {
            throw std::invalid_argument("ou: corr is not positive semidefinite");
        }
        return es.eigenvectors() *
               es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
               es.eigenvectors().transpose();
    }
    return llt.matrixL();
}

std::vector<double> uniform_grid(std::size_t n_steps, double dt) {
    std::vector<double> times(n_steps + 1);
    for (std::size_t i = 0; i <= n_steps; ++i) times[i] = static_cast<double>(i) * dt;
    return times;
}

// Stationary one-step noise scale of an exact OU step:
// sigma * sqrt((1 - exp(-2 theta dt)) / (2 theta)), continuous at theta = 0.
double ou_step_scale(double theta, double sigma, double dt) {
    if (theta == 0.0) return sigma * std::sqrt(dt);
    return sigma * std::sqrt(-std::expm1(-2.0 * theta * dt) / (2.0 * theta));
}

} // namespace

PathBatch gen_ou(const OUParams& params, std::size_t n_paths, std::size_t n_steps, double dt,
                 std::uint64_t seed) {
    params.validate();
    if (!(dt > 0.0)) throw std::invalid_argument("ou: dt must be positive");
    if (n_paths == 0 || n_steps == 0) throw std::invalid_argument("ou: empty batch requested");

    const Eigen::Index d = params.theta.size();
    const Eigen::MatrixXd chol = cholesky_corr(params.corr);
    Eigen::VectorXd decay(d), scale(d);
    for (Eigen::Index m = 0; m < d; ++m) {
        decay(m) = std::exp(-params.theta(m) * dt);
        scale(m) = ou_step_scale(params.theta(m), params.sigma(m), dt);
    }
    const std::vector<double> times = uniform_grid(n_steps, dt);

    std::vector<Path> paths(n_paths);
    parallel_for(n_paths, [&](std::size_t p) {
        Rng rng(derive_seed(seed, p));
        Eigen::MatrixXd values(static_cast<Eigen::Index>(n_steps) + 1, d);
        values.row(0) = params.x0.transpose();
        Eigen::VectorXd z(d);
        for (std::size_t k = 0; k < n_steps; ++k) {
            for (Eigen::Index m = 0; m < d; ++m) z(m) = rng.normal();
            const Eigen::VectorXd eps = chol * z;
            for (Eigen::Index m = 0; m < d; ++m) {
                const double prev = values(static_cast<Eigen::Index>(k), m);
                values(static_cast<Eigen::Index>(k) + 1, m) =
                    params.mu(m) + (prev - params.mu(m)) * decay(m) + scale(m) * eps(m);
            }
        }
        paths[p] = Path(times, std::move(values));
    });
    return PathBatch(std::move(paths), "ou");
}

void DriftModelParams::validate() const {
    if (!(kappa >= 0.0)) throw std::invalid_argument("drift model: kappa must be >= 0");
    if (!(sigma_I > 0.0) || !(sigma_X > 0.0)) {
        throw std::invalid_argument("drift model: volatilities must be positive");
    }
    if (!(decay_alpha > 0.0)) throw std::invalid_argument("drift model: decay_alpha must be > 0");
    if (!(decay_c > 0.0)) throw std::invalid_argument("drift model: decay_c must be > 0");
    if (!(std::abs(rho) < 1.0)) throw std::invalid_argument("drift model: |rho| must be < 1");
}

double drift_gain(double sigma_x, double sigma_mu_hat, double rho) {
    if (std::abs(rho) >= 1.0) throw std::invalid_argument("drift_gain: |rho| must be < 1");
    if (rho == 0.0) return 0.0;
    if (!(sigma_mu_hat > 0.0)) throw std::invalid_argument("drift_gain: sigma_mu must be > 0");
    return (sigma_x / sigma_mu_hat) * rho / std::sqrt(1.0 - rho * rho);
}

PathDepDriftWorld gen_pathdep_drift(const DriftModelParams& params, std::size_t n_paths,
                                    std::size_t n_steps, double dt, std::uint64_t seed) {
    params.validate();
    if (!(dt > 0.0)) throw std::invalid_argument("drift model: dt must be positive");
    if (n_paths == 0 || n_steps == 0) throw std::invalid_argument("drift model: empty batch");

    const std::vector<double> times = uniform_grid(n_steps, dt);
    const Eigen::Index rows = static_cast<Eigen::Index>(n_steps) + 1;

    // Signal pass: OU paths of I plus the pre-gain convolution
    // m_k = sum_{j<k} G(t_k - t_j) I_j dt with G(u) = (c + u)^(-alpha).
    const double i_decay = std::exp(-params.kappa * dt);
    const double i_scale = ou_step_scale(params.kappa, params.sigma_I, dt);
    std::vector<double> kernel_weights(n_steps + 1, 0.0);
    for (std::size_t lag = 1; lag <= n_steps; ++lag) {
        kernel_weights[lag] =
            std::pow(params.decay_c + static_cast<double>(lag) * dt, -params.decay_alpha);
    }

    std::vector<Eigen::VectorXd> signal(n_paths), conv(n_paths);
    parallel_for(n_paths, [&](std::size_t p) {
        Rng rng(derive_seed(seed, p));
        Eigen::VectorXd i_path = Eigen::VectorXd::Zero(rows);
        for (std::size_t k = 0; k < n_steps; ++k) {
            i_path(static_cast<Eigen::Index>(k) + 1) =
                i_path(static_cast<Eigen::Index>(k)) * i_decay + i_scale * rng.normal();
        }
        Eigen::VectorXd m = Eigen::VectorXd::Zero(rows);
        for (std::size_t k = 1; k <= n_steps; ++k) {
            double acc = 0.0;
            for (std::size_t j = 0; j < k; ++j) {
                acc += kernel_weights[k - j] * i_path(static_cast<Eigen::Index>(j));
            }
            m(static_cast<Eigen::Index>(k)) = acc * dt;
        }
        signal[p] = std::move(i_path);
        conv[p] = std::move(m);
    });

    // Pooled pre-gain drift scale; the discrete calibration target is
    // corr(mu dt, dX) = rho with dX = mu dt + sigma_X sqrt(dt) eps, so the
    // gain formula takes the per-step noise scale sigma_X sqrt(dt) against
    // the per-step drift scale sigma_m dt, i.e. sigma_mu_hat = sigma_m
    // sqrt(dt) in drift-gain units.
    double gain = 0.0;
    if (params.rho != 0.0) {
        double sum = 0.0, sum_sq = 0.0;
        const double count = static_cast<double>(n_paths * n_steps);
        for (const auto& m : conv) {
            sum += m.tail(rows - 1).sum();
            sum_sq += m.tail(rows - 1).squaredNorm();
        }
        const double mean = sum / count;
        const double var = sum_sq / count - mean * mean;
        if (!(var > 0.0)) throw std::runtime_error("drift model: degenerate pilot drift");
        gain = drift_gain(params.sigma_X, std::sqrt(var) * std::sqrt(dt), params.rho);
    }

    std::vector<Path> asset_paths(n_paths), signal_paths(n_paths), drift_paths(n_paths);
    const double noise_scale = params.sigma_X * std::sqrt(dt);
    parallel_for(n_paths, [&](std::size_t p) {
        Rng rng(derive_seed(seed ^ 0x5842726f776eULL, p));
        Eigen::MatrixXd x(rows, 1), i_col(rows, 1), mu_col(rows, 1);
        x(0, 0) = 0.0;
        for (Eigen::Index k = 0; k < rows; ++k) {
            i_col(k, 0) = signal[p](k);
            mu_col(k, 0) = gain * conv[p](k);
        }
        for (Eigen::Index k = 0; k + 1 < rows; ++k) {
            x(k + 1, 0) = x(k, 0) + mu_col(k, 0) * dt + noise_scale * rng.normal();
        }
        asset_paths[p] = Path(times, std::move(x));
        signal_paths[p] = Path(times, std::move(i_col));
        drift_paths[p] = Path(times, std::move(mu_col));
    });

    PathDepDriftWorld world;
    world.asset = PathBatch(std::move(asset_paths), "pathdep_asset");
    world.signal = PathBatch(std::move(signal_paths), "pathdep_signal");
    world.drift = PathBatch(std::move(drift_paths), "pathdep_drift");
    world.gain = gain;
    return world;
}

double DecaySpec::weight(double lag) const {
    switch (kind) {
        case DecayKind::PowerLaw:
            return std::pow(c + lag, -alpha);
        case DecayKind::Exponential:
            return std::exp(-rate * lag);
        case DecayKind::Flat:
            return 1.0;
    }
    return 1.0;
}

void SignalParams::validate() const {
    if (horizon_w < 1) throw std::invalid_argument("signal: horizon_w must be >= 1");
    if (sv_gamma < 0.0 || sv_gamma > 1.0) {
        throw std::invalid_argument("signal: sv_gamma must be in [0, 1]");
    }
    if (decay.kind == DecayKind::PowerLaw && (!(decay.c > 0.0) || !(decay.alpha > 0.0))) {
        throw std::invalid_argument("signal: power-law decay needs c > 0 and alpha > 0");
    }
}

Eigen::VectorXd vol_proxy(const Eigen::VectorXd& returns, VolProxyMode mode, Eigen::Index window,
                          double dt) {
    const Eigen::Index n = returns.size();
    if (window < 1 || window > n) throw std::invalid_argument("vol_proxy: bad window");
    if (!(dt > 0.0)) throw std::invalid_argument("vol_proxy: dt must be positive");

    Eigen::VectorXd out(n);
    if (mode == VolProxyMode::AbsReturn) {
        out = returns.cwiseAbs() / dt;
        return out;
    }
    for (Eigen::Index k = 0; k < n; ++k) {
        const Eigen::Index len = std::min(window, n - k);
        const double ms = returns.segment(k, len).squaredNorm() / (static_cast<double>(len) * dt);
        out(k) = std::sqrt(ms);
    }
    return out;
}

namespace {

// Per-path ingredients of the prediction mixture. The stochastic-vol leg is
// kept in raw form (mu_V not yet applied) so the batch variant can pool mu_V
// across paths before weighting.
struct SignalRaw {
    Eigen::VectorXd y;
    Eigen::VectorXd eta;
    Eigen::VectorXd sv_raw;
    Eigen::VectorXd add_raw;
    double vol_sq_sum = 0;
    Eigen::Index vol_count = 0;
};

SignalRaw signal_raw(const Path& asset, const SignalParams& params, std::uint64_t path_seed) {
    if (asset.channels() != 1) throw std::invalid_argument("signal: asset path must be 1-channel");
    const Eigen::Index w = params.horizon_w;
    const Eigen::Index l = asset.length();
    if (l < w + 1) throw std::invalid_argument("signal: path too short for horizon");

    const Eigen::VectorXd returns = asset.increments().col(0);
    const double dt = asset.times()[1] - asset.times()[0];
    const Eigen::Index n_pred = l - w + 1; // predictions at t = 0..l-w

    // Decayed true-return capture eta_t and realized return y_t.
    Eigen::VectorXd decay_w(w);
    for (Eigen::Index s = 0; s < w; ++s) {
        decay_w(s) = params.decay.weight(static_cast<double>(w - s));
    }
    SignalRaw raw;
    raw.y.resize(n_pred);
    raw.eta.resize(n_pred);
    for (Eigen::Index t = 0; t < n_pred; ++t) {
        raw.y(t) = asset.values()(t + w, 0) - asset.values()(t, 0);
        raw.eta(t) = decay_w.dot(returns.segment(t, w));
    }

    // Residual legs over one shared pair of Brownian motions so overlapping
    // horizons inherit the expected autocorrelation.
    const Eigen::VectorXd vol = vol_proxy(returns, params.vol_proxy, w, dt);
    raw.vol_sq_sum = vol.squaredNorm();
    raw.vol_count = vol.size();

    Rng rng(derive_seed(path_seed, 0x5349474eULL));
    Eigen::VectorXd dw_sv(l), dw_add(l);
    const double sqrt_dt = std::sqrt(dt);
    for (Eigen::Index k = 0; k < l; ++k) dw_sv(k) = sqrt_dt * rng.normal();
    for (Eigen::Index k = 0; k < l; ++k) dw_add(k) = sqrt_dt * rng.normal();

    raw.sv_raw.resize(n_pred);
    raw.add_raw.resize(n_pred);
    for (Eigen::Index t = 0; t < n_pred; ++t) {
        double sv = 0.0, add = 0.0;
        for (Eigen::Index s = 0; s < w; ++s) {
            sv += vol(t + s) * dw_sv(t + s);
            add += dw_add(t + s);
        }
        raw.sv_raw(t) = sv;
        raw.add_raw(t) = add;
    }
    return raw;
}

Eigen::VectorXd pooled(const std::vector<Eigen::VectorXd>& parts) {
    Eigen::Index total = 0;
    for (const auto& p : parts) total += p.size();
    Eigen::VectorXd out(total);
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        out.segment(at, p.size()) = p;
        at += p.size();
    }
    return out;
}

} // namespace

SignalBatchResult gen_signal_batch(const PathBatch& assets, const SignalParams& params,
                                   const std::optional<SignalStats>& frozen) {
    params.validate();
    if (assets.paths.empty()) throw std::invalid_argument("signal: empty batch");

    std::vector<SignalRaw> raws(assets.size());
    parallel_for(assets.size(), [&](std::size_t i) {
        raws[i] = signal_raw(assets.paths[i], params, derive_seed(params.seed, i));
    });

    double mu_v;
    if (frozen) {
        mu_v = frozen->mu_v;
    } else {
        double vol_sq = 0.0;
        double count = 0.0;
        for (const auto& r : raws) {
            vol_sq += r.vol_sq_sum;
            count += static_cast<double>(r.vol_count);
        }
        mu_v = vol_sq / count;
    }
    if (!(mu_v > 0.0) && params.sv_gamma > 0.0) {
        throw std::runtime_error("signal: degenerate volatility proxy");
    }

    const double sv_weight = params.sv_gamma > 0.0 ? std::sqrt(params.sv_gamma / mu_v) : 0.0;
    const double add_weight = std::sqrt(1.0 - params.sv_gamma);
    std::vector<Eigen::VectorXd> zs(assets.size()), ys, etas;
    for (std::size_t i = 0; i < assets.size(); ++i) {
        zs[i] = sv_weight * raws[i].sv_raw + add_weight * raws[i].add_raw;
        ys.push_back(raws[i].y);
        etas.push_back(raws[i].eta);
    }

    SignalStats stats;
    if (frozen) {
        stats = *frozen;
    } else {
        const Eigen::VectorXd y_all = pooled(ys);
        const Eigen::VectorXd eta_all = pooled(etas);
        const Eigen::VectorXd z_all = pooled(zs);
        stats.sigma_y = std::sqrt(variance_of(y_all));
        stats.sigma_eta = std::sqrt(variance_of(eta_all));
        stats.sigma_z = std::sqrt(variance_of(z_all));
        stats.rho_yeta = correlation_of(y_all, eta_all);
        stats.mu_v = mu_v;
    }
    if (!(stats.sigma_eta > 0.0) || !(stats.sigma_z > 0.0) || !(stats.sigma_y > 0.0)) {
        throw std::runtime_error("signal: degenerate normalisers");
    }
    if (params.rho > stats.rho_yeta) {
        throw std::runtime_error("signal: target correlation unreachable with this decay");
    }

    const double mix = params.rho / stats.rho_yeta;
    const double noise_weight = std::sqrt(std::max(0.0, 1.0 - mix * mix));
    std::vector<Path> preds(assets.size());
    for (std::size_t i = 0; i < assets.size(); ++i) {
        const Eigen::Index n_pred = raws[i].y.size();
        Eigen::VectorXd yhat(n_pred);
        for (Eigen::Index t = 0; t < n_pred; ++t) {
            yhat(t) = params.rho * stats.sigma_y *
                      (mix * raws[i].eta(t) / stats.sigma_eta +
                       noise_weight * zs[i](t) / stats.sigma_z);
        }
        const auto& times = assets.paths[i].times();
        std::vector<double> pred_times(times.begin(), times.begin() + n_pred);
        preds[i] = Path(std::move(pred_times), yhat);
    }

    SignalBatchResult result;
    result.predictions = PathBatch(std::move(preds), "predictions");
    result.stats = stats;
    return result;
}

SignalResult gen_signal(const Path& asset, const SignalParams& params,
                        const std::optional<SignalStats>& frozen) {
    const SignalBatchResult batch =
        gen_signal_batch(PathBatch({asset}, "signal_asset"), params, frozen);
    return SignalResult{batch.predictions.paths.front(), batch.stats};
}

} // namespace ktrade
