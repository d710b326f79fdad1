#include "ktrade/strategies.hpp"

#include "ktrade/numeric.hpp"
#include "ktrade/parallel.hpp"
#include "ktrade/serde.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <stdexcept>

namespace ktrade {

namespace {
constexpr int kModelVersion = 1;
}

Eigen::VectorXd StrategyModel::effective_weights() const {
    return static_cast<double>(colocation.size()) * position_scale * weights.alpha;
}

void StrategyModel::validate() const {
    if (weights.alpha.size() != static_cast<Eigen::Index>(colocation.size())) {
        throw std::runtime_error("strategy model: weights length does not match co-location size");
    }
    if (!weights.alpha.allFinite() || !std::isfinite(position_scale)) {
        throw std::runtime_error("strategy model: non-finite components");
    }
    lift.validate();
    if (lift.A.rows() != colocation.channels()) {
        throw std::runtime_error("strategy model: lift dimension mismatch");
    }
}

StrategyModel make_strategy_model(const EmbeddingSpec& espec, const KernelSpec& kspec,
                                  const OperatorLift& lift, const PathBatch& colocation,
                                  const FittedWeights& weights) {
    StrategyModel m;
    m.embedding = espec;
    m.kernel = kspec;
    m.lift = lift;
    m.colocation = colocation;
    m.weights = weights;
    m.position_scale =
        1.0 / (static_cast<double>(colocation.size()) * weights.config.lambda);
    m.embedding = with_pinned_horizon(m.embedding, colocation);
    m.validate();
    return m;
}

Eigen::VectorXd position(const StrategyModel& model, const Path& live, Eigen::Index t_index) {
    if (t_index < 0 || t_index > live.length()) {
        throw std::out_of_range("position: t_index out of range");
    }
    const GammaMatrix gamma =
        gamma_map(model.kernel, model.embedding, model.lift, live.prefix(t_index),
                  model.colocation);
    return model.position_scale * (gamma.values * model.weights.alpha);
}

Eigen::MatrixXd position_series(const StrategyModel& model, const Path& live) {
    // The one-pass route needs embed/prefix to commute, which the pinned time
    // horizon guarantees; otherwise fall back to per-prefix evaluation.
    if (model.embedding.time_augment && !model.embedding.time_horizon) {
        Eigen::MatrixXd out(live.length(), live.channels());
        for (Eigen::Index t = 0; t < live.length(); ++t) {
            out.row(t) = position(model, live, t).transpose();
        }
        return out;
    }
    const auto gammas =
        gamma_series(model.kernel, model.embedding, model.lift, live, model.colocation);
    Eigen::MatrixXd out(live.length(), live.channels());
    for (Eigen::Index t = 0; t < live.length(); ++t) {
        out.row(t) =
            (model.position_scale * (gammas[static_cast<std::size_t>(t)] * model.weights.alpha))
                .transpose();
    }
    return out;
}

namespace {

BacktestReport backtest_series(const std::function<Eigen::MatrixXd(const Path&)>& series,
                               const PathBatch& batch, double eta, bool keep_positions) {
    if (batch.paths.empty()) throw std::invalid_argument("backtest: empty batch");
    const auto n = batch.size();

    BacktestReport report;
    report.eta = eta;
    report.terminal_pnl.resize(static_cast<Eigen::Index>(n));
    report.turnover.resize(static_cast<Eigen::Index>(n));
    if (keep_positions) report.positions.resize(n);

    std::vector<std::string> errors(n);
    parallel_for(n, [&](std::size_t i) {
        try {
            const Path& path = batch.paths[i];
            const Eigen::MatrixXd pos = series(path); // L x d
            const Eigen::MatrixXd inc = path.increments();
            double pnl = 0.0;
            double turn = 0.0;
            for (Eigen::Index t = 0; t < inc.rows(); ++t) {
                pnl += pos.row(t).dot(inc.row(t));
                const Eigen::RowVectorXd prev =
                    t == 0 ? Eigen::RowVectorXd::Zero(pos.cols()) : pos.row(t - 1);
                turn += (pos.row(t) - prev).cwiseAbs().sum();
            }
            report.terminal_pnl(static_cast<Eigen::Index>(i)) = pnl;
            report.turnover(static_cast<Eigen::Index>(i)) = turn;
            if (keep_positions) report.positions[i] = pos;
        } catch (const std::exception& e) {
            errors[i] = e.what();
            throw std::runtime_error("backtest: path " + std::to_string(i) + ": " + e.what());
        }
    });

    report.mean = mean_of(report.terminal_pnl);
    report.variance = variance_of(report.terminal_pnl);
    report.penalised_objective = report.mean - 0.5 * eta * report.variance;
    return report;
}

} // namespace

BacktestReport backtest(const PositionFn& strategy, const PathBatch& batch, double eta,
                        bool keep_positions) {
    auto series = [&strategy](const Path& path) {
        Eigen::MatrixXd pos(path.length(), path.channels());
        for (Eigen::Index t = 0; t < path.length(); ++t) {
            pos.row(t) = strategy(path, t).transpose();
        }
        return pos;
    };
    return backtest_series(series, batch, eta, keep_positions);
}

BacktestReport backtest(const StrategyModel& model, const PathBatch& batch, double eta,
                        bool keep_positions) {
    auto series = [&model](const Path& path) { return position_series(model, path); };
    return backtest_series(series, batch, eta, keep_positions);
}

namespace {

Eigen::Index sig_feature_count(Eigen::Index channels, int order) {
    Eigen::Index total = 0;
    Eigen::Index level = 1;
    for (int k = 0; k <= order; ++k) {
        total += level;
        if (total > 20000) {
            throw std::invalid_argument(
                "sig trader: feature count exceeds 20000 - reduce order or channels");
        }
        level *= channels;
    }
    return total;
}

// Terminal-PnL feature vector sum_t Sig(psi(X)_{0..t}) (x) dX_t, flattened
// word-major: entry (w, m) at index w*d + m.
Eigen::VectorXd sig_pnl_features(const Path& path, const EmbeddingSpec& espec, int order) {
    const Path embedded = embed(path, espec);
    const Eigen::MatrixXd emb_inc = embedded.increments();
    const Eigen::MatrixXd raw_inc = path.increments();
    const Eigen::Index d = path.channels();

    SigTensor sig(static_cast<int>(embedded.channels()), order);
    const Eigen::Index n_words = sig.coefficients().size();
    Eigen::VectorXd features = Eigen::VectorXd::Zero(n_words * d);
    for (Eigen::Index t = 0; t < raw_inc.rows(); ++t) {
        const auto& coeffs = sig.coefficients();
        for (Eigen::Index w = 0; w < n_words; ++w) {
            features.segment(w * d, d) += coeffs(w) * raw_inc.row(t).transpose();
        }
        sig.fold_segment(emb_inc.row(t).transpose());
    }
    return features;
}

} // namespace

SigTraderModel fit_sig_trader(const PathBatch& batch, const EmbeddingSpec& espec, int order,
                              double lambda, double eta) {
    if (batch.paths.empty()) throw std::invalid_argument("sig trader: empty batch");
    if (order < 0) throw std::invalid_argument("sig trader: negative order");
    if (!(lambda > 0.0)) throw std::invalid_argument("sig trader: lambda must be positive");

    EmbeddingSpec spec = espec;
    if (spec.time_augment && !spec.time_horizon) {
        spec.time_horizon = batch.paths.front().times().back();
    }

    const Path probe = embed(batch.paths.front(), spec);
    const Eigen::Index n_words = sig_feature_count(probe.channels(), order);
    const Eigen::Index d = batch.channels();
    const Eigen::Index dim = n_words * d;
    const auto n = batch.size();

    Eigen::MatrixXd features(dim, static_cast<Eigen::Index>(n));
    parallel_for(n, [&](std::size_t i) {
        features.col(static_cast<Eigen::Index>(i)) = sig_pnl_features(batch.paths[i], spec, order);
    });

    const Eigen::VectorXd mu = features.rowwise().mean();
    Eigen::MatrixXd centered = features.colwise() - mu;
    const Eigen::MatrixXd sigma = centered * centered.transpose() / static_cast<double>(n);

    const Eigen::MatrixXd system =
        lambda * Eigen::MatrixXd::Identity(dim, dim) + eta * sigma;
    const Eigen::VectorXd ell_flat = pinv_symmetric(system, 1e-12) * mu;

    SigTraderModel model;
    model.order = order;
    model.embedding = spec;
    model.lambda = lambda;
    model.eta = eta;
    model.ell.resize(n_words, d);
    for (Eigen::Index w = 0; w < n_words; ++w) {
        model.ell.row(w) = ell_flat.segment(w * d, d).transpose();
    }
    return model;
}

Eigen::VectorXd sig_trader_position(const SigTraderModel& model, const Path& live,
                                    Eigen::Index t_index) {
    if (t_index < 0 || t_index > live.length()) {
        throw std::out_of_range("sig trader: t_index out of range");
    }
    const Path embedded = embed(live.prefix(t_index), model.embedding);
    const SigTensor sig = truncated_signature(embedded, model.order);
    return model.ell.transpose() * sig.coefficients();
}

BacktestReport backtest(const SigTraderModel& model, const PathBatch& batch, double eta,
                        bool keep_positions) {
    auto series = [&model](const Path& path) {
        // One incremental signature pass per path instead of per prefix.
        const Path embedded = embed(path, model.embedding);
        const Eigen::MatrixXd emb_inc = embedded.increments();
        SigTensor sig(static_cast<int>(embedded.channels()), model.order);
        Eigen::MatrixXd pos(path.length(), path.channels());
        for (Eigen::Index t = 0; t < path.length(); ++t) {
            pos.row(t) = (model.ell.transpose() * sig.coefficients()).transpose();
            sig.fold_segment(emb_inc.row(t).transpose());
        }
        return pos;
    };
    return backtest_series(series, batch, eta, keep_positions);
}

Eigen::VectorXd markowitz_position(const Eigen::MatrixXd& sigma,
                                   const Eigen::VectorXd& mu_estimate, double eta) {
    if (!(eta > 0.0)) throw std::invalid_argument("markowitz: eta must be positive");
    if (sigma.rows() != sigma.cols() || sigma.rows() != mu_estimate.size()) {
        throw std::invalid_argument("markowitz: shape mismatch");
    }
    return pinv_symmetric(sigma, 1e-12) * mu_estimate / eta;
}

void save_model(const StrategyModel& model, const std::string& file) {
    model.validate();
    json j;
    j["version"] = kModelVersion;
    j["embedding"] = to_json(model.embedding);
    j["kernel"] = to_json(model.kernel);
    j["lift"] = to_json(model.lift);
    j["colocation"] = to_json(model.colocation);
    j["weights"] = to_json(model.weights);
    j["position_scale"] = model.position_scale;
    j["colocation_fingerprint"] =
        kphi_fingerprint(model.kernel, model.embedding, model.lift, model.colocation);
    save_json_file(file, j);
}

StrategyModel load_model(const std::string& file) {
    const json j = load_json_file(file);
    if (j.value("version", -1) != kModelVersion) {
        throw std::runtime_error("model: unsupported version");
    }
    StrategyModel m;
    m.embedding = embedding_spec_from_json(j.at("embedding"));
    m.kernel = kernel_spec_from_json(j.at("kernel"));
    m.lift = lift_from_json(j.at("lift"));
    m.colocation = batch_from_json(j.at("colocation"));
    m.weights = weights_from_json(j.at("weights"));
    m.position_scale = j.at("position_scale").get<double>();

    const std::string stored = j.at("colocation_fingerprint").get<std::string>();
    const std::string actual = kphi_fingerprint(m.kernel, m.embedding, m.lift, m.colocation);
    if (stored != actual ||
        (!m.weights.gram_fingerprint.empty() && m.weights.gram_fingerprint != actual)) {
        throw std::runtime_error("model: fingerprint mismatch between weights and colocation");
    }
    m.validate();
    return m;
}

} // namespace ktrade
