#include "ktrade/mean_variance.hpp"

#include "ktrade/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ktrade {

void FitConfig::validate(Eigen::Index n) const {
    if (!(lambda > 0.0)) throw std::invalid_argument("fit: lambda must be positive");
    if (eta < 0.0) throw std::invalid_argument("fit: eta must be nonnegative");
    if (rank_m > n) throw std::invalid_argument("fit: rank_m exceeds batch size");
}

Eigen::MatrixXd covariance_operator(const GramMatrix& gram) {
    const Eigen::Index n = gram.size();
    const double inv_n = 1.0 / static_cast<double>(n);
    const Eigen::VectorXd row_means = gram.values.rowwise().mean();
    // (1/N) K (Id - 11^T/N) = (1/N)(K - rowmeans * 1^T)
    Eigen::MatrixXd xi = gram.values;
    xi.colwise() -= row_means;
    return inv_n * xi;
}

namespace {

struct EigK {
    Eigen::VectorXd values; // eigenvalues of K, descending
    Eigen::MatrixXd vectors;
    Eigen::VectorXd proj_e; // u_k^T e_N
};

EigK decompose(const GramMatrix& gram) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram.values);
    if (es.info() != Eigen::Success) {
        throw std::runtime_error("alpha_spectral: eigendecomposition failed");
    }
    const Eigen::Index n = gram.size();
    EigK out;
    out.values.resize(n);
    out.vectors.resize(n, n);
    // Eigen returns ascending order; flip to descending.
    for (Eigen::Index k = 0; k < n; ++k) {
        out.values(k) = es.eigenvalues()(n - 1 - k);
        out.vectors.col(k) = es.eigenvectors().col(n - 1 - k);
    }
    const Eigen::VectorXd e_n =
        Eigen::VectorXd::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)));
    out.proj_e = out.vectors.transpose() * e_n;
    return out;
}

FittedWeights spectral_from_eigs(const EigK& eig, const FitConfig& config, Eigen::Index n,
                                 const std::string& fingerprint) {
    const Eigen::Index m = config.effective_rank(n);
    const double eta_over_n = config.eta / static_cast<double>(n);

    double denom = 0.0;
    Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n);
    bool any_projection = false;
    for (Eigen::Index k = 0; k < m; ++k) {
        const double gamma_k = config.lambda + eta_over_n * eig.values(k);
        const double proj = eig.proj_e(k);
        if (std::abs(proj) > 1e-14) any_projection = true;
        denom += proj * proj / gamma_k;
        alpha += (proj / gamma_k) * eig.vectors.col(k);
    }
    if (!any_projection) {
        throw std::runtime_error("alpha_spectral: e_N orthogonal to retained eigenspace");
    }

    const double scale = std::sqrt(static_cast<double>(n)) / (config.lambda * denom);
    FittedWeights w;
    w.alpha = scale * alpha;
    w.eigvals.resize(m);
    for (Eigen::Index k = 0; k < m; ++k) {
        w.eigvals(k) = config.lambda + eta_over_n * eig.values(k);
    }
    w.eigvecs = eig.vectors.leftCols(m);
    w.config = config;
    w.gram_fingerprint = fingerprint;
    if (!w.alpha.allFinite()) {
        throw std::runtime_error("alpha_spectral: non-finite weights");
    }
    return w;
}

} // namespace

FittedWeights alpha_direct(const GramMatrix& gram, const FitConfig& config) {
    const Eigen::Index n = gram.size();
    config.validate(n);

    const Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n, n) * config.lambda +
                                   config.eta * covariance_operator(gram).transpose();
    const Eigen::VectorXd alpha = pinv_solve(system, Eigen::VectorXd::Ones(n), 1e-12);
    if (!alpha.allFinite()) {
        throw std::runtime_error("alpha_direct: ill-conditioned system - use spectral solver");
    }

    FittedWeights w;
    w.alpha = alpha;
    w.config = config;
    w.config.use_spectral = false;
    w.gram_fingerprint = gram.fingerprint;
    return w;
}

FittedWeights alpha_spectral(const GramMatrix& gram, const FitConfig& config) {
    const Eigen::Index n = gram.size();
    config.validate(n);
    return spectral_from_eigs(decompose(gram), config, n, gram.fingerprint);
}

MomentSummary moments(const GramMatrix& gram) {
    const Eigen::Index n = gram.size();
    const double dn = static_cast<double>(n);
    MomentSummary m;
    m.mu_phi = gram.values * Eigen::VectorXd::Ones(n) / (dn * dn);
    const Eigen::VectorXd row_sums = gram.values.rowwise().sum();
    // K C = K - (rowsums/N) 1^T, so Sigma_Phi = (1/N^3) (K C) K.
    Eigen::MatrixXd kc = gram.values - row_sums * Eigen::RowVectorXd::Ones(n) / dn;
    Eigen::MatrixXd sigma = kc * gram.values / (dn * dn * dn);
    m.sigma_phi = 0.5 * (sigma + sigma.transpose());
    return m;
}

double expected_pnl(const Eigen::VectorXd& alpha, const Eigen::MatrixXd& cross_gram) {
    if (alpha.size() != cross_gram.rows()) {
        throw std::invalid_argument("expected_pnl: shape mismatch");
    }
    const double nm = static_cast<double>(alpha.size()) * static_cast<double>(cross_gram.cols());
    return alpha.dot(cross_gram * Eigen::VectorXd::Ones(cross_gram.cols())) / nm;
}

double pnl_variance(const Eigen::VectorXd& alpha, const Eigen::MatrixXd& cross_gram) {
    if (alpha.size() != cross_gram.rows()) {
        throw std::invalid_argument("pnl_variance: shape mismatch");
    }
    const double n = static_cast<double>(alpha.size());
    const double m = static_cast<double>(cross_gram.cols());
    const Eigen::VectorXd per_path = cross_gram.transpose() * alpha; // M entries
    const double mean = per_path.mean();
    return (per_path.array() - mean).square().sum() / (n * n * m);
}

double calibrate_eta(const GramMatrix& gram, double lambda, double target_delta) {
    if (!(target_delta > 0.0)) throw std::invalid_argument("calibrate_eta: delta must be positive");
    if (!(lambda > 0.0)) throw std::invalid_argument("calibrate_eta: lambda must be positive");

    const Eigen::Index n = gram.size();
    const EigK eig = decompose(gram);
    const MomentSummary mom = moments(gram);

    auto realized = [&](double eta) {
        FitConfig c;
        c.lambda = lambda;
        c.eta = eta;
        c.rank_m = 0;
        const FittedWeights w = spectral_from_eigs(eig, c, n, gram.fingerprint);
        return w.alpha.dot(mom.sigma_phi * w.alpha);
    };

    double log_lo = std::log(1e-6);
    double log_hi = std::log(1e12);
    double var_lo = realized(std::exp(log_lo)); // largest achievable variance
    double var_hi = realized(std::exp(log_hi));
    if (var_lo + 1e-300 < var_hi) {
        throw std::runtime_error("calibrate_eta: realized variance not monotone in eta");
    }
    const double rel_err_lo = std::abs(var_lo - target_delta) / target_delta;
    const double rel_err_hi = std::abs(var_hi - target_delta) / target_delta;
    if (rel_err_lo <= 1e-3) return std::exp(log_lo);
    if (rel_err_hi <= 1e-3) return std::exp(log_hi);
    if (target_delta > var_lo || target_delta < var_hi) {
        throw std::runtime_error("calibrate_eta: target variance unreachable; achievable range [" +
                                 format_full(var_hi) + ", " + format_full(var_lo) + "]");
    }

    double prev_mid_var = var_lo;
    for (int iter = 0; iter < 200; ++iter) {
        const double log_mid = 0.5 * (log_lo + log_hi);
        const double var_mid = realized(std::exp(log_mid));
        if (std::abs(var_mid - target_delta) / target_delta <= 1e-3) {
            return std::exp(log_mid);
        }
        // Monotonicity along the bisection path: shrinking toward larger eta
        // must not increase the realized variance beyond round-off.
        if (var_mid > var_lo * (1.0 + 1e-9) || var_mid < var_hi * (1.0 - 1e-9) - 1e-300) {
            throw std::runtime_error("calibrate_eta: realized variance not monotone in eta");
        }
        if (var_mid > target_delta) {
            log_lo = log_mid;
            var_lo = var_mid;
        } else {
            log_hi = log_mid;
            var_hi = var_mid;
        }
        prev_mid_var = var_mid;
    }
    (void)prev_mid_var;
    throw std::runtime_error("calibrate_eta: bisection failed to reach tolerance");
}

double objective_ratio(const Eigen::VectorXd& alpha, const MomentSummary& m) {
    const double var = alpha.dot(m.sigma_phi * alpha);
    if (!(var > 0.0)) throw std::runtime_error("objective_ratio: zero variance");
    return alpha.dot(m.mu_phi) / std::sqrt(var);
}

double stability_metric(const std::vector<double>& j_values, const std::vector<double>& lambdas) {
    if (j_values.size() != lambdas.size() || j_values.size() < 2) {
        throw std::invalid_argument("stability_metric: need >= 2 grid points");
    }
    for (std::size_t i = 0; i + 1 < lambdas.size(); ++i) {
        if (!(lambdas[i + 1] > lambdas[i])) {
            throw std::invalid_argument("stability_metric: lambdas must be ascending and distinct");
        }
    }
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < j_values.size(); ++i) {
        const double quotient =
            (j_values[i + 1] - j_values[i]) / (std::log(lambdas[i + 1]) - std::log(lambdas[i]));
        sum += quotient * quotient;
    }
    return std::sqrt(sum);
}

GridSearchResult grid_search(const PathBatch& train, const PathBatch& validation,
                             const KernelSpec& kspec, const EmbeddingSpec& espec_template,
                             const OperatorLift& lift, std::vector<double> gamma_grid,
                             std::vector<double> lambda_grid, std::vector<Eigen::Index> m_grid,
                             double eta) {
    if (gamma_grid.empty() || lambda_grid.empty() || m_grid.empty()) {
        throw std::invalid_argument("grid_search: empty grid");
    }
    if (train.paths.empty() || validation.paths.empty()) {
        throw std::invalid_argument("grid_search: empty split");
    }

    GridSearchResult result;

    auto dedupe = [&result](std::vector<double>& grid, const char* name) {
        std::vector<double> unique;
        for (double v : grid) {
            if (std::find(unique.begin(), unique.end(), v) == unique.end()) {
                unique.push_back(v);
            }
        }
        if (unique.size() != grid.size()) {
            result.warnings.push_back(std::string("duplicate ") + name +
                                      " values in grid deduplicated");
            grid = unique;
        }
    };
    dedupe(gamma_grid, "scale_gamma");
    dedupe(lambda_grid, "lambda");
    std::sort(lambda_grid.begin(), lambda_grid.end());

    const Eigen::Index n = static_cast<Eigen::Index>(train.size());
    bool have_best = false;
    std::size_t failures = 0;

    for (double gamma : gamma_grid) {
        EmbeddingSpec espec = espec_template;
        espec.scale_gamma = gamma;

        GramMatrix gram;
        Eigen::MatrixXd cross;
        EigK eig;
        MomentSummary mom;
        try {
            gram = kphi_gram(kspec, espec, lift, train);
            cross = kphi_cross(kspec, espec, lift, train, validation);
            eig = decompose(gram);
            mom = moments(gram);
        } catch (const std::exception& e) {
            for (double lambda : lambda_grid) {
                for (Eigen::Index m : m_grid) {
                    GridSearchCell cell;
                    cell.scale_gamma = gamma;
                    cell.lambda = lambda;
                    cell.rank_m = m;
                    cell.failed = true;
                    cell.diagnostic = e.what();
                    result.table.push_back(cell);
                    ++failures;
                }
            }
            continue;
        }

        for (Eigen::Index m : m_grid) {
            std::vector<double> j_vals;
            std::vector<double> lam_ok;
            std::vector<std::size_t> cell_ids;
            for (double lambda : lambda_grid) {
                GridSearchCell cell;
                cell.scale_gamma = gamma;
                cell.lambda = lambda;
                cell.rank_m = m;
                try {
                    FitConfig config;
                    config.lambda = lambda;
                    config.eta = eta;
                    config.rank_m = m;
                    const FittedWeights w = spectral_from_eigs(eig, config, n, gram.fingerprint);

                    cell.objective_train =
                        w.alpha.dot(mom.mu_phi) - 0.5 * eta * w.alpha.dot(mom.sigma_phi * w.alpha);
                    const double e_val = expected_pnl(w.alpha, cross);
                    const double v_val = pnl_variance(w.alpha, cross);
                    cell.objective_val = e_val - 0.5 * eta * v_val;
                    cell.j_val = v_val > 0.0 ? e_val / std::sqrt(v_val) : 0.0;

                    const bool better =
                        !have_best || cell.objective_val > result.best_score ||
                        (cell.objective_val == result.best_score &&
                         (lambda > result.lambda ||
                          (lambda == result.lambda && m < result.rank_m)));
                    if (better) {
                        have_best = true;
                        result.best_score = cell.objective_val;
                        result.scale_gamma = gamma;
                        result.lambda = lambda;
                        result.rank_m = m;
                        result.weights = w;
                    }
                    j_vals.push_back(cell.j_val);
                    lam_ok.push_back(lambda);
                    cell_ids.push_back(result.table.size());
                } catch (const std::exception& e) {
                    cell.failed = true;
                    cell.diagnostic = e.what();
                    ++failures;
                }
                result.table.push_back(cell);
            }
            // Squared lambda-difference quotients of the validation J ratio,
            // per cell; the last lambda has no successor and contributes 0.
            for (std::size_t i = 0; i + 1 < j_vals.size(); ++i) {
                const double q = (j_vals[i + 1] - j_vals[i]) /
                                 (std::log(lam_ok[i + 1]) - std::log(lam_ok[i]));
                result.table[cell_ids[i]].r_contrib = q * q;
            }
        }
    }

    if (!have_best) {
        std::string diag = "grid_search: all fits failed";
        for (const auto& cell : result.table) {
            if (cell.failed) {
                diag += "\n  (gamma=" + format_full(cell.scale_gamma) +
                        ", lambda=" + format_full(cell.lambda) +
                        ", m=" + std::to_string(cell.rank_m) + "): " + cell.diagnostic;
            }
        }
        throw std::runtime_error(diag);
    }
    (void)failures;
    return result;
}

} // namespace ktrade
