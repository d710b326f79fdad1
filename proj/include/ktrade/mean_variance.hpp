#pragma once

#include "ktrade/path.hpp"
#include "ktrade/pnl_kernel.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace ktrade {

/// Hyperparameters of one regularised mean-variance fit. rank_m <= 0 means
/// "full" (all N eigenpairs).
struct FitConfig {
    double lambda = 1e-3;
    double eta = 1.0;
    Eigen::Index rank_m = 0;
    bool use_spectral = true;

    void validate(Eigen::Index n) const;
    Eigen::Index effective_rank(Eigen::Index n) const { return rank_m <= 0 ? n : rank_m; }
};

/// Optimal weights alpha* with the retained eigenpairs that produced them.
struct FittedWeights {
    Eigen::VectorXd alpha;
    Eigen::VectorXd eigvals; // retained gamma_k of A = lambda Id + (eta/N) K, descending
    Eigen::MatrixXd eigvecs; // N x m, columns are the retained u_k
    FitConfig config;
    std::string gram_fingerprint;
};

/// Empirical mean vector and covariance matrix of the PnL feature map.
struct MomentSummary {
    Eigen::VectorXd mu_phi;
    Eigen::MatrixXd sigma_phi;
};

/// Centered-Gram covariance operator Xi = (1/N) K (Id - 11^T/N).
Eigen::MatrixXd covariance_operator(const GramMatrix& gram);

/// Direct solve of (lambda Id + eta Xi^T) alpha = 1 via pseudo-inverse.
/// Xi^T = (1/N)(Id - 11^T/N) K is the operator of the mean-variance theorem
/// (centering applied after the kernel integral operator); this orientation
/// is the one the spectral representation is equivalent to.
FittedWeights alpha_direct(const GramMatrix& gram, const FitConfig& config);

/// Spectral representation of alpha*, truncated to the top m eigenpairs of
/// A = lambda Id + (eta/N) K (eigenvectors shared with K).
FittedWeights alpha_spectral(const GramMatrix& gram, const FitConfig& config);

/// mu_Phi = (1/N^2) K 1,  Sigma_Phi = (1/N^3) K (Id - 11^T/N) K.
MomentSummary moments(const GramMatrix& gram);

/// E = (1/(NM)) alpha^T K 1 on a cross Gram K_Phi(Y, X) of shape N x M.
double expected_pnl(const Eigen::VectorXd& alpha, const Eigen::MatrixXd& cross_gram);
/// Var = (1/(N^2 M)) alpha^T K (Id_M - 11^T/M) K^T alpha.
double pnl_variance(const Eigen::VectorXd& alpha, const Eigen::MatrixXd& cross_gram);

/// Solves alpha^T Sigma_Phi alpha = target_delta for eta by bisection on
/// log eta over [1e-6, 1e12], to relative accuracy 1e-3. Checks that the
/// realized variance is monotone non-increasing along the bracket.
double calibrate_eta(const GramMatrix& gram, double lambda, double target_delta);

/// J = alpha^T mu_Phi / sqrt(alpha^T Sigma_Phi alpha); scale-invariant.
double objective_ratio(const Eigen::VectorXd& alpha, const MomentSummary& m);

/// R = sqrt(sum_i ((J_{i+1}-J_i)/(log lambda_{i+1}-log lambda_i))^2),
/// the smoothness penalty over an ascending lambda grid.
double stability_metric(const std::vector<double>& j_values,
                        const std::vector<double>& lambdas);

struct GridSearchCell {
    double scale_gamma = 0;
    double lambda = 0;
    Eigen::Index rank_m = 0;
    double objective_train = 0;
    double objective_val = 0;
    double j_val = 0;
    double r_contrib = 0;
    bool failed = false;
    std::string diagnostic;
};

struct GridSearchResult {
    double scale_gamma = 0;
    double lambda = 0;
    Eigen::Index rank_m = 0;
    FittedWeights weights;
    double best_score = 0;
    std::vector<GridSearchCell> table;
    std::vector<std::string> warnings;
};

/// One Gram per scale_gamma, one eigendecomposition per Gram, spectral alpha
/// per (lambda, m) cell, scored by the validation penalised objective
/// E - (eta/2) Var. Ties break toward larger lambda, then smaller m.
GridSearchResult grid_search(const PathBatch& train, const PathBatch& validation,
                             const KernelSpec& kspec, const EmbeddingSpec& espec_template,
                             const OperatorLift& lift, std::vector<double> gamma_grid,
                             std::vector<double> lambda_grid,
                             std::vector<Eigen::Index> m_grid, double eta);

} // namespace ktrade
