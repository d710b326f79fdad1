#pragma once

#include "ktrade/kernels.hpp"
#include "ktrade/path.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace ktrade {

/// Operator lift A of the separable operator-valued kernel K(x, y) =
/// kappa(x, y) * A. A diagonal 0/1 mask restricts trading to a subset of
/// channels (exogenous signal channels ride along in the kernel only).
struct OperatorLift {
    Eigen::MatrixXd A;

    static OperatorLift identity(Eigen::Index d);
    void validate() const;
};

/// Gram matrix of the PnL feature map over a co-location batch, tagged with
/// a content hash of the generating batch and specs.
struct GramMatrix {
    Eigen::MatrixXd values;
    std::string fingerprint;

    Eigen::Index size() const { return values.rows(); }
};

/// d x N expected-future-PnL map of a live prefix against every prefix of
/// each co-location path.
struct GammaMatrix {
    Eigen::MatrixXd values;
    Eigen::Index prefix_index = 0;
};

std::string kphi_fingerprint(const KernelSpec& kspec, const EmbeddingSpec& espec,
                             const OperatorLift& lift, const PathBatch& batch);

/// Matrix of prefix kernel values kappa(psi(x)_{0..i}, psi(y)_{0..j}) of
/// shape (Lx+1) x (Ly+1); the embedding is applied to the full paths first,
/// so entry (i, j) refers to prefixes of the embedded paths.
Eigen::MatrixXd prefix_kernel_matrix(const KernelSpec& kspec, const EmbeddingSpec& espec,
                                     const Path& x, const Path& y);

/// PnL-feature-map kernel: the discrete double Ito sum
///   sum_{i<Lx} sum_{j<Ly} kappa(psi(X)_{0..i}, psi(Y)_{0..j}) dX_i^T A dY_j
/// with raw (unembedded) increments.
double kphi_pair(const KernelSpec& kspec, const EmbeddingSpec& espec, const OperatorLift& lift,
                 const Path& x, const Path& y);

GramMatrix kphi_gram(const KernelSpec& kspec, const EmbeddingSpec& espec,
                     const OperatorLift& lift, const PathBatch& batch);

/// Cross Gram K_Phi(rows, cols), one row per path of `rows`.
Eigen::MatrixXd kphi_cross(const KernelSpec& kspec, const EmbeddingSpec& espec,
                           const OperatorLift& lift, const PathBatch& rows,
                           const PathBatch& cols);

GammaMatrix gamma_map(const KernelSpec& kspec, const EmbeddingSpec& espec,
                      const OperatorLift& lift, const Path& live, const PathBatch& batch);

/// Gamma columns for every prefix of `live` at once: entry [t] is the d x N
/// gamma matrix at prefix t, computed from one prefix-kernel matrix per
/// co-location path. Bitwise identical to per-prefix gamma_map calls.
std::vector<Eigen::MatrixXd> gamma_series(const KernelSpec& kspec, const EmbeddingSpec& espec,
                                          const OperatorLift& lift, const Path& live,
                                          const PathBatch& batch);

/// Nystrom low-rank surrogate C W^+ C^T from the given landmark paths; at
/// most N*n pair evaluations are performed (reported via pair_evals).
GramMatrix nystrom_gram(const KernelSpec& kspec, const EmbeddingSpec& espec,
                        const OperatorLift& lift, const PathBatch& batch,
                        const std::vector<Eigen::Index>& landmarks,
                        std::size_t* pair_evals = nullptr);

std::vector<Eigen::Index> random_landmarks(Eigen::Index n_total, Eigen::Index n_landmarks,
                                           std::uint64_t seed);

} // namespace ktrade
