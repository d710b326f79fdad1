#pragma once

#include "ktrade/path.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace ktrade {

enum class KernelVariant { SigPde, TruncatedSig, RandomizedSig };
enum class Activation { Tanh, Identity };

/// Which scalar path kernel to evaluate and its parameters. Only the fields
/// of the active variant are meaningful.
struct KernelSpec {
    KernelVariant variant = KernelVariant::SigPde;

    int dyadic_order = 1;    // sig_pde: factor-2 refinements per increment
    int order = 4;           // truncated_sig: truncation level K
    int reservoir_dim = 64;  // randomized_sig: M
    Activation activation = Activation::Tanh;
    std::uint64_t seed = 0;

    void validate() const;

    static KernelSpec sig_pde(int dyadic_order = 1);
    static KernelSpec truncated_sig(int order);
    static KernelSpec randomized_sig(int reservoir_dim, Activation act, std::uint64_t seed);
};

/// Truncated signature in the tensor algebra, stored flat level-by-level
/// (words in lexicographic order within a level), so the level-k block is a
/// contiguous slice of length d^k. The empty-word coefficient is 1.
class SigTensor {
public:
    SigTensor(int channels, int order);

    int order() const { return order_; }
    int channels() const { return channels_; }
    const Eigen::VectorXd& coefficients() const { return coeffs_; }
    Eigen::VectorXd& coefficients() { return coeffs_; }

    Eigen::Index level_offset(int level) const;
    Eigen::Index level_size(int level) const;

    double dot(const SigTensor& other) const;
    double level_dot(const SigTensor& other, int level) const;

    /// Chen product with the signature of a straight segment with increment u
    /// (levels of exp(u) are u^{otimes n}/n!), truncated at this order.
    void fold_segment(const Eigen::VectorXd& u);

    /// Chen (concatenation) product: this becomes the signature of the path
    /// followed by other's path.
    void chen_multiply(const SigTensor& other);

private:
    int channels_;
    int order_;
    std::vector<Eigen::Index> offsets_; // offsets_[k] = start of level k
    Eigen::VectorXd coeffs_;
};

/// Iterated-integral signature of the piecewise-linear path, truncated at
/// the given order. order 0 yields the scalar tensor (1).
SigTensor truncated_signature(const Path& path, int order);

/// Second-order Goursat finite-difference solution of the signature-kernel
/// PDE on a grid refined 2^dyadic_order-fold per increment, restricted back
/// to the coarse grid. Entry (i, j) is the untruncated signature kernel of
/// prefix(x, i) against prefix(y, j); row and column 0 are 1.
Eigen::MatrixXd sig_kernel_grid(const Path& x, const Path& y, int dyadic_order);

/// Explicit reservoir weights for the randomized-signature CDE.
struct RandomizedSigWeights {
    std::vector<Eigen::MatrixXd> A; // d matrices, M x M
    std::vector<Eigen::VectorXd> b; // d shifts, M
    Eigen::VectorXd z0;             // initial state, M

    static RandomizedSigWeights draw(std::uint64_t seed, int reservoir_dim, int channels);
};

Eigen::VectorXd randomized_signature(const Path& path, const RandomizedSigWeights& weights,
                                     Activation activation);
Eigen::VectorXd randomized_signature(const Path& path, const KernelSpec& spec);

/// Scalar kernel value kappa(x, y) dispatched on the spec variant.
double kernel_eval(const KernelSpec& spec, const Path& x, const Path& y);

} // namespace ktrade
