#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>

namespace ktrade {

// Moore-Penrose pseudo-inverse solve, singular values below
// rcond * sigma_max are treated as zero.
Eigen::VectorXd pinv_solve(const Eigen::MatrixXd& m, const Eigen::VectorXd& rhs,
                           double rcond = 1e-12);

// Pseudo-inverse of a symmetric matrix via eigendecomposition, eigenvalues
// with |lambda| below rcond * |lambda|_max are dropped.
Eigen::MatrixXd pinv_symmetric(const Eigen::MatrixXd& m, double rcond = 1e-12);

double mean_of(const Eigen::VectorXd& v);
// Population variance (1/n), matching the empirical-measure normalisation
// used by the PnL variance formulas.
double variance_of(const Eigen::VectorXd& v);
double correlation_of(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// FNV-1a over raw bytes; used for content fingerprints.
class Fnv1a {
public:
    void update(const void* data, std::size_t len);
    void update(double x);
    void update(std::uint64_t x);
    void update(const std::string& s);
    std::uint64_t digest() const { return hash_; }
    std::string hex() const;

private:
    std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

// Shortest round-trip decimal formatting ("%.17g") for CSV output.
std::string format_full(double x);

} // namespace ktrade
