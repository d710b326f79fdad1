#include "ktrade/numeric.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <stdexcept>

namespace ktrade {

Eigen::VectorXd pinv_solve(const Eigen::MatrixXd& m, const Eigen::VectorXd& rhs,
                           double rcond) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    const double cutoff = sv.size() > 0 ? rcond * sv(0) : 0.0;
    Eigen::VectorXd inv_sv = Eigen::VectorXd::Zero(sv.size());
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        if (sv(i) > cutoff) inv_sv(i) = 1.0 / sv(i);
    }
    return svd.matrixV() * inv_sv.asDiagonal() * (svd.matrixU().transpose() * rhs);
}

Eigen::MatrixXd pinv_symmetric(const Eigen::MatrixXd& m, double rcond) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    if (es.info() != Eigen::Success) {
        throw std::runtime_error("eigendecomposition failed");
    }
    const auto& ev = es.eigenvalues();
    const double cutoff = rcond * ev.cwiseAbs().maxCoeff();
    Eigen::VectorXd inv_ev = Eigen::VectorXd::Zero(ev.size());
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (std::abs(ev(i)) > cutoff) inv_ev(i) = 1.0 / ev(i);
    }
    return es.eigenvectors() * inv_ev.asDiagonal() * es.eigenvectors().transpose();
}

double mean_of(const Eigen::VectorXd& v) {
    if (v.size() == 0) return 0.0;
    return v.mean();
}

double variance_of(const Eigen::VectorXd& v) {
    if (v.size() == 0) return 0.0;
    const double m = v.mean();
    return (v.array() - m).square().sum() / static_cast<double>(v.size());
}

double correlation_of(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() != b.size() || a.size() == 0) {
        throw std::invalid_argument("correlation: size mismatch");
    }
    const double ma = a.mean();
    const double mb = b.mean();
    const Eigen::ArrayXd da = a.array() - ma;
    const Eigen::ArrayXd db = b.array() - mb;
    const double denom = std::sqrt(da.square().sum() * db.square().sum());
    if (denom == 0.0) return 0.0;
    return (da * db).sum() / denom;
}

void Fnv1a::update(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        hash_ ^= p[i];
        hash_ *= 0x100000001b3ULL;
    }
}

void Fnv1a::update(double x) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, sizeof(bits));
    update(&bits, sizeof(bits));
}

void Fnv1a::update(std::uint64_t x) { update(&x, sizeof(x)); }

void Fnv1a::update(const std::string& s) { update(s.data(), s.size()); }

std::string Fnv1a::hex() const {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash_));
    return std::string(buf);
}

std::string format_full(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return std::string(buf);
}

} // namespace ktrade
