#pragma once

#include "ktrade/path.hpp"
#include "ktrade/rng.hpp"

#include <Eigen/Dense>

#include <vector>

namespace ktest {

// Random-walk path on a uniform grid, increments scaled to the given size.
inline ktrade::Path random_path(ktrade::Rng& rng, Eigen::Index steps, Eigen::Index channels,
                                double increment_scale = 0.1, double dt = 1.0) {
    std::vector<double> times(static_cast<std::size_t>(steps) + 1);
    for (std::size_t i = 0; i < times.size(); ++i) times[i] = static_cast<double>(i) * dt;
    Eigen::MatrixXd values(steps + 1, channels);
    values.row(0).setZero();
    for (Eigen::Index t = 0; t < steps; ++t) {
        for (Eigen::Index c = 0; c < channels; ++c) {
            values(t + 1, c) = values(t, c) + increment_scale * rng.normal();
        }
    }
    return ktrade::Path(std::move(times), std::move(values));
}

inline ktrade::PathBatch random_batch(ktrade::Rng& rng, std::size_t n, Eigen::Index steps,
                                      Eigen::Index channels, double increment_scale = 0.1) {
    std::vector<ktrade::Path> paths;
    paths.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        paths.push_back(random_path(rng, steps, channels, increment_scale));
    }
    return ktrade::PathBatch(std::move(paths), "test");
}

inline bool exact_eq(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           (a.rows() == 0 || (a - b).cwiseAbs().maxCoeff() == 0.0);
}

inline ktrade::Path single_channel(std::vector<double> times, std::vector<double> vals) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(vals.size()), 1);
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, 0) = vals[static_cast<std::size_t>(i)];
    return ktrade::Path(std::move(times), std::move(m));
}

} // namespace ktest
