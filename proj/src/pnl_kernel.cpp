#include "ktrade/pnl_kernel.hpp"

#include "ktrade/numeric.hpp"
#include "ktrade/parallel.hpp"
#include "ktrade/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace ktrade {

OperatorLift OperatorLift::identity(Eigen::Index d) {
    return OperatorLift{Eigen::MatrixXd::Identity(d, d)};
}

void OperatorLift::validate() const {
    if (A.rows() != A.cols() || A.rows() < 1) {
        throw std::invalid_argument("operator lift: A must be square");
    }
    if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
        throw std::invalid_argument("operator lift: A must be symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-10) {
        throw std::invalid_argument("operator lift: A must be positive semidefinite");
    }
}

namespace {

void hash_kernel_spec(Fnv1a& h, const KernelSpec& k) {
    h.update(static_cast<std::uint64_t>(k.variant));
    switch (k.variant) {
        case KernelVariant::SigPde:
            h.update(static_cast<std::uint64_t>(k.dyadic_order));
            break;
        case KernelVariant::TruncatedSig:
            h.update(static_cast<std::uint64_t>(k.order));
            break;
        case KernelVariant::RandomizedSig:
            h.update(static_cast<std::uint64_t>(k.reservoir_dim));
            h.update(static_cast<std::uint64_t>(k.activation));
            h.update(k.seed);
            break;
    }
}

void hash_embedding_spec(Fnv1a& h, const EmbeddingSpec& e) {
    h.update(static_cast<std::uint64_t>(e.time_augment));
    h.update(e.scale_gamma);
    h.update(static_cast<std::uint64_t>(e.basepoint));
    h.update(static_cast<std::uint64_t>(e.signal_channels.has_value()));
    if (e.signal_channels) h.update(path_fingerprint(*e.signal_channels));
    h.update(static_cast<std::uint64_t>(e.time_horizon.has_value()));
    if (e.time_horizon) h.update(*e.time_horizon);
}

// Everything pair evaluations need from one path: the embedded path for the
// kernel and the raw increments for the Ito contraction. Non-PDE variants
// also carry per-prefix feature rows so kernel values reduce to dot products.
struct PreparedPath {
    Path embedded;
    Eigen::MatrixXd raw_increments; // L x d
    Eigen::MatrixXd prefix_features; // (L+1) x F, non-PDE variants only
};

PreparedPath prepare_path(const KernelSpec& kspec, const EmbeddingSpec& espec, const Path& p) {
    PreparedPath out;
    out.embedded = embed(p, espec);
    out.raw_increments = p.increments();

    const Eigen::Index n = out.embedded.values().rows();
    switch (kspec.variant) {
        case KernelVariant::SigPde:
            break;
        case KernelVariant::TruncatedSig: {
            SigTensor sig(static_cast<int>(out.embedded.channels()), kspec.order);
            const Eigen::MatrixXd inc = out.embedded.increments();
            out.prefix_features.resize(n, sig.coefficients().size());
            out.prefix_features.row(0) = sig.coefficients().transpose();
            for (Eigen::Index i = 0; i < inc.rows(); ++i) {
                sig.fold_segment(inc.row(i).transpose());
                out.prefix_features.row(i + 1) = sig.coefficients().transpose();
            }
            break;
        }
        case KernelVariant::RandomizedSig: {
            const auto weights = RandomizedSigWeights::draw(
                kspec.seed, kspec.reservoir_dim, static_cast<int>(out.embedded.channels()));
            Eigen::VectorXd z = weights.z0;
            const Eigen::MatrixXd inc = out.embedded.increments();
            out.prefix_features.resize(n, z.size());
            out.prefix_features.row(0) = z.transpose();
            Eigen::VectorXd drive(z.size());
            for (Eigen::Index k = 0; k < inc.rows(); ++k) {
                drive.setZero();
                for (Eigen::Index c = 0; c < inc.cols(); ++c) {
                    Eigen::VectorXd pre = weights.A[static_cast<std::size_t>(c)] * z +
                                          weights.b[static_cast<std::size_t>(c)];
                    if (kspec.activation == Activation::Tanh) pre = pre.array().tanh().matrix();
                    drive += pre * inc(k, c);
                }
                z += drive;
                out.prefix_features.row(k + 1) = z.transpose();
            }
            break;
        }
    }
    return out;
}

Eigen::MatrixXd prefix_kernels(const KernelSpec& kspec, const PreparedPath& a,
                               const PreparedPath& b) {
    if (kspec.variant == KernelVariant::SigPde) {
        return sig_kernel_grid(a.embedded, b.embedded, kspec.dyadic_order);
    }
    return a.prefix_features * b.prefix_features.transpose();
}

double kphi_prepared(const KernelSpec& kspec, const OperatorLift& lift, const PreparedPath& a,
                     const PreparedPath& b) {
    const Eigen::Index la = a.raw_increments.rows();
    const Eigen::Index lb = b.raw_increments.rows();
    if (la == 0 || lb == 0) return 0.0;

    const Eigen::MatrixXd kappa = prefix_kernels(kspec, a, b);
    const Eigen::MatrixXd g = a.raw_increments * lift.A * b.raw_increments.transpose();

    double sum = 0.0;
    for (Eigen::Index i = 0; i < la; ++i) {
        for (Eigen::Index j = 0; j < lb; ++j) sum += kappa(i, j) * g(i, j);
    }
    if (!std::isfinite(sum)) throw std::runtime_error("kphi: non-finite value");
    return sum;
}

void check_batch(const PathBatch& batch, const OperatorLift& lift) {
    if (batch.paths.empty()) throw std::invalid_argument("kphi: empty batch");
    lift.validate();
    if (lift.A.rows() != batch.channels()) {
        throw std::invalid_argument("kphi: lift dimension does not match channels");
    }
}

std::vector<PreparedPath> prepare_batch(const KernelSpec& kspec, const EmbeddingSpec& espec,
                                        const PathBatch& batch) {
    std::vector<PreparedPath> prepared(batch.size());
    parallel_for(batch.size(),
                 [&](std::size_t i) { prepared[i] = prepare_path(kspec, espec, batch.paths[i]); });
    return prepared;
}

} // namespace

std::string kphi_fingerprint(const KernelSpec& kspec, const EmbeddingSpec& espec,
                             const OperatorLift& lift, const PathBatch& batch) {
    Fnv1a h;
    hash_kernel_spec(h, kspec);
    hash_embedding_spec(h, espec);
    for (Eigen::Index i = 0; i < lift.A.rows(); ++i) {
        for (Eigen::Index j = 0; j < lift.A.cols(); ++j) h.update(lift.A(i, j));
    }
    h.update(batch_fingerprint(batch));
    return h.hex();
}

Eigen::MatrixXd prefix_kernel_matrix(const KernelSpec& kspec, const EmbeddingSpec& espec,
                                     const Path& x, const Path& y) {
    kspec.validate();
    const PreparedPath a = prepare_path(kspec, espec, x);
    const PreparedPath b = prepare_path(kspec, espec, y);
    return prefix_kernels(kspec, a, b);
}

double kphi_pair(const KernelSpec& kspec, const EmbeddingSpec& espec, const OperatorLift& lift,
                 const Path& x, const Path& y) {
    kspec.validate();
    lift.validate();
    if (x.channels() != y.channels()) throw std::invalid_argument("kphi: channel mismatch");
    if (lift.A.rows() != x.channels()) {
        throw std::invalid_argument("kphi: lift dimension does not match channels");
    }
    const PreparedPath a = prepare_path(kspec, espec, x);
    const PreparedPath b = prepare_path(kspec, espec, y);
    return kphi_prepared(kspec, lift, a, b);
}

GramMatrix kphi_gram(const KernelSpec& kspec, const EmbeddingSpec& espec,
                     const OperatorLift& lift, const PathBatch& batch) {
    kspec.validate();
    check_batch(batch, lift);
    const auto prepared = prepare_batch(kspec, espec, batch);

    const Eigen::Index n = static_cast<Eigen::Index>(batch.size());
    GramMatrix gram;
    gram.values.resize(n, n);
    gram.fingerprint = kphi_fingerprint(kspec, espec, lift, batch);

    // Upper triangle (i <= j), mirrored, so the result is exactly symmetric.
    std::vector<std::pair<Eigen::Index, Eigen::Index>> cells;
    cells.reserve(static_cast<std::size_t>(n * (n + 1) / 2));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i; j < n; ++j) cells.emplace_back(i, j);
    }
    parallel_for(cells.size(), [&](std::size_t c) {
        const auto [i, j] = cells[c];
        double v;
        try {
            v = kphi_prepared(kspec, lift, prepared[static_cast<std::size_t>(i)],
                              prepared[static_cast<std::size_t>(j)]);
        } catch (const std::exception& e) {
            throw std::runtime_error("kphi_gram: pair (" + std::to_string(i) + ", " +
                                     std::to_string(j) + "): " + e.what());
        }
        gram.values(i, j) = v;
        gram.values(j, i) = v;
    });
    return gram;
}

Eigen::MatrixXd kphi_cross(const KernelSpec& kspec, const EmbeddingSpec& espec,
                           const OperatorLift& lift, const PathBatch& rows,
                           const PathBatch& cols) {
    kspec.validate();
    check_batch(rows, lift);
    check_batch(cols, lift);
    if (rows.channels() != cols.channels()) {
        throw std::invalid_argument("kphi_cross: channel mismatch");
    }
    const auto prep_rows = prepare_batch(kspec, espec, rows);
    const auto prep_cols = prepare_batch(kspec, espec, cols);

    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()),
                        static_cast<Eigen::Index>(cols.size()));
    std::vector<std::pair<std::size_t, std::size_t>> cells;
    cells.reserve(rows.size() * cols.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < cols.size(); ++j) cells.emplace_back(i, j);
    }
    parallel_for(cells.size(), [&](std::size_t c) {
        const auto [i, j] = cells[c];
        out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            kphi_prepared(kspec, lift, prep_rows[i], prep_cols[j]);
    });
    return out;
}

namespace {

Eigen::VectorXd gamma_column(const OperatorLift& lift, const Eigen::MatrixXd& kappa,
                             Eigen::Index live_row, const Eigen::MatrixXd& raw_inc) {
    const Eigen::Index l = raw_inc.rows();
    if (l == 0) return Eigen::VectorXd::Zero(lift.A.rows());
    const Eigen::VectorXd weights = kappa.row(live_row).head(l).transpose();
    return lift.A * (raw_inc.transpose() * weights);
}

} // namespace

GammaMatrix gamma_map(const KernelSpec& kspec, const EmbeddingSpec& espec,
                      const OperatorLift& lift, const Path& live, const PathBatch& batch) {
    kspec.validate();
    check_batch(batch, lift);
    if (live.channels() != batch.channels()) {
        throw std::invalid_argument("gamma_map: channel mismatch");
    }

    const PreparedPath prep_live = prepare_path(kspec, espec, live);
    const Eigen::Index n = static_cast<Eigen::Index>(batch.size());
    const Eigen::Index d = batch.channels();

    GammaMatrix gamma;
    gamma.values.resize(d, n);
    gamma.prefix_index = live.length();

    parallel_for(batch.size(), [&](std::size_t i) {
        const PreparedPath prep = prepare_path(kspec, espec, batch.paths[i]);
        const Eigen::MatrixXd kappa = prefix_kernels(kspec, prep_live, prep);
        gamma.values.col(static_cast<Eigen::Index>(i)) =
            gamma_column(lift, kappa, live.length(), prep.raw_increments);
    });
    if (!gamma.values.allFinite()) throw std::runtime_error("gamma_map: non-finite value");
    return gamma;
}

std::vector<Eigen::MatrixXd> gamma_series(const KernelSpec& kspec, const EmbeddingSpec& espec,
                                          const OperatorLift& lift, const Path& live,
                                          const PathBatch& batch) {
    kspec.validate();
    check_batch(batch, lift);
    if (live.channels() != batch.channels()) {
        throw std::invalid_argument("gamma_series: channel mismatch");
    }

    const PreparedPath prep_live = prepare_path(kspec, espec, live);
    const Eigen::Index n = static_cast<Eigen::Index>(batch.size());
    const Eigen::Index d = batch.channels();
    const Eigen::Index steps = live.length() + 1;

    std::vector<Eigen::MatrixXd> out(static_cast<std::size_t>(steps));
    for (auto& g : out) g.resize(d, n);

    // One prefix-kernel matrix per co-location path covers every live prefix:
    // row t of the matrix is exactly the row a prefix-t gamma_map would use.
    parallel_for(batch.size(), [&](std::size_t i) {
        const PreparedPath prep = prepare_path(kspec, espec, batch.paths[i]);
        const Eigen::MatrixXd kappa = prefix_kernels(kspec, prep_live, prep);
        for (Eigen::Index t = 0; t < steps; ++t) {
            out[static_cast<std::size_t>(t)].col(static_cast<Eigen::Index>(i)) =
                gamma_column(lift, kappa, t, prep.raw_increments);
        }
    });
    return out;
}

GramMatrix nystrom_gram(const KernelSpec& kspec, const EmbeddingSpec& espec,
                        const OperatorLift& lift, const PathBatch& batch,
                        const std::vector<Eigen::Index>& landmarks, std::size_t* pair_evals) {
    kspec.validate();
    check_batch(batch, lift);
    const Eigen::Index n_total = static_cast<Eigen::Index>(batch.size());
    const Eigen::Index n_land = static_cast<Eigen::Index>(landmarks.size());
    if (n_land == 0) throw std::invalid_argument("nystrom: empty landmark set");
    if (n_land > n_total) throw std::invalid_argument("nystrom: too many landmarks");
    {
        std::set<Eigen::Index> unique(landmarks.begin(), landmarks.end());
        if (static_cast<Eigen::Index>(unique.size()) != n_land || *unique.begin() < 0 ||
            *unique.rbegin() >= n_total) {
            throw std::invalid_argument("nystrom: landmark indices must be distinct and in range");
        }
    }

    const auto prepared = prepare_batch(kspec, espec, batch);

    Eigen::MatrixXd c_mat(n_total, n_land);
    std::vector<std::pair<Eigen::Index, Eigen::Index>> cells;
    cells.reserve(static_cast<std::size_t>(n_total * n_land));
    for (Eigen::Index i = 0; i < n_total; ++i) {
        for (Eigen::Index j = 0; j < n_land; ++j) cells.emplace_back(i, j);
    }
    parallel_for(cells.size(), [&](std::size_t c) {
        const auto [i, j] = cells[c];
        c_mat(i, j) = kphi_prepared(kspec, lift, prepared[static_cast<std::size_t>(i)],
                                    prepared[static_cast<std::size_t>(landmarks[static_cast<std::size_t>(j)])]);
    });
    if (pair_evals) *pair_evals = cells.size();

    Eigen::MatrixXd w(n_land, n_land);
    for (Eigen::Index a = 0; a < n_land; ++a) {
        w.row(a) = c_mat.row(landmarks[static_cast<std::size_t>(a)]);
    }
    w = 0.5 * (w + w.transpose());

    GramMatrix gram;
    gram.values = c_mat * pinv_symmetric(w, 1e-12) * c_mat.transpose();
    gram.values = 0.5 * (gram.values + gram.values.transpose());
    gram.fingerprint = kphi_fingerprint(kspec, espec, lift, batch);
    return gram;
}

std::vector<Eigen::Index> random_landmarks(Eigen::Index n_total, Eigen::Index n_landmarks,
                                           std::uint64_t seed) {
    if (n_landmarks < 1 || n_landmarks > n_total) {
        throw std::invalid_argument("random_landmarks: bad landmark count");
    }
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n_total));
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(derive_seed(seed, 0x4c414e44ULL));
    for (std::size_t i = idx.size() - 1; i > 0; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.next_u64() % (i + 1));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(static_cast<std::size_t>(n_landmarks));
    std::sort(idx.begin(), idx.end());
    return idx;
}

} // namespace ktrade
