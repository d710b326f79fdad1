#include "ktrade/pnl_kernel.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <cmath>

using namespace ktrade;

namespace {

EmbeddingSpec trivial_embedding() {
    EmbeddingSpec e;
    e.time_augment = false;
    e.scale_gamma = 1.0;
    e.basepoint = Basepoint::None;
    return e;
}

// Brute-force oracle: per-prefix kernel evaluations, no grid reuse.
double kphi_naive(const KernelSpec& kspec, const EmbeddingSpec& espec, const OperatorLift& lift,
                  const Path& x, const Path& y) {
    const Path ex = embed(x, espec);
    const Path ey = embed(y, espec);
    const Eigen::MatrixXd incx = x.increments();
    const Eigen::MatrixXd incy = y.increments();
    double sum = 0.0;
    for (Eigen::Index i = 0; i < incx.rows(); ++i) {
        for (Eigen::Index j = 0; j < incy.rows(); ++j) {
            const double kappa = kernel_eval(kspec, ex.prefix(i), ey.prefix(j));
            sum += kappa * incx.row(i).dot((lift.A * incy.row(j).transpose()));
        }
    }
    return sum;
}

} // namespace

TEST_CASE("operator lift validation") {
    OperatorLift bad{Eigen::MatrixXd::Zero(2, 2)};
    bad.A << 1, 0.5, -0.5, 1; // not symmetric
    CHECK_THROWS(bad.validate());
    OperatorLift neg{-Eigen::MatrixXd::Identity(2, 2)};
    CHECK_THROWS(neg.validate());
    CHECK_NOTHROW(OperatorLift::identity(3).validate());
}

TEST_CASE("kphi pair basics") {
    const KernelSpec kspec = KernelSpec::sig_pde(1);
    const EmbeddingSpec espec = trivial_embedding();

    SUBCASE("constant comparison path gives zero") {
        Rng rng(1);
        const Path x = ktest::random_path(rng, 5, 1, 0.3);
        const Path y = ktest::single_channel({0, 1, 2}, {2, 2, 2});
        CHECK(kphi_pair(kspec, espec, OperatorLift::identity(1), x, y) == 0.0);
    }
    SUBCASE("single increments reduce to the increment product") {
        const Path x = ktest::single_channel({0, 1}, {0, 0.4});
        const Path y = ktest::single_channel({0, 1}, {0, -0.3});
        const double v = kphi_pair(kspec, espec, OperatorLift::identity(1), x, y);
        CHECK(v == doctest::Approx(0.4 * -0.3).epsilon(1e-14));
    }
}

TEST_CASE("kphi pair matches the naive double loop") {
    Rng rng(7);
    EmbeddingSpec espec;
    espec.time_augment = true;
    espec.basepoint = Basepoint::TranslateToZero;
    espec.scale_gamma = 0.8;
    OperatorLift lift{Eigen::MatrixXd::Zero(2, 2)};
    lift.A << 1.0, 0.2, 0.2, 2.0;

    for (const auto& kspec : {KernelSpec::sig_pde(1), KernelSpec::truncated_sig(5),
                              KernelSpec::randomized_sig(12, Activation::Tanh, 3)}) {
        const Path x = ktest::random_path(rng, 6, 2, 0.3);
        const Path y = ktest::random_path(rng, 6, 2, 0.3);
        EmbeddingSpec pinned = espec;
        pinned.time_horizon = x.times().back();
        const double fast = kphi_pair(kspec, pinned, lift, x, y);
        const double slow = kphi_naive(kspec, pinned, lift, x, y);
        CHECK(fast == doctest::Approx(slow).epsilon(1e-10));
    }
}

TEST_CASE("gram matrix") {
    Rng rng(11);
    const PathBatch batch = ktest::random_batch(rng, 5, 5, 2, 0.25);
    const KernelSpec kspec = KernelSpec::sig_pde(1);
    EmbeddingSpec espec;
    espec.time_horizon = batch.paths.front().times().back();
    const OperatorLift lift = OperatorLift::identity(2);

    const GramMatrix gram = kphi_gram(kspec, espec, lift, batch);

    SUBCASE("exact symmetry and pairwise agreement") {
        CHECK((gram.values - gram.values.transpose()).cwiseAbs().maxCoeff() == 0.0);
        for (std::size_t i = 0; i < 5; ++i) {
            for (std::size_t j = 0; j < 5; ++j) {
                const double pair = kphi_pair(kspec, espec, lift, batch.paths[i], batch.paths[j]);
                // pairwise evaluation order may differ from the mirrored fill
                CHECK(gram.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) ==
                      doctest::Approx(pair).epsilon(1e-12));
            }
        }
    }
    SUBCASE("psd up to round-off") {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram.values, Eigen::EigenvaluesOnly);
        CHECK(es.eigenvalues().minCoeff() >= -1e-8 * std::abs(gram.values.trace()));
    }
    SUBCASE("single constant path gives the 1x1 zero matrix") {
        const PathBatch one({ktest::single_channel({0, 1, 2}, {1, 1, 1})}, "const");
        const GramMatrix g = kphi_gram(kspec, trivial_embedding(), OperatorLift::identity(1), one);
        CHECK(g.values(0, 0) == 0.0);
    }
    SUBCASE("fingerprint tracks content") {
        PathBatch other = batch;
        Eigen::MatrixXd v = other.paths[0].values();
        v(1, 0) += 1e-9;
        other.paths[0] = Path(other.paths[0].times(), std::move(v));
        const GramMatrix g2 = kphi_gram(kspec, espec, lift, other);
        CHECK(g2.fingerprint != gram.fingerprint);
    }
}

TEST_CASE("gamma map") {
    const KernelSpec kspec = KernelSpec::sig_pde(1);
    const EmbeddingSpec espec = trivial_embedding();

    SUBCASE("constant co-location paths give zero") {
        Rng rng(3);
        const Path live = ktest::random_path(rng, 4, 1, 0.3);
        const PathBatch batch({ktest::single_channel({0, 1, 2}, {5, 5, 5}),
                               ktest::single_channel({0, 1}, {2, 2})},
                              "const");
        const GammaMatrix g = gamma_map(kspec, espec, OperatorLift::identity(1), live, batch);
        CHECK(g.values.cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("single-increment self column") {
        const Path live = ktest::single_channel({0, 1}, {0, 0.4});
        const PathBatch batch({live}, "one");
        const GammaMatrix g = gamma_map(kspec, espec, OperatorLift::identity(1), live, batch);
        // one term: kappa(live, prefix_0) * dY = 1 * 0.4
        CHECK(g.values(0, 0) == doctest::Approx(0.4).epsilon(1e-14));
        CHECK(g.prefix_index == 1);
    }
}

TEST_CASE("gamma / kphi exchange identity") {
    Rng rng(13);
    const KernelSpec kspec = KernelSpec::sig_pde(1);
    EmbeddingSpec espec;
    espec.basepoint = Basepoint::TranslateToZero;
    espec.scale_gamma = 0.9;
    const PathBatch batch = ktest::random_batch(rng, 4, 6, 2, 0.3);
    espec = with_pinned_horizon(espec, batch);
    OperatorLift lift{Eigen::MatrixXd::Zero(2, 2)};
    lift.A << 1.5, -0.3, -0.3, 0.8;

    const Path live = ktest::random_path(rng, 6, 2, 0.3);
    Eigen::VectorXd alpha(4);
    alpha << 0.7, -1.2, 0.4, 2.0;

    // sum_t <Gamma_t alpha, dX_t> must equal alpha^T K_Phi(Y, live).
    double lhs = 0.0;
    const Eigen::MatrixXd inc = live.increments();
    for (Eigen::Index t = 0; t < live.length(); ++t) {
        const GammaMatrix g = gamma_map(kspec, espec, lift, live.prefix(t), batch);
        lhs += (g.values * alpha).dot(inc.row(t).transpose());
    }

    double rhs = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        rhs += alpha(static_cast<Eigen::Index>(i)) *
               kphi_pair(kspec, espec, lift, batch.paths[i], live);
    }
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-8));
}

TEST_CASE("gamma diagonal reproduces the gram diagonal") {
    Rng rng(17);
    const KernelSpec kspec = KernelSpec::sig_pde(1);
    EmbeddingSpec espec;
    const PathBatch batch = ktest::random_batch(rng, 3, 5, 2, 0.3);
    espec = with_pinned_horizon(espec, batch);
    const OperatorLift lift = OperatorLift::identity(2);
    const GramMatrix gram = kphi_gram(kspec, espec, lift, batch);

    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Path& xi = batch.paths[i];
        const Eigen::MatrixXd inc = xi.increments();
        double acc = 0.0;
        for (Eigen::Index t = 0; t < xi.length(); ++t) {
            const GammaMatrix g = gamma_map(kspec, espec, lift, xi.prefix(t), batch);
            acc += g.values.col(static_cast<Eigen::Index>(i)).dot(inc.row(t).transpose());
        }
        CHECK(acc == doctest::Approx(gram.values(static_cast<Eigen::Index>(i),
                                                 static_cast<Eigen::Index>(i)))
                         .epsilon(1e-8));
    }
}

TEST_CASE("gamma series matches per-prefix gamma bitwise") {
    Rng rng(19);
    const KernelSpec kspec = KernelSpec::sig_pde(1);
    EmbeddingSpec espec;
    const PathBatch batch = ktest::random_batch(rng, 3, 5, 1, 0.3);
    espec = with_pinned_horizon(espec, batch);
    const OperatorLift lift = OperatorLift::identity(1);
    const Path live = ktest::random_path(rng, 5, 1, 0.3);

    const auto series = gamma_series(kspec, espec, lift, live, batch);
    REQUIRE(series.size() == 6);
    for (Eigen::Index t = 0; t <= live.length(); ++t) {
        const GammaMatrix g = gamma_map(kspec, espec, lift, live.prefix(t), batch);
        CHECK(ktest::exact_eq(series[static_cast<std::size_t>(t)], g.values));
    }
}

TEST_CASE("kphi scales linearly under compensated embedding") {
    // Scaling asset values by c with gamma -> gamma/c leaves the embedded
    // path unchanged, so only the raw increments scale: kphi scales by c.
    Rng rng(23);
    const KernelSpec kspec = KernelSpec::sig_pde(1);
    const double c = 2.0;
    EmbeddingSpec espec;
    espec.time_augment = true;
    espec.basepoint = Basepoint::TranslateToZero;
    espec.scale_gamma = 0.5;
    const Path x = ktest::random_path(rng, 6, 2, 0.3);
    const Path y = ktest::random_path(rng, 6, 2, 0.3);
    espec.time_horizon = x.times().back();

    EmbeddingSpec compensated = espec;
    compensated.scale_gamma = espec.scale_gamma / c;
    const Path cx(x.times(), c * x.values());
    const Path cy(y.times(), c * y.values());

    const OperatorLift lift = OperatorLift::identity(2);
    const double base = kphi_pair(kspec, espec, lift, x, y);
    const double scaled_x = kphi_pair(kspec, compensated, lift, cx, y);
    CHECK(scaled_x == doctest::Approx(c * base).epsilon(1e-12));
    const double scaled_both = kphi_pair(kspec, compensated, lift, cx, cy);
    CHECK(scaled_both == doctest::Approx(c * c * base).epsilon(1e-12));
}

TEST_CASE("nystrom approximation") {
    Rng rng(31);
    const KernelSpec kspec = KernelSpec::sig_pde(1);
    EmbeddingSpec espec;
    const PathBatch batch = ktest::random_batch(rng, 8, 5, 2, 0.3);
    espec = with_pinned_horizon(espec, batch);
    const OperatorLift lift = OperatorLift::identity(2);
    const GramMatrix full = kphi_gram(kspec, espec, lift, batch);

    SUBCASE("all landmarks reproduce the gram") {
        std::vector<Eigen::Index> all{0, 1, 2, 3, 4, 5, 6, 7};
        std::size_t evals = 0;
        const GramMatrix approx = nystrom_gram(kspec, espec, lift, batch, all, &evals);
        CHECK(evals == 64);
        CHECK((approx.values - full.values).cwiseAbs().maxCoeff() < 1e-8);
    }
    SUBCASE("single landmark gives rank one") {
        const GramMatrix approx = nystrom_gram(kspec, espec, lift, batch, {2});
        const Eigen::VectorXd c = full.values.col(2);
        const Eigen::MatrixXd expected = c * c.transpose() / full.values(2, 2);
        CHECK((approx.values - expected).cwiseAbs().maxCoeff() < 1e-10);
    }
    SUBCASE("half landmarks cap the rank") {
        const auto landmarks = random_landmarks(8, 4, 99);
        std::size_t evals = 0;
        const GramMatrix approx = nystrom_gram(kspec, espec, lift, batch, landmarks, &evals);
        CHECK(evals <= 8 * 4);
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(approx.values);
        const auto& sv = svd.singularValues();
        for (Eigen::Index i = 4; i < sv.size(); ++i) {
            CHECK(sv(i) <= 1e-10 * sv(0));
        }
    }
    SUBCASE("bad landmark sets") {
        CHECK_THROWS(nystrom_gram(kspec, espec, lift, batch, {}));
        CHECK_THROWS(nystrom_gram(kspec, espec, lift, batch, {1, 1}));
        CHECK_THROWS(nystrom_gram(kspec, espec, lift, batch, {11}));
    }
}
