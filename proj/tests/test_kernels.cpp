#include "ktrade/kernels.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <cmath>

using namespace ktrade;

namespace {

// Independent oracle for the linear-path kernel: sum_n (ab)^n / (n!)^2.
double linear_path_kernel(double ab) {
    double sum = 0.0;
    double term = 1.0;
    for (int n = 0; n < 64; ++n) {
        sum += term;
        term *= ab / (static_cast<double>(n + 1) * static_cast<double>(n + 1));
    }
    return sum;
}

} // namespace

TEST_CASE("truncated signature of a single segment") {
    const Path p = ktest::single_channel({0, 1}, {0, 0.3});
    const SigTensor sig = truncated_signature(p, 3);
    const auto& c = sig.coefficients();
    REQUIRE(c.size() == 4);
    CHECK(c(0) == doctest::Approx(1.0));
    CHECK(c(1) == doctest::Approx(0.3));
    CHECK(c(2) == doctest::Approx(0.045));
    CHECK(c(3) == doctest::Approx(0.0045));
}

TEST_CASE("signature basics") {
    Rng rng(17);
    const Path p = ktest::random_path(rng, 9, 2, 0.4);
    const SigTensor sig = truncated_signature(p, 4);
    CHECK(sig.coefficients()(0) == 1.0); // empty word

    CHECK(truncated_signature(p, 0).coefficients().size() == 1);
    CHECK_THROWS(truncated_signature(p, -1));
}

TEST_CASE("chen identity") {
    // Signature of a two-increment path equals the Chen product of the two
    // single-increment signatures.
    Rng rng(29);
    for (int rep = 0; rep < 20; ++rep) {
        const int d = 1 + static_cast<int>(rng.next_u64() % 3);
        Eigen::MatrixXd values(3, d);
        for (Eigen::Index i = 0; i < 3; ++i) {
            for (Eigen::Index c = 0; c < d; ++c) values(i, c) = 0.5 * rng.normal();
        }
        const Path two({0, 1, 2}, values);
        const SigTensor whole = truncated_signature(two, 5);

        SigTensor product = truncated_signature(two.prefix(1), 5);
        Eigen::MatrixXd tail(2, d);
        tail.row(0) = values.row(1);
        tail.row(1) = values.row(2);
        product.chen_multiply(truncated_signature(Path({1, 2}, tail), 5));

        CHECK((whole.coefficients() - product.coefficients()).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("sig kernel grid basics") {
    SUBCASE("constant path gives all-ones grid") {
        const Path x = ktest::single_channel({0, 1, 2}, {1, 1, 1});
        Rng rng(5);
        const Path y = ktest::random_path(rng, 4, 1, 0.3);
        const Eigen::MatrixXd grid = sig_kernel_grid(x, y, 2);
        CHECK((grid.array() - 1.0).abs().maxCoeff() < 1e-15);
    }
    SUBCASE("boundary rows are one") {
        Rng rng(6);
        const Path x = ktest::random_path(rng, 5, 2, 0.2);
        const Path y = ktest::random_path(rng, 7, 2, 0.2);
        const Eigen::MatrixXd grid = sig_kernel_grid(x, y, 1);
        CHECK((grid.row(0).array() - 1.0).abs().maxCoeff() == 0.0);
        CHECK((grid.col(0).array() - 1.0).abs().maxCoeff() == 0.0);
    }
    SUBCASE("channel mismatch") {
        Rng rng(7);
        const Path x = ktest::random_path(rng, 3, 1);
        const Path y = ktest::random_path(rng, 3, 2);
        CHECK_THROWS(sig_kernel_grid(x, y, 1));
    }
    SUBCASE("divergence guard") {
        const Path x = ktest::single_channel({0, 1}, {0, 1e60});
        CHECK_THROWS_AS(sig_kernel_grid(x, x, 0), std::runtime_error);
    }
}

TEST_CASE("sig kernel closed form on linear paths") {
    const Path a = ktest::single_channel({0, 0.25, 0.5, 0.75, 1}, {0, 0.075, 0.15, 0.225, 0.3});
    const Path b = ktest::single_channel({0, 0.25, 0.5, 0.75, 1}, {0, 0.125, 0.25, 0.375, 0.5});
    const double expected = linear_path_kernel(0.3 * 0.5);
    CHECK(expected == doctest::Approx(1.15572).epsilon(1e-4));
    const Eigen::MatrixXd grid = sig_kernel_grid(a, b, 2);
    CHECK(std::abs(grid(4, 4) - expected) < 1e-4);
}

TEST_CASE("sig kernel pde matches truncated oracle") {
    Rng rng(101);
    for (int rep = 0; rep < 10; ++rep) {
        const Path x = ktest::random_path(rng, 8, 2, 0.05);
        const Path y = ktest::random_path(rng, 8, 2, 0.05);
        const double pde = kernel_eval(KernelSpec::sig_pde(3), x, y);
        const double oracle = kernel_eval(KernelSpec::truncated_sig(12), x, y);
        CHECK(std::abs(pde - oracle) / std::abs(oracle) < 1e-6);
    }
}

TEST_CASE("kernel_eval variants") {
    SUBCASE("truncated order 1 is 1 + <u, v>") {
        const Path x = ktest::single_channel({0, 1, 2}, {0, 0.2, 0.5});
        const Path y = ktest::single_channel({0, 1}, {0, -0.4});
        const double k = kernel_eval(KernelSpec::truncated_sig(1), x, y);
        CHECK(k == doctest::Approx(1.0 + 0.5 * (-0.4)).epsilon(1e-14));
    }
    SUBCASE("diagonal at least one for translated paths") {
        Rng rng(55);
        for (int rep = 0; rep < 5; ++rep) {
            const Path x = ktest::random_path(rng, 6, 2, 0.3);
            CHECK(kernel_eval(KernelSpec::sig_pde(1), x, x) >= 1.0);
            CHECK(kernel_eval(KernelSpec::truncated_sig(6), x, x) >= 1.0);
        }
    }
    SUBCASE("exact symmetry") {
        Rng rng(56);
        const Path x = ktest::random_path(rng, 7, 3, 0.2);
        const Path y = ktest::random_path(rng, 5, 3, 0.2);
        for (const auto& spec :
             {KernelSpec::sig_pde(2), KernelSpec::truncated_sig(5),
              KernelSpec::randomized_sig(16, Activation::Tanh, 9)}) {
            CHECK(kernel_eval(spec, x, y) == kernel_eval(spec, y, x));
        }
    }
}

TEST_CASE("randomized signature") {
    SUBCASE("zero-increment path returns the initial state") {
        const Path p = ktest::single_channel({0, 1, 2}, {3, 3, 3});
        const KernelSpec spec = KernelSpec::randomized_sig(8, Activation::Tanh, 42);
        const auto w = RandomizedSigWeights::draw(spec.seed, spec.reservoir_dim, 1);
        const Eigen::VectorXd z = randomized_signature(p, spec);
        CHECK((z - w.z0).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("determinism") {
        Rng rng(77);
        const Path p = ktest::random_path(rng, 10, 2, 0.3);
        const KernelSpec spec = KernelSpec::randomized_sig(32, Activation::Tanh, 123);
        const Eigen::VectorXd a = randomized_signature(p, spec);
        const Eigen::VectorXd b = randomized_signature(p, spec);
        CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("hand-integrated degenerate case") {
        // M = 1, identity activation, A = 0, b = 1, z = 0: Z_T = total increment.
        RandomizedSigWeights w;
        w.A = {Eigen::MatrixXd::Zero(1, 1)};
        w.b = {Eigen::VectorXd::Ones(1)};
        w.z0 = Eigen::VectorXd::Zero(1);
        const Path p = ktest::single_channel({0, 1, 2}, {0, 0.3, 0.7});
        const Eigen::VectorXd z = randomized_signature(p, w, Activation::Identity);
        CHECK(z(0) == doctest::Approx(0.7).epsilon(1e-15));
    }
    SUBCASE("degenerate CDE kernel value") {
        // A_i = 0, b_i = e_i, z = 0, identity activation: Z_T = total increment
        // vector, so the kernel is the dot product of total increments.
        const int d = 2, m = 2;
        RandomizedSigWeights w;
        w.z0 = Eigen::VectorXd::Zero(m);
        for (int i = 0; i < d; ++i) {
            w.A.push_back(Eigen::MatrixXd::Zero(m, m));
            w.b.push_back(Eigen::VectorXd::Unit(m, i));
        }
        Rng rng(91);
        const Path x = ktest::random_path(rng, 5, d, 0.4);
        const Path y = ktest::random_path(rng, 6, d, 0.4);
        const Eigen::VectorXd zx = randomized_signature(x, w, Activation::Identity);
        const Eigen::VectorXd zy = randomized_signature(y, w, Activation::Identity);
        const Eigen::VectorXd tx = (x.values().row(5) - x.values().row(0)).transpose();
        const Eigen::VectorXd ty = (y.values().row(6) - y.values().row(0)).transpose();
        CHECK(zx.dot(zy) == doctest::Approx(tx.dot(ty)).epsilon(1e-12));
    }
}

TEST_CASE("kernel matrix is numerically psd") {
    Rng rng(202);
    for (const auto& spec : {KernelSpec::sig_pde(1), KernelSpec::truncated_sig(4),
                             KernelSpec::randomized_sig(24, Activation::Tanh, 5)}) {
        const PathBatch batch = ktest::random_batch(rng, 8, 6, 2, 0.2);
        Eigen::MatrixXd k(8, 8);
        for (int i = 0; i < 8; ++i) {
            for (int j = i; j < 8; ++j) {
                k(i, j) = k(j, i) = kernel_eval(spec, batch.paths[static_cast<std::size_t>(i)],
                                                batch.paths[static_cast<std::size_t>(j)]);
            }
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k, Eigen::EigenvaluesOnly);
        CHECK(es.eigenvalues().minCoeff() >= -1e-8 * k.trace());
    }
}

TEST_CASE("truncated kernel scaling law per level") {
    Rng rng(303);
    const Path x = ktest::random_path(rng, 6, 2, 0.3);
    const Path y = ktest::random_path(rng, 6, 2, 0.3);
    const double gamma = 0.6;
    const Path gx(x.times(), gamma * x.values());
    const Path gy(y.times(), gamma * y.values());

    const int order = 5;
    const SigTensor sx = truncated_signature(x, order);
    const SigTensor sy = truncated_signature(y, order);
    const SigTensor sgx = truncated_signature(gx, order);
    const SigTensor sgy = truncated_signature(gy, order);

    double expected = 0.0;
    for (int level = 0; level <= order; ++level) {
        const double factor = std::pow(gamma, 2 * level);
        expected += factor * sx.level_dot(sy, level);
        // each level scales as gamma^(2k) individually
        CHECK(sgx.level_dot(sgy, level) ==
              doctest::Approx(factor * sx.level_dot(sy, level)).epsilon(1e-10));
    }
    CHECK(sgx.dot(sgy) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("dyadic refinement converges monotonically") {
    Rng rng(404);
    const Path x = ktest::random_path(rng, 6, 2, 0.25);
    const Path y = ktest::random_path(rng, 6, 2, 0.25);
    std::vector<double> vals;
    for (int d = 0; d <= 4; ++d) {
        vals.push_back(sig_kernel_grid(x, y, d)(6, 6));
    }
    for (std::size_t i = 0; i + 2 < vals.size(); ++i) {
        CHECK(std::abs(vals[i + 2] - vals[i + 1]) <= std::abs(vals[i + 1] - vals[i]));
    }
}

TEST_CASE("kernel spec validation") {
    KernelSpec s = KernelSpec::sig_pde(1);
    s.dyadic_order = 6;
    CHECK_THROWS(s.validate());
    CHECK_THROWS(KernelSpec::truncated_sig(0));
    CHECK_THROWS(KernelSpec::truncated_sig(13));
    CHECK_THROWS(KernelSpec::randomized_sig(0, Activation::Tanh, 1));
}
