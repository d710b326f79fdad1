#include "ktrade/path.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace ktrade;

TEST_CASE("path invariants") {
    CHECK_THROWS(Path({0.0, 0.0}, Eigen::MatrixXd::Zero(2, 1)));  // non-increasing
    CHECK_THROWS(Path({0.0}, Eigen::MatrixXd::Zero(2, 1)));       // size mismatch
    Eigen::MatrixXd bad(2, 1);
    bad << 0.0, std::nan("");
    CHECK_THROWS(Path({0.0, 1.0}, bad));

    const Path p = ktest::single_channel({0, 1, 2}, {0, 1, 3});
    CHECK(p.length() == 2);
    CHECK(p.channels() == 1);
}

TEST_CASE("increments") {
    const Path p = ktest::single_channel({0, 1, 2}, {0, 1, 3});
    const Eigen::MatrixXd inc = p.increments();
    CHECK(inc(0, 0) == doctest::Approx(1.0));
    CHECK(inc(1, 0) == doctest::Approx(2.0));

    const Path c = ktest::single_channel({0, 1, 2}, {4, 4, 4});
    CHECK(c.increments().cwiseAbs().maxCoeff() == 0.0);

    // telescoping
    Rng rng(7);
    const Path r = ktest::random_path(rng, 12, 3);
    const Eigen::VectorXd sum = r.increments().colwise().sum();
    const Eigen::VectorXd diff = (r.values().row(12) - r.values().row(0)).transpose();
    CHECK((sum - diff).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("prefix") {
    Rng rng(3);
    const Path p = ktest::random_path(rng, 6, 2);
    CHECK(ktest::exact_eq(p.prefix(6).values(), p.values()));
    CHECK(p.prefix(0).length() == 0);
    CHECK_THROWS(p.prefix(7));
    CHECK_THROWS(p.prefix(-1));

    // prefix(prefix(p, j), i) == prefix(p, i) for i <= j
    const Path pj = p.prefix(4);
    CHECK(ktest::exact_eq(pj.prefix(2).values(), p.prefix(2).values()));
}

TEST_CASE("embed basics") {
    SUBCASE("identity case") {
        const Path p = ktest::single_channel({0, 1}, {2, 2});
        EmbeddingSpec spec;
        spec.time_augment = false;
        spec.scale_gamma = 1.0;
        spec.basepoint = Basepoint::None;
        const Path e = embed(p, spec);
        CHECK(ktest::exact_eq(e.values(), p.values()));
        CHECK(e.times() == p.times());
    }
    SUBCASE("normalized time channel") {
        const Path p = ktest::single_channel({0, 0.5, 1}, {0, 1, 2});
        EmbeddingSpec spec;
        spec.time_augment = true;
        spec.basepoint = Basepoint::None;
        const Path e = embed(p, spec);
        CHECK(e.channels() == 2);
        CHECK(e.values()(0, 0) == doctest::Approx(0.0));
        CHECK(e.values()(1, 0) == doctest::Approx(0.5));
        CHECK(e.values()(2, 0) == doctest::Approx(1.0));
        CHECK(ktest::exact_eq(e.values().col(1), p.values().col(0)));
    }
    SUBCASE("translate and scale") {
        const Path p = ktest::single_channel({0, 1}, {1, 3});
        EmbeddingSpec spec;
        spec.time_augment = false;
        spec.scale_gamma = 0.5;
        spec.basepoint = Basepoint::TranslateToZero;
        const Path e = embed(p, spec);
        CHECK(e.values()(0, 0) == doctest::Approx(0.0));
        CHECK(e.values()(1, 0) == doctest::Approx(1.0));
    }
    SUBCASE("signal grid mismatch") {
        const Path p = ktest::single_channel({0, 1, 2}, {0, 1, 2});
        EmbeddingSpec spec;
        spec.signal_channels = ktest::single_channel({0, 1}, {5, 6});
        CHECK_THROWS_WITH_AS(embed(p, spec), "embedding grid mismatch", std::invalid_argument);
    }
    SUBCASE("bad gamma") {
        EmbeddingSpec spec;
        spec.scale_gamma = 0.0;
        CHECK_THROWS(spec.validate());
    }
}

TEST_CASE("embed properties") {
    Rng rng(11);
    const Path p = ktest::random_path(rng, 8, 2);

    SUBCASE("channel-wise linear for basepoint none") {
        EmbeddingSpec spec;
        spec.time_augment = true;
        spec.basepoint = Basepoint::None;
        spec.scale_gamma = 0.7;
        const double a = 2.5;
        const Path scaled(p.times(), a * p.values());
        const Path e1 = embed(p, spec);
        const Path e2 = embed(scaled, spec);
        CHECK((e2.values().col(0) - e1.values().col(0)).cwiseAbs().maxCoeff() == 0.0); // time
        CHECK((e2.values().rightCols(2) - a * e1.values().rightCols(2)).cwiseAbs().maxCoeff() <
              1e-12);
    }
    SUBCASE("time channel increments are spacing over horizon") {
        EmbeddingSpec spec;
        spec.time_augment = true;
        const Path e = embed(p, spec);
        const Eigen::VectorXd tinc = e.increments().col(0);
        const double expected = 1.0 / p.times().back();
        for (Eigen::Index i = 0; i < tinc.size(); ++i) {
            CHECK(tinc(i) == doctest::Approx(expected).epsilon(1e-12));
        }
    }
    SUBCASE("signal channels appended") {
        EmbeddingSpec spec;
        spec.time_augment = false;
        Rng rng2(5);
        spec.signal_channels = ktest::random_path(rng2, 8, 1);
        const Path e = embed(p, spec);
        CHECK(e.channels() == 3);
        CHECK(ktest::exact_eq(e.values().col(2), spec.signal_channels->values().col(0)));
    }
}

TEST_CASE("load_bars") {
    const SessionWindow window = parse_session_window("09:30-16:00");

    SUBCASE("fixture sessions") {
        std::ifstream in(std::string(KTRADE_DATA_DIR) + "/bars_fixture.csv");
        REQUIRE(in.good());
        LoadBarsReport report;
        const PathBatch batch = load_bars(in, window, 78, &report);
        CHECK(batch.size() == 2);
        CHECK(batch.paths[0].length() == 77); // 78 samples
        CHECK(report.dropped == 1);
        CHECK(report.sessions_kept == 2);
    }
    SUBCASE("empty file") {
        std::istringstream in("timestamp,open,high,low,close,volume\n");
        CHECK_THROWS_WITH_AS(load_bars(in, window, 78), "load_bars: no sessions",
                             std::runtime_error);
    }
    SUBCASE("malformed row carries line number") {
        std::istringstream in(
            "timestamp,open,high,low,close,volume\n"
            "2024-01-02T09:30:00,1,1,1,1,0\n"
            "not,a,row\n");
        try {
            load_bars(in, window, 78);
            FAIL("expected error");
        } catch (const std::runtime_error& e) {
            CHECK(std::string(e.what()).find("line 3") != std::string::npos);
        }
    }
    SUBCASE("inconsistent ohlc rejected") {
        std::istringstream in(
            "timestamp,open,high,low,close,volume\n"
            "2024-01-02T09:30:00,2,1,0,1,0\n");
        CHECK_THROWS(load_bars(in, window, 78));
    }
    SUBCASE("csv round trip is exact") {
        Rng rng(23);
        std::vector<Path> sessions;
        for (int i = 0; i < 3; ++i) {
            Path p = ktest::random_path(rng, 77, 1, 0.37);
            Eigen::MatrixXd close = p.values().array() + 100.0;
            sessions.emplace_back(p.times(), std::move(close));
        }
        const PathBatch batch(std::move(sessions), "synthetic");
        std::stringstream buf;
        write_bars_csv(buf, batch, window, 5);
        LoadBarsReport report;
        const PathBatch loaded = load_bars(buf, window, 78, &report);
        REQUIRE(loaded.size() == batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) {
            CHECK(ktest::exact_eq(loaded.paths[i].values(), batch.paths[i].values()));
        }
    }
}

TEST_CASE("batch invariants") {
    Rng rng(1);
    std::vector<Path> mixed{ktest::random_path(rng, 3, 1), ktest::random_path(rng, 3, 2)};
    CHECK_THROWS(PathBatch(std::move(mixed), "bad"));
}
