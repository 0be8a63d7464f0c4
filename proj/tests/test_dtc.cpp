#include <doctest.h>

#include <cmath>

#include "attnclust/dtc.hpp"
#include "attnclust/embedding.hpp"
#include "attnclust/metrics.hpp"
#include "attnclust/pipeline.hpp"
#include "oracles.hpp"

using namespace attnclust;
using namespace attnclust::dtc;

namespace {

Matrix row(std::initializer_list<double> values) {
    Matrix m(1, static_cast<Eigen::Index>(values.size()));
    Eigen::Index j = 0;
    for (double v : values) {
        m(0, j++) = v;
    }
    return m;
}

Matrix rows(std::initializer_list<std::initializer_list<double>> values) {
    Matrix m(static_cast<Eigen::Index>(values.size()), static_cast<Eigen::Index>(values.begin()->size()));
    Eigen::Index i = 0;
    for (const auto& r : values) {
        m.row(i++) = row(r);
    }
    return m;
}

pipeline::Initialization blob_init(const pipeline::Dataset& data, int k, std::uint64_t seed) {
    return pipeline::initialize(data.features, k, std::min<int>(k, static_cast<int>(data.features.cols())), 1.0,
                                seed, 100);
}

}  // namespace

TEST_CASE("soft_assign hand cases") {
    const ProbabilityMatrix one = soft_assign(Matrix::Random(4, 2), Matrix::Zero(1, 2), 1.0);
    CHECK(one.data() == Matrix::Ones(4, 1));

    const ProbabilityMatrix mid = soft_assign(row({0.0, 0.0}), rows({{-1.0, 0.0}, {1.0, 0.0}}), 1.0);
    CHECK(mid(0, 0) == 0.5);
    CHECK(mid(0, 1) == 0.5);

    const ProbabilityMatrix p = soft_assign(row({0.0}), rows({{0.0}, {1.0}}), 1.0);
    CHECK(p(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(p(0, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("soft_assign uses the distance, not the sum") {
    // A point on a center is most likely assigned to it.
    const ProbabilityMatrix p = soft_assign(row({3.0, 3.0}), rows({{-3.0, -3.0}, {3.0, 3.0}}), 1.0);
    CHECK(p(0, 1) > 0.9);
}

TEST_CASE("soft_assign survives far-away points") {
    const ProbabilityMatrix p = soft_assign(row({1e150, 0.0}), rows({{0.0, 0.0}, {1.0, 0.0}}), 1.0);
    CHECK_NOTHROW(validate_probability_matrix(p.data()));
}

TEST_CASE("target_distribution hand cases") {
    const ProbabilityMatrix p(rows({{0.8, 0.2}, {0.4, 0.6}}));
    const ProbabilityMatrix q = target_distribution(p);
    CHECK(q(0, 0) == doctest::Approx(0.9143).epsilon(1e-4));
    CHECK(q(0, 1) == doctest::Approx(0.0857).epsilon(1e-3));
    CHECK(q(1, 0) == doctest::Approx(0.2286).epsilon(1e-4));
    CHECK(q(1, 1) == doctest::Approx(0.7714).epsilon(1e-4));

    const ProbabilityMatrix same(rows({{0.3, 0.7}, {0.3, 0.7}, {0.3, 0.7}}));
    CHECK(oracle::relative_error(target_distribution(same).data(), same.data()) < 1e-15);

    const ProbabilityMatrix hot(rows({{1.0, 0.0, 0.0}, {0.0, 0.0, 1.0}, {1.0, 0.0, 0.0}}));
    CHECK(target_distribution(hot) == hot);
    CHECK(target_distribution(target_distribution(hot)) == hot);
}

TEST_CASE("kl_loss hand cases") {
    const ProbabilityMatrix p(rows({{0.5, 0.5}}));
    const ProbabilityMatrix q(rows({{1.0, 0.0}}));
    CHECK(kl_loss(p, p) == 0.0);
    CHECK(kl_loss(q, p) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    const ProbabilityMatrix p2(rows({{0.5, 0.5}, {0.5, 0.5}}));
    const ProbabilityMatrix q2(rows({{1.0, 0.0}, {1.0, 0.0}}));
    CHECK(kl_loss(q2, p2) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(std::isfinite(kl_loss(q, ProbabilityMatrix(rows({{0.0, 1.0}})))));
    CHECK_THROWS_AS(kl_loss(q, p2), std::invalid_argument);
}

TEST_CASE("kl_loss is non-negative and zero only at equality") {
    oracle::Rng rng(1);
    for (int t = 0; t < 300; ++t) {
        const auto n = rng.integer(1, 6);
        const auto k = rng.integer(2, 5);
        const ProbabilityMatrix q(rng.stochastic(n, k, true));
        const ProbabilityMatrix p(rng.stochastic(n, k));
        CHECK(kl_loss(q, p) >= 0.0);
        CHECK(kl_loss(p, p) == doctest::Approx(0.0));
    }
}

TEST_CASE("consistency_loss hand cases") {
    const ProbabilityMatrix a(rows({{1.0, 0.0}}));
    const ProbabilityMatrix b(rows({{0.0, 1.0}}));
    CHECK(consistency_loss(a, a, 1.0) == 0.0);
    CHECK(consistency_loss(a, b, 0.0) == 0.0);
    CHECK(consistency_loss(a, b, 1.0) == 1.0);
    CHECK(consistency_loss(a, b, 1.0, ConsistencyNorm::Absolute) == 1.0);
    const ProbabilityMatrix c(rows({{0.75, 0.25}}));
    CHECK(consistency_loss(a, c, 1.0) == 0.0625);
    CHECK(consistency_loss(a, c, 1.0, ConsistencyNorm::Absolute) == 0.25);
    CHECK_THROWS_AS(consistency_loss(a, b, 1.5), std::invalid_argument);
}

TEST_CASE("ramp_up schedule") {
    CHECK(ramp_up(0, 10) == doctest::Approx(std::exp(-5.0)));
    CHECK(ramp_up(0, 10) < 1e-2);
    CHECK(ramp_up(10, 10) == 1.0);
    CHECK(ramp_up(20, 10) == 1.0);
    double previous = 0.0;
    for (int t = 0; t < 40; ++t) {
        const double w = ramp_up(t, 25);
        CHECK(w >= previous);
        CHECK(w <= 1.0);
        previous = w;
    }
    CHECK_THROWS_AS(ramp_up(-1, 5), std::invalid_argument);
    CHECK_THROWS_AS(ramp_up(1, 0), std::invalid_argument);
}

TEST_CASE("ema_update hand cases") {
    oracle::Rng rng(2);
    const ProbabilityMatrix p1(rng.stochastic(5, 3));
    for (double beta : {0.0, 0.5, 0.9, 0.99}) {
        const EmaUpdate u = ema_update(EnsembleState::zeros(5, 3, beta), p1);
        CHECK(identical(u.smoothed.data(), p1.data()));
        CHECK(u.state.step == 1);
    }
    EnsembleState s = EnsembleState::zeros(5, 3, 0.0);
    for (int t = 0; t < 4; ++t) {
        const ProbabilityMatrix p(rng.stochastic(5, 3));
        const EmaUpdate u = ema_update(s, p);
        CHECK(u.smoothed.data() == (t == 0 ? p.data() : normalize_rows(p.data())));
        s = u.state;
    }

    const EmaUpdate first = ema_update(EnsembleState::zeros(1, 2, 0.5), ProbabilityMatrix(rows({{1.0, 0.0}})));
    const EmaUpdate second = ema_update(first.state, ProbabilityMatrix(rows({{0.0, 1.0}})));
    CHECK(second.state.accumulated(0, 0) == 0.25);
    CHECK(second.state.accumulated(0, 1) == 0.5);
    CHECK(second.smoothed(0, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(second.smoothed(0, 1) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));

    CHECK_THROWS_AS(ema_update(EnsembleState::zeros(5, 3, 1.0), p1), std::invalid_argument);
    CHECK_THROWS_AS(ema_update(EnsembleState::zeros(2, 2, 0.5), p1), std::invalid_argument);
}

TEST_CASE("distribution operators always produce valid probability matrices") {
    oracle::Rng rng(3);
    for (int t = 0; t < 300; ++t) {
        const int n = rng.integer(1, 12);
        const int k = rng.integer(1, 6);
        const int kp = rng.integer(1, 4);
        const double alpha = rng.uniform(0.05, 10.0);
        const ProbabilityMatrix p = soft_assign(rng.normal_matrix(n, kp, 5.0), rng.normal_matrix(k, kp, 5.0), alpha);
        const ProbabilityMatrix q = target_distribution(p);
        CHECK_NOTHROW(validate_probability_matrix(q.data()));
        EnsembleState s = EnsembleState::zeros(n, k, rng.uniform(0.0, 0.99));
        for (int step = 0; step < 3; ++step) {
            const EmaUpdate u = ema_update(s, ProbabilityMatrix(rng.stochastic(n, k, true)));
            CHECK_NOTHROW(validate_probability_matrix(u.smoothed.data()));
            s = u.state;
        }
    }
}

TEST_CASE("dec_gradients: one cluster and symmetric configurations give zero") {
    oracle::Rng rng(4);
    const Matrix z = rng.normal_matrix(4, 2);
    const Matrix c1 = rng.normal_matrix(1, 2);
    const auto single = dec_gradients(z, c1, 1.0, soft_assign(z, c1, 1.0));
    CHECK(single.z.cwiseAbs().maxCoeff() == 0.0);
    CHECK(single.centers.cwiseAbs().maxCoeff() == 0.0);

    const Matrix mid = row({0.0, 0.0});
    const Matrix centers = rows({{-1.0, 0.5}, {1.0, -0.5}});
    const auto sym = dec_gradients(mid, centers, 1.0, ProbabilityMatrix(rows({{0.5, 0.5}})));
    CHECK(sym.z.cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("dec_gradients match central finite differences") {
    oracle::Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = rng.integer(1, 10);
        const int k = rng.integer(2, 4);
        const int kp = rng.integer(1, 3);
        const double alpha = rng.uniform(0.5, 3.0);
        const Matrix z = rng.normal_matrix(n, kp);
        const Matrix centers = rng.normal_matrix(k, kp);
        const ProbabilityMatrix q(rng.stochastic(n, k, true));
        const auto g = dec_gradients(z, centers, alpha, q);
        const Matrix fd_z = oracle::central_differences<Matrix>(
            z, [&](const Matrix& m) { return kl_loss(q, soft_assign(m, centers, alpha)); });
        const Matrix fd_c = oracle::central_differences<Matrix>(
            centers, [&](const Matrix& m) { return kl_loss(q, soft_assign(z, m, alpha)); });
        CHECK(oracle::relative_error(g.z, fd_z) < 1e-4);
        CHECK(oracle::relative_error(g.centers, fd_c) < 1e-4);
    }
}

TEST_CASE("consistency_gradients match central finite differences") {
    oracle::Rng rng(6);
    for (int trial = 0; trial < 60; ++trial) {
        const int n = rng.integer(1, 8);
        const int k = rng.integer(2, 4);
        const int kp = rng.integer(1, 3);
        const double alpha = rng.uniform(0.5, 3.0);
        const double omega = rng.uniform(0.1, 1.0);
        const auto norm = trial % 2 == 0 ? ConsistencyNorm::Squared : ConsistencyNorm::Absolute;
        const Matrix z = rng.normal_matrix(n, kp);
        const Matrix zp = z + rng.normal_matrix(n, kp, 0.5);
        const Matrix centers = rng.normal_matrix(k, kp);
        auto loss = [&](const Matrix& a, const Matrix& b, const Matrix& c) {
            return consistency_loss(soft_assign(a, c, alpha), soft_assign(b, c, alpha), omega, norm);
        };
        const ProbabilityMatrix p = soft_assign(z, centers, alpha);
        const ProbabilityMatrix pp = soft_assign(zp, centers, alpha);

        const auto both = consistency_gradients(z, &zp, centers, alpha, p, pp, omega, norm);
        CHECK(oracle::relative_error(
                  both.z, oracle::central_differences<Matrix>(z, [&](const Matrix& m) { return loss(m, zp, centers); })) <
              1e-4);
        CHECK(oracle::relative_error(both.z_prime, oracle::central_differences<Matrix>(
                                                       zp, [&](const Matrix& m) { return loss(z, m, centers); })) <
              1e-4);
        CHECK(oracle::relative_error(both.centers, oracle::central_differences<Matrix>(
                                                       centers, [&](const Matrix& m) { return loss(z, zp, m); })) <
              1e-4);

        // p' constant: only the first branch is differentiated.
        const auto fixed = consistency_gradients(z, nullptr, centers, alpha, p, pp, omega, norm);
        CHECK(fixed.z_prime.size() == 0);
        auto fixed_loss = [&](const Matrix& c) {
            return consistency_loss(soft_assign(z, c, alpha), pp, omega, norm);
        };
        CHECK(oracle::relative_error(fixed.centers, oracle::central_differences<Matrix>(centers, fixed_loss)) < 1e-4);
    }
}

TEST_CASE("a small step with q fixed does not increase L1") {
    oracle::Rng rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = rng.integer(2, 10);
        const int k = rng.integer(2, 4);
        const int kp = rng.integer(1, 3);
        const Matrix z = rng.normal_matrix(n, kp);
        const Matrix centers = rng.normal_matrix(k, kp);
        const ProbabilityMatrix q = target_distribution(soft_assign(z, centers, 1.0));
        const auto g = dec_gradients(z, centers, 1.0, q);
        const double before = kl_loss(q, soft_assign(z, centers, 1.0));
        const double after = kl_loss(q, soft_assign(z - 1e-4 * g.z, centers - 1e-4 * g.centers, 1.0));
        CHECK(after <= before);
    }
}

TEST_CASE("predict: coincident point, ties and rescaling invariance") {
    const Matrix centers = rows({{0.0, 0.0}, {10.0, 0.0}, {0.0, 10.0}, {-10.0, 0.0}});
    ClusterState s{centers, Matrix::Identity(2, 2), RowVector::Zero(2), 1.0};
    CHECK(predict(FeatureMatrix(rows({{0.0, 10.0}})), s).assignment[0] == 2);

    ClusterState tie{rows({{0.0, 5.0}, {-1.0, 0.0}, {0.0, -5.0}, {1.0, 0.0}}), Matrix::Identity(2, 2),
                     RowVector::Zero(2), 1.0};
    CHECK(predict(FeatureMatrix(rows({{0.0, 0.0}})), tie).assignment[0] == 1);

    oracle::Rng rng(8);
    const FeatureMatrix x(rng.normal_matrix(30, 2, 6.0));
    const LabelVector base = predict(x, s).assignment;
    ClusterState scaled = s;
    scaled.centers *= 3.0;
    CHECK(predict(FeatureMatrix(x.data() * 3.0), scaled).assignment == base);
}

TEST_CASE("train config validation") {
    TrainConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.ramp_length = 60;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.beta = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.target_update_interval = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.epochs = 0;
    CHECK_NOTHROW(cfg.validate());
    CHECK(parse_variant("tep") == Variant::TEP);
    CHECK_THROWS_AS(parse_variant("dec"), ConfigError);
}

TEST_CASE("baseline separates three blobs") {
    const auto data = pipeline::make_blobs({3, 200, 2, 10.0, 1.0, 7});
    const auto init = blob_init(data, 3, 7);
    TrainConfig cfg;
    const TrainResult r = train(data.features, init.state, cfg);
    CHECK(r.history.size() == 50);
    CHECK(metrics::clustering_accuracy(r.assignment, data.labels) == 1.0);
    for (const auto& l : r.history) {
        CHECK(l.l2 == 0.0);
        CHECK(l.omega == 0.0);
        CHECK(l.total == l.l1 + l.l2);
    }
}

TEST_CASE("zero epochs returns the k-means assignment") {
    const auto data = pipeline::make_blobs({4, 120, 3, 4.0, 1.0, 3});
    const auto init = blob_init(data, 4, 3);
    TrainConfig cfg;
    cfg.epochs = 0;
    const TrainResult r = train(data.features, init.state, cfg);
    CHECK(r.history.empty());
    CHECK(r.assignment == init.assignment);
    CHECK(r.state == init.state);
}

TEST_CASE("PI with identity transform reproduces Baseline bit for bit") {
    const auto data = pipeline::make_blobs({3, 90, 2, 3.0, 1.0, 11});
    const auto init = blob_init(data, 3, 11);
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.ramp_length = 10;
    const TrainResult base = train(data.features, init.state, cfg);
    cfg.variant = Variant::PI;
    const TrainResult pi = train(data.features, init.state, cfg, &data.features);
    CHECK(pi.state == base.state);
    CHECK(pi.assignment == base.assignment);
    REQUIRE(pi.history.size() == base.history.size());
    for (std::size_t e = 0; e < pi.history.size(); ++e) {
        CHECK(pi.history[e].l1 == base.history[e].l1);
        CHECK(pi.history[e].l2 == 0.0);
        CHECK(pi.history[e].omega == ramp_up(static_cast<int>(e), 10));
    }
}

TEST_CASE("PI needs a transform of matching shape") {
    const auto data = pipeline::make_blobs({3, 30, 2, 5.0, 1.0, 1});
    const auto init = blob_init(data, 3, 1);
    TrainConfig cfg;
    cfg.variant = Variant::PI;
    CHECK_THROWS_AS(train(data.features, init.state, cfg), std::invalid_argument);
    const FeatureMatrix wrong(Matrix::Zero(29, 2));
    CHECK_THROWS_AS(train(data.features, init.state, cfg, &wrong), std::invalid_argument);
}

TEST_CASE("TEP records the consistency term after the first epoch") {
    const auto data = pipeline::make_blobs({3, 60, 2, 2.0, 1.0, 5});
    const auto init = blob_init(data, 3, 5);
    TrainConfig cfg;
    cfg.variant = Variant::TEP;
    cfg.epochs = 10;
    cfg.ramp_length = 5;
    cfg.learning_rate = 0.1;
    const TrainResult r = train(data.features, init.state, cfg);
    CHECK(r.history[0].l2 == 0.0);
    bool any_positive = false;
    for (std::size_t e = 1; e < r.history.size(); ++e) {
        any_positive = any_positive || r.history[e].l2 > 0.0;
        CHECK(r.history[e].total == r.history[e].l1 + r.history[e].l2);
    }
    CHECK(any_positive);
    const TrainResult again = train(data.features, init.state, cfg);
    CHECK(again.state == r.state);
}

TEST_CASE("divergence reports the epoch") {
    const auto data = pipeline::make_blobs({3, 30, 2, 5.0, 1.0, 2});
    const auto init = blob_init(data, 3, 2);
    TrainConfig cfg;
    cfg.learning_rate = 1e300;
    try {
        train(data.features, init.state, cfg);
        FAIL("expected divergence");
    } catch (const DivergedError& e) {
        CHECK(e.epoch() >= 0);
        CHECK(e.epoch() < cfg.epochs);
        CHECK(std::string(e.what()).find("epoch") != std::string::npos);
    }
}
