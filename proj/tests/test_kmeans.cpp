#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "bpa/kmeans.hpp"

using namespace bpa;

namespace {

// Isotropic Gaussian blobs around the given centres (Box-Muller).
StateCorpus blobs(const std::vector<std::vector<double>>& centres, std::size_t per_blob, double sigma, std::uint64_t seed) {
    Rng rng(seed);
    StateCorpus c;
    for (const auto& centre : centres) {
        for (std::size_t i = 0; i < per_blob; ++i) {
            std::vector<double> v(centre.size());
            for (std::size_t j = 0; j < v.size(); ++j) {
                const double u1 = 1.0 - rng.uniform(), u2 = rng.uniform();
                v[j] = centre[j] + sigma * std::sqrt(-2 * std::log(u1)) * std::cos(2 * std::numbers::pi * u2);
            }
            c.states.emplace_back(std::move(v));
        }
    }
    c.compute_stats();
    return c;
}

StateCorpus uniform_cloud(std::size_t n, std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    StateCorpus c;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> v(d);
        for (auto& x : v) x = rng.uniform(-3, 3) * (1.0 + static_cast<double>(&x - v.data()));
        c.states.emplace_back(std::move(v));
    }
    c.compute_stats();
    return c;
}

std::vector<double> normalised(const ClusterModel& m, const Observation& o) {
    std::vector<double> p(m.dim);
    m.stats.apply(o.values(), p.data());
    return p;
}

std::size_t brute_force_nearest(const ClusterModel& m, const Observation& o) {
    const auto p = normalised(m, o);
    std::size_t best = 0;
    double bd = INFINITY;
    for (std::size_t c = 0; c < m.k; ++c) {
        double s = 0;
        for (std::size_t j = 0; j < m.dim; ++j) s += (p[j] - m.centroid(c)[j]) * (p[j] - m.centroid(c)[j]);
        if (s < bd) {
            bd = s;
            best = c;
        }
    }
    return best;
}

double brute_force_sse(const ClusterModel& m, const StateCorpus& c) {
    double s = 0;
    for (const auto& o : c.states) {
        const auto p = normalised(m, o);
        const auto k = brute_force_nearest(m, o);
        for (std::size_t j = 0; j < m.dim; ++j) s += (p[j] - m.centroid(k)[j]) * (p[j] - m.centroid(k)[j]);
    }
    return s;
}

}  // namespace

TEST(CollectStates, ExactCount) {
    const auto c = collect_states(EnvSpec{}, 10, 1);
    EXPECT_EQ(c.size(), 10u);
    EXPECT_EQ(c.dim(), 4u);
    EXPECT_THROW(collect_states(EnvSpec{}, 0, 1), std::invalid_argument);
}

TEST(CollectStates, CartPoleCorpusIsBounded) {
    const auto c = collect_states(EnvSpec{}, 50000, 2);
    ASSERT_EQ(c.size(), 50000u);
    // one step can move the cart at most dt * |velocity| beyond the limit
    for (const auto& o : c.states) {
        ASSERT_TRUE(o.finite());
        ASSERT_LE(std::abs(o[cartpole::position]), 2.4 + 0.02 * std::abs(o[cartpole::velocity]) + 1e-12);
    }
}

TEST(CollectStates, SameSeedSameCorpus) {
    const auto a = collect_states(EnvSpec{}, 2000, 3);
    const auto b = collect_states(EnvSpec{}, 2000, 3);
    EXPECT_EQ(a.states, b.states);
    EnvSpec nav;
    nav.id = EnvId::nav;
    EXPECT_EQ(collect_states(nav, 500, 4).states, collect_states(nav, 500, 4).states);
}

TEST(CollectStates, OraclePolicyDiffersFromRandom) {
    const auto a = collect_states(EnvSpec{}, 500, 5, CollectionPolicy::random);
    const auto b = collect_states(EnvSpec{}, 500, 5, CollectionPolicy::oracle);
    EXPECT_NE(a.states, b.states);
}

TEST(StateCorpus, StatsArePopulationMoments) {
    StateCorpus c;
    c.states = {Observation{1, 5}, Observation{3, 5}};
    c.compute_stats();
    EXPECT_EQ(c.stats.mean, (std::vector<double>{2, 5}));
    EXPECT_EQ(c.stats.stddev, (std::vector<double>{1, 1}));  // zero spread maps to 1
}

TEST(StateCorpus, CsvRoundTrip) {
    const auto c = collect_states(EnvSpec{}, 100, 6);
    const auto path = (std::filesystem::temp_directory_path() / "bpa_corpus_roundtrip.csv").string();
    c.save_file(path);
    const auto back = StateCorpus::load_file(path);
    EXPECT_EQ(back.states, c.states);
    EXPECT_EQ(back.stats, c.stats);
    std::filesystem::remove(path);
}

TEST(FitKmeans, SingleClusterIsTheMean) {
    const auto c = uniform_cloud(500, 3, 7);
    const auto m = fit_kmeans(c, 1, 1);
    // in z-scored space the mean is the origin and SSE = n * total variance = n * d
    for (double v : m.centroid(0)) EXPECT_NEAR(v, 0.0, 1e-12);
    EXPECT_NEAR(m.sse, 500.0 * 3.0, 1e-8);
}

TEST(FitKmeans, TwoSeparatedBlobs) {
    const auto c = blobs({{0, 0}, {10, 10}}, 400, 0.5, 8);
    const auto m = fit_kmeans(c, 2, 2);
    // blob means in normalised coordinates
    std::vector<double> expect_a(2), expect_b(2);
    const Observation a{0, 0}, b{10, 10};
    c.stats.apply(a.values(), expect_a.data());
    c.stats.apply(b.values(), expect_b.data());
    const std::size_t ia = assign(m, a), ib = assign(m, b);
    ASSERT_NE(ia, ib);
    for (int j = 0; j < 2; ++j) {
        EXPECT_NEAR(m.centroid(ia)[j], expect_a[j], 0.1);
        EXPECT_NEAR(m.centroid(ib)[j], expect_b[j], 0.1);
    }
}

TEST(FitKmeans, KEqualToCorpusSizeHasZeroSse) {
    const auto c = uniform_cloud(25, 2, 9);
    EXPECT_EQ(fit_kmeans(c, 25, 3).sse, 0.0);
    EXPECT_THROW(fit_kmeans(c, 26, 3), std::invalid_argument);
    EXPECT_THROW(fit_kmeans(c, 0, 3), std::invalid_argument);
}

TEST(FitKmeans, LloydSseDescendsEveryIteration) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto c = uniform_cloud(1500, 4, 100 + seed);
        const auto m = fit_kmeans(c, 2 + seed % 7, seed);
        ASSERT_GE(m.sse_history.size(), 2u);
        for (std::size_t i = 1; i < m.sse_history.size(); ++i) EXPECT_LE(m.sse_history[i], m.sse_history[i - 1] + 1e-9);
        EXPECT_EQ(m.sse, m.sse_history.back());
        EXPECT_NEAR(m.sse, brute_force_sse(m, c), 1e-6 * m.sse);
    }
}

TEST(FitKmeans, CentroidsArePairwiseDistinct) {
    const auto c = collect_states(EnvSpec{}, 3000, 10);
    const auto m = fit_kmeans(c, 6, 4);
    for (std::size_t a = 0; a < m.k; ++a)
        for (std::size_t b = a + 1; b < m.k; ++b) {
            double s = 0;
            for (std::size_t j = 0; j < m.dim; ++j) s += std::pow(m.centroid(a)[j] - m.centroid(b)[j], 2);
            EXPECT_GT(s, 0.0);
        }
}

TEST(FitKmeans, EmptyClusterIsReseeded) {
    // five identical points plus one outlier: starting with two centroids on
    // the same point leaves one cluster empty
    std::vector<double> pts{0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 5, 5};
    std::vector<double> init{0, 0, 0, 0, 1, 1};
    const auto m = detail::lloyd(pts, 6, 2, init, 3, 1e-9, 50);
    EXPECT_EQ(m.sse, 0.0);
    for (double v : m.sse_history) EXPECT_TRUE(std::isfinite(v));
}

TEST(Assign, ExactCentroidAndTieBreak) {
    ClusterModel m;
    m.k = 3;
    m.dim = 2;
    m.stats = Normalization::identity(2);
    m.centroids = {-1, 0, 1, 0, 5, 5};
    EXPECT_EQ(assign(m, Observation{5, 5}), 2u);
    EXPECT_EQ(assign(m, Observation{0, 0}), 0u);  // equidistant from 0 and 1
    EXPECT_EQ(assign(m, Observation{0.1, 0}), 1u);
    EXPECT_THROW(assign(m, Observation{1, 2, 3}), std::invalid_argument);
}

TEST(Assign, MatchesBruteForceOnRandomObservations) {
    const auto c = uniform_cloud(2000, 4, 11);
    const auto m = fit_kmeans(c, 7, 5);
    for (const auto& o : c.states) ASSERT_EQ(assign(m, o), brute_force_nearest(m, o));
    Rng rng(12);
    for (int i = 0; i < 1000; ++i) {
        const Observation o{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)};
        ASSERT_EQ(assign(m, o), brute_force_nearest(m, o));
    }
}

TEST(Assign, MatchesBruteForceOnEnvironmentCorpora) {
    EnvSpec nav;
    nav.id = EnvId::nav;
    for (const EnvSpec& env : {EnvSpec{}, nav}) {
        const auto c = collect_states(env, 2000, 13);
        const auto m = fit_kmeans(c, 4, 6);
        for (const auto& o : c.states) ASSERT_EQ(assign(m, o), brute_force_nearest(m, o));
    }
}

TEST(ClusterModel, NormalisationIdempotence) {
    const auto raw = collect_states(EnvSpec{}, 2000, 14);
    StateCorpus pre;
    for (const auto& o : raw.states) {
        std::vector<double> v(o.size());
        raw.stats.apply(o.values(), v.data());
        pre.states.emplace_back(std::move(v));
    }
    pre.stats = Normalization::identity(4);
    const auto a = fit_kmeans(raw, 3, 7);
    const auto b = fit_kmeans(pre, 3, 7);
    EXPECT_EQ(a.centroids, b.centroids);
    EXPECT_EQ(a.sse, b.sse);
}

TEST(ClusterModel, TextRoundTrip) {
    const auto c = collect_states(EnvSpec{}, 1000, 15);
    const auto m = fit_kmeans(c, 3, 8);
    std::stringstream ss;
    m.save(ss);
    EXPECT_EQ(ss.str().rfind("bpa-kmeans 1\nk 3 dim 4\n", 0), 0u);
    const auto back = ClusterModel::load(ss);
    EXPECT_EQ(back.centroids, m.centroids);
    EXPECT_EQ(back.stats, m.stats);
    EXPECT_EQ(back.sse, m.sse);
    for (const auto& o : c.states) ASSERT_EQ(assign(back, o), assign(m, o));
    std::stringstream bad("bpa-kmeans 1\nk 3 dim 4\nmean 1 2\n");
    EXPECT_THROW(ClusterModel::load(bad), std::runtime_error);
}

TEST(SseCurve, NonIncreasingInK) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto c = collect_states(EnvSpec{}, 3000, 20 + seed);
        const auto r = sse_curve(c, 1, 9, seed);
        ASSERT_EQ(r.curve.k.size(), 9u);
        for (std::size_t i = 1; i < 9; ++i) EXPECT_LE(r.curve.sse[i], r.curve.sse[i - 1] + 1e-9) << "k=" << i + 1;
        for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(r.models[i].k, i + 1);
    }
}

TEST(SseCurve, BestOfRestartsIsNoWorseThanSingleFit) {
    const auto c = uniform_cloud(1500, 3, 30);
    const auto r = sse_curve(c, 2, 6, 1);
    for (std::size_t i = 0; i < r.curve.k.size(); ++i) {
        const auto single = fit_kmeans(c, r.curve.k[i], mix_seed(1 ^ (r.curve.k[i] * 1000003ULL)));
        EXPECT_LE(r.curve.sse[i], single.sse + 1e-9);
    }
}

TEST(Elbow, ThreeBlobsGiveThree) {
    const auto c = blobs({{0, 0, 0}, {8, 0, 0}, {0, 8, 8}}, 300, 0.6, 31);
    const auto r = sse_curve(c, 1, 9, 2);
    const auto e = elbow_k(r.curve);
    EXPECT_EQ(e.k, 3u);
    EXPECT_TRUE(e.confident);
}

TEST(Elbow, LinearDeclineIsLowConfidence) {
    SseCurve curve;
    for (std::size_t k = 1; k <= 9; ++k) {
        curve.k.push_back(k);
        curve.sse.push_back(100.0 - 10.0 * static_cast<double>(k));
    }
    const auto e = elbow_k(curve);
    EXPECT_EQ(e.k, 1u);
    EXPECT_FALSE(e.confident);
}

TEST(Elbow, FlatCurveIsLowConfidence) {
    const SseCurve curve{{1, 2, 3, 4}, {5, 5, 5, 5}};
    const auto e = elbow_k(curve);
    EXPECT_EQ(e.k, 1u);
    EXPECT_FALSE(e.confident);
    EXPECT_THROW(elbow_k(SseCurve{{1, 2}, {3, 1}}), std::invalid_argument);
}

TEST(Elbow, HandComputedChordDistance) {
    // normalised points: (0,1), (0.5,0.2), (1,0); chord x + y = 1
    const SseCurve curve{{1, 2, 3}, {10, 2, 0}};
    const auto e = elbow_k(curve);
    EXPECT_EQ(e.k, 2u);
    EXPECT_NEAR(e.distance, std::abs(0.5 + 0.2 - 1.0) / std::sqrt(2.0), 1e-12);
}

TEST(Elbow, TiesGoToSmallerK) {
    // symmetric bumps at k=2 and k=4 about the chord
    const SseCurve curve{{1, 2, 3, 4, 5}, {4, 2, 2, 0, 0}};
    // normalised: (0,1) (.25,.5) (.5,.5) (.75,0) (1,0); k=2 and k=4 are both .25/sqrt(2) from x+y=1
    const auto e = elbow_k(curve);
    EXPECT_EQ(e.k, 2u);
}
