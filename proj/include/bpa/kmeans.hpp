#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bpa/environment.hpp"
#include "bpa/rng.hpp"
#include "bpa/types.hpp"

namespace bpa {

// Per-feature z-score statistics.
struct Normalization {
    std::vector<double> mean;
    std::vector<double> stddev;

    static Normalization identity(std::size_t dim) { return {std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)}; }

    std::size_t dim() const { return mean.size(); }

    void apply(std::span<const double> in, double* out) const {
        for (std::size_t i = 0; i < mean.size(); ++i) out[i] = (in[i] - mean[i]) / stddev[i];
    }

    friend bool operator==(const Normalization&, const Normalization&) = default;
};

struct StateCorpus {
    std::vector<Observation> states;
    Normalization stats;

    std::size_t size() const { return states.size(); }
    std::size_t dim() const { return states.empty() ? 0 : states.front().size(); }

    // Population mean and standard deviation per feature; zero spread maps to 1.
    void compute_stats() {
        const std::size_t d = dim();
        stats.mean.assign(d, 0.0);
        stats.stddev.assign(d, 0.0);
        if (states.empty()) return;
        for (const Observation& o : states) {
            if (o.size() != d) throw std::invalid_argument("corpus observations must share one dimensionality");
            for (std::size_t i = 0; i < d; ++i) stats.mean[i] += o[i];
        }
        for (double& m : stats.mean) m /= static_cast<double>(states.size());
        for (const Observation& o : states)
            for (std::size_t i = 0; i < d; ++i) stats.stddev[i] += (o[i] - stats.mean[i]) * (o[i] - stats.mean[i]);
        for (double& s : stats.stddev) {
            s = std::sqrt(s / static_cast<double>(states.size()));
            if (s == 0.0 || !std::isfinite(s)) s = 1.0;
        }
    }

    void save_file(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot write corpus: " + path);
        out << std::setprecision(17);
        for (const Observation& o : states) {
            for (std::size_t i = 0; i < o.size(); ++i) out << (i ? "," : "") << o[i];
            out << '\n';
        }
    }

    static StateCorpus load_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot read corpus: " + path);
        StateCorpus c;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::vector<double> v;
            std::stringstream ss(line);
            std::string cell;
            while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
            c.states.emplace_back(std::move(v));
        }
        c.compute_stats();
        return c;
    }
};

enum class CollectionPolicy { random, oracle };

// Plays the chosen policy and records every observation (resets included)
// until n have been gathered, resetting whenever an episode ends.
inline StateCorpus collect_states(const EnvSpec& env, std::size_t n, std::uint64_t seed,
                                  CollectionPolicy policy = CollectionPolicy::random) {
    if (n == 0) throw std::invalid_argument("collect_states needs n >= 1");
    Rng rng(seed);
    Environment sim(env);
    StateCorpus corpus;
    corpus.states.reserve(n);
    corpus.states.push_back(sim.reset(rng));
    while (corpus.states.size() < n) {
        const EnvAction a = policy == CollectionPolicy::random ? EnvAction{rng.uniform_index(env.actions())}
                                                               : oracle_action(env, sim.observation());
        const StepOutcome out = sim.step(a);
        corpus.states.push_back(out.next_obs);
        if ((out.terminal || out.truncated) && corpus.states.size() < n) corpus.states.push_back(sim.reset(rng));
    }
    corpus.compute_stats();
    return corpus;
}

struct ClusterModel {
    std::size_t k = 0;
    std::size_t dim = 0;
    Normalization stats;
    std::vector<double> centroids;  // k x dim, normalised space, row-major
    double sse = 0.0;
    std::vector<double> sse_history;  // SSE after every assignment pass
    int iterations = 0;

    std::span<const double> centroid(std::size_t c) const { return {centroids.data() + c * dim, dim}; }

    void save(std::ostream& out) const {
        out << "bpa-kmeans 1\nk " << k << " dim " << dim << '\n' << std::setprecision(17);
        auto row = [&](std::span<const double> v) {
            for (std::size_t i = 0; i < v.size(); ++i) out << (i ? " " : "") << v[i];
            out << '\n';
        };
        out << "mean ";
        row(stats.mean);
        out << "std ";
        row(stats.stddev);
        out << "sse " << sse << '\n';
        for (std::size_t c = 0; c < k; ++c) row(centroid(c));
    }

    static ClusterModel load(std::istream& in) {
        ClusterModel m;
        std::string magic, tag;
        int version = 0;
        if (!(in >> magic >> version) || magic != "bpa-kmeans" || version != 1)
            throw std::runtime_error("not a bpa-kmeans v1 model");
        if (!(in >> tag >> m.k) || tag != "k" || !(in >> tag >> m.dim) || tag != "dim" || m.k == 0 || m.dim == 0)
            throw std::runtime_error("bad cluster model header");
        auto read_row = [&](const char* name, std::vector<double>& v) {
            if (!(in >> tag) || tag != name) throw std::runtime_error(std::string("cluster model missing ") + name);
            v.resize(m.dim);
            for (double& x : v)
                if (!(in >> x)) throw std::runtime_error("truncated cluster model");
        };
        read_row("mean", m.stats.mean);
        read_row("std", m.stats.stddev);
        if (!(in >> tag >> m.sse) || tag != "sse") throw std::runtime_error("cluster model missing sse");
        m.centroids.resize(m.k * m.dim);
        for (double& x : m.centroids)
            if (!(in >> x)) throw std::runtime_error("truncated cluster model");
        return m;
    }

    void save_file(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot write cluster model: " + path);
        save(out);
    }

    static ClusterModel load_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot read cluster model: " + path);
        return load(in);
    }
};

namespace detail {

inline double squared_distance(const double* a, const double* b, std::size_t d) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double t = a[i] - b[i];
        s += t * t;
    }
    return s;
}

// Nearest centroid, ties to the lowest index.
inline std::size_t nearest(const double* p, const std::vector<double>& centroids, std::size_t k, std::size_t d,
                           double* best_dist = nullptr) {
    std::size_t best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
        const double dist = squared_distance(p, centroids.data() + c * d, d);
        if (dist < bd) {
            bd = dist;
            best = c;
        }
    }
    if (best_dist) *best_dist = bd;
    return best;
}

inline std::vector<double> normalised_points(const StateCorpus& corpus) {
    const std::size_t d = corpus.dim();
    if (corpus.stats.dim() != d) throw std::invalid_argument("corpus statistics do not match its dimensionality");
    std::vector<double> pts(corpus.size() * d);
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        if (corpus.states[i].size() != d) throw std::invalid_argument("corpus observations must share one dimensionality");
        corpus.stats.apply(corpus.states[i].values(), pts.data() + i * d);
    }
    return pts;
}

inline std::vector<double> kmeanspp_seed(const std::vector<double>& pts, std::size_t n, std::size_t d, std::size_t k,
                                         Rng& rng) {
    std::vector<double> centroids;
    centroids.reserve(k * d);
    std::size_t first = rng.uniform_index(n);
    centroids.insert(centroids.end(), pts.begin() + first * d, pts.begin() + (first + 1) * d);
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(&pts[i * d], centroids.data(), d);
    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (double v : d2) total += v;
        std::size_t pick = 0;
        if (total > 0.0) {
            // D^2 sampling; the fallback guards against rounding in the running sum.
            const double target = rng.uniform() * total;
            double cumulative = 0.0;
            std::size_t last_positive = 0;
            bool found = false;
            for (std::size_t i = 0; i < n && !found; ++i) {
                if (d2[i] <= 0.0) continue;
                last_positive = i;
                cumulative += d2[i];
                if (cumulative > target) {
                    pick = i;
                    found = true;
                }
            }
            if (!found) pick = last_positive;
        } else {
            pick = rng.uniform_index(n);
        }
        centroids.insert(centroids.end(), pts.begin() + pick * d, pts.begin() + (pick + 1) * d);
        const double* cen = centroids.data() + c * d;
        for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(&pts[i * d], cen, d));
    }
    return centroids;
}

// Lloyd iterations from the given initial centroids.
inline ClusterModel lloyd(const std::vector<double>& pts, std::size_t n, std::size_t d, std::vector<double> centroids,
                          std::size_t k, double tol, int max_iters) {
    ClusterModel m;
    m.k = k;
    m.dim = d;
    std::vector<std::size_t> label(n);
    std::vector<double> dist(n);

    auto assign_all = [&] {
        double sse = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            label[i] = nearest(&pts[i * d], centroids, k, d, &dist[i]);
            sse += dist[i];
        }
        return sse;
    };

    double sse = assign_all();
    m.sse_history.push_back(sse);
    for (int it = 0; it < max_iters; ++it) {
        std::vector<double> sums(k * d, 0.0);
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            ++counts[label[i]];
            for (std::size_t j = 0; j < d; ++j) sums[label[i] * d + j] += pts[i * d + j];
        }
        std::vector<double> next(k * d);
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;
            for (std::size_t j = 0; j < d; ++j) next[c * d + j] = sums[c * d + j] / static_cast<double>(counts[c]);
        }
        // Empty clusters are reseeded at the point farthest from its centroid.
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] != 0) continue;
            const auto far = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
            std::copy(pts.begin() + far * d, pts.begin() + (far + 1) * d, next.begin() + c * d);
            dist[far] = 0.0;
        }
        double shift = 0.0;
        for (std::size_t c = 0; c < k; ++c)
            shift = std::max(shift, std::sqrt(squared_distance(&next[c * d], &centroids[c * d], d)));
        centroids = std::move(next);
        sse = assign_all();
        m.sse_history.push_back(sse);
        m.iterations = it + 1;
        if (shift < tol) break;
    }
    m.centroids = std::move(centroids);
    m.sse = sse;
    return m;
}

}  // namespace detail

// Lloyd's algorithm with k-means++ seeding in z-scored feature space.
inline ClusterModel fit_kmeans(const StateCorpus& corpus, std::size_t k, std::uint64_t seed, double tol = 1e-6,
                               int max_iters = 300) {
    if (k == 0) throw std::invalid_argument("k must be at least 1");
    if (k > corpus.size()) throw std::invalid_argument("k exceeds the corpus size");
    const std::size_t n = corpus.size(), d = corpus.dim();
    const std::vector<double> pts = detail::normalised_points(corpus);
    Rng rng(seed);
    ClusterModel m = detail::lloyd(pts, n, d, detail::kmeanspp_seed(pts, n, d, k, rng), k, tol, max_iters);
    m.stats = corpus.stats;
    return m;
}

inline std::size_t assign(const ClusterModel& model, const Observation& obs) {
    if (obs.size() != model.dim) throw std::invalid_argument("observation dimensionality does not match cluster model");
    std::vector<double> p(model.dim);
    model.stats.apply(obs.values(), p.data());
    return detail::nearest(p.data(), model.centroids, model.k, model.dim);
}

struct SseCurve {
    std::vector<std::size_t> k;
    std::vector<double> sse;
};

struct SseCurveResult {
    SseCurve curve;
    std::vector<ClusterModel> models;  // best model per k
};

// Best-of-restarts SSE per k. Besides the k-means++ restarts, each k > k_min
// also runs Lloyd from the previous best centroids plus the worst-fit point,
// which can never end above the previous SSE.
inline SseCurveResult sse_curve(const StateCorpus& corpus, std::size_t k_min, std::size_t k_max, std::uint64_t seed,
                                int restarts = 5, double tol = 1e-6, int max_iters = 300) {
    if (k_min == 0 || k_max < k_min) throw std::invalid_argument("invalid k range");
    if (k_max > corpus.size()) throw std::invalid_argument("k exceeds the corpus size");
    const std::size_t n = corpus.size(), d = corpus.dim();
    const std::vector<double> pts = detail::normalised_points(corpus);
    SseCurveResult out;
    for (std::size_t k = k_min; k <= k_max; ++k) {
        std::optional<ClusterModel> best;
        for (int r = 0; r < restarts; ++r) {
            Rng rng(mix_seed(seed ^ (k * 1000003ULL + static_cast<std::uint64_t>(r))));
            ClusterModel m = detail::lloyd(pts, n, d, detail::kmeanspp_seed(pts, n, d, k, rng), k, tol, max_iters);
            if (!best || m.sse < best->sse) best = std::move(m);
        }
        if (!out.models.empty()) {
            const ClusterModel& prev = out.models.back();
            std::vector<double> init = prev.centroids;
            std::size_t worst = 0;
            double worst_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                double dist = 0.0;
                detail::nearest(&pts[i * d], prev.centroids, prev.k, d, &dist);
                if (dist > worst_d) {
                    worst_d = dist;
                    worst = i;
                }
            }
            init.insert(init.end(), pts.begin() + worst * d, pts.begin() + (worst + 1) * d);
            ClusterModel m = detail::lloyd(pts, n, d, std::move(init), k, tol, max_iters);
            if (m.sse < best->sse) best = std::move(m);
        }
        best->stats = corpus.stats;
        out.curve.k.push_back(k);
        out.curve.sse.push_back(best->sse);
        out.models.push_back(std::move(*best));
    }
    return out;
}

struct ElbowResult {
    std::size_t k = 1;
    bool confident = false;
    double distance = 0.0;  // normalised distance of the chosen point from the chord
};

// Point of maximum perpendicular distance from the chord joining the curve
// endpoints, with both axes min-max scaled to [0, 1].
inline ElbowResult elbow_k(const SseCurve& curve, double min_distance = 0.05) {
    const std::size_t m = curve.k.size();
    if (m < 3 || curve.sse.size() != m) throw std::invalid_argument("elbow_k needs a curve with at least 3 points");
    const double k0 = static_cast<double>(curve.k.front()), k1 = static_cast<double>(curve.k.back());
    const auto [lo, hi] = std::minmax_element(curve.sse.begin(), curve.sse.end());
    const double span = *hi - *lo;
    if (!(span > 0.0) || k1 <= k0) return {curve.k.front(), false, 0.0};

    auto xs = [&](std::size_t i) { return (static_cast<double>(curve.k[i]) - k0) / (k1 - k0); };
    auto ys = [&](std::size_t i) { return (curve.sse[i] - *lo) / span; };
    const double ax = xs(0), ay = ys(0), bx = xs(m - 1), by = ys(m - 1);
    const double len = std::hypot(bx - ax, by - ay);

    ElbowResult r{curve.k.front(), false, -1.0};
    for (std::size_t i = 0; i < m; ++i) {
        const double dist = std::abs((bx - ax) * (ay - ys(i)) - (ax - xs(i)) * (by - ay)) / len;
        if (dist > r.distance) {
            r.distance = dist;
            r.k = curve.k[i];
        }
    }
    if (r.distance < min_distance) return {curve.k.front(), false, r.distance};
    r.confident = true;
    return r;
}

}  // namespace bpa
