#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bpa/agent.hpp"

namespace bpa {

// Element e is the mean of the trailing min(e + 1, window) values.
inline std::vector<double> moving_average(const std::vector<double>& values, std::size_t window = 100) {
    if (window == 0) throw std::invalid_argument("moving_average window must be positive");
    std::vector<double> out(values.size());
    double sum = 0.0;
    for (std::size_t e = 0; e < values.size(); ++e) {
        sum += values[e];
        if (e >= window) sum -= values[e - window];
        out[e] = sum / static_cast<double>(std::min(e + 1, window));
    }
    return out;
}

inline std::optional<std::size_t> episodes_to_threshold(const std::vector<double>& curve, double threshold) {
    for (std::size_t e = 0; e < curve.size(); ++e)
        if (curve[e] >= threshold) return e;
    return std::nullopt;
}

inline double default_threshold(EnvId id) { return id == EnvId::cartpole ? 195.0 : 800.0; }

inline nlohmann::json to_json(const EpisodeMetrics& m) {
    return nlohmann::json{{"episode", m.episode}, {"reward", m.reward},   {"steps", m.steps},
                          {"advised", m.advised}, {"reused", m.reused},   {"random", m.random},
                          {"greedy", m.greedy},   {"epsilon", m.epsilon}, {"store_size", m.store_size},
                          {"terminal", m.terminal}};
}

inline EpisodeMetrics episode_from_json(const nlohmann::json& j) {
    EpisodeMetrics m;
    m.episode = j.at("episode").get<int>();
    m.reward = j.at("reward").get<double>();
    m.steps = j.at("steps").get<int>();
    m.advised = j.at("advised").get<int>();
    m.reused = j.at("reused").get<int>();
    m.random = j.at("random").get<int>();
    m.greedy = j.at("greedy").get<int>();
    m.epsilon = j.at("epsilon").get<double>();
    m.store_size = j.at("store_size").get<std::size_t>();
    m.terminal = j.value("terminal", false);
    return m;
}

inline std::vector<EpisodeMetrics> load_metrics(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read metrics: " + path);
    std::vector<EpisodeMetrics> out;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) out.push_back(episode_from_json(nlohmann::json::parse(line)));
    return out;
}

inline std::vector<double> rewards_of(const std::vector<EpisodeMetrics>& eps) {
    std::vector<double> r;
    r.reserve(eps.size());
    for (const auto& m : eps) r.push_back(m.reward);
    return r;
}

struct InteractionTotals {
    long long advised = 0;
    long long reused = 0;
    long long random = 0;
    long long greedy = 0;
    long long steps = 0;

    void add(const EpisodeMetrics& m) {
        advised += m.advised;
        reused += m.reused;
        random += m.random;
        greedy += m.greedy;
        steps += m.steps;
    }

    double advised_fraction() const { return steps ? static_cast<double>(advised) / static_cast<double>(steps) : 0.0; }

    // "40976 (47.15%)"
    std::string formatted() const {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%lld (%.2f%%)", advised, 100.0 * advised_fraction());
        return buf;
    }
};

inline InteractionTotals interaction_totals(const std::vector<EpisodeMetrics>& eps) {
    InteractionTotals t;
    for (const auto& m : eps) t.add(m);
    return t;
}

}  // namespace bpa
