#pragma once

#include <cstdint>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "bpa/agent.hpp"
#include "bpa/metrics.hpp"

// JSON configuration: see docs/config.md for the schema.
namespace bpa {

using nlohmann::json;

struct CampaignSettings {
    std::vector<AgentMode> modes{AgentMode::baseline, AgentMode::non_persistent, AgentMode::persistent};
    std::vector<AdvisorProfile> profiles{AdvisorProfile::optimistic(), AdvisorProfile::realistic(),
                                        AdvisorProfile::pessimistic()};
    int repeats = 5;
    int workers = 1;
    double threshold = 0.0;  // 0 selects the environment default
};

struct LiveSettings {
    double decisions_per_second = 5.0;
    int advice_timeout_ms = 200;  // 0 derives it from the pacing
    int idle_pause_s = 30;
    std::size_t frame_queue = 64;
};

struct Config {
    RunConfig run;
    std::uint64_t base_seed = 0;
    bool explicit_seeds = false;
    bool explicit_k = false;  // clusters.k given in the file
    CampaignSettings campaign;
    LiveSettings live;
};

namespace detail {

inline double deg(const json& j, const char* key, double fallback_rad) {
    return j.contains(key) ? j.at(key).get<double>() * std::numbers::pi / 180.0 : fallback_rad;
}

inline Rect rect_from(const json& j) {
    if (!j.is_array() || j.size() != 4) throw std::invalid_argument("rectangles are [x_min, y_min, x_max, y_max]");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

inline AdvisorProfile profile_from(const json& j) {
    if (j.is_string()) return AdvisorProfile::named(j.get<std::string>());
    AdvisorProfile p{j.value("name", std::string("custom")), j.at("frequency").get<double>(),
                     j.at("accuracy").get<double>()};
    p.validate();
    return p;
}

}  // namespace detail

inline CartPoleParams parse_cartpole(const json& j, CartPoleParams p = {}) {
    p.gravity = j.value("gravity", p.gravity);
    p.cart_mass = j.value("cart_mass", p.cart_mass);
    p.pole_mass = j.value("pole_mass", p.pole_mass);
    p.half_length = j.value("half_length", p.half_length);
    p.force_magnitude = j.value("force", p.force_magnitude);
    p.dt = j.value("dt", p.dt);
    p.angle_limit = detail::deg(j, "angle_limit_deg", p.angle_limit);
    p.position_limit = j.value("position_limit", p.position_limit);
    p.max_steps = j.value("max_steps", p.max_steps);
    p.validate();
    return p;
}

inline NavWorld parse_nav_world(const json& j, NavWorld w = {}) {
    if (j.contains("arena")) w.arena = detail::rect_from(j.at("arena"));
    if (j.contains("obstacles")) {
        w.obstacles.clear();
        for (const auto& r : j.at("obstacles")) w.obstacles.push_back(detail::rect_from(r));
    }
    if (j.contains("start")) {
        const auto& s = j.at("start");
        w.start = {s.at("x").get<double>(), s.at("y").get<double>(),
                   s.value("heading_deg", w.start.heading * 180.0 / std::numbers::pi) * std::numbers::pi / 180.0};
    }
    if (j.contains("goal")) w.goal = detail::rect_from(j.at("goal"));
    if (j.contains("route")) {
        w.route.clear();
        for (const auto& p : j.at("route")) w.route.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    }
    w.speed = j.value("speed", w.speed);
    w.turn_increment = detail::deg(j, "turn_deg", w.turn_increment);
    w.dt = j.value("dt", w.dt);
    w.sensor_angle = detail::deg(j, "sensor_angle_deg", w.sensor_angle);
    w.sensor_range = j.value("sensor_range", w.sensor_range);
    w.robot_radius = j.value("robot_radius", w.robot_radius);
    w.max_steps = j.value("max_steps", w.max_steps);
    w.validate();
    return w;
}

inline Hyperparams parse_hyperparams(const json& j, Hyperparams h = {}) {
    h.epsilon_start = j.value("epsilon_start", h.epsilon_start);
    h.epsilon_decay = j.value("epsilon_decay", h.epsilon_decay);
    h.epsilon_floor = j.value("epsilon_floor", h.epsilon_floor);
    h.learning_rate = j.value("learning_rate", h.learning_rate);
    h.gamma = j.value("gamma", h.gamma);
    h.episodes = j.value("episodes", h.episodes);
    h.batch_size = j.value("batch_size", h.batch_size);
    h.target_sync = j.value("target_sync", h.target_sync);
    h.replay_capacity = j.value("replay_capacity", h.replay_capacity);
    if (j.contains("hidden")) h.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    h.max_grad_norm = j.value("max_grad_norm", h.max_grad_norm);
    h.validate();
    return h;
}

inline Config parse_config(const json& j) {
    Config c;
    RunConfig& r = c.run;
    if (j.contains("env")) {
        const json& e = j.at("env");
        r.env.id = parse_env_id(e.value("id", std::string("cartpole")));
        if (e.contains("cartpole")) r.env.cartpole = parse_cartpole(e.at("cartpole"));
        if (e.contains("nav")) r.env.nav = parse_nav_world(e.at("nav"));
    }
    r.clusters.k = default_cluster_count(r.env.id);
    if (j.contains("mode")) r.mode = parse_agent_mode(j.at("mode").get<std::string>());
    if (j.contains("advisor") && !j.at("advisor").is_null()) {
        const json& a = j.at("advisor");
        if (a.is_string() && a.get<std::string>() == "live")
            r.live_advisor = true;
        else
            r.advisor = detail::profile_from(a);
    }
    if (j.contains("hyperparams")) r.hyper = parse_hyperparams(j.at("hyperparams"));
    if (j.contains("ppr")) {
        const json& p = j.at("ppr");
        r.ppr.initial_probability = p.value("initial_probability", r.ppr.initial_probability);
        r.ppr.decay_factor = p.value("decay_factor", r.ppr.decay_factor);
        r.ppr.decay_step = p.value("decay_step", r.ppr.decay_step);
        if (p.contains("decay")) r.ppr.rule = parse_decay_rule(p.at("decay").get<std::string>());
        r.ppr.validate();
    }
    if (j.contains("clusters")) {
        const json& k = j.at("clusters");
        if (k.contains("k")) {
            const json& kv = k.at("k");
            c.explicit_k = true;
            r.clusters.k = kv.is_string() && kv.get<std::string>() == "elbow" ? 0 : kv.get<std::size_t>();
        }
        r.clusters.corpus_size = k.value("corpus_size", r.clusters.corpus_size);
        const std::string policy = k.value("policy", std::string("random"));
        if (policy != "random" && policy != "oracle") throw std::invalid_argument("clusters.policy must be random or oracle");
        r.clusters.policy = policy == "oracle" ? CollectionPolicy::oracle : CollectionPolicy::random;
        r.clusters.model_path = k.value("model", std::string());
    }
    if (j.contains("seeds")) {
        const json& s = j.at("seeds");
        c.base_seed = s.value("base", std::uint64_t{0});
        r.seeds = SeedSet::derive(c.base_seed);
        if (s.contains("env") || s.contains("learner") || s.contains("advisor") || s.contains("ppr")) {
            c.explicit_seeds = true;
            r.seeds.env = s.value("env", r.seeds.env);
            r.seeds.learner = s.value("learner", r.seeds.learner);
            r.seeds.advisor = s.value("advisor", r.seeds.advisor);
            r.seeds.ppr = s.value("ppr", r.seeds.ppr);
        }
    } else {
        r.seeds = SeedSet::derive(0);
    }
    if (j.contains("campaign")) {
        const json& cj = j.at("campaign");
        if (cj.contains("modes")) {
            c.campaign.modes.clear();
            for (const auto& m : cj.at("modes")) c.campaign.modes.push_back(parse_agent_mode(m.get<std::string>()));
        }
        if (cj.contains("profiles")) {
            c.campaign.profiles.clear();
            for (const auto& p : cj.at("profiles")) c.campaign.profiles.push_back(detail::profile_from(p));
        }
        c.campaign.repeats = cj.value("repeats", c.campaign.repeats);
        c.campaign.workers = cj.value("workers", c.campaign.workers);
        c.campaign.threshold = cj.value("threshold", c.campaign.threshold);
        if (c.campaign.repeats < 1 || c.campaign.workers < 1)
            throw std::invalid_argument("campaign repeats and workers must be positive");
    }
    if (j.contains("live")) {
        const json& l = j.at("live");
        c.live.decisions_per_second = l.value("decisions_per_second", c.live.decisions_per_second);
        c.live.advice_timeout_ms = l.value("advice_timeout_ms", c.live.advice_timeout_ms);
        c.live.idle_pause_s = l.value("idle_pause_s", c.live.idle_pause_s);
        c.live.frame_queue = l.value("frame_queue", c.live.frame_queue);
    }
    r.output_path = j.value("output", std::string());
    return c;
}

inline Config load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config: " + path);
    json j;
    try {
        j = json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw std::runtime_error("config " + path + ": " + e.what());
    }
    return parse_config(j);
}

// Echo of the effective run configuration, stored next to every run's metrics.
inline json describe(const RunConfig& r) {
    json j{{"env", to_string(r.env.id)},
           {"mode", to_string(r.mode)},
           {"episodes", r.hyper.episodes},
           {"seeds", {{"env", r.seeds.env}, {"learner", r.seeds.learner}, {"advisor", r.seeds.advisor}, {"ppr", r.seeds.ppr}}},
           {"hyperparams",
            {{"epsilon_start", r.hyper.epsilon_start},
             {"epsilon_decay", r.hyper.epsilon_decay},
             {"epsilon_floor", r.hyper.epsilon_floor},
             {"learning_rate", r.hyper.learning_rate},
             {"gamma", r.hyper.gamma},
             {"batch_size", r.hyper.batch_size},
             {"target_sync", r.hyper.target_sync},
             {"replay_capacity", r.hyper.replay_capacity},
             {"hidden", r.hyper.hidden},
             {"max_grad_norm", r.hyper.max_grad_norm}}},
           {"ppr",
            {{"initial_probability", r.ppr.initial_probability},
             {"decay_factor", r.ppr.decay_factor},
             {"decay_step", r.ppr.decay_step},
             {"decay", to_string(r.ppr.rule)}}},
           {"clusters", {{"k", r.clusters.k}, {"corpus_size", r.clusters.corpus_size}}}};
    if (r.advisor)
        j["advisor"] = {{"name", r.advisor->name}, {"frequency", r.advisor->frequency}, {"accuracy", r.advisor->accuracy}};
    else if (r.live_advisor)
        j["advisor"] = "live";
    return j;
}

}  // namespace bpa
