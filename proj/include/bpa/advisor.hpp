#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "bpa/environment.hpp"
#include "bpa/rng.hpp"

namespace bpa {

// Simulated trainer: `frequency` is the per-step probability of offering
// advice, `accuracy` the probability that offered advice is the oracle action.
struct AdvisorProfile {
    std::string name;
    double frequency = 0.0;
    double accuracy = 0.0;

    void validate() const {
        if (!(frequency >= 0.0 && frequency <= 1.0)) throw std::invalid_argument("advisor frequency must lie in [0, 1]");
        if (!(accuracy >= 0.0 && accuracy <= 1.0)) throw std::invalid_argument("advisor accuracy must lie in [0, 1]");
    }

    static AdvisorProfile pessimistic() { return {"pessimistic", 0.23658, 0.47435}; }
    static AdvisorProfile realistic() { return {"realistic", 0.47316, 0.9487}; }
    static AdvisorProfile optimistic() { return {"optimistic", 1.0, 1.0}; }

    static AdvisorProfile named(std::string_view name) {
        if (name == "pessimistic") return pessimistic();
        if (name == "realistic") return realistic();
        if (name == "optimistic") return optimistic();
        throw std::invalid_argument("unknown advisor profile: " + std::string(name));
    }
};

// Inaccurate advice is drawn uniformly from the actions other than the oracle's.
inline std::optional<EnvAction> maybe_advise(const AdvisorProfile& profile, const Observation& obs,
                                             const EnvSpec& env, Rng& rng) {
    if (rng.uniform() >= profile.frequency) return std::nullopt;
    const EnvAction best = oracle_action(env, obs);
    if (rng.uniform() < profile.accuracy) return best;
    const std::size_t pick = rng.uniform_index(env.actions() - 1);
    return EnvAction{pick < best.index ? pick : pick + 1};
}

}  // namespace bpa
