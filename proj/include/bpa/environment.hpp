#pragma once

#include <stdexcept>
#include <variant>

#include "bpa/cartpole.hpp"
#include "bpa/nav.hpp"
#include "bpa/rng.hpp"
#include "bpa/types.hpp"

namespace bpa {

// Task definition: which MDP and its parameters.
struct EnvSpec {
    EnvId id = EnvId::cartpole;
    CartPoleParams cartpole{};
    NavWorld nav{};

    void validate() const {
        if (id == EnvId::cartpole)
            cartpole.validate();
        else
            nav.validate();
    }

    int max_steps() const { return id == EnvId::cartpole ? cartpole.max_steps : nav.max_steps; }
    std::size_t obs_size() const { return observation_size(id); }
    std::size_t actions() const { return action_count(id); }
};

inline EnvAction oracle_action(const EnvSpec& env, const Observation& obs) {
    if (obs.size() != env.obs_size()) throw std::invalid_argument("observation does not match environment");
    return env.id == EnvId::cartpole ? cartpole::oracle(obs) : nav::oracle(obs, env.nav);
}

// Stateful episode driver around the pure step functions; enforces the step cap.
class Environment {
public:
    explicit Environment(EnvSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

    const EnvSpec& spec() const { return spec_; }
    EnvId id() const { return spec_.id; }
    const Observation& observation() const { return obs_; }
    int steps() const { return steps_; }

    const Observation& reset(Rng& rng) {
        obs_ = spec_.id == EnvId::cartpole ? cartpole::reset(spec_.cartpole, rng) : nav::reset(spec_.nav);
        steps_ = 0;
        return obs_;
    }

    StepOutcome step(EnvAction action) {
        if (steps_ >= spec_.max_steps()) throw std::logic_error("episode already reached its step cap");
        StepOutcome out = spec_.id == EnvId::cartpole ? cartpole::step(obs_, action, spec_.cartpole)
                                                       : nav::step(obs_, action, spec_.nav);
        ++steps_;
        if (!out.terminal && steps_ >= spec_.max_steps()) out.truncated = true;
        obs_ = out.next_obs;
        return out;
    }

private:
    EnvSpec spec_;
    Observation obs_;
    int steps_ = 0;
};

}  // namespace bpa
