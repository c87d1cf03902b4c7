#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace bpa {

enum class EnvId { cartpole, nav };

inline std::string_view to_string(EnvId id) { return id == EnvId::cartpole ? "cartpole" : "nav"; }

inline EnvId parse_env_id(std::string_view name) {
    if (name == "cartpole") return EnvId::cartpole;
    if (name == "nav") return EnvId::nav;
    throw std::invalid_argument("unknown environment: " + std::string(name));
}

inline std::size_t observation_size(EnvId id) { return id == EnvId::cartpole ? 4 : 5; }
inline std::size_t action_count(EnvId id) { return id == EnvId::cartpole ? 2 : 3; }

// Real-valued feature vector emitted by an environment.
class Observation {
public:
    Observation() = default;
    explicit Observation(std::vector<double> values) : values_(std::move(values)) {}
    Observation(std::initializer_list<double> values) : values_(values) {}

    std::size_t size() const { return values_.size(); }
    double operator[](std::size_t i) const { return values_[i]; }
    double& operator[](std::size_t i) { return values_[i]; }
    std::span<const double> values() const { return values_; }
    const std::vector<double>& vec() const { return values_; }

    bool finite() const {
        for (double v : values_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    friend bool operator==(const Observation&, const Observation&) = default;

private:
    std::vector<double> values_;
};

struct EnvAction {
    std::size_t index = 0;

    friend bool operator==(EnvAction, EnvAction) = default;
};

inline std::string_view action_label(EnvId env, EnvAction a) {
    static constexpr std::string_view cartpole[] = {"push left", "push right"};
    static constexpr std::string_view nav[] = {"straight", "turn left", "turn right"};
    if (a.index >= action_count(env)) throw std::out_of_range("action index out of range");
    return env == EnvId::cartpole ? cartpole[a.index] : nav[a.index];
}

struct StepOutcome {
    Observation next_obs;
    double reward = 0.0;
    bool terminal = false;
    // Step-limit cut-off, distinct from failure or success.
    bool truncated = false;
};

}  // namespace bpa
