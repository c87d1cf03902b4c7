#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "bpa/rng.hpp"
#include "bpa/types.hpp"

namespace bpa {

struct CartPoleParams {
    double gravity = 9.8;
    double cart_mass = 1.0;
    double pole_mass = 0.1;
    double half_length = 0.5;
    double force_magnitude = 10.0;
    double dt = 0.02;
    double angle_limit = 15.0 * std::numbers::pi / 180.0;
    double position_limit = 2.4;
    int max_steps = 200;

    void validate() const {
        if (!(gravity > 0 && cart_mass > 0 && pole_mass > 0 && half_length > 0 && force_magnitude > 0 &&
              dt > 0 && angle_limit > 0 && position_limit > 0 && max_steps > 0))
            throw std::invalid_argument("cartpole parameters must be positive");
    }
};

namespace cartpole {

enum Feature : std::size_t { position = 0, velocity = 1, angle = 2, angular_velocity = 3 };
inline constexpr EnvAction push_left{0};
inline constexpr EnvAction push_right{1};

inline Observation reset(const CartPoleParams&, Rng& rng) {
    Observation obs(std::vector<double>(4));
    for (std::size_t i = 0; i < 4; ++i) obs[i] = rng.uniform(-0.05, 0.05);
    return obs;
}

inline Observation reset(const CartPoleParams& params, std::uint64_t seed) {
    Rng rng(seed);
    return reset(params, rng);
}

inline bool out_of_bounds(const Observation& s, const CartPoleParams& p) {
    return std::abs(s[angle]) > p.angle_limit || std::abs(s[position]) > p.position_limit;
}

// One semi-implicit Euler step of the classic cart-pole equations of motion
// under an arbitrary horizontal force.
inline Observation integrate(const Observation& s, double force, const CartPoleParams& p) {
    const double total_mass = p.cart_mass + p.pole_mass;
    const double pole_moment = p.pole_mass * p.half_length;
    const double cos_t = std::cos(s[angle]);
    const double sin_t = std::sin(s[angle]);

    const double temp = (force + pole_moment * s[angular_velocity] * s[angular_velocity] * sin_t) / total_mass;
    const double theta_acc = (p.gravity * sin_t - cos_t * temp) /
                             (p.half_length * (4.0 / 3.0 - p.pole_mass * cos_t * cos_t / total_mass));
    const double x_acc = temp - pole_moment * theta_acc * cos_t / total_mass;

    Observation next = s;
    next[velocity] = s[velocity] + p.dt * x_acc;
    next[position] = s[position] + p.dt * next[velocity];
    next[angular_velocity] = s[angular_velocity] + p.dt * theta_acc;
    next[angle] = s[angle] + p.dt * next[angular_velocity];
    return next;
}

inline StepOutcome step(const Observation& obs, EnvAction action, const CartPoleParams& p) {
    if (obs.size() != 4) throw std::invalid_argument("cartpole observation must have 4 features");
    if (!obs.finite()) throw std::domain_error("cartpole observation is not finite");
    if (action.index > 1) throw std::out_of_range("cartpole action must be 0 or 1");

    const double force = action.index == push_right.index ? p.force_magnitude : -p.force_magnitude;
    StepOutcome out;
    out.next_obs = integrate(obs, force, p);
    out.terminal = out_of_bounds(obs, p) || out_of_bounds(out.next_obs, p);
    out.reward = out.terminal ? 0.0 : 1.0;
    return out;
}

// Pushes toward the side the pole is falling.
inline EnvAction oracle(const Observation& obs) {
    const double lean = obs[angle] + 0.5 * obs[angular_velocity];
    return lean < 0.0 ? push_left : push_right;
}

}  // namespace cartpole
}  // namespace bpa
