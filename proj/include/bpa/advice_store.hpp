#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "bpa/rng.hpp"
#include "bpa/types.hpp"

namespace bpa {

// How the reuse probability shrinks.
enum class DecayRule {
    multiplicative_per_retrieval,  // p <- p * factor on every retrieval attempt of that entry
    subtractive_per_retrieval,     // p <- max(0, p - step) on every retrieval attempt
    multiplicative_per_env_step,   // every entry decays by factor once per environment step
};

inline std::string_view to_string(DecayRule r) {
    switch (r) {
        case DecayRule::multiplicative_per_retrieval: return "multiplicative-per-retrieval";
        case DecayRule::subtractive_per_retrieval: return "subtractive-per-retrieval";
        case DecayRule::multiplicative_per_env_step: return "multiplicative-per-env-step";
    }
    return "?";
}

inline DecayRule parse_decay_rule(std::string_view s) {
    if (s == "multiplicative-per-retrieval") return DecayRule::multiplicative_per_retrieval;
    if (s == "subtractive-per-retrieval") return DecayRule::subtractive_per_retrieval;
    if (s == "multiplicative-per-env-step") return DecayRule::multiplicative_per_env_step;
    throw std::invalid_argument("unknown ppr decay rule: " + std::string(s));
}

struct PprParams {
    double initial_probability = 0.8;
    double decay_factor = 0.95;
    double decay_step = 0.05;
    DecayRule rule = DecayRule::multiplicative_per_retrieval;

    void validate() const {
        if (!(initial_probability >= 0.0 && initial_probability <= 1.0))
            throw std::invalid_argument("ppr initial probability must lie in [0, 1]");
        if (!(decay_factor >= 0.0 && decay_factor <= 1.0)) throw std::invalid_argument("ppr decay factor must lie in [0, 1]");
        if (!(decay_step >= 0.0 && decay_step <= 1.0)) throw std::invalid_argument("ppr decay step must lie in [0, 1]");
    }
};

struct AdviceEntry {
    std::size_t cluster = 0;
    EnvAction action{};
    double probability = 0.0;
    std::uint64_t created_at = 0;
    std::uint64_t last_used = 0;
    std::uint64_t use_count = 0;

    friend bool operator==(const AdviceEntry&, const AdviceEntry&) = default;
};

// Probabilistic policy reuse memory keyed by cluster id.
class AdviceStore {
public:
    AdviceStore() = default;
    explicit AdviceStore(PprParams params) : params_(params) { params_.validate(); }

    const PprParams& params() const { return params_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    // Inserts or overwrites the entry for `cluster`; re-advice resets p.
    void record(std::size_t cluster, EnvAction action, std::uint64_t step) {
        AdviceEntry& e = entries_[cluster];
        e.cluster = cluster;
        e.action = action;
        e.probability = params_.initial_probability;
        e.created_at = step;
        e.last_used = step;
        e.use_count = 0;
    }

    std::optional<EnvAction> retrieve(std::size_t cluster, Rng& rng, std::uint64_t step = 0) {
        auto it = entries_.find(cluster);
        if (it == entries_.end()) return std::nullopt;
        return retrieve_with_draw(it->second, rng.uniform(), step);
    }

    // Same as retrieve() with the uniform draw supplied by the caller.
    std::optional<EnvAction> retrieve_with_draw(std::size_t cluster, double u, std::uint64_t step = 0) {
        auto it = entries_.find(cluster);
        if (it == entries_.end()) return std::nullopt;
        return retrieve_with_draw(it->second, u, step);
    }

    // Per-environment-step hook; only the per-env-step rule acts on it.
    void on_env_step() {
        if (params_.rule != DecayRule::multiplicative_per_env_step) return;
        for (auto& [id, e] : entries_) e.probability *= params_.decay_factor;
    }

    const AdviceEntry* find(std::size_t cluster) const {
        auto it = entries_.find(cluster);
        return it == entries_.end() ? nullptr : &it->second;
    }

    // Copy of all entries ordered by cluster id.
    std::vector<AdviceEntry> snapshot() const {
        std::vector<AdviceEntry> out;
        out.reserve(entries_.size());
        for (const auto& [id, e] : entries_) out.push_back(e);
        return out;
    }

private:
    std::optional<EnvAction> retrieve_with_draw(AdviceEntry& e, double u, std::uint64_t step) {
        const bool reuse = u < e.probability;
        switch (params_.rule) {
            case DecayRule::multiplicative_per_retrieval: e.probability *= params_.decay_factor; break;
            case DecayRule::subtractive_per_retrieval:
                e.probability = std::max(0.0, e.probability - params_.decay_step);
                break;
            case DecayRule::multiplicative_per_env_step: break;
        }
        if (!reuse) return std::nullopt;
        e.last_used = step;
        ++e.use_count;
        return e.action;
    }

    PprParams params_{};
    std::map<std::size_t, AdviceEntry> entries_;
};

}  // namespace bpa
