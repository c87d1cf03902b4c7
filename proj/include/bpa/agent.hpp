#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "bpa/advice_store.hpp"
#include "bpa/advisor.hpp"
#include "bpa/environment.hpp"
#include "bpa/kmeans.hpp"
#include "bpa/learner.hpp"
#include "bpa/rng.hpp"

namespace bpa {

enum class AgentMode { baseline, non_persistent, persistent };

inline std::string_view to_string(AgentMode m) {
    switch (m) {
        case AgentMode::baseline: return "baseline";
        case AgentMode::non_persistent: return "non_persistent";
        case AgentMode::persistent: return "persistent";
    }
    return "?";
}

inline AgentMode parse_agent_mode(std::string_view s) {
    if (s == "baseline") return AgentMode::baseline;
    if (s == "non_persistent" || s == "non-persistent") return AgentMode::non_persistent;
    if (s == "persistent") return AgentMode::persistent;
    throw std::invalid_argument("unknown agent mode: " + std::string(s));
}

// Which branch of the decision procedure produced an action.
enum class Provenance { advised, reused, random, greedy };

inline std::string_view to_string(Provenance p) {
    switch (p) {
        case Provenance::advised: return "advised";
        case Provenance::reused: return "reused";
        case Provenance::random: return "random";
        case Provenance::greedy: return "greedy";
    }
    return "?";
}

struct DecisionPoint {
    int episode = 0;
    int step = 0;                 // within the episode
    std::uint64_t global_step = 0;  // across the run; the advice window key
    const Observation* obs = nullptr;
    double epsilon = 0.0;
};

// Trainer feedback, queried once per decision step.
class AdviceSource {
public:
    virtual ~AdviceSource() = default;
    virtual std::optional<EnvAction> advise(const DecisionPoint& at) = 0;
};

// Profile-driven simulated trainer with its own random stream.
class SimulatedAdvisor final : public AdviceSource {
public:
    SimulatedAdvisor(AdvisorProfile profile, EnvSpec env, Rng rng)
        : profile_(std::move(profile)), env_(std::move(env)), rng_(rng) {
        profile_.validate();
    }

    std::optional<EnvAction> advise(const DecisionPoint& at) override {
        return maybe_advise(profile_, *at.obs, env_, rng_);
    }

private:
    AdvisorProfile profile_;
    EnvSpec env_;
    Rng rng_;
};

struct Decision {
    EnvAction action{};
    Provenance provenance = Provenance::greedy;
    std::optional<std::size_t> cluster;
};

// Random streams consumed by choose_action: exploration coin and random
// actions come from `learner`, reuse draws from `ppr`.
struct DecisionRngs {
    Rng& learner;
    Rng& ppr;
};

// Advice first (executed unconditionally and, when persistent, stored under
// the state's cluster); otherwise with probability epsilon reuse stored advice
// for the cluster or fall back to a random action; otherwise act greedily.
inline Decision choose_action(AgentMode mode, const DecisionPoint& at, const QNetwork& net, AdviceStore& store,
                              const ClusterModel* model, AdviceSource* advisor, DecisionRngs rngs) {
    const Observation& obs = *at.obs;
    const std::size_t actions = net.output_size();
    if (mode == AgentMode::persistent && model == nullptr)
        throw std::invalid_argument("persistent mode requires a cluster model");

    if (mode != AgentMode::baseline && advisor != nullptr) {
        if (auto advice = advisor->advise(at)) {
            if (advice->index >= actions) throw std::out_of_range("advised action out of range");
            Decision d{*advice, Provenance::advised, std::nullopt};
            if (mode == AgentMode::persistent) {
                d.cluster = assign(*model, obs);
                store.record(*d.cluster, *advice, at.global_step);
            }
            return d;
        }
    }

    if (rngs.learner.uniform() < at.epsilon) {
        if (mode == AgentMode::persistent) {
            const std::size_t cluster = assign(*model, obs);
            if (auto reused = store.retrieve(cluster, rngs.ppr, at.global_step))
                return {*reused, Provenance::reused, cluster};
        }
        return {EnvAction{rngs.learner.uniform_index(actions)}, Provenance::random, std::nullopt};
    }
    return {greedy_action(net, obs), Provenance::greedy, std::nullopt};
}

struct EpisodeMetrics {
    int episode = 0;
    double reward = 0.0;
    int steps = 0;
    int advised = 0;
    int reused = 0;
    int random = 0;
    int greedy = 0;
    double epsilon = 0.0;
    std::size_t store_size = 0;
    bool terminal = false;

    void count(Provenance p) {
        switch (p) {
            case Provenance::advised: ++advised; break;
            case Provenance::reused: ++reused; break;
            case Provenance::random: ++random; break;
            case Provenance::greedy: ++greedy; break;
        }
    }

    friend bool operator==(const EpisodeMetrics&, const EpisodeMetrics&) = default;
};

struct ClusterSettings {
    std::size_t k = 0;  // 0 selects k with the elbow criterion over 1..9
    std::size_t corpus_size = 50000;
    CollectionPolicy policy = CollectionPolicy::random;
    std::string model_path;  // load instead of fitting when set
};

struct RunConfig {
    EnvSpec env{};
    AgentMode mode = AgentMode::baseline;
    std::optional<AdvisorProfile> advisor;
    bool live_advisor = false;
    Hyperparams hyper{};
    PprParams ppr{};
    ClusterSettings clusters{};
    SeedSet seeds{};
    std::string output_path;

    void validate() const {
        env.validate();
        hyper.validate();
        ppr.validate();
        if (mode != AgentMode::baseline && !advisor && !live_advisor)
            throw std::invalid_argument(std::string(to_string(mode)) + " mode requires an advisor profile");
        if (advisor) advisor->validate();
    }
};

inline std::size_t default_cluster_count(EnvId id) { return id == EnvId::cartpole ? 3 : 4; }

// Corpus collection and k-means fit for persistent runs (or load from file).
inline ClusterModel prepare_cluster_model(const RunConfig& cfg) {
    if (!cfg.clusters.model_path.empty()) {
        ClusterModel m = ClusterModel::load_file(cfg.clusters.model_path);
        if (m.dim != cfg.env.obs_size()) throw std::invalid_argument("cluster model does not match the environment");
        return m;
    }
    const StateCorpus corpus = collect_states(cfg.env, cfg.clusters.corpus_size, mix_seed(cfg.seeds.env), cfg.clusters.policy);
    const std::uint64_t seed = mix_seed(cfg.seeds.env ^ 0x6b6d65616e73ULL);
    if (cfg.clusters.k > 0) return fit_kmeans(corpus, cfg.clusters.k, seed);
    SseCurveResult curve = sse_curve(corpus, 1, 9, seed);
    const std::size_t k = elbow_k(curve.curve).k;
    return std::move(curve.models[k - 1]);
}

struct StepRecord {
    DecisionPoint at;
    Decision decision;
    StepOutcome outcome;
};

// Optional per-step and per-episode callbacks (live console, tracing).
class RunObserver {
public:
    virtual ~RunObserver() = default;
    virtual void on_step(const StepRecord&, const AdviceStore&) {}
    virtual void on_episode(const EpisodeMetrics&) {}
    // Called before every decision; returning false ends the run early.
    virtual bool before_decision(const DecisionPoint&) { return true; }
};

class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(int episode, const std::string& what)
        : std::runtime_error("training diverged in episode " + std::to_string(episode) + ": " + what), episode_(episode) {}
    int episode() const { return episode_; }

private:
    int episode_;
};

struct RunResult {
    std::vector<EpisodeMetrics> episodes;
    QNetwork network;
    std::vector<AdviceEntry> store;
    bool stopped_early = false;
};

// Owns every component of one training run.
class TrainingRun {
public:
    TrainingRun(RunConfig cfg, std::optional<ClusterModel> model = std::nullopt,
                std::unique_ptr<AdviceSource> advisor = nullptr)
        : cfg_(std::move(cfg)), env_(cfg_.env), rngs_(cfg_.seeds), store_(cfg_.ppr),
          learner_(cfg_.env.obs_size(), cfg_.env.actions(), cfg_.hyper, rngs_.learner), advisor_(std::move(advisor)) {
        cfg_.validate();
        if (cfg_.mode == AgentMode::persistent) model_ = model ? std::move(*model) : prepare_cluster_model(cfg_);
        if (!advisor_ && cfg_.mode != AgentMode::baseline && cfg_.advisor)
            advisor_ = std::make_unique<SimulatedAdvisor>(*cfg_.advisor, cfg_.env, rngs_.advisor);
    }

    const RunConfig& config() const { return cfg_; }
    const DqnLearner& learner() const { return learner_; }
    const AdviceStore& store() const { return store_; }
    const ClusterModel* model() const { return model_ ? &*model_ : nullptr; }
    int episodes_done() const { return episode_; }
    void set_observer(RunObserver* obs) { observer_ = obs; }
    // Non-owning override of the advice source (live sessions).
    void set_advice_source(AdviceSource* src) { external_advisor_ = src; }

    // Plays one episode, learning from every transition regardless of provenance.
    EpisodeMetrics run_episode() {
        EpisodeMetrics m;
        m.episode = episode_;
        m.epsilon = epsilon_at(episode_, cfg_.hyper);
        Observation obs = env_.reset(rngs_.env);
        try {
            for (;;) {
                DecisionPoint at{episode_, m.steps, global_step_, &obs, m.epsilon};
                if (observer_ && !observer_->before_decision(at)) {
                    stopped_ = true;
                    break;
                }
                const Decision d = choose_action(cfg_.mode, at, learner_.network(), store_, model(),
                                                 external_advisor_ ? external_advisor_ : advisor_.get(),
                                                 DecisionRngs{rngs_.learner, rngs_.ppr});
                const StepOutcome out = env_.step(d.action);
                learner_.observe(Transition{obs, d.action.index, out.reward, out.next_obs, out.terminal}, rngs_.learner);
                store_.on_env_step();
                m.count(d.provenance);
                m.reward += out.reward;
                ++m.steps;
                ++global_step_;
                if (observer_) observer_->on_step(StepRecord{at, d, out}, store_);
                obs = out.next_obs;
                if (out.terminal || out.truncated) {
                    m.terminal = out.terminal;
                    break;
                }
            }
        } catch (const std::runtime_error& e) {
            throw TrainingDiverged(episode_, e.what());
        }
        m.store_size = store_.size();
        ++episode_;
        if (observer_) observer_->on_episode(m);
        return m;
    }

    RunResult run(const std::function<void(const EpisodeMetrics&)>& sink = {}) {
        RunResult r;
        while (episode_ < cfg_.hyper.episodes && !stopped_) {
            EpisodeMetrics m = run_episode();
            if (stopped_ && m.steps == 0) break;
            if (sink) sink(m);
            r.episodes.push_back(m);
        }
        r.network = learner_.network();
        r.store = store_.snapshot();
        r.stopped_early = stopped_;
        return r;
    }

private:
    RunConfig cfg_;
    Environment env_;
    RngSet rngs_;
    AdviceStore store_;
    DqnLearner learner_;
    std::optional<ClusterModel> model_;
    std::unique_ptr<AdviceSource> advisor_;
    RunObserver* observer_ = nullptr;
    AdviceSource* external_advisor_ = nullptr;
    int episode_ = 0;
    std::uint64_t global_step_ = 0;
    bool stopped_ = false;
};

inline RunResult run_training(const RunConfig& cfg, const std::function<void(const EpisodeMetrics&)>& sink = {}) {
    TrainingRun run(cfg);
    return run.run(sink);
}

}  // namespace bpa
