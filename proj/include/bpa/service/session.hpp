#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "bpa/agent.hpp"
#include "bpa/campaign.hpp"
#include "bpa/config.hpp"
#include "bpa/metrics.hpp"

// Live sessions: a training run whose advisor queries are answered by a
// remote trainer. Message layouts are documented in docs/messages.md.
namespace bpa::service {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

inline constexpr int schema_version = 1;

enum class SessionStatus { running, paused, finished };

inline const char* to_string(SessionStatus s) {
    switch (s) {
        case SessionStatus::running: return "running";
        case SessionStatus::paused: return "paused";
        case SessionStatus::finished: return "finished";
    }
    return "?";
}

// Bounded per-subscriber queue. When full, the oldest render frame is
// dropped; control messages (acks, episode summaries, status) never are.
class Outbox {
public:
    explicit Outbox(std::size_t frame_capacity) : capacity_(frame_capacity ? frame_capacity : 1) {}

    void push(std::string msg, bool droppable) {
        {
            std::lock_guard lock(mu_);
            if (droppable) {
                if (frames_ >= capacity_) {
                    for (auto it = items_.begin(); it != items_.end(); ++it) {
                        if (it->droppable) {
                            items_.erase(it);
                            --frames_;
                            ++dropped_;
                            break;
                        }
                    }
                }
                ++frames_;
            }
            items_.push_back({std::move(msg), droppable});
        }
        cv_.notify_all();
        std::function<void()> notify;
        {
            std::lock_guard lock(mu_);
            notify = notify_;
        }
        if (notify) notify();
    }

    std::optional<std::string> try_pop() {
        std::lock_guard lock(mu_);
        return pop_locked();
    }

    std::optional<std::string> pop(std::chrono::milliseconds timeout) {
        std::unique_lock lock(mu_);
        cv_.wait_for(lock, timeout, [&] { return !items_.empty() || closed_; });
        return pop_locked();
    }

    void close() {
        std::function<void()> notify;
        {
            std::lock_guard lock(mu_);
            closed_ = true;
            notify = notify_;
        }
        cv_.notify_all();
        if (notify) notify();
    }

    bool closed() const {
        std::lock_guard lock(mu_);
        return closed_ && items_.empty();
    }

    // Called (from the producer's thread) after every push.
    void set_notify(std::function<void()> fn) {
        std::lock_guard lock(mu_);
        notify_ = std::move(fn);
    }

    std::size_t dropped() const {
        std::lock_guard lock(mu_);
        return dropped_;
    }

private:
    struct Item {
        std::string text;
        bool droppable;
    };

    std::optional<std::string> pop_locked() {
        if (items_.empty()) return std::nullopt;
        Item it = std::move(items_.front());
        items_.pop_front();
        if (it.droppable) --frames_;
        return std::move(it.text);
    }

    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::deque<Item> items_;
    std::size_t capacity_;
    std::size_t frames_ = 0;
    std::size_t dropped_ = 0;
    bool closed_ = false;
    std::function<void()> notify_;
};

struct SessionOptions {
    // Minimum time between decisions; 0 disables pacing.
    std::chrono::milliseconds decision_interval{200};
    // Longest wait for advice on a pending decision.
    std::chrono::milliseconds advice_timeout{200};
    // Auto-pause after this long without trainer activity; 0 disables.
    std::chrono::milliseconds idle_pause{30000};
    std::size_t frame_queue = 64;
    std::filesystem::path output_dir;  // metrics and artifacts; empty keeps nothing
};

inline SessionOptions options_from(const LiveSettings& l) {
    SessionOptions o;
    o.decision_interval = l.decisions_per_second > 0
                              ? std::chrono::milliseconds(static_cast<long>(1000.0 / l.decisions_per_second))
                              : std::chrono::milliseconds(0);
    o.advice_timeout = l.advice_timeout_ms > 0 ? std::chrono::milliseconds(l.advice_timeout_ms) : o.decision_interval;
    o.idle_pause = std::chrono::milliseconds(1000L * l.idle_pause_s);
    o.frame_queue = l.frame_queue;
    return o;
}

inline json store_json(const std::vector<AdviceEntry>& entries) {
    json arr = json::array();
    for (const auto& e : entries)
        arr.push_back({{"cluster", e.cluster}, {"action", e.action.index}, {"probability", e.probability},
                       {"use_count", e.use_count}});
    return arr;
}

inline json rect_json(const Rect& r) { return json::array({r.x_min, r.y_min, r.x_max, r.y_max}); }

// Drawing primitives for the current observation.
inline json render_json(const EnvSpec& env, const Observation& obs) {
    if (env.id == EnvId::cartpole) {
        return {{"kind", "cartpole"},
                {"cart_x", obs[cartpole::position]},
                {"pole_angle", obs[cartpole::angle]},
                {"half_length", env.cartpole.half_length},
                {"position_limit", env.cartpole.position_limit}};
    }
    const NavWorld& w = env.nav;
    json obstacles = json::array();
    for (const auto& o : w.obstacles) obstacles.push_back(rect_json(o));
    return {{"kind", "nav"},
            {"robot", {{"x", obs[nav::x]}, {"y", obs[nav::y]}, {"heading", obs[nav::heading]}, {"radius", w.robot_radius}}},
            {"sensors",
             {{"left", obs[nav::left_sensor]}, {"right", obs[nav::right_sensor]}, {"angle", w.sensor_angle}, {"range", w.sensor_range}}},
            {"arena", rect_json(w.arena)},
            {"obstacles", obstacles},
            {"goal", rect_json(w.goal)}};
}

class Subscription {
public:
    explicit Subscription(std::size_t frame_capacity) : outbox(frame_capacity) {}
    Outbox outbox;
};

class LiveSession final : public AdviceSource, public RunObserver {
public:
    LiveSession(std::string id, RunConfig cfg, SessionOptions opt, std::optional<ClusterModel> model = std::nullopt)
        : id_(std::move(id)), opt_(std::move(opt)) {
        cfg.live_advisor = true;
        cfg.advisor.reset();
        cfg.validate();
        env_ = cfg.env;
        mode_ = cfg.mode;
        run_ = std::make_unique<TrainingRun>(cfg, std::move(model), nullptr);
        run_->set_observer(this);
        run_->set_advice_source(this);
        last_activity_ = Clock::now();
    }

    ~LiveSession() override {
        stop();
        join();
    }

    LiveSession(const LiveSession&) = delete;
    LiveSession& operator=(const LiveSession&) = delete;

    const std::string& id() const { return id_; }
    EnvId env() const { return env_.id; }
    AgentMode mode() const { return mode_; }

    void start() {
        std::lock_guard lock(mu_);
        if (thread_.joinable()) return;
        thread_ = std::thread([this] { loop(); });
    }

    void join() {
        if (thread_.joinable() && thread_.get_id() != std::this_thread::get_id()) thread_.join();
    }

    std::shared_ptr<Subscription> subscribe() {
        auto sub = std::make_shared<Subscription>(opt_.frame_queue);
        std::lock_guard lock(mu_);
        touch_locked();
        if (status_ == SessionStatus::finished) {
            sub->outbox.push(status_message_locked().dump(), false);
            sub->outbox.close();
        } else {
            if (last_state_) sub->outbox.push(*last_state_, true);
            subs_.push_back(sub);
        }
        return sub;
    }

    void unsubscribe(const std::shared_ptr<Subscription>& sub) {
        std::lock_guard lock(mu_);
        std::erase(subs_, sub);
    }

    // Returns the acknowledgment; throws std::invalid_argument for an action
    // index outside the environment's action set.
    json submit_advice(std::uint64_t step, std::size_t action) {
        if (action >= env_.actions()) throw std::invalid_argument("action index out of range for " + std::string(bpa::to_string(env_.id)));
        bool accepted = false;
        {
            std::lock_guard lock(mu_);
            touch_locked();
            if (status_ != SessionStatus::finished && pending_ && *pending_ == step && !advice_) {
                advice_ = EnvAction{action};
                accepted = true;
            }
        }
        if (accepted) cv_.notify_all();
        return {{"v", schema_version}, {"type", "ack"}, {"session", id_}, {"step", step}, {"action", action}, {"stale", !accepted}};
    }

    json pause() {
        std::lock_guard lock(mu_);
        touch_locked();
        if (status_ == SessionStatus::running) status_ = SessionStatus::paused;
        broadcast_locked(status_message_locked().dump(), false);
        return status_message_locked();
    }

    json resume() {
        {
            std::lock_guard lock(mu_);
            touch_locked();
            if (status_ == SessionStatus::paused) status_ = SessionStatus::running;
            broadcast_locked(status_message_locked().dump(), false);
        }
        cv_.notify_all();
        return status();
    }

    json stop() {
        {
            std::lock_guard lock(mu_);
            stop_requested_ = true;
        }
        cv_.notify_all();
        return status();
    }

    json status() const {
        std::lock_guard lock(mu_);
        return status_message_locked();
    }

    SessionStatus status_value() const {
        std::lock_guard lock(mu_);
        return status_;
    }

    // Blocks until the run has finished or the timeout expires.
    bool wait_finished(std::chrono::milliseconds timeout) {
        std::unique_lock lock(mu_);
        return finished_cv_.wait_for(lock, timeout, [&] { return status_ == SessionStatus::finished; });
    }

    std::vector<EpisodeMetrics> episodes() const {
        std::lock_guard lock(mu_);
        return episodes_;
    }

    std::vector<AdviceEntry> store_snapshot() const {
        std::lock_guard lock(mu_);
        return store_;
    }

    std::optional<std::string> error() const {
        std::lock_guard lock(mu_);
        return error_;
    }

    json summary() const {
        std::lock_guard lock(mu_);
        return {{"id", id_},
                {"env", bpa::to_string(env_.id)},
                {"mode", bpa::to_string(mode_)},
                {"status", to_string(status_)},
                {"episode", episode_},
                {"global_step", next_step_}};
    }

    // RunObserver: called before every decision on the loop thread. Publishes
    // the pending state, then blocks while paused.
    bool before_decision(const DecisionPoint& at) override {
        std::unique_lock lock(mu_);
        obs_ = *at.obs;
        epsilon_ = at.epsilon;
        episode_ = at.episode;
        step_in_episode_ = at.step;
        next_step_ = at.global_step;
        if (stop_requested_) return false;
        if (opt_.idle_pause.count() > 0 && status_ == SessionStatus::running &&
            Clock::now() - last_activity_ >= opt_.idle_pause) {
            status_ = SessionStatus::paused;
            json s = status_message_locked();
            s["reason"] = "idle";
            broadcast_locked(s.dump(), false);
        }
        pending_ = next_step_;
        advice_.reset();
        decision_started_ = Clock::now();
        publish_state_locked();
        cv_.wait(lock, [&] { return stop_requested_ || status_ != SessionStatus::paused; });
        if (stop_requested_) {
            pending_.reset();
            return false;
        }
        decision_started_ = Clock::now();
        return true;
    }

    // AdviceSource: waits for advice targeting the pending step.
    std::optional<EnvAction> advise(const DecisionPoint&) override {
        std::unique_lock lock(mu_);
        cv_.wait_until(lock, decision_started_ + opt_.advice_timeout,
                       [&] { return advice_.has_value() || stop_requested_; });
        std::optional<EnvAction> a = advice_;
        pending_.reset();  // anything arriving from now on is stale
        advice_.reset();
        return a;
    }

    void on_step(const StepRecord& rec, const AdviceStore& store) override {
        std::unique_lock lock(mu_);
        next_step_ = rec.at.global_step + 1;
        pending_.reset();
        last_reward_ = rec.outcome.reward;
        last_decision_ = json{{"step", rec.at.global_step},
                              {"action", rec.decision.action.index},
                              {"provenance", bpa::to_string(rec.decision.provenance)}};
        if (rec.decision.cluster) (*last_decision_)["cluster"] = *rec.decision.cluster;
        counters_.count(rec.decision.provenance);
        store_ = store.snapshot();
        if (opt_.decision_interval.count() > 0) {
            const auto until = decision_started_ + opt_.decision_interval;
            cv_.wait_until(lock, until, [&] { return stop_requested_; });
        }
    }

    void on_episode(const EpisodeMetrics& m) override {
        std::lock_guard lock(mu_);
        episodes_.push_back(m);
        counters_ = EpisodeMetrics{};
        json msg = to_json(m);
        msg["v"] = schema_version;
        msg["type"] = "episode";
        msg["session"] = id_;
        broadcast_locked(msg.dump(), false);
    }

private:
    void touch_locked() { last_activity_ = Clock::now(); }

    json status_message_locked() const {
        json s{{"v", schema_version}, {"type", "status"}, {"session", id_}, {"status", to_string(status_)}};
        if (error_) s["error"] = *error_;
        return s;
    }

    void broadcast_locked(const std::string& msg, bool droppable) {
        for (auto& s : subs_) s->outbox.push(msg, droppable);
    }

    void publish_state_locked() {
        json s{{"v", schema_version},
               {"type", "state"},
               {"session", id_},
               {"env", bpa::to_string(env_.id)},
               {"mode", bpa::to_string(mode_)},
               {"episode", episode_},
               {"step", step_in_episode_},
               {"pending_step", next_step_},
               {"observation", obs_->vec()},
               {"render", render_json(env_, *obs_)},
               {"last_reward", last_reward_},
               {"epsilon", epsilon_},
               {"counters",
                {{"advised", counters_.advised}, {"reused", counters_.reused}, {"random", counters_.random}, {"greedy", counters_.greedy}}},
               {"store", store_json(store_)},
               {"status", to_string(status_)}};
        s["last_decision"] = last_decision_ ? *last_decision_ : json(nullptr);
        last_state_ = s.dump();
        broadcast_locked(*last_state_, true);
    }

    void loop() {
        std::ofstream metrics;
        if (!opt_.output_dir.empty()) {
            std::filesystem::create_directories(opt_.output_dir);
            metrics.open(opt_.output_dir / "metrics.jsonl", std::ios::binary | std::ios::trunc);
            write_text(opt_.output_dir / "run.json", describe(run_->config()).dump(2) + "\n");
        }
        try {
            while (run_->episodes_done() < run_->config().hyper.episodes) {
                EpisodeMetrics m = run_->run_episode();
                if (m.steps > 0 && metrics.is_open()) metrics << bpa::to_json(m).dump() << '\n' << std::flush;
                std::lock_guard lock(mu_);
                if (stop_requested_) break;
            }
            if (!opt_.output_dir.empty()) {
                std::ostringstream net;
                run_->learner().network().save(net);
                write_text(opt_.output_dir / "network.txt", net.str());
                write_text(opt_.output_dir / "store.json", store_to_json(run_->store().snapshot()) + "\n");
            }
        } catch (const std::exception& e) {
            std::lock_guard lock(mu_);
            error_ = e.what();
        }
        std::lock_guard lock(mu_);
        status_ = SessionStatus::finished;
        pending_.reset();
        broadcast_locked(status_message_locked().dump(), false);
        for (auto& s : subs_) s->outbox.close();
        subs_.clear();
        finished_cv_.notify_all();
    }

    std::string id_;
    SessionOptions opt_;
    EnvSpec env_;
    AgentMode mode_ = AgentMode::baseline;
    std::unique_ptr<TrainingRun> run_;

    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::condition_variable finished_cv_;
    std::thread thread_;
    std::vector<std::shared_ptr<Subscription>> subs_;

    SessionStatus status_ = SessionStatus::running;
    bool stop_requested_ = false;
    std::optional<std::uint64_t> pending_;
    std::optional<EnvAction> advice_;
    Clock::time_point decision_started_{};
    Clock::time_point last_activity_{};

    std::uint64_t next_step_ = 0;
    int episode_ = 0;
    int step_in_episode_ = 0;
    double last_reward_ = 0.0;
    double epsilon_ = 0.0;
    std::optional<Observation> obs_;
    std::optional<json> last_decision_;
    std::optional<std::string> last_state_;
    EpisodeMetrics counters_;
    std::vector<AdviceEntry> store_;
    std::vector<EpisodeMetrics> episodes_;
    std::optional<std::string> error_;
};

}  // namespace bpa::service
