#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "bpa/agent.hpp"
#include "bpa/config.hpp"
#include "bpa/metrics.hpp"

namespace bpa {

namespace fs = std::filesystem;

inline std::string store_to_json(const std::vector<AdviceEntry>& entries) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : entries)
        arr.push_back({{"cluster", e.cluster}, {"action", e.action.index}, {"probability", e.probability},
                       {"created_at", e.created_at}, {"last_used", e.last_used}, {"use_count", e.use_count}});
    return arr.dump(2);
}

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

// Runs one configuration into `dir`: metrics.jsonl (one line per episode),
// run.json, network.txt and store.json. Metrics lines are flushed per episode.
inline RunResult execute_run(const RunConfig& cfg, const fs::path& dir, std::optional<ClusterModel> model = std::nullopt) {
    fs::create_directories(dir);
    write_text(dir / "run.json", describe(cfg).dump(2) + "\n");
    std::ofstream metrics(dir / "metrics.jsonl", std::ios::binary | std::ios::trunc);
    if (!metrics) throw std::runtime_error("cannot write " + (dir / "metrics.jsonl").string());
    TrainingRun run(cfg, std::move(model));
    if (run.model()) run.model()->save_file((dir / "clusters.txt").string());
    RunResult r = run.run([&](const EpisodeMetrics& m) { metrics << to_json(m).dump() << '\n' << std::flush; });
    std::ostringstream net;
    r.network.save(net);
    write_text(dir / "network.txt", net.str());
    write_text(dir / "store.json", store_to_json(r.store) + "\n");
    return r;
}

struct CampaignRun {
    std::string group;  // "baseline" or "<mode>-<profile>"
    int seed_index = 0;
    RunConfig cfg;

    fs::path relative_dir() const { return fs::path(group) / ("seed-" + std::to_string(seed_index)); }
};

inline std::string group_name(AgentMode mode, const std::optional<AdvisorProfile>& profile) {
    if (mode == AgentMode::baseline || !profile) return "baseline";
    return std::string(to_string(mode)) + "-" + profile->name;
}

// Modes x profiles x repeats; baseline appears once per seed. Every run with
// the same seed index shares all four seeds, so persistent / non-persistent
// pairs see identical environment and advisor randomness.
inline std::vector<CampaignRun> plan_campaign(const Config& c) {
    std::vector<CampaignRun> runs;
    for (AgentMode mode : c.campaign.modes) {
        std::vector<std::optional<AdvisorProfile>> profiles;
        if (mode == AgentMode::baseline)
            profiles.push_back(std::nullopt);
        else
            for (const auto& p : c.campaign.profiles) profiles.push_back(p);
        for (const auto& profile : profiles) {
            for (int i = 0; i < c.campaign.repeats; ++i) {
                CampaignRun r;
                r.cfg = c.run;
                r.cfg.mode = mode;
                r.cfg.advisor = profile;
                r.cfg.live_advisor = false;
                r.cfg.seeds = SeedSet::derive(c.base_seed + static_cast<std::uint64_t>(i));
                r.group = group_name(mode, profile);
                r.seed_index = i;
                r.cfg.validate();
                runs.push_back(std::move(r));
            }
        }
    }
    return runs;
}

struct CampaignProgress {
    std::size_t planned = 0;
    std::size_t skipped = 0;  // already complete on disk
    std::size_t executed = 0;
};

// Executes every planned run whose directory does not exist yet. A run is
// written to "<dir>.partial" and renamed on completion, so an interrupted
// campaign resumes by re-running only the missing runs.
inline CampaignProgress run_campaign(const Config& c, const fs::path& out,
                                     const std::function<void(const CampaignRun&)>& on_done = {}) {
    const auto runs = plan_campaign(c);
    fs::create_directories(out);
    write_text(out / "campaign.json",
               nlohmann::json{{"env", to_string(c.run.env.id)},
                              {"base_seed", c.base_seed},
                              {"repeats", c.campaign.repeats},
                              {"episodes", c.run.hyper.episodes},
                              {"threshold", c.campaign.threshold > 0 ? c.campaign.threshold : default_threshold(c.run.env.id)}}
                       .dump(2) +
                   "\n");

    CampaignProgress progress;
    progress.planned = runs.size();
    std::vector<const CampaignRun*> todo;
    for (const auto& r : runs) {
        if (fs::exists(out / r.relative_dir()))
            ++progress.skipped;
        else
            todo.push_back(&r);
    }

    std::atomic<std::size_t> next{0};
    std::mutex mu;
    std::exception_ptr failure;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= todo.size()) return;
            {
                std::lock_guard lock(mu);
                if (failure) return;
            }
            const CampaignRun& r = *todo[i];
            const fs::path final_dir = out / r.relative_dir();
            fs::path partial = final_dir;
            partial += ".partial";
            try {
                fs::remove_all(partial);
                execute_run(r.cfg, partial);
                fs::rename(partial, final_dir);
                std::lock_guard lock(mu);
                ++progress.executed;
                if (on_done) on_done(r);
            } catch (...) {
                std::lock_guard lock(mu);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };
    const int workers = std::max(1, std::min<int>(c.campaign.workers, static_cast<int>(todo.size())));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);
    return progress;
}

}  // namespace bpa
