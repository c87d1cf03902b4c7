#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bpa/campaign.hpp"
#include "bpa/metrics.hpp"

namespace bpa {

struct SeedRun {
    int seed_index = 0;
    std::vector<EpisodeMetrics> episodes;
};

struct GroupReport {
    std::string group;
    std::vector<SeedRun> runs;
    // Moving-average band across seeds, per episode.
    std::vector<double> ma_mean, ma_min, ma_max;
    std::vector<std::optional<std::size_t>> episodes_to_threshold;  // per seed
    double mean_episodes_to_threshold = 0.0;  // runs that never cross count as the episode budget
    double final_ma_mean = 0.0, final_ma_min = 0.0, final_ma_max = 0.0;
    InteractionTotals totals;
};

struct CampaignReport {
    std::string env;
    double threshold = 0.0;
    std::vector<GroupReport> groups;  // sorted by name

    const GroupReport* find(const std::string& name) const {
        for (const auto& g : groups)
            if (g.group == name) return &g;
        return nullptr;
    }
};

inline GroupReport aggregate_group(std::string name, std::vector<SeedRun> runs, double threshold, std::size_t window = 100) {
    GroupReport g;
    g.group = std::move(name);
    g.runs = std::move(runs);
    std::sort(g.runs.begin(), g.runs.end(), [](const SeedRun& a, const SeedRun& b) { return a.seed_index < b.seed_index; });
    if (g.runs.empty()) return g;

    std::size_t len = std::numeric_limits<std::size_t>::max();
    std::vector<std::vector<double>> curves;
    for (const auto& r : g.runs) {
        for (const auto& m : r.episodes) g.totals.add(m);
        curves.push_back(moving_average(rewards_of(r.episodes), window));
        len = std::min(len, curves.back().size());
    }
    g.ma_mean.assign(len, 0.0);
    g.ma_min.assign(len, std::numeric_limits<double>::infinity());
    g.ma_max.assign(len, -std::numeric_limits<double>::infinity());
    for (const auto& c : curves) {
        for (std::size_t e = 0; e < len; ++e) {
            g.ma_mean[e] += c[e] / static_cast<double>(curves.size());
            g.ma_min[e] = std::min(g.ma_min[e], c[e]);
            g.ma_max[e] = std::max(g.ma_max[e], c[e]);
        }
    }

    double e2t_sum = 0.0, final_sum = 0.0;
    g.final_ma_min = std::numeric_limits<double>::infinity();
    g.final_ma_max = -std::numeric_limits<double>::infinity();
    for (const auto& c : curves) {
        const auto e2t = bpa::episodes_to_threshold(c, threshold);
        g.episodes_to_threshold.push_back(e2t);
        e2t_sum += static_cast<double>(e2t ? *e2t : c.size());
        const double fin = c.empty() ? 0.0 : c.back();
        final_sum += fin;
        g.final_ma_min = std::min(g.final_ma_min, fin);
        g.final_ma_max = std::max(g.final_ma_max, fin);
    }
    g.mean_episodes_to_threshold = e2t_sum / static_cast<double>(curves.size());
    g.final_ma_mean = final_sum / static_cast<double>(curves.size());
    return g;
}

// Reads every completed run under a campaign directory (partial runs are ignored).
inline CampaignReport load_campaign(const fs::path& dir, double threshold_override = 0.0) {
    CampaignReport rep;
    std::ifstream meta(dir / "campaign.json");
    if (!meta) throw std::runtime_error("not a campaign directory (campaign.json missing): " + dir.string());
    const auto j = nlohmann::json::parse(meta);
    rep.env = j.at("env").get<std::string>();
    rep.threshold = threshold_override > 0 ? threshold_override : j.at("threshold").get<double>();

    std::map<std::string, std::vector<SeedRun>> by_group;
    for (const auto& gdir : fs::directory_iterator(dir)) {
        if (!gdir.is_directory()) continue;
        for (const auto& rdir : fs::directory_iterator(gdir.path())) {
            const std::string leaf = rdir.path().filename().string();
            if (!rdir.is_directory() || leaf.rfind("seed-", 0) != 0 || leaf.ends_with(".partial")) continue;
            SeedRun run;
            run.seed_index = std::stoi(leaf.substr(5));
            run.episodes = load_metrics((rdir.path() / "metrics.jsonl").string());
            by_group[gdir.path().filename().string()].push_back(std::move(run));
        }
    }
    for (auto& [name, runs] : by_group) rep.groups.push_back(aggregate_group(name, std::move(runs), rep.threshold));
    return rep;
}

namespace detail {

inline std::string fmt(double v, int prec = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", prec, v);
    return buf;
}

}  // namespace detail

// Tab-separated plot data: episode, mean, min, max of the moving average.
inline std::string curve_tsv(const GroupReport& g) {
    std::ostringstream out;
    out << "episode\tma_mean\tma_min\tma_max\n";
    for (std::size_t e = 0; e < g.ma_mean.size(); ++e)
        out << e << '\t' << detail::fmt(g.ma_mean[e]) << '\t' << detail::fmt(g.ma_min[e]) << '\t'
            << detail::fmt(g.ma_max[e]) << '\n';
    return out.str();
}

inline std::string summary_csv(const CampaignReport& rep) {
    std::ostringstream out;
    out << "group,runs,steps,advised,advised_pct,reused,random,greedy,episodes_to_threshold,mean_episodes_to_threshold,"
           "final_ma_mean,final_ma_min,final_ma_max\n";
    for (const auto& g : rep.groups) {
        std::string e2t;
        for (std::size_t i = 0; i < g.episodes_to_threshold.size(); ++i) {
            if (i) e2t += ';';
            e2t += g.episodes_to_threshold[i] ? std::to_string(*g.episodes_to_threshold[i]) : "never";
        }
        out << g.group << ',' << g.runs.size() << ',' << g.totals.steps << ',' << g.totals.advised << ','
            << detail::fmt(100.0 * g.totals.advised_fraction(), 2) << ',' << g.totals.reused << ',' << g.totals.random
            << ',' << g.totals.greedy << ',' << e2t << ',' << detail::fmt(g.mean_episodes_to_threshold, 1) << ','
            << detail::fmt(g.final_ma_mean, 2) << ',' << detail::fmt(g.final_ma_min, 2) << ','
            << detail::fmt(g.final_ma_max, 2) << '\n';
    }
    return out.str();
}

// Advised-step totals per configuration, e.g. "40976 (47.15%)".
inline std::string interaction_table(const CampaignReport& rep) {
    std::size_t width = 5;
    for (const auto& g : rep.groups) width = std::max(width, g.group.size());
    std::ostringstream out;
    char line[256];
    std::snprintf(line, sizeof line, "%-*s  %s\n", static_cast<int>(width), "agent", "interactions");
    out << line;
    for (const auto& g : rep.groups) {
        std::snprintf(line, sizeof line, "%-*s  %s\n", static_cast<int>(width), g.group.c_str(), g.totals.formatted().c_str());
        out << line;
    }
    return out.str();
}

inline void write_report(const CampaignReport& rep, const fs::path& out) {
    fs::create_directories(out / "curves");
    for (const auto& g : rep.groups) write_text(out / "curves" / (g.group + ".tsv"), curve_tsv(g));
    write_text(out / "summary.csv", summary_csv(rep));
    write_text(out / "interactions.txt", interaction_table(rep));
}

}  // namespace bpa
