// bpa: command-line front-end for the advising lab.
#include <CLI11.hpp>
#include <atomic>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

#include "bpa/campaign.hpp"
#include "bpa/config.hpp"
#include "bpa/kmeans.hpp"
#include "bpa/report.hpp"
#include "bpa/service/server.hpp"

namespace fs = std::filesystem;

namespace {

struct Globals {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string env;
    std::optional<int> episodes;
};

bpa::Config load(const Globals& g) {
    bpa::Config c = g.config_path.empty() ? bpa::parse_config(bpa::json::object()) : bpa::load_config(g.config_path);
    if (!g.env.empty()) {
        c.run.env.id = bpa::parse_env_id(g.env);
        if (!c.explicit_k) c.run.clusters.k = bpa::default_cluster_count(c.run.env.id);
    }
    if (g.seed) {
        c.base_seed = *g.seed;
        c.run.seeds = bpa::SeedSet::derive(*g.seed);
    }
    if (g.episodes) c.run.hyper.episodes = *g.episodes;
    c.run.hyper.validate();
    return c;
}

fs::path out_dir(const Globals& g, const bpa::Config& c, const std::string& fallback) {
    if (!g.out.empty()) return g.out;
    if (!c.run.output_path.empty()) return c.run.output_path;
    if (const char* root = std::getenv("BPA_OUT_DIR"); root && *root) return fs::path(root) / fallback;
    return fs::path("runs") / fallback;
}

std::atomic<bool> interrupted{false};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Broad-persistent advising lab"};
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--config", g.config_path, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "base seed (derives the env, learner, advisor and ppr streams)");
    app.add_option("--out", g.out, "output directory (default $BPA_OUT_DIR/<command> or runs/<command>)");
    app.add_option("--env", g.env, "environment: cartpole or nav");
    app.add_option("--episodes", g.episodes, "episodes per run")->check(CLI::PositiveNumber);

    // collect-states
    auto* collect = app.add_subcommand("collect-states", "collect an observation corpus for clustering");
    std::size_t n_states = 50000;
    std::string policy = "random";
    collect->add_option("-n,--count", n_states, "number of states")->check(CLI::PositiveNumber);
    collect->add_option("--policy", policy, "random or oracle")->check(CLI::IsMember({"random", "oracle"}));

    // fit-clusters
    auto* fit = app.add_subcommand("fit-clusters", "SSE curve over k, elbow choice and a cluster model");
    std::string states_path;
    std::size_t k_min = 1, k_max = 9, fixed_k = 0;
    fit->add_option("--states", states_path, "corpus CSV (collected on the fly when omitted)")->check(CLI::ExistingFile);
    fit->add_option("-n,--count", n_states, "states to collect when --states is omitted")->check(CLI::PositiveNumber);
    fit->add_option("--policy", policy, "collection policy")->check(CLI::IsMember({"random", "oracle"}));
    fit->add_option("--k-min", k_min)->check(CLI::PositiveNumber);
    fit->add_option("--k-max", k_max)->check(CLI::PositiveNumber);
    fit->add_option("--k", fixed_k, "use this k for the saved model instead of the elbow choice");

    // train
    auto* train = app.add_subcommand("train", "single training run");
    std::string mode, advisor, model_path;
    train->add_option("--mode", mode, "baseline, non_persistent or persistent");
    train->add_option("--advisor", advisor, "optimistic, realistic or pessimistic");
    train->add_option("--model", model_path, "cluster model for persistent mode")->check(CLI::ExistingFile);

    // campaign
    auto* campaign = app.add_subcommand("campaign", "modes x profiles x seeds comparison, resumable");
    int workers = 0, repeats = 0;
    bool no_report = false;
    campaign->add_option("--workers", workers, "parallel runs")->check(CLI::PositiveNumber);
    campaign->add_option("--repeats", repeats, "seeds per configuration")->check(CLI::PositiveNumber);
    campaign->add_flag("--no-report", no_report, "skip the report step");

    // report
    auto* report = app.add_subcommand("report", "aggregate a campaign directory");
    std::string campaign_dir;
    double threshold = 0.0;
    report->add_option("campaign_dir", campaign_dir, "campaign directory (default: --out)");
    report->add_option("--threshold", threshold, "moving-average threshold (default per environment)");

    // serve
    auto* serve = app.add_subcommand("serve", "live advising service");
    unsigned short port = bpa::service::default_port;
    std::string host = "127.0.0.1";
    bool no_session = false;
    serve->add_option("--port", port, "listen port");
    serve->add_option("--host", host, "listen address");
    serve->add_flag("--no-session", no_session, "do not start a session from the config at startup");
    serve->add_option("--mode", mode, "agent mode of the startup session");

    CLI11_PARSE(app, argc, argv);

    try {
        bpa::Config c = load(g);

        if (collect->parsed()) {
            const fs::path out = out_dir(g, c, "states");
            fs::create_directories(out);
            const auto corpus = bpa::collect_states(c.run.env, n_states, bpa::mix_seed(c.run.seeds.env),
                                                    policy == "oracle" ? bpa::CollectionPolicy::oracle : bpa::CollectionPolicy::random);
            corpus.save_file((out / "states.csv").string());
            std::cout << "wrote " << corpus.size() << " states to " << (out / "states.csv").string() << '\n';
            return 0;
        }

        if (fit->parsed()) {
            if (k_max < k_min) throw std::invalid_argument("--k-max must be at least --k-min");
            const fs::path out = out_dir(g, c, "clusters");
            fs::create_directories(out);
            const bpa::StateCorpus corpus =
                states_path.empty()
                    ? bpa::collect_states(c.run.env, n_states, bpa::mix_seed(c.run.seeds.env),
                                          policy == "oracle" ? bpa::CollectionPolicy::oracle : bpa::CollectionPolicy::random)
                    : bpa::StateCorpus::load_file(states_path);
            if (corpus.dim() != c.run.env.obs_size()) throw std::invalid_argument("corpus dimension does not match the environment");
            const std::uint64_t seed = bpa::mix_seed(c.run.seeds.env ^ 0x6b6d65616e73ULL);
            auto result = bpa::sse_curve(corpus, k_min, k_max, seed);
            std::ostringstream tsv;
            tsv << "k\tsse\n" << std::setprecision(10);
            for (std::size_t i = 0; i < result.curve.k.size(); ++i) tsv << result.curve.k[i] << '\t' << result.curve.sse[i] << '\n';
            bpa::write_text(out / "sse.tsv", tsv.str());
            std::optional<bpa::ElbowResult> elbow;
            if (result.curve.k.size() >= 3) elbow = bpa::elbow_k(result.curve);
            const std::size_t k = fixed_k ? fixed_k : (elbow ? elbow->k : k_min);
            bpa::json info{{"k", k}, {"k_min", k_min}, {"k_max", k_max}, {"states", corpus.size()}};
            if (elbow) info["elbow"] = {{"k", elbow->k}, {"confident", elbow->confident}, {"distance", elbow->distance}};
            bpa::write_text(out / "elbow.json", info.dump(2) + "\n");
            const bpa::ClusterModel model =
                k >= k_min && k <= k_max ? result.models[k - k_min] : bpa::fit_kmeans(corpus, k, seed);
            model.save_file((out / "clusters.txt").string());
            std::cout << tsv.str();
            if (elbow)
                std::cout << "elbow k = " << elbow->k << (elbow->confident ? "" : " (low confidence)") << '\n';
            std::cout << "model k = " << k << " written to " << (out / "clusters.txt").string() << '\n';
            return 0;
        }

        if (train->parsed()) {
            if (!mode.empty()) c.run.mode = bpa::parse_agent_mode(mode);
            if (!advisor.empty()) c.run.advisor = bpa::AdvisorProfile::named(advisor);
            if (!model_path.empty()) c.run.clusters.model_path = model_path;
            if (c.run.live_advisor && !c.run.advisor)
                throw std::invalid_argument("a live advisor needs the serve command; pass --advisor for offline training");
            c.run.live_advisor = false;
            c.run.validate();
            const fs::path out = out_dir(g, c, "train");
            const auto r = bpa::execute_run(c.run, out);
            const auto curve = bpa::moving_average(bpa::rewards_of(r.episodes));
            const auto totals = bpa::interaction_totals(r.episodes);
            const auto e2t = bpa::episodes_to_threshold(curve, bpa::default_threshold(c.run.env.id));
            std::cout << "episodes " << r.episodes.size() << ", final moving average " << (curve.empty() ? 0.0 : curve.back())
                      << ", episodes to threshold " << (e2t ? std::to_string(*e2t) : std::string("never"))
                      << ", interactions " << totals.formatted() << '\n'
                      << "metrics: " << (out / "metrics.jsonl").string() << '\n';
            return 0;
        }

        if (campaign->parsed()) {
            if (workers) c.campaign.workers = workers;
            if (repeats) c.campaign.repeats = repeats;
            const fs::path out = out_dir(g, c, "campaign");
            const auto planned = bpa::plan_campaign(c).size();
            std::size_t done = 0;
            const auto progress = bpa::run_campaign(c, out, [&](const bpa::CampaignRun& r) {
                std::cout << "[" << ++done << "] " << r.relative_dir().string() << '\n' << std::flush;
            });
            std::cout << "campaign: " << planned << " runs, " << progress.skipped << " already complete, "
                      << progress.executed << " executed\n";
            if (!no_report) {
                const auto rep = bpa::load_campaign(out);
                bpa::write_report(rep, out / "report");
                std::cout << bpa::interaction_table(rep);
            }
            return 0;
        }

        if (report->parsed()) {
            const fs::path dir = campaign_dir.empty() ? out_dir(g, c, "campaign") : fs::path(campaign_dir);
            const auto rep = bpa::load_campaign(dir, threshold);
            bpa::write_report(rep, dir / "report");
            std::cout << bpa::interaction_table(rep) << '\n' << bpa::summary_csv(rep);
            return 0;
        }

        if (serve->parsed()) {
            c.run.live_advisor = true;
            if (!mode.empty()) c.run.mode = bpa::parse_agent_mode(mode);
            if (c.run.mode == bpa::AgentMode::baseline) c.run.mode = bpa::AgentMode::persistent;
            const fs::path out = out_dir(g, c, "serve");
            bpa::service::SessionManager sessions(c, out);
            bpa::service::Server server(sessions);
            const auto bound = server.start(host, port);
            std::cout << "listening on " << host << ':' << bound << '\n';
            if (!no_session) std::cout << "session " << sessions.create() << " started\n";
            std::cout << std::flush;
            std::signal(SIGINT, [](int) { interrupted = true; });
            std::signal(SIGTERM, [](int) { interrupted = true; });
            while (!interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
            server.stop();
            sessions.shutdown();
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "bpa: error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
