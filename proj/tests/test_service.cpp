#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <thread>

#include "bpa/service/server.hpp"

using namespace bpa;
using namespace bpa::service;
using namespace std::chrono_literals;

namespace {

RunConfig live_config(AgentMode mode, int episodes, std::uint64_t seed = 5) {
    RunConfig c;
    c.mode = mode;
    c.live_advisor = true;
    c.hyper.episodes = episodes;
    c.clusters.k = 3;
    c.clusters.corpus_size = 2000;
    c.seeds = SeedSet::derive(seed);
    return c;
}

SessionOptions fast_options(std::chrono::milliseconds advice_timeout) {
    SessionOptions o;
    o.decision_interval = 0ms;
    o.advice_timeout = advice_timeout;
    o.idle_pause = 0ms;
    o.frame_queue = 1024;
    return o;
}

// Reads messages until one satisfies `pred` or the deadline passes.
std::optional<json> next_matching(Outbox& box, const std::function<bool(const json&)>& pred,
                                  std::chrono::milliseconds deadline = 10s) {
    const auto until = std::chrono::steady_clock::now() + deadline;
    while (std::chrono::steady_clock::now() < until) {
        if (auto m = box.pop(50ms)) {
            const json j = json::parse(*m);
            if (pred(j)) return std::optional<json>(std::in_place, j);
        } else if (box.closed()) {
            return std::nullopt;
        }
    }
    return std::nullopt;
}

bool is_type(const json& j, const char* t) { return j.at("type") == t; }

}  // namespace

TEST(Outbox, DropsOldestFrameButNeverControlMessages) {
    Outbox box(2);
    box.push("f1", true);
    box.push("f2", true);
    box.push("c1", false);
    box.push("f3", true);
    EXPECT_EQ(box.dropped(), 1u);
    EXPECT_EQ(box.try_pop(), "f2");
    EXPECT_EQ(box.try_pop(), "c1");
    EXPECT_EQ(box.try_pop(), "f3");
    EXPECT_FALSE(box.try_pop());
}

TEST(Outbox, ControlMessagesSurviveAnyBacklog) {
    Outbox box(1);
    for (int i = 0; i < 500; ++i) {
        box.push("c" + std::to_string(i), false);
        box.push("f" + std::to_string(i), true);
    }
    int controls = 0, frames = 0;
    while (auto m = box.try_pop()) (*m)[0] == 'c' ? ++controls : ++frames;
    EXPECT_EQ(controls, 500);
    EXPECT_EQ(frames, 1);
    EXPECT_EQ(box.dropped(), 499u);
}

TEST(Outbox, CloseWakesWaitersAndNotifies) {
    Outbox box(4);
    int notified = 0;
    box.set_notify([&] { ++notified; });
    box.push("a", false);
    std::thread t([&] {
        std::this_thread::sleep_for(20ms);
        box.close();
    });
    EXPECT_EQ(box.pop(1s), "a");
    EXPECT_FALSE(box.pop(5s));
    t.join();
    EXPECT_TRUE(box.closed());
    EXPECT_EQ(notified, 2);
}

TEST(SessionOptions, FromLiveSettings) {
    const auto o = options_from(LiveSettings{});
    EXPECT_EQ(o.decision_interval, 200ms);
    EXPECT_EQ(o.advice_timeout, 200ms);
    EXPECT_EQ(o.idle_pause, 30000ms);
    LiveSettings l;
    l.decisions_per_second = 0;
    l.advice_timeout_ms = 0;
    EXPECT_EQ(options_from(l).decision_interval, 0ms);
}

TEST(LiveSession, AdviceForPendingStepIsExecutedAndStored) {
    LiveSession s("t", live_config(AgentMode::persistent, 2), fast_options(10s));
    auto sub = s.subscribe();
    s.start();
    const auto first = next_matching(sub->outbox, [](const json& j) { return is_type(j, "state"); });
    ASSERT_TRUE(first);
    EXPECT_EQ(first->at("v"), schema_version);
    EXPECT_EQ(first->at("pending_step"), 0);
    EXPECT_TRUE(first->at("last_decision").is_null());
    EXPECT_EQ(first->at("render").at("kind"), "cartpole");

    const json ack = s.submit_advice(0, 1);
    EXPECT_EQ(ack.at("type"), "ack");
    EXPECT_FALSE(ack.at("stale").get<bool>());
    // A second click for the same step is stale.
    EXPECT_TRUE(s.submit_advice(0, 0).at("stale").get<bool>());

    const auto next = next_matching(sub->outbox, [](const json& j) { return is_type(j, "state") && j.at("pending_step") == 1; });
    ASSERT_TRUE(next);
    const json& d = next->at("last_decision");
    EXPECT_EQ(d.at("step"), 0);
    EXPECT_EQ(d.at("action"), 1);
    EXPECT_EQ(d.at("provenance"), "advised");
    ASSERT_TRUE(d.contains("cluster"));
    ASSERT_EQ(next->at("store").size(), 1u);
    EXPECT_EQ(next->at("store")[0].at("cluster"), d.at("cluster"));
    EXPECT_EQ(next->at("store")[0].at("action"), 1);
    EXPECT_EQ(next->at("counters").at("advised"), 1);
    s.stop();
    EXPECT_TRUE(s.wait_finished(10s));
}

TEST(LiveSession, StaleAdviceDoesNotTouchTheStore) {
    LiveSession s("t", live_config(AgentMode::persistent, 1), fast_options(10s));
    auto sub = s.subscribe();
    s.start();
    ASSERT_TRUE(next_matching(sub->outbox, [](const json& j) { return is_type(j, "state"); }));
    for (std::uint64_t step : {1ull, 7ull, 100000ull}) EXPECT_TRUE(s.submit_advice(step, 0).at("stale").get<bool>());
    EXPECT_TRUE(s.store_snapshot().empty());
    EXPECT_THROW(s.submit_advice(0, 2), std::invalid_argument);
    s.stop();
    EXPECT_TRUE(s.wait_finished(10s));
    EXPECT_TRUE(s.store_snapshot().empty());
    EXPECT_TRUE(s.submit_advice(0, 0).at("stale").get<bool>());
}

TEST(LiveSession, TimeoutFallsThroughToTheAgentsOwnPolicy) {
    LiveSession s("t", live_config(AgentMode::persistent, 3), fast_options(0ms));
    s.start();
    ASSERT_TRUE(s.wait_finished(60s));
    const auto eps = s.episodes();
    ASSERT_EQ(eps.size(), 3u);
    for (const auto& m : eps) {
        EXPECT_EQ(m.advised, 0);
        EXPECT_EQ(m.reused, 0);
        EXPECT_EQ(m.random + m.greedy, m.steps);
    }
    EXPECT_FALSE(s.error());
}

TEST(LiveSession, OracleClickerReproducesOptimisticRun) {
    constexpr int episodes = 3;
    RunConfig cfg = live_config(AgentMode::persistent, episodes, 9);
    LiveSession s("t", cfg, fast_options(30s));
    auto sub = s.subscribe();
    std::atomic<bool> done{false};
    std::thread clicker([&] {
        std::uint64_t answered = std::numeric_limits<std::uint64_t>::max();
        while (!done) {
            auto m = sub->outbox.pop(50ms);
            if (!m) {
                if (sub->outbox.closed()) return;
                continue;
            }
            const json j = json::parse(*m);
            if (!is_type(j, "state")) continue;
            const std::uint64_t step = j.at("pending_step");
            if (step == answered) continue;
            answered = step;
            const Observation obs(j.at("observation").get<std::vector<double>>());
            s.submit_advice(step, oracle_action(cfg.env, obs).index);
        }
    });
    s.start();
    ASSERT_TRUE(s.wait_finished(120s));
    done = true;
    clicker.join();

    RunConfig sim = cfg;
    sim.live_advisor = false;
    sim.advisor = AdvisorProfile::optimistic();
    const auto expected = run_training(sim);
    EXPECT_EQ(s.episodes(), expected.episodes);
    EXPECT_EQ(s.store_snapshot(), expected.store);
}

TEST(LiveSession, PauseResumeStop) {
    SessionOptions o = fast_options(1ms);
    o.decision_interval = 10ms;
    LiveSession s("t", live_config(AgentMode::non_persistent, 100), o);
    auto sub = s.subscribe();
    s.start();
    std::this_thread::sleep_for(50ms);
    EXPECT_EQ(s.pause().at("status"), "paused");
    ASSERT_TRUE(next_matching(sub->outbox, [](const json& j) { return is_type(j, "status") && j.at("status") == "paused"; }));
    std::this_thread::sleep_for(30ms);
    const auto at = s.summary().at("global_step").get<std::uint64_t>();
    std::this_thread::sleep_for(200ms);
    EXPECT_EQ(s.summary().at("global_step").get<std::uint64_t>(), at);
    EXPECT_EQ(s.resume().at("status"), "running");
    std::this_thread::sleep_for(200ms);
    EXPECT_GT(s.summary().at("global_step").get<std::uint64_t>(), at);
    s.stop();
    ASSERT_TRUE(s.wait_finished(10s));
    EXPECT_EQ(s.status().at("status"), "finished");
    EXPECT_TRUE(next_matching(sub->outbox, [](const json& j) { return is_type(j, "status") && j.at("status") == "finished"; }));
    EXPECT_FALSE(sub->outbox.pop(100ms));
    EXPECT_TRUE(sub->outbox.closed());
    // Late subscribers get the final status and a closed stream.
    auto late = s.subscribe();
    EXPECT_EQ(json::parse(*late->outbox.try_pop()).at("status"), "finished");
    EXPECT_TRUE(late->outbox.closed());
}

TEST(LiveSession, IdleTrainerAutoPauses) {
    SessionOptions o = fast_options(1ms);
    o.decision_interval = 5ms;
    o.idle_pause = 100ms;
    LiveSession s("t", live_config(AgentMode::non_persistent, 100), o);
    auto sub = s.subscribe();
    s.start();
    const auto msg = next_matching(sub->outbox, [](const json& j) { return is_type(j, "status") && j.value("reason", "") == "idle"; }, 5s);
    ASSERT_TRUE(msg);
    EXPECT_EQ(msg->at("status"), "paused");
    EXPECT_EQ(s.status_value(), SessionStatus::paused);
    s.resume();
    EXPECT_EQ(s.status_value(), SessionStatus::running);
}

TEST(LiveSession, EpisodeMessagesCarryMetrics) {
    LiveSession s("t", live_config(AgentMode::non_persistent, 2), fast_options(0ms));
    auto sub = s.subscribe();
    s.start();
    const auto ep = next_matching(sub->outbox, [](const json& j) { return is_type(j, "episode"); }, 60s);
    ASSERT_TRUE(ep);
    EXPECT_EQ(ep->at("v"), 1);
    EXPECT_EQ(ep->at("episode"), 0);
    EXPECT_GT(ep->at("steps").get<int>(), 0);
    ASSERT_TRUE(s.wait_finished(60s));
}

TEST(LiveSession, WritesArtifactsWhenGivenAnOutputDirectory) {
    const auto dir = std::filesystem::temp_directory_path() / "bpa_live_out";
    std::filesystem::remove_all(dir);
    SessionOptions o = fast_options(0ms);
    o.output_dir = dir;
    {
        LiveSession s("t", live_config(AgentMode::persistent, 2), o);
        s.start();
        ASSERT_TRUE(s.wait_finished(60s));
        EXPECT_EQ(load_metrics((dir / "metrics.jsonl").string()), s.episodes());
    }
    for (const char* f : {"run.json", "network.txt", "store.json"}) EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
    std::filesystem::remove_all(dir);
}

TEST(ClientMessages, ValidationAndDispatch) {
    LiveSession s("s1", live_config(AgentMode::non_persistent, 1), fast_options(10s));
    auto err = [](const json& j) { return j.at("type") == "error" && j.at("v") == 1; };
    EXPECT_TRUE(err(handle_client_message(s, "{not json")));
    EXPECT_TRUE(err(handle_client_message(s, R"({"type": "status"})")));
    EXPECT_TRUE(err(handle_client_message(s, R"({"v": 2, "type": "status"})")));
    EXPECT_TRUE(err(handle_client_message(s, R"({"v": 1, "type": "dance"})")));
    const json bad = handle_client_message(s, R"({"v": 1, "type": "advice", "step": 4, "action": 9})");
    EXPECT_TRUE(err(bad));
    EXPECT_EQ(bad.at("step"), 4);
    EXPECT_TRUE(err(handle_client_message(s, R"({"v": 1, "type": "advice", "step": 4})")));
    EXPECT_TRUE(err(handle_client_message(s, R"({"v": 1, "type": "advice", "session": "s9", "step": 0, "action": 0})")));
    EXPECT_EQ(handle_client_message(s, R"({"v": 1, "type": "status"})").at("status"), "running");
    EXPECT_EQ(handle_client_message(s, R"({"v": 1, "type": "pause"})").at("status"), "paused");
    EXPECT_EQ(handle_client_message(s, R"({"v": 1, "type": "resume"})").at("status"), "running");
    const json ack = handle_client_message(s, R"({"v": 1, "type": "advice", "session": "s1", "step": 3, "action": 1})");
    EXPECT_EQ(ack.at("type"), "ack");
    EXPECT_TRUE(ack.at("stale").get<bool>());
    handle_client_message(s, R"({"v": 1, "type": "stop"})");
}

TEST(SessionManager, CreatesListsAndLimits) {
    Config defaults;
    defaults.run = live_config(AgentMode::non_persistent, 1000);
    SessionManager m(defaults, {}, 2);
    const auto a = m.create(defaults.run, fast_options(1ms));
    const auto b = m.create(defaults.run, fast_options(1ms));
    EXPECT_EQ(a, "s1");
    EXPECT_EQ(b, "s2");
    EXPECT_THROW(m.create(defaults.run, fast_options(1ms)), std::runtime_error);
    const json l = m.list();
    EXPECT_EQ(l.at("v"), 1);
    ASSERT_EQ(l.at("sessions").size(), 2u);
    EXPECT_EQ(l.at("sessions")[0].at("id"), "s1");
    EXPECT_EQ(m.get("nope"), nullptr);
    m.get(a)->stop();
    ASSERT_TRUE(m.get(a)->wait_finished(10s));
    EXPECT_EQ(m.create(defaults.run, fast_options(1ms)), "s3");
    m.shutdown();
    EXPECT_TRUE(m.list().at("sessions").empty());
}

// ---- network round trips -------------------------------------------------

namespace {

struct HttpReply {
    unsigned status;
    json body;
};

HttpReply http_request(unsigned short port, http::verb verb, const std::string& target, const std::string& body = {}) {
    net::io_context ioc;
    beast::tcp_stream stream(ioc);
    stream.connect(tcp::endpoint(net::ip::make_address("127.0.0.1"), port));
    http::request<http::string_body> req{verb, target, 11};
    req.set(http::field::host, "127.0.0.1");
    req.body() = body;
    req.prepare_payload();
    http::write(stream, req);
    beast::flat_buffer buf;
    http::response<http::string_body> res;
    http::read(stream, buf, res);
    return {static_cast<unsigned>(res.result_int()), json::parse(res.body())};
}

class WsClient {
public:
    WsClient(unsigned short port, const std::string& target) : ws_(ioc_) {
        tcp::resolver resolver(ioc_);
        net::connect(ws_.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
        ws_.handshake("127.0.0.1", target);
    }
    void send(const json& j) { ws_.write(net::buffer(j.dump())); }
    json read() {
        beast::flat_buffer buf;
        ws_.read(buf);
        return json::parse(beast::buffers_to_string(buf.data()));
    }
    json read_until(const std::function<bool(const json&)>& pred) {
        for (;;) {
            json j = read();
            if (pred(j)) return j;
        }
    }

private:
    net::io_context ioc_;
    websocket::stream<tcp::socket> ws_;
};

struct ServerFixture : ::testing::Test {
    Config defaults;
    std::unique_ptr<SessionManager> sessions;
    std::unique_ptr<Server> server;
    unsigned short port = 0;

    void SetUp() override {
        defaults.run = live_config(AgentMode::persistent, 1000);
        defaults.live.idle_pause_s = 0;
        sessions = std::make_unique<SessionManager>(defaults);
        server = std::make_unique<Server>(*sessions);
        port = server->start("127.0.0.1", 0);
    }
    void TearDown() override {
        sessions->shutdown();
        server->stop();
    }
};

}  // namespace

TEST(Server, DefaultPort) { EXPECT_EQ(default_port, 7667); }

TEST_F(ServerFixture, ListsAndCreatesSessionsOverHttp) {
    auto r = http_request(port, http::verb::get, "/sessions");
    EXPECT_EQ(r.status, 200u);
    EXPECT_EQ(r.body.at("v"), 1);
    EXPECT_TRUE(r.body.at("sessions").empty());

    r = http_request(port, http::verb::post, "/sessions", R"({"mode": "non_persistent", "advisor": "live"})");
    EXPECT_EQ(r.status, 201u);
    EXPECT_EQ(r.body.at("id"), "s1");
    r = http_request(port, http::verb::post, "/sessions", R"({"mode": "sideways"})");
    EXPECT_EQ(r.status, 400u);
    EXPECT_EQ(r.body.at("type"), "error");

    r = http_request(port, http::verb::get, "/sessions");
    ASSERT_EQ(r.body.at("sessions").size(), 1u);
    EXPECT_EQ(r.body.at("sessions")[0].at("mode"), "non_persistent");
    EXPECT_EQ(http_request(port, http::verb::get, "/elsewhere").status, 404u);
}

TEST_F(ServerFixture, UnknownSessionIsRejected) {
    EXPECT_THROW(WsClient(port, "/session/s42"), boost::system::system_error);
}

TEST_F(ServerFixture, WebSocketAdviceRoundTrip) {
    const std::string id = sessions->create();
    WsClient ws(port, "/session/" + id);
    const json state = ws.read_until([](const json& j) { return is_type(j, "state"); });
    EXPECT_EQ(state.at("v"), 1);
    EXPECT_EQ(state.at("session"), id);
    for (const char* key : {"env", "mode", "episode", "step", "pending_step", "observation", "render", "last_reward",
                            "epsilon", "counters", "store", "status", "last_decision"})
        EXPECT_TRUE(state.contains(key)) << key;

    // Answer the next fresh decision and time the acknowledgment.
    const json fresh = ws.read_until([](const json& j) { return is_type(j, "state"); });
    const auto sent = std::chrono::steady_clock::now();
    ws.send({{"v", 1}, {"type", "advice"}, {"session", id}, {"step", fresh.at("pending_step")}, {"action", 0}});
    const json ack = ws.read_until([](const json& j) { return is_type(j, "ack"); });
    const auto rtt = std::chrono::steady_clock::now() - sent;
    EXPECT_LT(rtt, 200ms);
    EXPECT_EQ(ack.at("step"), fresh.at("pending_step"));
    EXPECT_EQ(ack.at("v"), 1);

    ws.send({{"v", 3}, {"type", "status"}});
    EXPECT_EQ(ws.read_until([](const json& j) { return !is_type(j, "state"); }).at("type"), "error");
    ws.send({{"v", 1}, {"type", "pause"}});
    EXPECT_EQ(ws.read_until([](const json& j) { return is_type(j, "status"); }).at("status"), "paused");
    ws.send({{"v", 1}, {"type", "stop"}});
    ASSERT_TRUE(sessions->get(id)->wait_finished(10s));
    EXPECT_EQ(ws.read_until([](const json& j) { return is_type(j, "status") && j.at("status") == "finished"; }).at("v"), 1);
}
