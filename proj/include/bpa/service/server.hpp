#pragma once

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <nlohmann/json.hpp>
#include <string>
#include <thread>

#include "bpa/config.hpp"
#include "bpa/service/session.hpp"

// WebSocket front-end: GET /sessions lists sessions, POST /sessions starts
// one, and /session/{id} upgrades to the bidirectional session stream.
namespace bpa::service {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

inline constexpr unsigned short default_port = 7667;

class SessionManager {
public:
    explicit SessionManager(Config defaults = {}, std::filesystem::path output_root = {}, std::size_t max_sessions = 16)
        : defaults_(std::move(defaults)), output_root_(std::move(output_root)), max_sessions_(max_sessions) {}

    ~SessionManager() { shutdown(); }

    const Config& defaults() const { return defaults_; }

    // Creates and starts a live session; throws std::runtime_error when the
    // session limit is reached.
    std::string create(RunConfig cfg, SessionOptions opt, std::optional<ClusterModel> model = std::nullopt) {
        std::lock_guard lock(mu_);
        std::size_t live = 0;
        for (const auto& [id, s] : sessions_)
            if (s->status_value() != SessionStatus::finished) ++live;
        if (live >= max_sessions_) throw std::runtime_error("session limit reached");
        const std::string id = "s" + std::to_string(++counter_);
        if (opt.output_dir.empty() && !output_root_.empty()) opt.output_dir = output_root_ / "live" / id;
        auto s = std::make_shared<LiveSession>(id, std::move(cfg), std::move(opt), std::move(model));
        s->start();
        sessions_.emplace(id, s);
        return id;
    }

    std::string create(const Config& c) { return create(c.run, options_from(c.live)); }
    std::string create() { return create(defaults_); }

    std::shared_ptr<LiveSession> get(const std::string& id) const {
        std::lock_guard lock(mu_);
        const auto it = sessions_.find(id);
        return it == sessions_.end() ? nullptr : it->second;
    }

    json list() const {
        std::lock_guard lock(mu_);
        json arr = json::array();
        for (const auto& [id, s] : sessions_) arr.push_back(s->summary());
        return {{"v", schema_version}, {"sessions", arr}};
    }

    void shutdown() {
        std::map<std::string, std::shared_ptr<LiveSession>> all;
        {
            std::lock_guard lock(mu_);
            all.swap(sessions_);
        }
        for (auto& [id, s] : all) s->stop();
        for (auto& [id, s] : all) s->join();
    }

private:
    Config defaults_;
    std::filesystem::path output_root_;
    std::size_t max_sessions_;
    mutable std::mutex mu_;
    std::map<std::string, std::shared_ptr<LiveSession>> sessions_;
    std::uint64_t counter_ = 0;
};

inline json error_message(const std::string& what) {
    return {{"v", schema_version}, {"type", "error"}, {"message", what}};
}

// Handles one client message; returns the reply for that client.
inline json handle_client_message(LiveSession& session, const std::string& text) {
    json msg;
    try {
        msg = json::parse(text);
    } catch (const json::parse_error&) {
        return error_message("malformed JSON");
    }
    if (!msg.is_object() || !msg.contains("v") || msg.at("v") != schema_version)
        return error_message("unsupported schema version; expected v=" + std::to_string(schema_version));
    const std::string type = msg.value("type", std::string());
    try {
        if (type == "advice") {
            if (msg.contains("session") && msg.at("session") != session.id()) return error_message("unknown session");
            return session.submit_advice(msg.at("step").get<std::uint64_t>(), msg.at("action").get<std::size_t>());
        }
        if (type == "pause") return session.pause();
        if (type == "resume") return session.resume();
        if (type == "stop") return session.stop();
        if (type == "status") return session.status();
    } catch (const std::exception& e) {
        json err = error_message(e.what());
        if (msg.contains("step")) err["step"] = msg.at("step");
        return err;
    }
    return error_message("unknown message type: " + type);
}

namespace detail {

class WsConnection : public std::enable_shared_from_this<WsConnection> {
public:
    WsConnection(tcp::socket&& socket, std::shared_ptr<LiveSession> session)
        : ws_(std::move(socket)), session_(std::move(session)) {}

    void run(http::request<http::string_body> req) {
        ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) { self->on_accept(ec); });
    }

private:
    void on_accept(beast::error_code ec) {
        if (ec) return;
        sub_ = session_->subscribe();
        std::weak_ptr<WsConnection> weak = shared_from_this();
        auto ex = ws_.get_executor();
        sub_->outbox.set_notify([weak, ex] {
            net::post(ex, [weak] {
                if (auto self = weak.lock()) self->pump();
            });
        });
        pump();
        read();
    }

    void read() {
        ws_.async_read(buf_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) return self->cleanup();
            const std::string text = beast::buffers_to_string(self->buf_.data());
            self->buf_.consume(self->buf_.size());
            self->sub_->outbox.push(handle_client_message(*self->session_, text).dump(), false);
            self->read();
        });
    }

    void pump() {
        if (writing_ || done_) return;
        auto msg = sub_->outbox.try_pop();
        if (!msg) {
            if (sub_->outbox.closed()) {
                done_ = true;
                ws_.async_close(websocket::close_code::normal, [self = shared_from_this()](beast::error_code) { self->cleanup(); });
            }
            return;
        }
        writing_ = true;
        current_ = std::move(*msg);
        ws_.text(true);
        ws_.async_write(net::buffer(current_), [self = shared_from_this()](beast::error_code ec, std::size_t) {
            self->writing_ = false;
            if (ec) return self->cleanup();
            self->pump();
        });
    }

    void cleanup() {
        if (sub_) {
            sub_->outbox.set_notify({});
            session_->unsubscribe(sub_);
        }
    }

    websocket::stream<beast::tcp_stream> ws_;
    std::shared_ptr<LiveSession> session_;
    std::shared_ptr<Subscription> sub_;
    beast::flat_buffer buf_;
    std::string current_;
    bool writing_ = false;
    bool done_ = false;
};

class HttpConnection : public std::enable_shared_from_this<HttpConnection> {
public:
    HttpConnection(tcp::socket&& socket, SessionManager& sessions) : stream_(std::move(socket)), sessions_(sessions) {}

    void run() {
        stream_.expires_after(std::chrono::seconds(30));
        http::async_read(stream_, buf_, req_,
                         [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
    }

private:
    void on_read(beast::error_code ec) {
        if (ec) return;
        const std::string target(req_.target());
        if (websocket::is_upgrade(req_)) {
            const std::string prefix = "/session/";
            std::shared_ptr<LiveSession> s;
            if (target.rfind(prefix, 0) == 0) s = sessions_.get(target.substr(prefix.size()));
            if (!s) return respond(http::status::not_found, error_message("unknown session"));
            stream_.expires_never();
            std::make_shared<WsConnection>(stream_.release_socket(), std::move(s))->run(std::move(req_));
            return;
        }
        if (target == "/sessions" && req_.method() == http::verb::get) return respond(http::status::ok, sessions_.list());
        if (target == "/sessions" && req_.method() == http::verb::post) {
            try {
                const Config c = req_.body().empty() ? sessions_.defaults() : parse_config(json::parse(req_.body()));
                const std::string id = sessions_.create(c);
                return respond(http::status::created, {{"v", schema_version}, {"type", "created"}, {"id", id}});
            } catch (const std::exception& e) {
                return respond(http::status::bad_request, error_message(e.what()));
            }
        }
        respond(http::status::not_found, error_message("not found"));
    }

    void respond(http::status status, const json& body) {
        res_ = {};
        res_.result(status);
        res_.version(req_.version());
        res_.set(http::field::content_type, "application/json");
        res_.set(http::field::access_control_allow_origin, "*");
        res_.keep_alive(false);
        res_.body() = body.dump();
        res_.prepare_payload();
        http::async_write(stream_, res_, [self = shared_from_this()](beast::error_code, std::size_t) {
            beast::error_code ignored;
            self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
        });
    }

    beast::tcp_stream stream_;
    SessionManager& sessions_;
    beast::flat_buffer buf_;
    http::request<http::string_body> req_;
    http::response<http::string_body> res_;
};

}  // namespace detail

// Single-threaded I/O front-end; every session runs its own training thread.
class Server {
public:
    explicit Server(SessionManager& sessions) : sessions_(sessions), acceptor_(ioc_) {}

    ~Server() { stop(); }

    // Binds and starts serving in a background thread; returns the bound port
    // (useful when `port` is 0).
    unsigned short start(const std::string& address = "127.0.0.1", unsigned short port = default_port) {
        const tcp::endpoint ep(net::ip::make_address(address), port);
        acceptor_.open(ep.protocol());
        acceptor_.set_option(net::socket_base::reuse_address(true));
        acceptor_.bind(ep);
        acceptor_.listen(net::socket_base::max_listen_connections);
        accept();
        thread_ = std::thread([this] { ioc_.run(); });
        return acceptor_.local_endpoint().port();
    }

    void stop() {
        ioc_.stop();
        if (thread_.joinable()) thread_.join();
    }

    // Blocks the calling thread until stop() is called from elsewhere.
    void wait() {
        if (thread_.joinable()) thread_.join();
    }

private:
    void accept() {
        acceptor_.async_accept(net::make_strand(ioc_), [this](beast::error_code ec, tcp::socket socket) {
            if (!ec) std::make_shared<detail::HttpConnection>(std::move(socket), sessions_)->run();
            if (acceptor_.is_open()) accept();
        });
    }

    SessionManager& sessions_;
    net::io_context ioc_{1};
    tcp::acceptor acceptor_;
    std::thread thread_;
};

}  // namespace bpa::service
