#pragma once

#include "motorbench/harness.hpp"
#include "motorbench/json_io.hpp"
#include "motorbench/sim.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <atomic>
#include <chrono>
#include <deque>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <thread>

namespace motorbench::service {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using io::json;

using Message = std::shared_ptr<const std::string>;

struct ServiceOptions {
    std::string address = "127.0.0.1";
    unsigned short port = 8080;
    /// Simulated seconds per wall-clock second.
    double speed = 1.0;
    /// Broadcast a snapshot every N ticks.
    int snapshot_every = 1;
    /// Plain TCP line-delimited JSON listener; 0 picks a free port.
    std::optional<unsigned short> tcp_port;
    std::string event_log_path;
    std::string command_log_path;
};

/// Splits "host:port"; a bare port binds to 127.0.0.1.
inline std::pair<std::string, unsigned short> parse_listen(const std::string& s) {
    const auto colon = s.rfind(':');
    const std::string host = colon == std::string::npos ? "127.0.0.1" : s.substr(0, colon);
    const std::string port = colon == std::string::npos ? s : s.substr(colon + 1);
    std::size_t used = 0;
    int p = -1;
    try {
        p = std::stoi(port, &used);
    } catch (const std::exception&) {
    }
    if (used != port.size() || p < 0 || p > 65535 || host.empty()) {
        throw std::invalid_argument("listen address must be host:port, got '" + s + "'");
    }
    return {host, static_cast<unsigned short>(p)};
}

/**
 * Per-client send queue. Events are never dropped; a snapshot still waiting
 * to be sent is discarded when a newer one arrives.
 */
class Outbox {
public:
    struct Item {
        Message text;
        bool snapshot = false;
    };

    void push_event(Message m) { q_.push_back({std::move(m), false}); }

    void push_snapshot(Message m) {
        auto it = std::find_if(q_.begin(), q_.end(), [](const Item& i) { return i.snapshot; });
        if (it != q_.end()) {
            q_.erase(it);
            ++dropped_;
        }
        q_.push_back({std::move(m), true});
    }

    std::optional<Item> pop() {
        if (q_.empty()) return std::nullopt;
        Item i = std::move(q_.front());
        q_.pop_front();
        return i;
    }

    std::size_t size() const { return q_.size(); }
    std::size_t dropped_snapshots() const { return dropped_; }

private:
    std::deque<Item> q_;
    std::size_t dropped_ = 0;
};

inline Message make_message(const json& j) { return std::make_shared<const std::string>(j.dump()); }

inline json error_message(const std::string& text, std::optional<std::int64_t> seq = std::nullopt) {
    json j{{"v", io::kWireVersion}, {"type", "error"}, {"message", text}};
    if (seq) j["seq"] = *seq;
    return j;
}

inline json event_message(const sim::Event& e) {
    return {{"v", io::kWireVersion}, {"type", "event"}, {"event", io::to_json(e)}};
}

struct Status {
    std::int64_t tick = 0;
    double sim_time_s = 0.0;
    bool power_on = false;
    bool latched = false;
    std::size_t clients = 0;
};

class Session;

/// Fans messages out to connected sessions.
class Hub {
public:
    void join(const std::shared_ptr<Session>& s);

    /// Events of one tick, then optionally a snapshot to broadcast.
    void publish(const std::vector<Message>& events, const Message& broadcast_snapshot, Message latest_snapshot);

    std::size_t client_count() {
        std::lock_guard lock(mu_);
        prune();
        return sessions_.size();
    }

private:
    void prune() {
        std::erase_if(sessions_, [](const std::weak_ptr<Session>& w) { return w.expired(); });
    }

    std::mutex mu_;
    std::vector<std::weak_ptr<Session>> sessions_;
    Message latest_;
};

/// Runs the world at wall-clock pace; the only writer of simulation state.
class SimLoop {
public:
    SimLoop(std::shared_ptr<const RunConfig> config, const ServiceOptions& opt, Hub& hub)
        : world_(sim::make_world(config)), opt_(opt), hub_(hub) {
        if (!(opt.speed > 0.0)) throw std::invalid_argument("speed must be > 0");
        if (opt.snapshot_every < 1) throw std::invalid_argument("snapshot-every must be >= 1");
        if (!opt.event_log_path.empty()) {
            event_log_.open(opt.event_log_path, std::ios::binary | std::ios::trunc);
            if (!event_log_) throw std::runtime_error("cannot open event log " + opt.event_log_path);
        }
        if (!opt.command_log_path.empty()) {
            command_log_.open(opt.command_log_path, std::ios::binary | std::ios::trunc);
            if (!command_log_) throw std::runtime_error("cannot open command log " + opt.command_log_path);
        }
        latest_ = make_message(io::to_json(world_, {}));
    }

    void submit(sim::PanelCommand c) {
        std::lock_guard lock(queue_mu_);
        queue_.push_back(std::move(c));
    }

    Message latest_snapshot() {
        std::lock_guard lock(status_mu_);
        return latest_;
    }

    Status status() {
        std::lock_guard lock(status_mu_);
        return status_;
    }

    void run(std::stop_token stop) {
        using clock = std::chrono::steady_clock;
        const std::chrono::duration<double> period(world_.cfg().tick_duration_s / opt_.speed);
        const auto start = clock::now();
        std::int64_t done = 0;
        std::vector<sim::Event> since_snapshot;
        while (!stop.stop_requested()) {
            // A late tick runs immediately; ticks are never skipped.
            std::this_thread::sleep_until(start + std::chrono::duration_cast<clock::duration>(period * (done + 1)));
            std::vector<sim::PanelCommand> cmds;
            {
                std::lock_guard lock(queue_mu_);
                cmds.swap(queue_);
            }
            const std::int64_t tick = world_.clock.tick_index;
            if (command_log_.is_open()) {
                for (const auto& c : cmds) {
                    command_log_ << json{{"tick", tick}, {"command", io::to_json(c)}}.dump() << '\n';
                }
                command_log_.flush();
            }
            auto r = sim::step(std::move(world_), cmds);
            world_ = std::move(r.world);
            ++done;

            std::vector<Message> events;
            for (const auto& e : r.events) {
                if (event_log_.is_open()) event_log_ << io::event_line(e) << '\n';
                events.push_back(make_message(event_message(e)));
                since_snapshot.push_back(e);
            }
            if (event_log_.is_open()) event_log_.flush();

            const bool broadcast = world_.clock.tick_index % opt_.snapshot_every == 0;
            Message snap = make_message(io::to_json(world_, since_snapshot));
            if (broadcast) since_snapshot.clear();
            {
                std::lock_guard lock(status_mu_);
                latest_ = snap;
                status_.tick = world_.clock.tick_index;
                status_.sim_time_s = world_.clock.sim_time_s();
                status_.power_on = world_.panel.power_on;
                status_.latched = world_.latched();
            }
            hub_.publish(events, broadcast ? snap : nullptr, snap);
        }
        if (command_log_.is_open()) {
            command_log_ << json{{"end_tick", world_.clock.tick_index}}.dump() << '\n';
            command_log_.flush();
        }
    }

private:
    sim::World world_;
    ServiceOptions opt_;
    Hub& hub_;
    std::ofstream event_log_;
    std::ofstream command_log_;
    std::mutex queue_mu_;
    std::vector<sim::PanelCommand> queue_;
    std::mutex status_mu_;
    Status status_;
    Message latest_;
};

/// One connected client; transport specifics live in the subclasses.
class Session : public std::enable_shared_from_this<Session> {
public:
    Session(SimLoop& loop, std::string client_id) : loop_(loop), client_id_(std::move(client_id)) {}
    virtual ~Session() = default;

    void deliver_event(Message m) {
        net::post(executor(), [self = shared_from_this(), m = std::move(m)]() mutable {
            self->outbox_.push_event(std::move(m));
            self->pump();
        });
    }

    void deliver_snapshot(Message m) {
        net::post(executor(), [self = shared_from_this(), m = std::move(m)]() mutable {
            self->outbox_.push_snapshot(std::move(m));
            self->pump();
        });
    }

protected:
    virtual net::any_io_executor executor() = 0;
    virtual void write(const std::string& text, std::function<void(beast::error_code)> done) = 0;
    virtual void close() = 0;

    void pump() {
        if (writing_ || closed_) return;
        auto item = outbox_.pop();
        if (!item) return;
        writing_ = true;
        in_flight_ = item->text;
        write(*in_flight_, [self = shared_from_this()](beast::error_code ec) {
            self->writing_ = false;
            self->in_flight_.reset();
            if (ec) {
                self->shutdown();
                return;
            }
            self->pump();
        });
    }

    void shutdown() {
        if (closed_) return;
        closed_ = true;
        close();
    }

    void reply(const json& j) {
        outbox_.push_event(make_message(j));
        pump();
    }

    /// Handles one client message; runs on the session's executor.
    void on_message(const std::string& text) {
        json j;
        try {
            j = json::parse(text);
        } catch (const json::parse_error&) {
            reply(error_message("malformed JSON"));
            return;
        }
        if (!j.is_object() || j.value("v", 0) != io::kWireVersion) {
            reply(error_message("expected an object with \"v\": 1"));
            return;
        }
        const std::string type = j.value("type", "");
        if (type == "hello") {
            if (j.contains("client") && j["client"].is_string() && !j["client"].get<std::string>().empty()) {
                client_id_ = j["client"].get<std::string>();
            }
            reply({{"v", io::kWireVersion}, {"type", "hello"}, {"client", client_id_}, {"server", "motorbench"}});
            return;
        }
        if (type != "command") {
            reply(error_message("unknown message type '" + type + "'"));
            return;
        }
        if (!j.contains("seq") || !j["seq"].is_number_integer()) {
            reply(error_message("command needs an integer seq"));
            return;
        }
        const auto seq = j["seq"].get<std::int64_t>();
        if (last_seq_ && seq <= *last_seq_) {
            reply(error_message("seq must increase strictly; last was " + std::to_string(*last_seq_), seq));
            return;
        }
        if (!j.contains("command")) {
            reply(error_message("command message needs a command object", seq));
            return;
        }
        sim::PanelCommand cmd;
        try {
            cmd = io::command_from_json(j["command"]);
        } catch (const ConfigError& e) {
            reply(error_message(e.issues().empty() ? "bad command"
                                                   : e.issues()[0].field + ": " + e.issues()[0].message,
                                seq));
            return;
        }
        last_seq_ = seq;
        cmd.sequence = seq;
        cmd.client_id = client_id_;
        loop_.submit(std::move(cmd));
    }

    SimLoop& loop_;
    std::string client_id_;

private:
    Outbox outbox_;
    Message in_flight_;
    bool writing_ = false;
    bool closed_ = false;
    std::optional<std::int64_t> last_seq_;
};

inline void Hub::join(const std::shared_ptr<Session>& s) {
    std::lock_guard lock(mu_);
    if (latest_) s->deliver_snapshot(latest_);
    sessions_.push_back(s);
}

inline void Hub::publish(const std::vector<Message>& events, const Message& broadcast_snapshot,
                         Message latest_snapshot) {
    std::lock_guard lock(mu_);
    latest_ = std::move(latest_snapshot);
    prune();
    for (const auto& w : sessions_) {
        auto s = w.lock();
        if (!s) continue;
        for (const auto& e : events) s->deliver_event(e);
        if (broadcast_snapshot) s->deliver_snapshot(broadcast_snapshot);
    }
}

class WsSession : public Session {
public:
    WsSession(tcp::socket socket, SimLoop& loop, Hub& hub, std::string id)
        : Session(loop, std::move(id)), ws_(std::move(socket)), hub_(hub) {}

    void start(http::request<http::string_body> req) {
        ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        auto self = std::static_pointer_cast<WsSession>(shared_from_this());
        ws_.async_accept(req, [self](beast::error_code ec) {
            if (ec) return;
            self->hub_.join(self);
            self->read();
        });
    }

protected:
    net::any_io_executor executor() override { return ws_.get_executor(); }

    void write(const std::string& text, std::function<void(beast::error_code)> done) override {
        ws_.text(true);
        ws_.async_write(net::buffer(text),
                        [done = std::move(done)](beast::error_code ec, std::size_t) { done(ec); });
    }

    void close() override {
        beast::error_code ec;
        beast::get_lowest_layer(ws_).socket().close(ec);
    }

private:
    void read() {
        auto self = std::static_pointer_cast<WsSession>(shared_from_this());
        ws_.async_read(buf_, [self](beast::error_code ec, std::size_t) {
            if (ec) {
                self->shutdown();
                return;
            }
            const std::string text = beast::buffers_to_string(self->buf_.data());
            self->buf_.consume(self->buf_.size());
            self->on_message(text);
            self->read();
        });
    }

    websocket::stream<beast::tcp_stream> ws_;
    beast::flat_buffer buf_;
    Hub& hub_;
};

/// The same JSON messages, one per line, over a raw TCP connection.
class TcpSession : public Session {
public:
    TcpSession(tcp::socket socket, SimLoop& loop, std::string id)
        : Session(loop, std::move(id)), socket_(std::move(socket)) {}

    void start(Hub& hub) {
        hub.join(shared_from_this());
        read();
    }

protected:
    net::any_io_executor executor() override { return socket_.get_executor(); }

    void write(const std::string& text, std::function<void(beast::error_code)> done) override {
        line_ = text;
        line_ += '\n';
        net::async_write(socket_, net::buffer(line_),
                         [done = std::move(done)](beast::error_code ec, std::size_t) { done(ec); });
    }

    void close() override {
        beast::error_code ec;
        socket_.close(ec);
    }

private:
    void read() {
        auto self = std::static_pointer_cast<TcpSession>(shared_from_this());
        net::async_read_until(socket_, buf_, '\n', [self](beast::error_code ec, std::size_t n) {
            if (ec) {
                self->shutdown();
                return;
            }
            std::string line(net::buffers_begin(self->buf_.data()), net::buffers_begin(self->buf_.data()) + n);
            self->buf_.consume(n);
            while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.pop_back();
            if (!line.empty()) self->on_message(line);
            self->read();
        });
    }

    tcp::socket socket_;
    net::streambuf buf_;
    std::string line_;
};

/// Plain HTTP on the main port: /healthz, /config, and the /ws upgrade.
class HttpSession : public std::enable_shared_from_this<HttpSession> {
public:
    using Upgrade = std::function<void(tcp::socket, http::request<http::string_body>)>;

    HttpSession(tcp::socket socket, std::function<json()> health, json config, Upgrade upgrade)
        : stream_(std::move(socket)), health_(std::move(health)), config_(std::move(config)),
          upgrade_(std::move(upgrade)) {}

    void start() {
        stream_.expires_after(std::chrono::seconds(30));
        http::async_read(stream_, buf_, req_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (!ec) self->handle();
        });
    }

private:
    void handle() {
        if (websocket::is_upgrade(req_)) {
            if (req_.target() == "/ws") {
                stream_.expires_never();
                upgrade_(stream_.release_socket(), std::move(req_));
                return;
            }
        }
        auto res = std::make_shared<http::response<http::string_body>>();
        res->version(req_.version());
        res->keep_alive(false);
        res->set(http::field::server, "motorbench");
        if (req_.method() != http::verb::get) {
            res->result(http::status::method_not_allowed);
            res->set(http::field::content_type, "application/json");
            res->body() = R"({"error":"only GET is supported"})";
        } else if (req_.target() == "/healthz") {
            res->result(http::status::ok);
            res->set(http::field::content_type, "application/json");
            res->body() = health_().dump();
        } else if (req_.target() == "/config") {
            res->result(http::status::ok);
            res->set(http::field::content_type, "application/json");
            res->body() = config_.dump(2);
        } else {
            res->result(http::status::not_found);
            res->set(http::field::content_type, "application/json");
            res->body() = R"({"error":"not found"})";
        }
        res->prepare_payload();
        http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code, std::size_t) {
            beast::error_code ec;
            self->stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
        });
    }

    beast::tcp_stream stream_;
    beast::flat_buffer buf_;
    http::request<http::string_body> req_;
    std::function<json()> health_;
    json config_;
    Upgrade upgrade_;
};

/**
 * The bench as a network service: one simulation thread, one I/O thread.
 * start() binds both listeners (throwing on failure) and returns; stop() shuts
 * everything down and finalizes the logs.
 */
class Server {
public:
    Server(RunConfig config, ServiceOptions opt)
        : config_(std::make_shared<const RunConfig>(std::move(config))), opt_(std::move(opt)),
          loop_(config_, opt_, hub_), http_acceptor_(ioc_) {}

    ~Server() { stop(); }

    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    void start() {
        const auto addr = net::ip::make_address(opt_.address);
        open(http_acceptor_, tcp::endpoint(addr, opt_.port));
        if (opt_.tcp_port) {
            tcp_acceptor_.emplace(ioc_);
            open(*tcp_acceptor_, tcp::endpoint(addr, *opt_.tcp_port));
        }
        accept_http();
        if (tcp_acceptor_) accept_tcp();
        sim_thread_ = std::jthread([this](std::stop_token st) { loop_.run(st); });
        io_thread_ = std::thread([this] { ioc_.run(); });
    }

    void stop() {
        if (stopped_.exchange(true)) return;
        if (sim_thread_.joinable()) {
            sim_thread_.request_stop();
            sim_thread_.join();
        }
        ioc_.stop();
        if (io_thread_.joinable()) io_thread_.join();
    }

    /// Blocks until SIGINT or SIGTERM, then stops.
    void wait_for_signal() {
        net::io_context sig_ioc;
        net::signal_set signals(sig_ioc, SIGINT, SIGTERM);
        signals.async_wait([](beast::error_code, int) {});
        sig_ioc.run();
        stop();
    }

    unsigned short http_port() const { return http_acceptor_.local_endpoint().port(); }
    std::optional<unsigned short> tcp_port() const {
        if (!tcp_acceptor_) return std::nullopt;
        return tcp_acceptor_->local_endpoint().port();
    }

    json health() {
        Status s = loop_.status();
        s.clients = hub_.client_count();
        return {{"status", "ok"},         {"tick", s.tick},       {"sim_time_s", s.sim_time_s},
                {"power_on", s.power_on}, {"latched", s.latched}, {"clients", s.clients}};
    }

private:
    static void open(tcp::acceptor& a, const tcp::endpoint& ep) {
        beast::error_code ec;
        a.open(ep.protocol(), ec);
        if (!ec) a.set_option(net::socket_base::reuse_address(true), ec);
        if (!ec) a.bind(ep, ec);
        if (!ec) a.listen(net::socket_base::max_listen_connections, ec);
        if (ec) {
            throw std::runtime_error("cannot listen on " + ep.address().to_string() + ":" +
                                     std::to_string(ep.port()) + ": " + ec.message());
        }
    }

    void accept_http() {
        http_acceptor_.async_accept(net::make_strand(ioc_), [this](beast::error_code ec, tcp::socket socket) {
            if (!ec) {
                auto upgrade = [this](tcp::socket s, http::request<http::string_body> req) {
                    auto ws = std::make_shared<WsSession>(std::move(s), loop_, hub_, "ws-" + std::to_string(++ids_));
                    ws->start(std::move(req));
                };
                std::make_shared<HttpSession>(std::move(socket), [this] { return health(); }, io::to_json(*config_),
                                              upgrade)
                    ->start();
            }
            if (http_acceptor_.is_open()) accept_http();
        });
    }

    void accept_tcp() {
        tcp_acceptor_->async_accept(net::make_strand(ioc_), [this](beast::error_code ec, tcp::socket socket) {
            if (!ec) {
                std::make_shared<TcpSession>(std::move(socket), loop_, "tcp-" + std::to_string(++ids_))->start(hub_);
            }
            if (tcp_acceptor_->is_open()) accept_tcp();
        });
    }

    std::shared_ptr<const RunConfig> config_;
    ServiceOptions opt_;
    Hub hub_;
    SimLoop loop_;
    net::io_context ioc_;
    tcp::acceptor http_acceptor_;
    std::optional<tcp::acceptor> tcp_acceptor_;
    std::atomic<int> ids_{0};
    std::atomic<bool> stopped_{false};
    std::jthread sim_thread_;
    std::thread io_thread_;
};

} // namespace motorbench::service
