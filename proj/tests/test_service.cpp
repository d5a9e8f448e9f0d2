#include "motorbench/service.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace motorbench;
using namespace motorbench::service;

namespace {

Message msg(const std::string& s) { return std::make_shared<const std::string>(s); }

std::string http_get(unsigned short port, const std::string& target, int* status = nullptr) {
    net::io_context ioc;
    beast::tcp_stream stream(ioc);
    stream.connect(tcp::endpoint(net::ip::make_address("127.0.0.1"), port));
    http::request<http::empty_body> req(http::verb::get, target, 11);
    req.set(http::field::host, "127.0.0.1");
    http::write(stream, req);
    beast::flat_buffer buf;
    http::response<http::string_body> res;
    http::read(stream, buf, res);
    if (status) *status = static_cast<int>(res.result_int());
    return res.body();
}

class WsClient {
public:
    explicit WsClient(unsigned short port) : ws_(ioc_) {
        beast::get_lowest_layer(ws_).connect(tcp::endpoint(net::ip::make_address("127.0.0.1"), port));
        ws_.handshake("127.0.0.1", "/ws");
    }

    io::json read() {
        beast::flat_buffer buf;
        ws_.read(buf);
        return io::json::parse(beast::buffers_to_string(buf.data()));
    }

    void send(const io::json& j) {
        ws_.text(true);
        ws_.write(net::buffer(j.dump()));
    }

    void command(std::int64_t seq, const std::string& kind) {
        send({{"v", 1}, {"type", "command"}, {"seq", seq}, {"command", {{"kind", kind}}}});
    }

    /// Reads until pred matches; fails the test after `limit` messages.
    template <typename Pred>
    io::json read_until(Pred pred, int limit = 2000) {
        for (int i = 0; i < limit; ++i) {
            io::json m = read();
            if (pred(m)) return m;
        }
        ADD_FAILURE() << "message not seen";
        return nullptr;
    }

    void close() { ws_.close(websocket::close_code::normal); }

private:
    net::io_context ioc_;
    websocket::stream<beast::tcp_stream> ws_;
};

ServiceOptions fast_options() {
    ServiceOptions o;
    o.port = 0;
    o.speed = 20.0;
    return o;
}

} // namespace

TEST(Outbox, EventsKeptStaleSnapshotReplaced) {
    Outbox box;
    box.push_snapshot(msg("s1"));
    box.push_event(msg("e1"));
    box.push_snapshot(msg("s2"));
    box.push_event(msg("e2"));
    box.push_snapshot(msg("s3"));
    std::vector<std::string> order;
    while (auto i = box.pop()) order.push_back(*i->text);
    EXPECT_EQ(order, (std::vector<std::string>{"e1", "e2", "s3"}));
    EXPECT_EQ(box.dropped_snapshots(), 2u);
}

TEST(Listen, ParsesHostPort) {
    EXPECT_EQ(parse_listen("0.0.0.0:9000"), (std::pair<std::string, unsigned short>{"0.0.0.0", 9000}));
    EXPECT_EQ(parse_listen("9001").second, 9001);
    EXPECT_THROW(parse_listen("host:99999"), std::invalid_argument);
    EXPECT_THROW(parse_listen("host:"), std::invalid_argument);
}

TEST(Server, HttpEndpoints) {
    Server server(RunConfig{}, fast_options());
    server.start();
    int status = 0;
    const auto health = io::json::parse(http_get(server.http_port(), "/healthz", &status));
    EXPECT_EQ(status, 200);
    EXPECT_EQ(health["status"], "ok");
    EXPECT_EQ(io::config_from_json(io::json::parse(http_get(server.http_port(), "/config"))), RunConfig{});
    http_get(server.http_port(), "/nope", &status);
    EXPECT_EQ(status, 404);
}

TEST(Server, FirstMessageIsSnapshotThenPowerOnLightsGreen) {
    Server server(RunConfig{}, fast_options());
    server.start();
    WsClient c(server.http_port());
    const auto first = c.read();
    EXPECT_EQ(first["type"], "snapshot");
    EXPECT_EQ(first["v"], 1);

    c.command(1, "power_on");
    const auto ev = c.read_until([](const io::json& m) { return m["type"] == "event"; });
    EXPECT_EQ(ev["event"]["command"]["kind"], "power_on");
    const auto snap = c.read_until([](const io::json& m) { return m["type"] == "snapshot"; });
    EXPECT_TRUE(snap["panel"]["green_led"].get<bool>());
    EXPECT_EQ(snap["panel"]["lcd_text"], "Workbench Working");
    EXPECT_GE(snap["clock"]["tick_index"].get<std::int64_t>(), ev["event"]["tick"].get<std::int64_t>());
    c.close();
}

TEST(Server, SnapshotsAreMonotonicAndSeqIsEnforced) {
    Server server(RunConfig{}, fast_options());
    server.start();
    WsClient c(server.http_port());
    c.send({{"v", 1}, {"type", "hello"}, {"client", "bench-a"}});
    c.command(5, "power_on");
    c.command(5, "start_motor");
    c.send({{"v", 1}, {"type", "command"}, {"seq", 6}, {"command", {{"kind", "explode"}}}});
    c.send({{"v", 2}});

    std::int64_t last_tick = -1;
    int errors = 0;
    bool hello = false;
    for (int i = 0; i < 60; ++i) {
        const auto m = c.read();
        if (m["type"] == "snapshot") {
            const auto t = m["clock"]["tick_index"].get<std::int64_t>();
            EXPECT_GT(t, last_tick);
            last_tick = t;
        } else if (m["type"] == "error") {
            ++errors;
        } else if (m["type"] == "hello") {
            hello = true;
            EXPECT_EQ(m["client"], "bench-a");
        } else if (m["type"] == "event") {
            EXPECT_EQ(m["event"]["command"]["client"], "bench-a");
        }
    }
    EXPECT_TRUE(hello);
    EXPECT_EQ(errors, 3);
}

TEST(Server, TwoClientsShareOneOrderedEventStream) {
    const auto dir = std::filesystem::temp_directory_path();
    const auto events = (dir / "motorbench_service_events.jsonl").string();
    const auto commands = (dir / "motorbench_service_commands.jsonl").string();
    auto opt = fast_options();
    opt.event_log_path = events;
    opt.command_log_path = commands;
    {
        Server server(RunConfig{}, opt);
        server.start();
        WsClient a(server.http_port());
        WsClient b(server.http_port());
        a.read();
        b.read();
        a.command(1, "power_on");
        b.command(1, "start_motor");
        a.command(2, "start_motor");
        auto seen_by = [](WsClient& c) {
            std::vector<std::string> kinds;
            while (kinds.size() < 3) {
                const auto m = c.read();
                if (m["type"] == "event" && m["event"]["kind"] == "command") {
                    kinds.push_back(m["event"]["command"]["client"].get<std::string>());
                }
            }
            return kinds;
        };
        const auto sa = seen_by(a);
        EXPECT_EQ(sa, seen_by(b));
        server.stop();
    }
    const std::string log = io::read_file(events);
    EXPECT_NE(log.find("power_on"), std::string::npos);
    const auto cmd_log = harness::parse_command_log(io::read_file(commands));
    EXPECT_EQ(cmd_log.records.size(), 3u);
    EXPECT_EQ(io::event_log_text(harness::replay(cmd_log, RunConfig{})), log);
    std::filesystem::remove(events);
    std::filesystem::remove(commands);
}

TEST(Server, LineDelimitedTcp) {
    auto opt = fast_options();
    opt.tcp_port = 0;
    Server server(RunConfig{}, opt);
    server.start();
    ASSERT_TRUE(server.tcp_port());
    net::io_context ioc;
    tcp::socket s(ioc);
    s.connect(tcp::endpoint(net::ip::make_address("127.0.0.1"), *server.tcp_port()));
    net::streambuf buf;
    const auto n = net::read_until(s, buf, '\n');
    const std::string line(net::buffers_begin(buf.data()), net::buffers_begin(buf.data()) + n);
    EXPECT_EQ(io::json::parse(line)["type"], "snapshot");
}

TEST(Server, BadOptionsAreRejected) {
    auto opt = fast_options();
    opt.speed = 0;
    EXPECT_THROW(Server(RunConfig{}, opt), std::invalid_argument);
    opt = fast_options();
    opt.snapshot_every = 0;
    EXPECT_THROW(Server(RunConfig{}, opt), std::invalid_argument);
}
