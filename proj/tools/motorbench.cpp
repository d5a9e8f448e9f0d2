#include "motorbench/harness.hpp"
#include "motorbench/service.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace motorbench;

namespace {

RunConfig config_or_default(const std::string& path) { return path.empty() ? RunConfig{} : io::load_config(path); }

void print_issues(const ConfigError& e) {
    std::cerr << "error: invalid input\n";
    for (const auto& i : e.issues()) std::cerr << "  " << i.field << ": " << i.message << "\n";
}

int cmd_serve(const std::string& config_path, const std::string& listen, double speed, int snapshot_every,
              const std::string& tcp_listen, const std::string& event_log, const std::string& command_log) {
    service::ServiceOptions opt;
    std::tie(opt.address, opt.port) = service::parse_listen(listen);
    opt.speed = speed;
    opt.snapshot_every = snapshot_every;
    if (!tcp_listen.empty()) {
        auto [host, port] = service::parse_listen(tcp_listen);
        if (host != opt.address) throw std::invalid_argument("--tcp must use the same host as --listen");
        opt.tcp_port = port;
    }
    opt.event_log_path = event_log;
    opt.command_log_path = command_log;

    service::Server server(config_or_default(config_path), opt);
    server.start();
    std::cerr << "motorbench listening on http://" << opt.address << ":" << server.http_port()
              << " (ws at /ws)";
    if (auto p = server.tcp_port()) std::cerr << ", tcp " << opt.address << ":" << *p;
    std::cerr << std::endl;
    server.wait_for_signal();
    return 0;
}

int cmd_run(const std::string& scenario, const std::string& config_path, std::uint64_t seed,
            const std::string& log_path, const std::string& command_log_path) {
    const auto script = harness::load_script(scenario);
    const auto r = harness::run_scenario(script, config_or_default(config_path), seed);
    if (!log_path.empty()) io::write_file(log_path, io::event_log_text(r.events));
    if (!command_log_path.empty()) io::write_file(command_log_path, harness::command_log_text(r.commands));
    io::json out{{"scenario", script.name},
                 {"seed", seed},
                 {"observed", r.observed ? io::json(std::string(to_string(*r.observed))) : io::json(nullptr)},
                 {"trip_time_s", r.trip_time_s ? io::json(*r.trip_time_s) : io::json(nullptr)},
                 {"sim_time_s", r.final_world.clock.sim_time_s()},
                 {"events", r.events.size()}};
    std::cout << out.dump() << "\n";
    return 0;
}

int cmd_reliability(const std::string& fault, int n, const std::string& config_path, std::uint64_t base_seed,
                    const std::string& out_path) {
    const RunConfig config = config_or_default(config_path);
    std::vector<FaultKind> faults;
    if (fault == "all") {
        faults.assign(kAllFaults.begin(), kAllFaults.end());
    } else if (auto f = parse_fault_kind(fault)) {
        faults.push_back(*f);
    } else {
        throw ConfigError("--fault", "expected 'all' or one of " + io::detail::fault_names());
    }
    std::vector<harness::ReliabilityReport> reports;
    for (FaultKind f : faults) reports.push_back(harness::run_reliability(f, n, config, base_seed));
    std::cout << harness::render_table(reports);
    if (!out_path.empty()) io::write_file(out_path, harness::reports_to_json(reports).dump(2) + "\n");
    return 0;
}

int cmd_replay(const std::string& commands, const std::string& config_path, std::optional<std::uint64_t> seed,
               const std::string& out_path) {
    RunConfig config = config_or_default(config_path);
    if (seed) config.rng_seed = *seed;
    const auto log = harness::parse_command_log(io::read_file(commands));
    const std::string text = io::event_log_text(harness::replay(log, config));
    if (out_path.empty()) {
        std::cout << text;
    } else {
        io::write_file(out_path, text);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Simulated induction-motor protection bench"};
    app.require_subcommand(1);

    std::string config_path;

    auto* serve = app.add_subcommand("serve", "Run the bench as a network service");
    std::string listen = "127.0.0.1:8080", tcp_listen, event_log, command_log;
    double speed = 1.0;
    int snapshot_every = 1;
    serve->add_option("--config", config_path, "Configuration file")->check(CLI::ExistingFile);
    serve->add_option("--listen", listen, "HTTP/WebSocket address host:port")->capture_default_str();
    serve->add_option("--speed", speed, "Simulated seconds per wall second")->capture_default_str();
    serve->add_option("--snapshot-every", snapshot_every, "Broadcast a snapshot every N ticks")
        ->capture_default_str();
    serve->add_option("--tcp", tcp_listen, "Also serve line-delimited JSON over TCP at host:port");
    serve->add_option("--event-log", event_log, "Event log file (JSON lines)");
    serve->add_option("--command-log", command_log, "Command log file for replay");

    auto* run = app.add_subcommand("run", "Run one scenario script unpaced");
    std::string scenario, log_path, run_command_log;
    std::uint64_t seed = 1;
    run->add_option("--scenario", scenario, "Scenario script")->required()->check(CLI::ExistingFile);
    run->add_option("--config", config_path, "Configuration file")->check(CLI::ExistingFile);
    run->add_option("--seed", seed, "RNG seed")->capture_default_str();
    run->add_option("--log", log_path, "Write the event log here");
    run->add_option("--command-log", run_command_log, "Write the command log here");

    auto* rel = app.add_subcommand("reliability", "Repeat the canonical procedure for a fault");
    std::string fault;
    int n = 30;
    std::uint64_t base_seed = 1;
    std::string out_path;
    rel->add_option("--fault", fault, "Fault kind or 'all'")->required();
    rel->add_option("--n", n, "Trials per fault")->capture_default_str()->check(CLI::PositiveNumber);
    rel->add_option("--config", config_path, "Configuration file")->check(CLI::ExistingFile);
    rel->add_option("--base-seed", base_seed, "Seed of trial 0; trial k uses base+k")->capture_default_str();
    rel->add_option("--out", out_path, "Write the JSON report here");

    auto* rep = app.add_subcommand("replay", "Re-run a command log and print its event log");
    std::string commands, replay_out;
    std::optional<std::uint64_t> replay_seed;
    rep->add_option("--commands", commands, "Command log")->required()->check(CLI::ExistingFile);
    rep->add_option("--config", config_path, "Configuration file")->check(CLI::ExistingFile);
    rep->add_option("--seed", replay_seed, "RNG seed (defaults to the config's rng_seed)");
    rep->add_option("--out", replay_out, "Write the event log here instead of stdout");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*serve) return cmd_serve(config_path, listen, speed, snapshot_every, tcp_listen, event_log, command_log);
        if (*run) return cmd_run(scenario, config_path, seed, log_path, run_command_log);
        if (*rel) return cmd_reliability(fault, n, config_path, base_seed, out_path);
        if (*rep) return cmd_replay(commands, config_path, replay_seed, replay_out);
    } catch (const ConfigError& e) {
        print_issues(e);
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
