#pragma once

#include "motorbench/json_io.hpp"
#include "motorbench/sim.hpp"

#include <cmath>
#include <iomanip>
#include <map>

namespace motorbench::harness {

using io::json;

struct ScriptStep {
    double at_s = 0.0;
    sim::PanelCommand command;

    bool operator==(const ScriptStep&) const = default;
};

/// A timed operator procedure run against a fresh bench.
struct ScenarioScript {
    std::string name;
    std::vector<ScriptStep> steps;
    std::optional<FaultKind> expected_fault;
    double timeout_s = 10.0;

    bool operator==(const ScenarioScript&) const = default;
};

inline std::vector<ValidationIssue> check(const ScenarioScript& s) {
    std::vector<ValidationIssue> issues;
    double last = 0.0;
    for (std::size_t k = 0; k < s.steps.size(); ++k) {
        const double at = s.steps[k].at_s;
        const std::string field = "steps[" + std::to_string(k) + "].at_s";
        if (!(at >= 0.0)) issues.push_back({field, "must be >= 0"});
        else if (at < last) issues.push_back({field, "step times must be non-decreasing"});
        last = std::max(last, at);
    }
    if (!(s.timeout_s > last)) issues.push_back({"timeout_s", "must exceed the last step time"});
    return issues;
}

inline json to_json(const ScenarioScript& s) {
    json steps = json::array();
    for (const auto& st : s.steps) steps.push_back({{"at_s", st.at_s}, {"command", io::to_json(st.command)}});
    json out{{"name", s.name}, {"steps", steps}};
    out["expected_fault"] = s.expected_fault ? json(std::string(to_string(*s.expected_fault))) : json(nullptr);
    out["timeout_s"] = s.timeout_s;
    return out;
}

inline ScenarioScript script_from_json(const json& j) {
    std::vector<ValidationIssue> issues;
    ScenarioScript s;
    io::detail::ObjectReader r(j, "", issues);
    if (r.ok()) {
        r.string("name", s.name, true);
        r.number("timeout_s", s.timeout_s, true);
        if (const json* ef = r.find("expected_fault"); ef != nullptr && !ef->is_null()) {
            FaultKind f{};
            r.enumeration("expected_fault", f, parse_fault_kind, io::detail::fault_names());
            s.expected_fault = f;
        }
        const json* steps = r.find("steps");
        if (steps == nullptr || !steps->is_array()) {
            r.fail("steps", "expected array");
        } else {
            for (std::size_t k = 0; k < steps->size(); ++k) {
                const std::string path = "steps[" + std::to_string(k) + "]";
                io::detail::ObjectReader sr((*steps)[k], path, issues);
                ScriptStep step;
                sr.number("at_s", step.at_s, true);
                if (const json* c = sr.find("command")) {
                    try {
                        step.command = io::command_from_json(*c, path + ".command");
                    } catch (const ConfigError& e) {
                        issues.insert(issues.end(), e.issues().begin(), e.issues().end());
                    }
                } else if (sr.ok()) {
                    sr.fail(path + ".command", "required field missing");
                }
                sr.finish();
                s.steps.push_back(std::move(step));
            }
        }
        r.finish();
    }
    if (issues.empty()) issues = check(s);
    if (!issues.empty()) throw ConfigError(std::move(issues));
    return s;
}

inline ScenarioScript load_script(const std::string& path) {
    return script_from_json(io::parse_json_text(io::read_file(path), path));
}

/// Tick at whose start a command scheduled for at_s is applied.
inline std::int64_t tick_for(double at_s, double tick_s) {
    return static_cast<std::int64_t>(std::ceil(at_s / tick_s - 1e-9));
}

/**
 * The bench procedure for one fault: power on, start the motor, let it settle,
 * switch the fault selector on and wait for the relay. Extended start arms the
 * brake before the start command; overcurrent turns the potentiometer fully.
 */
inline ScenarioScript canonical_script(FaultKind f) {
    using sim::CommandKind;
    using sim::PanelCommand;
    ScenarioScript s;
    s.name = "canonical_" + std::string(to_string(f));
    s.expected_fault = f;
    s.timeout_s = 10.0;
    s.steps.push_back({0.0, PanelCommand::simple(CommandKind::PowerOn)});
    if (f == FaultKind::ExtendedStart) {
        s.steps.push_back({0.1, PanelCommand::set_fault(f, true)});
        s.steps.push_back({0.2, PanelCommand::simple(CommandKind::StartMotor)});
        return s;
    }
    s.steps.push_back({0.1, PanelCommand::simple(CommandKind::StartMotor)});
    if (f == FaultKind::Overcurrent) {
        s.steps.push_back({0.9, PanelCommand::set_potentiometer(1.0)});
        s.timeout_s = 15.0;
    }
    s.steps.push_back({1.0, PanelCommand::set_fault(f, true)});
    return s;
}

/// Power on and start a healthy motor; no fault is expected.
inline ScenarioScript healthy_script() {
    using sim::CommandKind;
    using sim::PanelCommand;
    ScenarioScript s;
    s.name = "healthy";
    s.timeout_s = 10.0;
    s.steps.push_back({0.0, PanelCommand::simple(CommandKind::PowerOn)});
    s.steps.push_back({0.1, PanelCommand::simple(CommandKind::StartMotor)});
    return s;
}

// ---- command log and replay ------------------------------------------------

struct CommandRecord {
    /// Tick index at whose start the command was applied.
    std::int64_t tick = 0;
    sim::PanelCommand command;

    bool operator==(const CommandRecord&) const = default;
};

/// Every command a run applied plus the tick count it ran for.
struct CommandLog {
    std::vector<CommandRecord> records;
    std::int64_t end_tick = 0;

    bool operator==(const CommandLog&) const = default;
};

inline std::string command_log_text(const CommandLog& log) {
    std::string out;
    for (const auto& r : log.records) {
        out += json{{"tick", r.tick}, {"command", io::to_json(r.command)}}.dump();
        out += '\n';
    }
    out += json{{"end_tick", log.end_tick}}.dump();
    out += '\n';
    return out;
}

inline CommandLog parse_command_log(const std::string& text) {
    CommandLog log;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    bool ended = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = "line " + std::to_string(line_no);
        if (ended) throw ConfigError(where, "content after end_tick");
        const json j = io::parse_json_text(line, where);
        std::vector<ValidationIssue> issues;
        io::detail::ObjectReader r(j, where, issues);
        if (r.has("end_tick")) {
            r.integer("end_tick", log.end_tick, true);
            ended = true;
        } else {
            CommandRecord rec;
            r.integer("tick", rec.tick, true);
            if (const json* c = r.find("command")) {
                try {
                    rec.command = io::command_from_json(*c, where + ".command");
                } catch (const ConfigError& e) {
                    issues.insert(issues.end(), e.issues().begin(), e.issues().end());
                }
            } else {
                r.fail(where + ".command", "required field missing");
            }
            if (!log.records.empty() && rec.tick < log.records.back().tick) {
                r.fail(where + ".tick", "ticks must be non-decreasing");
            }
            log.records.push_back(std::move(rec));
        }
        r.finish();
        if (!issues.empty()) throw ConfigError(std::move(issues));
    }
    if (!ended) throw ConfigError("end_tick", "command log is missing its end_tick line");
    if (!log.records.empty() && log.records.back().tick >= log.end_tick) {
        throw ConfigError("end_tick", "must exceed the last command tick");
    }
    return log;
}

/// Drives a world tick by tick, keeping the event log and the command log.
class Recorder {
public:
    explicit Recorder(sim::World w) : world_(std::move(w)) {}

    const sim::World& world() const { return world_; }
    const std::vector<sim::Event>& events() const { return events_; }
    const CommandLog& commands() const { return commands_; }

    /// Runs one tick; returns the events it produced.
    std::span<const sim::Event> tick(std::vector<sim::PanelCommand> cmds = {}) {
        for (const auto& c : cmds) commands_.records.push_back({world_.clock.tick_index, c});
        auto r = sim::step(std::move(world_), cmds);
        world_ = std::move(r.world);
        commands_.end_tick = world_.clock.tick_index;
        const std::size_t first = events_.size();
        events_.insert(events_.end(), r.events.begin(), r.events.end());
        return std::span<const sim::Event>(events_).subspan(first);
    }

private:
    sim::World world_;
    std::vector<sim::Event> events_;
    CommandLog commands_;
};

/// Re-run a recorded command log on a fresh world.
inline std::vector<sim::Event> replay(const CommandLog& log, RunConfig config) {
    Recorder rec(sim::make_world(std::move(config)));
    std::size_t next = 0;
    while (rec.world().clock.tick_index < log.end_tick) {
        std::vector<sim::PanelCommand> cmds;
        while (next < log.records.size() && log.records[next].tick == rec.world().clock.tick_index) {
            cmds.push_back(log.records[next++].command);
        }
        rec.tick(std::move(cmds));
    }
    return rec.events();
}

// ---- scenarios ---------------------------------------------------------------

struct ScenarioResult {
    std::vector<sim::Event> events;
    CommandLog commands;
    std::optional<FaultKind> observed;
    std::optional<double> trip_time_s;
    sim::World final_world;
};

/**
 * Run a script against a fresh world seeded with `seed`, unpaced. Stops at the
 * timeout, or as soon as a trip has latched and no steps remain. `observed` is
 * the classification of the first trip.
 */
inline ScenarioResult run_scenario(const ScenarioScript& script, RunConfig config, std::uint64_t seed) {
    if (auto issues = check(script); !issues.empty()) throw ConfigError(std::move(issues));
    config.rng_seed = seed;
    const double dt = config.tick_duration_s;
    Recorder rec(sim::make_world(std::move(config)));
    const std::int64_t end = tick_for(script.timeout_s, dt);

    ScenarioResult out;
    std::size_t next = 0;
    while (rec.world().clock.tick_index < end) {
        const std::int64_t now = rec.world().clock.tick_index;
        std::vector<sim::PanelCommand> cmds;
        while (next < script.steps.size() && tick_for(script.steps[next].at_s, dt) <= now) {
            sim::PanelCommand c = script.steps[next].command;
            if (c.client_id.empty()) c.client_id = "script";
            if (c.sequence == 0) c.sequence = static_cast<std::int64_t>(next) + 1;
            cmds.push_back(std::move(c));
            ++next;
        }
        for (const auto& e : rec.tick(std::move(cmds))) {
            if (e.kind == sim::EventKind::Trip && !out.observed) {
                out.observed = e.trip->fault;
                out.trip_time_s = e.sim_time_s;
            }
        }
        if (rec.world().latched() && next == script.steps.size()) break;
    }
    out.events = rec.events();
    out.commands = rec.commands();
    out.final_world = rec.world();
    return out;
}

// ---- reliability -------------------------------------------------------------

inline constexpr int kReportSchemaVersion = 1;

struct ReliabilityReport {
    FaultKind fault = FaultKind::Overvoltage;
    int trials = 0;
    int correct = 0;
    double rate = 0.0;
    std::map<FaultKind, int> misclassifications;
    int no_trip = 0;
    std::uint64_t seed = 0;

    bool operator==(const ReliabilityReport&) const = default;
};

/// Canonical script for `fault`, n times, seeds base_seed .. base_seed + n - 1.
inline ReliabilityReport run_reliability(FaultKind fault, int n, const RunConfig& config, std::uint64_t base_seed) {
    if (n < 1) throw std::invalid_argument("n must be >= 1");
    const ScenarioScript script = canonical_script(fault);
    ReliabilityReport rep;
    rep.fault = fault;
    rep.seed = base_seed;
    rep.trials = n;
    for (int k = 0; k < n; ++k) {
        const auto r = run_scenario(script, config, base_seed + static_cast<std::uint64_t>(k));
        if (!r.observed) ++rep.no_trip;
        else if (*r.observed == fault) ++rep.correct;
        else ++rep.misclassifications[*r.observed];
    }
    rep.rate = static_cast<double>(rep.correct) / rep.trials;
    return rep;
}

inline json to_json(const ReliabilityReport& r) {
    json mis = json::object();
    for (const auto& [f, c] : r.misclassifications) mis[std::string(to_string(f))] = c;
    return {
        {"fault", to_string(r.fault)}, {"trials", r.trials}, {"correct", r.correct}, {"rate", r.rate},
        {"misclassifications", mis},   {"no_trip", r.no_trip}, {"seed", r.seed},
    };
}

inline json reports_to_json(std::span<const ReliabilityReport> reports) {
    json arr = json::array();
    for (const auto& r : reports) arr.push_back(to_json(r));
    return {{"schema", "motorbench.reliability"}, {"schema_version", kReportSchemaVersion}, {"reports", arr}};
}

inline std::vector<ReliabilityReport> reports_from_json(const json& j) {
    std::vector<ValidationIssue> issues;
    std::vector<ReliabilityReport> out;
    io::detail::ObjectReader r(j, "", issues);
    std::string schema;
    int version = 0;
    r.string("schema", schema, true);
    r.integer("schema_version", version, true);
    if (r.ok() && schema != "motorbench.reliability") r.fail("schema", "expected motorbench.reliability");
    if (r.ok() && version != kReportSchemaVersion) r.fail("schema_version", "unsupported version");
    const json* reports = r.find("reports");
    if (reports == nullptr || !reports->is_array()) {
        r.fail("reports", "expected array");
    } else {
        for (std::size_t k = 0; k < reports->size(); ++k) {
            const std::string path = "reports[" + std::to_string(k) + "]";
            io::detail::ObjectReader rr((*reports)[k], path, issues);
            ReliabilityReport rep;
            rr.enumeration("fault", rep.fault, parse_fault_kind, io::detail::fault_names(), true);
            rr.integer("trials", rep.trials, true);
            rr.integer("correct", rep.correct, true);
            rr.number("rate", rep.rate, true);
            rr.integer("no_trip", rep.no_trip, true);
            rr.unsigned64("seed", rep.seed, true);
            if (const json* mis = rr.find("misclassifications"); mis != nullptr && mis->is_object()) {
                for (auto it = mis->begin(); it != mis->end(); ++it) {
                    auto f = parse_fault_kind(it.key());
                    if (!f || !it.value().is_number_integer()) {
                        rr.fail(path + ".misclassifications." + it.key(), "expected fault name -> count");
                        continue;
                    }
                    rep.misclassifications[*f] = it.value().get<int>();
                }
            } else {
                rr.fail(path + ".misclassifications", "expected object");
            }
            rr.finish();
            out.push_back(std::move(rep));
        }
    }
    r.finish();
    if (!issues.empty()) throw ConfigError(std::move(issues));
    return out;
}

/// Fixed-width text table, one row per report.
inline std::string render_table(std::span<const ReliabilityReport> reports) {
    std::ostringstream os;
    os << std::left << std::setw(18) << "fault" << std::right << std::setw(8) << "trials" << std::setw(9)
       << "correct" << std::setw(8) << "rate" << std::setw(9) << "no_trip" << "  misclassified as\n";
    for (const auto& r : reports) {
        std::string mis;
        for (const auto& [f, c] : r.misclassifications) {
            if (!mis.empty()) mis += ", ";
            mis += std::string(to_string(f)) + "=" + std::to_string(c);
        }
        if (mis.empty()) mis = "-";
        os << std::left << std::setw(18) << to_string(r.fault) << std::right << std::setw(8) << r.trials
           << std::setw(9) << r.correct << std::setw(8) << std::fixed << std::setprecision(3) << r.rate
           << std::setw(9) << r.no_trip << "  " << mis << "\n";
    }
    return os.str();
}

} // namespace motorbench::harness
