#pragma once

#include "motorbench/run_config.hpp"
#include "motorbench/sim.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace motorbench::io {

/// Insertion-ordered so written files keep a readable field order.
using json = nlohmann::ordered_json;

inline constexpr int kConfigSchemaVersion = 1;
inline constexpr int kWireVersion = 1;

namespace detail {

inline std::string join(const std::string& path, std::string_view key) {
    return path.empty() ? std::string(key) : path + "." + std::string(key);
}

inline std::string json_type(const json& j) { return j.type_name(); }

/// Strict reader for one JSON object: typed lookups, unknown keys reported.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string path, std::vector<ValidationIssue>& issues)
        : j_(j), path_(std::move(path)), issues_(issues) {
        if (!j_.is_object()) fail(path_.empty() ? "<root>" : path_, "expected object, got " + json_type(j_));
    }

    bool ok() const { return j_.is_object(); }
    const std::string& path() const { return path_; }

    bool has(std::string_view key) const { return ok() && j_.contains(key); }

    const json* find(std::string_view key) {
        seen_.emplace_back(key);
        if (!ok()) return nullptr;
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void number(std::string_view key, double& out, bool required = false) {
        if (const json* v = lookup(key, required)) {
            if (v->is_number()) out = v->get<double>();
            else fail(join(path_, key), "expected number, got " + json_type(*v));
        }
    }

    void integer(std::string_view key, int& out, bool required = false) {
        if (const json* v = lookup(key, required)) {
            if (v->is_number_integer()) out = v->get<int>();
            else fail(join(path_, key), "expected integer, got " + json_type(*v));
        }
    }

    void integer(std::string_view key, std::int64_t& out, bool required = false) {
        if (const json* v = lookup(key, required)) {
            if (v->is_number_integer()) out = v->get<std::int64_t>();
            else fail(join(path_, key), "expected integer, got " + json_type(*v));
        }
    }

    void unsigned64(std::string_view key, std::uint64_t& out, bool required = false) {
        if (const json* v = lookup(key, required)) {
            if (v->is_number_unsigned()) out = v->get<std::uint64_t>();
            else fail(join(path_, key), "expected non-negative integer, got " + json_type(*v));
        }
    }

    void boolean(std::string_view key, bool& out, bool required = false) {
        if (const json* v = lookup(key, required)) {
            if (v->is_boolean()) out = v->get<bool>();
            else fail(join(path_, key), "expected boolean, got " + json_type(*v));
        }
    }

    void string(std::string_view key, std::string& out, bool required = false) {
        if (const json* v = lookup(key, required)) {
            if (v->is_string()) out = v->get<std::string>();
            else fail(join(path_, key), "expected string, got " + json_type(*v));
        }
    }

    /// String mapped through parse(); reports the accepted spellings on failure.
    template <typename T, typename Parse>
    void enumeration(std::string_view key, T& out, Parse parse, const std::string& accepted, bool required = false) {
        const json* v = lookup(key, required);
        if (v == nullptr) return;
        if (v->is_string()) {
            if (auto x = parse(v->get<std::string>())) {
                out = *x;
                return;
            }
        }
        fail(join(path_, key), "expected one of " + accepted);
    }

    void fail(std::string field, std::string message) { issues_.push_back({std::move(field), std::move(message)}); }

    /// Report keys that no lookup asked for.
    void finish(std::initializer_list<std::string_view> also_allowed = {}) {
        if (!ok()) return;
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            const std::string& k = it.key();
            const bool known = std::find(seen_.begin(), seen_.end(), k) != seen_.end() ||
                               std::find(also_allowed.begin(), also_allowed.end(), k) != also_allowed.end();
            if (!known) fail(join(path_, k), "unknown field");
        }
    }

private:
    const json* lookup(std::string_view key, bool required) {
        const json* v = find(key);
        if (v == nullptr && required && ok()) fail(join(path_, key), "required field missing");
        return v;
    }

    const json& j_;
    std::string path_;
    std::vector<ValidationIssue>& issues_;
    std::vector<std::string> seen_;
};

inline std::optional<Phase> parse_phase(std::string_view s) {
    if (s == "a") return Phase::A;
    if (s == "b") return Phase::B;
    if (s == "c") return Phase::C;
    return std::nullopt;
}

inline std::string_view to_string(Phase p) {
    switch (p) {
    case Phase::A: return "a";
    case Phase::B: return "b";
    case Phase::C: return "c";
    }
    return "?";
}

inline std::optional<injection::UndervoltageMode> parse_undervoltage_mode(std::string_view s) {
    if (s == "three_pole_interruption") return injection::UndervoltageMode::ThreePoleInterruption;
    return std::nullopt;
}

inline std::string fault_names() {
    std::string out;
    for (FaultKind f : kAllFaults) {
        if (!out.empty()) out += ", ";
        out += to_string(f);
    }
    return out;
}

inline std::string command_names() {
    std::string out;
    for (sim::CommandKind k : sim::kAllCommandKinds) {
        if (!out.empty()) out += ", ";
        out += sim::to_string(k);
    }
    return out;
}

template <typename T>
json phase_json(const PhaseArray<T>& x) {
    return json::array({x[0], x[1], x[2]});
}

} // namespace detail

// ---- configuration -------------------------------------------------------

inline json to_json(const motor::MotorParams& p) {
    return {
        {"rated_voltage_ll_v", p.rated_voltage_ll_v},
        {"rated_power_w", p.rated_power_w},
        {"pole_pairs", p.pole_pairs},
        {"supply_frequency_hz", p.supply_frequency_hz},
        {"stator_resistance_ohm", p.stator_resistance_ohm},
        {"stator_reactance_ohm", p.stator_reactance_ohm},
        {"rotor_resistance_ohm", p.rotor_resistance_ohm},
        {"rotor_reactance_ohm", p.rotor_reactance_ohm},
        {"magnetizing_reactance_ohm", p.magnetizing_reactance_ohm},
        {"inertia_kgm2", p.inertia_kgm2},
        {"rated_current_a", p.rated_current_a},
        {"brake_torque_max_nm", p.brake_torque_max_nm},
        {"overcurrent_brake_gain", p.overcurrent_brake_gain},
        {"slip_run_threshold", p.slip_run_threshold},
    };
}

inline json to_json(const protection::ProtectionSettings& s) {
    json out = json::object();
    for (const auto& r : protection::kLegalRanges) {
        const auto& setting = s.*(r.member);
        out[r.name] = {{"pickup_pct", setting.pickup_pct}, {r.delay_key, setting.delay_s}};
    }
    out["phase_loss"] = {
        {"floor_pct", s.phase_loss.floor_pct},
        {"companion_min_pct", s.phase_loss.companion_min_pct},
        {"delay_s", s.phase_loss.delay_s},
    };
    return out;
}

inline json to_json(const injection::InjectionConfig& c) {
    return {
        {"overvoltage_source_ll_v", c.overvoltage_source_ll_v},
        {"undervoltage_mode", "three_pole_interruption"},
        {"pole_stagger_max_s", c.pole_stagger_max_s},
        {"faulted_phase", detail::to_string(c.faulted_phase)},
        {"unbalance_sag_fraction", c.unbalance_sag_fraction},
        {"series_impedance_factor", c.series_impedance_factor},
        {"noise_sigma_fraction", c.noise_sigma_fraction},
        {"contactor_coil_phase", detail::to_string(c.contactor_coil_phase)},
        {"contactor_release_s", c.contactor_release_s},
        {"contactor_release_jitter_s", c.contactor_release_jitter_s},
    };
}

inline json to_json(const RunConfig& c) {
    return {
        {"schema_version", kConfigSchemaVersion},
        {"tick_duration_s", c.tick_duration_s},
        {"rng_seed", c.rng_seed},
        {"motor", to_json(c.motor)},
        {"protection", to_json(c.protection)},
        {"injection", to_json(c.injection)},
    };
}

namespace detail {

inline void read_motor(const json& j, motor::MotorParams& p, bool& gain_given, std::vector<ValidationIssue>& issues) {
    ObjectReader r(j, "motor", issues);
    r.number("rated_voltage_ll_v", p.rated_voltage_ll_v);
    r.number("rated_power_w", p.rated_power_w);
    r.integer("pole_pairs", p.pole_pairs);
    r.number("supply_frequency_hz", p.supply_frequency_hz);
    r.number("stator_resistance_ohm", p.stator_resistance_ohm);
    r.number("stator_reactance_ohm", p.stator_reactance_ohm);
    r.number("rotor_resistance_ohm", p.rotor_resistance_ohm);
    r.number("rotor_reactance_ohm", p.rotor_reactance_ohm);
    r.number("magnetizing_reactance_ohm", p.magnetizing_reactance_ohm);
    r.number("inertia_kgm2", p.inertia_kgm2);
    r.number("rated_current_a", p.rated_current_a);
    r.number("brake_torque_max_nm", p.brake_torque_max_nm);
    gain_given = r.has("overcurrent_brake_gain");
    r.number("overcurrent_brake_gain", p.overcurrent_brake_gain);
    r.number("slip_run_threshold", p.slip_run_threshold);
    r.finish();
}

inline void read_protection(const json& j, protection::ProtectionSettings& s, std::vector<ValidationIssue>& issues) {
    ObjectReader r(j, "protection", issues);
    for (const auto& range : protection::kLegalRanges) {
        auto& setting = s.*(range.member);
        if (const json* sub = r.find(range.name)) {
            ObjectReader rr(*sub, std::string("protection.") + range.name, issues);
            rr.number("pickup_pct", setting.pickup_pct);
            rr.number(range.delay_key, setting.delay_s);
            rr.finish();
        }
    }
    if (const json* sub = r.find("phase_loss")) {
        ObjectReader rr(*sub, "protection.phase_loss", issues);
        rr.number("floor_pct", s.phase_loss.floor_pct);
        rr.number("companion_min_pct", s.phase_loss.companion_min_pct);
        rr.number("delay_s", s.phase_loss.delay_s);
        rr.finish();
    }
    r.finish();
}

inline void read_injection(const json& j, injection::InjectionConfig& c, std::vector<ValidationIssue>& issues) {
    ObjectReader r(j, "injection", issues);
    r.number("overvoltage_source_ll_v", c.overvoltage_source_ll_v);
    r.enumeration("undervoltage_mode", c.undervoltage_mode, parse_undervoltage_mode, "three_pole_interruption");
    r.number("pole_stagger_max_s", c.pole_stagger_max_s);
    r.enumeration("faulted_phase", c.faulted_phase, parse_phase, "a, b, c");
    r.number("unbalance_sag_fraction", c.unbalance_sag_fraction);
    r.number("series_impedance_factor", c.series_impedance_factor);
    r.number("noise_sigma_fraction", c.noise_sigma_fraction);
    r.enumeration("contactor_coil_phase", c.contactor_coil_phase, parse_phase, "a, b, c");
    r.number("contactor_release_s", c.contactor_release_s);
    r.number("contactor_release_jitter_s", c.contactor_release_jitter_s);
    r.finish();
}

} // namespace detail

/**
 * Build a RunConfig from parsed JSON. Absent fields keep their defaults; a
 * missing motor.overcurrent_brake_gain is recalibrated for the given motor.
 * Throws ConfigError listing every offending field.
 */
inline RunConfig config_from_json(const json& j) {
    std::vector<ValidationIssue> issues;
    RunConfig c;
    bool gain_given = false;
    detail::ObjectReader r(j, "", issues);
    if (r.ok()) {
        int version = kConfigSchemaVersion;
        r.integer("schema_version", version);
        if (version != kConfigSchemaVersion) {
            r.fail("schema_version", "unsupported version " + std::to_string(version));
        }
        r.number("tick_duration_s", c.tick_duration_s);
        r.unsigned64("rng_seed", c.rng_seed);
        if (const json* m = r.find("motor")) detail::read_motor(*m, c.motor, gain_given, issues);
        if (const json* p = r.find("protection")) detail::read_protection(*p, c.protection, issues);
        if (const json* i = r.find("injection")) detail::read_injection(*i, c.injection, issues);
        r.finish();
    }
    if (!issues.empty()) throw ConfigError(std::move(issues));

    if (!gain_given) {
        auto motor_issues = motor::check(c.motor);
        if (motor_issues.empty()) {
            try {
                c.motor.overcurrent_brake_gain = motor::calibrate_overcurrent_brake_gain(c.motor);
            } catch (const std::invalid_argument& e) {
                throw ConfigError("motor.overcurrent_brake_gain", std::string("calibration failed: ") + e.what());
            }
        }
    }
    validate(c);
    return c;
}

inline json parse_json_text(const std::string& text, const std::string& what) {
    try {
        return json::parse(text, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
        throw ConfigError(what, std::string("malformed JSON: ") + e.what());
    }
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(path, "cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline RunConfig parse_config(const std::string& text) { return config_from_json(parse_json_text(text, "<config>")); }

inline RunConfig load_config(const std::string& path) { return parse_config(read_file(path)); }

inline void save_config(const RunConfig& c, const std::string& path) { write_file(path, to_json(c).dump(2) + "\n"); }

// ---- commands, trips, events ---------------------------------------------

inline json to_json(const sim::PanelCommand& c) {
    json out{{"kind", sim::to_string(c.kind)}};
    if (c.kind == sim::CommandKind::SetFault) {
        out["fault"] = to_string(c.fault);
        out["on"] = c.on;
    }
    if (c.kind == sim::CommandKind::SetPotentiometer) out["value"] = c.value;
    if (c.sequence != 0) out["seq"] = c.sequence;
    if (!c.client_id.empty()) out["client"] = c.client_id;
    return out;
}

/// Throws ConfigError naming the offending field under `path`.
inline sim::PanelCommand command_from_json(const json& j, const std::string& path = "command") {
    std::vector<ValidationIssue> issues;
    sim::PanelCommand c;
    detail::ObjectReader r(j, path, issues);
    if (r.ok()) {
        r.enumeration("kind", c.kind, sim::parse_command_kind, detail::command_names(), true);
        if (c.kind == sim::CommandKind::SetFault) {
            r.enumeration("fault", c.fault, parse_fault_kind, detail::fault_names(), true);
            r.boolean("on", c.on, true);
        }
        if (c.kind == sim::CommandKind::SetPotentiometer) r.number("value", c.value, true);
        r.integer("seq", c.sequence);
        r.string("client", c.client_id);
        r.finish();
    }
    if (!issues.empty()) throw ConfigError(std::move(issues));
    return c;
}

inline json to_json(const Quantity& q) { return {{"value", q.value}, {"unit", to_string(q.unit)}}; }

inline json to_json(const protection::TripEvent& t) {
    return {
        {"function", to_string(t.function)},
        {"fault", to_string(t.fault)},
        {"t_s", t.sim_time_s},
        {"measured", to_json(t.measured)},
        {"setting", to_json(t.setting)},
    };
}

inline json to_json(const sim::Event& e) {
    json out{{"tick", e.tick}, {"t_s", e.sim_time_s}, {"kind", sim::to_string(e.kind)}};
    if (e.command) out["command"] = to_json(*e.command);
    if (!e.reason.empty()) out["reason"] = e.reason;
    if (e.trip) out["trip"] = to_json(*e.trip);
    return out;
}

/// One line of the event log.
inline std::string event_line(const sim::Event& e) { return to_json(e).dump(); }

inline std::string event_log_text(std::span<const sim::Event> events) {
    std::string out;
    for (const auto& e : events) {
        out += event_line(e);
        out += '\n';
    }
    return out;
}

// ---- snapshots -------------------------------------------------------------

inline json to_json(const sim::World& w, std::span<const sim::Event> last_events) {
    const double tick_s = w.clock.tick_duration_s;
    json selectors = json::array();
    for (FaultKind f : w.panel.active_fault_selectors) selectors.push_back(to_string(f));
    const auto rows = sim::lcd_rows(w.panel.lcd_text);
    json functions = json::array();
    for (FaultKind f : kAllFaults) {
        const auto& st = w.functions[index(f)];
        functions.push_back({
            {"function", to_string(ansi_function(f))},
            {"fault", to_string(f)},
            {"picked_up", st.picked_up},
            {"timer_s", st.timer_s(tick_s)},
            {"tripped", st.tripped},
        });
    }
    json events = json::array();
    for (const auto& e : last_events) events.push_back(to_json(e));
    return {
        {"v", kWireVersion},
        {"type", "snapshot"},
        {"clock", {{"tick_index", w.clock.tick_index}, {"tick_duration_s", tick_s}, {"sim_time_s", w.clock.sim_time_s()}}},
        {"panel",
         {
             {"power_on", w.panel.power_on},
             {"green_led", w.panel.green_led},
             {"yellow_fault_led", w.panel.yellow_fault_led},
             {"buzzer", w.panel.buzzer},
             {"lcd_text", w.panel.lcd_text},
             {"lcd_lines", json::array({rows[0], rows[1]})},
             {"active_fault_selectors", selectors},
             {"potentiometer", w.panel.potentiometer},
             {"housing_open", w.panel.housing_open},
             {"latched_trip", w.panel.latched_trip ? to_json(*w.panel.latched_trip) : json(nullptr)},
         }},
        {"motor",
         {
             {"running", w.motor.running},
             {"starting_phase", w.motor.starting_phase},
             {"slip", w.motor.slip},
             {"rotor_speed_rad_s", w.motor.rotor_speed_rad_s},
             {"phase_currents_a", detail::phase_json(w.motor.phase_currents_a)},
             {"torque_e_nm", w.motor.torque_e_nm},
         }},
        {"measurement",
         {
             {"v", detail::phase_json(w.measurement.v)},
             {"i", detail::phase_json(w.measurement.i)},
             {"frequency_hz", w.measurement.frequency_hz},
             {"sim_time_s", w.measurement.sim_time_s},
         }},
        {"function_states", functions},
        {"last_events", events},
    };
}

} // namespace motorbench::io
