#pragma once

#include "motorbench/injection.hpp"
#include "motorbench/motor.hpp"
#include "motorbench/protection.hpp"
#include "motorbench/rng.hpp"
#include "motorbench/run_config.hpp"

#include <memory>
#include <span>

namespace motorbench::sim {

/// Fixed-tick clock; time is always tick_index * tick_duration_s.
struct SimClock {
    std::int64_t tick_index = 0;
    double tick_duration_s = 0.010;

    double sim_time_s() const { return static_cast<double>(tick_index) * tick_duration_s; }

    bool operator==(const SimClock&) const = default;
};

enum class CommandKind : std::uint8_t {
    PowerOn,
    PowerOff,
    StartMotor,
    StopMotor,
    SetFault,
    SetPotentiometer,
    ResetFault,
    OpenHousing,
    CloseHousing,
};

inline constexpr std::array<CommandKind, 9> kAllCommandKinds = {
    CommandKind::PowerOn,          CommandKind::PowerOff,   CommandKind::StartMotor,
    CommandKind::StopMotor,        CommandKind::SetFault,   CommandKind::SetPotentiometer,
    CommandKind::ResetFault,       CommandKind::OpenHousing, CommandKind::CloseHousing,
};

inline constexpr std::string_view to_string(CommandKind k) {
    switch (k) {
    case CommandKind::PowerOn: return "power_on";
    case CommandKind::PowerOff: return "power_off";
    case CommandKind::StartMotor: return "start_motor";
    case CommandKind::StopMotor: return "stop_motor";
    case CommandKind::SetFault: return "set_fault";
    case CommandKind::SetPotentiometer: return "set_potentiometer";
    case CommandKind::ResetFault: return "reset_fault";
    case CommandKind::OpenHousing: return "open_housing";
    case CommandKind::CloseHousing: return "close_housing";
    }
    return "?";
}

inline std::optional<CommandKind> parse_command_kind(std::string_view s) {
    for (CommandKind k : kAllCommandKinds) {
        if (to_string(k) == s) return k;
    }
    return std::nullopt;
}

/// An operator action on the bench panel.
struct PanelCommand {
    CommandKind kind = CommandKind::PowerOn;
    /// set_fault only.
    FaultKind fault = FaultKind::Overvoltage;
    bool on = false;
    /// set_potentiometer only.
    double value = 0.0;
    std::int64_t sequence = 0;
    std::string client_id;

    bool operator==(const PanelCommand&) const = default;

    static PanelCommand simple(CommandKind k) {
        PanelCommand c;
        c.kind = k;
        return c;
    }
    static PanelCommand set_fault(FaultKind f, bool on) {
        PanelCommand c = simple(CommandKind::SetFault);
        c.fault = f;
        c.on = on;
        return c;
    }
    static PanelCommand set_potentiometer(double v) {
        PanelCommand c = simple(CommandKind::SetPotentiometer);
        c.value = v;
        return c;
    }
};

struct PanelState {
    bool power_on = false;
    bool green_led = false;
    bool yellow_fault_led = false;
    bool buzzer = false;
    std::string lcd_text;
    std::vector<FaultKind> active_fault_selectors;
    double potentiometer = 0.0;
    bool housing_open = false;
    std::optional<protection::TripEvent> latched_trip;

    bool operator==(const PanelState&) const = default;
};

inline constexpr std::string_view kWorkingMessage = "Workbench Working";

inline constexpr std::string_view trip_message(FaultKind f) {
    switch (f) {
    case FaultKind::Overvoltage: return "TRIP 59 Overvoltage";
    case FaultKind::Undervoltage: return "TRIP 27 Undervoltage";
    case FaultKind::Overcurrent: return "TRIP 51 Overcurrent";
    case FaultKind::PhaseLoss: return "TRIP Phase Loss";
    case FaultKind::LockedRotor: return "TRIP Locked Rotor";
    case FaultKind::ExtendedStart: return "TRIP 48 Extended Start";
    case FaultKind::VoltageUnbalance: return "TRIP 47 Voltage Unbalance";
    case FaultKind::CurrentUnbalance: return "TRIP 46 Current Unbalance";
    }
    return "";
}

inline std::string lcd_message(const std::optional<protection::TripEvent>& trip, bool power_on) {
    if (!power_on) return {};
    if (trip) return std::string(trip_message(trip->fault));
    return std::string(kWorkingMessage);
}

inline constexpr std::size_t kLcdColumns = 16;

/// Greedy word wrap onto the 2x16 display.
inline std::array<std::string, 2> lcd_rows(std::string_view text) {
    std::array<std::string, 2> rows;
    std::size_t row = 0;
    std::size_t pos = 0;
    while (pos < text.size() && row < rows.size()) {
        std::size_t end = text.find(' ', pos);
        if (end == std::string_view::npos) end = text.size();
        const std::string_view word = text.substr(pos, end - pos);
        std::string& r = rows[row];
        const std::size_t needed = r.empty() ? word.size() : r.size() + 1 + word.size();
        if (needed <= kLcdColumns) {
            if (!r.empty()) r += ' ';
            r += word.substr(0, kLcdColumns);
            pos = end + 1;
        } else if (r.empty()) {
            r = word.substr(0, kLcdColumns);
            pos = end + 1;
        } else {
            ++row;
        }
    }
    return rows;
}

struct Contactor {
    bool closed = false;
    /// Released after losing its coil supply; needs a new start command.
    bool dropped_out = false;
    std::optional<double> release_at_s;

    bool operator==(const Contactor&) const = default;
};

enum class EventKind : std::uint8_t {
    CommandAccepted,
    CommandRejected,
    Trip,
    Reset,
    MotorStarted,
    ContactorDropout,
    Interlock,
};

inline constexpr std::string_view to_string(EventKind k) {
    switch (k) {
    case EventKind::CommandAccepted: return "command";
    case EventKind::CommandRejected: return "rejected";
    case EventKind::Trip: return "trip";
    case EventKind::Reset: return "reset";
    case EventKind::MotorStarted: return "motor_started";
    case EventKind::ContactorDropout: return "contactor_dropout";
    case EventKind::Interlock: return "interlock";
    }
    return "?";
}

struct Event {
    std::int64_t tick = 0;
    double sim_time_s = 0.0;
    EventKind kind = EventKind::CommandAccepted;
    std::optional<PanelCommand> command;
    std::string reason;
    std::optional<protection::TripEvent> trip;

    bool operator==(const Event&) const = default;
};

/// Complete simulation state; a plain value.
struct World {
    std::shared_ptr<const RunConfig> config;
    SimClock clock;
    PanelState panel;
    motor::MotorState motor;
    bool run_commanded = false;
    Contactor contactor;
    std::vector<injection::InjectionPlan> injections;
    protection::FunctionStates functions{};
    ThreePhaseMeasurement measurement;
    injection::SupplyState terminal;
    Rng rng;

    const RunConfig& cfg() const { return *config; }
    bool latched() const { return panel.latched_trip.has_value(); }

    bool operator==(const World& o) const {
        const bool same_config = config == o.config || (config && o.config && *config == *o.config);
        return same_config && clock == o.clock && panel == o.panel && motor == o.motor &&
               run_commanded == o.run_commanded && contactor == o.contactor && injections == o.injections &&
               functions == o.functions && measurement == o.measurement && terminal == o.terminal && rng == o.rng;
    }
};

inline World make_world(std::shared_ptr<const RunConfig> config) {
    validate(*config);
    World w;
    w.clock.tick_duration_s = config->tick_duration_s;
    w.rng = Rng(config->rng_seed);
    w.terminal.connected = {false, false, false};
    w.terminal.frequency_hz = config->motor.supply_frequency_hz;
    w.measurement.frequency_hz = config->motor.supply_frequency_hz;
    w.config = std::move(config);
    return w;
}

inline World make_world(const RunConfig& config) {
    return make_world(std::make_shared<const RunConfig>(config));
}

inline protection::Ratings relay_ratings(const motor::MotorParams& p) {
    return {p.rated_phase_voltage_v(), p.rated_current_a};
}

namespace detail {

inline void refresh_panel(World& w) {
    auto& p = w.panel;
    p.green_led = p.power_on;
    p.yellow_fault_led = p.latched_trip.has_value();
    p.buzzer = p.latched_trip.has_value();
    p.lcd_text = lcd_message(p.latched_trip, p.power_on);
    p.active_fault_selectors.clear();
    for (FaultKind f : kAllFaults) {
        for (const auto& plan : w.injections) {
            if (plan.kind == f) p.active_fault_selectors.push_back(f);
        }
    }
}

inline void open_contactor(World& w) {
    w.contactor.closed = false;
    w.contactor.release_at_s.reset();
}

} // namespace detail

/// Clears a latched trip and all relay timers; the motor stays stopped.
inline World reset_fault(World w) {
    if (!w.latched()) return w;
    w.panel.latched_trip.reset();
    w.functions = {};
    w.run_commanded = false;
    w.contactor.dropped_out = false;
    detail::open_contactor(w);
    detail::refresh_panel(w);
    return w;
}

namespace detail {

// Returns an empty string on success, otherwise the rejection reason.
inline std::string apply_command(World& w, const PanelCommand& cmd, double now_s, std::vector<Event>& events,
                                 const Event& stamp) {
    auto& panel = w.panel;
    switch (cmd.kind) {
    case CommandKind::PowerOn:
        panel.power_on = true;
        break;
    case CommandKind::PowerOff:
        panel.power_on = false;
        w.run_commanded = false;
        break;
    case CommandKind::StartMotor:
        if (!panel.power_on) return "workbench is switched off";
        if (w.latched()) return "fault latched: reset required";
        if (panel.housing_open) return "safety housing is open";
        w.run_commanded = true;
        w.contactor.dropped_out = false;
        w.contactor.release_at_s.reset();
        break;
    case CommandKind::StopMotor:
        w.run_commanded = false;
        break;
    case CommandKind::SetFault: {
        auto it = std::find_if(w.injections.begin(), w.injections.end(),
                               [&](const auto& p) { return p.kind == cmd.fault; });
        if (!cmd.on) {
            if (it != w.injections.end()) w.injections.erase(it);
            break;
        }
        if (w.latched()) return "fault latched: reset required";
        if (it != w.injections.end()) break;
        if (auto conflict = injection::exclusivity_conflict(w.injections, cmd.fault); !conflict.empty()) {
            return conflict;
        }
        w.injections.push_back(injection::plan_injection(cmd.fault, now_s, w.cfg().injection, w.rng));
        break;
    }
    case CommandKind::SetPotentiometer:
        if (!(cmd.value >= 0.0 && cmd.value <= 1.0)) return "potentiometer must be in [0, 1]";
        panel.potentiometer = cmd.value;
        break;
    case CommandKind::ResetFault:
        if (w.latched()) {
            w = reset_fault(std::move(w));
            Event e = stamp;
            e.kind = EventKind::Reset;
            events.push_back(e);
        }
        break;
    case CommandKind::OpenHousing:
        if (!panel.housing_open && (w.run_commanded || w.contactor.closed)) {
            Event e = stamp;
            e.kind = EventKind::Interlock;
            e.reason = "housing opened: motor supply cut";
            events.push_back(e);
        }
        panel.housing_open = true;
        w.run_commanded = false;
        open_contactor(w);
        break;
    case CommandKind::CloseHousing:
        panel.housing_open = false;
        break;
    }
    return {};
}

} // namespace detail

struct StepResult {
    World world;
    std::vector<Event> events;
};

/// Motor mechanics are integrated in this many sub-steps per tick.
inline constexpr int kMechanicalSubsteps = 10;

/**
 * Advance the bench by one tick.
 *
 * Commands are applied in order at the tick's start; the supply, contactor,
 * motor and relay are then evaluated at the tick's end. A trip opens the
 * contactor on the tick it latches.
 */
inline StepResult step(World w, std::span<const PanelCommand> commands) {
    const RunConfig& cfg = w.cfg();
    const double dt = cfg.tick_duration_s;
    const double t0 = w.clock.sim_time_s();
    const std::int64_t next_tick = w.clock.tick_index + 1;
    const double t1 = static_cast<double>(next_tick) * dt;

    std::vector<Event> events;
    Event stamp;
    stamp.tick = next_tick;
    stamp.sim_time_s = t1;
    for (const auto& cmd : commands) {
        std::vector<Event> side_effects;
        Event e = stamp;
        e.command = cmd;
        if (auto reason = detail::apply_command(w, cmd, t0, side_effects, stamp); reason.empty()) {
            e.kind = EventKind::CommandAccepted;
        } else {
            e.kind = EventKind::CommandRejected;
            e.reason = std::move(reason);
        }
        events.push_back(std::move(e));
        events.insert(events.end(), side_effects.begin(), side_effects.end());
    }

    // Supply on the line side of the contactor.
    const auto& mp = cfg.motor;
    injection::SupplyState nominal =
        injection::balanced_supply(w.panel.power_on ? mp.rated_phase_voltage_v() : 0.0, mp.supply_frequency_hz);
    const injection::SupplyState supply =
        injection::effective_supply(nominal, w.injections, cfg.injection, t1, mp.rated_voltage_ll_v);

    bool want_closed = w.panel.power_on && w.run_commanded && !w.latched() && !w.panel.housing_open &&
                       !w.contactor.dropped_out;
    const bool coil_fed = supply.connected[index(cfg.injection.contactor_coil_phase)];
    if (want_closed && !coil_fed) {
        if (!w.contactor.release_at_s) {
            const auto& ic = cfg.injection;
            w.contactor.release_at_s =
                t1 + w.rng.uniform(ic.contactor_release_s - ic.contactor_release_jitter_s,
                                   ic.contactor_release_s + ic.contactor_release_jitter_s);
        }
        if (t1 >= *w.contactor.release_at_s) {
            w.contactor.dropped_out = true;
            want_closed = false;
            Event e = stamp;
            e.kind = EventKind::ContactorDropout;
            e.reason = "contactor coil supply lost";
            events.push_back(e);
        }
    } else {
        w.contactor.release_at_s.reset();
    }
    w.contactor.closed = want_closed;

    injection::SupplyState terminal = supply;
    if (!want_closed) {
        terminal.voltage_v = {0.0, 0.0, 0.0};
        terminal.connected = {false, false, false};
    }
    w.terminal = terminal;

    // Motor.
    const bool was_running = w.motor.running;
    const bool was_starting = w.motor.starting_phase;
    w.motor.running = want_closed && phase_max(terminal.voltage_v) > 0.0;
    if (w.motor.running && !was_running) w.motor.starting_phase = true;
    if (!w.motor.running) w.motor.starting_phase = false;

    const auto bc = injection::brake_command(w.injections, w.panel.potentiometer);
    const auto brake = motor::brake_from_potentiometer(mp, bc.pot, bc.selector);
    const double h = dt / kMechanicalSubsteps;
    for (int k = 0; k < kMechanicalSubsteps; ++k) {
        const auto sol = motor::solve_equivalent_circuit(mp, terminal.voltage_v, w.motor.slip, terminal.connected,
                                                         terminal.series_factor);
        w.motor = motor::step_mechanics(w.motor, mp, sol.torque_nm, brake.load_torque_nm, h);
    }
    const auto sol = motor::solve_equivalent_circuit(mp, terminal.voltage_v, w.motor.slip, terminal.connected,
                                                     terminal.series_factor);
    w.motor.phase_currents_a = sol.current_a;
    w.motor.torque_e_nm = sol.torque_nm;
    if (was_starting && w.motor.running && !w.motor.starting_phase) {
        Event e = stamp;
        e.kind = EventKind::MotorStarted;
        events.push_back(e);
    }

    // Relay.
    ThreePhaseMeasurement m{terminal.voltage_v, w.motor.phase_currents_a, mp.supply_frequency_hz, t1};
    w.measurement = injection::apply_measurement_noise(m, cfg.injection.noise_sigma_fraction, w.rng);
    if (!w.latched()) {
        protection::RelayContext ctx;
        ctx.energization_commanded = w.panel.power_on && w.run_commanded;
        ctx.motor_phase = !w.motor.running        ? protection::MotorPhase::Stopped
                          : w.motor.starting_phase ? protection::MotorPhase::Starting
                                                   : protection::MotorPhase::Running;
        auto result = protection::evaluate(cfg.protection, relay_ratings(mp), w.measurement, ctx, w.functions, dt);
        w.functions = result.states;
        if (result.trip) {
            w.panel.latched_trip = result.trip;
            w.run_commanded = false;
            detail::open_contactor(w);
            w.motor.running = false;
            w.motor.starting_phase = false;
            w.motor.phase_currents_a = {0.0, 0.0, 0.0};
            w.motor.torque_e_nm = 0.0;
            w.terminal.voltage_v = {0.0, 0.0, 0.0};
            w.terminal.connected = {false, false, false};
            Event e = stamp;
            e.kind = EventKind::Trip;
            e.trip = result.trip;
            events.push_back(e);
        }
    }

    detail::refresh_panel(w);
    w.clock.tick_index = next_tick;
    return {std::move(w), std::move(events)};
}

inline StepResult step(World w) { return step(std::move(w), std::span<const PanelCommand>{}); }

} // namespace motorbench::sim
