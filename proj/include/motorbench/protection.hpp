#pragma once

#include "motorbench/core.hpp"

#include <cmath>
#include <span>

namespace motorbench::protection {

/// NEMA percent unbalance: 100 * max |x_k - mean| / mean. Empty when the mean is 0.
inline std::optional<double> percent_unbalance(const PhaseArray<double>& x) {
    const double mean = phase_mean(x);
    if (!(mean > 0.0)) return std::nullopt;
    double worst = 0.0;
    for (double v : x) worst = std::max(worst, std::abs(v - mean));
    return 100.0 * worst / mean;
}

struct PickupSetting {
    double pickup_pct = 0.0;
    double delay_s = 0.0;

    bool operator==(const PickupSetting&) const = default;
};

struct PhaseLossSetting {
    /// Dead-phase threshold, % of rated.
    double floor_pct = 20.0;
    /// At least one phase must stay above this, % of rated.
    double companion_min_pct = 50.0;
    double delay_s = 0.1;

    bool operator==(const PhaseLossSetting&) const = default;
};

/**
 * Relay parameterization. Pickups are % of rated current (overcurrent, locked
 * rotor, extended start), % of rated voltage (under/overvoltage) or % NEMA
 * unbalance. For extended start, delay_s is the start time limit.
 */
struct ProtectionSettings {
    PickupSetting overcurrent{120.0, 4.0};
    PickupSetting locked_rotor{130.0, 1.0};
    PickupSetting current_unbalance{10.0, 0.7};
    PickupSetting extended_start{150.0, 5.0};
    PickupSetting undervoltage{85.0, 0.5};
    PickupSetting overvoltage{110.0, 0.5};
    PickupSetting voltage_unbalance{10.0, 0.5};
    PhaseLossSetting phase_loss{};

    bool operator==(const ProtectionSettings&) const = default;
};

struct LegalRange {
    /// Settings group, e.g. "overcurrent".
    const char* name;
    /// Key holding the group's delay.
    const char* delay_key;
    PickupSetting ProtectionSettings::*member;
    double min_pct;
    double max_pct;

    std::string pickup_field() const { return std::string("protection.") + name + ".pickup_pct"; }
    std::string delay_field() const { return std::string("protection.") + name + "." + delay_key; }
};

/// Pickup ranges accepted by the relay's parameterization software.
inline constexpr std::array<LegalRange, 7> kLegalRanges = {{
    {"overcurrent", "delay_s", &ProtectionSettings::overcurrent, 20.0, 800.0},
    {"locked_rotor", "delay_s", &ProtectionSettings::locked_rotor, 20.0, 800.0},
    {"current_unbalance", "delay_s", &ProtectionSettings::current_unbalance, 10.0, 70.0},
    {"extended_start", "start_time_limit_s", &ProtectionSettings::extended_start, 100.0, 800.0},
    {"undervoltage", "delay_s", &ProtectionSettings::undervoltage, 70.0, 99.0},
    {"overvoltage", "delay_s", &ProtectionSettings::overvoltage, 101.0, 115.0},
    {"voltage_unbalance", "delay_s", &ProtectionSettings::voltage_unbalance, 3.0, 10.0},
}};

inline std::string format_range(double lo, double hi) {
    auto fmt = [](double v) {
        std::string s = std::to_string(v);
        s.erase(s.find_last_not_of('0') + 1);
        if (!s.empty() && s.back() == '.') s.pop_back();
        return s;
    };
    return "[" + fmt(lo) + ", " + fmt(hi) + "]";
}

/// Field-level problems; delays must be whole numbers of ticks.
inline std::vector<ValidationIssue> check(const ProtectionSettings& s, double tick_s) {
    std::vector<ValidationIssue> issues;
    auto check_delay = [&](double delay, const std::string& field) {
        if (!(delay >= 0.0)) {
            issues.push_back({field, "must be >= 0"});
            return;
        }
        const double ticks = delay / tick_s;
        if (std::abs(ticks - std::round(ticks)) > 1e-6) {
            issues.push_back({field, "must be a whole number of ticks"});
        }
    };
    for (const auto& r : kLegalRanges) {
        const auto& setting = s.*(r.member);
        if (!(setting.pickup_pct >= r.min_pct && setting.pickup_pct <= r.max_pct)) {
            issues.push_back({r.pickup_field(), "legal range " + format_range(r.min_pct, r.max_pct)});
        }
        check_delay(setting.delay_s, r.delay_field());
    }
    if (!(s.phase_loss.floor_pct >= 0.0 && s.phase_loss.floor_pct < s.phase_loss.companion_min_pct)) {
        issues.push_back({"protection.phase_loss.floor_pct", "must be in [0, companion_min_pct)"});
    }
    if (!(s.phase_loss.companion_min_pct <= 100.0)) {
        issues.push_back({"protection.phase_loss.companion_min_pct", "must be <= 100"});
    }
    check_delay(s.phase_loss.delay_s, "protection.phase_loss.delay_s");
    return issues;
}

inline void validate(const ProtectionSettings& s, double tick_s) {
    auto issues = check(s, tick_s);
    if (!issues.empty()) throw ConfigError(std::move(issues));
}

enum class MotorPhase : std::uint8_t { Stopped, Starting, Running };

/// 100 % references, in the measurement's own scale.
struct Ratings {
    double voltage_v = 0.0;
    double current_a = 0.0;
};

struct RelayContext {
    MotorPhase motor_phase = MotorPhase::Stopped;
    bool energization_commanded = false;
};

struct FunctionState {
    bool picked_up = false;
    std::int64_t timer_ticks = 0;
    bool tripped = false;

    double timer_s(double tick_s) const { return static_cast<double>(timer_ticks) * tick_s; }

    bool operator==(const FunctionState&) const = default;
};

/// Indexed by FaultKind.
using FunctionStates = std::array<FunctionState, kFaultKindCount>;

struct TripEvent {
    FaultKind fault = FaultKind::Overvoltage;
    AnsiFunction function = AnsiFunction::Overvoltage59;
    double sim_time_s = 0.0;
    Quantity measured{};
    Quantity setting{};

    bool operator==(const TripEvent&) const = default;
};

/// Value compared against the setting, plus the pickup decision.
struct Reading {
    bool picked_up = false;
    Quantity measured{};
    Quantity setting{};
    /// True when the function trips for measured >= setting, false for <=.
    bool trips_high = true;
};

using Readings = std::array<Reading, kFaultKindCount>;

/// Minimum load, % of rated current, for current unbalance to be meaningful.
inline constexpr double kCurrentUnbalanceMinLoadPct = 50.0;

/// True when one phase is dead while another is still live.
inline bool phase_loss_signature(const ProtectionSettings& s, const Ratings& r, const PhaseArray<double>& v) {
    return phase_min(v) <= s.phase_loss.floor_pct / 100.0 * r.voltage_v &&
           phase_max(v) >= s.phase_loss.companion_min_pct / 100.0 * r.voltage_v;
}

/// Instantaneous pickup decision of all eight elements.
inline Readings read_functions(const ProtectionSettings& s, const Ratings& r, const ThreePhaseMeasurement& m,
                               const RelayContext& ctx) {
    Readings out{};
    const double v_mean = phase_mean(m.v);
    const double i_max = phase_max(m.i);
    const bool running = ctx.motor_phase == MotorPhase::Running;
    const bool starting = ctx.motor_phase == MotorPhase::Starting;
    const bool asymmetric = phase_loss_signature(s, r, m.v);
    auto volts = [&](double pct) { return Quantity{pct / 100.0 * r.voltage_v, Unit::Volt}; };
    auto amps = [&](double pct) { return Quantity{pct / 100.0 * r.current_a, Unit::Ampere}; };

    auto& pl = out[index(FaultKind::PhaseLoss)];
    pl.measured = {phase_min(m.v), Unit::Volt};
    pl.setting = volts(s.phase_loss.floor_pct);
    pl.trips_high = false;
    pl.picked_up = asymmetric;

    auto& uv = out[index(FaultKind::Undervoltage)];
    uv.measured = {v_mean, Unit::Volt};
    uv.setting = volts(s.undervoltage.pickup_pct);
    uv.trips_high = false;
    uv.picked_up = ctx.energization_commanded && !asymmetric && v_mean <= uv.setting.value;

    auto& ov = out[index(FaultKind::Overvoltage)];
    ov.measured = {v_mean, Unit::Volt};
    ov.setting = volts(s.overvoltage.pickup_pct);
    ov.picked_up = v_mean >= ov.setting.value;

    auto current_element = [&](FaultKind f, const PickupSetting& setting, bool enabled) {
        auto& e = out[index(f)];
        e.measured = {i_max, Unit::Ampere};
        e.setting = amps(setting.pickup_pct);
        e.picked_up = enabled && i_max >= e.setting.value;
    };
    current_element(FaultKind::Overcurrent, s.overcurrent, running);
    current_element(FaultKind::LockedRotor, s.locked_rotor, running);
    current_element(FaultKind::ExtendedStart, s.extended_start, starting);

    auto& vu = out[index(FaultKind::VoltageUnbalance)];
    const auto v_unb = percent_unbalance(m.v);
    vu.measured = {v_unb.value_or(0.0), Unit::Percent};
    vu.setting = {s.voltage_unbalance.pickup_pct, Unit::Percent};
    vu.picked_up = v_unb && phase_min(m.v) > s.phase_loss.floor_pct / 100.0 * r.voltage_v &&
                   *v_unb >= vu.setting.value;

    auto& cu = out[index(FaultKind::CurrentUnbalance)];
    const auto i_unb = percent_unbalance(m.i);
    cu.measured = {i_unb.value_or(0.0), Unit::Percent};
    cu.setting = {s.current_unbalance.pickup_pct, Unit::Percent};
    cu.picked_up = running && i_unb && i_max >= kCurrentUnbalanceMinLoadPct / 100.0 * r.current_a &&
                   *i_unb >= cu.setting.value;
    return out;
}

inline double delay_s(const ProtectionSettings& s, FaultKind f) {
    switch (f) {
    case FaultKind::Overvoltage: return s.overvoltage.delay_s;
    case FaultKind::Undervoltage: return s.undervoltage.delay_s;
    case FaultKind::Overcurrent: return s.overcurrent.delay_s;
    case FaultKind::PhaseLoss: return s.phase_loss.delay_s;
    case FaultKind::LockedRotor: return s.locked_rotor.delay_s;
    case FaultKind::ExtendedStart: return s.extended_start.delay_s;
    case FaultKind::VoltageUnbalance: return s.voltage_unbalance.delay_s;
    case FaultKind::CurrentUnbalance: return s.current_unbalance.delay_s;
    }
    return 0.0;
}

inline std::int64_t delay_ticks(const ProtectionSettings& s, FaultKind f, double tick_s) {
    return std::llround(delay_s(s, f) / tick_s);
}

/// Highest classification priority first.
inline constexpr std::array<FaultKind, kFaultKindCount> kTripPriority = {
    FaultKind::PhaseLoss,        FaultKind::LockedRotor,      FaultKind::ExtendedStart,
    FaultKind::Overcurrent,      FaultKind::CurrentUnbalance, FaultKind::VoltageUnbalance,
    FaultKind::Overvoltage,      FaultKind::Undervoltage,
};

inline FaultKind classify_trip(std::span<const FaultKind> completed) {
    if (completed.empty()) throw std::invalid_argument("classify_trip needs at least one function");
    for (FaultKind f : kTripPriority) {
        if (std::find(completed.begin(), completed.end(), f) != completed.end()) return f;
    }
    return completed.front();
}

struct Evaluation {
    FunctionStates states{};
    std::optional<TripEvent> trip;
};

inline bool latched(const FunctionStates& states) {
    return std::any_of(states.begin(), states.end(), [](const FunctionState& f) { return f.tripped; });
}

/**
 * One relay scan: update every element's definite-time timer from the
 * measurement and emit at most one trip. A picked-up element accumulates one
 * tick per call; an element that drops out resets to zero. Once any element
 * has tripped the engine is latched and returns the states unchanged.
 */
inline Evaluation evaluate(const ProtectionSettings& s, const Ratings& r, const ThreePhaseMeasurement& m,
                           const RelayContext& ctx, FunctionStates states, double tick_s) {
    if (latched(states)) return {states, std::nullopt};

    const Readings readings = read_functions(s, r, m, ctx);
    std::vector<FaultKind> completed;
    for (FaultKind f : kAllFaults) {
        auto& st = states[index(f)];
        st.picked_up = readings[index(f)].picked_up;
        st.timer_ticks = st.picked_up ? st.timer_ticks + 1 : 0;
        if (st.picked_up && st.timer_ticks >= delay_ticks(s, f, tick_s)) completed.push_back(f);
    }
    if (completed.empty()) return {states, std::nullopt};

    const FaultKind winner = classify_trip(completed);
    states[index(winner)].tripped = true;
    const auto& reading = readings[index(winner)];
    return {states, TripEvent{winner, ansi_function(winner), m.sim_time_s, reading.measured, reading.setting}};
}

} // namespace motorbench::protection
