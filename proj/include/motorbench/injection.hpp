#pragma once

#include "motorbench/core.hpp"
#include "motorbench/motor.hpp"
#include "motorbench/rng.hpp"

#include <span>

namespace motorbench::injection {

/// Effective supply at the motor side of the injection relays.
struct SupplyState {
    PhaseArray<double> voltage_v{};
    PhaseArray<bool> connected{true, true, true};
    double frequency_hz = 60.0;
    /// Divides the phase current in the motor model (series impedance injection).
    PhaseArray<double> series_factor{1.0, 1.0, 1.0};

    bool operator==(const SupplyState&) const = default;
};

inline SupplyState balanced_supply(double phase_voltage_v, double frequency_hz) {
    SupplyState s;
    s.voltage_v = {phase_voltage_v, phase_voltage_v, phase_voltage_v};
    s.frequency_hz = frequency_hz;
    return s;
}

enum class UndervoltageMode : std::uint8_t { ThreePoleInterruption };

/**
 * Bench wiring constants for the eight injection procedures.
 *
 * The contactor_* fields describe the main contactor whose coil is tapped from
 * contactor_coil_phase downstream of the injection relays: when that phase is
 * lost the contactor drops out after a release time drawn uniformly from
 * contactor_release_s +/- contactor_release_jitter_s.
 */
struct InjectionConfig {
    double overvoltage_source_ll_v = 380.0;
    UndervoltageMode undervoltage_mode = UndervoltageMode::ThreePoleInterruption;
    double pole_stagger_max_s = 0.150;
    Phase faulted_phase = Phase::A;
    double unbalance_sag_fraction = 0.80;
    double series_impedance_factor = 1.35;
    double noise_sigma_fraction = 0.005;
    Phase contactor_coil_phase = Phase::A;
    double contactor_release_s = 0.200;
    double contactor_release_jitter_s = 0.135;

    bool operator==(const InjectionConfig&) const = default;

    /// Same wiring with every random spread removed.
    InjectionConfig deterministic() const {
        InjectionConfig c = *this;
        c.pole_stagger_max_s = 0.0;
        c.noise_sigma_fraction = 0.0;
        c.contactor_release_jitter_s = 0.0;
        return c;
    }
};

inline std::vector<ValidationIssue> check(const InjectionConfig& c, double rated_voltage_ll_v) {
    std::vector<ValidationIssue> issues;
    if (!(c.overvoltage_source_ll_v > rated_voltage_ll_v)) {
        issues.push_back({"injection.overvoltage_source_ll_v", "must exceed motor.rated_voltage_ll_v"});
    }
    if (!(c.pole_stagger_max_s >= 0.0)) {
        issues.push_back({"injection.pole_stagger_max_s", "must be >= 0"});
    }
    if (!(c.unbalance_sag_fraction >= 0.0 && c.unbalance_sag_fraction <= 1.0)) {
        issues.push_back({"injection.unbalance_sag_fraction", "must be in [0, 1]"});
    }
    if (!(c.series_impedance_factor >= 1.0)) {
        issues.push_back({"injection.series_impedance_factor", "must be >= 1"});
    }
    if (!(c.noise_sigma_fraction >= 0.0)) {
        issues.push_back({"injection.noise_sigma_fraction", "must be >= 0"});
    }
    if (!(c.contactor_release_jitter_s >= 0.0 && c.contactor_release_jitter_s <= c.contactor_release_s)) {
        issues.push_back({"injection.contactor_release_jitter_s", "must be in [0, contactor_release_s]"});
    }
    return issues;
}

/// Which bench circuit a fault acts on; two faults may not share a path.
enum class FaultPath : std::uint8_t { Voltage, Brake, Current };

inline constexpr FaultPath fault_path(FaultKind f) {
    switch (f) {
    case FaultKind::Overvoltage:
    case FaultKind::Undervoltage:
    case FaultKind::PhaseLoss:
    case FaultKind::VoltageUnbalance:
        return FaultPath::Voltage;
    case FaultKind::Overcurrent:
    case FaultKind::LockedRotor:
    case FaultKind::ExtendedStart:
        return FaultPath::Brake;
    case FaultKind::CurrentUnbalance:
        return FaultPath::Current;
    }
    return FaultPath::Current;
}

/// A switched-on fault selector with the random draws taken when it was switched.
struct InjectionPlan {
    FaultKind kind = FaultKind::Overvoltage;
    double injected_at_s = 0.0;
    /// Opening offset of each pole (three-pole interruption only).
    PhaseArray<double> pole_offsets_s{};

    bool operator==(const InjectionPlan&) const = default;
};

inline InjectionPlan plan_injection(FaultKind kind, double now_s, const InjectionConfig& cfg, Rng& rng) {
    InjectionPlan plan{kind, now_s, {}};
    if (kind == FaultKind::Undervoltage) {
        for (double& d : plan.pole_offsets_s) d = rng.uniform(0.0, cfg.pole_stagger_max_s);
    }
    return plan;
}

/// Non-empty string describing why `candidate` cannot join `active`.
inline std::string exclusivity_conflict(std::span<const InjectionPlan> active, FaultKind candidate) {
    for (const auto& plan : active) {
        if (plan.kind != candidate && fault_path(plan.kind) == fault_path(candidate)) {
            return std::string(to_string(candidate)) + " conflicts with active " +
                   std::string(to_string(plan.kind));
        }
    }
    return {};
}

/**
 * Supply after the active injection relays have acted.
 *
 * Undervoltage opens each pole at its drawn offset; phase loss opens the
 * faulted phase at once; voltage unbalance sags it; overvoltage swaps in the
 * higher-voltage source; current unbalance leaves voltages alone and sets a
 * series factor on the faulted phase.
 */
inline SupplyState effective_supply(const SupplyState& nominal, std::span<const InjectionPlan> active,
                                    const InjectionConfig& cfg, double now_s,
                                    double rated_voltage_ll_v) {
    const InjectionPlan* voltage_fault = nullptr;
    SupplyState out = nominal;
    for (const auto& plan : active) {
        if (fault_path(plan.kind) == FaultPath::Voltage) {
            if (voltage_fault != nullptr) {
                throw std::invalid_argument("two voltage-path faults active at once");
            }
            voltage_fault = &plan;
        }
        if (plan.kind == FaultKind::CurrentUnbalance) {
            out.series_factor[index(cfg.faulted_phase)] = cfg.series_impedance_factor;
        }
    }
    if (voltage_fault == nullptr) return out;

    const std::size_t k = index(cfg.faulted_phase);
    const double elapsed = now_s - voltage_fault->injected_at_s;
    switch (voltage_fault->kind) {
    case FaultKind::Overvoltage: {
        const double scale = cfg.overvoltage_source_ll_v / rated_voltage_ll_v;
        for (double& v : out.voltage_v) v *= scale;
        break;
    }
    case FaultKind::Undervoltage:
        for (std::size_t p = 0; p < 3; ++p) {
            if (elapsed >= voltage_fault->pole_offsets_s[p]) {
                out.voltage_v[p] = 0.0;
                out.connected[p] = false;
            }
        }
        break;
    case FaultKind::PhaseLoss:
        out.voltage_v[k] = 0.0;
        out.connected[k] = false;
        break;
    case FaultKind::VoltageUnbalance:
        out.voltage_v[k] *= cfg.unbalance_sag_fraction;
        break;
    default:
        break;
    }
    return out;
}

struct BrakeCommand {
    motor::BrakeSelector selector = motor::BrakeSelector::Off;
    double pot = 0.0;

    bool operator==(const BrakeCommand&) const = default;
};

inline BrakeCommand brake_command(std::span<const InjectionPlan> active, double pot) {
    for (const auto& plan : active) {
        switch (plan.kind) {
        case FaultKind::Overcurrent: return {motor::BrakeSelector::OvercurrentMode, pot};
        case FaultKind::LockedRotor: return {motor::BrakeSelector::LockedMode, pot};
        case FaultKind::ExtendedStart: return {motor::BrakeSelector::ExtendedStartMode, pot};
        default: break;
        }
    }
    return {motor::BrakeSelector::Off, pot};
}

/// Multiplies each voltage and current channel by (1 + g), g ~ N(0, sigma).
/// Channels reading exactly zero stay zero and draw nothing from the generator.
inline ThreePhaseMeasurement apply_measurement_noise(ThreePhaseMeasurement m, double sigma_fraction, Rng& rng) {
    if (!(sigma_fraction >= 0.0)) throw std::invalid_argument("sigma must be >= 0");
    auto perturb = [&](double x) {
        if (x == 0.0) return 0.0;
        return std::max(0.0, x * (1.0 + sigma_fraction * rng.normal()));
    };
    for (double& v : m.v) v = perturb(v);
    for (double& i : m.i) i = perturb(i);
    return m;
}

} // namespace motorbench::injection
