#pragma once

#include "motorbench/core.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>

namespace motorbench::motor {

/// Nameplate full-load current estimate, I = P / (sqrt(3) * V_ll * efficiency * pf).
inline double nameplate_current(double rated_power_w, double rated_voltage_ll_v,
                                double efficiency = 0.8, double power_factor = 0.8) {
    return rated_power_w / (std::numbers::sqrt3 * rated_voltage_ll_v * efficiency * power_factor);
}

/**
 * Per-phase wye-equivalent constants of the bench motor (220 V, 1 HP).
 *
 * The circuit values are plausible small-machine defaults, not nameplate data.
 * overcurrent_brake_gain maps the panel potentiometer to brake engagement and
 * is produced by calibrate_overcurrent_brake_gain().
 */
struct MotorParams {
    double rated_voltage_ll_v = 220.0;
    double rated_power_w = 746.0;
    int pole_pairs = 2;
    double supply_frequency_hz = 60.0;
    double stator_resistance_ohm = 2.5;
    double stator_reactance_ohm = 3.0;
    double rotor_resistance_ohm = 2.0;
    double rotor_reactance_ohm = 3.0;
    double magnetizing_reactance_ohm = 60.0;
    double inertia_kgm2 = 0.01;
    double rated_current_a = nameplate_current(746.0, 220.0);
    double brake_torque_max_nm = 20.0;
    double overcurrent_brake_gain = 0.0;
    double slip_run_threshold = 0.05;

    double rated_phase_voltage_v() const { return rated_voltage_ll_v / std::numbers::sqrt3; }
    double synchronous_speed_rad_s() const {
        return 2.0 * std::numbers::pi * supply_frequency_hz / pole_pairs;
    }

    bool operator==(const MotorParams&) const = default;
};

inline std::vector<ValidationIssue> check(const MotorParams& p) {
    std::vector<ValidationIssue> issues;
    auto positive = [&](double v, const char* field) {
        if (!(v > 0.0)) issues.push_back({field, "must be > 0"});
    };
    positive(p.rated_voltage_ll_v, "motor.rated_voltage_ll_v");
    positive(p.rated_power_w, "motor.rated_power_w");
    positive(p.supply_frequency_hz, "motor.supply_frequency_hz");
    positive(p.stator_resistance_ohm, "motor.stator_resistance_ohm");
    positive(p.stator_reactance_ohm, "motor.stator_reactance_ohm");
    positive(p.rotor_resistance_ohm, "motor.rotor_resistance_ohm");
    positive(p.rotor_reactance_ohm, "motor.rotor_reactance_ohm");
    positive(p.magnetizing_reactance_ohm, "motor.magnetizing_reactance_ohm");
    positive(p.inertia_kgm2, "motor.inertia_kgm2");
    positive(p.rated_current_a, "motor.rated_current_a");
    positive(p.brake_torque_max_nm, "motor.brake_torque_max_nm");
    if (p.pole_pairs < 1) issues.push_back({"motor.pole_pairs", "must be >= 1"});
    if (p.magnetizing_reactance_ohm < 5.0 * p.stator_reactance_ohm) {
        issues.push_back({"motor.magnetizing_reactance_ohm",
                          "must be at least 5x motor.stator_reactance_ohm"});
    }
    if (!(p.overcurrent_brake_gain >= 0.0 && p.overcurrent_brake_gain <= 1.0)) {
        issues.push_back({"motor.overcurrent_brake_gain", "must be in [0, 1]"});
    }
    if (!(p.slip_run_threshold > 0.0 && p.slip_run_threshold < 1.0)) {
        issues.push_back({"motor.slip_run_threshold", "must be in (0, 1)"});
    }
    return issues;
}

struct MotorState {
    bool running = false;
    double slip = 1.0;
    double rotor_speed_rad_s = 0.0;
    PhaseArray<double> phase_currents_a{};
    double torque_e_nm = 0.0;
    bool starting_phase = false;

    bool operator==(const MotorState&) const = default;
};

enum class BrakeSelector : std::uint8_t { Off, OvercurrentMode, LockedMode, ExtendedStartMode };

struct BrakeState {
    bool engaged = false;
    double brake_fraction = 0.0;
    double load_torque_nm = 0.0;

    bool operator==(const BrakeState&) const = default;
};

struct CircuitSolution {
    PhaseArray<double> current_a{};
    double torque_nm = 0.0;
    double input_power_w = 0.0;
};

namespace detail {

// Input admittance and rotor-current transfer of one phase at the given slip.
struct PhaseBranch {
    std::complex<double> input_impedance;
    std::complex<double> rotor_current_per_volt;
};

inline PhaseBranch phase_branch(const MotorParams& p, double slip) {
    const std::complex<double> z1{p.stator_resistance_ohm, p.stator_reactance_ohm};
    const std::complex<double> zm{0.0, p.magnetizing_reactance_ohm};
    if (slip == 0.0) {
        return {z1 + zm, {0.0, 0.0}};
    }
    const std::complex<double> z2{p.rotor_resistance_ohm / slip, p.rotor_reactance_ohm};
    const std::complex<double> zp = zm * z2 / (zm + z2);
    const std::complex<double> zin = z1 + zp;
    // I2 = E / Z2 with E = I1 * Zp and I1 = V / Zin.
    return {zin, zp / (zin * z2)};
}

} // namespace detail

/**
 * Steady-state solution of the per-phase equivalent circuit Z = Z1 + (Zm || Z2(s)).
 *
 * Each phase is solved independently at the common slip. series_factor divides a
 * phase's current (injected series impedance). With exactly two phases
 * connected, the open phase carries no current and the other two are scaled by
 * sqrt(3)/2; with fewer than two connected, no current flows.
 * Torque is sum_k I2_k^2 * (R2 / s) / w_sync.
 */
inline CircuitSolution solve_equivalent_circuit(const MotorParams& p,
                                                const PhaseArray<double>& phase_voltages_v,
                                                double slip,
                                                const PhaseArray<bool>& connected = {true, true, true},
                                                const PhaseArray<double>& series_factor = {1.0, 1.0, 1.0}) {
    if (!(slip >= 0.0 && slip <= 1.0)) {
        throw std::invalid_argument("slip must lie in [0, 1]");
    }
    for (double v : phase_voltages_v) {
        if (!(v >= 0.0)) throw std::invalid_argument("phase voltage must be >= 0");
    }
    for (double f : series_factor) {
        if (!(f >= 1.0)) throw std::invalid_argument("series factor must be >= 1");
    }

    const int live = static_cast<int>(connected[0]) + connected[1] + connected[2];
    PhaseArray<double> scale{};
    for (std::size_t k = 0; k < 3; ++k) {
        double s = connected[k] ? 1.0 / series_factor[k] : 0.0;
        if (live == 2) s *= std::numbers::sqrt3 / 2.0;
        if (live < 2) s = 0.0;
        scale[k] = s;
    }

    const auto branch = detail::phase_branch(p, slip);
    const double w_sync = p.synchronous_speed_rad_s();
    CircuitSolution out;
    for (std::size_t k = 0; k < 3; ++k) {
        const double v = connected[k] ? phase_voltages_v[k] : 0.0;
        const std::complex<double> i1 = v / branch.input_impedance;
        out.current_a[k] = scale[k] * std::abs(i1);
        out.input_power_w += scale[k] * v * i1.real();
        if (slip > 0.0) {
            const double i2 = scale[k] * std::abs(v * branch.rotor_current_per_volt);
            out.torque_nm += i2 * i2 * (p.rotor_resistance_ohm / slip) / w_sync;
        }
    }
    return out;
}

/// Slip implied by a rotor speed, clamped to [0, 1].
inline double slip_from_speed(const MotorParams& p, double rotor_speed_rad_s) {
    return std::clamp(1.0 - rotor_speed_rad_s / p.synchronous_speed_rad_s(), 0.0, 1.0);
}

/// Rigid-body update J dw/dt = Te - Tl with speed clamped to [0, w_sync].
inline MotorState step_mechanics(MotorState state, const MotorParams& p, double torque_e_nm,
                                 double load_torque_nm, double dt_s) {
    if (!(dt_s > 0.0)) throw std::invalid_argument("dt must be > 0");
    const double w_sync = p.synchronous_speed_rad_s();
    state.rotor_speed_rad_s = std::clamp(
        state.rotor_speed_rad_s + dt_s * (torque_e_nm - load_torque_nm) / p.inertia_kgm2, 0.0, w_sync);
    state.slip = slip_from_speed(p, state.rotor_speed_rad_s);
    state.torque_e_nm = torque_e_nm;
    if (state.starting_phase && state.slip < p.slip_run_threshold) {
        state.starting_phase = false;
    }
    return state;
}

inline BrakeState brake_from_potentiometer(const MotorParams& p, double pot, BrakeSelector selector) {
    if (!(pot >= 0.0 && pot <= 1.0)) {
        throw std::invalid_argument("potentiometer must lie in [0, 1]");
    }
    BrakeState b;
    switch (selector) {
    case BrakeSelector::Off:
        return b;
    case BrakeSelector::OvercurrentMode:
        b.engaged = true;
        b.brake_fraction = p.overcurrent_brake_gain * pot;
        break;
    case BrakeSelector::LockedMode:
    case BrakeSelector::ExtendedStartMode:
        b.engaged = true;
        b.brake_fraction = 1.0;
        break;
    }
    b.load_torque_nm = b.brake_fraction * p.brake_torque_max_nm;
    return b;
}

/// Slip of maximum torque under balanced rated voltage (golden-section search).
inline double pullout_slip(const MotorParams& p) {
    const PhaseArray<double> v{p.rated_phase_voltage_v(), p.rated_phase_voltage_v(),
                               p.rated_phase_voltage_v()};
    auto torque = [&](double s) { return solve_equivalent_circuit(p, v, s).torque_nm; };
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double lo = 1e-6;
    double hi = 1.0;
    for (int it = 0; it < 200; ++it) {
        const double a = hi - g * (hi - lo);
        const double b = lo + g * (hi - lo);
        if (torque(a) < torque(b)) lo = a; else hi = b;
    }
    return 0.5 * (lo + hi);
}

/**
 * Brake gain such that a fully turned potentiometer in overcurrent mode holds
 * the motor at target_current_ratio x rated current in steady state.
 *
 * The operating slip is found on the stable branch (below pull-out) by
 * bisection on |I(s)|, and the gain is T(s*) / brake_torque_max.
 */
inline double calibrate_overcurrent_brake_gain(const MotorParams& p, double target_current_ratio = 1.25) {
    const double vph = p.rated_phase_voltage_v();
    const PhaseArray<double> v{vph, vph, vph};
    const double target = target_current_ratio * p.rated_current_a;
    auto current = [&](double s) { return solve_equivalent_circuit(p, v, s).current_a[0]; };

    double lo = 0.0;
    double hi = pullout_slip(p);
    if (current(lo) >= target || current(hi) <= target) {
        throw std::invalid_argument("target current not reachable on the stable torque branch");
    }
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (current(mid) < target) lo = mid; else hi = mid;
    }
    const double torque = solve_equivalent_circuit(p, v, 0.5 * (lo + hi)).torque_nm;
    return std::min(1.0, torque / p.brake_torque_max_nm);
}

/// Default parameters with the brake gain calibrated.
inline MotorParams default_params() {
    MotorParams p;
    p.overcurrent_brake_gain = calibrate_overcurrent_brake_gain(p);
    return p;
}

} // namespace motorbench::motor
