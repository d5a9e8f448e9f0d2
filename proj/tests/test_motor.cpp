#include "motorbench/motor.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace motorbench;
using namespace motorbench::motor;

namespace {

PhaseArray<double> balanced(double v) { return {v, v, v}; }

// Per-phase locked-rotor current done longhand with real arithmetic:
// Zp = jXm (R2 + jX2) / (R2 + j(X2 + Xm)), Z = R1 + jX1 + Zp.
double hand_locked_rotor_current(double r1, double x1, double r2, double x2, double xm, double v) {
    const double num_re = -xm * x2;
    const double num_im = xm * r2;
    const double den_re = r2;
    const double den_im = x2 + xm;
    const double den2 = den_re * den_re + den_im * den_im;
    const double zp_re = (num_re * den_re + num_im * den_im) / den2;
    const double zp_im = (num_im * den_re - num_re * den_im) / den2;
    const double z_re = r1 + zp_re;
    const double z_im = x1 + zp_im;
    return v / std::sqrt(z_re * z_re + z_im * z_im);
}

} // namespace

TEST(Motor, DefaultRatedCurrentIsNameplateEstimate) {
    const MotorParams p;
    EXPECT_NEAR(p.rated_current_a, 746.0 / (std::sqrt(3.0) * 220.0 * 0.64), 1e-12);
    EXPECT_NEAR(p.rated_current_a, 3.059, 1e-3);
}

TEST(Motor, LockedRotorCurrentMatchesHandComputation) {
    const MotorParams p = default_params();
    const double v = 220.0 / std::sqrt(3.0);
    const double expected = hand_locked_rotor_current(2.5, 3.0, 2.0, 3.0, 60.0, v);
    const auto sol = solve_equivalent_circuit(p, balanced(v), 1.0);
    for (double i : sol.current_a) EXPECT_NEAR(i, expected, 1e-9 * expected);
    EXPECT_GE(sol.current_a[0], 4.0 * p.rated_current_a);
    EXPECT_NEAR(expected, 17.35, 0.01);
}

TEST(Motor, SynchronousSlipDrawsMagnetizingCurrentOnly) {
    const MotorParams p;
    const double v = p.rated_phase_voltage_v();
    const auto sol = solve_equivalent_circuit(p, balanced(v), 0.0);
    const double z = std::hypot(2.5, 63.0);
    for (double i : sol.current_a) EXPECT_NEAR(i, v / z, 1e-12);
    EXPECT_EQ(sol.torque_nm, 0.0);
}

TEST(Motor, DeenergizedDrawsNothing) {
    const MotorParams p;
    const auto sol = solve_equivalent_circuit(p, balanced(0.0), 0.3);
    for (double i : sol.current_a) EXPECT_EQ(i, 0.0);
    EXPECT_EQ(sol.torque_nm, 0.0);
}

TEST(Motor, RejectsBadInputs) {
    const MotorParams p;
    EXPECT_THROW(solve_equivalent_circuit(p, balanced(100.0), -0.01), std::invalid_argument);
    EXPECT_THROW(solve_equivalent_circuit(p, balanced(100.0), 1.01), std::invalid_argument);
    EXPECT_THROW(solve_equivalent_circuit(p, {100.0, -1.0, 100.0}, 0.5), std::invalid_argument);
}

TEST(Motor, TorqueSlipCurveHasSingleInteriorMaximum) {
    const MotorParams p;
    const auto v = balanced(p.rated_phase_voltage_v());
    std::vector<double> t;
    for (int k = 1; k <= 100; ++k) {
        t.push_back(solve_equivalent_circuit(p, v, k / 100.0).torque_nm);
        EXPECT_GE(t.back(), 0.0);
    }
    int peaks = 0;
    std::size_t peak_at = 0;
    for (std::size_t k = 1; k + 1 < t.size(); ++k) {
        if (t[k] > t[k - 1] && t[k] > t[k + 1]) {
            ++peaks;
            peak_at = k;
        }
    }
    EXPECT_EQ(peaks, 1);
    // Rising before the peak, falling after.
    for (std::size_t k = 1; k <= peak_at; ++k) EXPECT_GT(t[k], t[k - 1]);
    for (std::size_t k = peak_at + 1; k < t.size(); ++k) EXPECT_LT(t[k], t[k - 1]);
}

TEST(Motor, CurrentNonDecreasingInSlip) {
    const MotorParams p;
    const auto v = balanced(p.rated_phase_voltage_v());
    double prev = 0.0;
    for (int k = 0; k <= 980; ++k) {
        const double s = 0.02 + k / 1000.0;
        const double i = solve_equivalent_circuit(p, v, s).current_a[0];
        EXPECT_GE(i, prev);
        prev = i;
    }
}

TEST(Motor, CurrentScalesLinearlyWithVoltage) {
    const MotorParams p;
    for (double s : {0.01, 0.05, 0.3, 1.0}) {
        const auto a = solve_equivalent_circuit(p, {100.0, 90.0, 80.0}, s);
        const auto b = solve_equivalent_circuit(p, {200.0, 180.0, 160.0}, s);
        for (std::size_t k = 0; k < 3; ++k) {
            EXPECT_NEAR(b.current_a[k], 2.0 * a.current_a[k], 1e-9 * b.current_a[k]);
        }
    }
}

TEST(Motor, InputPowerCoversMechanicalOutput) {
    const MotorParams p;
    const auto v = balanced(p.rated_phase_voltage_v());
    for (int k = 1; k <= 100; ++k) {
        const double s = k / 100.0;
        const auto sol = solve_equivalent_circuit(p, v, s);
        const double p_mech = sol.torque_nm * (1.0 - s) * p.synchronous_speed_rad_s();
        EXPECT_GE(p_mech, 0.0);
        EXPECT_GE(sol.input_power_w, p_mech);
    }
}

TEST(Motor, SinglePhasingZeroesOpenPhaseAndScalesOthers) {
    const MotorParams p;
    const double v = p.rated_phase_voltage_v();
    const auto full = solve_equivalent_circuit(p, balanced(v), 1.0);
    const auto open = solve_equivalent_circuit(p, {0.0, v, v}, 1.0, {false, true, true});
    EXPECT_EQ(open.current_a[0], 0.0);
    EXPECT_NEAR(open.current_a[1], full.current_a[1] * std::sqrt(3.0) / 2.0, 1e-12);
    const auto one = solve_equivalent_circuit(p, {0.0, 0.0, v}, 1.0, {false, false, true});
    EXPECT_EQ(one.current_a[2], 0.0);
}

TEST(Motor, SeriesFactorDividesPhaseCurrent) {
    const MotorParams p;
    const auto v = balanced(p.rated_phase_voltage_v());
    const auto a = solve_equivalent_circuit(p, v, 0.04);
    const auto b = solve_equivalent_circuit(p, v, 0.04, {true, true, true}, {1.35, 1.0, 1.0});
    EXPECT_NEAR(b.current_a[0], a.current_a[0] / 1.35, 1e-12);
    EXPECT_EQ(b.current_a[1], a.current_a[1]);
}

TEST(Motor, EquilibriumKeepsSpeed) {
    const MotorParams p;
    MotorState s;
    s.rotor_speed_rad_s = 150.0;
    const auto next = step_mechanics(s, p, 3.0, 3.0, 0.01);
    EXPECT_EQ(next.rotor_speed_rad_s, 150.0);
    EXPECT_NEAR(next.slip, 1.0 - 150.0 / p.synchronous_speed_rad_s(), 1e-15);
}

TEST(Motor, SpeedIsClamped) {
    const MotorParams p;
    MotorState s;
    EXPECT_EQ(step_mechanics(s, p, 0.0, 5.0, 0.01).rotor_speed_rad_s, 0.0);
    s.rotor_speed_rad_s = p.synchronous_speed_rad_s();
    EXPECT_EQ(step_mechanics(s, p, 50.0, 0.0, 0.01).slip, 0.0);
}

TEST(Motor, FullBrakeHoldsRotorAtStandstill) {
    const MotorParams p = default_params();
    const auto brake = brake_from_potentiometer(p, 1.0, BrakeSelector::LockedMode);
    EXPECT_EQ(brake.brake_fraction, 1.0);
    const auto v = balanced(p.rated_phase_voltage_v());
    MotorState s;
    s.running = true;
    s.starting_phase = true;
    for (int k = 0; k < 1000; ++k) {
        const auto sol = solve_equivalent_circuit(p, v, s.slip);
        s = step_mechanics(s, p, sol.torque_nm, brake.load_torque_nm, 0.001);
        ASSERT_EQ(s.slip, 1.0);
    }
    EXPECT_TRUE(s.starting_phase);
}

TEST(Motor, FreeAccelerationSettlesWithinStartWindow) {
    const MotorParams p = default_params();
    const auto v = balanced(p.rated_phase_voltage_v());
    MotorState s;
    s.running = true;
    s.starting_phase = true;
    double t = 0.0;
    double prev_speed = 0.0;
    while (s.starting_phase && t < 2.0) {
        const auto sol = solve_equivalent_circuit(p, v, s.slip);
        s = step_mechanics(s, p, sol.torque_nm, 0.0, 0.001);
        EXPECT_GE(s.rotor_speed_rad_s, prev_speed);
        prev_speed = s.rotor_speed_rad_s;
        t += 0.001;
    }
    EXPECT_FALSE(s.starting_phase);
    EXPECT_LT(s.slip, 0.05);
}

TEST(Motor, BrakeFromPotentiometer) {
    const MotorParams p = default_params();
    EXPECT_FALSE(brake_from_potentiometer(p, 0.7, BrakeSelector::Off).engaged);
    const auto zero = brake_from_potentiometer(p, 0.0, BrakeSelector::OvercurrentMode);
    EXPECT_TRUE(zero.engaged);
    EXPECT_EQ(zero.load_torque_nm, 0.0);
    const auto ext = brake_from_potentiometer(p, 0.0, BrakeSelector::ExtendedStartMode);
    EXPECT_EQ(ext.load_torque_nm, p.brake_torque_max_nm);
    EXPECT_THROW(brake_from_potentiometer(p, 1.5, BrakeSelector::Off), std::invalid_argument);
    EXPECT_THROW(brake_from_potentiometer(p, -0.1, BrakeSelector::Off), std::invalid_argument);
}

TEST(Motor, CalibratedOvercurrentBrakeSettlesBetweenPickups) {
    const MotorParams p = default_params();
    const auto brake = brake_from_potentiometer(p, 1.0, BrakeSelector::OvercurrentMode);
    const auto v = balanced(p.rated_phase_voltage_v());
    MotorState s;
    s.running = true;
    // Start from the unloaded operating point, then apply the brake.
    for (int k = 0; k < 3000; ++k) {
        const auto sol = solve_equivalent_circuit(p, v, s.slip);
        s = step_mechanics(s, p, sol.torque_nm, 0.0, 0.001);
    }
    for (int k = 0; k < 5000; ++k) {
        const auto sol = solve_equivalent_circuit(p, v, s.slip);
        s = step_mechanics(s, p, sol.torque_nm, brake.load_torque_nm, 0.001);
    }
    const double ratio = solve_equivalent_circuit(p, v, s.slip).current_a[0] / p.rated_current_a;
    EXPECT_GT(ratio, 1.20);
    EXPECT_LT(ratio, 1.30);
}

TEST(Motor, ParameterChecks) {
    EXPECT_TRUE(check(default_params()).empty());
    MotorParams p;
    p.magnetizing_reactance_ohm = 10.0;
    p.stator_resistance_ohm = 0.0;
    const auto issues = check(p);
    ASSERT_EQ(issues.size(), 2u);
    EXPECT_EQ(issues[0].field, "motor.stator_resistance_ohm");
    EXPECT_EQ(issues[1].field, "motor.magnetizing_reactance_ohm");
}
