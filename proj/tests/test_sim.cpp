#include "motorbench/sim.hpp"

#include <gtest/gtest.h>

using namespace motorbench;
using namespace motorbench::sim;

namespace {

RunConfig quiet_config() {
    RunConfig c;
    c.injection = c.injection.deterministic();
    return c;
}

struct Bench {
    World world;
    std::vector<Event> log;

    explicit Bench(const RunConfig& c) : world(make_world(c)) {}

    void tick(std::vector<PanelCommand> cmds = {}) {
        auto r = step(std::move(world), cmds);
        world = std::move(r.world);
        log.insert(log.end(), r.events.begin(), r.events.end());
    }
    void run(double seconds) {
        const auto n = static_cast<int>(std::llround(seconds / world.cfg().tick_duration_s));
        for (int k = 0; k < n; ++k) tick();
    }
    void send(PanelCommand c) { tick({std::move(c)}); }

    std::vector<Event> trips() const {
        std::vector<Event> out;
        for (const auto& e : log) {
            if (e.kind == EventKind::Trip) out.push_back(e);
        }
        return out;
    }
};

PanelCommand cmd(CommandKind k) { return PanelCommand::simple(k); }

} // namespace

TEST(Lcd, Messages) {
    EXPECT_EQ(lcd_message(std::nullopt, true), "Workbench Working");
    EXPECT_EQ(lcd_message(std::nullopt, false), "");
    protection::TripEvent t;
    t.fault = FaultKind::Overvoltage;
    EXPECT_EQ(lcd_message(t, true), "TRIP 59 Overvoltage");
    for (FaultKind f : kAllFaults) {
        const auto text = trip_message(f);
        EXPECT_LE(text.size(), 32u);
        const auto rows = lcd_rows(text);
        EXPECT_LE(rows[0].size(), kLcdColumns);
        EXPECT_LE(rows[1].size(), kLcdColumns);
        EXPECT_EQ(rows[0] + (rows[1].empty() ? "" : " " + rows[1]), text);
    }
    const auto rows = lcd_rows("Workbench Working");
    EXPECT_EQ(rows[0], "Workbench");
    EXPECT_EQ(rows[1], "Working");
}

TEST(Sim, PowerOnLightsPanel) {
    Bench b(quiet_config());
    b.send(cmd(CommandKind::PowerOn));
    EXPECT_TRUE(b.world.panel.green_led);
    EXPECT_EQ(b.world.panel.lcd_text, "Workbench Working");
    EXPECT_FALSE(b.world.panel.yellow_fault_led);
}

TEST(Sim, IdleTickOnlyAdvancesClock) {
    const World before = make_world(RunConfig{});
    World after = step(before).world;
    EXPECT_EQ(after.clock.tick_index, before.clock.tick_index + 1);
    after.clock = before.clock;
    after.measurement.sim_time_s = before.measurement.sim_time_s;
    EXPECT_EQ(after, before);
}

TEST(Sim, ClockIsExact) {
    Bench b(RunConfig{});
    for (int k = 0; k < 12345; ++k) b.tick();
    EXPECT_EQ(b.world.clock.tick_index, 12345);
    EXPECT_EQ(b.world.clock.sim_time_s(), 12345 * 0.010);
}

TEST(Sim, MotorStartsAndSettles) {
    Bench b(quiet_config());
    b.send(cmd(CommandKind::PowerOn));
    b.send(cmd(CommandKind::StartMotor));
    EXPECT_TRUE(b.world.motor.running);
    EXPECT_TRUE(b.world.motor.starting_phase);
    b.run(2.0);
    EXPECT_FALSE(b.world.motor.starting_phase);
    EXPECT_LT(b.world.motor.slip, 0.05);
    EXPECT_TRUE(b.trips().empty());
    EXPECT_TRUE(std::any_of(b.log.begin(), b.log.end(),
                            [](const Event& e) { return e.kind == EventKind::MotorStarted; }));
}

TEST(Sim, HousingInterlockCutsSupplySameTick) {
    Bench b(quiet_config());
    b.send(cmd(CommandKind::PowerOn));
    b.send(cmd(CommandKind::StartMotor));
    b.run(1.0);
    b.send(cmd(CommandKind::OpenHousing));
    EXPECT_EQ(b.world.terminal.voltage_v, (PhaseArray<double>{0, 0, 0}));
    EXPECT_FALSE(b.world.motor.running);
    EXPECT_EQ(b.log.back().kind, EventKind::Interlock);
    b.send(cmd(CommandKind::StartMotor));
    EXPECT_EQ(b.log.back().kind, EventKind::CommandRejected);
    for (int k = 0; k < 50; ++k) {
        b.tick();
        EXPECT_EQ(phase_max(b.world.terminal.voltage_v), 0.0);
    }
    EXPECT_TRUE(b.trips().empty());
}

TEST(Sim, OvervoltageTripsAfterDelayAndLatches) {
    Bench b(quiet_config());
    b.send(cmd(CommandKind::PowerOn));
    b.send(cmd(CommandKind::StartMotor));
    b.run(1.0);
    const double injected_at = b.world.clock.sim_time_s();
    b.send(PanelCommand::set_fault(FaultKind::Overvoltage, true));
    b.run(1.0);
    const auto trips = b.trips();
    ASSERT_EQ(trips.size(), 1u);
    EXPECT_EQ(trips[0].trip->fault, FaultKind::Overvoltage);
    EXPECT_NEAR(trips[0].sim_time_s - injected_at, 0.5, 1e-9);
    EXPECT_TRUE(b.world.panel.yellow_fault_led);
    EXPECT_TRUE(b.world.panel.buzzer);
    EXPECT_EQ(b.world.panel.lcd_text, "TRIP 59 Overvoltage");
    EXPECT_FALSE(b.world.contactor.closed);
    EXPECT_FALSE(b.world.motor.running);

    // Latch: new faults are refused until reset.
    b.send(PanelCommand::set_fault(FaultKind::Overvoltage, false));
    b.send(PanelCommand::set_fault(FaultKind::Undervoltage, true));
    EXPECT_EQ(b.log.back().kind, EventKind::CommandRejected);
    b.run(2.0);
    EXPECT_EQ(b.trips().size(), 1u);
    EXPECT_EQ(b.world.panel.latched_trip, trips[0].trip);
}

TEST(Sim, ResetClearsLatchAndAllowsSecondTrip) {
    Bench b(quiet_config());
    b.send(cmd(CommandKind::PowerOn));
    b.send(cmd(CommandKind::StartMotor));
    b.run(1.0);
    b.send(PanelCommand::set_fault(FaultKind::Overvoltage, true));
    b.run(1.0);
    ASSERT_TRUE(b.world.latched());

    b.send(PanelCommand::set_fault(FaultKind::Overvoltage, false));
    b.send(cmd(CommandKind::ResetFault));
    EXPECT_FALSE(b.world.panel.yellow_fault_led);
    EXPECT_FALSE(b.world.panel.buzzer);
    EXPECT_EQ(b.world.panel.lcd_text, "Workbench Working");
    for (const auto& f : b.world.functions) EXPECT_EQ(f.timer_ticks, 0);
    b.run(0.5);
    EXPECT_FALSE(b.world.motor.running);

    b.send(cmd(CommandKind::StartMotor));
    b.run(1.5);
    b.send(PanelCommand::set_fault(FaultKind::Overvoltage, true));
    b.run(1.0);
    const auto trips = b.trips();
    ASSERT_EQ(trips.size(), 2u);
    EXPECT_GT(trips[1].sim_time_s, trips[0].sim_time_s);
}

TEST(Sim, ResetWithoutTripIsNoOp) {
    Bench b(quiet_config());
    b.send(cmd(CommandKind::PowerOn));
    b.run(0.3);
    EXPECT_EQ(reset_fault(b.world), b.world);
}

TEST(Sim, VoltageFaultsAreMutuallyExclusive) {
    Bench b(quiet_config());
    b.send(cmd(CommandKind::PowerOn));
    b.send(PanelCommand::set_fault(FaultKind::Undervoltage, true));
    b.send(PanelCommand::set_fault(FaultKind::Overvoltage, true));
    EXPECT_EQ(b.log.back().kind, EventKind::CommandRejected);
    EXPECT_EQ(b.world.panel.active_fault_selectors, std::vector<FaultKind>{FaultKind::Undervoltage});
}

TEST(Sim, InvalidCommandsBecomeEvents) {
    Bench b(quiet_config());
    b.send(cmd(CommandKind::StartMotor));
    EXPECT_EQ(b.log.back().kind, EventKind::CommandRejected);
    b.send(PanelCommand::set_potentiometer(1.5));
    EXPECT_EQ(b.log.back().kind, EventKind::CommandRejected);
    EXPECT_EQ(b.world.panel.potentiometer, 0.0);
}

TEST(Sim, ExtendedStartNeverLeavesStandstill) {
    Bench b(quiet_config());
    b.send(cmd(CommandKind::PowerOn));
    b.send(PanelCommand::set_fault(FaultKind::ExtendedStart, true));
    const double start_at = b.world.clock.sim_time_s();
    b.send(cmd(CommandKind::StartMotor));
    while (!b.world.latched() && b.world.clock.sim_time_s() < 10.0) {
        EXPECT_EQ(b.world.motor.slip, 1.0);
        b.tick();
    }
    const auto trips = b.trips();
    ASSERT_EQ(trips.size(), 1u);
    EXPECT_EQ(trips[0].trip->fault, FaultKind::ExtendedStart);
    EXPECT_NEAR(trips[0].sim_time_s - start_at, 5.0, 0.0101);
}

TEST(Sim, UndervoltagePolesFollowSeededDraws) {
    RunConfig c;
    c.injection.noise_sigma_fraction = 0.0;
    c.injection.pole_stagger_max_s = 0.05;
    c.rng_seed = 17;
    Bench b(c);
    b.send(cmd(CommandKind::PowerOn));
    b.send(cmd(CommandKind::StartMotor));
    b.run(1.0);
    b.send(PanelCommand::set_fault(FaultKind::Undervoltage, true));
    const auto& plan = b.world.injections.at(0);
    const auto offsets = plan.pole_offsets_s;
    double t = b.world.clock.sim_time_s();
    for (int k = 0; k < 8; ++k) {
        const auto expected =
            injection::effective_supply(injection::balanced_supply(c.motor.rated_phase_voltage_v(), 60.0),
                                        b.world.injections, c.injection, t, 220.0);
        if (!b.world.contactor.closed) break;
        for (std::size_t p = 0; p < 3; ++p) {
            EXPECT_EQ(b.world.terminal.voltage_v[p] == 0.0, t - plan.injected_at_s >= offsets[p]) << k;
            EXPECT_EQ(b.world.terminal.voltage_v[p], expected.voltage_v[p]);
        }
        b.tick();
        t = b.world.clock.sim_time_s();
    }
}

TEST(Sim, SameSeedSameEvents) {
    auto run = [] {
        RunConfig c;
        c.rng_seed = 1234;
        Bench b(c);
        b.send(cmd(CommandKind::PowerOn));
        b.send(cmd(CommandKind::StartMotor));
        b.run(1.0);
        b.send(PanelCommand::set_fault(FaultKind::Undervoltage, true));
        b.run(1.0);
        return std::make_pair(b.log, b.world);
    };
    EXPECT_EQ(run(), run());
}
