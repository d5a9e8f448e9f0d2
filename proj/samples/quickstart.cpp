// Drive the bench by hand: power up, start the motor, inject an undervoltage,
// and watch the relay trip. Then run the same fault through the reliability
// harness.

#include "motorbench/harness.hpp"

#include <iostream>

using namespace motorbench;

int main() {
    RunConfig config;
    config.rng_seed = 2024;
    harness::Recorder bench(sim::make_world(config));

    using sim::CommandKind;
    using sim::PanelCommand;
    bench.tick({PanelCommand::simple(CommandKind::PowerOn)});
    bench.tick({PanelCommand::simple(CommandKind::StartMotor)});
    while (bench.world().clock.sim_time_s() < 1.0) bench.tick();
    std::cout << "LCD: " << bench.world().panel.lcd_text << ", slip " << bench.world().motor.slip << "\n";

    bench.tick({PanelCommand::set_fault(FaultKind::Undervoltage, true)});
    while (!bench.world().latched() && bench.world().clock.sim_time_s() < 5.0) bench.tick();

    for (const auto& e : bench.events()) std::cout << io::event_line(e) << "\n";
    std::cout << "LCD: " << bench.world().panel.lcd_text << "\n\n";

    const auto report = harness::run_reliability(FaultKind::Undervoltage, 100, config, 1);
    std::cout << harness::render_table(std::span(&report, 1));
}
