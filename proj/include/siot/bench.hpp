#pragma once

// In-process wiring of pump, gateway and cloud on simulated time, plus the
// end-to-end demo built on it.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "siot/cloud.hpp"
#include "siot/gateway.hpp"
#include "siot/pump_device.hpp"
#include "siot/serial_link.hpp"

namespace siot::bench {

inline constexpr Timestamp kDemoStart = 1767225600;  // 2026-01-01T00:00:00Z
inline constexpr Timestamp kPumpStep = 60;

/// Decorator that flips one payload bit of chosen commands on the way down,
/// standing in for an attacker between cloud and gateway.
class TamperingLink final : public CloudLink {
  public:
    explicit TamperingLink(CloudLink& inner) : inner_(inner) {}

    void target(const Identifier& command_id, std::size_t payload_bit) { targets_[command_id] = payload_bit; }
    std::size_t tampered() const { return tampered_; }

    DeliveryResult post_record(const SignedEnvelope& envelope) override { return inner_.post_record(envelope); }
    std::optional<std::vector<PendingCommand>> next_commands() override;
    bool ack_command(const CommandReport& report) override { return inner_.ack_command(report); }

  private:
    CloudLink& inner_;
    std::map<Identifier, std::size_t> targets_;
    std::size_t tampered_ = 0;
};

/// Pump sim and gateway joined by an in-process serial line.  The pump steps
/// in `kPumpStep` increments and the gateway clock follows the pump clock.
class Bench {
  public:
    Bench(gateway::GatewayConfig config, pump::PumpState pump, CloudLink& cloud);
    Bench(const Bench&) = delete;
    Bench& operator=(const Bench&) = delete;

    /// First gateway pass at the pump's start time (initial command poll).
    void start();
    void run_for(Timestamp seconds);

    Timestamp now() const { return pump_.state().clock; }
    link::InProcessSerial& serial() { return serial_; }
    pump::PumpDevice& pump() { return pump_; }
    gateway::Gateway& gateway() { return gateway_; }

  private:
    link::InProcessSerial serial_;
    pump::PumpDevice pump_;
    gateway::Gateway gateway_;
};

/// Deterministic cast of the demo, derived from the seed.
struct DemoCast {
    PatientProfile profile;
    Identifier device_id;
    std::string device_token = "demo-device-token";
    std::string physician_token = "demo-physician-token";
    std::string researcher_token = "demo-researcher-token";
};

DemoCast demo_cast(std::uint64_t seed);
cloud::PrincipalRegistry demo_principals(const DemoCast& cast);
gateway::GatewayConfig demo_gateway_config(const DemoCast& cast);
pump::PumpState demo_pump_state(std::uint64_t seed, Timestamp start = kDemoStart);
Schedule demo_initial_schedule();
Schedule demo_command_schedule();

struct DemoOptions {
    std::uint64_t hours = 24;
    std::size_t tamper_commands = 0;
    std::uint64_t seed = 1;
    std::optional<std::filesystem::path> data_dir;  // must be empty or absent
};

struct DemoReport {
    std::size_t records_sent = 0;      // acknowledged by the cloud
    std::size_t records_affirmed = 0;  // re-verified after fetch
    std::size_t commands_issued = 0;
    std::size_t commands_applied = 0;
    std::size_t commands_discarded = 0;
    std::size_t alerts = 0;
    double wall_time = 0;  // seconds

    Schedule expected_schedule;
    Schedule final_schedule;
    std::vector<std::string> failures;
    bool ok() const { return failures.empty(); }

    /// Counters only, for run-to-run comparison.
    nlohmann::json counters() const;
    nlohmann::json to_json() const;
};

DemoReport run_demo(const DemoOptions& options);

}  // namespace siot::bench
