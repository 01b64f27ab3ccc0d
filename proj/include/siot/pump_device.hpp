#pragma once

#include <atomic>
#include <chrono>

#include "siot/pump.hpp"
#include "siot/serial_link.hpp"

namespace siot::pump {

/// Binds a PumpState to its end of a serial link.  Counters make the pump
/// observable for safety-gate tests.
class PumpDevice {
  public:
    PumpDevice(PumpState initial, link::SerialPort& port) : state_(std::move(initial)), port_(port) {}

    void advance(Timestamp dt);
    void service();

    const PumpState& state() const { return state_; }
    std::size_t frames_received() const { return frames_received_; }
    std::size_t state_changes() const { return state_changes_; }

    bool responsive = true;  // false: swallow gateway frames without replying

  private:
    PumpState state_;
    link::SerialPort& port_;
    std::size_t frames_received_ = 0;
    std::size_t state_changes_ = 0;
};

/// Free-running loop for the standalone pump process: advance by `step`
/// simulated seconds every `real_per_step`, until the `duration` boundary has
/// been reported or stop.
void run_live(PumpDevice& device, Timestamp step, std::chrono::milliseconds real_per_step, Timestamp duration,
              const std::atomic<bool>& stop);

}  // namespace siot::pump
