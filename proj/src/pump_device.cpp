#include "siot/pump_device.hpp"

#include <thread>

namespace siot::pump {

void PumpDevice::advance(Timestamp dt) {
    auto result = tick(std::move(state_), dt);
    state_ = std::move(result.state);
    for (const auto& f : result.frames) port_.write(frame_encode(f));
}

void PumpDevice::service() {
    while (auto chunk = port_.read(std::chrono::milliseconds(0))) {
        ++frames_received_;
        if (!responsive) continue;
        SerialFrame reply;
        try {
            const auto frame = frame_decode(*chunk);
            const auto before_power = state_.power;
            const auto before_schedule = state_.schedule;
            auto result = handle_frame(std::move(state_), frame);
            state_ = std::move(result.state);
            if (state_.power != before_power || state_.schedule != before_schedule) ++state_changes_;
            reply = std::move(result.reply);
        } catch (const FrameError&) {
            reply = make_nack(NackReason::bad_payload);
        }
        port_.write(frame_encode(reply));
    }
}

void run_live(PumpDevice& device, Timestamp step, std::chrono::milliseconds real_per_step, Timestamp duration,
              const std::atomic<bool>& stop) {
    Timestamp elapsed = 0;
    auto next = std::chrono::steady_clock::now();
    // one step past `duration` so the frames stamped at the final boundary go out
    while (!stop && (duration == 0 || elapsed <= duration)) {
        device.service();
        device.advance(step);
        elapsed += step;
        next += real_per_step;
        // keep answering commands while waiting for the next step
        while (std::chrono::steady_clock::now() < next && !stop) {
            device.service();
            std::this_thread::sleep_for(std::chrono::milliseconds(1));
        }
    }
    device.service();
}

}  // namespace siot::pump
