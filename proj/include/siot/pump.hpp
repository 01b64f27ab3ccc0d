#pragma once

// Infusion pump stand-in: a deterministic state machine driven by explicit
// ticks of simulated time, plus the framed serial protocol it speaks.
//
// Frame layout: 0x7E ‖ type ‖ length ‖ payload (≤ 255) ‖ CRC-16/CCITT-FALSE
// (big-endian) computed over type, length and payload.

#include <cstdint>
#include <deque>
#include <optional>
#include <vector>

#include "siot/bytes.hpp"
#include "siot/record.hpp"

namespace siot::pump {

enum class FrameType : std::uint8_t {
    dose_report = 0x01,
    glucose_report = 0x02,
    set_schedule = 0x10,
    power = 0x11,
    ack = 0x20,
    nack = 0x21,
};

inline constexpr std::uint8_t kStartOfFrame = 0x7E;
inline constexpr std::size_t kMaxFramePayload = 255;
inline constexpr std::size_t kFrameOverhead = 5;
// u8 count + 6 octets per entry must fit one frame payload
inline constexpr std::size_t kMaxFrameScheduleEntries = 42;

struct SerialFrame {
    FrameType type = FrameType::ack;
    Bytes payload;

    friend bool operator==(const SerialFrame&, const SerialFrame&) = default;
};

std::uint16_t crc16_ccitt_false(ByteView data);

Bytes frame_encode(const SerialFrame& frame);          // throws EncodingOverflow
SerialFrame frame_decode(ByteView bytes);              // throws FrameError

enum class NackReason : std::uint8_t { malformed_schedule = 1, bad_payload = 2, unsupported = 3 };

SerialFrame make_dose_report(const DoseEvent& dose);
SerialFrame make_glucose_report(const GlucoseReading& reading);
SerialFrame make_set_schedule(const Schedule& schedule);  // throws EncodingOverflow past 42 entries
SerialFrame make_power(bool on);
SerialFrame make_ack();
SerialFrame make_nack(NackReason reason);

// Payload parsers; a payload of the wrong shape throws FrameError.
DoseEvent parse_dose_report(const SerialFrame& f);
GlucoseReading parse_glucose_report(const SerialFrame& f);
Schedule parse_set_schedule(const SerialFrame& f);
bool parse_power(const SerialFrame& f);

/// Splits a byte stream into frame-sized chunks.  A chunk is the bytes of one
/// candidate frame (SOF through CRC) or a run of bytes that could not start a
/// frame; either way the consumer decodes it and reports failures.
class FrameAssembler {
  public:
    void feed(ByteView bytes);
    std::optional<Bytes> next();

  private:
    std::deque<std::uint8_t> buffer_;
};

// ---- pump state machine ----

enum class Power : std::uint8_t { off = 0, on = 1 };

inline constexpr Timestamp kDeliveryInterval = 3600;  // one dose per hour boundary
inline constexpr Timestamp kGlucoseInterval = 300;    // five-minute sensor cadence

struct PumpState {
    Power power = Power::on;
    Schedule schedule;
    Timestamp clock = 0;
    std::uint64_t delivered = 0;   // cumulative milli-units
    std::uint64_t seed = 0;
    std::uint64_t dose_carry = 0;  // undelivered fraction, in mU·s/h

    friend bool operator==(const PumpState&, const PumpState&) = default;
};

struct TickResult {
    PumpState state;
    std::vector<SerialFrame> frames;
};

/// Advances the clock over the half-open interval [clock, clock + dt).
/// At every hour boundary while powered a dose covering the coming hour is
/// reported; a glucose reading is reported at every five-minute boundary.
TickResult tick(PumpState state, Timestamp dt);

struct CommandResult {
    PumpState state;
    SerialFrame reply;  // ack or nack
};

CommandResult apply_command(PumpState state, const PresetCommand& command);
/// Gateway-originated set_schedule / power frames.
CommandResult handle_frame(PumpState state, const SerialFrame& frame);

/// Basal rate (mU/h) in effect at `t`; the schedule repeats daily and the
/// last entry wraps past midnight.  Empty schedule means zero.
std::uint32_t scheduled_rate(const Schedule& schedule, Timestamp t);

/// Deterministic synthetic CGM trace: 90 mg/dL baseline, a ±15 diurnal
/// sinusoid, three +60 meal excursions decaying over two hours, small noise.
std::uint16_t synthetic_glucose(std::uint64_t seed, Timestamp t);

}  // namespace siot::pump
