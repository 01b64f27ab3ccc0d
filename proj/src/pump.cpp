#include "siot/pump.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace siot::pump {

namespace {

bool known_type(std::uint8_t t) {
    switch (static_cast<FrameType>(t)) {
        case FrameType::dose_report:
        case FrameType::glucose_report:
        case FrameType::set_schedule:
        case FrameType::power:
        case FrameType::ack:
        case FrameType::nack:
            return true;
    }
    return false;
}

void expect_type(const SerialFrame& f, FrameType t) {
    if (f.type != t) throw FrameError("unexpected frame type");
}

// splitmix64 finalizer, used as a stateless keyed noise source
std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) { return mix(a ^ mix(b)); }

// Insulin (mU·s/h) the schedule calls for over [start, start + kDeliveryInterval).
std::uint64_t interval_demand(const Schedule& schedule, Timestamp start) {
    std::uint64_t total = 0;
    for (Timestamp t = start; t < start + kDeliveryInterval; t += 60) {
        total += std::uint64_t{scheduled_rate(schedule, t)} * 60;
    }
    return total;
}

Timestamp next_multiple(Timestamp t, Timestamp step) { return (t + step - 1) / step * step; }

}  // namespace

std::uint16_t crc16_ccitt_false(ByteView data) {
    std::uint16_t crc = 0xFFFF;
    for (auto b : data) {
        crc ^= static_cast<std::uint16_t>(b << 8);
        for (int i = 0; i < 8; ++i) {
            crc = (crc & 0x8000) ? static_cast<std::uint16_t>((crc << 1) ^ 0x1021) : static_cast<std::uint16_t>(crc << 1);
        }
    }
    return crc;
}

Bytes frame_encode(const SerialFrame& f) {
    if (f.payload.size() > kMaxFramePayload) throw EncodingOverflow("frame payload exceeds 255 octets");
    Bytes out;
    out.reserve(kFrameOverhead + f.payload.size());
    out.push_back(kStartOfFrame);
    out.push_back(static_cast<std::uint8_t>(f.type));
    out.push_back(static_cast<std::uint8_t>(f.payload.size()));
    out.insert(out.end(), f.payload.begin(), f.payload.end());
    const std::uint16_t crc = crc16_ccitt_false(ByteView(out).subspan(1));
    out.push_back(static_cast<std::uint8_t>(crc >> 8));
    out.push_back(static_cast<std::uint8_t>(crc));
    return out;
}

SerialFrame frame_decode(ByteView bytes) {
    if (bytes.size() < kFrameOverhead) throw FrameError("frame shorter than 5 octets");
    if (bytes[0] != kStartOfFrame) throw FrameError("missing start-of-frame octet");
    const std::size_t len = bytes[2];
    if (bytes.size() != kFrameOverhead + len) throw FrameError("length octet does not match frame size");
    const std::uint16_t crc = crc16_ccitt_false(bytes.subspan(1, 2 + len));
    const std::uint16_t wire = static_cast<std::uint16_t>((bytes[3 + len] << 8) | bytes[4 + len]);
    if (crc != wire) throw FrameError("CRC mismatch");
    if (!known_type(bytes[1])) throw FrameError("unknown frame type");
    SerialFrame f;
    f.type = static_cast<FrameType>(bytes[1]);
    f.payload.assign(bytes.begin() + 3, bytes.begin() + 3 + static_cast<std::ptrdiff_t>(len));
    return f;
}

// ---- payloads ----

SerialFrame make_dose_report(const DoseEvent& d) {
    ByteWriter w;
    w.u64(d.timestamp);
    w.u32(d.amount);
    w.u8(static_cast<std::uint8_t>(d.origin));
    return {FrameType::dose_report, std::move(w).take()};
}

SerialFrame make_glucose_report(const GlucoseReading& g) {
    ByteWriter w;
    w.u64(g.timestamp);
    w.u16(g.level);
    return {FrameType::glucose_report, std::move(w).take()};
}

SerialFrame make_set_schedule(const Schedule& s) {
    if (s.size() > kMaxFrameScheduleEntries) throw EncodingOverflow("schedule too long for one serial frame");
    ByteWriter w;
    w.u8(static_cast<std::uint8_t>(s.size()));
    for (const auto& e : s) {
        w.u16(e.start_minute);
        w.u32(e.rate);
    }
    return {FrameType::set_schedule, std::move(w).take()};
}

SerialFrame make_power(bool on) { return {FrameType::power, Bytes{static_cast<std::uint8_t>(on ? 1 : 0)}}; }
SerialFrame make_ack() { return {FrameType::ack, {}}; }
SerialFrame make_nack(NackReason r) { return {FrameType::nack, Bytes{static_cast<std::uint8_t>(r)}}; }

DoseEvent parse_dose_report(const SerialFrame& f) {
    expect_type(f, FrameType::dose_report);
    if (f.payload.size() != 13) throw FrameError("dose_report payload must be 13 octets");
    ByteReader r(f.payload);
    DoseEvent d;
    d.timestamp = r.u64();
    d.amount = r.u32();
    const auto origin = r.u8();
    if (origin > 1) throw FrameError("unknown dose origin");
    d.origin = static_cast<DoseOrigin>(origin);
    return d;
}

GlucoseReading parse_glucose_report(const SerialFrame& f) {
    expect_type(f, FrameType::glucose_report);
    if (f.payload.size() != 10) throw FrameError("glucose_report payload must be 10 octets");
    ByteReader r(f.payload);
    GlucoseReading g;
    g.timestamp = r.u64();
    g.level = r.u16();
    return g;
}

Schedule parse_set_schedule(const SerialFrame& f) {
    expect_type(f, FrameType::set_schedule);
    if (f.payload.empty() || f.payload.size() != 1u + 6u * f.payload[0]) {
        throw FrameError("set_schedule payload size does not match its entry count");
    }
    ByteReader r(f.payload);
    Schedule s(r.u8());
    for (auto& e : s) {
        e.start_minute = r.u16();
        e.rate = r.u32();
    }
    return s;
}

bool parse_power(const SerialFrame& f) {
    expect_type(f, FrameType::power);
    if (f.payload.size() != 1 || f.payload[0] > 1) throw FrameError("power payload must be one octet 0 or 1");
    return f.payload[0] == 1;
}

// ---- stream reassembly ----

void FrameAssembler::feed(ByteView bytes) { buffer_.insert(buffer_.end(), bytes.begin(), bytes.end()); }

std::optional<Bytes> FrameAssembler::next() {
    if (buffer_.empty()) return std::nullopt;
    if (buffer_.front() != kStartOfFrame) {
        auto sof = std::find(buffer_.begin(), buffer_.end(), kStartOfFrame);
        Bytes junk(buffer_.begin(), sof);
        buffer_.erase(buffer_.begin(), sof);
        return junk;
    }
    if (buffer_.size() < 3) return std::nullopt;
    const std::size_t total = kFrameOverhead + buffer_[2];
    if (buffer_.size() < total) return std::nullopt;
    Bytes chunk(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(total));
    buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(total));
    return chunk;
}

// ---- state machine ----

std::uint32_t scheduled_rate(const Schedule& schedule, Timestamp t) {
    if (schedule.empty()) return 0;
    const auto minute = static_cast<std::uint16_t>((t % kDailyPeriod) / 60);
    auto it = std::upper_bound(schedule.begin(), schedule.end(), minute,
                               [](std::uint16_t m, const ScheduleEntry& e) { return m < e.start_minute; });
    if (it == schedule.begin()) return schedule.back().rate;
    return std::prev(it)->rate;
}

std::uint16_t synthetic_glucose(std::uint64_t seed, Timestamp t) {
    const std::uint64_t day = t / kDailyPeriod;
    const double sec = static_cast<double>(t % kDailyPeriod);
    const double phase = static_cast<double>(mix(seed) % kDailyPeriod);
    double level = 90.0 + 15.0 * std::sin(2.0 * std::numbers::pi * (sec - phase) / static_cast<double>(kDailyPeriod));

    constexpr double kMealMinutes[] = {7 * 60.0, 12 * 60.0 + 30, 18 * 60.0 + 30};
    for (std::uint64_t i = 0; i < 3; ++i) {
        const double jitter = static_cast<double>(mix(mix(seed, day), i) % 61) - 30.0;
        const double since = sec - (kMealMinutes[i] + jitter) * 60.0;
        if (since >= 0 && since < 7200.0) level += 60.0 * (1.0 - since / 7200.0);
    }
    level += static_cast<double>(mix(seed, t) % 7) - 3.0;
    return static_cast<std::uint16_t>(std::clamp(std::lround(level), long{kMinGlucose}, long{kMaxGlucose}));
}

TickResult tick(PumpState state, Timestamp dt) {
    if (dt == 0) throw std::invalid_argument("tick requires dt > 0");
    TickResult out;
    const Timestamp end = state.clock + dt;
    Timestamp next_dose = next_multiple(state.clock, kDeliveryInterval);
    Timestamp next_glucose = next_multiple(state.clock, kGlucoseInterval);

    while (next_dose < end || next_glucose < end) {
        if (next_dose <= next_glucose && next_dose < end) {
            if (state.power == Power::on) {
                const std::uint64_t demand = interval_demand(state.schedule, next_dose) + state.dose_carry;
                const std::uint64_t amount = demand / 3600;
                state.dose_carry = demand % 3600;
                if (amount > 0) {
                    state.delivered += amount;
                    out.frames.push_back(
                        make_dose_report({next_dose, static_cast<std::uint32_t>(amount), DoseOrigin::scheduled}));
                }
            }
            next_dose += kDeliveryInterval;
        } else {
            out.frames.push_back(make_glucose_report({next_glucose, synthetic_glucose(state.seed, next_glucose)}));
            next_glucose += kGlucoseInterval;
        }
    }
    state.clock = end;
    out.state = std::move(state);
    return out;
}

CommandResult apply_command(PumpState state, const PresetCommand& command) {
    switch (command.kind) {
        case CommandKind::set_schedule:
            try {
                validate_schedule(command.schedule);
            } catch (const InvariantViolation&) {
                return {std::move(state), make_nack(NackReason::malformed_schedule)};
            }
            state.schedule = command.schedule;
            break;
        case CommandKind::power_on:
            state.power = Power::on;
            break;
        case CommandKind::power_off:
            state.power = Power::off;
            break;
        default:
            return {std::move(state), make_nack(NackReason::unsupported)};
    }
    return {std::move(state), make_ack()};
}

CommandResult handle_frame(PumpState state, const SerialFrame& frame) {
    PresetCommand cmd;
    try {
        switch (frame.type) {
            case FrameType::set_schedule:
                cmd.kind = CommandKind::set_schedule;
                cmd.schedule = parse_set_schedule(frame);
                break;
            case FrameType::power:
                cmd.kind = parse_power(frame) ? CommandKind::power_on : CommandKind::power_off;
                break;
            default:
                return {std::move(state), make_nack(NackReason::unsupported)};
        }
    } catch (const FrameError&) {
        return {std::move(state), make_nack(NackReason::bad_payload)};
    }
    return apply_command(std::move(state), cmd);
}

}  // namespace siot::pump
