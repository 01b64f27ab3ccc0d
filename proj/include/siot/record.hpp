#pragma once

// Health records, preset control commands, their canonical byte encodings and
// the signed envelope that carries a payload with its SHA-256 appended.

#include <array>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "siot/bytes.hpp"
#include "siot/hash.hpp"

namespace siot {

using Timestamp = std::uint64_t;  // seconds since the Unix epoch

inline constexpr std::size_t kMaxTextOctets = 4096;
inline constexpr std::uint16_t kMinGlucose = 10;
inline constexpr std::uint16_t kMaxGlucose = 1000;
inline constexpr std::uint16_t kMinutesPerDay = 1440;
inline constexpr Timestamp kDailyPeriod = 24 * 3600;

/// 16-octet identifier (patients, devices, commands).  Text form is 32 hex digits.
class Identifier {
  public:
    using Storage = std::array<std::uint8_t, 16>;

    constexpr Identifier() = default;
    constexpr explicit Identifier(const Storage& b) : bytes_(b) {}

    static Identifier parse(std::string_view hex);
    static Identifier from_bytes(ByteView b);

    const Storage& bytes() const { return bytes_; }
    bool is_zero() const;
    std::string to_string() const { return to_hex(bytes_); }

    friend auto operator<=>(const Identifier&, const Identifier&) = default;

  private:
    Storage bytes_{};
};

struct CalendarDate {
    std::uint16_t year = 1970;
    std::uint8_t month = 1;
    std::uint8_t day = 1;

    bool valid() const;
    std::string to_string() const;              // YYYY-MM-DD
    static CalendarDate parse(std::string_view);  // YYYY-MM-DD
    friend bool operator==(const CalendarDate&, const CalendarDate&) = default;
};

struct PatientProfile {
    Identifier patient_id;
    std::string name;
    CalendarDate date_of_birth;
    std::string medical_info;

    friend bool operator==(const PatientProfile&, const PatientProfile&) = default;
};

struct GlucoseReading {
    Timestamp timestamp = 0;
    std::uint16_t level = 0;  // mg/dL

    friend bool operator==(const GlucoseReading&, const GlucoseReading&) = default;
};

enum class DoseOrigin : std::uint8_t { scheduled = 0, manual = 1 };

struct DoseEvent {
    Timestamp timestamp = 0;
    std::uint32_t amount = 0;  // milli-units of insulin
    DoseOrigin origin = DoseOrigin::scheduled;

    friend bool operator==(const DoseEvent&, const DoseEvent&) = default;
};

struct HealthRecord {
    PatientProfile profile;
    std::vector<GlucoseReading> readings;
    std::vector<DoseEvent> doses;
    Timestamp period_start = 0;
    Timestamp period_end = 0;

    friend bool operator==(const HealthRecord&, const HealthRecord&) = default;
};

struct ScheduleEntry {
    std::uint16_t start_minute = 0;  // minute of day, < 1440
    std::uint32_t rate = 0;          // milli-units per hour

    friend bool operator==(const ScheduleEntry&, const ScheduleEntry&) = default;
};

using Schedule = std::vector<ScheduleEntry>;

enum class CommandKind : std::uint8_t { set_schedule = 0, power_on = 1, power_off = 2 };

struct PresetCommand {
    Identifier command_id;
    Identifier patient_id;
    Timestamp issued_at = 0;
    CommandKind kind = CommandKind::set_schedule;
    Schedule schedule;  // empty unless kind == set_schedule

    friend bool operator==(const PresetCommand&, const PresetCommand&) = default;
};

// Invariant checks; each throws InvariantViolation naming the broken rule.
void validate(const PatientProfile& profile);
void validate(const HealthRecord& record);
void validate_schedule(const Schedule& schedule);
void validate(const PresetCommand& command);

// Canonical encodings: 4-octet magic, version octet, then fields in
// declaration order; integers big-endian, text and lists u32-length-prefixed.
inline constexpr std::uint8_t kPayloadVersion = 0x01;

Bytes canonical_encode(const HealthRecord& record);
Bytes canonical_encode(const PresetCommand& command);
HealthRecord decode_health_record(ByteView bytes);
PresetCommand decode_preset_command(ByteView bytes);

enum class PayloadType : std::uint8_t { health_record = 1, preset_command = 2 };

using Payload = std::variant<HealthRecord, PresetCommand>;
Payload canonical_decode(PayloadType type, ByteView bytes);

struct SignedEnvelope {
    std::uint8_t version = 0x01;
    PayloadType payload_type = PayloadType::health_record;
    Bytes payload;
    Digest256 digest;

    friend bool operator==(const SignedEnvelope&, const SignedEnvelope&) = default;
};

// Wire/file form: "SIOT" ‖ 0x01 ‖ type ‖ u32 payload length ‖ payload ‖ digest.
inline constexpr std::uint8_t kEnvelopeVersion = 0x01;
inline constexpr std::size_t kEnvelopeHeaderBytes = 10;

Bytes encode_envelope(const SignedEnvelope& envelope);
SignedEnvelope decode_envelope(ByteView bytes);  // throws MalformedPayload

SignedEnvelope sign(const HealthRecord& record);
SignedEnvelope sign(const PresetCommand& command);

enum class VerificationStatus { affirmed, discarded };

struct VerificationOutcome {
    VerificationStatus status = VerificationStatus::discarded;
    Digest256 recomputed;
    Digest256 appended;

    bool affirmed() const { return status == VerificationStatus::affirmed; }
};

VerificationOutcome verify(const SignedEnvelope& envelope);

const char* to_string(VerificationStatus s);
const char* to_string(CommandKind k);
const char* to_string(PayloadType t);
CommandKind parse_command_kind(std::string_view s);

}  // namespace siot
