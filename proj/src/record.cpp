#include "siot/record.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <limits>

namespace siot {

namespace {

constexpr std::string_view kRecordMagic = "HREC";
constexpr std::string_view kCommandMagic = "PCMD";
constexpr std::string_view kEnvelopeMagic = "SIOT";

bool valid_utf8(std::string_view s) {
    std::size_t i = 0;
    while (i < s.size()) {
        const auto c = static_cast<unsigned char>(s[i]);
        std::size_t len;
        std::uint32_t cp;
        if (c < 0x80) {
            ++i;
            continue;
        } else if ((c & 0xe0) == 0xc0) {
            len = 2;
            cp = c & 0x1f;
        } else if ((c & 0xf0) == 0xe0) {
            len = 3;
            cp = c & 0x0f;
        } else if ((c & 0xf8) == 0xf0) {
            len = 4;
            cp = c & 0x07;
        } else {
            return false;
        }
        if (i + len > s.size()) return false;
        for (std::size_t k = 1; k < len; ++k) {
            const auto cc = static_cast<unsigned char>(s[i + k]);
            if ((cc & 0xc0) != 0x80) return false;
            cp = (cp << 6) | (cc & 0x3f);
        }
        // overlong forms, surrogates, out of range
        if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000)) return false;
        if (cp > 0x10ffff || (cp >= 0xd800 && cp <= 0xdfff)) return false;
        i += len;
    }
    return true;
}

void check_text(std::string_view field, const std::string& value) {
    if (value.size() > kMaxTextOctets) {
        throw InvariantViolation(std::string(field) + " exceeds 4096 octets");
    }
    if (!valid_utf8(value)) throw InvariantViolation(std::string(field) + " is not valid UTF-8");
}

std::uint32_t checked_count(std::size_t n, std::string_view what) {
    if (n > std::numeric_limits<std::uint32_t>::max()) {
        throw EncodingOverflow(std::string(what) + " does not fit a 32-bit length prefix");
    }
    return static_cast<std::uint32_t>(n);
}

void put_text(ByteWriter& w, const std::string& s, std::string_view what) {
    w.u32(checked_count(s.size(), what));
    w.raw(s);
}

std::string get_text(ByteReader& r) {
    const std::uint32_t n = r.u32();
    auto v = r.raw(n);
    return {reinterpret_cast<const char*>(v.data()), v.size()};
}

// Guard against absurd counts before reserving.
std::uint32_t get_count(ByteReader& r, std::size_t element_bytes) {
    const std::uint32_t n = r.u32();
    if (std::uint64_t{n} * element_bytes > r.remaining()) throw MalformedPayload("list count exceeds payload");
    return n;
}

void expect_header(ByteReader& r, std::string_view magic) {
    auto m = r.raw(magic.size());
    if (!std::equal(m.begin(), m.end(), magic.begin(), magic.end(),
                    [](std::uint8_t a, char b) { return a == static_cast<std::uint8_t>(b); })) {
        throw MalformedPayload("bad magic, expected " + std::string(magic));
    }
    if (r.u8() != kPayloadVersion) throw MalformedPayload("unsupported payload version");
}

void expect_done(const ByteReader& r) {
    if (!r.done()) throw MalformedPayload("trailing octets after payload");
}

Identifier get_id(ByteReader& r) { return Identifier::from_bytes(r.raw(16)); }

}  // namespace

// ---- identifiers and dates ----

Identifier Identifier::parse(std::string_view hex) {
    if (hex.size() != 32) throw ParseError("identifier must be 32 hex digits");
    return from_bytes(from_hex(hex));
}

Identifier Identifier::from_bytes(ByteView b) {
    if (b.size() != 16) throw ParseError("identifier must be 16 octets");
    Storage s;
    std::copy(b.begin(), b.end(), s.begin());
    return Identifier(s);
}

bool Identifier::is_zero() const {
    return std::all_of(bytes_.begin(), bytes_.end(), [](std::uint8_t b) { return b == 0; });
}

bool CalendarDate::valid() const {
    using namespace std::chrono;
    return year_month_day{std::chrono::year{year}, std::chrono::month{month}, std::chrono::day{day}}.ok();
}

std::string CalendarDate::to_string() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04u-%02u-%02u", unsigned{year}, unsigned{month}, unsigned{day});
    return buf;
}

CalendarDate CalendarDate::parse(std::string_view s) {
    unsigned y = 0, m = 0, d = 0;
    char tail = 0;
    const std::string str(s);
    if (s.size() != 10 || std::sscanf(str.c_str(), "%4u-%2u-%2u%c", &y, &m, &d, &tail) != 3) {
        throw ParseError("date must be YYYY-MM-DD");
    }
    CalendarDate date{static_cast<std::uint16_t>(y), static_cast<std::uint8_t>(m), static_cast<std::uint8_t>(d)};
    if (!date.valid()) throw ParseError("not a calendar date: " + str);
    return date;
}

// ---- invariants ----

void validate(const PatientProfile& p) {
    if (p.patient_id.is_zero()) throw InvariantViolation("patient_id must be nonzero");
    check_text("name", p.name);
    check_text("medical_info", p.medical_info);
    if (!p.date_of_birth.valid()) throw InvariantViolation("date_of_birth is not a calendar date");
}

void validate(const HealthRecord& r) {
    validate(r.profile);
    if (r.period_end < r.period_start) throw InvariantViolation("period_end precedes period_start");
    if (r.period_end - r.period_start > kDailyPeriod) throw InvariantViolation("record period exceeds 24 h");
    auto in_period = [&](Timestamp t) { return t >= r.period_start && t <= r.period_end; };
    for (std::size_t i = 0; i < r.readings.size(); ++i) {
        const auto& g = r.readings[i];
        if (!in_period(g.timestamp)) throw InvariantViolation("glucose reading outside record period");
        if (g.level < kMinGlucose || g.level > kMaxGlucose) {
            throw InvariantViolation("glucose level outside [10, 1000] mg/dL");
        }
        if (i > 0 && g.timestamp < r.readings[i - 1].timestamp) {
            throw InvariantViolation("glucose readings not sorted by timestamp");
        }
    }
    for (std::size_t i = 0; i < r.doses.size(); ++i) {
        const auto& d = r.doses[i];
        if (!in_period(d.timestamp)) throw InvariantViolation("dose event outside record period");
        if (d.amount == 0) throw InvariantViolation("dose amount must be positive");
        if (d.origin != DoseOrigin::scheduled && d.origin != DoseOrigin::manual) {
            throw InvariantViolation("unknown dose origin");
        }
        if (i > 0 && d.timestamp < r.doses[i - 1].timestamp) {
            throw InvariantViolation("dose events not sorted by timestamp");
        }
    }
}

void validate_schedule(const Schedule& s) {
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i].start_minute >= kMinutesPerDay) throw InvariantViolation("schedule start_minute must be < 1440");
        if (i > 0 && s[i].start_minute <= s[i - 1].start_minute) {
            throw InvariantViolation("schedule entries must be strictly ascending by start_minute");
        }
    }
}

void validate(const PresetCommand& c) {
    if (c.patient_id.is_zero()) throw InvariantViolation("patient_id must be nonzero");
    switch (c.kind) {
        case CommandKind::set_schedule:
            validate_schedule(c.schedule);
            break;
        case CommandKind::power_on:
        case CommandKind::power_off:
            if (!c.schedule.empty()) throw InvariantViolation("power commands carry no schedule");
            break;
        default:
            throw InvariantViolation("unknown command kind");
    }
}

// ---- canonical encoding ----

Bytes canonical_encode(const HealthRecord& r) {
    validate(r);
    ByteWriter w;
    w.raw(kRecordMagic);
    w.u8(kPayloadVersion);
    w.raw(r.profile.patient_id.bytes());
    put_text(w, r.profile.name, "name");
    w.u16(r.profile.date_of_birth.year);
    w.u8(r.profile.date_of_birth.month);
    w.u8(r.profile.date_of_birth.day);
    put_text(w, r.profile.medical_info, "medical_info");
    w.u32(checked_count(r.readings.size(), "readings"));
    for (const auto& g : r.readings) {
        w.u64(g.timestamp);
        w.u16(g.level);
    }
    w.u32(checked_count(r.doses.size(), "doses"));
    for (const auto& d : r.doses) {
        w.u64(d.timestamp);
        w.u32(d.amount);
        w.u8(static_cast<std::uint8_t>(d.origin));
    }
    w.u64(r.period_start);
    w.u64(r.period_end);
    return std::move(w).take();
}

Bytes canonical_encode(const PresetCommand& c) {
    validate(c);
    ByteWriter w;
    w.raw(kCommandMagic);
    w.u8(kPayloadVersion);
    w.raw(c.command_id.bytes());
    w.raw(c.patient_id.bytes());
    w.u64(c.issued_at);
    w.u8(static_cast<std::uint8_t>(c.kind));
    w.u32(checked_count(c.schedule.size(), "schedule"));
    for (const auto& e : c.schedule) {
        w.u16(e.start_minute);
        w.u32(e.rate);
    }
    return std::move(w).take();
}

HealthRecord decode_health_record(ByteView bytes) {
    ByteReader r(bytes);
    expect_header(r, kRecordMagic);
    HealthRecord rec;
    rec.profile.patient_id = get_id(r);
    rec.profile.name = get_text(r);
    rec.profile.date_of_birth.year = r.u16();
    rec.profile.date_of_birth.month = r.u8();
    rec.profile.date_of_birth.day = r.u8();
    rec.profile.medical_info = get_text(r);
    const std::uint32_t nr = get_count(r, 10);
    rec.readings.reserve(nr);
    for (std::uint32_t i = 0; i < nr; ++i) {
        GlucoseReading g;
        g.timestamp = r.u64();
        g.level = r.u16();
        rec.readings.push_back(g);
    }
    const std::uint32_t nd = get_count(r, 13);
    rec.doses.reserve(nd);
    for (std::uint32_t i = 0; i < nd; ++i) {
        DoseEvent d;
        d.timestamp = r.u64();
        d.amount = r.u32();
        const std::uint8_t origin = r.u8();
        if (origin > 1) throw MalformedPayload("unknown dose origin octet");
        d.origin = static_cast<DoseOrigin>(origin);
        rec.doses.push_back(d);
    }
    rec.period_start = r.u64();
    rec.period_end = r.u64();
    expect_done(r);
    validate(rec);
    return rec;
}

PresetCommand decode_preset_command(ByteView bytes) {
    ByteReader r(bytes);
    expect_header(r, kCommandMagic);
    PresetCommand c;
    c.command_id = get_id(r);
    c.patient_id = get_id(r);
    c.issued_at = r.u64();
    const std::uint8_t kind = r.u8();
    if (kind > 2) throw MalformedPayload("unknown command kind octet");
    c.kind = static_cast<CommandKind>(kind);
    const std::uint32_t n = get_count(r, 6);
    c.schedule.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        ScheduleEntry e;
        e.start_minute = r.u16();
        e.rate = r.u32();
        c.schedule.push_back(e);
    }
    expect_done(r);
    validate(c);
    return c;
}

Payload canonical_decode(PayloadType type, ByteView bytes) {
    switch (type) {
        case PayloadType::health_record:
            return decode_health_record(bytes);
        case PayloadType::preset_command:
            return decode_preset_command(bytes);
    }
    throw MalformedPayload("unknown payload type");
}

// ---- envelope ----

Bytes encode_envelope(const SignedEnvelope& e) {
    ByteWriter w;
    w.raw(kEnvelopeMagic);
    w.u8(e.version);
    w.u8(static_cast<std::uint8_t>(e.payload_type));
    w.u32(checked_count(e.payload.size(), "payload"));
    w.raw(e.payload);
    w.raw(e.digest.view());
    return std::move(w).take();
}

SignedEnvelope decode_envelope(ByteView bytes) {
    ByteReader r(bytes);
    auto magic = r.raw(4);
    if (!std::equal(magic.begin(), magic.end(), kEnvelopeMagic.begin(), kEnvelopeMagic.end(),
                    [](std::uint8_t a, char b) { return a == static_cast<std::uint8_t>(b); })) {
        throw MalformedPayload("not a SIOT envelope");
    }
    SignedEnvelope e;
    e.version = r.u8();
    if (e.version != kEnvelopeVersion) throw MalformedPayload("unsupported envelope version");
    const std::uint8_t type = r.u8();
    if (type != 1 && type != 2) throw MalformedPayload("unknown payload type");
    e.payload_type = static_cast<PayloadType>(type);
    const std::uint32_t len = r.u32();
    auto payload = r.raw(len);
    e.payload.assign(payload.begin(), payload.end());
    e.digest = Digest256::from_bytes(r.raw(kDigestBytes));
    if (!r.done()) throw MalformedPayload("trailing octets after envelope");
    return e;
}

SignedEnvelope sign(const HealthRecord& record) {
    SignedEnvelope e;
    e.payload_type = PayloadType::health_record;
    e.payload = canonical_encode(record);
    e.digest = digest_of(e.payload);
    return e;
}

SignedEnvelope sign(const PresetCommand& command) {
    SignedEnvelope e;
    e.payload_type = PayloadType::preset_command;
    e.payload = canonical_encode(command);
    e.digest = digest_of(e.payload);
    return e;
}

VerificationOutcome verify(const SignedEnvelope& envelope) {
    VerificationOutcome out;
    out.recomputed = digest_of(envelope.payload);
    out.appended = envelope.digest;
    out.status = out.recomputed == out.appended ? VerificationStatus::affirmed : VerificationStatus::discarded;
    return out;
}

const char* to_string(VerificationStatus s) {
    return s == VerificationStatus::affirmed ? "AFFIRMED" : "DISCARDED";
}

const char* to_string(CommandKind k) {
    switch (k) {
        case CommandKind::set_schedule:
            return "set_schedule";
        case CommandKind::power_on:
            return "power_on";
        case CommandKind::power_off:
            return "power_off";
    }
    return "unknown";
}

const char* to_string(PayloadType t) {
    return t == PayloadType::health_record ? "health_record" : "preset_command";
}

CommandKind parse_command_kind(std::string_view s) {
    if (s == "set_schedule") return CommandKind::set_schedule;
    if (s == "power_on") return CommandKind::power_on;
    if (s == "power_off") return CommandKind::power_off;
    throw ParseError("unknown command kind: " + std::string(s));
}

}  // namespace siot
