#include "siot/record_json.hpp"

#include <limits>

namespace siot {

using nlohmann::json;

namespace {

template <typename T>
T get_uint(const json& j, const char* key) {
    if (!j.contains(key)) throw ParseError(std::string("missing field: ") + key);
    const auto& v = j.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
        throw ParseError(std::string("field must be a non-negative integer: ") + key);
    }
    const auto raw = v.get<std::uint64_t>();
    if (raw > std::numeric_limits<T>::max()) throw ParseError(std::string("field out of range: ") + key);
    return static_cast<T>(raw);
}

std::string get_string(const json& j, const char* key) {
    if (!j.contains(key) || !j.at(key).is_string()) throw ParseError(std::string("missing string field: ") + key);
    return j.at(key).get<std::string>();
}

const json& get_array(const json& j, const char* key) {
    static const json empty = json::array();
    if (!j.contains(key)) return empty;
    if (!j.at(key).is_array()) throw ParseError(std::string("field must be an array: ") + key);
    return j.at(key);
}

}  // namespace

json to_json(const Schedule& s) {
    json a = json::array();
    for (const auto& e : s) a.push_back({{"start_minute", e.start_minute}, {"rate", e.rate}});
    return a;
}

json to_json(const HealthRecord& r) {
    json readings = json::array();
    for (const auto& g : r.readings) readings.push_back({{"timestamp", g.timestamp}, {"level", g.level}});
    json doses = json::array();
    for (const auto& d : r.doses) {
        doses.push_back({{"timestamp", d.timestamp},
                         {"amount", d.amount},
                         {"origin", d.origin == DoseOrigin::manual ? "manual" : "scheduled"}});
    }
    return {{"type", "health_record"},
            {"profile",
             {{"patient_id", r.profile.patient_id.to_string()},
              {"name", r.profile.name},
              {"date_of_birth", r.profile.date_of_birth.to_string()},
              {"medical_info", r.profile.medical_info}}},
            {"readings", readings},
            {"doses", doses},
            {"period_start", r.period_start},
            {"period_end", r.period_end}};
}

json to_json(const PresetCommand& c) {
    return {{"type", "preset_command"},
            {"command_id", c.command_id.to_string()},
            {"patient_id", c.patient_id.to_string()},
            {"issued_at", c.issued_at},
            {"kind", to_string(c.kind)},
            {"schedule", to_json(c.schedule)}};
}

Schedule schedule_from_json(const json& a) {
    if (!a.is_array()) throw ParseError("schedule must be an array");
    Schedule s;
    for (const auto& e : a) {
        s.push_back({get_uint<std::uint16_t>(e, "start_minute"), get_uint<std::uint32_t>(e, "rate")});
    }
    return s;
}

HealthRecord health_record_from_json(const json& j) {
    try {
        HealthRecord r;
        if (!j.contains("profile")) throw ParseError("missing field: profile");
        const auto& p = j.at("profile");
        r.profile.patient_id = Identifier::parse(get_string(p, "patient_id"));
        r.profile.name = get_string(p, "name");
        r.profile.date_of_birth = CalendarDate::parse(get_string(p, "date_of_birth"));
        r.profile.medical_info = get_string(p, "medical_info");
        for (const auto& g : get_array(j, "readings")) {
            r.readings.push_back({get_uint<Timestamp>(g, "timestamp"), get_uint<std::uint16_t>(g, "level")});
        }
        for (const auto& d : get_array(j, "doses")) {
            DoseEvent e{get_uint<Timestamp>(d, "timestamp"), get_uint<std::uint32_t>(d, "amount"),
                        DoseOrigin::scheduled};
            if (d.contains("origin")) {
                const auto o = get_string(d, "origin");
                if (o == "manual") {
                    e.origin = DoseOrigin::manual;
                } else if (o != "scheduled") {
                    throw ParseError("origin must be scheduled or manual");
                }
            }
            r.doses.push_back(e);
        }
        r.period_start = get_uint<Timestamp>(j, "period_start");
        r.period_end = get_uint<Timestamp>(j, "period_end");
        return r;
    } catch (const json::exception& e) {
        throw ParseError(e.what());
    }
}

PresetCommand preset_command_from_json(const json& j) {
    try {
        PresetCommand c;
        c.command_id = Identifier::parse(get_string(j, "command_id"));
        c.patient_id = Identifier::parse(get_string(j, "patient_id"));
        c.issued_at = get_uint<Timestamp>(j, "issued_at");
        c.kind = parse_command_kind(get_string(j, "kind"));
        c.schedule = schedule_from_json(get_array(j, "schedule"));
        return c;
    } catch (const json::exception& e) {
        throw ParseError(e.what());
    }
}

Payload payload_from_json(const json& j) {
    const auto type = j.is_object() && j.contains("type") ? j.at("type") : json();
    if (type == "health_record") return health_record_from_json(j);
    if (type == "preset_command") return preset_command_from_json(j);
    throw ParseError("\"type\" must be health_record or preset_command");
}

json envelope_to_json(const SignedEnvelope& e) {
    return {{"envelope", base64_encode(encode_envelope(e))}, {"digest", format_digest(e.digest)}};
}

SignedEnvelope envelope_from_json(const json& j) {
    if (!j.is_object() || !j.contains("envelope") || !j.at("envelope").is_string()) {
        throw ParseError("body must carry a base64 \"envelope\" field");
    }
    return decode_envelope(base64_decode(j.at("envelope").get<std::string>()));
}

}  // namespace siot
