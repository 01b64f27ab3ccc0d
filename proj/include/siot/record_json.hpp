#pragma once

// JSON views of the record model, used by the CLI input files and HTTP bodies.
// The signed bytes are always the canonical encoding, never this JSON.

#include <json.hpp>

#include "siot/record.hpp"

namespace siot {

nlohmann::json to_json(const HealthRecord& r);
nlohmann::json to_json(const PresetCommand& c);
nlohmann::json to_json(const Schedule& s);

HealthRecord health_record_from_json(const nlohmann::json& j);  // throws ParseError
PresetCommand preset_command_from_json(const nlohmann::json& j);
Schedule schedule_from_json(const nlohmann::json& j);

// {"type": "health_record" | "preset_command", ...fields}
Payload payload_from_json(const nlohmann::json& j);

nlohmann::json envelope_to_json(const SignedEnvelope& e);  // {"envelope": base64, "digest": display}
SignedEnvelope envelope_from_json(const nlohmann::json& j);

}  // namespace siot
