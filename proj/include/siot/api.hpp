#pragma once

// Types exchanged between the gateway and the cloud store, independent of
// whether the exchange is an in-process call or HTTP.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "siot/record.hpp"

namespace siot {

enum class CommandOutcome : std::uint8_t { applied, discarded, failed };

const char* to_string(CommandOutcome o);
CommandOutcome parse_command_outcome(std::string_view s);

/// A queued command as handed to a device: ticket id plus the raw SIOT bytes.
/// The id travels outside the signed payload so a device can report on an
/// envelope whose payload it could not trust.
struct PendingCommand {
    Identifier command_id;
    Bytes envelope_bytes;
};

struct CommandReport {
    Identifier command_id;
    CommandOutcome outcome = CommandOutcome::applied;
    std::optional<Digest256> appended;         // digest carried by the received envelope
    std::optional<Digest256> recomputed;       // digest the device computed over the payload
    std::optional<Digest256> received_digest;  // digest of the whole received transport bytes
    std::string reason;
};

enum class DeliveryStatus : std::uint8_t { stored, rejected, unreachable };

struct DeliveryResult {
    DeliveryStatus status = DeliveryStatus::unreachable;
    std::uint64_t record_id = 0;
    std::string detail;
};

/// Upstream connection used by the gateway.
class CloudLink {
  public:
    virtual ~CloudLink() = default;
    virtual DeliveryResult post_record(const SignedEnvelope& envelope) = 0;
    // nullopt when the cloud cannot be reached
    virtual std::optional<std::vector<PendingCommand>> next_commands() = 0;
    // false when the cloud cannot be reached (caller retries)
    virtual bool ack_command(const CommandReport& report) = 0;
};

}  // namespace siot
