#pragma once

// Cloud record store: verifies envelopes on ingest, persists accepted ones in
// per-patient append-only logs, queues physician commands for devices and
// keeps the tamper alert list.  All access goes through a Principal.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "siot/api.hpp"
#include "siot/record.hpp"
#include "siot/record_log.hpp"

namespace siot::cloud {

enum class Role : std::uint8_t { device, physician, researcher };

const char* to_string(Role r);
Role parse_role(std::string_view s);

struct Principal {
    std::string id;
    std::string token;
    Role role = Role::researcher;
    std::set<Identifier> scope;          // patients this principal may touch
    std::optional<Identifier> device_id;  // device principals only

    bool covers(const Identifier& patient) const { return scope.count(patient) > 0; }
};

class PrincipalRegistry {
  public:
    void add(Principal p);  // throws ConfigError on duplicate token
    const Principal& authenticate(std::string_view token) const;  // throws Unauthorized
    const std::vector<Principal>& all() const { return principals_; }

  private:
    std::vector<Principal> principals_;
};

/// {"principals": [{"id", "token", "role", "scope": [hex], "device_id": hex}]}
PrincipalRegistry principals_from_json(const nlohmann::json& j);
PrincipalRegistry load_principals(const std::filesystem::path& path);

struct StoredRecord {
    std::uint64_t record_id = 0;
    Timestamp received_at = 0;
    SignedEnvelope envelope;
    Bytes envelope_bytes;  // exactly as ingested
    Identifier patient_id;
    Timestamp period_start = 0;
    Timestamp period_end = 0;
};

enum class TicketState : std::uint8_t { queued, delivered, applied, discarded_by_gateway, failed };

const char* to_string(TicketState s);

struct CommandTicket {
    Identifier command_id;
    Identifier patient_id;
    SignedEnvelope envelope;
    TicketState state = TicketState::queued;
    std::string issued_by;
    Timestamp issued_at = 0;
};

enum class AlertSource : std::uint8_t { ingest, gateway_report };

const char* to_string(AlertSource s);

struct TamperAlert {
    Timestamp at = 0;
    AlertSource source = AlertSource::ingest;
    Digest256 expected;  // digest the data was signed with
    Digest256 observed;  // digest of the data as it was actually received
    std::string context;
};

struct RecoveryReport {
    std::size_t files = 0;
    std::size_t entries = 0;
    std::uint64_t truncated_bytes = 0;
    std::size_t rejected_entries = 0;  // complete entries whose envelope failed re-verification
};

struct AuditReport {
    std::size_t checked = 0;
    std::size_t affirmed = 0;
    std::vector<std::string> problems;
    bool clean() const { return problems.empty() && checked == affirmed; }
};

struct StoreOptions {
    std::optional<std::filesystem::path> data_dir;  // nullopt: memory only
    std::function<Timestamp()> clock;              // default: system clock
    bool sync = true;                              // fdatasync each append
};

class CloudStore {
  public:
    CloudStore(PrincipalRegistry principals, StoreOptions options = {});
    ~CloudStore();
    CloudStore(const CloudStore&) = delete;
    CloudStore& operator=(const CloudStore&) = delete;

    const Principal& authenticate(std::string_view token) const { return principals_.authenticate(token); }

    /// Throws Unauthorized, IntegrityRejected (after recording an alert) or MalformedPayload.
    std::uint64_t ingest_record(const SignedEnvelope& envelope, const Principal& who);
    std::uint64_t ingest_record_bytes(ByteView envelope_bytes, const Principal& who);

    /// Records whose period overlaps [from, to], ascending record_id.
    std::vector<StoredRecord> fetch_records(const Identifier& patient, Timestamp from, Timestamp to,
                                            const Principal& who) const;

    CommandTicket issue_command(const PresetCommand& command, const Principal& who);
    /// Accepts an envelope signed elsewhere (e.g. by the console); it must verify.
    CommandTicket issue_signed_command(const SignedEnvelope& envelope, const Principal& who);

    /// Queued commands for the device, in issue order; they become delivered.
    std::vector<PendingCommand> next_commands(const Identifier& device_id, const Principal& who);
    CommandTicket ack_command(const CommandReport& report, const Principal& who);

    std::vector<TamperAlert> list_alerts(const Principal& who) const;  // newest first
    CommandTicket ticket(const Identifier& command_id, const Principal& who) const;

    /// Re-verifies every stored envelope and checks logs against the index.
    AuditReport audit() const;
    const RecoveryReport& recovery() const { return recovery_; }
    std::size_t record_count() const;

  private:
    struct PatientLog;

    PatientLog& log_for(const Identifier& patient);
    void add_alert(TamperAlert alert);
    CommandTicket enqueue(const PresetCommand& command, SignedEnvelope envelope, const Principal& who);
    void recover();

    PrincipalRegistry principals_;
    StoreOptions options_;
    RecoveryReport recovery_;

    mutable std::shared_mutex mutex_;  // guards everything below except the log files
    std::map<Identifier, std::unique_ptr<PatientLog>> logs_;
    std::map<Identifier, std::vector<StoredRecord>> records_;
    std::map<Identifier, CommandTicket> tickets_;
    std::vector<Identifier> ticket_order_;
    std::vector<TamperAlert> alerts_;
};

}  // namespace siot::cloud
