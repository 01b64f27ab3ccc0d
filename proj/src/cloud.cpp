#include "siot/cloud.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <limits>

namespace siot::cloud {

namespace {

constexpr std::string_view kLogPrefix = "patient-";
constexpr std::string_view kLogSuffix = ".log";

Timestamp system_now() {
    return static_cast<Timestamp>(
        std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch()).count());
}

void require_role(const Principal& who, Role role, std::string_view action) {
    if (who.role != role) {
        throw Unauthorized(std::string(to_string(who.role)) + " principal may not " + std::string(action));
    }
}

void require_scope(const Principal& who, const Identifier& patient) {
    if (!who.covers(patient)) throw Unauthorized("patient " + patient.to_string() + " outside principal scope");
}

}  // namespace

const char* to_string(Role r) {
    switch (r) {
        case Role::device:
            return "device";
        case Role::physician:
            return "physician";
        case Role::researcher:
            return "researcher";
    }
    return "unknown";
}

Role parse_role(std::string_view s) {
    if (s == "device") return Role::device;
    if (s == "physician") return Role::physician;
    if (s == "researcher") return Role::researcher;
    throw ConfigError("unknown role: " + std::string(s));
}

const char* to_string(TicketState s) {
    switch (s) {
        case TicketState::queued:
            return "queued";
        case TicketState::delivered:
            return "delivered";
        case TicketState::applied:
            return "applied";
        case TicketState::discarded_by_gateway:
            return "discarded_by_gateway";
        case TicketState::failed:
            return "failed";
    }
    return "unknown";
}

const char* to_string(AlertSource s) { return s == AlertSource::ingest ? "ingest" : "gateway_report"; }

// ---- principals ----

void PrincipalRegistry::add(Principal p) {
    if (p.token.empty()) throw ConfigError("principal " + p.id + " has an empty token");
    for (const auto& existing : principals_) {
        if (existing.token == p.token) throw ConfigError("duplicate token for principal " + p.id);
    }
    if (p.role == Role::device && !p.device_id) throw ConfigError("device principal " + p.id + " needs a device_id");
    principals_.push_back(std::move(p));
}

const Principal& PrincipalRegistry::authenticate(std::string_view token) const {
    for (const auto& p : principals_) {
        if (!token.empty() && p.token == token) return p;
    }
    throw Unauthorized("unknown or missing bearer token");
}

PrincipalRegistry principals_from_json(const nlohmann::json& j) {
    PrincipalRegistry reg;
    try {
        for (const auto& item : j.at("principals")) {
            Principal p;
            p.id = item.at("id").get<std::string>();
            p.token = item.at("token").get<std::string>();
            p.role = parse_role(item.at("role").get<std::string>());
            for (const auto& s : item.value("scope", nlohmann::json::array())) {
                p.scope.insert(Identifier::parse(s.get<std::string>()));
            }
            if (item.contains("device_id")) p.device_id = Identifier::parse(item.at("device_id").get<std::string>());
            reg.add(std::move(p));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("principals file: ") + e.what());
    } catch (const ParseError& e) {
        throw ConfigError(std::string("principals file: ") + e.what());
    }
    return reg;
}

PrincipalRegistry load_principals(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read principals file " + path.string());
    try {
        return principals_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("principals file: ") + e.what());
    }
}

// ---- store ----

struct CloudStore::PatientLog {
    std::mutex write_mutex;
    std::unique_ptr<RecordLog> file;
    std::uint64_t next_id = 1;
};

CloudStore::CloudStore(PrincipalRegistry principals, StoreOptions options)
    : principals_(std::move(principals)), options_(std::move(options)) {
    if (!options_.clock) options_.clock = system_now;
    if (options_.data_dir) {
        std::error_code ec;
        std::filesystem::create_directories(*options_.data_dir, ec);
        if (ec) throw StorageError("cannot create data dir " + options_.data_dir->string() + ": " + ec.message());
        recover();
    }
}

CloudStore::~CloudStore() = default;

void CloudStore::recover() {
    for (const auto& dirent : std::filesystem::directory_iterator(*options_.data_dir)) {
        const std::string name = dirent.path().filename().string();
        if (!name.starts_with(kLogPrefix) || !name.ends_with(kLogSuffix)) continue;
        const auto hex = name.substr(kLogPrefix.size(), name.size() - kLogPrefix.size() - kLogSuffix.size());
        Identifier patient;
        try {
            patient = Identifier::parse(hex);
        } catch (const ParseError&) {
            continue;
        }
        LogReplay replay;
        auto log = std::make_unique<PatientLog>();
        log->file = std::make_unique<RecordLog>(dirent.path(), options_.sync, replay);
        ++recovery_.files;
        recovery_.truncated_bytes += replay.truncated_bytes;
        auto& index = records_[patient];
        for (auto& entry : replay.entries) {
            log->next_id = std::max(log->next_id, entry.record_id + 1);
            try {
                StoredRecord rec;
                rec.envelope = decode_envelope(entry.envelope);
                if (!verify(rec.envelope).affirmed()) throw IntegrityRejected("stored envelope fails verification");
                const auto health = decode_health_record(rec.envelope.payload);
                if (health.profile.patient_id != patient) throw MalformedPayload("record filed under wrong patient");
                rec.record_id = entry.record_id;
                rec.received_at = entry.received_at;
                rec.envelope_bytes = std::move(entry.envelope);
                rec.patient_id = patient;
                rec.period_start = health.period_start;
                rec.period_end = health.period_end;
                index.push_back(std::move(rec));
                ++recovery_.entries;
            } catch (const Error&) {
                ++recovery_.rejected_entries;
            }
        }
        logs_.emplace(patient, std::move(log));
    }
}

CloudStore::PatientLog& CloudStore::log_for(const Identifier& patient) {
    std::unique_lock lock(mutex_);
    auto& slot = logs_[patient];
    if (!slot) {
        slot = std::make_unique<PatientLog>();
        if (options_.data_dir) {
            LogReplay replay;
            const auto path = *options_.data_dir / (std::string(kLogPrefix) + patient.to_string() + std::string(kLogSuffix));
            slot->file = std::make_unique<RecordLog>(path, options_.sync, replay);
        }
    }
    return *slot;
}

void CloudStore::add_alert(TamperAlert alert) {
    std::unique_lock lock(mutex_);
    alerts_.push_back(std::move(alert));
}

std::uint64_t CloudStore::ingest_record_bytes(ByteView envelope_bytes, const Principal& who) {
    require_role(who, Role::device, "ingest records");
    return ingest_record(decode_envelope(envelope_bytes), who);
}

std::uint64_t CloudStore::ingest_record(const SignedEnvelope& envelope, const Principal& who) {
    require_role(who, Role::device, "ingest records");
    if (envelope.payload_type != PayloadType::health_record) throw MalformedPayload("envelope is not a health record");

    const auto outcome = verify(envelope);
    if (!outcome.affirmed()) {
        add_alert({options_.clock(), AlertSource::ingest, outcome.appended, outcome.recomputed,
                   "record from " + who.id + " failed verification on ingest"});
        throw IntegrityRejected("digest mismatch: appended " + format_digest(outcome.appended) + ", recomputed " +
                                format_digest(outcome.recomputed));
    }
    const auto health = decode_health_record(envelope.payload);
    const Identifier patient = health.profile.patient_id;
    require_scope(who, patient);

    StoredRecord rec;
    rec.received_at = options_.clock();
    rec.envelope = envelope;
    rec.envelope_bytes = encode_envelope(envelope);
    rec.patient_id = patient;
    rec.period_start = health.period_start;
    rec.period_end = health.period_end;

    auto& log = log_for(patient);
    std::lock_guard write(log.write_mutex);
    rec.record_id = log.next_id;
    if (log.file) log.file->append({rec.record_id, rec.received_at, rec.envelope_bytes});
    ++log.next_id;
    std::unique_lock lock(mutex_);
    records_[patient].push_back(std::move(rec));
    return records_[patient].back().record_id;
}

std::vector<StoredRecord> CloudStore::fetch_records(const Identifier& patient, Timestamp from, Timestamp to,
                                                    const Principal& who) const {
    if (who.role != Role::physician && who.role != Role::researcher) {
        throw Unauthorized(std::string(to_string(who.role)) + " principal may not read records");
    }
    require_scope(who, patient);
    std::shared_lock lock(mutex_);
    std::vector<StoredRecord> out;
    auto it = records_.find(patient);
    if (it == records_.end()) return out;
    for (const auto& r : it->second) {
        if (r.period_end >= from && r.period_start <= to) out.push_back(r);
    }
    return out;
}

CommandTicket CloudStore::enqueue(const PresetCommand& command, SignedEnvelope envelope, const Principal& who) {
    std::unique_lock lock(mutex_);
    if (tickets_.count(command.command_id)) {
        throw DuplicateCommand("command_id " + command.command_id.to_string() + " already issued");
    }
    CommandTicket t;
    t.command_id = command.command_id;
    t.patient_id = command.patient_id;
    t.envelope = std::move(envelope);
    t.issued_by = who.id;
    t.issued_at = command.issued_at;
    tickets_.emplace(t.command_id, t);
    ticket_order_.push_back(t.command_id);
    return t;
}

CommandTicket CloudStore::issue_command(const PresetCommand& command, const Principal& who) {
    require_role(who, Role::physician, "issue commands");
    require_scope(who, command.patient_id);
    auto envelope = sign(command);  // validates
    return enqueue(command, std::move(envelope), who);
}

CommandTicket CloudStore::issue_signed_command(const SignedEnvelope& envelope, const Principal& who) {
    require_role(who, Role::physician, "issue commands");
    if (envelope.payload_type != PayloadType::preset_command) throw MalformedPayload("envelope is not a command");
    const auto outcome = verify(envelope);
    if (!outcome.affirmed()) {
        throw IntegrityRejected("command digest mismatch: appended " + format_digest(outcome.appended) +
                                ", recomputed " + format_digest(outcome.recomputed));
    }
    const auto command = decode_preset_command(envelope.payload);
    require_scope(who, command.patient_id);
    return enqueue(command, envelope, who);
}

std::vector<PendingCommand> CloudStore::next_commands(const Identifier& device_id, const Principal& who) {
    require_role(who, Role::device, "poll commands");
    if (!who.device_id || *who.device_id != device_id) throw Unauthorized("token does not belong to this device");
    std::unique_lock lock(mutex_);
    std::vector<PendingCommand> out;
    for (const auto& id : ticket_order_) {
        auto& t = tickets_.at(id);
        if (t.state != TicketState::queued || !who.covers(t.patient_id)) continue;
        t.state = TicketState::delivered;
        out.push_back({t.command_id, encode_envelope(t.envelope)});
    }
    return out;
}

CommandTicket CloudStore::ack_command(const CommandReport& report, const Principal& who) {
    require_role(who, Role::device, "acknowledge commands");
    std::optional<TamperAlert> alert;
    CommandTicket result;
    {
        std::unique_lock lock(mutex_);
        auto it = tickets_.find(report.command_id);
        if (it == tickets_.end()) throw UnknownCommand("no command " + report.command_id.to_string());
        auto& t = it->second;
        if (!who.covers(t.patient_id)) throw Unauthorized("command outside device scope");
        if (t.state != TicketState::delivered) {
            throw InvalidTransition(std::string("command is ") + to_string(t.state) + ", not delivered");
        }
        switch (report.outcome) {
            case CommandOutcome::applied:
                t.state = TicketState::applied;
                break;
            case CommandOutcome::failed:
                t.state = TicketState::failed;
                break;
            case CommandOutcome::discarded: {
                t.state = TicketState::discarded_by_gateway;
                TamperAlert a;
                a.at = options_.clock();
                a.source = AlertSource::gateway_report;
                std::string level;
                if (report.recomputed) {
                    a.expected = t.envelope.digest;
                    a.observed = *report.recomputed;
                    level = "payload";
                } else {
                    a.expected = digest_of(encode_envelope(t.envelope));
                    a.observed = report.received_digest.value_or(a.expected);
                    level = "transport";
                }
                a.context = "device " + who.id + " discarded command " + t.command_id.to_string() + " (" +
                            report.reason + "; " + level + " digest)";
                alert = std::move(a);
                break;
            }
        }
        result = t;
    }
    if (alert) add_alert(std::move(*alert));
    return result;
}

std::vector<TamperAlert> CloudStore::list_alerts(const Principal& who) const {
    require_role(who, Role::physician, "list alerts");
    std::shared_lock lock(mutex_);
    return {alerts_.rbegin(), alerts_.rend()};
}

CommandTicket CloudStore::ticket(const Identifier& command_id, const Principal& who) const {
    if (who.role == Role::researcher) throw Unauthorized("researcher principal may not read commands");
    std::shared_lock lock(mutex_);
    auto it = tickets_.find(command_id);
    if (it == tickets_.end()) throw UnknownCommand("no command " + command_id.to_string());
    require_scope(who, it->second.patient_id);
    return it->second;
}

std::size_t CloudStore::record_count() const {
    std::shared_lock lock(mutex_);
    std::size_t n = 0;
    for (const auto& [_, v] : records_) n += v.size();
    return n;
}

AuditReport CloudStore::audit() const {
    AuditReport report;
    std::shared_lock lock(mutex_);
    for (const auto& [patient, records] : records_) {
        std::uint64_t last_id = 0;
        for (const auto& r : records) {
            ++report.checked;
            const auto parsed = decode_envelope(r.envelope_bytes);
            if (parsed != r.envelope) report.problems.push_back("index and stored bytes differ for " + std::to_string(r.record_id));
            if (digest_of(parsed.payload) == parsed.digest) {
                ++report.affirmed;
            } else {
                report.problems.push_back("record " + std::to_string(r.record_id) + " fails verification");
            }
            if (r.record_id <= last_id) report.problems.push_back("record ids not increasing for " + patient.to_string());
            last_id = r.record_id;
        }
    }
    if (!options_.data_dir) return report;

    // The on-disk logs must replay to the in-memory index.  Snapshot first so
    // no file is read under the index lock.
    std::vector<std::pair<std::filesystem::path, std::vector<Bytes>>> expected;
    for (const auto& [patient, log] : logs_) {
        if (!log->file) continue;
        std::vector<Bytes> bytes;
        if (auto it = records_.find(patient); it != records_.end()) {
            for (const auto& r : it->second) bytes.push_back(r.envelope_bytes);
        }
        expected.emplace_back(log->file->path(), std::move(bytes));
    }
    lock.unlock();
    for (const auto& [path, bytes] : expected) {
        const auto replay = RecordLog::read_entries(path);
        // appends racing with the audit may only add entries past the snapshot
        if (replay.entries.size() < bytes.size()) {
            report.problems.push_back(path.filename().string() + " holds fewer entries than the index");
            continue;
        }
        for (std::size_t i = 0; i < bytes.size(); ++i) {
            if (replay.entries[i].envelope != bytes[i]) {
                report.problems.push_back(path.filename().string() + ": entry " + std::to_string(i) +
                                          " differs from the index");
            }
        }
    }
    return report;
}

}  // namespace siot::cloud
