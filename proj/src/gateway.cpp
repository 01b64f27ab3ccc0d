#include "siot/gateway.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

extern char** environ;

namespace siot::gateway {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::uint64_t parse_unsigned(const std::string& key, const std::string& value) {
    if (value.empty() || value.find_first_not_of("0123456789") != std::string::npos) {
        throw ConfigError(key + " must be a non-negative integer");
    }
    try {
        return std::stoull(value);
    } catch (const std::exception&) {
        throw ConfigError(key + " is out of range");
    }
}

void apply(GatewayConfig& c, const std::string& key, const std::string& value) {
    try {
        if (key == "device_id") {
            c.device_id = Identifier::parse(value);
        } else if (key == "patient_id") {
            c.patient_id = Identifier::parse(value);
        } else if (key == "cloud_endpoint") {
            c.cloud_endpoint = value;
        } else if (key == "auth_token") {
            c.auth_token = value;
        } else if (key == "record_period") {
            c.record_period = parse_unsigned(key, value);
        } else if (key == "poll_interval") {
            c.poll_interval = parse_unsigned(key, value);
        } else if (key == "buffer_capacity") {
            c.buffer_capacity = parse_unsigned(key, value);
        } else if (key == "patient_name") {
            c.patient_name = value;
        } else if (key == "date_of_birth") {
            c.date_of_birth = CalendarDate::parse(value);
        } else if (key == "medical_info") {
            c.medical_info = value;
        } else if (key == "pump_endpoint") {
            c.pump_endpoint = value;
        } else {
            throw ConfigError("unknown configuration key: " + key);
        }
    } catch (const ParseError& e) {
        throw ConfigError(key + ": " + e.what());
    }
}

constexpr const char* kKeys[] = {"device_id",     "patient_id",    "cloud_endpoint", "auth_token",
                                 "record_period", "poll_interval", "buffer_capacity", "patient_name",
                                 "date_of_birth", "medical_info",  "pump_endpoint"};

std::string env_name(std::string key) {
    std::transform(key.begin(), key.end(), key.begin(), [](unsigned char ch) { return std::toupper(ch); });
    return "GATEWAY_" + key;
}

}  // namespace

// ---- configuration ----

void GatewayConfig::validate() const {
    if (device_id.is_zero()) throw ConfigError("device_id must be set");
    if (patient_id.is_zero()) throw ConfigError("patient_id must be set");
    if (record_period == 0) throw ConfigError("record_period must be > 0");
    if (record_period > kDailyPeriod) throw ConfigError("record_period must not exceed 24 h");
    if (poll_interval == 0) throw ConfigError("poll_interval must be > 0");
    if (buffer_capacity < 1) throw ConfigError("buffer_capacity must be >= 1");
    if (!date_of_birth.valid()) throw ConfigError("date_of_birth is not a calendar date");
    try {
        siot::validate(profile());
    } catch (const InvariantViolation& e) {
        throw ConfigError(std::string("patient profile: ") + e.what());
    }
}

Environment gateway_environment() {
    Environment env;
    for (char** e = environ; e && *e; ++e) {
        std::string_view kv(*e);
        if (!kv.starts_with("GATEWAY_")) continue;
        const auto eq = kv.find('=');
        if (eq == std::string_view::npos) continue;
        env.emplace(std::string(kv.substr(0, eq)), std::string(kv.substr(eq + 1)));
    }
    return env;
}

GatewayConfig parse_config(std::string_view text, const Environment& env) {
    GatewayConfig c;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        apply(c, trim(std::string_view(line).substr(0, eq)), trim(std::string_view(line).substr(eq + 1)));
    }
    for (const char* key : kKeys) {
        if (auto it = env.find(env_name(key)); it != env.end()) apply(c, key, it->second);
    }
    c.validate();
    return c;
}

GatewayConfig load_config(const std::filesystem::path& path, const Environment& env) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), env);
}

// ---- faults ----

const char* to_string(FaultCode c) {
    switch (c) {
        case FaultCode::SIGNATURE_MISMATCH:
            return "SIGNATURE_MISMATCH";
        case FaultCode::FRAME_ERROR:
            return "FRAME_ERROR";
        case FaultCode::CLOUD_UNREACHABLE:
            return "CLOUD_UNREACHABLE";
        case FaultCode::PUMP_TIMEOUT:
            return "PUMP_TIMEOUT";
        case FaultCode::MALFORMED_PAYLOAD:
            return "MALFORMED_PAYLOAD";
    }
    return "UNKNOWN";
}

void FaultLog::raise(FaultCode code, Timestamp at, std::string context) {
    events_.push_back({code, at, std::move(context)});
    if (handler) handler(events_.back());
}

std::size_t FaultLog::count(FaultCode code) const {
    return static_cast<std::size_t>(
        std::count_if(events_.begin(), events_.end(), [code](const FaultEvent& e) { return e.code == code; }));
}

// ---- outbound buffer ----

OutboundBuffer::OutboundBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ < 1) throw ConfigError("buffer capacity must be >= 1");
}

std::optional<SignedEnvelope> OutboundBuffer::push(SignedEnvelope envelope) {
    std::optional<SignedEnvelope> dropped;
    if (queue_.size() == capacity_) {
        dropped = std::move(queue_.front());
        queue_.pop_front();
    }
    queue_.push_back(std::move(envelope));
    return dropped;
}

// ---- acquisition ----

Acquirer::Acquirer(PatientProfile profile, Timestamp period, Timestamp start)
    : profile_(std::move(profile)), period_(period), start_(start) {}

void Acquirer::add(const pump::SerialFrame& frame) {
    switch (frame.type) {
        case pump::FrameType::glucose_report: {
            const auto g = pump::parse_glucose_report(frame);
            if (g.timestamp < start_) throw FrameError("glucose report predates the open record period");
            if (g.level < kMinGlucose || g.level > kMaxGlucose) throw FrameError("implausible glucose level");
            readings_.push_back(g);
            break;
        }
        case pump::FrameType::dose_report: {
            const auto d = pump::parse_dose_report(frame);
            if (d.timestamp < start_) throw FrameError("dose report predates the open record period");
            if (d.amount == 0) throw FrameError("dose report with zero amount");
            doses_.push_back(d);
            break;
        }
        default:
            throw FrameError("unexpected frame type on the report channel");
    }
}

std::vector<HealthRecord> Acquirer::close_through(Timestamp now) {
    std::vector<HealthRecord> out;
    while (start_ + period_ <= now) {
        const Timestamp end = start_ + period_;
        HealthRecord r;
        r.profile = profile_;
        r.period_start = start_;
        // frames stamped exactly at `end` open the next record
        r.period_end = end;
        auto split_readings = std::stable_partition(readings_.begin(), readings_.end(),
                                                    [end](const GlucoseReading& g) { return g.timestamp < end; });
        r.readings.assign(readings_.begin(), split_readings);
        readings_.erase(readings_.begin(), split_readings);
        auto split_doses = std::stable_partition(doses_.begin(), doses_.end(),
                                                 [end](const DoseEvent& d) { return d.timestamp < end; });
        r.doses.assign(doses_.begin(), split_doses);
        doses_.erase(doses_.begin(), split_doses);
        std::stable_sort(r.readings.begin(), r.readings.end(),
                         [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
        std::stable_sort(r.doses.begin(), r.doses.end(),
                         [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
        out.push_back(std::move(r));
        start_ = end;
    }
    return out;
}

Timestamp BackoffPolicy::delay(std::uint32_t failures) const {
    Timestamp d = base;
    for (std::uint32_t i = 1; i < failures && d < cap; ++i) d *= 2;
    return std::min(d, cap);
}

// ---- gateway ----

Gateway::Gateway(GatewayConfig config, link::SerialPort& pump, CloudLink& cloud, Timestamp start)
    : config_((config.validate(), std::move(config))),
      pump_(pump),
      cloud_(cloud),
      acquirer_(config_.profile(), config_.record_period, start),
      outbound_(config_.buffer_capacity),
      now_(start) {}

void Gateway::on_serial_chunk(ByteView chunk) {
    try {
        const auto frame = pump::frame_decode(chunk);
        if (frame.type == pump::FrameType::ack || frame.type == pump::FrameType::nack) {
            throw FrameError("unsolicited ack/nack");
        }
        acquirer_.add(frame);
        const Timestamp t = frame.type == pump::FrameType::glucose_report ? pump::parse_glucose_report(frame).timestamp
                                                                          : pump::parse_dose_report(frame).timestamp;
        latest_frame_time_ = std::max(latest_frame_time_, t);
    } catch (const FrameError& e) {
        faults_.raise(FaultCode::FRAME_ERROR, now_, e.what());
    }
}

void Gateway::service_serial(std::chrono::milliseconds timeout) {
    auto chunk = pump_.read(timeout);
    while (chunk) {
        on_serial_chunk(*chunk);
        chunk = pump_.read(std::chrono::milliseconds(0));
    }
}

void Gateway::advance_to(Timestamp now) {
    if (now > now_) now_ = now;
    for (const auto& record : acquirer_.close_through(now_)) publish(record);
    flush();
    if (!pending_acks_.empty() && !link_down_) send_pending_acks();
    if (!last_poll_ || now_ - *last_poll_ >= config_.poll_interval) {
        for (const auto& pending : poll_commands()) handle_command(pending);
    }
}

void Gateway::publish(const HealthRecord& record) {
    ++stats_.records_built;
    if (auto dropped = outbound_.push(sign(record))) {
        ++stats_.records_dropped;
        faults_.raise(FaultCode::CLOUD_UNREACHABLE, now_,
                      "outbound buffer full; dropped oldest record " + format_digest(dropped->digest));
    }
    flush();
}

void Gateway::flush() {
    while (!outbound_.empty() && now_ >= next_delivery_attempt_) {
        const auto result = cloud_.post_record(outbound_.front());
        switch (result.status) {
            case DeliveryStatus::stored:
                acked_ids_.push_back(result.record_id);
                ++stats_.records_delivered;
                outbound_.pop();
                delivery_failures_ = 0;
                mark_reachable();
                break;
            case DeliveryStatus::rejected:
                faults_.raise(FaultCode::MALFORMED_PAYLOAD, now_, "cloud rejected record: " + result.detail);
                outbound_.pop();
                delivery_failures_ = 0;
                mark_reachable();
                break;
            case DeliveryStatus::unreachable:
                ++delivery_failures_;
                next_delivery_attempt_ = now_ + backoff_.delay(delivery_failures_);
                mark_unreachable("record delivery: " + result.detail);
                return;
        }
    }
}

void Gateway::mark_unreachable(const std::string& context) {
    if (link_down_) return;
    link_down_ = true;
    faults_.raise(FaultCode::CLOUD_UNREACHABLE, now_, context);
}

void Gateway::mark_reachable() { link_down_ = false; }

void Gateway::send_pending_acks() {
    while (!pending_acks_.empty()) {
        if (!cloud_.ack_command(pending_acks_.front())) {
            mark_unreachable("command acknowledgment");
            return;
        }
        pending_acks_.pop_front();
    }
}

std::vector<PendingCommand> Gateway::poll_commands() {
    last_poll_ = now_;
    auto commands = cloud_.next_commands();
    if (!commands) {
        mark_unreachable("command poll");
        return {};
    }
    mark_reachable();
    send_pending_acks();
    return std::move(*commands);
}

CommandOutcome Gateway::discard(const PendingCommand& pending, FaultCode code, const std::string& reason,
                                const std::optional<VerificationOutcome>& outcome) {
    std::string context = "command " + pending.command_id.to_string() + " discarded: " + reason;
    if (outcome) {
        context += " (appended " + format_digest(outcome->appended) + ", recomputed " +
                   format_digest(outcome->recomputed) + ")";
    }
    faults_.raise(code, now_, context);
    CommandReport report;
    report.command_id = pending.command_id;
    report.outcome = CommandOutcome::discarded;
    if (outcome) {
        report.appended = outcome->appended;
        report.recomputed = outcome->recomputed;
    }
    report.received_digest = digest_of(pending.envelope_bytes);
    report.reason = reason;
    pending_acks_.push_back(std::move(report));
    send_pending_acks();
    ++stats_.commands_discarded;
    return CommandOutcome::discarded;
}

std::optional<pump::SerialFrame> Gateway::transact(const pump::SerialFrame& frame) {
    pump_.write(pump::frame_encode(frame));
    const auto deadline = std::chrono::steady_clock::now() + kPumpAckTimeout;
    for (;;) {
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        auto chunk = pump_.read(std::max(left, std::chrono::milliseconds(0)));
        if (!chunk) return std::nullopt;
        try {
            auto reply = pump::frame_decode(*chunk);
            if (reply.type == pump::FrameType::ack || reply.type == pump::FrameType::nack) return reply;
        } catch (const FrameError&) {
            // reported by the acquisition path below
        }
        on_serial_chunk(*chunk);
    }
}

CommandOutcome Gateway::handle_command(const PendingCommand& pending) {
    SignedEnvelope envelope;
    try {
        envelope = decode_envelope(pending.envelope_bytes);
    } catch (const MalformedPayload& e) {
        return discard(pending, FaultCode::MALFORMED_PAYLOAD, std::string("undecodable envelope: ") + e.what(),
                       std::nullopt);
    }
    const auto outcome = verify(envelope);
    if (!outcome.affirmed()) return discard(pending, FaultCode::SIGNATURE_MISMATCH, "digest mismatch", outcome);
    if (envelope.payload_type != PayloadType::preset_command) {
        return discard(pending, FaultCode::MALFORMED_PAYLOAD, "envelope is not a preset command", outcome);
    }

    PresetCommand command;
    try {
        command = decode_preset_command(envelope.payload);
    } catch (const Error& e) {
        return discard(pending, FaultCode::MALFORMED_PAYLOAD, std::string("bad command payload: ") + e.what(), outcome);
    }
    if (command.patient_id != config_.patient_id) {
        return discard(pending, FaultCode::MALFORMED_PAYLOAD, "patient mismatch", outcome);
    }
    if (command.command_id != pending.command_id) {
        return discard(pending, FaultCode::MALFORMED_PAYLOAD, "ticket id does not match signed command_id", outcome);
    }

    pump::SerialFrame frame;
    try {
        frame = command.kind == CommandKind::set_schedule ? pump::make_set_schedule(command.schedule)
                                                          : pump::make_power(command.kind == CommandKind::power_on);
    } catch (const EncodingOverflow& e) {
        return discard(pending, FaultCode::MALFORMED_PAYLOAD, e.what(), outcome);
    }

    CommandReport report;
    report.command_id = pending.command_id;
    report.appended = outcome.appended;
    report.recomputed = outcome.recomputed;
    report.received_digest = digest_of(pending.envelope_bytes);

    const auto reply = transact(frame);
    if (!reply) {
        faults_.raise(FaultCode::PUMP_TIMEOUT, now_, "no ack from pump for command " + command.command_id.to_string());
        report.outcome = CommandOutcome::failed;
        report.reason = "pump timeout";
        ++stats_.commands_failed;
    } else if (reply->type == pump::FrameType::nack) {
        faults_.raise(FaultCode::MALFORMED_PAYLOAD, now_, "pump refused command " + command.command_id.to_string());
        report.outcome = CommandOutcome::failed;
        report.reason = "pump nack";
        ++stats_.commands_failed;
    } else {
        report.outcome = CommandOutcome::applied;
        ++stats_.commands_applied;
    }
    const auto result = report.outcome;
    pending_acks_.push_back(std::move(report));
    send_pending_acks();
    return result;
}

void run_live(Gateway& gateway, const std::atomic<bool>& stop) {
    while (!stop && !gateway.pump_link_closed()) {
        gateway.service_serial(std::chrono::milliseconds(200));
        gateway.advance_to(gateway.latest_frame_time());
    }
    gateway.service_serial();
    gateway.advance_to(gateway.latest_frame_time());
}

}  // namespace siot::gateway
