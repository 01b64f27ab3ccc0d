#pragma once

// The gateway sits between the pump's serial line and the cloud.  Upstream it
// turns pump frames into signed hourly health records and ships them through
// a store-and-forward buffer; downstream it verifies preset command envelopes
// and only then translates them into pump frames.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "siot/api.hpp"
#include "siot/pump.hpp"
#include "siot/record.hpp"
#include "siot/serial_link.hpp"

namespace siot::gateway {

struct GatewayConfig {
    Identifier device_id;
    Identifier patient_id;
    std::string cloud_endpoint;  // http://host:port
    std::string auth_token;
    Timestamp record_period = 3600;
    Timestamp poll_interval = 60;
    std::size_t buffer_capacity = 1024;

    // profile attached to every record
    std::string patient_name;
    CalendarDate date_of_birth;
    std::string medical_info;

    std::string pump_endpoint;  // host:port, socket mode only

    void validate() const;  // throws ConfigError
    PatientProfile profile() const { return {patient_id, patient_name, date_of_birth, medical_info}; }
};

using Environment = std::map<std::string, std::string>;

/// Reads GATEWAY_* variables from the process environment.
Environment gateway_environment();

/// `key = value` lines, '#' comments.  Variables named GATEWAY_<KEY> override
/// file values.  Throws ConfigError.
GatewayConfig parse_config(std::string_view text, const Environment& env = {});
GatewayConfig load_config(const std::filesystem::path& path, const Environment& env = {});

enum class FaultCode : std::uint8_t {
    SIGNATURE_MISMATCH,
    FRAME_ERROR,
    CLOUD_UNREACHABLE,
    PUMP_TIMEOUT,
    MALFORMED_PAYLOAD,
};

const char* to_string(FaultCode c);

struct FaultEvent {
    FaultCode code;
    Timestamp at = 0;
    std::string context;
};

/// Stand-in for the controller's fault exception mechanism: every fault is
/// recorded and handed to the installed handler.
class FaultLog {
  public:
    void raise(FaultCode code, Timestamp at, std::string context);

    const std::vector<FaultEvent>& events() const { return events_; }
    std::size_t count(FaultCode code) const;

    std::function<void(const FaultEvent&)> handler;

  private:
    std::vector<FaultEvent> events_;
};

/// FIFO of envelopes awaiting cloud acknowledgment.
class OutboundBuffer {
  public:
    explicit OutboundBuffer(std::size_t capacity);

    // Returns the envelope dropped to make room, if any.
    std::optional<SignedEnvelope> push(SignedEnvelope envelope);
    const SignedEnvelope& front() const { return queue_.front(); }
    void pop() { queue_.pop_front(); }

    std::size_t size() const { return queue_.size(); }
    bool empty() const { return queue_.empty(); }
    std::size_t capacity() const { return capacity_; }

  private:
    std::size_t capacity_;
    std::deque<SignedEnvelope> queue_;
};

/// Collects glucose/dose frames into period-aligned health records.
/// Periods are [start + k·period, start + (k+1)·period).
class Acquirer {
  public:
    Acquirer(PatientProfile profile, Timestamp period, Timestamp start);

    // Throws FrameError for frames that are not reports or fall before the
    // open period.  Frames for later periods are held until those close.
    void add(const pump::SerialFrame& frame);

    // Closes every period ending at or before `now`, empty ones included.
    std::vector<HealthRecord> close_through(Timestamp now);

    Timestamp period_start() const { return start_; }

  private:
    PatientProfile profile_;
    Timestamp period_;
    Timestamp start_;
    std::vector<GlucoseReading> readings_;
    std::vector<DoseEvent> doses_;
};

struct BackoffPolicy {
    Timestamp base = 1;
    Timestamp cap = 60;
    Timestamp delay(std::uint32_t failures) const;  // failures ≥ 1
};

inline constexpr auto kPumpAckTimeout = std::chrono::seconds(5);

struct GatewayStats {
    std::size_t records_built = 0;
    std::size_t records_delivered = 0;
    std::size_t records_dropped = 0;
    std::size_t commands_applied = 0;
    std::size_t commands_discarded = 0;
    std::size_t commands_failed = 0;
};

class Gateway {
  public:
    Gateway(GatewayConfig config, link::SerialPort& pump, CloudLink& cloud, Timestamp start);

    /// One chunk from the serial line (acquisition path).
    void on_serial_chunk(ByteView chunk);
    /// Drains whatever the serial port has ready.
    void service_serial(std::chrono::milliseconds timeout = std::chrono::milliseconds(0));

    /// Moves the gateway clock: closes finished periods (publishing their
    /// records), retries delivery when the backoff allows, polls commands
    /// when the poll interval has elapsed.
    void advance_to(Timestamp now);

    void publish(const HealthRecord& record);
    void flush();

    std::vector<PendingCommand> poll_commands();
    CommandOutcome handle_command(const PendingCommand& pending);

    const FaultLog& faults() const { return faults_; }
    FaultLog& faults() { return faults_; }
    const OutboundBuffer& outbound() const { return outbound_; }
    const GatewayStats& stats() const { return stats_; }
    const std::vector<std::uint64_t>& acknowledged_record_ids() const { return acked_ids_; }
    Timestamp now() const { return now_; }
    Timestamp latest_frame_time() const { return latest_frame_time_; }
    const GatewayConfig& config() const { return config_; }
    bool pump_link_closed() const { return pump_.closed(); }

  private:
    void mark_unreachable(const std::string& context);
    void mark_reachable();
    void send_pending_acks();
    CommandOutcome discard(const PendingCommand& pending, FaultCode code, const std::string& reason,
                           const std::optional<VerificationOutcome>& outcome);
    std::optional<pump::SerialFrame> transact(const pump::SerialFrame& frame);

    GatewayConfig config_;
    link::SerialPort& pump_;
    CloudLink& cloud_;
    Acquirer acquirer_;
    OutboundBuffer outbound_;
    FaultLog faults_;
    GatewayStats stats_;
    BackoffPolicy backoff_;

    Timestamp now_;
    Timestamp latest_frame_time_ = 0;
    bool link_down_ = false;
    std::uint32_t delivery_failures_ = 0;
    Timestamp next_delivery_attempt_ = 0;
    std::optional<Timestamp> last_poll_;
    std::deque<CommandReport> pending_acks_;
    std::vector<std::uint64_t> acked_ids_;
};

/// Socket-mode loop: serial input drives the clock (latest frame timestamp).
/// Returns when the pump link closes or `stop` is set.
void run_live(Gateway& gateway, const std::atomic<bool>& stop);

}  // namespace siot::gateway
