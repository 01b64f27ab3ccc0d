#pragma once

// Append-only per-patient log.  Entry layout:
//   u32 entry length (bytes that follow) ‖ u64 record_id ‖ u64 received_at ‖ SIOT envelope
// Opening a log replays it; a torn tail left by a crash is cut off.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "siot/record.hpp"

namespace siot::cloud {

struct LogEntry {
    std::uint64_t record_id = 0;
    Timestamp received_at = 0;
    Bytes envelope;  // raw SIOT bytes as ingested
};

struct LogReplay {
    std::vector<LogEntry> entries;
    std::uint64_t truncated_bytes = 0;  // torn tail removed during open
};

class RecordLog {
  public:
    // Creates the file if missing, replays existing entries.  Throws StorageError.
    RecordLog(std::filesystem::path path, bool sync, LogReplay& replay);
    ~RecordLog();
    RecordLog(const RecordLog&) = delete;
    RecordLog& operator=(const RecordLog&) = delete;

    // Durable once this returns (fdatasync when `sync`).
    void append(const LogEntry& entry);

    const std::filesystem::path& path() const { return path_; }

    static Bytes encode_entry(const LogEntry& entry);
    /// Read-only replay; a torn tail is reported but left in place.
    static LogReplay read_entries(const std::filesystem::path& path);

  private:
    std::filesystem::path path_;
    int fd_ = -1;
    bool sync_;
    std::uint64_t size_ = 0;
};

}  // namespace siot::cloud
