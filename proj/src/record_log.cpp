#include "siot/record_log.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace siot::cloud {

namespace {

[[noreturn]] void fail(const std::string& what, const std::filesystem::path& p) {
    throw StorageError(what + " " + p.string() + ": " + std::strerror(errno));
}

constexpr std::size_t kEntryFixed = 16;  // record_id + received_at

Bytes read_all(int fd, const std::filesystem::path& p) {
    Bytes data;
    std::uint8_t buf[1 << 16];
    for (;;) {
        const ssize_t n = ::read(fd, buf, sizeof buf);
        if (n < 0) {
            if (errno == EINTR) continue;
            fail("read", p);
        }
        if (n == 0) break;
        data.insert(data.end(), buf, buf + n);
    }
    return data;
}

// Parses whole entries from the front of `data`; returns bytes consumed.
std::size_t parse_entries(const Bytes& data, std::vector<LogEntry>& out) {
    std::size_t pos = 0;
    while (data.size() - pos >= 4) {
        ByteReader r(ByteView(data).subspan(pos));
        const std::uint32_t len = r.u32();
        if (len < kEntryFixed || r.remaining() < len) break;
        LogEntry e;
        e.record_id = r.u64();
        e.received_at = r.u64();
        auto env = r.raw(len - kEntryFixed);
        e.envelope.assign(env.begin(), env.end());
        out.push_back(std::move(e));
        pos += 4 + len;
    }
    return pos;
}

}  // namespace

LogReplay RecordLog::read_entries(const std::filesystem::path& path) {
    const int fd = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
    if (fd < 0) fail("open", path);
    Bytes data;
    try {
        data = read_all(fd, path);
    } catch (...) {
        ::close(fd);
        throw;
    }
    ::close(fd);
    LogReplay replay;
    replay.truncated_bytes = data.size() - parse_entries(data, replay.entries);
    return replay;
}

Bytes RecordLog::encode_entry(const LogEntry& e) {
    ByteWriter w;
    w.u32(static_cast<std::uint32_t>(kEntryFixed + e.envelope.size()));
    w.u64(e.record_id);
    w.u64(e.received_at);
    w.raw(e.envelope);
    return std::move(w).take();
}

RecordLog::RecordLog(std::filesystem::path path, bool sync, LogReplay& replay) : path_(std::move(path)), sync_(sync) {
    const bool existed = std::filesystem::exists(path_);
    fd_ = ::open(path_.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) fail("open", path_);
    if (!existed && sync_) {
        // make the new directory entry durable too
        const auto dir = path_.has_parent_path() ? path_.parent_path() : std::filesystem::path(".");
        const int dfd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC);
        if (dfd >= 0) {
            ::fsync(dfd);
            ::close(dfd);
        }
    }

    const Bytes data = read_all(fd_, path_);
    const std::size_t pos = parse_entries(data, replay.entries);
    if (pos < data.size()) {
        replay.truncated_bytes = data.size() - pos;
        if (::ftruncate(fd_, static_cast<off_t>(pos)) != 0) fail("truncate", path_);
        if (::fsync(fd_) != 0) fail("fsync", path_);
    }
    const off_t end = ::lseek(fd_, 0, SEEK_END);
    if (end < 0) fail("seek", path_);
    size_ = static_cast<std::uint64_t>(end);
}

RecordLog::~RecordLog() {
    if (fd_ >= 0) ::close(fd_);
}

void RecordLog::append(const LogEntry& entry) {
    const Bytes bytes = encode_entry(entry);
    std::size_t written = 0;
    while (written < bytes.size()) {
        const ssize_t n = ::write(fd_, bytes.data() + written, bytes.size() - written);
        if (n < 0) {
            if (errno == EINTR) continue;
            const int saved = errno;
            // drop the partial entry so the next append starts clean
            if (::ftruncate(fd_, static_cast<off_t>(size_)) == 0) ::lseek(fd_, 0, SEEK_END);
            errno = saved;
            fail("append", path_);
        }
        written += static_cast<std::size_t>(n);
    }
    if (sync_ && ::fdatasync(fd_) != 0) {
        const int saved = errno;
        if (::ftruncate(fd_, static_cast<off_t>(size_)) == 0) ::lseek(fd_, 0, SEEK_END);
        errno = saved;
        fail("fdatasync", path_);
    }
    size_ += bytes.size();
}

}  // namespace siot::cloud
