#pragma once

// Shared test fixtures: reference oracles and random generators.

#include <openssl/sha.h>

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "siot/hash.hpp"
#include "siot/record.hpp"

namespace siot::testing {

/// libcrypto's SHA-256, used only as an independent oracle.
inline Digest256 oracle_sha256(ByteView data) {
    std::array<std::uint8_t, 32> out{};
    SHA256(data.data(), data.size(), out.data());
    return Digest256::from_bytes(out);
}

/// Table-driven CRC-16/CCITT-FALSE (poly 0x1021, init 0xFFFF), independent of
/// the bitwise implementation under test.
inline std::uint16_t oracle_crc16(ByteView data) {
    static const auto table = [] {
        std::array<std::uint16_t, 256> t{};
        for (unsigned i = 0; i < 256; ++i) {
            std::uint16_t c = static_cast<std::uint16_t>(i << 8);
            for (int k = 0; k < 8; ++k) c = static_cast<std::uint16_t>((c & 0x8000) ? (c << 1) ^ 0x1021 : (c << 1));
            t[i] = c;
        }
        return t;
    }();
    std::uint16_t crc = 0xFFFF;
    for (auto b : data) crc = static_cast<std::uint16_t>((crc << 8) ^ table[((crc >> 8) ^ b) & 0xFF]);
    return crc;
}

inline Bytes random_bytes(std::mt19937_64& rng, std::size_t n) {
    Bytes b(n);
    for (auto& x : b) x = static_cast<std::uint8_t>(rng());
    return b;
}

inline Identifier random_id(std::mt19937_64& rng) {
    Identifier::Storage s{};
    for (auto& x : s) x = static_cast<std::uint8_t>(rng());
    return Identifier(s);
}

inline std::string random_text(std::mt19937_64& rng, std::size_t max_len) {
    static const char* pieces[] = {"a", "Z", "0", " ", "-", "é", "ß", "日本", "\xF0\x9F\x92\x89"};
    std::string s;
    const auto n = rng() % (max_len + 1);
    while (s.size() < n) {
        std::string next = pieces[rng() % std::size(pieces)];
        if (s.size() + next.size() > max_len) break;
        s += next;
    }
    return s;
}

/// A valid health record with a random profile and an hour of readings/doses.
inline HealthRecord random_record(std::mt19937_64& rng) {
    HealthRecord r;
    r.profile.patient_id = random_id(rng);
    r.profile.name = random_text(rng, 40);
    r.profile.date_of_birth = {static_cast<std::uint16_t>(1920 + rng() % 100), static_cast<std::uint8_t>(1 + rng() % 12),
                               static_cast<std::uint8_t>(1 + rng() % 28)};
    r.profile.medical_info = random_text(rng, 200);
    r.period_start = 1'700'000'000 + (rng() % 1'000'000);
    r.period_end = r.period_start + 3600;
    Timestamp t = r.period_start;
    const auto readings = rng() % 20;
    for (std::uint64_t i = 0; i < readings && t < r.period_end; ++i) {
        r.readings.push_back({t, static_cast<std::uint16_t>(kMinGlucose + rng() % (kMaxGlucose - kMinGlucose + 1))});
        t += 1 + rng() % 300;
    }
    t = r.period_start;
    const auto doses = rng() % 4;
    for (std::uint64_t i = 0; i < doses && t < r.period_end; ++i) {
        r.doses.push_back({t, static_cast<std::uint32_t>(1 + rng() % 5000), rng() % 2 ? DoseOrigin::manual : DoseOrigin::scheduled});
        t += 1 + rng() % 900;
    }
    return r;
}

inline Schedule random_schedule(std::mt19937_64& rng, std::size_t max_entries = 8) {
    Schedule s;
    std::uint16_t minute = static_cast<std::uint16_t>(rng() % 60);
    const auto n = 1 + rng() % max_entries;
    for (std::uint64_t i = 0; i < n && minute < kMinutesPerDay; ++i) {
        s.push_back({minute, static_cast<std::uint32_t>(rng() % 3000)});
        minute = static_cast<std::uint16_t>(minute + 1 + rng() % 180);
    }
    return s;
}

inline PresetCommand random_command(std::mt19937_64& rng, const Identifier& patient) {
    PresetCommand c;
    c.command_id = random_id(rng);
    c.patient_id = patient;
    c.issued_at = 1'700'000'000 + rng() % 1'000'000;
    c.kind = CommandKind::set_schedule;
    c.schedule = random_schedule(rng);
    return c;
}

/// Fresh directory removed on scope exit.
class TempDir {
  public:
    TempDir() {
        static std::atomic<unsigned> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("siot-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }

  private:
    std::filesystem::path path_;
};

}  // namespace siot::testing
