#include <doctest.h>

#include <sys/resource.h>

#include <csignal>
#include <fstream>
#include <limits>
#include <random>
#include <thread>

#include "siot/cloud.hpp"
#include "siot/record_log.hpp"
#include "support.hpp"

using namespace siot;
using namespace siot::cloud;
using namespace siot::testing;

namespace {

constexpr auto kForever = std::numeric_limits<Timestamp>::max();

const Identifier kPatientA = Identifier::parse("aaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaa");
const Identifier kPatientB = Identifier::parse("bbbbbbbbbbbbbbbbbbbbbbbbbbbbbbbb");
const Identifier kDeviceA = Identifier::parse("0000000000000000000000000000000a");
const Identifier kDeviceB = Identifier::parse("0000000000000000000000000000000b");

PrincipalRegistry registry() {
    PrincipalRegistry r;
    r.add({"gw-a", "tok-device-a", Role::device, {kPatientA}, kDeviceA});
    r.add({"gw-b", "tok-device-b", Role::device, {kPatientB}, kDeviceB});
    r.add({"dr", "tok-physician", Role::physician, {kPatientA, kPatientB}, std::nullopt});
    r.add({"dr-b", "tok-physician-b", Role::physician, {kPatientB}, std::nullopt});
    r.add({"lab", "tok-researcher", Role::researcher, {kPatientA}, std::nullopt});
    return r;
}

HealthRecord record_for(const Identifier& patient, Timestamp start) {
    HealthRecord r;
    r.profile.patient_id = patient;
    r.profile.name = "P";
    r.period_start = start;
    r.period_end = start + 3600;
    r.readings = {{start, 100}, {start + 300, 104}};
    r.doses = {{start, 900, DoseOrigin::scheduled}};
    return r;
}

PresetCommand command_for(const Identifier& patient, std::uint8_t tag) {
    Identifier::Storage id{};
    id[0] = tag;
    return {Identifier(id), patient, 1000, CommandKind::set_schedule, {{0, 900}}};
}

struct Fixture {
    Timestamp clock = 5000;
    CloudStore store;
    const Principal& device_a;
    const Principal& device_b;
    const Principal& physician;
    const Principal& physician_b;
    const Principal& researcher;

    explicit Fixture(std::optional<std::filesystem::path> dir = std::nullopt)
        : store(registry(), StoreOptions{dir, [this] { return clock; }, true}),
          device_a(store.authenticate("tok-device-a")),
          device_b(store.authenticate("tok-device-b")),
          physician(store.authenticate("tok-physician")),
          physician_b(store.authenticate("tok-physician-b")),
          researcher(store.authenticate("tok-researcher")) {}
};

}  // namespace

TEST_SUITE("cloud_store") {

TEST_CASE("principals") {
    Fixture f;
    CHECK_THROWS_AS(f.store.authenticate(""), Unauthorized);
    CHECK_THROWS_AS(f.store.authenticate("nope"), Unauthorized);

    PrincipalRegistry r;
    r.add({"a", "t", Role::physician, {}, std::nullopt});
    CHECK_THROWS_AS(r.add({"b", "t", Role::physician, {}, std::nullopt}), ConfigError);
    CHECK_THROWS_AS(r.add({"c", "", Role::physician, {}, std::nullopt}), ConfigError);
    CHECK_THROWS_AS(r.add({"d", "u", Role::device, {}, std::nullopt}), ConfigError);

    const auto j = nlohmann::json::parse(R"({"principals": [
        {"id": "gw", "token": "x", "role": "device", "scope": ["aaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaa"],
         "device_id": "0000000000000000000000000000000a"},
        {"id": "lab", "token": "y", "role": "researcher", "scope": []}]})");
    const auto reg = principals_from_json(j);
    CHECK(reg.all().size() == 2);
    CHECK(reg.authenticate("x").covers(kPatientA));
    CHECK(reg.authenticate("y").role == Role::researcher);
    CHECK_THROWS_AS(principals_from_json(nlohmann::json::parse(R"({"principals":[{"id":"a","token":"t","role":"admin"}]})")),
                    ConfigError);
}

TEST_CASE("ingest then fetch returns byte-identical envelopes in id order") {
    Fixture f;
    std::vector<Bytes> sent;
    for (int h = 0; h < 24; ++h) {
        const auto e = sign(record_for(kPatientA, 3600 * h));
        sent.push_back(encode_envelope(e));
        CHECK(f.store.ingest_record(e, f.device_a) == static_cast<std::uint64_t>(h + 1));
    }
    const auto got = f.store.fetch_records(kPatientA, 0, kForever, f.physician);
    REQUIRE(got.size() == 24);
    for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].envelope_bytes == sent[i]);
        CHECK(got[i].record_id == i + 1);
        CHECK(got[i].received_at == 5000);
        CHECK(digest_of(decode_envelope(got[i].envelope_bytes).payload) == got[i].envelope.digest);
    }
    CHECK(f.store.fetch_records(kPatientA, 0, kForever, f.researcher).size() == 24);
    CHECK(f.store.fetch_records(kPatientA, 3600 * 30, kForever, f.physician).empty());
    // overlap: [7200, 7300] touches the record covering [7200, 10800]
    const auto some = f.store.fetch_records(kPatientA, 7200, 7300, f.physician);
    REQUIRE_FALSE(some.empty());
    for (const auto& r : some) CHECK((r.period_end >= 7200 && r.period_start <= 7300));
    CHECK(f.store.fetch_records(kPatientB, 0, kForever, f.physician).empty());
    CHECK(f.store.audit().clean());
    CHECK(f.store.audit().checked == 24);
}

TEST_CASE("binary ingest path") {
    Fixture f;
    const Bytes wire = encode_envelope(sign(record_for(kPatientA, 0)));
    CHECK(f.store.ingest_record_bytes(wire, f.device_a) == 1);
    CHECK_THROWS_AS(f.store.ingest_record_bytes(Bytes{1, 2, 3}, f.device_a), MalformedPayload);
}

TEST_CASE("tampered records are rejected with one alert and never stored") {
    Fixture f;
    auto e = sign(record_for(kPatientA, 0));
    e.payload[12] ^= 0x20;
    CHECK_THROWS_AS(f.store.ingest_record(e, f.device_a), IntegrityRejected);
    CHECK(f.store.fetch_records(kPatientA, 0, kForever, f.physician).empty());
    CHECK(f.store.record_count() == 0);
    const auto alerts = f.store.list_alerts(f.physician);
    REQUIRE(alerts.size() == 1);
    CHECK(alerts[0].source == AlertSource::ingest);
    CHECK(alerts[0].expected == e.digest);
    CHECK(alerts[0].observed == digest_of(e.payload));
    CHECK(alerts[0].expected != alerts[0].observed);
}

TEST_CASE("ingest rejects commands and out-of-scope records") {
    Fixture f;
    CHECK_THROWS_AS(f.store.ingest_record(sign(command_for(kPatientA, 1)), f.device_a), MalformedPayload);
    CHECK_THROWS_AS(f.store.ingest_record(sign(record_for(kPatientB, 0)), f.device_a), Unauthorized);
    CHECK_THROWS_AS(f.store.ingest_record(sign(record_for(kPatientA, 0)), f.researcher), Unauthorized);
    CHECK_THROWS_AS(f.store.ingest_record(sign(record_for(kPatientA, 0)), f.physician), Unauthorized);
    CHECK(f.store.record_count() == 0);
    CHECK(f.store.list_alerts(f.physician).empty());
}

TEST_CASE("reads and commands honour role and scope") {
    Fixture f;
    CHECK_THROWS_AS(f.store.fetch_records(kPatientA, 0, kForever, f.device_a), Unauthorized);
    CHECK_THROWS_AS(f.store.fetch_records(kPatientB, 0, kForever, f.researcher), Unauthorized);
    CHECK_THROWS_AS(f.store.fetch_records(kPatientA, 0, kForever, f.physician_b), Unauthorized);
    CHECK_THROWS_AS(f.store.issue_command(command_for(kPatientA, 1), f.researcher), Unauthorized);
    CHECK_THROWS_AS(f.store.issue_command(command_for(kPatientA, 1), f.device_a), Unauthorized);
    CHECK_THROWS_AS(f.store.issue_command(command_for(kPatientA, 1), f.physician_b), Unauthorized);
    CHECK_THROWS_AS(f.store.next_commands(kDeviceA, f.physician), Unauthorized);
    CHECK_THROWS_AS(f.store.next_commands(kDeviceA, f.device_b), Unauthorized);
    CHECK_THROWS_AS(f.store.list_alerts(f.researcher), Unauthorized);
    CHECK_THROWS_AS(f.store.list_alerts(f.device_a), Unauthorized);
}

TEST_CASE("command ticket lifecycle") {
    Fixture f;
    const auto c1 = command_for(kPatientA, 1);
    const auto c2 = command_for(kPatientA, 2);
    const auto cb = command_for(kPatientB, 3);
    auto t = f.store.issue_command(c1, f.physician);
    CHECK(t.state == TicketState::queued);
    CHECK(t.issued_by == "dr");
    CHECK(verify(t.envelope).affirmed());
    f.store.issue_command(c2, f.physician);
    f.store.issue_command(cb, f.physician);
    CHECK_THROWS_AS(f.store.issue_command(c1, f.physician), DuplicateCommand);

    CommandReport early{c1.command_id, CommandOutcome::applied, {}, {}, {}, {}};
    CHECK_THROWS_AS(f.store.ack_command(early, f.device_a), InvalidTransition);

    const auto batch = f.store.next_commands(kDeviceA, f.device_a);
    REQUIRE(batch.size() == 2);
    CHECK(batch[0].command_id == c1.command_id);
    CHECK(batch[1].command_id == c2.command_id);
    CHECK(decode_envelope(batch[0].envelope_bytes) == sign(c1));
    CHECK(f.store.next_commands(kDeviceA, f.device_a).empty());
    CHECK(f.store.ticket(c1.command_id, f.physician).state == TicketState::delivered);
    CHECK(f.store.ticket(cb.command_id, f.physician).state == TicketState::queued);

    CHECK(f.store.ack_command({c1.command_id, CommandOutcome::applied, {}, {}, {}, {}}, f.device_a).state ==
          TicketState::applied);
    CHECK_THROWS_AS(f.store.ack_command({c1.command_id, CommandOutcome::discarded, {}, {}, {}, {}}, f.device_a),
                    InvalidTransition);
    CHECK_THROWS_AS(f.store.ack_command({command_for(kPatientA, 99).command_id, CommandOutcome::applied, {}, {}, {}, {}},
                                        f.device_a),
                    UnknownCommand);
    CHECK_THROWS_AS(f.store.ack_command({cb.command_id, CommandOutcome::applied, {}, {}, {}, {}}, f.device_a),
                    Unauthorized);
    CHECK(f.store.list_alerts(f.physician).empty());

    // a reported discard is an alert carrying both digests
    auto tampered = sign(c2);
    tampered.payload[20] ^= 1;
    CommandReport discard{c2.command_id, CommandOutcome::discarded, tampered.digest, digest_of(tampered.payload),
                          digest_of(encode_envelope(tampered)), "digest mismatch"};
    f.clock = 6000;
    CHECK(f.store.ack_command(discard, f.device_a).state == TicketState::discarded_by_gateway);
    const auto alerts = f.store.list_alerts(f.physician);
    REQUIRE(alerts.size() == 1);
    CHECK(alerts[0].source == AlertSource::gateway_report);
    CHECK(alerts[0].at == 6000);
    CHECK(alerts[0].expected == sign(c2).digest);
    CHECK(alerts[0].observed == digest_of(tampered.payload));
    CHECK(alerts[0].expected != alerts[0].observed);
}

TEST_CASE("failed commands end in the failed state without an alert") {
    Fixture f;
    const auto c = command_for(kPatientA, 1);
    f.store.issue_command(c, f.physician);
    f.store.next_commands(kDeviceA, f.device_a);
    CHECK(f.store.ack_command({c.command_id, CommandOutcome::failed, {}, {}, {}, "pump timeout"}, f.device_a).state ==
          TicketState::failed);
    CHECK(f.store.list_alerts(f.physician).empty());
}

TEST_CASE("alerts are listed newest first") {
    Fixture f;
    for (int i = 0; i < 3; ++i) {
        f.clock = 100 + i;
        auto e = sign(record_for(kPatientA, 0));
        e.payload[10] ^= 1;
        CHECK_THROWS_AS(f.store.ingest_record(e, f.device_a), IntegrityRejected);
    }
    const auto alerts = f.store.list_alerts(f.physician);
    REQUIRE(alerts.size() == 3);
    CHECK(alerts[0].at == 102);
    CHECK(alerts[2].at == 100);
}

TEST_CASE("signed commands from elsewhere must verify") {
    Fixture f;
    const auto c = command_for(kPatientA, 1);
    CHECK(f.store.issue_signed_command(sign(c), f.physician).state == TicketState::queued);
    auto bad = sign(command_for(kPatientA, 2));
    bad.payload[30] ^= 1;
    CHECK_THROWS_AS(f.store.issue_signed_command(bad, f.physician), IntegrityRejected);
    CHECK_THROWS_AS(f.store.issue_signed_command(sign(record_for(kPatientA, 0)), f.physician), MalformedPayload);
}

TEST_CASE("records survive a restart") {
    TempDir dir;
    {
        Fixture f(dir.path());
        for (int h = 0; h < 5; ++h) f.store.ingest_record(sign(record_for(kPatientA, 3600 * h)), f.device_a);
        f.store.ingest_record(sign(record_for(kPatientB, 0)), f.device_b);
    }
    Fixture f(dir.path());
    CHECK(f.store.recovery().files == 2);
    CHECK(f.store.recovery().entries == 6);
    CHECK(f.store.recovery().truncated_bytes == 0);
    CHECK(f.store.record_count() == 6);
    CHECK(f.store.ingest_record(sign(record_for(kPatientA, 3600 * 5)), f.device_a) == 6);
    const auto audit = f.store.audit();
    CHECK(audit.clean());
    CHECK(audit.checked == 7);
}

TEST_CASE("a torn tail is cut off on open") {
    TempDir dir;
    std::filesystem::path log;
    {
        Fixture f(dir.path());
        for (int h = 0; h < 3; ++h) f.store.ingest_record(sign(record_for(kPatientA, 3600 * h)), f.device_a);
        log = dir.path() / ("patient-" + kPatientA.to_string() + ".log");
    }
    const auto clean_size = std::filesystem::file_size(log);
    {
        // half of a fourth entry, as left by a crash mid-write
        const Bytes entry = RecordLog::encode_entry({4, 1, encode_envelope(sign(record_for(kPatientA, 10800)))});
        std::ofstream out(log, std::ios::binary | std::ios::app);
        out.write(reinterpret_cast<const char*>(entry.data()), static_cast<std::streamsize>(entry.size() / 2));
    }
    CHECK(RecordLog::read_entries(log).truncated_bytes > 0);
    Fixture f(dir.path());
    CHECK(f.store.recovery().entries == 3);
    CHECK(f.store.recovery().truncated_bytes > 0);
    CHECK(std::filesystem::file_size(log) == clean_size);
    CHECK(f.store.ingest_record(sign(record_for(kPatientA, 10800)), f.device_a) == 4);
    CHECK(f.store.audit().clean());
    CHECK(RecordLog::read_entries(log).entries.size() == 4);
}

TEST_CASE("a corrupted stored entry is reported by recovery and audit") {
    TempDir dir;
    const auto log = dir.path() / ("patient-" + kPatientA.to_string() + ".log");
    {
        Fixture f(dir.path());
        for (int h = 0; h < 2; ++h) f.store.ingest_record(sign(record_for(kPatientA, 3600 * h)), f.device_a);
    }
    {
        std::fstream io(log, std::ios::binary | std::ios::in | std::ios::out);
        io.seekp(40);
        io.put('\x55');
    }
    Fixture f(dir.path());
    CHECK(f.store.recovery().rejected_entries == 1);
    CHECK(f.store.record_count() == 1);
    CHECK_FALSE(f.store.audit().clean());
}

TEST_CASE("a failed append leaves the log as it was") {
    TempDir dir;
    Fixture f(dir.path());
    f.store.ingest_record(sign(record_for(kPatientA, 0)), f.device_a);
    const auto log = dir.path() / ("patient-" + kPatientA.to_string() + ".log");
    const auto before = std::filesystem::file_size(log);

    rlimit saved{};
    REQUIRE(::getrlimit(RLIMIT_FSIZE, &saved) == 0);
    auto* old_handler = std::signal(SIGXFSZ, SIG_IGN);
    rlimit tight = saved;
    tight.rlim_cur = before + 20;  // room for a fragment of the next entry only
    REQUIRE(::setrlimit(RLIMIT_FSIZE, &tight) == 0);
    CHECK_THROWS_AS(f.store.ingest_record(sign(record_for(kPatientA, 3600)), f.device_a), StorageError);
    ::setrlimit(RLIMIT_FSIZE, &saved);
    std::signal(SIGXFSZ, old_handler);

    CHECK(std::filesystem::file_size(log) == before);
    CHECK(f.store.record_count() == 1);
    CHECK(f.store.ingest_record(sign(record_for(kPatientA, 3600)), f.device_a) == 2);
    CHECK(f.store.audit().clean());
}

TEST_CASE("concurrent ingest and reads keep ids strictly increasing") {
    TempDir dir;
    Timestamp clock = 1;
    CloudStore store(registry(), StoreOptions{dir.path(), [&clock] { return clock; }, false});
    const auto& dev_a = store.authenticate("tok-device-a");
    const auto& dev_b = store.authenticate("tok-device-b");
    const auto& dr = store.authenticate("tok-physician");
    std::atomic<bool> done{false};
    std::atomic<std::size_t> bad_reads{0};

    std::vector<std::thread> writers;
    for (int w = 0; w < 4; ++w) {
        writers.emplace_back([&, w] {
            const auto& who = w % 2 ? dev_b : dev_a;
            const auto patient = w % 2 ? kPatientB : kPatientA;
            for (int i = 0; i < 50; ++i) store.ingest_record(sign(record_for(patient, 3600 * (w * 100 + i))), who);
        });
    }
    std::thread reader([&] {
        while (!done) {
            const auto rs = store.fetch_records(kPatientA, 0, kForever, dr);
            for (std::size_t i = 1; i < rs.size(); ++i) {
                if (rs[i].record_id <= rs[i - 1].record_id) ++bad_reads;
            }
            if (!store.audit().problems.empty()) ++bad_reads;
        }
    });
    for (auto& t : writers) t.join();
    done = true;
    reader.join();

    CHECK(bad_reads == 0);
    const auto a = store.fetch_records(kPatientA, 0, kForever, dr);
    REQUIRE(a.size() == 100);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].record_id == i + 1);
    CHECK(store.fetch_records(kPatientB, 0, kForever, dr).size() == 100);
    CHECK(store.audit().clean());
}

}  // TEST_SUITE
