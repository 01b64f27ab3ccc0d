// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <atomic>
#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <thread>

#include "access_matrix.hpp"
#include "process.hpp"
#include "siot/bench.hpp"
#include "siot/cloud_links.hpp"
#include "siot/cloud_server.hpp"
#include "support.hpp"

using namespace siot;
using namespace siot::testing;
using namespace std::chrono_literals;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

SignedEnvelope random_envelope(std::mt19937_64& rng) {
    const auto r = random_record(rng);
    if (rng() % 2) return sign(r);
    return sign(random_command(rng, r.profile.patient_id));
}

// ---- 1: digest correctness and speed ----

Verdict sha256_vectors() {
    const auto t0 = std::chrono::steady_clock::now();
    const std::pair<std::string, const char*> vectors[] = {
        {"", "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"},
        {"abc", "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"},
        {"abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq",
         "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1"},
        {std::string(1'000'000, 'a'), "cdc76e5c9914fb9281a1c7e284d73e67f1809a48a497200e046d39ccc7112cd0"},
    };
    int vector_ok = 0;
    for (const auto& [msg, hex] : vectors) vector_ok += digest_of(msg) == Digest256::parse(hex);

    std::mt19937_64 rng(180'4);
    int oracle_ok = 0;
    for (int i = 0; i < 10'000; ++i) {
        const Bytes m = random_bytes(rng, rng() % 1024);
        oracle_ok += digest_of(m) == oracle_sha256(m);
    }
    const double t = seconds_since(t0);
    return {vector_ok == 4 && oracle_ok == 10'000 && t < 10.0,
            fmt("%d/4 reference vectors, %d/10000 oracle matches, %.3f s (limit 10 s)", vector_ok, oracle_ok, t)};
}

// ---- 2: sign, transmit, verify ----

Verdict parity() {
    std::mt19937_64 rng(2);
    int ok = 0;
    for (int i = 0; i < 1000; ++i) {
        const auto sent = sign(random_record(rng));
        const auto received = decode_envelope(encode_envelope(sent));
        const auto out = verify(received);
        ok += out.affirmed() && out.recomputed == out.appended && out.appended == oracle_sha256(sent.payload);
    }
    return {ok == 1000, fmt("%d/1000 affirmed with recomputed == appended", ok)};
}

// ---- 3: tamper detection ----

Verdict tamper() {
    std::mt19937_64 rng(3);
    int discarded = 0;
    int by_verify = 0;
    int by_framing = 0;
    for (int i = 0; i < 1000; ++i) {
        Bytes wire = encode_envelope(random_envelope(rng));
        const auto bit = rng() % (wire.size() * 8);
        wire[bit / 8] ^= static_cast<std::uint8_t>(0x80u >> (bit % 8));
        try {
            if (!verify(decode_envelope(wire)).affirmed()) {
                ++discarded;
                ++by_verify;
            }
        } catch (const MalformedPayload&) {
            // header bits: the frame no longer parses, so it never reaches a consumer
            ++discarded;
            ++by_framing;
        }
    }

    constexpr std::size_t kTampered = 3;
    bench::DemoOptions clean;
    clean.hours = 24;
    bench::DemoOptions attacked = clean;
    attacked.tamper_commands = kTampered;
    const auto base = bench::run_demo(clean);
    const auto r = bench::run_demo(attacked);
    const bool demo_ok = r.ok() && r.commands_discarded == kTampered && r.alerts == kTampered &&
                         r.final_schedule == base.final_schedule && r.final_schedule == r.expected_schedule;
    return {discarded == 1000 && demo_ok,
            fmt("%d/1000 flips discarded (%d by digest, %d by framing); demo K=%zu: %zu discarded, %zu alerts, "
                "schedule %s",
                discarded, by_verify, by_framing, kTampered, r.commands_discarded, r.alerts,
                r.final_schedule == base.final_schedule ? "unchanged" : "CHANGED")};
}

// ---- 4: end-to-end demo ----

Verdict end_to_end() {
    bench::DemoOptions o;
    o.hours = 24;
    o.seed = 1;
    const auto first = bench::run_demo(o);
    bool deterministic = true;
    double worst = first.wall_time;
    for (int i = 0; i < 2; ++i) {
        const auto again = bench::run_demo(o);
        deterministic = deterministic && again.counters() == first.counters();
        worst = std::max(worst, again.wall_time);
    }
    const bool ok = first.ok() && first.records_sent == 24 && first.records_affirmed == 24 && first.alerts == 0 &&
                    worst < 10.0 && deterministic;
    return {ok, fmt("%zu sent, %zu affirmed, %zu alerts, worst %.3f s (limit 10 s), counters %s across 3 runs",
                    first.records_sent, first.records_affirmed, first.alerts, worst,
                    deterministic ? "identical" : "DIFFER")};
}

// ---- 5: safety gate ----

class NullCloud final : public CloudLink {
  public:
    DeliveryResult post_record(const SignedEnvelope&) override { return {DeliveryStatus::stored, 1, {}}; }
    std::optional<std::vector<PendingCommand>> next_commands() override { return std::vector<PendingCommand>{}; }
    bool ack_command(const CommandReport&) override { return true; }
};

Bytes corrupt(std::mt19937_64& rng, Bytes wire) {
    const auto payload_end = wire.size() - kDigestBytes;
    switch (rng() % 6) {
        case 0: {  // single bit anywhere
            const auto bit = rng() % (wire.size() * 8);
            wire[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
            break;
        }
        case 1: {  // burst of bits in the payload
            for (int k = 0, n = 2 + static_cast<int>(rng() % 8); k < n; ++k) {
                wire[kEnvelopeHeaderBytes + rng() % (payload_end - kEnvelopeHeaderBytes)] ^=
                    static_cast<std::uint8_t>(1 + rng() % 255);
            }
            break;
        }
        case 2:  // digest replaced
            for (std::size_t i = payload_end; i < wire.size(); ++i) wire[i] = static_cast<std::uint8_t>(rng());
            break;
        case 3:  // truncated
            wire.resize(rng() % wire.size());
            break;
        case 4:  // trailing junk
            wire.push_back(static_cast<std::uint8_t>(rng()));
            break;
        default:  // noise
            wire = random_bytes(rng, rng() % 200);
            break;
    }
    return wire;
}

Verdict safety_gate() {
    const auto cast = bench::demo_cast(1);
    NullCloud cloud;
    bench::Bench bench(bench::demo_gateway_config(cast), bench::demo_pump_state(1), cloud);
    bench.start();
    const auto before = bench.pump().state();

    std::mt19937_64 rng(5);
    constexpr int kTrials = 10'000;
    int discarded = 0;
    for (int i = 0; i < kTrials; ++i) {
        PresetCommand c = random_command(rng, cast.profile.patient_id);
        if (rng() % 4 == 0) {
            c.kind = rng() % 2 ? CommandKind::power_off : CommandKind::power_on;
            c.schedule.clear();
        }
        Bytes wire = encode_envelope(sign(c));
        Bytes bad;
        do {
            bad = corrupt(rng, wire);
        } while (bad == wire);
        discarded += bench.gateway().handle_command({c.command_id, bad}) == CommandOutcome::discarded;
    }
    const auto& after = bench.pump().state();
    const bool unchanged = after.schedule == before.schedule && after.power == before.power &&
                           bench.pump().state_changes() == 0;

    // control: a genuine command does move the instrumented counter
    PresetCommand genuine{random_id(rng), cast.profile.patient_id, bench::kDemoStart, CommandKind::set_schedule,
                          {{0, 1234}}};
    const auto control = bench.gateway().handle_command({genuine.command_id, encode_envelope(sign(genuine))});
    const bool control_ok = control == CommandOutcome::applied && bench.pump().state_changes() == 1;

    return {unchanged && discarded == kTrials && control_ok,
            fmt("%d/%d corrupted commands discarded; pump state changes %s; control command %s", discarded, kTrials,
                unchanged ? "0" : "NONZERO", control_ok ? "applied" : "NOT APPLIED")};
}

// ---- 6: durability across kill -9 ----

Verdict durability() {
    TempDir dir;
    const auto data = dir.path() / "data";
    const auto port_file = dir.path() / "cloud.port";
    const auto log = dir.path() / "cloud.log";
    const auto cast = bench::demo_cast(1);

    auto spawn = [&](const std::string& listen) {
        std::filesystem::remove(port_file);
        return std::make_unique<Child>(std::vector<std::string>{cli_path(), "cloud", "--demo-principals", "--listen",
                                                                listen, "--data-dir", data.string(), "--port-file",
                                                                port_file.string()},
                                       log);
    };
    auto cloud = spawn("127.0.0.1:0");
    const int port = read_port_file(port_file);
    const std::string endpoint = "http://127.0.0.1:" + std::to_string(port);

    // extra writer so the kill lands while appends are in flight
    std::atomic<bool> stop_writer{false};
    std::vector<std::uint64_t> writer_acked;
    std::thread writer([&] {
        cloud::HttpCloudLink link(endpoint, cast.device_token, cast.device_id);
        std::mt19937_64 rng(6);
        for (Timestamp h = 0; !stop_writer; ++h) {
            HealthRecord r;
            r.profile = cast.profile;
            r.period_start = bench::kDemoStart + 3600 * (1000 + h);
            r.period_end = r.period_start + 3600;
            r.readings = {{r.period_start, static_cast<std::uint16_t>(40 + rng() % 300)}};
            const auto res = link.post_record(sign(r));
            if (res.status == DeliveryStatus::stored) writer_acked.push_back(res.record_id);
        }
    });

    cloud::HttpCloudLink link(endpoint, cast.device_token, cast.device_id);
    bench::Bench bench(bench::demo_gateway_config(cast), bench::demo_pump_state(1), link);
    bench.start();
    bench.run_for(10 * 3600);
    std::this_thread::sleep_for(200ms);
    const int killed = cloud->kill_hard();
    stop_writer = true;
    writer.join();

    bench.run_for(3 * 3600);  // outage: the gateway buffers
    const auto buffered = bench.gateway().outbound().size();
    cloud = spawn("127.0.0.1:" + std::to_string(port));
    read_port_file(port_file);
    bench.run_for(11 * 3600 + 600);
    cloud->signal(SIGTERM);
    const auto stopped = cloud->wait(10s);

    cloud::CloudStore store(bench::demo_principals(cast), cloud::StoreOptions{data, nullptr, false});
    const auto& physician = store.authenticate(cast.physician_token);
    const auto stored = store.fetch_records(cast.profile.patient_id, 0, ~Timestamp{0}, physician);
    std::set<std::uint64_t> present;
    for (const auto& r : stored) {
        if (verify(decode_envelope(r.envelope_bytes)).affirmed()) present.insert(r.record_id);
    }
    std::size_t lost = 0;
    std::size_t acked = 0;
    const std::vector<std::uint64_t>* sources[] = {&bench.gateway().acknowledged_record_ids(), &writer_acked};
    for (const auto* ids : sources) {
        for (const auto id : *ids) {
            ++acked;
            lost += present.count(id) == 0;
        }
    }
    const auto audit = store.audit();
    const auto& gw = bench.gateway().stats();
    const bool ok = killed == 128 + SIGKILL && stopped == 0 && buffered > 0 && gw.records_delivered == 24 &&
                    lost == 0 && audit.clean() && audit.checked == stored.size() && store.recovery().rejected_entries == 0;
    return {ok, fmt("killed mid-run with %zu records buffered; %zu acknowledged, %zu lost; audit %zu/%zu affirmed%s; "
                    "torn bytes cut %llu; gateway delivered %zu/24",
                    buffered, acked, lost, audit.affirmed, audit.checked, audit.clean() ? "" : " (PROBLEMS)",
                    static_cast<unsigned long long>(store.recovery().truncated_bytes), gw.records_delivered)};
}

// ---- 7: access matrix ----

Verdict access_matrix() {
    const auto cast = bench::demo_cast(1);
    cloud::CloudStore store(bench::demo_principals(cast));
    cloud::CloudServer server(store);
    const auto port = server.bind("127.0.0.1", 0);
    server.start();
    const auto cells = AccessMatrix("127.0.0.1", port, cast).run();
    int ok = 0;
    std::string misses;
    for (const auto& c : cells) {
        if (c.ok()) {
            ++ok;
        } else {
            misses += fmt("; %s %s expected %d got %d %s", c.role.c_str(), c.endpoint.c_str(), c.expected, c.observed,
                          c.note.c_str());
        }
    }
    server.stop();
    return {ok == 18 && cells.size() == 18, fmt("%d/%zu cells match the authorization table", ok, cells.size()) + misses};
}

}  // namespace

int main() {
    const std::pair<const char*, std::function<Verdict()>> criteria[] = {
        {"sha256 reference vectors and oracle agreement", sha256_vectors},
        {"sign-transmit-verify parity", parity},
        {"tamper detection", tamper},
        {"end-to-end 24 h demo", end_to_end},
        {"command safety gate", safety_gate},
        {"durability across kill -9", durability},
        {"access matrix", access_matrix},
    };
    int failed = 0;
    int n = 0;
    for (const auto& [name, check] : criteria) {
        ++n;
        Verdict v;
        try {
            v = check();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        failed += !v.pass;
        std::printf("%s [%d] %s: %s\n", v.pass ? "PASS" : "FAIL", n, name, v.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%d criteria passed\n", n - failed, n);
    return failed ? 1 : 0;
}
