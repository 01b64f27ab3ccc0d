// siot: operator entry points for the hash, envelope, demo and component
// processes.  Exit codes: 0 ok, 1 integrity failure, 2 usage or I/O error.

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>
#include <thread>

#include "siot/bench.hpp"
#include "siot/cloud.hpp"
#include "siot/cloud_links.hpp"
#include "siot/cloud_server.hpp"
#include "siot/gateway.hpp"
#include "siot/hash.hpp"
#include "siot/pump_device.hpp"
#include "siot/record.hpp"
#include "siot/record_json.hpp"
#include "siot/serial_link.hpp"

namespace {

using namespace siot;
namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitIntegrity = 1;
constexpr int kExitUsage = 2;

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

void install_signal_handlers() {
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::signal(SIGPIPE, SIG_IGN);
}

Bytes read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

Bytes read_stdin() {
    std::cin >> std::noskipws;
    return Bytes(std::istreambuf_iterator<char>(std::cin), std::istreambuf_iterator<char>());
}

void write_file(const fs::path& path, ByteView bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + path.string());
}

// Renamed into place so a watcher never sees a partial file.
void write_file_atomic(const fs::path& path, const std::string& text) {
    const fs::path tmp = path.string() + ".tmp";
    write_file(tmp, as_bytes(text));
    fs::rename(tmp, path);
}

json parse_json(const Bytes& bytes, const std::string& source) {
    try {
        return json::parse(bytes.begin(), bytes.end());
    } catch (const json::exception& e) {
        throw ParseError(source + ": " + e.what());
    }
}

/// Binary SIOT file, or JSON carrying {"envelope": base64}.
SignedEnvelope load_envelope(const fs::path& path) {
    const Bytes bytes = read_file(path);
    if (bytes.size() >= 4 && std::equal(bytes.begin(), bytes.begin() + 4, "SIOT")) return decode_envelope(bytes);
    return envelope_from_json(parse_json(bytes, path.string()));
}

SignedEnvelope sign_payload(const Payload& payload) {
    return std::visit([](const auto& p) { return sign(p); }, payload);
}

// ---- hash ----

int cmd_hash(const std::string& path) {
    const Bytes data = (path.empty() || path == "-") ? read_stdin() : read_file(path);
    std::cout << format_digest(digest_of(data)) << "\n";
    return kExitOk;
}

// ---- sign / verify / tamper ----

struct SignArgs {
    std::vector<std::string> inputs;
    std::string output;
    std::string golden;
    bool json_out = false;
};

int cmd_sign(const SignArgs& a) {
    if (!a.output.empty() && a.inputs.size() != 1) throw ConfigError("--output needs exactly one input");
    json vectors = json::array();
    for (const auto& in : a.inputs) {
        const json input = parse_json(read_file(in), in);
        const auto payload = payload_from_json(input);
        const auto envelope = sign_payload(payload);
        const Bytes wire = encode_envelope(envelope);
        if (!a.golden.empty()) {
            vectors.push_back({{"name", fs::path(in).stem().string()},
                               {"input", input},
                               {"canonical_payload", to_hex(envelope.payload)},
                               {"envelope", base64_encode(wire)},
                               {"digest", format_digest(envelope.digest)}});
            continue;
        }
        fs::path out = a.output.empty() ? fs::path(in).replace_extension(".siot") : fs::path(a.output);
        if (a.json_out) {
            write_file(out, as_bytes(envelope_to_json(envelope).dump(2) + "\n"));
        } else {
            write_file(out, wire);
        }
        std::cout << format_digest(envelope.digest) << "  " << out.string() << "\n";
    }
    if (!a.golden.empty()) {
        const json doc = {{"algorithm", "SHA-256"}, {"envelope_version", kEnvelopeVersion}, {"vectors", vectors}};
        write_file(a.golden, as_bytes(doc.dump(2) + "\n"));
        std::cout << vectors.size() << " vectors written to " << a.golden << "\n";
    }
    return kExitOk;
}

int cmd_verify(const std::string& path) {
    const auto envelope = load_envelope(path);
    const auto outcome = verify(envelope);
    std::cout << "type:       " << to_string(envelope.payload_type) << "\n"
              << "appended:   " << format_digest(outcome.appended) << "\n"
              << "recomputed: " << format_digest(outcome.recomputed) << "\n"
              << (outcome.affirmed() ? "AFFIRMED" : "DISCARDED") << "\n";
    return outcome.affirmed() ? kExitOk : kExitIntegrity;
}

struct TamperArgs {
    std::string input;
    std::optional<std::size_t> flip_bit;
    std::string set_byte;
    std::string output;
};

int cmd_tamper(const TamperArgs& a) {
    Bytes wire = read_file(a.input);
    // structure check only; the digest is expected to mismatch on re-tamper
    const auto envelope = decode_envelope(wire);
    const std::size_t payload_bytes = envelope.payload.size();
    if (a.flip_bit.has_value() == !a.set_byte.empty()) throw ConfigError("give exactly one of --flip-bit, --set-byte");

    // offsets are payload-relative; bit 0 is the most significant bit of payload byte 0
    if (a.flip_bit) {
        const std::size_t n = *a.flip_bit;
        if (n >= payload_bytes * 8) {
            throw ConfigError("bit " + std::to_string(n) + " is outside the payload (" +
                              std::to_string(payload_bytes * 8) + " bits)");
        }
        wire[kEnvelopeHeaderBytes + n / 8] ^= static_cast<std::uint8_t>(0x80u >> (n % 8));
    } else {
        const auto eq = a.set_byte.find('=');
        if (eq == std::string::npos) throw ConfigError("--set-byte expects OFF=VAL");
        std::size_t off = 0;
        unsigned long val = 0;
        try {
            off = std::stoul(a.set_byte.substr(0, eq), nullptr, 0);
            val = std::stoul(a.set_byte.substr(eq + 1), nullptr, 0);
        } catch (const std::exception&) {
            throw ConfigError("--set-byte expects numeric OFF=VAL");
        }
        if (off >= payload_bytes) {
            throw ConfigError("offset " + std::to_string(off) + " is outside the payload (" +
                              std::to_string(payload_bytes) + " bytes)");
        }
        if (val > 0xFF) throw ConfigError("--set-byte value must fit in one byte");
        wire[kEnvelopeHeaderBytes + off] = static_cast<std::uint8_t>(val);
    }
    const fs::path out = a.output.empty() ? fs::path(a.input + ".tampered") : fs::path(a.output);
    write_file(out, wire);
    std::cout << out.string() << "\n";
    return kExitOk;
}

// ---- demo ----

struct DemoArgs {
    std::uint64_t hours = 24;
    std::size_t tamper = 0;
    std::string data_dir;
    bool json_out = false;
};

int cmd_demo(const DemoArgs& a, std::uint64_t seed) {
    bench::DemoOptions o;
    o.hours = a.hours;
    o.tamper_commands = a.tamper;
    o.seed = seed;
    if (!a.data_dir.empty()) o.data_dir = a.data_dir;
    const auto r = bench::run_demo(o);
    if (a.json_out) {
        std::cout << r.to_json().dump(2) << "\n";
    } else {
        std::printf("records_sent        %zu\n", r.records_sent);
        std::printf("records_affirmed    %zu\n", r.records_affirmed);
        std::printf("commands_issued     %zu\n", r.commands_issued);
        std::printf("commands_applied    %zu\n", r.commands_applied);
        std::printf("commands_discarded  %zu\n", r.commands_discarded);
        std::printf("alerts              %zu\n", r.alerts);
        std::printf("wall_time           %.3f s\n", r.wall_time);
        for (const auto& f : r.failures) std::printf("FAILURE: %s\n", f.c_str());
        std::printf("%s\n", r.ok() ? "OK" : "FAILED");
    }
    return r.ok() ? kExitOk : kExitIntegrity;
}

// ---- component processes ----

struct CloudArgs {
    std::string listen = "127.0.0.1:8080";
    std::string data_dir;
    std::string port_file;
    bool demo_principals = false;
    bool no_sync = false;
};

int cmd_cloud(const CloudArgs& a, const std::string& config, std::uint64_t seed) {
    if (config.empty() == !a.demo_principals) throw ConfigError("give exactly one of --config, --demo-principals");
    auto principals = a.demo_principals ? bench::demo_principals(bench::demo_cast(seed)) : cloud::load_principals(config);
    cloud::StoreOptions options;
    if (!a.data_dir.empty()) options.data_dir = a.data_dir;
    options.sync = !a.no_sync;
    cloud::CloudStore store(std::move(principals), options);
    const auto& rec = store.recovery();
    std::cerr << "recovered " << rec.entries << " records from " << rec.files << " logs";
    if (rec.truncated_bytes) std::cerr << ", cut " << rec.truncated_bytes << " torn bytes";
    if (rec.rejected_entries) std::cerr << ", " << rec.rejected_entries << " entries failed re-verification";
    std::cerr << "\n";

    const auto [host, port] = link::split_host_port(a.listen);
    cloud::CloudServer server(store);
    const auto bound = server.bind(host, port);
    install_signal_handlers();
    server.start();
    std::cerr << "listening on " << host << ":" << bound << "\n";
    if (!a.port_file.empty()) write_file_atomic(a.port_file, std::to_string(bound) + "\n");
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(50));
    server.stop();
    return kExitOk;
}

struct PumpArgs {
    std::string listen = "127.0.0.1:7000";
    std::string port_file;
    Timestamp start = bench::kDemoStart;
    Timestamp step = bench::kPumpStep;
    unsigned real_ms = 50;
    std::uint64_t hours = 0;
};

int cmd_pump(const PumpArgs& a, std::uint64_t seed) {
    if (a.step == 0) throw ConfigError("--step must be > 0");
    const auto [host, port] = link::split_host_port(a.listen);
    link::TcpListener listener(host, port);
    install_signal_handlers();
    std::cerr << "pump listening on " << host << ":" << listener.port() << "\n";
    if (!a.port_file.empty()) write_file_atomic(a.port_file, std::to_string(listener.port()) + "\n");

    std::optional<link::TcpSerialPort> conn;
    while (!conn && !g_stop) conn = listener.accept(std::chrono::milliseconds(200));
    if (!conn) return kExitOk;

    pump::PumpDevice device(bench::demo_pump_state(seed, a.start), *conn);
    pump::run_live(device, a.step, std::chrono::milliseconds(a.real_ms), a.hours * 3600, g_stop);
    const auto& s = device.state();
    std::cerr << "pump stopped at " << s.clock << ", delivered " << s.delivered << " mU, " << device.frames_received()
              << " frames received\n";
    return kExitOk;
}

struct GatewayArgs {
    bool demo = false;
    std::string pump;
    std::string cloud;
    Timestamp start = bench::kDemoStart;
};

int cmd_gateway(const GatewayArgs& a, const std::string& config, std::uint64_t seed) {
    if (config.empty() == !a.demo) throw ConfigError("give exactly one of --config, --demo");
    auto cfg = a.demo ? bench::demo_gateway_config(bench::demo_cast(seed))
                      : gateway::load_config(config, gateway::gateway_environment());
    if (!a.pump.empty()) cfg.pump_endpoint = a.pump;
    if (!a.cloud.empty()) cfg.cloud_endpoint = a.cloud;
    if (cfg.pump_endpoint.empty()) throw ConfigError("pump_endpoint is not set");
    if (cfg.cloud_endpoint.empty()) throw ConfigError("cloud_endpoint is not set");

    const auto [host, port] = link::split_host_port(cfg.pump_endpoint);
    auto serial = link::TcpSerialPort::connect(host, port, std::chrono::seconds(10));
    cloud::HttpCloudLink cloud_link(cfg.cloud_endpoint, cfg.auth_token, cfg.device_id);
    gateway::Gateway gw(cfg, serial, cloud_link, a.start);
    gw.faults().handler = [](const gateway::FaultEvent& e) {
        std::cerr << "fault " << gateway::to_string(e.code) << " at " << e.at << ": " << e.context << "\n";
    };
    install_signal_handlers();
    gateway::run_live(gw, g_stop);
    const auto& st = gw.stats();
    std::cerr << "gateway stopped: built " << st.records_built << ", delivered " << st.records_delivered
              << ", buffered " << gw.outbound().size() << ", commands applied " << st.commands_applied
              << ", discarded " << st.commands_discarded << ", failed " << st.commands_failed << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Signed health record and insulin pump command toolkit"};
    app.require_subcommand(1);
    app.fallthrough();  // inherited by subcommands created below
    std::string config;
    std::uint64_t seed = 1;
    app.add_option("--config", config, "Configuration file for the chosen subcommand");
    app.add_option("--seed", seed, "Seed for simulated data and demo identities");

    std::string hash_path;
    auto* hash = app.add_subcommand("hash", "Print the SHA-256 digest of a file (stdin if omitted)");
    hash->add_option("path", hash_path);

    SignArgs sign_args;
    auto* sign_cmd = app.add_subcommand("sign", "Sign JSON payloads into SIOT envelopes");
    sign_cmd->add_option("inputs", sign_args.inputs, "Payload JSON files")->required();
    sign_cmd->add_option("-o,--output", sign_args.output, "Envelope path (default: input with .siot)");
    sign_cmd->add_flag("--json", sign_args.json_out, "Write {envelope, digest} JSON instead of binary");
    sign_cmd->add_option("--golden", sign_args.golden, "Write a golden vector file for all inputs instead");

    std::string verify_path;
    auto* verify_cmd = app.add_subcommand("verify", "Recompute and compare an envelope digest");
    verify_cmd->add_option("envelope", verify_path)->required();

    TamperArgs tamper_args;
    auto* tamper = app.add_subcommand("tamper", "Write a modified copy of an envelope");
    tamper->add_option("envelope", tamper_args.input)->required();
    tamper->add_option("--flip-bit", tamper_args.flip_bit, "Payload bit to invert (0 = MSB of first byte)");
    tamper->add_option("--set-byte", tamper_args.set_byte, "Payload byte to overwrite, OFF=VAL");
    tamper->add_option("-o,--output", tamper_args.output, "Output path (default: <envelope>.tampered)");

    DemoArgs demo_args;
    auto* demo = app.add_subcommand("demo", "Run pump, gateway and cloud in-process on simulated time");
    demo->add_option("--hours", demo_args.hours, "Simulated hours");
    demo->add_option("--tamper-commands", demo_args.tamper, "Commands to corrupt in transit");
    demo->add_option("--data-dir", demo_args.data_dir, "Persist the cloud store here (must be empty)");
    demo->add_flag("--json", demo_args.json_out, "Print the report as JSON");

    CloudArgs cloud_args;
    auto* cloud_cmd = app.add_subcommand("cloud", "Serve the cloud store HTTP API");
    cloud_cmd->add_option("--listen", cloud_args.listen, "host:port (port 0 picks one)");
    cloud_cmd->add_option("--data-dir", cloud_args.data_dir, "Directory for per-patient logs");
    cloud_cmd->add_option("--port-file", cloud_args.port_file, "Write the bound port here");
    cloud_cmd->add_flag("--demo-principals", cloud_args.demo_principals, "Use the demo principals for --seed");
    cloud_cmd->add_flag("--no-sync", cloud_args.no_sync, "Skip fdatasync on append");

    PumpArgs pump_args;
    auto* pump_cmd = app.add_subcommand("pump", "Run the pump simulator behind a TCP serial line");
    pump_cmd->add_option("--listen", pump_args.listen, "host:port (port 0 picks one)");
    pump_cmd->add_option("--port-file", pump_args.port_file, "Write the bound port here");
    pump_cmd->add_option("--start", pump_args.start, "Simulated start time (Unix seconds)");
    pump_cmd->add_option("--step", pump_args.step, "Simulated seconds per step");
    pump_cmd->add_option("--real-ms", pump_args.real_ms, "Wall milliseconds per step");
    pump_cmd->add_option("--hours", pump_args.hours, "Stop after this many simulated hours (0 = run until signalled)");

    GatewayArgs gw_args;
    auto* gw_cmd = app.add_subcommand("gateway", "Bridge a TCP pump to the cloud HTTP API");
    gw_cmd->add_flag("--demo", gw_args.demo, "Use the demo identity for --seed instead of --config");
    gw_cmd->add_option("--pump", gw_args.pump, "Pump host:port (overrides config)");
    gw_cmd->add_option("--cloud", gw_args.cloud, "Cloud base URL (overrides config)");
    gw_cmd->add_option("--start", gw_args.start, "Simulated start time matching the pump");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*hash) return cmd_hash(hash_path);
        if (*sign_cmd) return cmd_sign(sign_args);
        if (*verify_cmd) return cmd_verify(verify_path);
        if (*tamper) return cmd_tamper(tamper_args);
        if (*demo) return cmd_demo(demo_args, seed);
        if (*cloud_cmd) return cmd_cloud(cloud_args, config, seed);
        if (*pump_cmd) return cmd_pump(pump_args, seed);
        if (*gw_cmd) return cmd_gateway(gw_args, config, seed);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
