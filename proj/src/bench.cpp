#include "siot/bench.hpp"

#include <chrono>
#include <limits>
#include <random>

#include "siot/cloud_links.hpp"

namespace siot::bench {

std::optional<std::vector<PendingCommand>> TamperingLink::next_commands() {
    auto commands = inner_.next_commands();
    if (!commands) return commands;
    for (auto& c : *commands) {
        const auto it = targets_.find(c.command_id);
        if (it == targets_.end()) continue;
        const std::size_t payload_bytes = c.envelope_bytes.size() - kEnvelopeHeaderBytes - kDigestBytes;
        const std::size_t bit = it->second % (payload_bytes * 8);
        c.envelope_bytes[kEnvelopeHeaderBytes + bit / 8] ^= static_cast<std::uint8_t>(0x80u >> (bit % 8));
        ++tampered_;
    }
    return commands;
}

Bench::Bench(gateway::GatewayConfig config, pump::PumpState pump, CloudLink& cloud)
    : pump_(pump, serial_.pump_end()), gateway_(std::move(config), serial_.gateway_end(), cloud, pump.clock) {
    serial_.on_pump_rx = [this] { pump_.service(); };
}

void Bench::start() { gateway_.advance_to(now()); }

void Bench::run_for(Timestamp seconds) {
    while (seconds > 0) {
        const Timestamp dt = std::min(seconds, kPumpStep);
        pump_.advance(dt);
        gateway_.service_serial();
        gateway_.advance_to(now());
        seconds -= dt;
    }
}

namespace {

// Fresh bytes per call; the engine is seeded once per cast.
Identifier draw_id(std::mt19937_64& rng) {
    Identifier::Storage b{};
    for (std::size_t i = 0; i < b.size(); i += 8) {
        const auto v = rng();
        for (std::size_t k = 0; k < 8; ++k) b[i + k] = static_cast<std::uint8_t>(v >> (56 - 8 * k));
    }
    return Identifier(b);
}

}  // namespace

DemoCast demo_cast(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    DemoCast cast;
    cast.profile.patient_id = draw_id(rng);
    cast.profile.name = "Demo Patient";
    cast.profile.date_of_birth = {1984, 6, 15};
    cast.profile.medical_info = "type 1 diabetes; continuous subcutaneous insulin infusion";
    cast.device_id = draw_id(rng);
    return cast;
}

cloud::PrincipalRegistry demo_principals(const DemoCast& cast) {
    cloud::PrincipalRegistry reg;
    const std::set<Identifier> scope{cast.profile.patient_id};
    reg.add({"gateway-1", cast.device_token, cloud::Role::device, scope, cast.device_id});
    reg.add({"dr-demo", cast.physician_token, cloud::Role::physician, scope, std::nullopt});
    reg.add({"lab-demo", cast.researcher_token, cloud::Role::researcher, scope, std::nullopt});
    return reg;
}

gateway::GatewayConfig demo_gateway_config(const DemoCast& cast) {
    gateway::GatewayConfig c;
    c.device_id = cast.device_id;
    c.patient_id = cast.profile.patient_id;
    c.auth_token = cast.device_token;
    c.patient_name = cast.profile.name;
    c.date_of_birth = cast.profile.date_of_birth;
    c.medical_info = cast.profile.medical_info;
    return c;
}

pump::PumpState demo_pump_state(std::uint64_t seed, Timestamp start) {
    pump::PumpState s;
    s.schedule = demo_initial_schedule();
    s.clock = start;
    s.seed = seed;
    return s;
}

Schedule demo_initial_schedule() { return {{0, 800}, {360, 1000}, {1320, 700}}; }

Schedule demo_command_schedule() { return {{0, 900}, {420, 1200}, {1200, 850}}; }

nlohmann::json DemoReport::counters() const {
    return {{"records_sent", records_sent},         {"records_affirmed", records_affirmed},
            {"commands_issued", commands_issued},   {"commands_applied", commands_applied},
            {"commands_discarded", commands_discarded}, {"alerts", alerts}};
}

nlohmann::json DemoReport::to_json() const {
    auto j = counters();
    j["wall_time"] = wall_time;
    j["ok"] = ok();
    j["failures"] = failures;
    return j;
}

DemoReport run_demo(const DemoOptions& options) {
    const auto t0 = std::chrono::steady_clock::now();
    DemoReport report;

    if (options.data_dir && std::filesystem::exists(*options.data_dir) &&
        !std::filesystem::is_empty(*options.data_dir)) {
        throw ConfigError("demo data directory must be empty: " + options.data_dir->string());
    }

    const auto cast = demo_cast(options.seed);
    const Bench* clock_source = nullptr;
    cloud::StoreOptions store_options;
    store_options.data_dir = options.data_dir;
    store_options.clock = [&clock_source] { return clock_source ? clock_source->now() : kDemoStart; };
    cloud::CloudStore store(demo_principals(cast), store_options);
    const auto& physician = store.authenticate(cast.physician_token);

    cloud::DirectCloudLink direct([&store] { return &store; }, cast.device_token, cast.device_id);
    TamperingLink link(direct);

    // one genuine schedule change, then K forgeries that only differ in flight
    std::mt19937_64 rng(options.seed ^ 0x5349'4f54'0000'0000ULL);
    std::vector<Identifier> command_ids;
    PresetCommand valid{draw_id(rng), cast.profile.patient_id, kDemoStart, CommandKind::set_schedule,
                        demo_command_schedule()};
    store.issue_command(valid, physician);
    command_ids.push_back(valid.command_id);
    for (std::size_t k = 0; k < options.tamper_commands; ++k) {
        PresetCommand forged{draw_id(rng), cast.profile.patient_id, kDemoStart, CommandKind::set_schedule,
                             {{0, 5000 + static_cast<std::uint32_t>(k)}}};
        const auto ticket = store.issue_command(forged, physician);
        link.target(ticket.command_id, static_cast<std::size_t>(rng()));
        command_ids.push_back(ticket.command_id);
    }
    report.commands_issued = command_ids.size();
    report.expected_schedule = valid.schedule;

    Bench bench(demo_gateway_config(cast), demo_pump_state(options.seed), link);
    clock_source = &bench;
    bench.start();
    bench.run_for(options.hours * 3600);
    // a last poll pass so late acks settle
    bench.gateway().advance_to(bench.now());

    report.records_sent = bench.gateway().stats().records_delivered;
    const auto fetched =
        store.fetch_records(cast.profile.patient_id, 0, std::numeric_limits<Timestamp>::max(), physician);
    for (const auto& r : fetched) {
        // both sides: re-hash what the cloud hands back
        const auto envelope = decode_envelope(r.envelope_bytes);
        if (verify(envelope).affirmed() && envelope.payload_type == PayloadType::health_record) {
            ++report.records_affirmed;
        }
    }
    for (const auto& id : command_ids) {
        const auto state = store.ticket(id, physician).state;
        if (state == cloud::TicketState::applied) ++report.commands_applied;
        if (state == cloud::TicketState::discarded_by_gateway) ++report.commands_discarded;
    }
    report.alerts = store.list_alerts(physician).size();
    report.final_schedule = bench.pump().state().schedule;

    auto& f = report.failures;
    const auto& stats = bench.gateway().stats();
    if (stats.records_built != options.hours) {
        f.push_back("expected " + std::to_string(options.hours) + " records built, got " +
                    std::to_string(stats.records_built));
    }
    if (report.records_sent != stats.records_built) f.push_back("not every record reached the cloud");
    if (fetched.size() != report.records_sent) f.push_back("fetched record count differs from records sent");
    if (report.records_affirmed != report.records_sent) f.push_back("a fetched record failed re-verification");
    if (report.commands_applied != 1) f.push_back("the valid command was not applied");
    if (report.commands_discarded != options.tamper_commands) f.push_back("not every tampered command was discarded");
    if (link.tampered() != options.tamper_commands) f.push_back("tamper injection count mismatch");
    if (report.alerts != options.tamper_commands) f.push_back("alert count differs from tampered commands");
    if (report.final_schedule != report.expected_schedule) f.push_back("pump schedule differs from the valid command");
    const auto& faults = bench.gateway().faults();
    if (faults.count(gateway::FaultCode::SIGNATURE_MISMATCH) != options.tamper_commands) {
        f.push_back("gateway signature fault count differs from tampered commands");
    }
    if (faults.events().size() != faults.count(gateway::FaultCode::SIGNATURE_MISMATCH)) {
        f.push_back("unexpected gateway faults");
    }

    report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

}  // namespace siot::bench
