#include "siot/cloud_server.hpp"

#include <httplib.h>

#include <limits>

#include "siot/record_json.hpp"

namespace siot::cloud {

using nlohmann::json;

namespace {

constexpr const char* kJson = "application/json";

void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), kJson);
}

void reply_error(httplib::Response& res, int status, const std::string& message) {
    reply(res, status, {{"error", message}});
}

std::string bearer_token(const httplib::Request& req) {
    const auto header = req.get_header_value("Authorization");
    constexpr std::string_view kPrefix = "Bearer ";
    if (header.size() <= kPrefix.size() || header.compare(0, kPrefix.size(), kPrefix) != 0) return {};
    return header.substr(kPrefix.size());
}

Timestamp query_time(const httplib::Request& req, const char* key, Timestamp fallback) {
    if (!req.has_param(key)) return fallback;
    const auto v = req.get_param_value(key);
    if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
        throw ParseError(std::string("query parameter ") + key + " must be a non-negative integer");
    }
    try {
        return std::stoull(v);
    } catch (const std::exception&) {
        throw ParseError(std::string("query parameter ") + key + " out of range");
    }
}

std::optional<Digest256> optional_digest(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return Digest256::parse(j.at(key).get<std::string>());
}

// Runs `body`, translating store errors into status codes.
template <typename F>
void guarded(httplib::Response& res, F&& body) {
    try {
        body();
    } catch (const Unauthorized& e) {
        reply_error(res, 401, e.what());
    } catch (const IntegrityRejected& e) {
        reply_error(res, 422, e.what());
    } catch (const DuplicateCommand& e) {
        reply_error(res, 409, e.what());
    } catch (const InvalidTransition& e) {
        reply_error(res, 409, e.what());
    } catch (const UnknownCommand& e) {
        reply_error(res, 404, e.what());
    } catch (const MalformedPayload& e) {
        reply_error(res, 422, e.what());
    } catch (const InvariantViolation& e) {
        reply_error(res, 422, e.what());
    } catch (const EncodingOverflow& e) {
        reply_error(res, 422, e.what());
    } catch (const ParseError& e) {
        reply_error(res, 400, e.what());
    } catch (const json::exception& e) {
        reply_error(res, 400, e.what());
    } catch (const std::exception& e) {
        reply_error(res, 500, e.what());
    }
}

}  // namespace

json to_json(const StoredRecord& r) {
    return {{"record_id", r.record_id},
            {"received_at", r.received_at},
            {"patient_id", r.patient_id.to_string()},
            {"period_start", r.period_start},
            {"period_end", r.period_end},
            {"envelope", base64_encode(r.envelope_bytes)},
            {"digest", format_digest(r.envelope.digest)}};
}

json to_json(const CommandTicket& t) {
    return {{"command_id", t.command_id.to_string()},
            {"patient_id", t.patient_id.to_string()},
            {"state", to_string(t.state)},
            {"issued_by", t.issued_by},
            {"issued_at", t.issued_at},
            {"envelope", base64_encode(encode_envelope(t.envelope))},
            {"digest", format_digest(t.envelope.digest)}};
}

json to_json(const TamperAlert& a) {
    return {{"at", a.at},
            {"source", to_string(a.source)},
            {"expected", format_digest(a.expected)},
            {"observed", format_digest(a.observed)},
            {"context", a.context}};
}

json to_json(const CommandReport& r) {
    json j = {{"outcome", to_string(r.outcome)}, {"reason", r.reason}};
    if (r.appended) j["appended"] = format_digest(*r.appended);
    if (r.recomputed) j["recomputed"] = format_digest(*r.recomputed);
    if (r.received_digest) j["received_digest"] = format_digest(*r.received_digest);
    return j;
}

CommandReport command_report_from_json(const Identifier& command_id, const json& j) {
    CommandReport r;
    r.command_id = command_id;
    r.outcome = parse_command_outcome(j.at("outcome").get<std::string>());
    r.appended = optional_digest(j, "appended");
    r.recomputed = optional_digest(j, "recomputed");
    r.received_digest = optional_digest(j, "received_digest");
    r.reason = j.value("reason", "");
    return r;
}

CloudServer::CloudServer(CloudStore& store) : store_(store), server_(std::make_unique<httplib::Server>()) {
    install_routes();
}

CloudServer::~CloudServer() { stop(); }

std::uint16_t CloudServer::bind(const std::string& host, std::uint16_t port) {
    if (port == 0) {
        const int p = server_->bind_to_any_port(host);
        if (p <= 0) throw IoError("cannot bind " + host);
        return static_cast<std::uint16_t>(p);
    }
    if (!server_->bind_to_port(host, port)) throw IoError("cannot bind " + host + ":" + std::to_string(port));
    return port;
}

void CloudServer::run() { server_->listen_after_bind(); }

void CloudServer::start() {
    thread_ = std::thread([this] { run(); });
    server_->wait_until_ready();
}

void CloudServer::stop() {
    server_->stop();
    if (thread_.joinable()) thread_.join();
}

void CloudServer::install_routes() {
    auto& s = *server_;

    // the physician console is served from a different origin
    s.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                           {"Access-Control-Allow-Headers", "Authorization, Content-Type"},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    s.Options(R"(/api/v1/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    s.Post("/api/v1/records", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto& who = store_.authenticate(bearer_token(req));
            std::uint64_t id;
            if (req.get_header_value("Content-Type") == "application/octet-stream") {
                id = store_.ingest_record_bytes(as_bytes(req.body), who);
            } else {
                id = store_.ingest_record(envelope_from_json(json::parse(req.body)), who);
            }
            reply(res, 201, {{"record_id", id}});
        });
    });

    s.Get(R"(/api/v1/patients/([0-9a-fA-F]{32})/records)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto& who = store_.authenticate(bearer_token(req));
            const auto patient = Identifier::parse(req.matches[1].str());
            const auto from = query_time(req, "from", 0);
            const auto to = query_time(req, "to", std::numeric_limits<Timestamp>::max());
            json records = json::array();
            for (const auto& r : store_.fetch_records(patient, from, to, who)) records.push_back(to_json(r));
            reply(res, 200, {{"records", records}});
        });
    });

    s.Post("/api/v1/commands", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto& who = store_.authenticate(bearer_token(req));
            const auto body = json::parse(req.body);
            CommandTicket t;
            if (body.contains("envelope")) {
                t = store_.issue_signed_command(envelope_from_json(body), who);
            } else {
                t = store_.issue_command(preset_command_from_json(body.contains("command") ? body.at("command") : body),
                                         who);
            }
            reply(res, 201, to_json(t));
        });
    });

    s.Get(R"(/api/v1/commands/([0-9a-fA-F]{32}))", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto& who = store_.authenticate(bearer_token(req));
            reply(res, 200, to_json(store_.ticket(Identifier::parse(req.matches[1].str()), who)));
        });
    });

    s.Get(R"(/api/v1/devices/([0-9a-fA-F]{32})/commands/next)",
          [this](const httplib::Request& req, httplib::Response& res) {
              guarded(res, [&] {
                  const auto& who = store_.authenticate(bearer_token(req));
                  json commands = json::array();
                  for (const auto& c : store_.next_commands(Identifier::parse(req.matches[1].str()), who)) {
                      commands.push_back(
                          {{"command_id", c.command_id.to_string()}, {"envelope", base64_encode(c.envelope_bytes)}});
                  }
                  reply(res, 200, {{"commands", commands}});
              });
          });

    s.Post(R"(/api/v1/commands/([0-9a-fA-F]{32})/ack)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto& who = store_.authenticate(bearer_token(req));
            const auto report = command_report_from_json(Identifier::parse(req.matches[1].str()), json::parse(req.body));
            reply(res, 200, to_json(store_.ack_command(report, who)));
        });
    });

    s.Get("/api/v1/alerts", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto& who = store_.authenticate(bearer_token(req));
            json alerts = json::array();
            for (const auto& a : store_.list_alerts(who)) alerts.push_back(to_json(a));
            reply(res, 200, {{"alerts", alerts}});
        });
    });
}

}  // namespace siot::cloud
