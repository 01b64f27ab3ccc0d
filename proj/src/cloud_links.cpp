#include "siot/cloud_links.hpp"

#include <httplib.h>

#include "siot/cloud_server.hpp"
#include "siot/record_json.hpp"

namespace siot::cloud {

using nlohmann::json;

namespace {

constexpr const char* kJson = "application/json";

std::string describe(const httplib::Result& res) {
    if (!res) return "transport error: " + httplib::to_string(res.error());
    return "HTTP " + std::to_string(res->status) + " " + res->body;
}

}  // namespace

HttpCloudLink::HttpCloudLink(const std::string& endpoint, std::string token, Identifier device_id)
    : client_(std::make_unique<httplib::Client>(endpoint)), token_(std::move(token)), device_id_(device_id) {
    if (!client_->is_valid()) throw ConfigError("invalid cloud endpoint: " + endpoint);
    client_->set_bearer_token_auth(token_);
    client_->set_connection_timeout(std::chrono::seconds(2));
    client_->set_read_timeout(std::chrono::seconds(10));
    client_->set_write_timeout(std::chrono::seconds(10));
}

HttpCloudLink::~HttpCloudLink() = default;

DeliveryResult HttpCloudLink::post_record(const SignedEnvelope& envelope) {
    const auto res = client_->Post("/api/v1/records", envelope_to_json(envelope).dump(), kJson);
    if (res && res->status == 201) {
        try {
            return {DeliveryStatus::stored, json::parse(res->body).at("record_id").get<std::uint64_t>(), {}};
        } catch (const json::exception& e) {
            return {DeliveryStatus::unreachable, 0, std::string("bad response: ") + e.what()};
        }
    }
    // 422 is final; anything else may succeed later
    if (res && res->status == 422) return {DeliveryStatus::rejected, 0, describe(res)};
    return {DeliveryStatus::unreachable, 0, describe(res)};
}

std::optional<std::vector<PendingCommand>> HttpCloudLink::next_commands() {
    const auto res = client_->Get("/api/v1/devices/" + device_id_.to_string() + "/commands/next");
    if (!res || res->status != 200) return std::nullopt;
    try {
        const auto body = json::parse(res->body);
        std::vector<PendingCommand> out;
        for (const auto& c : body.at("commands")) {
            out.push_back({Identifier::parse(c.at("command_id").get<std::string>()),
                           base64_decode(c.at("envelope").get<std::string>())});
        }
        return out;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

bool HttpCloudLink::ack_command(const CommandReport& report) {
    const auto res = client_->Post("/api/v1/commands/" + report.command_id.to_string() + "/ack",
                                   to_json(report).dump(), kJson);
    if (!res) return false;
    // 404/409: the cloud will never accept this report, so stop retrying
    return res->status == 200 || res->status == 404 || res->status == 409;
}

HttpApiClient::HttpApiClient(const std::string& endpoint, std::string token)
    : client_(std::make_unique<httplib::Client>(endpoint)) {
    if (!client_->is_valid()) throw ConfigError("invalid cloud endpoint: " + endpoint);
    client_->set_bearer_token_auth(token);
    client_->set_connection_timeout(std::chrono::seconds(2));
    client_->set_read_timeout(std::chrono::seconds(10));
}

HttpApiClient::~HttpApiClient() = default;

json HttpApiClient::expect(const char* what, int status, const httplib::Result& res) {
    if (!res) throw IoError(std::string(what) + ": " + describe(res));
    if (res->status != status) throw Error(std::string(what) + ": " + describe(res));
    try {
        return json::parse(res->body);
    } catch (const json::exception& e) {
        throw ParseError(std::string(what) + ": bad response body: " + e.what());
    }
}

json HttpApiClient::issue_command(const PresetCommand& command) {
    const auto res = client_->Post("/api/v1/commands", json{{"command", to_json(command)}}.dump(), kJson);
    return expect("issue command", 201, res);
}

json HttpApiClient::issue_signed_command(const SignedEnvelope& envelope) {
    const auto res = client_->Post("/api/v1/commands", envelope_to_json(envelope).dump(), kJson);
    return expect("issue command", 201, res);
}

json HttpApiClient::ticket(const Identifier& command_id) {
    const auto res = client_->Get("/api/v1/commands/" + command_id.to_string());
    return expect("ticket", 200, res);
}

std::vector<SignedEnvelope> HttpApiClient::fetch_records(const Identifier& patient, Timestamp from, Timestamp to) {
    const auto res = client_->Get("/api/v1/patients/" + patient.to_string() + "/records?from=" + std::to_string(from) +
                                  "&to=" + std::to_string(to));
    const auto body = expect("fetch records", 200, res);
    std::vector<SignedEnvelope> out;
    for (const auto& r : body.at("records")) out.push_back(envelope_from_json(r));
    return out;
}

json HttpApiClient::alerts() {
    const auto res = client_->Get("/api/v1/alerts");
    return expect("alerts", 200, res).at("alerts");
}

DirectCloudLink::DirectCloudLink(Resolver store, std::string token, Identifier device_id)
    : store_(std::move(store)), token_(std::move(token)), device_id_(device_id) {}

DeliveryResult DirectCloudLink::post_record(const SignedEnvelope& envelope) {
    CloudStore* store = store_();
    if (!store) return {DeliveryStatus::unreachable, 0, "cloud offline"};
    try {
        const auto& who = store->authenticate(token_);
        return {DeliveryStatus::stored, store->ingest_record(envelope, who), {}};
    } catch (const IntegrityRejected& e) {
        return {DeliveryStatus::rejected, 0, e.what()};
    } catch (const MalformedPayload& e) {
        return {DeliveryStatus::rejected, 0, e.what()};
    } catch (const InvariantViolation& e) {
        return {DeliveryStatus::rejected, 0, e.what()};
    } catch (const std::exception& e) {
        return {DeliveryStatus::unreachable, 0, e.what()};
    }
}

std::optional<std::vector<PendingCommand>> DirectCloudLink::next_commands() {
    CloudStore* store = store_();
    if (!store) return std::nullopt;
    try {
        return store->next_commands(device_id_, store->authenticate(token_));
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

bool DirectCloudLink::ack_command(const CommandReport& report) {
    CloudStore* store = store_();
    if (!store) return false;
    try {
        store->ack_command(report, store->authenticate(token_));
        return true;
    } catch (const UnknownCommand&) {
        return true;
    } catch (const InvalidTransition&) {
        return true;
    } catch (const std::exception&) {
        return false;
    }
}

}  // namespace siot::cloud
