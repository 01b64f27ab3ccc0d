#pragma once

// CloudLink implementations: HTTP to a running cloud server, or a direct
// call into an in-process CloudStore.

#include <functional>
#include <memory>
#include <string>

#include "siot/api.hpp"
#include "siot/cloud.hpp"

namespace httplib {
class Client;
class Result;
}

namespace siot::cloud {

class HttpCloudLink final : public CloudLink {
  public:
    /// `endpoint` is http://host:port.
    HttpCloudLink(const std::string& endpoint, std::string token, Identifier device_id);
    ~HttpCloudLink() override;

    DeliveryResult post_record(const SignedEnvelope& envelope) override;
    std::optional<std::vector<PendingCommand>> next_commands() override;
    bool ack_command(const CommandReport& report) override;

  private:
    std::unique_ptr<httplib::Client> client_;
    std::string token_;
    Identifier device_id_;
};

/// Physician/researcher side of the HTTP API.  Throws IoError when the
/// server cannot be reached and Error (with the server's message) otherwise.
class HttpApiClient {
  public:
    HttpApiClient(const std::string& endpoint, std::string token);
    ~HttpApiClient();

    nlohmann::json issue_command(const PresetCommand& command);
    nlohmann::json issue_signed_command(const SignedEnvelope& envelope);
    nlohmann::json ticket(const Identifier& command_id);
    /// Envelopes exactly as returned; the caller re-verifies them.
    std::vector<SignedEnvelope> fetch_records(const Identifier& patient, Timestamp from, Timestamp to);
    nlohmann::json alerts();

  private:
    nlohmann::json expect(const char* what, int status, const httplib::Result& res);

    std::unique_ptr<httplib::Client> client_;
};

/// Calls straight into a store.  The resolver returning null models an outage.
class DirectCloudLink final : public CloudLink {
  public:
    using Resolver = std::function<CloudStore*()>;

    DirectCloudLink(Resolver store, std::string token, Identifier device_id);

    DeliveryResult post_record(const SignedEnvelope& envelope) override;
    std::optional<std::vector<PendingCommand>> next_commands() override;
    bool ack_command(const CommandReport& report) override;

  private:
    Resolver store_;
    std::string token_;
    Identifier device_id_;
};

}  // namespace siot::cloud
