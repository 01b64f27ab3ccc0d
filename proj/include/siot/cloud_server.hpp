#pragma once

// HTTP front end of the cloud store.
//
//   POST /api/v1/records                     ingest_record   201 / 401 / 422
//   GET  /api/v1/patients/{id}/records       fetch_records   200 / 401
//   POST /api/v1/commands                    issue_command   201 / 401 / 409 / 422
//   GET  /api/v1/commands/{id}               ticket status   200 / 401 / 404
//   GET  /api/v1/devices/{id}/commands/next  next_commands   200 / 401
//   POST /api/v1/commands/{id}/ack           ack_command     200 / 401 / 404 / 409
//   GET  /api/v1/alerts                      list_alerts     200 / 401
//
// Bodies are JSON carrying base64 SIOT envelopes; POST /records also takes a
// raw envelope as application/octet-stream.

#include <cstdint>
#include <memory>
#include <string>
#include <thread>

#include "siot/cloud.hpp"

namespace httplib {
class Server;
}

namespace siot::cloud {

class CloudServer {
  public:
    explicit CloudServer(CloudStore& store);
    ~CloudServer();
    CloudServer(const CloudServer&) = delete;
    CloudServer& operator=(const CloudServer&) = delete;

    /// Port 0 binds any free port.  Returns the bound port; throws IoError.
    std::uint16_t bind(const std::string& host, std::uint16_t port);
    void run();    // blocks until stop()
    void start();  // run() on a background thread
    void stop();

  private:
    void install_routes();

    CloudStore& store_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
};

nlohmann::json to_json(const StoredRecord& r);
nlohmann::json to_json(const CommandTicket& t);
nlohmann::json to_json(const TamperAlert& a);
nlohmann::json to_json(const CommandReport& r);
CommandReport command_report_from_json(const Identifier& command_id, const nlohmann::json& j);

}  // namespace siot::cloud
