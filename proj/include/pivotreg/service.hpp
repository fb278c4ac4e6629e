#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>

#include <json.hpp>

#include "pivotreg/correction.hpp"
#include "pivotreg/options.hpp"

namespace httplib {
class Server;
}

namespace pivotreg {

struct ServiceConfig {
    // Datasets live in subdirectories of data_root, one CSV per series.
    std::filesystem::path data_root = ".";
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string cors_origin = "*";
    // Sessions are restored from and written back to this file when set.
    std::optional<std::filesystem::path> snapshot;
    double time_budget_seconds = 120.0;
};

// Immutable view of a session at one revision.
struct SessionState {
    std::string id;
    std::string dataset_name;
    nlohmann::json selection;  // target / features / align / max_gap as given
    std::shared_ptr<const Dataset> dataset;
    std::optional<PivotSet> pivots;
    nlohmann::json last_options = nlohmann::json::object();
    std::optional<nlohmann::ordered_json> report;
    std::uint64_t revision = 0;
};

// Expert-correction sessions over HTTP/JSON:
//
//   POST /sessions                      {"dataset": name, ...selection}
//   GET  /sessions/{id}
//   GET  /sessions/{id}/deviation?window=N
//   PUT  /sessions/{id}/pivots          {"expected_revision": n, "pivots": [...]}
//   POST /sessions/{id}/refit           {...options, "expected_revision"?}
//   GET  /sessions/{id}/posterior
//
// Every mutating call bumps the revision; a write carrying a stale
// expected_revision gets 409. A refit whose session changed underneath it
// also gets 409 instead of overwriting the newer state.
class Service {
public:
    explicit Service(ServiceConfig config);

    void install(httplib::Server& server);

    nlohmann::json snapshot() const;
    void restore(const nlohmann::json& snapshot);
    void save_snapshot() const;

    const ServiceConfig& config() const noexcept { return config_; }

private:
    struct Session {
        mutable std::mutex mutex;
        std::shared_ptr<const SessionState> state;

        std::shared_ptr<const SessionState> load() const {
            std::lock_guard lock(mutex);
            return state;
        }
    };

    std::shared_ptr<Session> find(const std::string& id) const;
    std::shared_ptr<const SessionState> open_session(const std::string& id, const std::string& dataset_name,
                                                     const nlohmann::json& selection) const;

    ServiceConfig config_;
    mutable std::shared_mutex sessions_mutex_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
};

// Runs the HTTP server until SIGINT/SIGTERM, then writes the snapshot.
int serve(const ServiceConfig& config);

}  // namespace pivotreg
