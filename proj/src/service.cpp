#include "pivotreg/service.hpp"

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <pthread.h>
#include <random>
#include <thread>

#include <httplib.h>

#include "pivotreg/error.hpp"

namespace pivotreg {

namespace {

using nlohmann::json;

void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void reply(httplib::Response& res, int status, const nlohmann::ordered_json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void error_reply(httplib::Response& res, int status, const std::string& message) {
    reply(res, status, json{{"error", message}});
}

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    json body = json::parse(req.body);  // json::parse_error handled by the caller
    if (!body.is_object()) throw UsageError("request body must be a JSON object");
    return body;
}

std::string new_session_id() {
    static std::mutex mutex;
    static std::random_device device;
    std::lock_guard lock(mutex);
    static constexpr char hex[] = "0123456789abcdef";
    std::string id;
    for (int i = 0; i < 8; ++i) {
        const auto word = device();
        for (int k = 0; k < 4; ++k) id += hex[(word >> (4 * k)) & 0xf];
    }
    return id;
}

// Maps library errors onto status codes and runs `body`.
template <typename F>
void guarded(httplib::Response& res, F&& body) {
    try {
        body();
    } catch (const json::exception& e) {
        error_reply(res, 400, std::string("malformed JSON: ") + e.what());
    } catch (const UsageError& e) {
        error_reply(res, 400, e.what());
    } catch (const NotFoundError& e) {
        error_reply(res, 404, e.what());
    } catch (const StageError& e) {
        error_reply(res, e.cause_is<UsageError>() ? 400 : 422, e.what());
    } catch (const Error& e) {
        error_reply(res, 422, e.what());
    } catch (const std::exception& e) {
        error_reply(res, 500, e.what());
    }
}

bool valid_dataset_name(const std::string& name) {
    if (name.empty() || name.front() == '.') return false;
    return name.find_first_of("/\\") == std::string::npos;
}

json merged_options(const SessionState& s, const json& body) {
    json opts = body;
    opts.erase("expected_revision");
    opts.erase("time_budget_seconds");
    if (!opts.contains("features") && s.selection.contains("features")) opts["features"] = s.selection["features"];
    return opts;
}

std::optional<std::uint64_t> expected_revision(const json& body) {
    if (!body.contains("expected_revision")) return std::nullopt;
    const auto& v = body["expected_revision"];
    if (!v.is_number_unsigned()) throw UsageError("expected_revision must be a non-negative integer");
    return v.get<std::uint64_t>();
}

}  // namespace

Service::Service(ServiceConfig config) : config_(std::move(config)) {}

std::shared_ptr<Service::Session> Service::find(const std::string& id) const {
    std::shared_lock lock(sessions_mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw NotFoundError("unknown session '" + id + "'");
    return it->second;
}

std::shared_ptr<const SessionState> Service::open_session(const std::string& id, const std::string& dataset_name,
                                                          const json& selection) const {
    if (!valid_dataset_name(dataset_name)) throw UsageError("dataset must be a plain directory name");
    const auto dir = config_.data_root / dataset_name;
    if (!std::filesystem::is_directory(dir)) throw NotFoundError("no dataset named '" + dataset_name + "'");
    const DataSelection sel = selection_from_json(selection);
    auto state = std::make_shared<SessionState>();
    state->id = id;
    state->dataset_name = dataset_name;
    state->selection = selection;
    state->dataset = std::make_shared<const Dataset>(load_dataset_dir(dir, sel.target, sel.features, sel.align));
    return state;
}

void Service::install(httplib::Server& server) {
    server.set_default_headers({{"Access-Control-Allow-Origin", config_.cors_origin},
                                {"Access-Control-Allow-Methods", "GET, POST, PUT, OPTIONS"},
                                {"Access-Control-Allow-Headers", "Content-Type"},
                                {"Access-Control-Expose-Headers", "X-Session-Revision"}});
    server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server.Get("/health", [](const httplib::Request&, httplib::Response& res) { reply(res, 200, json{{"status", "ok"}}); });

    server.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            json body = parse_body(req);
            if (!body.contains("dataset") || !body["dataset"].is_string()) {
                throw UsageError("body must name a dataset");
            }
            json selection = body;
            selection.erase("dataset");
            const std::string id = new_session_id();
            auto state = open_session(id, body["dataset"].get<std::string>(), selection);
            auto session = std::make_shared<Session>();
            session->state = state;
            {
                std::unique_lock lock(sessions_mutex_);
                sessions_.emplace(id, session);
            }
            const auto& ds = *state->dataset;
            reply(res, 201,
                  json{{"id", id},
                       {"revision", state->revision},
                       {"dataset", state->dataset_name},
                       {"n_dates", ds.size()},
                       {"first_date", format_date(ds.dates.front())},
                       {"last_date", format_date(ds.dates.back())}});
        });
    });

    server.Get(R"(/sessions/([0-9a-f]+))", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            auto s = find(req.matches[1])->load();
            reply(res, 200,
                  json{{"id", s->id},
                       {"dataset", s->dataset_name},
                       {"revision", s->revision},
                       {"pivots", s->pivots ? pivots_to_json(*s->pivots) : json::array()},
                       {"has_report", s->report.has_value()}});
        });
    });

    server.Get(R"(/sessions/([0-9a-f]+)/deviation)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            auto s = find(req.matches[1])->load();
            int window = 5;
            if (req.has_param("window")) {
                try {
                    window = std::stoi(req.get_param_value("window"));
                } catch (const std::exception&) {
                    throw UsageError("window must be an integer");
                }
            }
            ExperimentOptions opts = options_from_json(merged_options(*s, s->last_options));
            opts.run_bayes = false;
            const auto report = run_experiment(*s->dataset, std::nullopt, opts);

            json series = json::array();
            std::vector<Point> train_points;
            for (const auto& row : report.rows) {
                series.push_back({{"date", format_date(row.date)}, {"value", row.deviation},
                                  {"split", row.test ? "test" : "train"}});
                if (!row.test) train_points.push_back({row.date, row.deviation});
            }
            const auto suggested = suggest_pivots(TimeSeries("deviation", std::move(train_points)), window);
            reply(res, 200,
                  json{{"revision", s->revision},
                       {"window", window},
                       {"deviation", std::move(series)},
                       {"suggested_pivots", pivots_to_json(suggested)},
                       {"pivots", s->pivots ? pivots_to_json(*s->pivots) : json::array()}});
        });
    });

    server.Put(R"(/sessions/([0-9a-f]+)/pivots)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            auto session = find(req.matches[1]);
            json body = parse_body(req);
            const auto expected = expected_revision(body);
            if (!expected) throw UsageError("expected_revision is required");
            if (!body.contains("pivots")) throw UsageError("body must carry a pivots array");
            auto violations = check_pivot_json(body["pivots"]);
            if (!violations.empty()) {
                json list = json::array();
                for (const auto& v : violations) {
                    list.push_back({{"index", v.index}, {"field", v.field}, {"message", v.message}});
                }
                reply(res, 422, json{{"error", "invalid pivots"}, {"violations", std::move(list)}});
                return;
            }
            PivotSet pivots = pivots_from_json(body["pivots"]);

            std::lock_guard lock(session->mutex);
            const auto& current = session->state;
            if (current->revision != *expected) {
                reply(res, 409, json{{"error", "revision conflict"}, {"revision", current->revision}});
                return;
            }
            auto next = std::make_shared<SessionState>(*current);
            next->pivots = std::move(pivots);
            next->revision = current->revision + 1;
            session->state = next;
            res.set_header("X-Session-Revision", std::to_string(next->revision));
            reply(res, 200, json{{"revision", next->revision}});
        });
    });

    server.Post(R"(/sessions/([0-9a-f]+)/refit)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            auto session = find(req.matches[1]);
            json body = parse_body(req);
            const auto expected = expected_revision(body);
            auto s = session->load();
            if (expected && *expected != s->revision) {
                reply(res, 409, json{{"error", "revision conflict"}, {"revision", s->revision}});
                return;
            }
            double budget = config_.time_budget_seconds;
            if (body.contains("time_budget_seconds")) {
                if (!body["time_budget_seconds"].is_number() || !(body["time_budget_seconds"].get<double>() > 0)) {
                    throw UsageError("time_budget_seconds must be positive");
                }
                budget = body["time_budget_seconds"].get<double>();
            }
            const json opts_json = merged_options(*s, body);
            ExperimentOptions opts = options_from_json(opts_json);
            opts.deadline = std::chrono::steady_clock::now() +
                            std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                std::chrono::duration<double>(budget));
            auto report = report_to_json(run_experiment(*s->dataset, s->pivots, opts));

            std::lock_guard lock(session->mutex);
            const auto& current = session->state;
            if (current->revision != s->revision) {
                reply(res, 409, json{{"error", "session changed during refit"}, {"revision", current->revision}});
                return;
            }
            auto next = std::make_shared<SessionState>(*current);
            next->report = report;
            next->last_options = opts_json;
            next->revision = current->revision + 1;
            session->state = next;
            res.set_header("X-Session-Revision", std::to_string(next->revision));
            reply(res, 200, report);
        });
    });

    server.Get(R"(/sessions/([0-9a-f]+)/posterior)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            auto s = find(req.matches[1])->load();
            if (!s->report) throw NotFoundError("no refit has been run for this session");
            const auto& r = *s->report;
            nlohmann::ordered_json out;
            out["revision"] = s->revision;
            out["partial"] = r.value("partial", false);
            for (const char* key : {"bayes_base", "bayes_corrected", "var"}) {
                if (r.contains(key)) out[key] = r[key];
            }
            reply(res, 200, out);
        });
    });
}

json Service::snapshot() const {
    json sessions = json::array();
    std::shared_lock lock(sessions_mutex_);
    for (const auto& [id, session] : sessions_) {
        auto s = session->load();
        json entry{{"id", s->id},
                   {"dataset", s->dataset_name},
                   {"selection", s->selection},
                   {"revision", s->revision},
                   {"last_options", s->last_options}};
        entry["pivots"] = s->pivots ? pivots_to_json(*s->pivots) : json(nullptr);
        entry["report"] = s->report ? json::parse(s->report->dump()) : json(nullptr);
        sessions.push_back(std::move(entry));
    }
    return json{{"sessions", std::move(sessions)}};
}

void Service::restore(const json& snapshot) {
    if (!snapshot.contains("sessions") || !snapshot["sessions"].is_array()) {
        throw ValidationError("snapshot lacks a sessions array");
    }
    std::map<std::string, std::shared_ptr<Session>> restored;
    for (const auto& entry : snapshot["sessions"]) {
        const std::string id = entry.at("id").get<std::string>();
        auto base = open_session(id, entry.at("dataset").get<std::string>(), entry.value("selection", json::object()));
        auto state = std::make_shared<SessionState>(*base);
        state->revision = entry.value("revision", std::uint64_t{0});
        state->last_options = entry.value("last_options", json::object());
        if (entry.contains("pivots") && !entry["pivots"].is_null()) state->pivots = pivots_from_json(entry["pivots"]);
        if (entry.contains("report") && !entry["report"].is_null()) {
            state->report = nlohmann::ordered_json::parse(entry["report"].dump());
        }
        auto session = std::make_shared<Session>();
        session->state = state;
        restored.emplace(id, session);
    }
    std::unique_lock lock(sessions_mutex_);
    sessions_ = std::move(restored);
}

void Service::save_snapshot() const {
    if (!config_.snapshot) return;
    std::ofstream out(*config_.snapshot, std::ios::trunc);
    if (!out) throw NotFoundError("cannot write snapshot " + config_.snapshot->string());
    out << snapshot().dump(2) << '\n';
}

int serve(const ServiceConfig& config) {
    Service service(config);
    if (config.snapshot && std::filesystem::exists(*config.snapshot)) {
        std::ifstream in(*config.snapshot);
        service.restore(json::parse(in));
    }

    httplib::Server server;
    service.install(server);

    // Route SIGINT/SIGTERM to a watcher thread so shutdown happens outside a
    // signal handler.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);
    std::atomic<bool> finished{false};
    std::atomic<bool> signalled{false};
    std::thread watcher([&] {
        int sig = 0;
        sigwait(&signals, &sig);
        signalled = true;
        if (!finished) server.stop();
    });

    std::cerr << "pivotreg service listening on " << config.host << ":" << config.port << std::endl;
    const bool ok = server.listen(config.host, config.port);
    finished = true;
    if (!signalled) pthread_kill(watcher.native_handle(), SIGTERM);
    watcher.join();
    if (!ok) {
        std::cerr << "could not bind " << config.host << ":" << config.port << std::endl;
        return 1;
    }
    service.save_snapshot();
    return 0;
}

}  // namespace pivotreg
