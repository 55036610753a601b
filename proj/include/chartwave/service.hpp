#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "chartwave/engine.hpp"

namespace chartwave {

inline constexpr int kApiSchemaVersion = 1;

struct HttpRequest {
  std::string method;
  std::string path;
  std::map<std::string, std::string> query;
  std::map<std::string, std::string> headers;
  std::string body;
};

struct HttpResponse {
  int status = 200;
  nlohmann::json body;
};

/// Live sessions keyed by id, each persisted as `<dir>/<id>.json`. Every
/// mutation is applied to a copy, written to disk, and only then published.
class SessionStore {
 public:
  /// Loads every session file already present in `dir`.
  explicit SessionStore(std::filesystem::path dir);

  std::string create(Session session);
  bool contains(const std::string& id) const;
  std::vector<std::string> ids() const;

  /// Runs `read` under a shared lock on the session. Returns false when the
  /// id is unknown.
  template <class Fn>
  bool read(const std::string& id, Fn&& read) const {
    auto entry = find(id);
    if (!entry) return false;
    std::shared_lock lock(entry->mutex);
    read(entry->session);
    return true;
  }

  /// Runs `mutate` on a copy of the session under an exclusive lock and
  /// persists the copy before it replaces the stored state. Exceptions from
  /// `mutate` leave both memory and disk untouched.
  template <class Fn>
  bool mutate(const std::string& id, Fn&& mutate) {
    auto entry = find(id);
    if (!entry) return false;
    std::unique_lock lock(entry->mutex);
    Session next = entry->session;
    mutate(next);
    save_session(next, path_for(id));
    entry->session = std::move(next);
    return true;
  }

  std::filesystem::path path_for(const std::string& id) const;

 private:
  struct Entry {
    explicit Entry(Session s) : session(std::move(s)) {}
    mutable std::shared_mutex mutex;
    Session session;
  };

  std::shared_ptr<Entry> find(const std::string& id) const;

  std::filesystem::path dir_;
  mutable std::shared_mutex map_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
};

/// REST facade over SessionStore:
///   POST /sessions
///   GET  /sessions/{id}/status | allocation | history
///   POST /sessions/{id}/labels
///   GET  /sessions/{id}/prediction?method=simulate|rate
/// Responses carry the session's completed-wave count as "wave".
class Service {
 public:
  explicit Service(std::filesystem::path dir, std::optional<std::string> bearer_token = std::nullopt);

  HttpResponse handle(const HttpRequest& request);
  SessionStore& store() { return store_; }

 private:
  HttpResponse create_session(const HttpRequest& request);
  HttpResponse get_status(const std::string& id);
  HttpResponse get_allocation(const std::string& id);
  HttpResponse post_labels(const std::string& id, const HttpRequest& request);
  HttpResponse get_prediction(const std::string& id, const HttpRequest& request);
  HttpResponse get_history(const std::string& id);

  SessionStore store_;
  std::optional<std::string> token_;
};

/// Builds a cohort from a session-creation payload: either explicit
/// `patients` with `strata` cut points, or a `synthetic` generator block.
Cohort cohort_from_json(const nlohmann::json& j);

nlohmann::json status_json(const std::string& id, const Session& session);
nlohmann::json allocation_json(const std::string& id, const Session& session, const PendingWave& wave);
nlohmann::json history_json(const std::string& id, const Session& session);

/// HTTP listener bridging to a Service.
class HttpFrontend {
 public:
  explicit HttpFrontend(Service& service);
  ~HttpFrontend();

  /// Binds to host:port; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Blocks serving requests until stop().
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Serves `service` over HTTP until the process is stopped.
void serve_http(Service& service, const std::string& host, int port);

}  // namespace chartwave
