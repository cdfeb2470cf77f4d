#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "align/error.hpp"
#include "align/session.hpp"

namespace align {

/// HTTP+JSON front end over a SessionStore.
///
///   POST /api/sessions                               create
///   GET  /api/sessions/{id}                          session view
///   POST /api/sessions/{id}/parties/{role}/allocations
///   POST /api/sessions/{id}/suggest
///   POST /api/sessions/{id}/advance
///   GET  /api/sessions/{id}/export                   text/csv
///
/// Errors are returned as {"error": <code>, "message": <text>}.
class SessionService {
 public:
  explicit SessionService(std::filesystem::path data_dir);
  ~SessionService();
  SessionService(const SessionService&) = delete;
  SessionService& operator=(const SessionService&) = delete;

  SessionStore& store() noexcept;

  /// Binds to host:port; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop() is called. Requires a successful bind().
  bool listen_after_bind();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

int http_status_for(Errc code) noexcept;

}  // namespace align
