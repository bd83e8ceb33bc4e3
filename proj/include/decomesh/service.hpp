#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

namespace decomesh::service {

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  ///< 0 picks a free port
  std::optional<std::filesystem::path> ui_dir;  ///< static files served under /ui
};

/// HTTP front end under /api/v1. Sessions live in memory only and are lost
/// on restart; exported regions are returned to the client as PLY bytes.
class Service {
 public:
  explicit Service(ServiceOptions options);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds the listening socket and returns the bound port.
  int bind();
  /// Serves until `stop` is called. Requires a successful `bind`.
  void run();
  void stop();
  /// Blocks until the server accepts connections.
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// OpenAPI 3 description of the /api/v1 routes.
std::string openapi_json();

}  // namespace decomesh::service
