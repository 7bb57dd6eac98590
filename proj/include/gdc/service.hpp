#pragma once

// HTTP front end for interactive segmentation sessions.
//
//   POST /sessions                  PNG body -> 201 {id, height, width}
//   PUT  /sessions/{id}/scribbles   scribble JSON -> 204
//   POST /sessions/{id}/optimize    {sigma?, steps?, samples?, seed?} -> 202, 409 while running
//   GET  /sessions/{id}/status      {status, step, total, loss, error?}
//   GET  /sessions/{id}/mask.png    palette PNG, 409 until done
//   GET  /sessions/{id}/overlay.png image blended with the mask, 409 until done
//   GET  /health
//
// Sessions live in memory behind an LRU cap. Jobs run one at a time on a
// single background worker; status reads only take a per-session lock.

#include "gdc/pipeline.hpp"

#include <cstddef>
#include <memory>
#include <string>

namespace gdc {

struct ServiceOptions {
  std::size_t max_sessions = 32;
  Index max_side = 2048;
  SegmentConfig defaults;  // overridden per request by sigma/steps/samples/seed
};

struct BindAddress {
  std::string host = "127.0.0.1";
  int port = 8080;
};

/// "host:port", "host" or ":port"; throws FormatError on a bad port.
BindAddress parse_bind(const std::string& text);
/// GDC_BIND if set, else 127.0.0.1:8080.
BindAddress bind_from_env();

class HttpService {
 public:
  explicit HttpService(ServiceOptions options = {});
  ~HttpService();
  HttpService(const HttpService&) = delete;
  HttpService& operator=(const HttpService&) = delete;

  /// Binds the listening socket; port 0 picks a free one. Returns the bound port
  /// or throws std::runtime_error.
  int bind(const BindAddress& address);
  /// Serves until stop(); requires bind().
  void listen();
  /// bind() then listen() on a background thread; returns once accepting.
  int start(const BindAddress& address);
  void stop();

  std::size_t session_count() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace gdc
