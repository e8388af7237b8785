#pragma once

#include <chrono>
#include <iosfwd>
#include <memory>
#include <string>
#include <string_view>

#include "bbpatch/oracle.h"
#include "bbpatch/protocol.h"

namespace bbpatch {

// Server side of the oracle protocols, used by the bbpatch-stub-oracle tool
// and by tests that need a live endpoint without any external adapter.
struct StubService {
  protocol::Handshake handshake;
  ClassifyFn classify;
  std::chrono::milliseconds latency{0};  // per request (line) or per POST
  int fail_status = 0;                   // HTTP only: answer every POST with it
};

// One request line in, one response line out. Malformed lines produce an
// error response instead of throwing.
std::string handle_request_line(const StubService& service,
                                std::string_view line);

// Writes the handshake, then answers lines until `in` reaches EOF.
void serve_line_protocol(const StubService& service, std::istream& in,
                         std::ostream& out);

class StubHttpServer {
 public:
  explicit StubHttpServer(StubService service);
  ~StubHttpServer();
  StubHttpServer(const StubHttpServer&) = delete;
  StubHttpServer& operator=(const StubHttpServer&) = delete;

  // Binds 127.0.0.1 (port 0 = any free port) and serves on a background
  // thread; returns the bound port.
  int start(int port = 0);
  // Blocks serving on the calling thread.
  void listen(const std::string& host, int port);
  void stop();
  std::string base_url() const;
  std::uint64_t posts_served() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace bbpatch
