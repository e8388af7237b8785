#pragma once

#include <chrono>
#include <memory>
#include <string>
#include <vector>

#include "bbpatch/oracle.h"

namespace bbpatch {

struct RemoteOptions {
  int max_in_flight = 1;
  std::chrono::milliseconds timeout{30000};
  // Overrides the generated "subprocess:<argv0>" / "http:<url>" id.
  std::string id;
};

// Spawns `argv` and speaks the line protocol over its stdin/stdout. The
// child's handshake is read and checked before this returns
// (ConfigurationError on mismatch, TransportError if the child dies or times
// out). Within one batch up to max_in_flight requests are outstanding and
// responses may arrive in any order.
std::unique_ptr<Oracle> subprocess_oracle(const std::vector<std::string>& argv,
                                          ImageShape shape, int num_classes,
                                          const RemoteOptions& options = {});

// base_url like "http://127.0.0.1:8080". GET /meta is checked up front; each
// batch is split into up to max_in_flight concurrent POST /classify calls.
std::unique_ptr<Oracle> http_oracle(const std::string& base_url,
                                    ImageShape shape, int num_classes,
                                    const RemoteOptions& options = {});

// Splits a command line on whitespace with single/double quote grouping and
// backslash escapes (no expansion of any kind).
std::vector<std::string> split_command_line(const std::string& line);

}  // namespace bbpatch
