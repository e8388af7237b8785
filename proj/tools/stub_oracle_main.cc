// Conformance oracle speaking the line protocol on stdin/stdout, or HTTP
// with --http. Used by tests and for trying the remote transports.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bbpatch/builtin_model.h"
#include "bbpatch/conformance.h"

using namespace bbpatch;

int main(int argc, char** argv) {
  CLI::App app{"bbpatch conformance oracle"};
  std::string model = "uniform";
  std::vector<int> shape;
  int classes = 0;
  int port = -1;
  int latency_ms = 0;
  int fail_status = 0;
  app.add_option("--model", model, "uniform, brightness or builtin:<model file>")
      ->capture_default_str();
  app.add_option("--shape", shape, "H W C announced in the handshake")->expected(3);
  app.add_option("--classes", classes, "Class count announced in the handshake");
  app.add_option("--http", port, "Serve HTTP on 127.0.0.1:PORT instead of stdio");
  app.add_option("--latency-ms", latency_ms, "Delay before every reply");
  app.add_option("--fail-status", fail_status, "HTTP status returned for every POST");
  CLI11_PARSE(app, argc, argv);

  StubService service;
  try {
    if (model.rfind("builtin:", 0) == 0) {
      auto m = std::make_shared<const BuiltinModel>(BuiltinModel::load(model.substr(8)));
      service.handshake.shape = m->input_shape();
      service.handshake.num_classes = m->num_classes();
      service.classify = [m](const Image& img) { return m->predict(img); };
    } else if (model == "brightness") {
      service.handshake.num_classes = 2;
      service.classify = brightness_classifier();
    } else if (model == "uniform") {
      service.handshake.num_classes = classes > 0 ? classes : 2;
    } else {
      std::fprintf(stderr, "bbpatch-stub-oracle: unknown model '%s'\n", model.c_str());
      return 2;
    }
    if (shape.size() == 3) service.handshake.shape = ImageShape{shape[0], shape[1], shape[2]};
    if (classes > 0) service.handshake.num_classes = classes;
    if (model == "uniform") service.classify = uniform_classifier(service.handshake.num_classes);
    if (service.handshake.shape.size() == 0)
      service.handshake.shape = ImageShape{28, 28, 1};
    service.latency = std::chrono::milliseconds(latency_ms);
    service.fail_status = fail_status;

    if (port >= 0) {
      StubHttpServer server(service);
      server.listen("127.0.0.1", port);
      return 0;
    }
    std::ios::sync_with_stdio(false);
    serve_line_protocol(service, std::cin, std::cout);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "bbpatch-stub-oracle: %s\n", e.what());
    return 1;
  }
  return 0;
}
