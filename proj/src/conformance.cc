#include "bbpatch/conformance.h"

#include <atomic>
#include <istream>
#include <ostream>
#include <thread>

#include "httplib.h"

#include "bbpatch/encoding.h"
#include "bbpatch/errors.h"

namespace bbpatch {

using nlohmann::json;

namespace {

json answer(const StubService& service, const json& request) {
  std::optional<std::uint64_t> id;
  try {
    if (!request.is_object() || !request.contains("id"))
      return protocol::error_json(std::nullopt, "request without id");
    id = request.at("id").get<std::uint64_t>();
    auto pixels = decode_f32(request.at("pixels").get<std::string>());
    const Image image(service.handshake.shape, std::move(pixels));
    return protocol::response_json(*id, service.classify(image));
  } catch (const std::exception& e) {
    return protocol::error_json(id, e.what());
  }
}

}  // namespace

std::string handle_request_line(const StubService& service,
                                std::string_view line) {
  json request;
  try {
    request = json::parse(line);
  } catch (const json::exception&) {
    return protocol::error_json(std::nullopt, "malformed JSON request").dump();
  }
  return answer(service, request).dump();
}

void serve_line_protocol(const StubService& service, std::istream& in,
                         std::ostream& out) {
  out << protocol::handshake_json(service.handshake).dump() << '\n' << std::flush;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (service.latency.count() > 0) std::this_thread::sleep_for(service.latency);
    out << handle_request_line(service, line) << '\n' << std::flush;
  }
}

struct StubHttpServer::Impl {
  StubService service;
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<std::uint64_t> posts{0};
};

StubHttpServer::StubHttpServer(StubService service)
    : impl_(std::make_unique<Impl>()) {
  impl_->service = std::move(service);
  Impl* impl = impl_.get();
  impl->server.Get("/meta", [impl](const httplib::Request&, httplib::Response& res) {
    res.set_content(protocol::handshake_json(impl->service.handshake).dump(),
                    "application/json");
  });
  impl->server.Post("/classify", [impl](const httplib::Request& req,
                                        httplib::Response& res) {
    impl->posts.fetch_add(1);
    if (impl->service.latency.count() > 0)
      std::this_thread::sleep_for(impl->service.latency);
    if (impl->service.fail_status != 0) {
      res.status = impl->service.fail_status;
      res.set_content("{\"error\":\"injected failure\"}", "application/json");
      return;
    }
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception&) {
      res.status = 400;
      res.set_content(protocol::error_json(std::nullopt, "malformed JSON").dump(),
                      "application/json");
      return;
    }
    json results = json::array();
    if (body.contains("images") && body.at("images").is_array())
      for (const auto& r : body.at("images"))
        results.push_back(answer(impl->service, r));
    res.set_content(json{{"results", results}}.dump(), "application/json");
  });
}

StubHttpServer::~StubHttpServer() { stop(); }

int StubHttpServer::start(int port) {
  if (port == 0) {
    impl_->port = impl_->server.bind_to_any_port("127.0.0.1");
  } else {
    if (!impl_->server.bind_to_port("127.0.0.1", port))
      throw TransportError("cannot bind 127.0.0.1:" + std::to_string(port));
    impl_->port = port;
  }
  if (impl_->port <= 0) throw TransportError("cannot bind a local port");
  impl_->thread = std::thread([impl = impl_.get()] { impl->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return impl_->port;
}

void StubHttpServer::listen(const std::string& host, int port) {
  impl_->port = port;
  if (!impl_->server.listen(host, port))
    throw TransportError("cannot listen on " + host + ":" + std::to_string(port));
}

void StubHttpServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::string StubHttpServer::base_url() const {
  return "http://127.0.0.1:" + std::to_string(impl_->port);
}

std::uint64_t StubHttpServer::posts_served() const { return impl_->posts.load(); }

}  // namespace bbpatch
