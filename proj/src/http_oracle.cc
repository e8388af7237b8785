#include <exception>
#include <future>

#include "httplib.h"

#include "bbpatch/errors.h"
#include "bbpatch/protocol.h"
#include "bbpatch/remote_oracle.h"

namespace bbpatch {

namespace {

using nlohmann::json;

class HttpOracle : public Oracle {
 public:
  HttpOracle(const std::string& base_url, ImageShape shape, int num_classes,
             const RemoteOptions& options)
      : Oracle(options.id.empty() ? "http:" + base_url : options.id, shape,
               num_classes, options.max_in_flight),
        base_url_(base_url),
        timeout_(options.timeout) {
    auto client = make_client();
    auto res = client.Get("/meta");
    if (!res)
      throw TransportError("GET " + base_url_ + "/meta failed: " +
                           httplib::to_string(res.error()));
    if (res->status != 200)
      throw TransportError("GET " + base_url_ + "/meta", std::nullopt,
                           res->status);
    json meta;
    try {
      meta = json::parse(res->body);
    } catch (const json::exception&) {
      throw ConfigurationError("GET /meta returned non-JSON body");
    }
    protocol::check_handshake(protocol::parse_handshake(meta), shape,
                              num_classes);
  }

 protected:
  std::vector<Probabilities> do_classify(std::span<const Image> images) override {
    const std::size_t n = images.size();
    const std::size_t parts =
        std::min<std::size_t>(n, static_cast<std::size_t>(max_in_flight()));
    const std::uint64_t first_id = next_id_.fetch_add(n);
    std::vector<Probabilities> out(n);
    std::vector<std::future<void>> futures;
    for (std::size_t p = 0; p < parts; ++p) {
      const std::size_t lo = n * p / parts;
      const std::size_t hi = n * (p + 1) / parts;
      auto task = [this, images, lo, hi, first_id, &out] {
        post_chunk(images, lo, hi, first_id, out);
      };
      if (parts == 1) {
        task();
      } else {
        futures.push_back(std::async(std::launch::async, task));
      }
    }
    std::exception_ptr first_error;
    for (auto& f : futures) {
      try {
        f.get();
      } catch (...) {
        if (!first_error) first_error = std::current_exception();
      }
    }
    if (first_error) std::rethrow_exception(first_error);
    return out;
  }

 private:
  httplib::Client make_client() const {
    httplib::Client client(base_url_);
    const auto secs = timeout_.count() / 1000;
    const auto usecs = (timeout_.count() % 1000) * 1000;
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    return client;
  }

  void post_chunk(std::span<const Image> images, std::size_t lo, std::size_t hi,
                  std::uint64_t first_id, std::vector<Probabilities>& out) const {
    json body{{"images", json::array()}};
    for (std::size_t i = lo; i < hi; ++i)
      body["images"].push_back(protocol::request_json(first_id + i, images[i]));
    const std::uint64_t chunk_id = first_id + lo;
    auto client = make_client();
    auto res = client.Post("/classify", body.dump(), "application/json");
    if (!res)
      throw TransportError("POST " + base_url_ + "/classify failed: " +
                               httplib::to_string(res.error()),
                           chunk_id);
    if (res->status != 200)
      throw TransportError("POST " + base_url_ + "/classify", chunk_id,
                           res->status);
    json reply;
    try {
      reply = json::parse(res->body);
    } catch (const json::exception&) {
      throw TransportError("POST /classify returned non-JSON body", chunk_id);
    }
    if (!reply.contains("results") || !reply.at("results").is_array())
      throw TransportError("POST /classify reply has no results array", chunk_id);
    std::size_t filled = 0;
    for (const auto& r : reply.at("results")) {
      auto response = protocol::parse_response(r);
      if (response.error)
        throw TransportError("oracle error: " + *response.error, response.id);
      if (response.id < first_id + lo || response.id >= first_id + hi)
        throw TransportError("response for unknown request", response.id);
      auto& slot = out[response.id - first_id];
      if (!slot.empty())
        throw TransportError("duplicate response", response.id);
      slot = std::move(*response.probs);
      ++filled;
    }
    if (filled != hi - lo)
      throw TransportError("POST /classify answered " + std::to_string(filled) +
                               " of " + std::to_string(hi - lo) + " images",
                           chunk_id);
  }

  std::string base_url_;
  std::chrono::milliseconds timeout_;
  std::atomic<std::uint64_t> next_id_{0};
};

}  // namespace

std::unique_ptr<Oracle> http_oracle(const std::string& base_url,
                                    ImageShape shape, int num_classes,
                                    const RemoteOptions& options) {
  return std::make_unique<HttpOracle>(base_url, shape, num_classes, options);
}

}  // namespace bbpatch
