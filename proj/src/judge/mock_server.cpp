#include <httplib.h>

#include <nlohmann/json.hpp>
#include <thread>

#include "cxrl/errors.hpp"
#include "cxrl/judge.hpp"

namespace cxrl::judge {

using json = nlohmann::json;

struct MockServer::Impl {
  httplib::Server server;
  std::thread thread;
  MockJudge judge;
  MockEmbedder embedder;

  Impl(std::size_t dim, std::uint64_t seed) : embedder(dim, seed) {}
};

MockServer::MockServer(MockServerOptions options)
    : options_(std::move(options)), impl_(std::make_unique<Impl>(options_.embedding_dimension, options_.embedding_seed)) {
  if (options_.max_concurrency < 1) throw std::invalid_argument("MockServer: max_concurrency must be >= 1");
  auto& svr = impl_->server;
  const int workers = options_.max_concurrency;
  svr.new_task_queue = [workers] { return new httplib::ThreadPool(static_cast<std::size_t>(workers)); };

  // Wraps a handler with JSON parsing, the concurrency counter and error mapping.
  auto route = [this](auto body_fn) {
    return [this, body_fn](const httplib::Request& req, httplib::Response& res) {
      ++requests_;
      const int now = ++in_flight_;
      int seen = peak_.load();
      while (now > seen && !peak_.compare_exchange_weak(seen, now)) {
      }
      if (options_.latency.count() > 0) std::this_thread::sleep_for(options_.latency);
      try {
        const json in = json::parse(req.body);
        res.set_content(body_fn(in).dump(), "application/json");
      } catch (const std::exception& e) {
        res.status = 400;
        res.set_content(json{{"error", e.what()}}.dump(), "application/json");
      }
      --in_flight_;
    };
  };

  svr.Post("/judge/errors", route([this](const json& in) {
             const auto v = impl_->judge.count_errors(in.at("candidate").get<std::string>(),
                                                      in.at("reference").get<std::string>());
             json out{{"error_count", v.error_count}};
             if (v.rationale) out["rationale"] = *v.rationale;
             return out;
           }));
  svr.Post("/judge/temporal", route([this](const json& in) {
             const auto c = impl_->judge.classify_change(in.at("current").get<std::string>(),
                                                         in.at("prior").get<std::string>());
             return json{{"category", std::string(to_string(c))}};
           }));
  svr.Post("/embed", route([this](const json& in) {
             const auto tokens = in.at("tokens").get<std::vector<std::string>>();
             return json{{"vectors", impl_->embedder.embed(tokens)}};
           }));
  svr.Post("/generate", route([](const json& in) {
             const auto r = truncate_tokens(in.at("prompt").get<std::string>(), in.value("max_tokens", 256));
             return json{{"text", r.text}, {"truncated", r.truncated}};
           }));
}

MockServer::~MockServer() { stop(); }

void MockServer::bind() {
  auto& svr = impl_->server;
  if (options_.port == 0) {
    port_ = svr.bind_to_any_port(options_.host);
    if (port_ < 0) throw ServiceError("cannot bind mock server on " + options_.host, true);
  } else {
    if (!svr.bind_to_port(options_.host, options_.port)) {
      throw ServiceError("cannot bind mock server on " + options_.host + ":" + std::to_string(options_.port), true);
    }
    port_ = options_.port;
  }
}

void MockServer::start() {
  bind();
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void MockServer::run() {
  bind();
  impl_->server.listen_after_bind();
}

void MockServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::string MockServer::base_url() const { return "http://" + options_.host + ":" + std::to_string(port_); }

}  // namespace cxrl::judge
