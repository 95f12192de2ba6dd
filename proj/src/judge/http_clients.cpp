#include <httplib.h>

#include <cmath>
#include <nlohmann/json.hpp>
#include <thread>

#include "cxrl/errors.hpp"
#include "cxrl/judge.hpp"
#include "cxrl/util/rng.hpp"

namespace cxrl::judge {

using json = nlohmann::json;

HttpTransport::HttpTransport(ServiceEndpoint endpoint) : endpoint_(std::move(endpoint)), gate_(endpoint_.max_in_flight) {
  endpoint_.validate();
  // Split "scheme://host:port/prefix" into the client address and a route prefix.
  const std::string& url = endpoint_.base_url;
  const std::size_t scheme = url.find("://");
  const std::size_t host_start = scheme == std::string::npos ? 0 : scheme + 3;
  const std::size_t slash = url.find('/', host_start);
  if (slash == std::string::npos) {
    host_ = url;
  } else {
    host_ = url.substr(0, slash);
    prefix_ = url.substr(slash);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
  }
  if (host_.size() <= host_start) throw std::invalid_argument("ServiceEndpoint: base_url has no host");
}

json HttpTransport::post(const std::string& route, const json& body) {
  const std::string payload = body.dump();
  httplib::Headers headers;
  if (endpoint_.bearer_token) headers.emplace("Authorization", "Bearer " + *endpoint_.bearer_token);

  InFlightGate::Permit permit(gate_);
  std::string last_error;
  for (int attempt = 0; attempt <= endpoint_.max_retries; ++attempt) {
    if (attempt > 0) {
      Rng jitter(derive_seed(0x6a09e667, {jitter_counter_++}));
      const double scale = std::ldexp(1.0, attempt - 1) * (0.5 + jitter.uniform());
      std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(endpoint_.backoff_base.count() * scale));
    }
    ++attempts_;

    httplib::Client client(host_);
    const auto secs = std::chrono::duration_cast<std::chrono::microseconds>(endpoint_.timeout);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(secs).count(),
                                  static_cast<time_t>(secs.count() % 1'000'000));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(secs).count(),
                            static_cast<time_t>(secs.count() % 1'000'000));
    client.set_write_timeout(std::chrono::duration_cast<std::chrono::seconds>(secs).count(),
                             static_cast<time_t>(secs.count() % 1'000'000));

    auto res = client.Post(prefix_ + route, headers, payload, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status >= 400) {
      throw ServiceError(route + ": HTTP " + std::to_string(res->status) + " " + res->body, true);
    }
    try {
      return json::parse(res->body);
    } catch (const json::exception& e) {
      throw ServiceError(route + ": malformed response body: " + e.what(), true);
    }
  }
  throw ServiceError(route + ": giving up after " + std::to_string(endpoint_.max_retries + 1) +
                         " attempts (" + last_error + ")",
                     true);
}

JudgeVerdict HttpJudge::count_errors(const std::string& candidate, const std::string& reference) {
  json req{{"candidate", candidate}, {"reference", reference}};
  if (!transport_->endpoint().instruction.empty()) req["instruction"] = transport_->endpoint().instruction;
  const json res = transport_->post("/judge/errors", req);
  auto it = res.find("error_count");
  if (it == res.end() || !it->is_number_integer() || it->get<long long>() < 0) {
    throw ServiceError("/judge/errors: response lacks a non-negative integer error_count", true);
  }
  JudgeVerdict v;
  v.error_count = it->get<int>();
  if (auto r = res.find("rationale"); r != res.end() && r->is_string()) v.rationale = r->get<std::string>();
  return v;
}

TemporalCategory HttpJudge::classify_change(const std::string& current, const std::string& prior) {
  const json res = transport_->post("/judge/temporal", {{"current", current}, {"prior", prior}});
  auto it = res.find("category");
  if (it == res.end() || !it->is_string()) throw ServiceError("/judge/temporal: response lacks a category", true);
  return parse_temporal(it->get<std::string>());
}

std::vector<std::vector<double>> HttpEmbedder::embed(const std::vector<std::string>& tokens) {
  const json res = transport_->post("/embed", {{"tokens", tokens}});
  auto it = res.find("vectors");
  if (it == res.end() || !it->is_array() || it->size() != tokens.size()) {
    throw ServiceError("/embed: response must carry one vector per token", true);
  }
  try {
    return it->get<std::vector<std::vector<double>>>();
  } catch (const json::exception& e) {
    throw ServiceError(std::string("/embed: malformed vectors: ") + e.what(), true);
  }
}

GenerationResult HttpGenerator::generate(const corpus::PromptInstance& prompt, const GenerationOptions& options) {
  json req{{"prompt", prompt.text}, {"temperature", options.temperature}, {"max_tokens", options.max_tokens}};
  req["images"] = json::array();
  for (const auto& im : prompt.current_images) req["images"].push_back(im.uri);
  if (options.seed) req["seed"] = *options.seed;
  const json res = transport_->post("/generate", req);
  auto text = res.find("text");
  if (text == res.end() || !text->is_string()) throw ServiceError("/generate: response lacks text", true);
  return {text->get<std::string>(), res.value("truncated", false)};
}

}  // namespace cxrl::judge
