#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cxrl/corpus.hpp"
#include "cxrl/metrics.hpp"

namespace cxrl::judge {

struct JudgeVerdict {
  int error_count = 0;
  std::optional<std::string> rationale;
};

enum class TemporalCategory { first_study, new_development, no_change, progression, regression };

std::string_view to_string(TemporalCategory c);
TemporalCategory parse_temporal(std::string_view text);  // throws ServiceError on unknown tokens

inline const std::vector<TemporalCategory>& all_temporal_categories() {
  static const std::vector<TemporalCategory> all{TemporalCategory::first_study, TemporalCategory::new_development,
                                                 TemporalCategory::no_change, TemporalCategory::progression,
                                                 TemporalCategory::regression};
  return all;
}

struct ServiceEndpoint {
  std::string base_url;  // e.g. "http://127.0.0.1:8080"
  std::chrono::milliseconds timeout{10'000};
  int max_retries = 3;
  int max_in_flight = 4;
  std::chrono::milliseconds backoff_base{50};
  std::optional<std::string> bearer_token;
  std::string instruction;  // free-form judging instruction for real backends

  void validate() const;
};

// Counting gate bounding concurrent requests. Tracks the peak it has let
// through so tests can assert the bound.
class InFlightGate {
 public:
  explicit InFlightGate(int capacity);

  class Permit {
   public:
    explicit Permit(InFlightGate& gate) : gate_(&gate) { gate_->acquire(); }
    ~Permit() { gate_->release(); }
    Permit(const Permit&) = delete;
    Permit& operator=(const Permit&) = delete;

   private:
    InFlightGate* gate_;
  };

  int capacity() const { return capacity_; }
  int peak() const { return peak_.load(); }

 private:
  void acquire();
  void release();

  const int capacity_;
  int active_ = 0;
  std::atomic<int> peak_{0};
  std::mutex mu_;
  std::condition_variable cv_;
};

// ---------------------------------------------------------------------------
// Judge protocol

class Judge {
 public:
  virtual ~Judge() = default;
  virtual JudgeVerdict count_errors(const std::string& candidate, const std::string& reference) = 0;
  // Classifies a current report against a present prior; never first_study.
  virtual TemporalCategory classify_change(const std::string& current, const std::string& prior) = 0;
};

// Validates the reference and forwards to the backend.
JudgeVerdict count_errors(const std::string& candidate, const std::string& reference, Judge& judge);

// first_study without contacting the backend when there is no prior.
TemporalCategory label_temporal(const std::string& current_reference, const std::optional<std::string>& prior_reference,
                                Judge& judge);

// Deterministic stand-in. Error count is the size of the symmetric
// difference between affirmed label sets; temporal change compares the
// affirmed sets of current and prior.
class MockJudge : public Judge {
 public:
  explicit MockJudge(metrics::Lexicon lexicon = metrics::Lexicon::default_chexpert());

  JudgeVerdict count_errors(const std::string& candidate, const std::string& reference) override;
  TemporalCategory classify_change(const std::string& current, const std::string& prior) override;

  const metrics::Lexicon& lexicon() const { return lexicon_; }

 private:
  metrics::Lexicon lexicon_;
};

// ---------------------------------------------------------------------------
// Embedding

// Seeded hash of the token expanded to a Gaussian vector, then normalized.
class MockEmbedder : public metrics::Embedder {
 public:
  explicit MockEmbedder(std::size_t dimension = 64, std::uint64_t seed = 17);

  std::vector<std::vector<double>> embed(const std::vector<std::string>& tokens) override;
  std::vector<double> vector_for(std::string_view token) const;

 private:
  std::size_t dimension_;
  std::uint64_t seed_;
};

// Validates input and forwards.
std::vector<std::vector<double>> embed(const std::vector<std::string>& tokens, metrics::Embedder& embedder);

// ---------------------------------------------------------------------------
// Generation

struct GenerationOptions {
  double temperature = 0.0;
  std::optional<std::uint64_t> seed;
  int max_tokens = 256;
};

struct GenerationResult {
  std::string text;
  bool truncated = false;
};

class Generator {
 public:
  virtual ~Generator() = default;
  virtual GenerationResult generate(const corpus::PromptInstance& prompt, const GenerationOptions& options) = 0;
};

// Enforces temperature >= 0 and a seed whenever temperature > 0.
GenerationResult generate(const corpus::PromptInstance& prompt, const GenerationOptions& options, Generator& backend);

// Returns the prompt's target, cut to max_tokens whitespace tokens.
class EchoGenerator : public Generator {
 public:
  GenerationResult generate(const corpus::PromptInstance& prompt, const GenerationOptions& options) override;
};

// Keeps the first `max_tokens` whitespace-separated tokens of `text`.
GenerationResult truncate_tokens(std::string_view text, int max_tokens);

// ---------------------------------------------------------------------------
// HTTP clients

// JSON-over-HTTP POST with retry (timeouts, connection failures and 5xx),
// exponential backoff with jitter, and a per-endpoint in-flight bound.
class HttpTransport {
 public:
  explicit HttpTransport(ServiceEndpoint endpoint);

  nlohmann::json post(const std::string& route, const nlohmann::json& body);

  const ServiceEndpoint& endpoint() const { return endpoint_; }
  const InFlightGate& gate() const { return gate_; }
  int attempts() const { return attempts_.load(); }

 private:
  ServiceEndpoint endpoint_;
  std::string host_;
  std::string prefix_;
  InFlightGate gate_;
  std::atomic<int> attempts_{0};
  std::atomic<std::uint64_t> jitter_counter_{0};
};

class HttpJudge : public Judge {
 public:
  explicit HttpJudge(std::shared_ptr<HttpTransport> transport) : transport_(std::move(transport)) {}
  JudgeVerdict count_errors(const std::string& candidate, const std::string& reference) override;
  TemporalCategory classify_change(const std::string& current, const std::string& prior) override;

 private:
  std::shared_ptr<HttpTransport> transport_;
};

class HttpEmbedder : public metrics::Embedder {
 public:
  explicit HttpEmbedder(std::shared_ptr<HttpTransport> transport) : transport_(std::move(transport)) {}
  std::vector<std::vector<double>> embed(const std::vector<std::string>& tokens) override;

 private:
  std::shared_ptr<HttpTransport> transport_;
};

class HttpGenerator : public Generator {
 public:
  explicit HttpGenerator(std::shared_ptr<HttpTransport> transport) : transport_(std::move(transport)) {}
  GenerationResult generate(const corpus::PromptInstance& prompt, const GenerationOptions& options) override;

 private:
  std::shared_ptr<HttpTransport> transport_;
};

// ---------------------------------------------------------------------------
// Mock server

struct MockServerOptions {
  std::string host = "127.0.0.1";
  int port = 0;  // 0 picks a free port
  int max_concurrency = 8;
  std::chrono::milliseconds latency{0};  // artificial per-request delay
  std::size_t embedding_dimension = 64;
  std::uint64_t embedding_seed = 17;
};

// Serves /judge/errors, /judge/temporal, /embed and /generate with the mock
// backends. The /generate route echoes the prompt's words up to max_tokens.
class MockServer {
 public:
  explicit MockServer(MockServerOptions options = {});
  ~MockServer();
  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  // Binds and serves on a background thread. Throws ServiceError when the
  // port cannot be bound.
  void start();
  // Blocks the calling thread until stop().
  void run();
  void stop();

  int port() const { return port_; }
  std::string base_url() const;
  int peak_in_flight() const { return peak_.load(); }
  int requests() const { return requests_.load(); }

 private:
  struct Impl;
  void bind();

  MockServerOptions options_;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
  std::atomic<int> in_flight_{0};
  std::atomic<int> peak_{0};
  std::atomic<int> requests_{0};
};

}  // namespace cxrl::judge
