// SPDX-License-Identifier: Apache-2.0
//
// Inference backend contract plus the deterministic backends used for tests,
// offline runs and replay. Every backend is safe to call from many threads.

#pragma once

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "mrsa/core.hpp"
#include "mrsa/error.hpp"
#include "mrsa/tokens.hpp"

namespace mrsa {

// Where a request sits in the orchestration; informational for real servers,
// load-bearing for the oracle backend.
struct RequestTag {
  std::string problem_id;
  std::size_t round = 0;
  std::size_t worker = 0;
  std::size_t attempt = 0;
};

struct GenerationRequest {
  std::string prompt;
  std::size_t decode_budget = 1;
  double temperature = 1.0;
  double top_p = 1.0;
  std::vector<std::string> stop;
  std::uint64_t seed = 0;
  RequestTag tag;

  void validate() const;
};

struct TopAlternative {
  std::string text;
  double logprob = 0.0;
};

struct GenerationResult {
  std::string text;
  std::vector<std::string> pieces;  // per-token text when known
  std::vector<TokenId> token_ids;   // empty when the backend returns text only
  std::size_t generated_tokens = 0;
  FinishReason finish = FinishReason::Stop;
  std::vector<double> logprobs;  // per generated token, when supported
  std::vector<std::vector<TopAlternative>> top_alternatives;
  // Min-p replay: ids kept by the serving-side filter at each step.
  std::vector<std::vector<TokenId>> minp_kept;

  bool has_logprobs() const { return !logprobs.empty(); }
};

class Backend {
 public:
  virtual ~Backend() = default;
  // Returns a result with generated_tokens <= request.decode_budget or throws
  // BackendError.
  virtual GenerationResult generate(const GenerationRequest& request) = 0;
  virtual std::string name() const = 0;
};

// Stable key of everything that determines a deterministic backend's output.
std::string request_key(const GenerationRequest& request);

// Truncates a result's pieces to the request budget, fixing up finish reason
// and counts.
void enforce_budget(GenerationResult& result, std::size_t budget);

// ---------------------------------------------------------------------------

struct EchoOptions {
  std::size_t length = 64;  // scripted total generated tokens
  std::function<std::size_t(const GenerationRequest&)> length_fn;
  std::uint32_t vocab = 262272;
};

// Emits "<think> e<id> ... </think> \boxed{<h>}" where every id is a seeded
// hash of the prompt, and stops at min(scripted length, budget).
class EchoBackend final : public Backend {
 public:
  explicit EchoBackend(EchoOptions options = {}) : options_(std::move(options)) {}
  GenerationResult generate(const GenerationRequest& request) override;
  std::string name() const override { return "echo"; }

 private:
  EchoOptions options_;
};

struct OracleOptions {
  // Probability that a round-t candidate is correct; the last entry repeats.
  std::vector<double> round_accuracy = {1.0};
  std::size_t reasoning_length = 32;
  std::uint32_t vocab = 262272;
};

// Answers correctly with probability p_t at round t, so aggregation helps by
// construction.
class OracleBackend final : public Backend {
 public:
  OracleBackend(std::unordered_map<std::string, std::string> gold_by_problem,
                OracleOptions options);
  static OracleBackend for_problems(const std::vector<Problem>& problems,
                                    OracleOptions options);
  GenerationResult generate(const GenerationRequest& request) override;
  std::string name() const override { return "oracle"; }

 private:
  std::unordered_map<std::string, std::string> gold_;
  OracleOptions options_;
};

// Synthetic "What is a + b?" problems with gold answers.
std::vector<Problem> make_arithmetic_problems(std::size_t count,
                                              std::uint64_t seed);

struct ReplayRecord {
  std::string key;
  GenerationRequest request;
  GenerationResult result;
};

class ReplayBackend final : public Backend {
 public:
  explicit ReplayBackend(std::vector<ReplayRecord> records);
  static ReplayBackend from_jsonl(const std::string& path);
  GenerationResult generate(const GenerationRequest& request) override;
  std::string name() const override { return "replay"; }
  std::size_t size() const { return records_.size(); }

 private:
  std::map<std::string, GenerationResult> records_;
};

// Wraps a backend and keeps every successful exchange for later replay.
class RecordingBackend final : public Backend {
 public:
  explicit RecordingBackend(Backend& inner) : inner_(inner) {}
  GenerationResult generate(const GenerationRequest& request) override;
  std::string name() const override { return inner_.name(); }

  // Records sorted by key, so dumps are independent of scheduling.
  std::vector<ReplayRecord> records() const;
  void write_jsonl(const std::string& path) const;

 private:
  Backend& inner_;
  mutable std::mutex mu_;
  std::map<std::string, ReplayRecord> records_;
};

// Caps in-flight requests process-wide and keeps a high-water mark.
class InflightLimiter {
 public:
  explicit InflightLimiter(std::size_t cap);
  void acquire();
  void release();
  std::size_t cap() const { return cap_; }
  std::size_t peak() const { return peak_.load(); }
  std::size_t in_flight() const;

 private:
  std::size_t cap_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::size_t current_ = 0;
  std::atomic<std::size_t> peak_{0};
};

class LimitedBackend final : public Backend {
 public:
  LimitedBackend(Backend& inner, InflightLimiter& limiter)
      : inner_(inner), limiter_(limiter) {}
  GenerationResult generate(const GenerationRequest& request) override;
  std::string name() const override { return inner_.name(); }

 private:
  Backend& inner_;
  InflightLimiter& limiter_;
};

}  // namespace mrsa
