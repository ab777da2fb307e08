// SPDX-License-Identifier: Apache-2.0
//
// Client for OpenAI-compatible completions servers (vLLM, SGLang, ...).
// Request and response fields are listed in docs/formats.md.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "mrsa/backend.hpp"
#include "mrsa/tokens.hpp"

namespace mrsa {

struct HttpEndpoint {
  std::string url = "http://127.0.0.1:8000";  // scheme://host[:port]
  std::string path = "/v1/completions";
  std::string model = "default";
  std::string api_key;            // sent as a bearer token when non-empty
  double timeout_s = 600.0;       // per attempt
  std::size_t max_retries = 3;
  double backoff_base_s = 0.5;    // delay before retry k is base * 2^k, jittered
  double backoff_max_s = 8.0;
  std::size_t logprobs = 0;       // top-k alternatives to request; 0 = none

  bool operator==(const HttpEndpoint&) const = default;
};

class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(HttpEndpoint endpoint,
                       TokenCounter counter = default_token_counter());

  // Retries 408, 429, 5xx, transport errors and timeouts; other statuses and
  // malformed bodies fail at once.
  GenerationResult generate(const GenerationRequest& request) override;
  std::string name() const override { return "http"; }

  const HttpEndpoint& endpoint() const { return endpoint_; }

 private:
  GenerationResult attempt(const GenerationRequest& request) const;

  HttpEndpoint endpoint_;
  TokenCounter counter_;
};

// Parses a completions response body. Token count precedence:
// usage.completion_tokens, then the returned token array, then the counter.
GenerationResult parse_completion(const std::string& body,
                                  const TokenCounter& counter);

}  // namespace mrsa
