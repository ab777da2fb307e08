// SPDX-License-Identifier: Apache-2.0

#include "mrsa/http_backend.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <thread>

#include <httplib.h>

#include "mrsa/jsonio.hpp"
#include "mrsa/rng.hpp"

namespace mrsa {

HttpBackend::HttpBackend(HttpEndpoint endpoint, TokenCounter counter)
    : endpoint_(std::move(endpoint)), counter_(std::move(counter)) {
  if (endpoint_.url.empty()) throw ConfigError("backend endpoint url is empty");
  if (!(endpoint_.timeout_s > 0)) throw ConfigError("backend timeout must be > 0");
}

GenerationResult parse_completion(const std::string& body,
                                  const TokenCounter& counter) {
  Json j;
  try {
    j = Json::parse(body);
  } catch (const Json::exception& e) {
    throw BackendError(BackendErrorKind::Malformed, false,
                       std::string("response is not JSON: ") + e.what());
  }
  try {
    const Json& choice = j.at("choices").at(0);
    GenerationResult r;
    r.text = choice.at("text").get<std::string>();
    const Json& fr = choice.value("finish_reason", Json("stop"));
    r.finish = fr.is_string() ? parse_finish_reason(fr.get<std::string>())
                              : FinishReason::Stop;
    if (auto it = choice.find("token_ids"); it != choice.end() && it->is_array())
      r.token_ids = it->get<std::vector<TokenId>>();
    if (auto lp = choice.find("logprobs"); lp != choice.end() && lp->is_object()) {
      if (auto t = lp->find("tokens"); t != lp->end())
        r.pieces = t->get<std::vector<std::string>>();
      if (auto t = lp->find("token_logprobs"); t != lp->end())
        for (const auto& v : *t) r.logprobs.push_back(v.is_null() ? 0.0 : v.get<double>());
      if (auto t = lp->find("top_logprobs"); t != lp->end() && t->is_array()) {
        for (const auto& step : *t) {
          std::vector<TopAlternative> alts;
          if (step.is_object())
            for (auto it = step.begin(); it != step.end(); ++it)
              alts.push_back({it.key(), it.value().get<double>()});
          std::sort(alts.begin(), alts.end(), [](const auto& a, const auto& b) {
            return a.logprob != b.logprob ? a.logprob > b.logprob : a.text < b.text;
          });
          r.top_alternatives.push_back(std::move(alts));
        }
      }
    }
    std::size_t from_array = std::max(r.token_ids.size(), r.pieces.size());
    auto usage = j.find("usage");
    if (usage != j.end() && usage->is_object() && usage->contains("completion_tokens")) {
      r.generated_tokens = usage->at("completion_tokens").get<std::size_t>();
    } else if (from_array > 0) {
      r.generated_tokens = from_array;
    } else {
      r.generated_tokens = counter(r.text);
    }
    return r;
  } catch (const Json::exception& e) {
    throw BackendError(BackendErrorKind::Malformed, false,
                       std::string("malformed completion response: ") + e.what());
  } catch (const ParseError& e) {
    throw BackendError(BackendErrorKind::Malformed, false, e.what());
  }
}

GenerationResult HttpBackend::attempt(const GenerationRequest& request) const {
  Json body = {{"model", endpoint_.model},
               {"prompt", request.prompt},
               {"max_tokens", request.decode_budget},
               {"temperature", request.temperature},
               {"top_p", request.top_p},
               {"seed", request.seed}};
  if (!request.stop.empty()) body["stop"] = request.stop;
  if (endpoint_.logprobs > 0) body["logprobs"] = endpoint_.logprobs;

  httplib::Client client(endpoint_.url);
  const auto timeout = std::chrono::duration<double>(endpoint_.timeout_s);
  const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(timeout);
  client.set_connection_timeout(micros);
  client.set_read_timeout(micros);
  client.set_write_timeout(micros);
  httplib::Headers headers;
  if (!endpoint_.api_key.empty())
    headers.emplace("Authorization", "Bearer " + endpoint_.api_key);

  const auto start = std::chrono::steady_clock::now();
  auto res = client.Post(endpoint_.path, headers, body.dump(), "application/json");
  if (!res) {
    const auto err = res.error();
    const bool timed_out =
        err == httplib::Error::ConnectionTimeout ||
        (err == httplib::Error::Read &&
         std::chrono::steady_clock::now() - start >= timeout);
    if (timed_out)
      throw BackendError(BackendErrorKind::Timeout, true,
                         "no response within " + std::to_string(endpoint_.timeout_s) + " s");
    throw BackendError(BackendErrorKind::Transport, true,
                       "request to " + endpoint_.url + endpoint_.path +
                           " failed: " + httplib::to_string(err));
  }
  const int status = res->status;
  if (status < 200 || status >= 300) {
    const bool retryable = status == 408 || status == 429 || status >= 500;
    throw BackendError(BackendErrorKind::HttpStatus, retryable,
                       "HTTP " + std::to_string(status) + ": " + res->body.substr(0, 200),
                       status);
  }
  auto r = parse_completion(res->body, counter_);
  if (r.generated_tokens > request.decode_budget) enforce_budget(r, request.decode_budget);
  return r;
}

GenerationResult HttpBackend::generate(const GenerationRequest& request) {
  request.validate();
  SplitMix64 jitter(derive_seed(request.seed, {fnv1a64("http-backoff")}));
  for (std::size_t k = 0;; ++k) {
    try {
      return attempt(request);
    } catch (const BackendError& e) {
      if (!e.retryable() || k >= endpoint_.max_retries) throw;
    }
    const double delay = std::min(endpoint_.backoff_max_s,
                                  endpoint_.backoff_base_s * std::ldexp(1.0, static_cast<int>(k)));
    std::this_thread::sleep_for(
        std::chrono::duration<double>(delay * (0.5 + 0.5 * jitter.uniform())));
  }
}

}  // namespace mrsa
