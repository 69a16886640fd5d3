#pragma once

// Chat-completion transports: an OpenAI-compatible HTTP client with retries
// and a request-rate limiter, plus in-process fakes for tests and dry runs.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
// <resolv.h>, pulled in by httplib, defines _res as a macro; Eigen uses the
// name as a parameter.
#undef _res
#include <nlohmann/json.hpp>

#include "adaptometer/error.hpp"
#include "adaptometer/util/rng.hpp"

namespace adaptometer::genconv {

struct ChatMessage {
  std::string role;  // "system", "user" or "assistant"
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

struct SamplingParameters {
  std::optional<double> temperature;
  std::optional<double> top_p;
  std::optional<int> max_tokens;
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  SamplingParameters sampling;
  /// Conversation id; never sent, lets fakes tell conversations apart.
  std::string tag;
};

class TransportError : public DataError {
 public:
  TransportError(const std::string& what, bool transient) : DataError(what), transient_(transient) {}
  bool transient() const noexcept { return transient_; }

 private:
  bool transient_;
};

/// Must be safe to call from several threads at once.
class ChatTransport {
 public:
  virtual ~ChatTransport() = default;
  virtual std::string complete(const ChatRequest& request) = 0;
  virtual std::size_t request_count() const = 0;
};

inline nlohmann::json request_body(const ChatRequest& request) {
  nlohmann::json body;
  body["model"] = request.model;
  body["messages"] = nlohmann::json::array();
  for (const auto& m : request.messages) body["messages"].push_back({{"role", m.role}, {"content", m.content}});
  // Unset parameters stay off the wire so the provider defaults apply.
  if (request.sampling.temperature) body["temperature"] = *request.sampling.temperature;
  if (request.sampling.top_p) body["top_p"] = *request.sampling.top_p;
  if (request.sampling.max_tokens) body["max_tokens"] = *request.sampling.max_tokens;
  return body;
}

inline std::string reply_content(const std::string& response_body) {
  nlohmann::json j = nlohmann::json::parse(response_body, nullptr, false);
  if (j.is_discarded()) throw TransportError("response is not JSON", false);
  if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty())
    throw TransportError("response has no choices", false);
  const auto& choice = j["choices"][0];
  if (!choice.contains("message") || !choice["message"].contains("content"))
    throw TransportError("response choice has no message content", false);
  const auto& c = choice["message"]["content"];
  return c.is_string() ? c.get<std::string>() : std::string();
}

struct RetryPolicy {
  int max_attempts = 5;
  double backoff_base_s = 1.0;
  double max_backoff_s = 60.0;
};

/// Token bucket over requests; a rate of 0 disables limiting.
class RateLimiter {
 public:
  explicit RateLimiter(double requests_per_minute)
      : rate_per_s_(requests_per_minute / 60.0),
        capacity_(std::max(1.0, requests_per_minute / 60.0)),
        tokens_(capacity_),
        last_(std::chrono::steady_clock::now()) {}

  void acquire() {
    if (rate_per_s_ <= 0) return;
    for (;;) {
      std::chrono::duration<double> wait{};
      {
        std::lock_guard lock(mutex_);
        const auto now = std::chrono::steady_clock::now();
        tokens_ = std::min(capacity_, tokens_ + std::chrono::duration<double>(now - last_).count() * rate_per_s_);
        last_ = now;
        if (tokens_ >= 1.0) {
          tokens_ -= 1.0;
          return;
        }
        wait = std::chrono::duration<double>((1.0 - tokens_) / rate_per_s_);
      }
      std::this_thread::sleep_for(wait);
    }
  }

 private:
  double rate_per_s_;
  double capacity_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
  std::mutex mutex_;
};

struct HttpTransportConfig {
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string api_key;
  double timeout_s = 120.0;
  RetryPolicy retry;
  double requests_per_minute = 60.0;
};

/// Splits "https://host:port/path" into scheme+authority and path.
inline std::pair<std::string, std::string> split_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw UsageError("endpoint must be an absolute URL: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

class HttpChatTransport : public ChatTransport {
 public:
  explicit HttpChatTransport(HttpTransportConfig cfg)
      : cfg_(std::move(cfg)), limiter_(cfg_.requests_per_minute), jitter_(std::random_device{}()) {
    if (cfg_.retry.max_attempts < 1) throw UsageError("retry policy needs at least one attempt");
    std::tie(base_, path_) = split_endpoint(cfg_.endpoint);
  }

  std::string complete(const ChatRequest& request) override {
    const std::string body = request_body(request).dump();
    std::string last_error;
    for (int attempt = 1; attempt <= cfg_.retry.max_attempts; ++attempt) {
      if (attempt > 1) std::this_thread::sleep_for(backoff(attempt - 1));
      limiter_.acquire();
      ++requests_;
      // One client per call: httplib clients are not meant to be shared
      // across threads.
      httplib::Client client(base_);
      const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
          std::chrono::duration<double>(cfg_.timeout_s));
      client.set_connection_timeout(timeout);
      client.set_read_timeout(timeout);
      client.set_write_timeout(timeout);
      if (!cfg_.api_key.empty()) client.set_bearer_token_auth(cfg_.api_key);
      auto res = client.Post(path_, body, "application/json");
      if (!res) {
        last_error = "request to " + cfg_.endpoint + " failed: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status == 200) return reply_content(res->body);
      last_error = "HTTP " + std::to_string(res->status) + " from " + cfg_.endpoint + ": " + res->body.substr(0, 200);
      const bool transient = res->status == 408 || res->status == 409 || res->status == 429 || res->status >= 500;
      if (!transient) throw TransportError(last_error, false);
    }
    throw TransportError(last_error + " (gave up after " + std::to_string(cfg_.retry.max_attempts) + " attempts)",
                         true);
  }

  std::size_t request_count() const override { return requests_; }

 private:
  std::chrono::duration<double> backoff(int retry) {
    double delay = std::min(cfg_.retry.max_backoff_s, cfg_.retry.backoff_base_s * std::pow(2.0, retry - 1));
    std::lock_guard lock(jitter_mutex_);
    // Jitter: uniform in [delay/2, delay].
    delay *= 0.5 + 0.5 * util::uniform01(jitter_);
    return std::chrono::duration<double>(delay);
  }

  HttpTransportConfig cfg_;
  std::string base_;
  std::string path_;
  RateLimiter limiter_;
  std::atomic<std::size_t> requests_{0};
  std::mt19937_64 jitter_;
  std::mutex jitter_mutex_;
};

/// Answers with a user-supplied function and records every request.
class FakeTransport : public ChatTransport {
 public:
  using Responder = std::function<std::string(const ChatRequest&)>;

  explicit FakeTransport(Responder responder) : responder_(std::move(responder)) {}

  std::string complete(const ChatRequest& request) override {
    {
      std::lock_guard lock(mutex_);
      requests_.push_back(request);
    }
    return responder_(request);
  }

  std::size_t request_count() const override {
    std::lock_guard lock(mutex_);
    return requests_.size();
  }

  std::vector<ChatRequest> requests() const {
    std::lock_guard lock(mutex_);
    return requests_;
  }

 private:
  Responder responder_;
  mutable std::mutex mutex_;
  std::vector<ChatRequest> requests_;
};

/// Offline stand-in for dry runs: replies are pseudo-random word sequences
/// keyed by conversation, system prompt and history length, so runs are reproducible
/// and replies do not repeat.
inline std::unique_ptr<FakeTransport> canned_transport(std::uint64_t seed, std::size_t words_per_reply = 60) {
  static const std::vector<std::string> kWords = {
      "a", "good", "day", "starts", "with", "coffee", "and", "quiet", "time", "before", "the", "world", "wakes",
      "up", "I", "think", "you", "might", "be", "right", "about", "small", "moments", "that", "matter", "most",
      "when", "friends", "call", "or", "sun", "comes", "out", "after", "rain", "we", "often", "forget", "how",
      "much", "simple", "routines", "help", "us", "feel", "grounded", "maybe", "it", "is", "also", "finishing",
      "something", "meaningful", "at", "work", "walking", "outside", "reading", "book", "cooking", "dinner",
      "laughing", "together", "sleeping", "well", "night", "learning", "new", "skill", "helping", "someone",
      "else", "feeling", "proud", "of", "progress", "even", "if", "slow", "honestly", "rest", "counts", "too",
      "what", "do", "your", "mornings", "usually", "look", "like", "for", "me", "music", "makes", "difference"};
  return std::make_unique<FakeTransport>([seed, words_per_reply](const ChatRequest& req) {
    const std::string& system = req.messages.empty() ? std::string() : req.messages.front().content;
    auto rng = util::substream(seed, req.tag, system, static_cast<std::uint64_t>(req.messages.size()));
    std::string out;
    for (std::size_t i = 0; i < words_per_reply; ++i) {
      if (i) out += ' ';
      out += kWords[util::uniform_index(rng, kWords.size())];
    }
    out += '.';
    return out;
  });
}

}  // namespace adaptometer::genconv
