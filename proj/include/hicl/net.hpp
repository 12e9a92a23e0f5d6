#pragma once

#include <cstdint>
#include <functional>
#include <string>

namespace hicl {

struct HttpResult {
  enum class Failure { none, timeout, transport };
  int status = 0;
  std::string body;
  Failure failure = Failure::none;
  std::string detail;
};

// POST with a JSON body. Injectable so tests can script statuses, timeouts
// and transport failures without a server.
using HttpTransport = std::function<HttpResult(const std::string& url, const std::string& body,
                                               const std::string& bearer_token, int timeout_ms)>;

// Default transport backed by cpp-httplib.
HttpTransport default_http_transport();

// Retries apply only to transport failures, timeouts and rate-limit/server
// statuses (408, 429, 5xx). Provider "content" errors are terminal.
struct RetryPolicy {
  int max_attempts = 5;
  int base_delay_ms = 200;
  int max_delay_ms = 10000;
  int timeout_ms = 30000;
  uint64_t jitter_seed = 0;
};

bool retryable_status(int status);

// Exponential backoff with equal jitter: half fixed, half uniform, capped.
// jitter_bits supplies the random half deterministically.
int backoff_delay_ms(const RetryPolicy& policy, int attempt, uint64_t jitter_bits);

using Sleeper = std::function<void(int delay_ms)>;
Sleeper default_sleeper();

}  // namespace hicl
