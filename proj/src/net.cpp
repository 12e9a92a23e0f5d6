#include "hicl/net.hpp"

#include <algorithm>
#include <chrono>
#include <thread>

#include <httplib.h>

#include "hicl/util.hpp"

namespace hicl {

HttpTransport default_http_transport() {
  return [](const std::string& url, const std::string& body, const std::string& bearer_token,
            int timeout_ms) -> HttpResult {
    // Split "scheme://host[:port]/path".
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
      return {0, "", HttpResult::Failure::transport, "bad url: " + url};
    }
    const auto path_start = url.find('/', scheme_end + 3);
    const std::string origin = path_start == std::string::npos ? url : url.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

    httplib::Client client(origin);
    client.set_connection_timeout(0, timeout_ms * 1000LL);
    client.set_read_timeout(timeout_ms / 1000, (timeout_ms % 1000) * 1000);
    client.set_write_timeout(timeout_ms / 1000, (timeout_ms % 1000) * 1000);
    httplib::Headers headers;
    if (!bearer_token.empty()) headers.emplace("Authorization", "Bearer " + bearer_token);

    auto res = client.Post(path, headers, body, "application/json");
    if (!res) {
      const auto err = res.error();
      if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
          err == httplib::Error::Write) {
        return {0, "", HttpResult::Failure::timeout, httplib::to_string(err)};
      }
      return {0, "", HttpResult::Failure::transport, httplib::to_string(err)};
    }
    return {res->status, res->body, HttpResult::Failure::none, ""};
  };
}

bool retryable_status(int status) {
  return status == 408 || status == 429 || (status >= 500 && status < 600);
}

int backoff_delay_ms(const RetryPolicy& policy, int attempt, uint64_t jitter_bits) {
  const int64_t raw = static_cast<int64_t>(policy.base_delay_ms) << std::min(attempt - 1, 30);
  const int64_t capped = std::min<int64_t>(raw, policy.max_delay_ms);
  const int64_t half = capped / 2;
  const int64_t jitter = half > 0 ? static_cast<int64_t>(jitter_bits % static_cast<uint64_t>(half + 1)) : 0;
  return static_cast<int>(half + jitter);
}

Sleeper default_sleeper() {
  return [](int delay_ms) { std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms)); };
}

}  // namespace hicl
