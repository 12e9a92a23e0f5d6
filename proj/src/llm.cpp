#include "hicl/llm.hpp"

#include <chrono>
#include <fstream>
#include <regex>

namespace hicl {

std::string role_name(Role r) {
  switch (r) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "user";
}

Role role_from_name(const std::string& name) {
  if (name == "system") return Role::system;
  if (name == "user") return Role::user;
  if (name == "assistant") return Role::assistant;
  throw Error("unknown chat role: " + name);
}

std::string finish_reason_name(FinishReason r) {
  switch (r) {
    case FinishReason::stop: return "stop";
    case FinishReason::length: return "length";
    case FinishReason::content_filter: return "content_filter";
    case FinishReason::error: return "error";
    case FinishReason::unknown: return "unknown";
  }
  return "unknown";
}

FinishReason finish_reason_from_name(const std::string& name) {
  if (name == "stop") return FinishReason::stop;
  if (name == "length") return FinishReason::length;
  if (name == "content_filter") return FinishReason::content_filter;
  if (name == "error") return FinishReason::error;
  return FinishReason::unknown;
}

void validate_request(const ChatRequest& request) {
  if (request.messages.empty()) throw Error("chat request: messages must be non-empty");
  if (request.messages.back().role != Role::user) {
    throw Error("chat request: last message must have role user");
  }
  if (request.temperature < 0) throw Error("chat request: temperature must be >= 0");
  if (request.max_tokens < 1) throw Error("chat request: max_tokens must be positive");
}

uint64_t prompt_hash(const ChatRequest& request) {
  uint64_t h = kFnvOffset;
  h = fnv1a64(request.model_id, h);
  for (const auto& m : request.messages) {
    h = fnv1a64("\x1f", h);
    h = fnv1a64(role_name(m.role), h);
    h = fnv1a64("\x1e", h);
    h = fnv1a64(m.text, h);
  }
  return h;
}

json request_to_json(const ChatRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) {
    messages.push_back({{"role", role_name(m.role)}, {"content", m.text}});
  }
  return {{"model", request.model_id},
          {"messages", messages},
          {"temperature", request.temperature},
          {"max_tokens", request.max_tokens}};
}

json response_to_json(const ChatResponse& response) {
  return {{"text", response.text},
          {"finish_reason", finish_reason_name(response.finish_reason)},
          {"latency_ms", response.latency_ms},
          {"retries", response.retries}};
}

ChatResponse response_from_json(const json& j) {
  ChatResponse r;
  r.text = j.at("text").get<std::string>();
  r.finish_reason = finish_reason_from_name(j.at("finish_reason").get<std::string>());
  r.latency_ms = j.value("latency_ms", 0L);
  r.retries = j.value("retries", 0);
  return r;
}

MockChatClient::MockChatClient(std::string default_response)
    : default_response_(std::move(default_response)) {}

MockChatClient MockChatClient::from_script_file(const std::string& path,
                                                std::string default_response) {
  MockChatClient client(std::move(default_response));
  for_each_line(path, [&](int line_no, const std::string& line) {
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(path + ":" + std::to_string(line_no) + ": malformed mock script: " + e.what());
    }
    if (j.contains("default")) {
      client.default_response_ = j.at("default").get<std::string>();
      return;
    }
    client.add_rule(j.at("match").get<std::string>(), j.at("response").get<std::string>(),
                    j.value("regex", false));
  });
  return client;
}

void MockChatClient::add_rule(std::string pattern, std::string response, bool regex) {
  rules_.push_back({std::move(pattern), std::move(response), regex});
}

ChatResponse MockChatClient::complete(const ChatRequest& request) {
  validate_request(request);
  std::string prompt;
  for (const auto& m : request.messages) {
    if (!prompt.empty()) prompt += "\n";
    prompt += m.text;
  }
  for (const auto& rule : rules_) {
    const bool hit = rule.regex ? std::regex_search(prompt, std::regex(rule.pattern))
                                : prompt.find(rule.pattern) != std::string::npos;
    if (hit) return {rule.response, FinishReason::stop, 0, 0};
  }
  return {default_response_, FinishReason::stop, 0, 0};
}

HttpChatClient::HttpChatClient(std::string endpoint_url, std::string bearer_token,
                               RetryPolicy policy, HttpTransport transport, Sleeper sleeper)
    : endpoint_url_(std::move(endpoint_url)),
      bearer_token_(std::move(bearer_token)),
      policy_(policy),
      transport_(std::move(transport)),
      sleeper_(std::move(sleeper)) {}

ChatResponse HttpChatClient::complete(const ChatRequest& request) {
  validate_request(request);
  const std::string payload = request_to_json(request).dump();

  DetRng jitter(policy_.jitter_seed ^ prompt_hash(request));
  const auto started = std::chrono::steady_clock::now();

  HttpResult::Failure last_failure = HttpResult::Failure::none;
  int last_status = 0;
  std::string last_detail;

  for (int attempt = 1; attempt <= policy_.max_attempts; ++attempt) {
    const HttpResult res = transport_(endpoint_url_, payload, bearer_token_, policy_.timeout_ms);

    if (res.failure == HttpResult::Failure::none && res.status == 200) {
      ChatResponse out;
      try {
        const json parsed = json::parse(res.body);
        const auto& choice = parsed.at("choices").at(0);
        out.text = choice.at("message").at("content").get<std::string>();
        out.finish_reason = finish_reason_from_name(choice.value("finish_reason", "stop"));
      } catch (const json::exception& e) {
        throw ProviderError(std::string("malformed completion response: ") + e.what(), res.status);
      }
      if (out.text.empty() && out.finish_reason == FinishReason::stop) {
        throw ProviderError("empty completion with normal finish_reason", res.status);
      }
      out.retries = attempt - 1;
      out.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - started)
                           .count();
      return out;
    }

    if (res.failure == HttpResult::Failure::none && !retryable_status(res.status)) {
      throw ProviderError("provider error: HTTP " + std::to_string(res.status) + " " + res.body,
                          res.status);
    }

    last_failure = res.failure;
    last_status = res.status;
    last_detail = res.detail;
    if (attempt < policy_.max_attempts) {
      sleeper_(backoff_delay_ms(policy_, attempt, jitter.next_u64()));
    }
  }

  const std::string suffix = " after " + std::to_string(policy_.max_attempts) + " attempts";
  if (last_failure == HttpResult::Failure::timeout) {
    throw TimeoutError("chat endpoint timed out" + suffix, policy_.max_attempts);
  }
  if (last_failure == HttpResult::Failure::transport) {
    throw TransportError("chat transport failed" + suffix + " (" + last_detail + ")",
                         policy_.max_attempts);
  }
  throw ProviderError("chat endpoint returned HTTP " + std::to_string(last_status) + suffix,
                      last_status);
}

ReplayLogWriter::ReplayLogWriter(std::string path, bool deterministic_time)
    : path_(std::move(path)), deterministic_time_(deterministic_time) {
  const std::filesystem::path p(path_);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
}

void ReplayLogWriter::append(const ChatRequest& request, const ChatResponse& response) {
  long timestamp_ms = 0;
  if (!deterministic_time_) {
    timestamp_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                       std::chrono::system_clock::now().time_since_epoch())
                       .count();
  }
  const json record = {{"request_tag", request.request_tag},
                       {"prompt_hash", to_hex(prompt_hash(request))},
                       {"request", request_to_json(request)},
                       {"response", response_to_json(response)},
                       {"timestamp_ms", timestamp_ms}};
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  if (!out) throw Error("cannot append to replay log: " + path_);
  out << record.dump() << "\n";
}

LoggingChatClient::LoggingChatClient(std::unique_ptr<ChatClient> inner,
                                     std::shared_ptr<ReplayLogWriter> log)
    : inner_(std::move(inner)), log_(std::move(log)) {}

ChatResponse LoggingChatClient::complete(const ChatRequest& request) {
  ChatResponse response = inner_->complete(request);
  if (log_) log_->append(request, response);
  return response;
}

ReplayChatClient::ReplayChatClient(const std::string& log_path) : log_path_(log_path) {
  for_each_line(log_path, [&](int line_no, const std::string& line) {
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(log_path + ":" + std::to_string(line_no) + ": malformed replay record: " +
                  e.what());
    }
    uint64_t hash = 0;
    const std::string hex = j.at("prompt_hash").get<std::string>();
    hash = std::stoull(hex, nullptr, 16);
    // First record wins; temperature-0 runs repeat responses anyway.
    by_hash_.emplace(hash, response_from_json(j.at("response")));
  });
}

ChatResponse ReplayChatClient::complete(const ChatRequest& request) {
  validate_request(request);
  auto it = by_hash_.find(prompt_hash(request));
  if (it == by_hash_.end()) {
    throw LlmError("replay log " + log_path_ + " has no record for prompt (tag=" +
                   request.request_tag + ")");
  }
  return it->second;
}

}  // namespace hicl
