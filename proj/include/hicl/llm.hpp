#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hicl/net.hpp"
#include "hicl/util.hpp"

namespace hicl {

enum class Role { system, user, assistant };

std::string role_name(Role r);
Role role_from_name(const std::string& name);

struct ChatMessage {
  Role role = Role::user;
  std::string text;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;  // non-empty, last role must be user
  std::string model_id;
  double temperature = 0.0;
  int max_tokens = 256;
  std::string request_tag;  // for logging/replay
};

enum class FinishReason { stop, length, content_filter, error, unknown };

std::string finish_reason_name(FinishReason r);
FinishReason finish_reason_from_name(const std::string& name);

struct ChatResponse {
  std::string text;
  FinishReason finish_reason = FinishReason::stop;
  long latency_ms = 0;
  int retries = 0;
};

struct LlmError : Error {
  using Error::Error;
};
// Transport gave out after all attempts.
struct TransportError : LlmError {
  TransportError(const std::string& msg, int attempts) : LlmError(msg), attempts(attempts) {}
  int attempts;
};
// Every attempt timed out.
struct TimeoutError : LlmError {
  TimeoutError(const std::string& msg, int attempts) : LlmError(msg), attempts(attempts) {}
  int attempts;
};
// The provider rejected the request; not retried unless rate-limit/server.
struct ProviderError : LlmError {
  ProviderError(const std::string& msg, int status) : LlmError(msg), status(status) {}
  int status;
};

void validate_request(const ChatRequest& request);

// Hash of the prompt content (roles + texts); the replay key.
uint64_t prompt_hash(const ChatRequest& request);

json request_to_json(const ChatRequest& request);
json response_to_json(const ChatResponse& response);
ChatResponse response_from_json(const json& j);

class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual ChatResponse complete(const ChatRequest& request) = 0;
};

// Scripted mock: an ordered list of (pattern, response) rules; the first
// matching pattern wins and unmatched prompts get the configured default.
// Pure function of (script, prompt).
class MockChatClient : public ChatClient {
 public:
  explicit MockChatClient(std::string default_response = "None");

  // Script file: JSONL of {"match": str, "response": str, "regex": bool?}.
  static MockChatClient from_script_file(const std::string& path,
                                         std::string default_response = "None");

  void add_rule(std::string pattern, std::string response, bool regex = false);

  ChatResponse complete(const ChatRequest& request) override;

 private:
  struct Rule {
    std::string pattern;
    std::string response;
    bool regex = false;
  };
  std::vector<Rule> rules_;
  std::string default_response_;
};

// Chat-completions endpoint client:
// POST {model, messages, temperature, max_tokens} -> {choices:[{message:{content}, finish_reason}]}.
class HttpChatClient : public ChatClient {
 public:
  HttpChatClient(std::string endpoint_url, std::string bearer_token, RetryPolicy policy = {},
                 HttpTransport transport = default_http_transport(),
                 Sleeper sleeper = default_sleeper());

  ChatResponse complete(const ChatRequest& request) override;

 private:
  std::string endpoint_url_;
  std::string bearer_token_;
  RetryPolicy policy_;
  HttpTransport transport_;
  Sleeper sleeper_;
};

// Append-only JSONL request/response log backing replay mode.
class ReplayLogWriter {
 public:
  // deterministic_time=true writes timestamp_ms=0 (mock/fixture runs).
  explicit ReplayLogWriter(std::string path, bool deterministic_time = false);

  void append(const ChatRequest& request, const ChatResponse& response);
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  bool deterministic_time_;
};

// Decorator that records every completed call.
class LoggingChatClient : public ChatClient {
 public:
  LoggingChatClient(std::unique_ptr<ChatClient> inner, std::shared_ptr<ReplayLogWriter> log);
  ChatResponse complete(const ChatRequest& request) override;

 private:
  std::unique_ptr<ChatClient> inner_;
  std::shared_ptr<ReplayLogWriter> log_;
};

// Serves completions from a replay log, keyed by prompt hash. Offline.
class ReplayChatClient : public ChatClient {
 public:
  explicit ReplayChatClient(const std::string& log_path);
  ChatResponse complete(const ChatRequest& request) override;

 private:
  std::unordered_map<uint64_t, ChatResponse> by_hash_;
  std::string log_path_;
};

}  // namespace hicl
