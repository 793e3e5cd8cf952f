#pragma once

#include "wake/errors.hpp"

#include <httplib.h>
// The libc resolver header behind httplib defines _res as a macro,
// which breaks any later header using that identifier (Eigen does).
#ifdef _res
#undef _res
#endif
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace wake {

struct ChatMessage {
  std::string role;
  std::string content;
};

struct LlmOptions {
  std::string base_url;
  std::string model = "wakescout-default";
  std::string api_key;
  double temperature = 0.35;
  int max_tokens = 1024;
  double timeout_s = 30.0;
  int max_attempts = 3;
  double backoff_base_s = 0.5;
};

/// Chat-completions client. Transport failures and 5xx retry with exponential
/// backoff and then surface as Kind::unavailable; 4xx as invalid_parameter;
/// unparseable responses as Kind::decode.
class LlmClient {
 public:
  explicit LlmClient(LlmOptions options) : options_(std::move(options)) {
    if (options_.base_url.empty())
      throw std::invalid_argument("LlmClient: empty base_url");
    if (options_.max_attempts < 1)
      throw std::invalid_argument("LlmClient: max_attempts must be >= 1");
    const std::string& e = options_.base_url;
    const auto scheme = e.find("://");
    if (scheme == std::string::npos)
      throw std::invalid_argument("LlmClient: base_url must include scheme");
    const auto slash = e.find('/', scheme + 3);
    if (slash == std::string::npos) {
      host_ = e;
    } else {
      host_ = e.substr(0, slash);
      prefix_ = e.substr(slash);
      while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    }
  }

  /// Reads WAKE_AGENT_LLM_URL and WAKE_AGENT_API_KEY.
  static LlmOptions from_env(std::string model) {
    LlmOptions opt;
    opt.model = std::move(model);
    if (const char* url = std::getenv("WAKE_AGENT_LLM_URL")) opt.base_url = url;
    if (const char* key = std::getenv("WAKE_AGENT_API_KEY")) opt.api_key = key;
    return opt;
  }

  std::string complete(const std::vector<ChatMessage>& messages) const {
    nlohmann::json msgs = nlohmann::json::array();
    for (const auto& m : messages)
      msgs.push_back({{"role", m.role}, {"content", m.content}});
    const nlohmann::json body = {{"model", options_.model},
                                 {"messages", msgs},
                                 {"temperature", options_.temperature},
                                 {"max_tokens", options_.max_tokens}};
    const std::string payload = body.dump();

    std::string last_error = "no attempt made";
    for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
      if (attempt > 1) {
        const double delay =
            options_.backoff_base_s * std::pow(2.0, attempt - 2);
        if (delay > 0.0)
          std::this_thread::sleep_for(std::chrono::duration<double>(delay));
      }
      httplib::Client client(host_);
      client.set_connection_timeout(
          std::chrono::duration<double>(options_.timeout_s));
      client.set_read_timeout(std::chrono::duration<double>(options_.timeout_s));
      httplib::Headers headers;
      if (!options_.api_key.empty())
        headers.emplace("Authorization", "Bearer " + options_.api_key);
      auto res = client.Post(prefix_ + "/chat/completions", headers, payload,
                             "application/json");
      if (!res) {
        last_error = "transport failure: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status >= 500) {
        last_error = "server status " + std::to_string(res->status);
        continue;
      }
      if (res->status >= 400)
        throw RemoteError(RemoteError::Kind::invalid_parameter,
                          "completion rejected with status " +
                              std::to_string(res->status) + ": " + res->body);
      if (res->status != 200)
        throw RemoteError(RemoteError::Kind::decode,
                          "unexpected status " + std::to_string(res->status));
      return extract_content(res->body);
    }
    throw RemoteError(RemoteError::Kind::unavailable,
                      "completion failed after " +
                          std::to_string(options_.max_attempts) +
                          " attempts (" + last_error + ")");
  }

  const LlmOptions& options() const { return options_; }

 private:
  static std::string extract_content(const std::string& body) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      throw RemoteError(RemoteError::Kind::decode,
                        std::string("response is not valid JSON: ") + e.what());
    }
    try {
      return j.at("choices").at(0).at("message").at("content")
          .get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw RemoteError(
          RemoteError::Kind::decode,
          std::string("response missing choices[0].message.content: ") +
              e.what());
    }
  }

  LlmOptions options_;
  std::string host_;
  std::string prefix_;
};

/// Pulls the first JSON object out of a completion: the whole text, then a
/// fenced code block, then the first balanced brace span. Returns nullopt if
/// nothing parses.
inline std::optional<nlohmann::json> extract_json_object(
    const std::string& text) {
  auto try_parse = [](const std::string& s) -> std::optional<nlohmann::json> {
    const auto j = nlohmann::json::parse(s, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return std::nullopt;
    return j;
  };

  auto first = text.find_first_not_of(" \t\r\n");
  auto last = text.find_last_not_of(" \t\r\n");
  if (first == std::string::npos) return std::nullopt;
  if (auto j = try_parse(text.substr(first, last - first + 1))) return j;

  // Fenced block: ``` or ```json up to the closing fence.
  auto fence = text.find("```");
  while (fence != std::string::npos) {
    auto body_start = text.find('\n', fence);
    if (body_start == std::string::npos) break;
    ++body_start;
    const auto fence_end = text.find("```", body_start);
    if (fence_end == std::string::npos) break;
    if (auto j = try_parse(text.substr(body_start, fence_end - body_start)))
      return j;
    fence = text.find("```", fence_end + 3);
  }

  // Balanced braces, respecting strings and escapes.
  for (std::size_t open = text.find('{'); open != std::string::npos;
       open = text.find('{', open + 1)) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = open; i < text.size(); ++i) {
      const char c = text[i];
      if (escaped) {
        escaped = false;
        continue;
      }
      if (c == '\\') {
        escaped = in_string;
        continue;
      }
      if (c == '"') {
        in_string = !in_string;
        continue;
      }
      if (in_string) continue;
      if (c == '{') ++depth;
      if (c == '}') {
        --depth;
        if (depth == 0) {
          if (auto j = try_parse(text.substr(open, i - open + 1))) return j;
          break;
        }
      }
    }
  }
  return std::nullopt;
}

}  // namespace wake
