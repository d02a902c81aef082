#pragma once

// Preference summaries from an OpenAI-style chat-completion endpoint, with an
// on-disk response cache keyed by a hash of the request body.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "semid/common.hpp"
#include "semid/prompts.hpp"

namespace semid {

struct ChatConfig {
  std::string url = "https://api.openai.com/v1/chat/completions";
  std::string model = "gpt-3.5-turbo";
  std::string token_env = "OPENAI_API_KEY";
  std::filesystem::path cache_dir = "chat_cache";
  int timeout_seconds = 60;
};

// (url, request body, bearer token) -> response body
using ChatTransport = std::function<std::string(const std::string&, const std::string&, const std::string&)>;

inline ChatTransport http_transport(int timeout_seconds = 60) {
  return [timeout_seconds](const std::string& url, const std::string& body, const std::string& token) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw UsageError("chat url must include a scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    const std::string origin = url.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

    httplib::Client client(origin);
    client.set_read_timeout(timeout_seconds, 0);
    client.set_connection_timeout(timeout_seconds, 0);
    httplib::Headers headers;
    if (!token.empty()) headers.emplace("Authorization", "Bearer " + token);
    auto res = client.Post(path, headers, body, "application/json");
    if (!res) throw DataError("chat request to " + url + " failed: " + httplib::to_string(res.error()));
    if (res->status != 200)
      throw DataError("chat request to " + url + " returned HTTP " + std::to_string(res->status));
    return res->body;
  };
}

class ChatSummarizer final : public Summarizer {
 public:
  explicit ChatSummarizer(ChatConfig cfg, ChatTransport transport = {})
      : cfg_(std::move(cfg)), transport_(transport ? std::move(transport) : http_transport(cfg_.timeout_seconds)) {
    std::filesystem::create_directories(cfg_.cache_dir);
  }

  std::string name() const override { return "chat"; }
  std::size_t cache_hits() const { return cache_hits_; }
  std::size_t network_calls() const { return network_calls_; }

  std::string request_body(std::span<const std::string> reviews) const {
    std::string user = "Here are reviews written by one customer:\n";
    for (const auto& r : reviews) user += "- " + r + "\n";
    user += "Summarize this customer's preferences in one or two sentences.";
    nlohmann::json body{{"model", cfg_.model},
                        {"temperature", 0},
                        {"messages",
                         {{{"role", "system"}, {"content", "You extract user preferences from product reviews."}},
                          {{"role", "user"}, {"content", user}}}}};
    return body.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
  }

  std::string summarize(const std::string&, std::span<const std::string> reviews) override {
    const auto body = request_body(reviews);
    const auto path = cfg_.cache_dir / (hex64(fnv1a64(body)) + ".txt");
    if (std::ifstream in(path, std::ios::binary); in) {
      ++cache_hits_;
      std::ostringstream ss;
      ss << in.rdbuf();
      return ss.str();
    }
    const char* token = std::getenv(cfg_.token_env.c_str());
    ++network_calls_;
    const auto response = transport_(cfg_.url, body, token ? token : "");
    auto j = nlohmann::json::parse(response, nullptr, false);
    if (j.is_discarded() || !j.contains("choices") || j["choices"].empty())
      throw DataError("chat response is not a chat completion");
    auto text = j["choices"][0]["message"]["content"].get<std::string>();
    std::ofstream(path, std::ios::binary) << text;
    return text;
  }

 private:
  ChatConfig cfg_;
  ChatTransport transport_;
  std::size_t cache_hits_ = 0;
  std::size_t network_calls_ = 0;
};

}  // namespace semid
