#pragma once

#include <cstdlib>
#include <memory>
#include <string>
#include <utility>

#include <httplib.h>

#include "biasaudit/provider.hpp"

namespace biasaudit {

/// cpp-httplib transport for OpenAI-compatible gateways. A fresh client per
/// call keeps concurrent probes independent; the provider's rate limiter is
/// the only shared throttle.
class HttplibTransport : public HttpTransport {
 public:
  HttplibTransport(std::string base_url, std::string api_key,
                   double timeout_seconds = 120.0)
      : api_key_(std::move(api_key)), timeout_seconds_(timeout_seconds) {
    const auto scheme_end = base_url.find("://");
    const auto path_start =
        base_url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    if (path_start == std::string::npos) {
      origin_ = base_url;
    } else {
      origin_ = base_url.substr(0, path_start);
      prefix_ = base_url.substr(path_start);
    }
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
  }

  HttpResult post(const std::string& body) override {
    httplib::Client client(origin_);
    client.set_connection_timeout(std::chrono::duration<double>(timeout_seconds_));
    client.set_read_timeout(std::chrono::duration<double>(timeout_seconds_));
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
    auto result =
        client.Post(prefix_ + "/chat/completions", headers, body, "application/json");
    if (!result) {
      throw TransportError("transport failure: " + httplib::to_string(result.error()));
    }
    return {result->status, result->body};
  }

 private:
  std::string api_key_;
  std::string origin_;
  std::string prefix_;
  double timeout_seconds_;
};

/// Live provider wired from the environment: AUDIT_BASE_URL for the gateway
/// (OpenAI-compatible), AUDIT_API_KEY for the credential.
inline std::shared_ptr<Provider> make_live_provider(const LiveConfig& config) {
  const char* base_url = std::getenv("AUDIT_BASE_URL");
  const char* api_key = std::getenv("AUDIT_API_KEY");
  if (api_key == nullptr || *api_key == '\0') {
    throw ProviderError("live provider needs the AUDIT_API_KEY environment variable");
  }
  auto transport = std::make_shared<HttplibTransport>(
      base_url != nullptr && *base_url != '\0' ? base_url
                                               : "https://api.openai.com/v1",
      api_key);
  return std::make_shared<LiveProvider>(std::move(transport), config);
}

}  // namespace biasaudit
