#include <httplib.h>

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include "elmes/gateway.hpp"

namespace elmes {
namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;    // prefix + /chat/completions
};

Endpoint split_url(const std::string& base_url) {
  const auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) {
    throw GatewayError(GatewayError::Kind::kUnsupported,
                       "base_url '" + base_url + "' has no scheme");
  }
  const std::string scheme = base_url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw GatewayError(GatewayError::Kind::kUnsupported,
                       "base_url scheme '" + scheme + "' is not http(s)");
  }
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (scheme == "https") {
    throw GatewayError(GatewayError::Kind::kUnsupported,
                       "https endpoints need a build with OpenSSL support");
  }
#endif
  const auto path_start = base_url.find('/', scheme_end + 3);
  Endpoint ep;
  ep.origin = base_url.substr(0, path_start);
  std::string prefix =
      path_start == std::string::npos ? "" : base_url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  ep.path = prefix + "/chat/completions";
  return ep;
}

}  // namespace

struct OpenAiProvider::Pool {
  std::mutex mutex;
  std::map<std::string, std::vector<std::unique_ptr<httplib::Client>>> idle;
};

OpenAiProvider::OpenAiProvider(std::chrono::seconds timeout, LogFn log)
    : timeout_(timeout), log_(std::move(log)), pool_(std::make_unique<Pool>()) {}

OpenAiProvider::~OpenAiProvider() = default;

Completion OpenAiProvider::complete(const ChatRequest& request) {
  const Endpoint ep = split_url(request.model.base_url);
  const std::string key = resolve_api_key(request.model);

  std::unique_ptr<httplib::Client> client;
  {
    std::lock_guard lock(pool_->mutex);
    auto& idle = pool_->idle[ep.origin];
    if (!idle.empty()) {
      client = std::move(idle.back());
      idle.pop_back();
    }
  }
  if (!client) {
    client = std::make_unique<httplib::Client>(ep.origin);
    client->set_keep_alive(true);
    client->set_connection_timeout(std::chrono::seconds(10));
    client->set_read_timeout(timeout_);
    client->set_write_timeout(timeout_);
  }

  const httplib::Headers headers{{"Authorization", "Bearer " + key},
                                 {"Accept", "application/json"}};
  const std::string body = build_chat_body(request).dump();
  const auto started = std::chrono::steady_clock::now();
  auto result = client->Post(ep.path, headers, body, "application/json");
  const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
      std::chrono::steady_clock::now() - started);

  if (!result) {
    const std::string why = httplib::to_string(result.error());
    if (log_) log_("POST " + ep.origin + ep.path + " transport error: " + why);
    throw GatewayError(GatewayError::Kind::kTransport,
                       "model '" + request.model.id + "': transport failure (" +
                           why + ") contacting " + ep.origin);
  }
  {
    std::lock_guard lock(pool_->mutex);
    pool_->idle[ep.origin].push_back(std::move(client));
  }

  const int status = result->status;
  if (log_) {
    log_("POST " + ep.origin + ep.path + " model=" + request.model.model_name +
         " status=" + std::to_string(status) +
         " latency_ms=" + std::to_string(elapsed.count()));
  }
  if (status < 200 || status >= 300) {
    const std::string excerpt = result->body.substr(0, 200);
    std::string what = "model '" + request.model.id + "': HTTP " +
                       std::to_string(status);
    if (status == 401 || status == 403) what += " (authentication rejected)";
    what += ": " + excerpt;
    throw GatewayError(GatewayError::Kind::kHttpStatus, what, status, excerpt);
  }
  Completion c = parse_chat_response(result->body);
  c.latency = elapsed;
  return c;
}

}  // namespace elmes
