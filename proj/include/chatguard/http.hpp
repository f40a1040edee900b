#pragma once

#include <chrono>
#include <string>
#include <utility>

#include "httplib.h"
#include "json.hpp"

#include "chatguard/error.hpp"

namespace chatguard::http {

using json = nlohmann::json;

struct Url {
  std::string origin;  // scheme://host[:port]
  std::string path;    // always starts with '/'
};

inline Url split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(Errc::config_error, "URL without scheme: " + url);
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http") throw Error(Errc::config_error, "only http:// endpoints are supported: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

struct ClientOptions {
  std::chrono::milliseconds timeout{30000};
  std::string bearer_token;
};

/// POSTs a JSON body and returns the parsed JSON response. Transport failures,
/// non-2xx statuses and unparseable bodies all raise Error(failure_code).
inline json post_json(const std::string& url, const json& body, const ClientOptions& opts,
                      Errc failure_code = Errc::client_error) {
  const Url u = split_url(url);
  httplib::Client cli(u.origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(opts.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(opts.timeout - secs);
  cli.set_connection_timeout(static_cast<time_t>(secs.count()), static_cast<time_t>(usecs.count()));
  cli.set_read_timeout(static_cast<time_t>(secs.count()), static_cast<time_t>(usecs.count()));
  cli.set_write_timeout(static_cast<time_t>(secs.count()), static_cast<time_t>(usecs.count()));
  httplib::Headers headers;
  if (!opts.bearer_token.empty()) headers.emplace("Authorization", "Bearer " + opts.bearer_token);
  auto res = cli.Post(u.path, headers, body.dump(), "application/json");
  if (!res) {
    throw Error(failure_code, "POST " + url + " failed: " + httplib::to_string(res.error()));
  }
  if (res->status < 200 || res->status >= 300) {
    throw Error(failure_code, "POST " + url + " returned HTTP " + std::to_string(res->status));
  }
  try {
    return json::parse(res->body);
  } catch (const json::exception& ex) {
    throw Error(failure_code, "POST " + url + " returned invalid JSON: " + ex.what());
  }
}

}  // namespace chatguard::http
