#pragma once

#include <chrono>
#include <memory>
#include <string>
#include <string_view>

#include "httplib.h"

#include "attribeval/error.hpp"

namespace attribeval::http {

// "https://host:8080/v1/x" -> origin "https://host:8080", path "/v1/x".
struct Url {
  std::string origin;
  std::string path;
};

inline Url split_url(std::string_view url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) throw UsageError("not a URL: " + std::string(url));
  auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw UsageError("unsupported URL scheme: " + std::string(url));
  }
  auto path_start = url.find('/', scheme_end + 3);
  Url out;
  if (path_start == std::string_view::npos) {
    out.origin = std::string(url);
    out.path = "/";
  } else {
    out.origin = std::string(url.substr(0, path_start));
    out.path = std::string(url.substr(path_start));
  }
  if (out.origin.size() <= scheme_end + 3) throw UsageError("URL has no host: " + std::string(url));
  return out;
}

inline bool is_url(std::string_view s) {
  return s.starts_with("http://") || s.starts_with("https://");
}

inline std::unique_ptr<httplib::Client> make_client(const Url& url, double timeout_seconds) {
  auto client = std::make_unique<httplib::Client>(url.origin);
  auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
      std::chrono::duration<double>(timeout_seconds));
  client->set_connection_timeout(timeout);
  client->set_read_timeout(timeout);
  client->set_write_timeout(timeout);
  client->set_follow_location(true);
  return client;
}

}  // namespace attribeval::http
