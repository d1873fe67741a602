// Copyright 2026 The waveprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace waveprompt {

struct HttpRequest {
  std::string method = "POST";
  std::string url;
  std::vector<std::pair<std::string, std::string>> headers;
  std::string body;
  std::string content_type = "application/json";
  double timeout_s = 60.0;
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// Blocking request/response seam. Tests inject fakes; production uses
/// make_http_transport(). Implementations must be safe for concurrent use and
/// throw TransportError when no HTTP status was received.
class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResponse send(const HttpRequest& request) = 0;
};

std::shared_ptr<HttpTransport> make_http_transport();

struct ParsedUrl {
  std::string scheme;  // "http" or "https"
  std::string host;
  int port = 0;
  std::string path;  // always starts with '/'

  std::string origin() const;
};

/// Throws ConfigError on anything that is not http(s)://host[:port][/path].
ParsedUrl parse_url(const std::string& url);

/// Joins a base URL and a path segment with exactly one '/'.
std::string join_url(const std::string& base, const std::string& path);

}  // namespace waveprompt
