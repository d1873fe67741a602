// Copyright 2026 The waveprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include <httplib.h>

#include <cmath>

#include "waveprompt/error.hpp"
#include "waveprompt/http.hpp"

namespace waveprompt {

std::string ParsedUrl::origin() const { return scheme + "://" + host + ":" + std::to_string(port); }

ParsedUrl parse_url(const std::string& url) {
  ParsedUrl out;
  const auto sep = url.find("://");
  if (sep == std::string::npos) throw ConfigError("URL without scheme: '" + url + "'");
  out.scheme = url.substr(0, sep);
  if (out.scheme != "http" && out.scheme != "https") throw ConfigError("unsupported URL scheme in '" + url + "'");
  std::string rest = url.substr(sep + 3);
  const auto slash = rest.find('/');
  std::string authority = rest.substr(0, slash);
  out.path = slash == std::string::npos ? "/" : rest.substr(slash);
  const auto colon = authority.rfind(':');
  if (colon != std::string::npos && authority.find(']') == std::string::npos) {
    try {
      out.port = std::stoi(authority.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError("bad port in URL '" + url + "'");
    }
    authority.resize(colon);
  } else {
    out.port = out.scheme == "https" ? 443 : 80;
  }
  if (authority.empty()) throw ConfigError("URL without host: '" + url + "'");
  out.host = authority;
  return out;
}

std::string join_url(const std::string& base, const std::string& path) {
  std::string b = base;
  while (!b.empty() && b.back() == '/') b.pop_back();
  std::string p = path;
  while (!p.empty() && p.front() == '/') p.erase(p.begin());
  return b + "/" + p;
}

namespace {

class HttplibTransport final : public HttpTransport {
 public:
  HttpResponse send(const HttpRequest& request) override {
    const ParsedUrl url = parse_url(request.url);
    httplib::Client client(url.origin());
    const auto secs = static_cast<time_t>(std::floor(request.timeout_s));
    const auto usecs = static_cast<time_t>((request.timeout_s - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);

    httplib::Headers headers;
    for (const auto& [k, v] : request.headers) headers.emplace(k, v);

    httplib::Result result;
    if (request.method == "GET") {
      result = client.Get(url.path, headers);
    } else if (request.method == "POST") {
      result = client.Post(url.path, headers, request.body, request.content_type);
    } else {
      throw ConfigError("unsupported HTTP method " + request.method);
    }
    if (!result) throw TransportError(request.method + " " + request.url + ": " + httplib::to_string(result.error()));
    return {result->status, result->body};
  }
};

}  // namespace

std::shared_ptr<HttpTransport> make_http_transport() { return std::make_shared<HttplibTransport>(); }

}  // namespace waveprompt
