// Copyright 2026 The waveprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "waveprompt/http_provider.hpp"

#include <json.hpp>

#include "waveprompt/error.hpp"

namespace waveprompt {

using nlohmann::json;

namespace {

json parse_reply(const HttpResponse& response, const std::string& what) {
  try {
    return json::parse(response.body);
  } catch (const json::exception& e) {
    throw ContractViolation(what + ": malformed JSON reply: " + e.what());
  }
}

[[noreturn]] void raise_status(const HttpResponse& response, const std::string& what) {
  const std::string detail = what + " returned HTTP " + std::to_string(response.status) + ": " + response.body;
  if (response.status == 503) throw ProviderUnavailable(detail);
  throw EmbeddingError(detail);
}

}  // namespace

HttpProvider::HttpProvider(std::string base_url, std::shared_ptr<HttpTransport> transport, double timeout_s)
    : base_url_(std::move(base_url)), transport_(std::move(transport)), timeout_s_(timeout_s) {
  if (!transport_) throw ProviderUnavailable("http provider: no transport");
  HttpRequest req;
  req.method = "GET";
  req.url = join_url(base_url_, "info");
  req.timeout_s = timeout_s_;
  HttpResponse resp;
  try {
    resp = transport_->send(req);
  } catch (const TransportError& e) {
    throw ProviderUnavailable(std::string("embedding service unreachable: ") + e.what());
  }
  if (resp.status != 200) raise_status(resp, "GET /info");
  const json info = parse_reply(resp, "GET /info");
  try {
    model_id_ = info.at("model_id").get<std::string>();
    const auto dim = info.at("dimension").get<long long>();
    if (dim <= 0) throw ContractViolation("GET /info: non-positive dimension");
    dimension_ = static_cast<std::size_t>(dim);
    deterministic_ = info.value("deterministic", false);
  } catch (const json::exception& e) {
    throw ContractViolation(std::string("GET /info: ") + e.what());
  }
}

std::vector<float> HttpProvider::compute(const WaveformImage& image) {
  HttpRequest req;
  req.method = "POST";
  req.url = join_url(base_url_, "embed");
  req.body.assign(image.png_bytes.begin(), image.png_bytes.end());
  req.content_type = "image/png";
  req.timeout_s = timeout_s_;
  HttpResponse resp;
  try {
    resp = transport_->send(req);
  } catch (const TransportError& e) {
    throw ProviderUnavailable(std::string("embedding service unreachable: ") + e.what());
  }
  if (resp.status != 200) raise_status(resp, "POST /embed");
  const json reply = parse_reply(resp, "POST /embed");
  std::vector<float> vec;
  try {
    if (reply.contains("dimension") && reply.at("dimension").get<long long>() != static_cast<long long>(dimension_)) {
      throw ContractViolation("POST /embed: reply dimension " + reply.at("dimension").dump() +
                              " differs from /info dimension " + std::to_string(dimension_));
    }
    if (reply.contains("model_id") && reply.at("model_id").get<std::string>() != model_id_) {
      throw ContractViolation("POST /embed: model_id changed from '" + model_id_ + "' to '" +
                              reply.at("model_id").get<std::string>() + "'");
    }
    vec = reply.at("vector").get<std::vector<float>>();
  } catch (const json::exception& e) {
    throw ContractViolation(std::string("POST /embed: ") + e.what());
  }
  check_embedding_vector(vec, dimension_, "POST /embed");
  return vec;
}

}  // namespace waveprompt
