// Copyright 2026 The waveprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <string>

#include "waveprompt/embedding.hpp"
#include "waveprompt/http.hpp"

namespace waveprompt {

/// Client for a remote image-embedding service:
///
///   GET  <base>/info   -> {"model_id": str, "dimension": int, "deterministic": bool}
///   POST <base>/embed  body = PNG bytes (Content-Type: image/png)
///                      -> {"model_id": str, "dimension": int, "vector": [float...]}
///
/// /info is fetched once at construction; every /embed reply is checked
/// against it.
class HttpProvider final : public EmbeddingProvider {
 public:
  HttpProvider(std::string base_url, std::shared_ptr<HttpTransport> transport, double timeout_s = 30.0);

  std::string provider_id() const override { return "http:" + base_url_; }
  std::string model_id() const override { return model_id_; }
  std::size_t dimension() const override { return dimension_; }
  bool deterministic() const override { return deterministic_; }
  std::vector<float> compute(const WaveformImage& image) override;

 private:
  std::string base_url_;
  std::shared_ptr<HttpTransport> transport_;
  double timeout_s_;
  std::string model_id_;
  std::size_t dimension_ = 0;
  bool deterministic_ = false;
};

}  // namespace waveprompt
