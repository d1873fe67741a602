// Copyright 2026 The waveprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "waveprompt/error.hpp"

#include <utility>

namespace waveprompt {

LookupMiss::LookupMiss(std::vector<std::string> digests)
    : EmbeddingError([&] {
        std::string msg = "embedding store lookup miss for " + std::to_string(digests.size()) + " digest(s):";
        for (const auto& d : digests) msg += "\n  " + d;
        return msg;
      }()),
      missing_(std::move(digests)) {}

InsufficientPool::InsufficientPool(std::string what_pool, std::size_t available, std::size_t required)
    : SelectionError(what_pool + " has " + std::to_string(available) + " candidate(s), " +
                     std::to_string(required) + " required (shortfall " +
                     std::to_string(required - available) + ")"),
      pool_(std::move(what_pool)),
      available_(available),
      required_(required) {}

}  // namespace waveprompt
