// Copyright 2026 The waveprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

namespace waveprompt {

/// K x K counts, rows = true class, columns = predicted class.
using ConfusionMatrix = std::vector<std::vector<std::uint64_t>>;

ConfusionMatrix make_confusion(int num_classes);

/// Balanced classification accuracy in percent: mean per-class recall x 100.
/// Throws MetricError for a non-square matrix or a class with no true
/// instances.
double bca(const ConfusionMatrix& confusion);

/// Plain accuracy in percent.
double accuracy(const ConfusionMatrix& confusion);

}  // namespace waveprompt
