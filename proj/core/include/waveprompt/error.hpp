// Copyright 2026 The waveprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace waveprompt {

/// Base for every error raised by the library. Callers that only need to
/// distinguish "our" failures from programming errors catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user-supplied configuration (render, selection, backend, CLI).
class ConfigError : public Error {
 public:
  using Error::Error;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

class RenderError : public Error {
 public:
  using Error::Error;
};

/// Degenerate input to a geometric kernel: zero-norm vectors, dimension
/// mismatch, empty sets.
class GeometryError : public Error {
 public:
  using Error::Error;
};

class EmbeddingError : public Error {
 public:
  using Error::Error;
};

/// Raised by the file-backed provider when digests are absent from the store.
class LookupMiss : public EmbeddingError {
 public:
  explicit LookupMiss(std::vector<std::string> digests);
  const std::vector<std::string>& missing() const noexcept { return missing_; }

 private:
  std::vector<std::string> missing_;
};

class ProviderUnavailable : public EmbeddingError {
 public:
  using EmbeddingError::EmbeddingError;
};

/// A provider returned something that breaks its declared contract
/// (wrong dimension, non-finite or all-zero vector).
class ContractViolation : public EmbeddingError {
 public:
  using EmbeddingError::EmbeddingError;
};

class SelectionError : public Error {
 public:
  using Error::Error;
};

class InsufficientPool : public SelectionError {
 public:
  InsufficientPool(std::string what_pool, std::size_t available, std::size_t required);
  const std::string& pool() const noexcept { return pool_; }
  std::size_t available() const noexcept { return available_; }
  std::size_t required() const noexcept { return required_; }
  std::size_t shortfall() const noexcept { return required_ - available_; }

 private:
  std::string pool_;
  std::size_t available_;
  std::size_t required_;
};

class EmptyHistoricalPool : public SelectionError {
 public:
  using SelectionError::SelectionError;
};

/// A support set broke the task-zero-shot guard. Always a bug, never data.
class LeakageViolation : public SelectionError {
 public:
  using SelectionError::SelectionError;
};

class PromptError : public Error {
 public:
  using Error::Error;
};

class GatewayError : public Error {
 public:
  using Error::Error;
};

class AuthenticationError : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

class RetriesExhausted : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

class MalformedReply : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

/// Network-level failure (connection refused, timeout). Treated as transient.
class TransportError : public Error {
 public:
  using Error::Error;
};

class MetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace waveprompt
