// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

namespace cluster_tails {

enum class ErrorKind {
  InvalidArgument,
  SupercriticalModel,
  InfiniteMean,
  NoClosedForm,
  ClusterOverflow,
  InsufficientExceedances,
  DegenerateTail,
  UnstableEstimate,
  LatticeMismatch,
  BracketTooWide,
  Config,
  Io,
};

inline const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::SupercriticalModel: return "SupercriticalModel";
    case ErrorKind::InfiniteMean: return "InfiniteMean";
    case ErrorKind::NoClosedForm: return "NoClosedForm";
    case ErrorKind::ClusterOverflow: return "ClusterOverflow";
    case ErrorKind::InsufficientExceedances: return "InsufficientExceedances";
    case ErrorKind::DegenerateTail: return "DegenerateTail";
    case ErrorKind::UnstableEstimate: return "UnstableEstimate";
    case ErrorKind::LatticeMismatch: return "LatticeMismatch";
    case ErrorKind::BracketTooWide: return "BracketTooWide";
    case ErrorKind::Config: return "ConfigError";
    case ErrorKind::Io: return "IoError";
  }
  return "Unknown";
}

/// Base of every error thrown by the library. `field()` carries a config
/// path (e.g. "model.target_mean_kappa") when the error can be attributed to
/// one; it is empty otherwise.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what, std::string field = {})
      : std::runtime_error(what), kind_(kind), field_(std::move(field)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& field() const noexcept { return field_; }

  void set_field(std::string field) { field_ = std::move(field); }

 private:
  ErrorKind kind_;
  std::string field_;
};

/// Thrown when a Hawkes cluster grows past its event guard.
class ClusterOverflow : public Error {
 public:
  ClusterOverflow(std::uint64_t events, std::uint64_t limit)
      : Error(ErrorKind::ClusterOverflow,
              "cluster exceeded " + std::to_string(limit) + " events (reached " +
                  std::to_string(events) + "); configuration is supercritical or near-critical"),
        events_(events),
        limit_(limit) {}

  std::uint64_t events() const noexcept { return events_; }
  std::uint64_t limit() const noexcept { return limit_; }

  /// Replication index of the offending cluster or window, when known.
  std::int64_t replication() const noexcept { return replication_; }
  void set_replication(std::int64_t r) noexcept { replication_ = r; }

 private:
  std::uint64_t events_;
  std::uint64_t limit_;
  std::int64_t replication_ = -1;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what, std::string field = {}) {
  throw Error(kind, what, std::move(field));
}

inline void require(bool cond, const std::string& what, std::string field = {}) {
  if (!cond) fail(ErrorKind::InvalidArgument, what, std::move(field));
}

}  // namespace cluster_tails
