#pragma once

#include <stdexcept>
#include <string>

namespace wsc {

// Invalid configuration values (bad dimensions, unknown enum names, ...).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Mismatched tensor/parameter layouts.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// Operation called on inputs outside its domain (empty batch, fresh moment
// state, incomplete accuracy matrix, ...).
struct DomainError : std::runtime_error {
  explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed file content; message carries the byte offset where known.
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Caller violated an explicit call-sequence contract.
struct ContractError : std::runtime_error {
  explicit ContractError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace wsc
