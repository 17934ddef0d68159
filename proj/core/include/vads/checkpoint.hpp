#pragma once

#include <cstdint>
#include <string>

#include "vads/param_store.hpp"

namespace vads {

/// Versioned binary model container: a JSON manifest (format version, model
/// kind, hyperparameters, Adam step count) followed by named little-endian
/// 64-bit float arrays for every parameter, Adam moment and EMA shadow.
/// The exact byte layout is documented in docs/formats.md.
struct Checkpoint {
  std::uint32_t format_version = 1;
  std::string kind;
  std::string hyperparameters_json;
  ParamStore store;
};

void write_checkpoint(const std::string& path, const std::string& kind,
                      const std::string& hyperparameters_json, const ParamStore& store);

Checkpoint read_checkpoint(const std::string& path);

}  // namespace vads
