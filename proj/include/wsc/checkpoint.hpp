#pragma once

#include <optional>
#include <string>
#include <vector>

#include "wsc/nn.hpp"

namespace wsc::checkpoint {

// WSCK checkpoint payload: parameters plus optional averaged weights and
// shadow moments, all sharing the segment layout of theta.
struct Checkpoint {
  nn::ParameterSet theta;
  std::optional<std::vector<double>> theta_bar;
  std::optional<std::vector<double>> m;
  std::optional<std::vector<double>> v;
};

// Binary layout, all integers little-endian:
//   magic "WSCK" | u16 version (=1) | u8 flags (bit0 theta_bar, bit1 m,
//   bit2 v) | u32 segment count | per segment: u32 name length, name bytes,
//   u32 rank, u64 dims[rank] | f64 payload for theta, then each flagged
//   array. Round-trips bit-exactly.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace wsc::checkpoint
