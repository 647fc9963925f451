// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "lusifer/params.hpp"

namespace lusifer {

struct CheckpointMeta {
  std::string stage;        // "stage0" | "stage1" | "stage2"
  bool final_stage = false; // last stage of its training pipeline
  std::uint64_t seed = 0;
  std::map<std::string, std::string> config;  // flat run-config snapshot
};

// A checkpoint is a directory holding manifest.json (names, shapes, byte
// offsets, config snapshot, payload hash) and params.bin (raw little-endian
// float32 values concatenated in manifest order).
void save_checkpoint(const std::string& dir, const ParamSet& params, const CheckpointMeta& meta);

CheckpointMeta read_checkpoint_meta(const std::string& dir);

// Strict load: the manifest must name exactly the parameters of `into`, with
// matching shapes. Validates payload length and hash before touching any
// parameter, so a truncated payload never half-loads.
void load_checkpoint_params(const std::string& dir, ParamSet& into);

std::uint64_t fnv1a64(const void* data, std::size_t bytes);

}  // namespace lusifer
