#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "nusr/train.hpp"
#include "nusr/unetpp.hpp"

namespace nusr {

// On-disk layout (all integers little-endian):
//   magic "NUSR"
//   u16  version (currently 1)
//   u32  config length, then that many bytes of "key=value\n" text
//   u32  tensor count, then per tensor:
//        u32 name length, name bytes, u8 ndim, ndim x u32 dims,
//        row-major 32-bit float payload
//   u32  optimizer entry count, entries in the same encoding
//        (per parameter: "<name>.m" and "<name>.v")
//   u64  step
//   u32  rng-state length, then the serialized engine state as text
//   u32  CRC-32 of every preceding byte
//
// The trailing checksum is how a flipped byte anywhere in the file (including
// inside a float payload, where no structural check could catch it) surfaces
// as a format error instead of silently corrupt weights. Loads verify it
// before parsing, so a bad file never yields a partially-built model.
//
// Payloads are 32-bit floats on disk regardless of the build's scalar type;
// the 64-bit build is a test lane and accepts the rounding on save.
struct Checkpoint {
    std::uint16_t version = 1;
    std::map<std::string, std::string> config;  // sorted -> deterministic bytes
    std::vector<std::pair<std::string, Tensor>> tensors;
    std::vector<std::pair<std::string, Tensor>> optimizer;
    std::uint64_t step = 0;
    std::string rng_state;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void write_checkpoint_file(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint_file(const std::filesystem::path& path);

// Bundles model parameters, optimizer moments, and enough configuration to
// rebuild the model on load.
Checkpoint make_checkpoint(const UNetPPModel& model, const TrainState& state,
                           const TrainConfig& train_cfg);

struct LoadedRun {
    UNetPPModel model;
    TrainState state;
    TrainConfig train_cfg;
};

LoadedRun restore_run(const Checkpoint& ckpt);

void save_checkpoint(const UNetPPModel& model, const TrainState& state,
                     const TrainConfig& train_cfg, const std::filesystem::path& path);
LoadedRun load_checkpoint(const std::filesystem::path& path);

}  // namespace nusr
