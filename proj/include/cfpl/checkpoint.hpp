#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "cfpl/config.hpp"
#include "cfpl/model.hpp"

namespace cfpl {

struct TensorBlock {
    std::string name;
    Shape shape;
    std::vector<double> values;
};

// Binary layout, little-endian:
//   "CFPL" | u32 version | u64 len + canonical config text | u64 step
//   | u32 block count | blocks
// Each block: u32 len + name | u32 len + dtype ("f64") | u32 rank
//   | u64 dims[rank] | raw values.
// Parameter blocks carry the parameter name; optimizer moments are stored as
// "adam.m/<name>" and "adam.v/<name>". Training randomness is a pure function
// of (config seed, step), so those two values are the full rng state.
struct Checkpoint {
    static constexpr std::uint32_t kFormatVersion = 1;

    RunConfig config;
    std::uint64_t step = 0;
    std::vector<TensorBlock> parameters;
    std::vector<TensorBlock> optimizer;

    const TensorBlock* find_parameter(const std::string& name) const;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Every registered parameter, frozen ones included.
std::vector<TensorBlock> snapshot_parameters(const CfplModel& model);
// Copies values by name; names and shapes must match exactly.
void load_parameters(CfplModel& model, const std::vector<TensorBlock>& blocks);
std::unique_ptr<CfplModel> restore_model(const Checkpoint& ckpt);

}  // namespace cfpl
