#pragma once

// Checkpoint container: magic "RFNT", u16 format version, u32 tensor count,
// then per tensor: u32 name length, UTF-8 name, u8 rank, u32 extents, raw
// 32-bit little-endian floats. Save/load/save is bit-exact.

#include <string>
#include <vector>

#include "rfnet/tensor.hpp"

namespace rfnet {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct CheckpointEntry {
    std::string name;
    Shape shape;
    std::vector<float> data;
};

inline constexpr std::uint16_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> load_checkpoint(const std::string& path);

}  // namespace rfnet
