#ifndef SAN_CHECKPOINT_HPP
#define SAN_CHECKPOINT_HPP

#include <string>

#include "san/network.hpp"

namespace san {

// Binary network snapshot, little-endian throughout:
//   "SANCKPT1" | version u32 | layer count u32 |
//   per state tensor: rank u32, dims u32 x rank, payload f32 x numel |
//   crc32 u32 over everything before it
// State covers parameters and batchnorm running statistics, so
// load(save(net)) is bitwise identical.
void save_checkpoint(Network& net, const std::string& path);

// Loads into `prototype`, which must have the same architecture; shape or
// checksum disagreement is an error.
void load_checkpoint(const std::string& path, Network& prototype);

u32 crc32(const void* data, size_t len, u32 seed = 0);

}  // namespace san

#endif  // SAN_CHECKPOINT_HPP
