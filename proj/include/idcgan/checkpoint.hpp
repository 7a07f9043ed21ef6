#pragma once

#include <string>

#include "idcgan/nets.hpp"

namespace idcgan {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Versioned binary tensor container, bit-exact across round trips:
//   magic "IDCG" | u32le version | u32le entry count
//   per entry: u32le name length | UTF-8 name | u32le rank | u32le dims[rank]
//              | raw little-endian f32 payload
//   trailing u32le CRC32 of all preceding bytes.
void save_checkpoint(const WeightStore<float>& store, const std::string& path);
WeightStore<float> load_checkpoint(const std::string& path);

}  // namespace idcgan
