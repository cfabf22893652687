#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "orthonet/network.hpp"

namespace orthonet {

// Binary layout, little-endian:
//   "ORTHOCK1"  u64 count
//   count x { u32 name_len, name bytes, u32 rank, rank x u64 dims, f64 values }
// The text manifest lists one `name shape byte_offset` line per array.

void save_checkpoint(const std::filesystem::path& file, std::span<const NamedTensor> tensors);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& file);

void write_manifest(const std::filesystem::path& file, std::span<const NamedTensor> tensors);

/// f_in x f_out matrices of every `*.weight` array, in file order. 4-D conv
/// arrays (kW, kH, C, M) are flattened through KernelMatrix.
std::vector<Tensor> weight_matrices(std::span<const NamedTensor> tensors);

/// The first 4-D `*.weight` array as a kernel bank.
KernelMatrix first_conv_kernel(std::span<const NamedTensor> tensors);

}  // namespace orthonet
