#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "vivit/tensor.hpp"

namespace vivit {

/// Single-channel 3D volume with voxels in x-fastest order, as stored on disk.
struct Volume {
  std::array<std::int64_t, 3> shape{0, 0, 0};  // H, W, D
  std::vector<float> voxels;
  std::optional<std::array<double, 3>> spacing;  // mm, metadata only

  std::int64_t size() const { return shape[0] * shape[1] * shape[2]; }
  // Flat index of (x, y, z) in file order.
  std::int64_t index(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return (z * shape[1] + y) * shape[0] + x;
  }
  float at(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return voxels[static_cast<std::size_t>(index(x, y, z))];
  }
};

inline constexpr std::uint32_t kRvolVersion = 1;

// RVOL layout: "RVOL", u32 version, u32 H, W, D, u32 dtype tag (1 = f32),
// then H*W*D little-endian f32 voxels, x fastest.
void write_volume(const std::filesystem::path& path, const Volume& volume);
Volume read_volume(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_volume(const Volume& volume);
Volume decode_volume(const std::vector<std::uint8_t>& bytes, const std::string& source = "<memory>");

// Volume -> tensor [1,H,W,D] (z fastest), and back.
Tensor volume_to_tensor(const Volume& volume, DType dtype = DType::kFloat32);
Volume tensor_to_volume(const Tensor& tensor);

// Zero mean, unit std over nonzero voxels; zero voxels stay exactly zero.
Volume normalize(const Volume& volume);

// Trilinear (align-corners false) resize; identity when the shape matches.
Volume resize(const Volume& volume, const std::array<std::int64_t, 3>& target);

}  // namespace vivit
