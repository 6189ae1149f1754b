#include "vivit/volume_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "vivit/errors.hpp"
#include "vivit/ops.hpp"

namespace vivit {

namespace {

constexpr char kMagic[4] = {'R', 'V', 'O', 'L'};
constexpr std::uint32_t kDtypeF32 = 1;
constexpr std::size_t kHeaderBytes = 4 + 5 * 4;
constexpr std::uint64_t kMaxVoxels = std::uint64_t{1} << 31;

static_assert(std::endian::native == std::endian::little, "RVOL I/O assumes a little-endian host");

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[offset + i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_volume(const Volume& volume) {
  for (auto e : volume.shape) {
    if (e < 1 || e > std::numeric_limits<std::uint32_t>::max()) throw DataError("volume extent out of range");
  }
  if (static_cast<std::int64_t>(volume.voxels.size()) != volume.size()) {
    throw DataError("volume holds " + std::to_string(volume.voxels.size()) + " voxels, shape needs " +
                    std::to_string(volume.size()));
  }
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  out.reserve(kHeaderBytes + volume.voxels.size() * 4);
  put_u32(out, kRvolVersion);
  for (auto e : volume.shape) put_u32(out, static_cast<std::uint32_t>(e));
  put_u32(out, kDtypeF32);
  const std::size_t offset = out.size();
  out.resize(offset + volume.voxels.size() * 4);
  std::memcpy(out.data() + offset, volume.voxels.data(), volume.voxels.size() * 4);
  return out;
}

Volume decode_volume(const std::vector<std::uint8_t>& bytes, const std::string& source) {
  if (bytes.size() < kHeaderBytes) throw DataError(source + ": truncated RVOL header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw DataError(source + ": bad magic, not an RVOL file");
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kRvolVersion) throw DataError(source + ": unsupported RVOL version " + std::to_string(version));
  Volume v;
  std::uint64_t count = 1;
  for (int a = 0; a < 3; ++a) {
    const std::uint32_t e = get_u32(bytes, 8 + 4 * static_cast<std::size_t>(a));
    if (e == 0) throw DataError(source + ": zero extent");
    count *= e;
    if (count > kMaxVoxels) throw DataError(source + ": dimensions overflow the voxel limit");
    v.shape[static_cast<std::size_t>(a)] = e;
  }
  const std::uint32_t dtype = get_u32(bytes, 20);
  if (dtype != kDtypeF32) throw DataError(source + ": unsupported dtype tag " + std::to_string(dtype));
  const std::uint64_t expected = kHeaderBytes + count * 4;
  if (bytes.size() < expected) {
    throw DataError(source + ": truncated, expected " + std::to_string(expected) + " bytes, found " +
                    std::to_string(bytes.size()));
  }
  if (bytes.size() > expected) throw DataError(source + ": trailing bytes after voxel data");
  v.voxels.resize(count);
  std::memcpy(v.voxels.data(), bytes.data() + kHeaderBytes, count * 4);
  for (float x : v.voxels) {
    if (!std::isfinite(x)) throw DataError(source + ": non-finite voxel");
  }
  return v;
}

void write_volume(const std::filesystem::path& path, const Volume& volume) {
  const auto bytes = encode_volume(volume);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing " + path.string());
}

Volume read_volume(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open volume " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_volume(bytes, path.string());
}

Tensor volume_to_tensor(const Volume& volume, DType dtype) {
  const auto [h, w, d] = volume.shape;
  std::vector<double> values(static_cast<std::size_t>(volume.size()));
  for (std::int64_t x = 0; x < h; ++x) {
    for (std::int64_t y = 0; y < w; ++y) {
      for (std::int64_t z = 0; z < d; ++z) {
        values[static_cast<std::size_t>((x * w + y) * d + z)] = volume.at(x, y, z);
      }
    }
  }
  return Tensor::from_values({1, h, w, d}, values, dtype);
}

Volume tensor_to_volume(const Tensor& tensor) {
  if (tensor.rank() != 4 || tensor.dim(0) != 1) {
    throw ShapeError("tensor_to_volume: expected [1,H,W,D], got " + shape_str(tensor.shape()));
  }
  Volume v;
  v.shape = {tensor.dim(1), tensor.dim(2), tensor.dim(3)};
  v.voxels.resize(static_cast<std::size_t>(v.size()));
  const auto values = tensor.to_vector();
  const auto [h, w, d] = v.shape;
  for (std::int64_t x = 0; x < h; ++x) {
    for (std::int64_t y = 0; y < w; ++y) {
      for (std::int64_t z = 0; z < d; ++z) {
        v.voxels[static_cast<std::size_t>(v.index(x, y, z))] =
            static_cast<float>(values[static_cast<std::size_t>((x * w + y) * d + z)]);
      }
    }
  }
  return v;
}

namespace {

// Mean and std over nonzero entries, accumulated in double.
std::pair<double, double> nonzero_stats(const std::vector<double>& values) {
  double sum = 0.0;
  std::int64_t n = 0;
  for (double x : values) {
    if (x != 0.0) {
      sum += x;
      ++n;
    }
  }
  if (n == 0) throw DataError("normalize: volume has no nonzero voxels");
  const double mean = sum / static_cast<double>(n);
  double sq = 0.0;
  for (double x : values) {
    if (x != 0.0) sq += (x - mean) * (x - mean);
  }
  const double std = std::sqrt(sq / static_cast<double>(n));
  if (!(std > 0.0)) throw DataError("normalize: zero variance over nonzero voxels");
  return {mean, std};
}

}  // namespace

Volume normalize(const Volume& volume) {
  std::vector<double> values(volume.voxels.begin(), volume.voxels.end());
  const auto [mean, std] = nonzero_stats(values);
  Volume out = volume;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] == 0.0) continue;
    float v = static_cast<float>((values[i] - mean) / std);
    // A nonzero voxel that lands exactly on the mean must stay in the support.
    if (v == 0.0f) v = std::numeric_limits<float>::denorm_min();
    out.voxels[i] = v;
  }
  return out;
}

Volume resize(const Volume& volume, const std::array<std::int64_t, 3>& target) {
  if (volume.shape == target) return volume;
  NoGradGuard guard;
  const Tensor t = volume_to_tensor(volume, DType::kFloat64);
  Volume out = tensor_to_volume(ops::trilinear_resize(t, {target[0], target[1], target[2]}));
  out.spacing = volume.spacing;
  return out;
}

}  // namespace vivit
