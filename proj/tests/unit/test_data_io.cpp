#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>
#include <vector>

#include "test_support.hpp"
#include "vivit/errors.hpp"
#include "vivit/manifest.hpp"
#include "vivit/synthetic.hpp"
#include "vivit/volume_io.hpp"

using namespace vivit;

namespace {

Volume random_volume(std::array<std::int64_t, 3> shape, std::uint64_t seed) {
  Rng rng(seed);
  Volume v;
  v.shape = shape;
  v.voxels.resize(static_cast<std::size_t>(v.size()));
  for (auto& x : v.voxels) x = static_cast<float>(rng.normal());
  return v;
}

// Integer lattice points within distance r of an integer centre.
std::int64_t ball_points(double r) {
  const auto k = static_cast<std::int64_t>(std::floor(r));
  std::int64_t n = 0;
  for (std::int64_t x = -k; x <= k; ++x)
    for (std::int64_t y = -k; y <= k; ++y)
      for (std::int64_t z = -k; z <= k; ++z)
        if (static_cast<double>(x * x + y * y + z * z) <= r * r) ++n;
  return n;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream(path) << text;
}

}  // namespace

TEST_CASE("RVOL round-trips bit for bit") {
  const auto dir = testing::scratch_dir("rvol");
  for (const auto shape : {std::array<std::int64_t, 3>{8, 8, 8}, {1, 1, 1}, {3, 5, 2}}) {
    const Volume v = random_volume(shape, 1);
    write_volume(dir / "v.rvol", v);
    const Volume back = read_volume(dir / "v.rvol");
    CHECK(back.shape == v.shape);
    CHECK(back.voxels == v.voxels);
    CHECK(testing::read_bytes(dir / "v.rvol").size() == 24 + 4 * v.voxels.size());
  }
}

TEST_CASE("RVOL header is little-endian with x fastest") {
  Volume v;
  v.shape = {2, 1, 1};
  v.voxels = {1.0f, 2.0f};
  const auto bytes = encode_volume(v);
  REQUIRE(bytes.size() == 32);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "RVOL");
  CHECK(bytes[4] == 1);
  CHECK(bytes[8] == 2);
  CHECK(bytes[20] == 1);
  // 1.0f = 0x3f800000
  CHECK(bytes[27] == 0x3f);
  CHECK(bytes[31] == 0x40);
}

TEST_CASE("RVOL decoding rejects malformed input") {
  const auto good = encode_volume(random_volume({4, 4, 4}, 2));
  auto truncated = good;
  truncated.resize(good.size() - 4);
  CHECK_THROWS_AS(decode_volume(truncated), DataError);
  auto header = good;
  header.resize(10);
  CHECK_THROWS_AS(decode_volume(header), DataError);
  auto magic = good;
  magic[1] = 'X';
  CHECK_THROWS_AS(decode_volume(magic), DataError);
  auto version = good;
  version[4] = 9;
  CHECK_THROWS_AS(decode_volume(version), DataError);
  auto zero = good;
  zero[8] = 0;
  CHECK_THROWS_AS(decode_volume(zero), DataError);
  auto dtype = good;
  dtype[20] = 2;
  CHECK_THROWS_AS(decode_volume(dtype), DataError);
  auto trailing = good;
  trailing.push_back(0);
  CHECK_THROWS_AS(decode_volume(trailing), DataError);
  auto nan = good;
  nan[24] = 0x00;
  nan[25] = 0x00;
  nan[26] = 0xc0;
  nan[27] = 0x7f;
  CHECK_THROWS_AS(decode_volume(nan), DataError);
  CHECK_THROWS_AS(read_volume(testing::scratch_dir("rvol_missing") / "none.rvol"), DataError);
}

TEST_CASE("volume to tensor reorders to z fastest and back") {
  const Volume v = random_volume({3, 4, 5}, 3);
  const Tensor t = volume_to_tensor(v, DType::kFloat64);
  CHECK(t.shape() == Shape{1, 3, 4, 5});
  for (std::int64_t x = 0; x < 3; ++x)
    for (std::int64_t y = 0; y < 4; ++y)
      for (std::int64_t z = 0; z < 5; ++z) CHECK(t.value((x * 4 + y) * 5 + z) == v.at(x, y, z));
  CHECK(tensor_to_volume(t).voxels == v.voxels);
}

TEST_CASE("normalize maps {2,4} to {-1,+1} and keeps background at zero") {
  Volume v;
  v.shape = {2, 2, 1};
  v.voxels = {0.0f, 2.0f, 4.0f, 0.0f};
  const Volume n = normalize(v);
  CHECK(n.voxels == std::vector<float>{0.0f, -1.0f, 1.0f, 0.0f});
}

TEST_CASE("normalized volumes have zero mean and unit std over the support") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Volume v = random_volume({6, 6, 6}, seed);
    Rng rng(seed + 100);
    for (auto& x : v.voxels)
      if (rng.uniform() < 0.3) x = 0.0f;
    for (auto& x : v.voxels) x = x * 3.0f + (x != 0.0f ? 5.0f : 0.0f);
    const Volume n = normalize(v);
    double sum = 0.0, sq = 0.0;
    std::int64_t count = 0;
    for (std::size_t i = 0; i < n.voxels.size(); ++i) {
      CHECK((v.voxels[i] == 0.0f) == (n.voxels[i] == 0.0f));
      if (n.voxels[i] == 0.0f) continue;
      sum += n.voxels[i];
      sq += static_cast<double>(n.voxels[i]) * n.voxels[i];
      ++count;
    }
    const double mean = sum / static_cast<double>(count);
    CHECK(std::abs(mean) <= 1e-5);
    CHECK(std::abs(std::sqrt(sq / static_cast<double>(count) - mean * mean) - 1.0) <= 1e-5);
    const Volume twice = normalize(n);
    for (std::size_t i = 0; i < n.voxels.size(); ++i) CHECK(std::abs(twice.voxels[i] - n.voxels[i]) <= 1e-6);
  }
}

TEST_CASE("normalize rejects degenerate volumes") {
  Volume zeros;
  zeros.shape = {2, 2, 2};
  zeros.voxels.assign(8, 0.0f);
  CHECK_THROWS_AS(normalize(zeros), DataError);
  Volume flat = zeros;
  flat.voxels.assign(8, 3.0f);
  CHECK_THROWS_AS(normalize(flat), DataError);
}

TEST_CASE("resize is the identity at the same shape and matches the trilinear oracle otherwise") {
  const Volume v = random_volume({4, 6, 5}, 4);
  CHECK(resize(v, v.shape).voxels == v.voxels);
  const Volume r = resize(v, {8, 3, 5});
  CHECK(r.shape == std::array<std::int64_t, 3>{8, 3, 5});
  const auto t = volume_to_tensor(v, DType::kFloat64).to_vector();
  const auto ref = oracle::trilinear(t, 1, 4, 6, 5, 8, 3, 5);
  const auto got = volume_to_tensor(r, DType::kFloat64).to_vector();
  double err = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) err = std::max(err, std::abs(got[i] - ref[i]));
  CHECK(err <= 1e-6);
}

TEST_CASE("manifest validation") {
  const auto dir = testing::scratch_dir("manifest");
  write_volume(dir / "a.rvol", random_volume({4, 4, 4}, 5));
  const std::string ok = R"({"modalities": ["A", "B"], "studies": [
      {"id": "s1", "split": "train", "volumes": {"A": "a.rvol"}, "label": "a.rvol"},
      {"id": "s2", "split": "val", "volumes": {"B": "a.rvol", "A": "a.rvol"}}]})";
  const Manifest m = parse_manifest(ok, dir);
  CHECK(m.modalities == std::vector<std::string>{"A", "B"});
  REQUIRE(m.studies.size() == 2);
  CHECK(m.split(Split::kTrain).size() == 1);
  CHECK(m.split(Split::kVal).front()->id == "s2");
  CHECK(m.studies[0].label == std::optional<std::string>("a.rvol"));

  CHECK_THROWS_AS(parse_manifest(R"({"modalities": ["A"], "studies": [
      {"id": "s1", "split": "train", "volumes": {"A": "a.rvol"}},
      {"id": "s1", "split": "train", "volumes": {"A": "a.rvol"}}]})", dir),
                  DataError);
  CHECK_THROWS_AS(parse_manifest(R"({"modalities": ["A"], "studies": [
      {"id": "s1", "split": "train", "volumes": {"C": "a.rvol"}}]})", dir),
                  DataError);
  CHECK_THROWS_AS(parse_manifest(R"({"modalities": ["A"], "studies": [
      {"id": "s1", "split": "train", "volumes": {"A": "missing.rvol"}}]})", dir),
                  DataError);
  CHECK_NOTHROW(parse_manifest(R"({"modalities": ["A"], "studies": [
      {"id": "s1", "split": "train", "volumes": {"A": "missing.rvol"}}]})", dir, false));
  CHECK_THROWS_AS(parse_manifest(R"({"modalities": ["A"], "studies": [
      {"id": "s1", "split": "train", "volumes": {}}]})", dir),
                  DataError);
  CHECK_THROWS_AS(parse_manifest(R"({"modalities": ["A"], "studies": [
      {"id": "s1", "split": "train", "volumes": {"A": "a.rvol", "A": "a.rvol"}}]})", dir),
                  DataError);
  CHECK_THROWS_AS(parse_manifest(R"({"modalities": ["A", "A"], "studies": []})", dir), DataError);
  CHECK_THROWS_AS(parse_manifest("{", dir), DataError);

  write_text(dir / "manifest.json", manifest_to_json(m));
  const Manifest again = read_manifest(dir / "manifest.json");
  CHECK(manifest_to_json(again) == manifest_to_json(m));
}

TEST_CASE("load_study resizes, normalizes and canonicalizes") {
  const auto dir = testing::scratch_dir("load_study");
  Volume a = random_volume({8, 8, 8}, 6);
  for (auto& x : a.voxels) x = std::abs(x) + 1.0f;
  write_volume(dir / "a.rvol", a);
  Volume label;
  label.shape = {8, 8, 8};
  label.voxels.assign(512, 0.0f);
  label.voxels[10] = 1.0f;
  write_volume(dir / "l.rvol", label);
  const Manifest m = parse_manifest(R"({"modalities": ["A", "B"], "studies": [
      {"id": "s", "split": "train", "volumes": {"B": "a.rvol", "A": "a.rvol"}, "label": "l.rvol"}]})",
                                    dir);
  LoadOptions opts;
  opts.volume = {4, 4, 4};
  StudyTensors s = load_study(m, m.studies[0], opts);
  CHECK(s.modality_names() == std::vector<std::string>{"A", "B"});
  CHECK(s.volumes[0].volume.shape() == Shape{1, 4, 4, 4});
  REQUIRE(s.label.has_value());
  CHECK(s.label->shape() == Shape{1, 4, 4, 4});
  for (double x : s.label->to_vector()) CHECK((x == 0.0 || x == 1.0));

  ParameterSet params(1);
  ModalityRegistry registry(params, 4, 8);
  registry.register_modality("B");
  registry.register_modality("A");
  canonicalize(s, registry);
  CHECK(s.modality_names() == std::vector<std::string>{"B", "A"});
}

TEST_CASE("synthetic corpus is reproducible from its seed") {
  SyntheticSpec spec = default_synthetic_spec();
  spec.num_studies = 3;
  const auto a = generate_synthetic_corpus(spec, 11, testing::scratch_dir("synth_a"));
  const auto b = generate_synthetic_corpus(spec, 11, testing::scratch_dir("synth_b"));
  CHECK(testing::read_bytes(a) == testing::read_bytes(b));
  const Manifest ma = read_manifest(a), mb = read_manifest(b);
  for (std::size_t i = 0; i < ma.studies.size(); ++i) {
    for (std::size_t k = 0; k < ma.studies[i].volumes.size(); ++k) {
      CHECK(testing::read_bytes(ma.resolve(ma.studies[i].volumes[k].second)) ==
            testing::read_bytes(mb.resolve(mb.studies[i].volumes[k].second)));
    }
  }
  const auto c = generate_synthetic_study(spec, 12, 0);
  const auto d = generate_synthetic_study(spec, 11, 0);
  CHECK(c.label.voxels != d.label.voxels);
}

TEST_CASE("forced subsets give exactly that subset") {
  SyntheticSpec spec = default_synthetic_spec();
  spec.subsets = {{{"TraceW", "T2"}, 1.0}};
  for (std::int64_t i = 0; i < 5; ++i) {
    const auto s = generate_synthetic_study(spec, 3, i);
    std::set<std::string> names;
    for (const auto& [n, v] : s.volumes) names.insert(n);
    CHECK(names == std::set<std::string>{"TraceW", "T2"});
  }
}

TEST_CASE("lesion labels are binary, nonempty and bounded by the radius range") {
  const SyntheticSpec spec = default_synthetic_spec();
  const std::int64_t lo = ball_points(spec.lesion_radius_min);
  const std::int64_t hi = spec.lesion_count_max * ball_points(spec.lesion_radius_max);
  for (std::int64_t i = 0; i < 100; ++i) {
    const auto s = generate_synthetic_study(spec, 21, i);
    std::int64_t count = 0;
    for (float x : s.label.voxels) {
      CHECK((x == 0.0f || x == 1.0f));
      count += x == 1.0f;
    }
    CHECK(s.lesion_count >= spec.lesion_count_min);
    CHECK(s.lesion_count <= spec.lesion_count_max);
    CHECK(count >= lo);
    CHECK(count <= hi);
    for (const auto& [name, v] : s.volumes) {
      CHECK(v.shape == spec.volume);
      for (float x : v.voxels) CHECK(std::isfinite(x));
    }
  }
}

TEST_CASE("infeasible synthetic specs are rejected") {
  SyntheticSpec spec = default_synthetic_spec();
  spec.lesion_radius_min = 7.0;
  spec.lesion_radius_max = 8.0;
  CHECK_FALSE(spec.validate().empty());
  CHECK_THROWS_AS(generate_synthetic_corpus(spec, 1, testing::scratch_dir("synth_bad")), ConfigError);
  SyntheticSpec unknown = default_synthetic_spec();
  unknown.subsets = {{{"FLAIR"}, 1.0}};
  CHECK_FALSE(unknown.validate().empty());
  CHECK_THROWS_AS(parse_synthetic_spec("[1, 2]"), ConfigError);
  const SyntheticSpec round = parse_synthetic_spec(synthetic_spec_to_json(default_synthetic_spec()));
  CHECK(synthetic_spec_to_json(round) == synthetic_spec_to_json(default_synthetic_spec()));
}
