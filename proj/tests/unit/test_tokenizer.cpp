#include <doctest.h>

#include <string>
#include <vector>

#include "test_support.hpp"
#include "vivit/checkpoint.hpp"
#include "vivit/errors.hpp"
#include "vivit/ops.hpp"

using namespace vivit;

namespace {

const std::vector<std::string> kNames{"M0", "M1", "M2", "M3", "M4", "M5", "M6", "M7"};

void register_all(VivitModel& model, std::size_t n = 8) {
  for (std::size_t i = 0; i < n; ++i) model.register_modality(kNames[i]);
}

}  // namespace

TEST_CASE("16^3 volumes with patch 4 and two modalities give 128 tokens") {
  const ModelConfig config = ModelConfig::desk();
  VivitModel model(config, 1, ModelHeads::kPretrain);
  register_all(model, 2);
  const auto study = testing::random_study(config, {"M0", "M1"}, 3, DType::kFloat32);
  const auto [seq, stage1] = model.tokenize(study);
  CHECK(seq.tokens.shape() == Shape{128, 64});
  CHECK(seq.grid == ops::Extent3{4, 4, 4});
  REQUIRE(stage1.maps.size() == 2);
  CHECK(stage1.maps[0].shape() == Shape{16, 8, 8, 8});
  REQUIRE(seq.spans.size() == 2);
  CHECK(seq.spans[1].start == 64);
  CHECK(seq.spans[1].length == 64);
}

TEST_CASE("a single modality yields one span covering the grid") {
  const ModelConfig config = ModelConfig::desk();
  VivitModel model(config, 1, ModelHeads::kPretrain);
  register_all(model, 3);
  const auto [seq, stage1] = model.tokenize(testing::random_study(config, {"M2"}, 4, DType::kFloat32));
  REQUIRE(seq.spans.size() == 1);
  CHECK(seq.spans[0].modality.name == "M2");
  CHECK(seq.spans[0].modality.index == 2);
  CHECK(seq.spans[0].start == 0);
  CHECK(seq.spans[0].length == 64);
}

TEST_CASE("token metadata enumerates the grid lexicographically per span") {
  const ModelConfig config = testing::tiny_config();
  VivitModel model(config, 1, ModelHeads::kPretrain, DType::kFloat64);
  register_all(model, 2);
  const auto [seq, stage1] = model.tokenize(testing::random_study(config, {"M1", "M0"}, 5));
  REQUIRE(seq.meta.size() == 16);
  std::size_t row = 0;
  for (int modality : {1, 0}) {
    for (std::int64_t x = 0; x < 2; ++x)
      for (std::int64_t y = 0; y < 2; ++y)
        for (std::int64_t z = 0; z < 2; ++z, ++row) {
          CHECK(seq.meta[row].modality == modality);
          CHECK(seq.meta[row].px == x);
          CHECK(seq.meta[row].py == y);
          CHECK(seq.meta[row].pz == z);
        }
  }
}

TEST_CASE("token count law holds for one to eight modalities") {
  const ModelConfig config = testing::tiny_config();
  VivitModel model(config, 1, ModelHeads::kPretrain, DType::kFloat64);
  register_all(model);
  for (std::size_t n = 1; n <= 8; ++n) {
    const std::vector<std::string> names(kNames.begin(), kNames.begin() + static_cast<long>(n));
    const auto [seq, stage1] = model.tokenize(testing::random_study(config, names, n));
    CHECK(seq.length() == static_cast<std::int64_t>(n) * 8);
    CHECK(stage1.maps.size() == n);
  }
}

TEST_CASE("reversing modality order permutes token blocks and nothing else") {
  const ModelConfig config = testing::tiny_config();
  VivitModel model(config, 2, ModelHeads::kPretrain, DType::kFloat64);
  register_all(model, 3);
  testing::randomize(model.parameters(), 8);
  auto study = testing::random_study(config, {"M0", "M1", "M2"}, 6);
  const auto [fwd, s1] = model.tokenize(study);
  std::reverse(study.volumes.begin(), study.volumes.end());
  const auto [rev, s2] = model.tokenize(study);
  for (int b = 0; b < 3; ++b) {
    const Tensor a = ops::slice_rows(fwd.tokens, b * 8, 8);
    const Tensor r = ops::slice_rows(rev.tokens, (2 - b) * 8, 8);
    CHECK(oracle::bitwise_equal(a, r));
    CHECK(oracle::bitwise_equal(s1.maps[b], s2.maps[2 - b]));
  }
}

TEST_CASE("removing a modality leaves the other modalities' tokens unchanged") {
  const ModelConfig config = testing::tiny_config();
  VivitModel model(config, 2, ModelHeads::kPretrain, DType::kFloat64);
  register_all(model, 3);
  testing::randomize(model.parameters(), 9);
  auto study = testing::random_study(config, {"M0", "M1", "M2"}, 7);
  const auto [full, s1] = model.tokenize(study);
  study.volumes.erase(study.volumes.begin() + 1);
  const auto [part, s2] = model.tokenize(study);
  CHECK(oracle::bitwise_equal(ops::slice_rows(full.tokens, 0, 8), ops::slice_rows(part.tokens, 0, 8)));
  CHECK(oracle::bitwise_equal(ops::slice_rows(full.tokens, 16, 8), ops::slice_rows(part.tokens, 8, 8)));
}

TEST_CASE("tokens are patch features plus positional and modality embeddings") {
  const ModelConfig config = testing::tiny_config();
  VivitModel model(config, 3, ModelHeads::kPretrain, DType::kFloat64);
  register_all(model, 2);
  testing::randomize(model.parameters(), 10);
  const auto study = testing::random_study(config, {"M1"}, 8);
  const auto [seq, stage1] = model.tokenize(study);
  const Tensor m = model.registry().entry("M1").vector;
  const Tensor features = model.tokenizer().stage1().forward(study.volumes[0].volume, m);
  const Tensor patches = model.tokenizer().stage2().forward(features, m);
  const auto rows = grid_to_rows(patches).to_vector();
  const auto pos = model.tokenizer().positional_table().to_vector();
  const auto emb = model.registry().entry("M1").embedding.to_vector();
  std::vector<double> expected(rows.size());
  for (std::size_t j = 0; j < 8; ++j)
    for (std::size_t t = 0; t < 16; ++t) expected[j * 16 + t] = rows[j * 16 + t] + (pos[j * 16 + t] + emb[t]);
  CHECK(oracle::max_abs_diff(seq.tokens, expected) <= 1e-12);
  CHECK(oracle::max_abs_diff(stage1.maps[0], features) == 0.0);
}

TEST_CASE("positional embedding is one shared row per coordinate") {
  const ModelConfig config = testing::tiny_config();
  VivitModel model(config, 4, ModelHeads::kPretrain, DType::kFloat64);
  register_all(model, 2);
  const Tokenizer& tok = model.tokenizer();
  const auto table = tok.positional_table().to_vector();
  for (std::int64_t x = 0; x < 2; ++x)
    for (std::int64_t y = 0; y < 2; ++y)
      for (std::int64_t z = 0; z < 2; ++z) {
        const auto row = tok.positional_embedding(x, y, z).to_vector();
        const std::size_t j = static_cast<std::size_t>((x * 2 + y) * 2 + z);
        CHECK(row == std::vector<double>(table.begin() + j * 16, table.begin() + (j + 1) * 16));
      }
  CHECK(tok.positional_embedding(0, 0, 0).to_vector() != tok.positional_embedding(1, 0, 0).to_vector());
  CHECK_THROWS_AS(tok.positional_embedding(2, 0, 0), ShapeError);
  CHECK_THROWS_AS(tok.positional_embedding(0, -1, 0), ShapeError);

  // Shared across modalities: the embedding part differs only by the modality vector e.
  const auto [seq, s] = model.tokenize(testing::random_study(config, {"M0", "M1"}, 9));
  const auto e = seq.embeddings.to_vector();
  const auto e0 = model.registry().entry("M0").embedding.to_vector();
  const auto e1 = model.registry().entry("M1").embedding.to_vector();
  for (std::size_t j = 0; j < 8; ++j)
    for (std::size_t t = 0; t < 16; ++t) {
      CHECK(e[j * 16 + t] - e0[t] == doctest::Approx(e[(8 + j) * 16 + t] - e1[t]).epsilon(1e-12));
    }
}

TEST_CASE("positional table round-trips through a checkpoint") {
  const ModelConfig config = testing::tiny_config();
  VivitModel model(config, 5, ModelHeads::kPretrain);
  register_all(model, 1);
  const auto loaded =
      model_from_checkpoint(decode_checkpoint(encode_checkpoint(capture_checkpoint(model, nullptr, {}))),
                            ModelHeads::kPretrain);
  CHECK(oracle::bitwise_equal(loaded->tokenizer().positional_table(), model.tokenizer().positional_table()));
}

TEST_CASE("grid_to_rows and rows_to_grid are inverse") {
  Rng rng(11);
  const Tensor g = oracle::random_tensor(rng, {5, 2, 3, 4});
  const Tensor rows = grid_to_rows(g);
  CHECK(rows.shape() == Shape{24, 5});
  CHECK(rows.value(((1 * 3 + 2) * 4 + 3) * 5 + 4) == g.value(((4 * 2 + 1) * 3 + 2) * 4 + 3));
  CHECK(oracle::bitwise_equal(rows_to_grid(rows, {2, 3, 4}), g));
  CHECK_THROWS_AS(rows_to_grid(rows, {2, 3, 3}), ShapeError);
}

TEST_CASE("tokenizer errors") {
  const ModelConfig config = testing::tiny_config();
  VivitModel model(config, 6, ModelHeads::kPretrain, DType::kFloat64);
  register_all(model, 2);
  CHECK_THROWS_AS(model.tokenize(testing::random_study(config, {"M5"}, 1)), ConfigError);
  CHECK_THROWS_AS(model.tokenize(testing::random_study(config, {"M0", "M0"}, 1)), ConfigError);
  ModelConfig other = config;
  other.volume = {12, 12, 12};
  CHECK_THROWS_AS(model.tokenize(testing::random_study(other, {"M0"}, 1)), ShapeError);
  StudyTensors empty;
  CHECK_THROWS_AS(model.tokenize(empty), ConfigError);

  ModelConfig bad = config;
  bad.volume = {10, 8, 8};
  CHECK_FALSE(bad.validate().empty());
}
