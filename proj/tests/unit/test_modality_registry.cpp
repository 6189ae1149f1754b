#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "test_support.hpp"
#include "vivit/checkpoint.hpp"
#include "vivit/errors.hpp"
#include "vivit/modality_registry.hpp"

using namespace vivit;

TEST_CASE("registration is idempotent") {
  ParameterSet params(3);
  ModalityRegistry reg(params, 16, 64);
  const ModalityId a = reg.register_modality("ADC");
  const ModalityId b = reg.register_modality("ADC");
  CHECK(a == b);
  CHECK(reg.size() == 1);
  CHECK(reg.entry(a).vector.shape() == Shape{16});
  CHECK(reg.entry(a).embedding.shape() == Shape{64});
}

TEST_CASE("eight pretrain contrasts get indices 0..7") {
  ParameterSet params(3);
  ModalityRegistry reg(params, 16, 64);
  const std::vector<std::string> names{"ADC", "TraceW", "T2", "T1", "T1CE", "FLAIR", "GRE", "SWI"};
  for (std::size_t i = 0; i < names.size(); ++i) CHECK(reg.register_modality(names[i]).index == static_cast<int>(i));
  CHECK(reg.names() == names);
}

TEST_CASE("empty and unknown names are rejected") {
  ParameterSet params(3);
  ModalityRegistry reg(params, 4, 8);
  CHECK_THROWS_AS(reg.register_modality(""), ConfigError);
  CHECK_THROWS_AS(reg.id("FLAIR"), ConfigError);
  CHECK_FALSE(reg.find("FLAIR").has_value());
}

TEST_CASE("new entries are small seeded normals that depend only on seed and name") {
  ParameterSet p1(11), p2(11);
  ModalityRegistry r1(p1, 16, 64), r2(p2, 16, 64);
  r1.register_modality("T1");
  r1.register_modality("T2");
  r2.register_modality("T2");
  CHECK(oracle::bitwise_equal(r1.entry("T2").vector, r2.entry("T2").vector));
  const auto v = r1.entry("T1").embedding.to_vector();
  double ss = 0.0;
  for (double x : v) ss += x * x;
  const double std = std::sqrt(ss / static_cast<double>(v.size()));
  CHECK(std > 0.01);
  CHECK(std < 0.04);
}

TEST_CASE("adding a modality leaves existing entries untouched") {
  ParameterSet params(5);
  ModalityRegistry reg(params, 8, 16);
  reg.register_modality("A");
  reg.register_modality("B");
  const auto a = reg.entry("A").vector.to_vector();
  const auto be = reg.entry("B").embedding.to_vector();
  reg.register_modality("C");
  CHECK(reg.entry("A").vector.to_vector() == a);
  CHECK(reg.entry("B").embedding.to_vector() == be);
}

TEST_CASE("registry values round-trip through a checkpoint bit-exactly") {
  const ModelConfig config = testing::tiny_config();
  VivitModel model(config, 21, ModelHeads::kPretrain);
  for (const char* name : {"ADC", "TraceW", "T2"}) model.register_modality(name);
  const auto bytes = encode_checkpoint(capture_checkpoint(model, nullptr, {}));
  const auto loaded = model_from_checkpoint(decode_checkpoint(bytes), ModelHeads::kPretrain);
  CHECK(loaded->registry().names() == model.registry().names());
  for (const char* name : {"ADC", "TraceW", "T2"}) {
    CHECK(oracle::bitwise_equal(loaded->registry().entry(name).vector, model.registry().entry(name).vector));
    CHECK(oracle::bitwise_equal(loaded->registry().entry(name).embedding, model.registry().entry(name).embedding));
    CHECK(loaded->registry().id(name).index == model.registry().id(name).index);
  }
}

TEST_CASE("zero projections and zero modality vectors give unit scalings") {
  Rng rng(1);
  const Tensor m = oracle::random_tensor(rng, {6});
  DynamicProjection zero{Tensor::zeros({5, 6}, DType::kFloat64), Tensor::zeros({5, 6}, DType::kFloat64)};
  DynamicScales s = project_dynamic_params(m, zero);
  for (double v : s.weight_scale.to_vector()) CHECK(v == 1.0);
  for (double v : s.bias_scale.to_vector()) CHECK(v == 1.0);

  DynamicProjection rnd{oracle::random_tensor(rng, {5, 6}), oracle::random_tensor(rng, {5, 6})};
  s = project_dynamic_params(Tensor::zeros({6}, DType::kFloat64), rnd);
  for (double v : s.weight_scale.to_vector()) CHECK(v == 1.0);
}

TEST_CASE("projection matches the matrix-vector loop oracle") {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const auto co = rng.uniform_range(1, 12), l = rng.uniform_range(1, 16);
    const Tensor m = oracle::random_tensor(rng, {l});
    DynamicProjection p{oracle::random_tensor(rng, {co, l}), oracle::random_tensor(rng, {co, l})};
    const DynamicScales s = project_dynamic_params(m, p);
    const auto w = p.weight_proj.to_vector(), b = p.bias_proj.to_vector(), mv = m.to_vector();
    std::vector<double> ew(static_cast<std::size_t>(co)), eb(static_cast<std::size_t>(co));
    for (std::int64_t c = 0; c < co; ++c) {
      double sw = 0.0, sb = 0.0;
      for (std::int64_t i = 0; i < l; ++i) {
        sw += w[c * l + i] * mv[i];
        sb += b[c * l + i] * mv[i];
      }
      ew[c] = 1.0 + sw;
      eb[c] = 1.0 + sb;
    }
    CHECK(oracle::max_abs_diff(s.weight_scale, ew) <= 1e-6);
    CHECK(oracle::max_abs_diff(s.bias_scale, eb) <= 1e-6);
  }
}

TEST_CASE("projection length mismatch is rejected") {
  Rng rng(3);
  DynamicProjection p{oracle::random_tensor(rng, {4, 5}), oracle::random_tensor(rng, {4, 5})};
  CHECK_THROWS_AS(project_dynamic_params(oracle::random_tensor(rng, {6}), p), ShapeError);
}

TEST_CASE("distinct modality vectors give distinct scalings under a nonzero projection") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    ParameterSet params(seed, DType::kFloat64);
    ModalityRegistry reg(params, 8, 16);
    reg.register_modality("A");
    reg.register_modality("B");
    Rng rng(seed + 100);
    DynamicProjection p{oracle::random_tensor(rng, {6, 8}), oracle::random_tensor(rng, {6, 8})};
    const auto a = project_dynamic_params(reg.entry("A").vector, p).weight_scale.to_vector();
    const auto b = project_dynamic_params(reg.entry("B").vector, p).weight_scale.to_vector();
    CHECK(a != b);
  }
}
