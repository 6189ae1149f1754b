#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "test_support.hpp"
#include "vivit/checkpoint.hpp"
#include "vivit/errors.hpp"
#include "vivit/ops.hpp"
#include "vivit/optimizer.hpp"
#include "vivit/run_config.hpp"
#include "vivit/training.hpp"

using namespace vivit;

namespace {

// Accumulates `g` into p's gradient through a tape: d/dp sum(p * g) = g.
void set_grad(const Tensor& p, const std::vector<double>& g) {
  Tape tape;
  tape.backward(ops::sum(ops::mul(p, Tensor::from_values(p.shape(), g, p.dtype()))));
}

RunConfig loop_config(std::int64_t steps, double lr) {
  RunConfig c;
  c.model = testing::tiny_config();
  c.steps = steps;
  c.lr = lr;
  c.accumulation = 2;
  c.seed = 3;
  return c;
}

std::vector<StudyTensors> studies(const ModelConfig& config, std::uint64_t seed, std::size_t count,
                                  const std::vector<std::string>& names, bool labels) {
  std::vector<StudyTensors> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(testing::random_study(config, names, seed + i, DType::kFloat64, labels));
  return out;
}

}  // namespace

TEST_CASE("AdamW first step moves by lr against the gradient sign") {
  ParameterSet params(1, DType::kFloat64);
  Tensor p = params.create("p", {3}, InitSpec::ones());
  set_grad(p, {1.0, -2.0, 0.5});
  AdamW opt(AdamWConfig{0.9, 0.999, 1e-8, 0.0});
  opt.step(params, 0.1);
  const auto v = p.to_vector();
  CHECK(v[0] == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(v[1] == doctest::Approx(1.1).epsilon(1e-6));
  CHECK(v[2] == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(opt.updates() == 1);
  CHECK(opt.slots().at("p").step == 1);
}

TEST_CASE("AdamW leaves a zero-gradient parameter unchanged without decay and decays it otherwise") {
  ParameterSet params(1, DType::kFloat64);
  Tensor p = params.create("p", {2}, InitSpec::ones());
  set_grad(p, {0.0, 0.0});
  AdamW plain(AdamWConfig{0.9, 0.999, 1e-8, 0.0});
  plain.step(params, 0.1);
  CHECK(p.to_vector() == std::vector<double>{1.0, 1.0});
  AdamW decayed(AdamWConfig{0.9, 0.999, 1e-8, 0.5});
  decayed.step(params, 0.1);
  CHECK(p.value(0) == doctest::Approx(0.95).epsilon(1e-12));
}

TEST_CASE("AdamW matches the scalar oracle over ten random steps") {
  ParameterSet params(2, DType::kFloat64);
  Tensor p = params.create("p", {5}, InitSpec::normal(1.0));
  std::vector<oracle::ScalarAdamW> ref(5);
  std::vector<double> expected = p.to_vector();
  AdamW opt(AdamWConfig{0.9, 0.999, 1e-8, 0.01});
  Rng rng(3);
  for (int s = 0; s < 10; ++s) {
    std::vector<double> g(5);
    for (auto& x : g) x = rng.normal();
    params.zero_grad();
    set_grad(p, g);
    const double lr = 0.01 * (1 + s);
    opt.step(params, lr);
    for (std::size_t i = 0; i < 5; ++i) expected[i] = ref[i].step(expected[i], g[i], lr, 0.01);
    CHECK(oracle::max_abs_diff(p, expected) <= 1e-7);
  }
}

TEST_CASE("AdamW skips parameters without a gradient") {
  ParameterSet params(4, DType::kFloat64);
  Tensor a = params.create("a", {2}, InitSpec::ones());
  Tensor b = params.create("b", {2}, InitSpec::ones());
  set_grad(a, {1.0, 1.0});
  AdamW opt;
  opt.step(params, 0.1);
  CHECK(b.to_vector() == std::vector<double>{1.0, 1.0});
  CHECK(opt.slots().count("b") == 0);
}

TEST_CASE("cosine schedule endpoints and midpoint") {
  CHECK(cosine_lr(0, 100, 1e-3) == doctest::Approx(1e-3));
  CHECK(cosine_lr(100, 100, 1e-3) == doctest::Approx(0.0));
  CHECK(cosine_lr(50, 100, 1e-3) == doctest::Approx(5e-4));
  CHECK(cosine_lr(50, 100, 1e-3, 1e-4) == doctest::Approx(5.5e-4));
  CHECK(cosine_lr(25, 100, 2.0) == doctest::Approx(1.0 + std::cos(std::numbers::pi / 4)));
  double prev = 1e9;
  for (std::int64_t s = 0; s <= 40; ++s) {
    const double lr = cosine_lr(s, 40, 1.0, 0.1);
    CHECK(lr <= prev);
    CHECK(lr >= 0.1 - 1e-15);
    prev = lr;
  }
  CHECK_THROWS_AS(cosine_lr(0, 0, 1.0), ConfigError);
  CHECK_THROWS_AS(cosine_lr(11, 10, 1.0), ConfigError);
  CHECK_THROWS_AS(cosine_lr(-1, 10, 1.0), ConfigError);
}

TEST_CASE("step counts follow studies, accumulation and epochs") {
  CHECK(steps_per_epoch(12, 4) == 3);
  CHECK(steps_per_epoch(13, 4) == 4);
  CHECK(steps_per_epoch(3, 4) == 1);
  CHECK_THROWS_AS(steps_per_epoch(0, 4), DataError);
  RunConfig c;
  c.epochs = 5;
  c.accumulation = 4;
  CHECK(total_steps(c, 13) == 20);
  c.steps = 7;
  CHECK(total_steps(c, 13) == 7);
}

TEST_CASE("pretrain loop records every step on a decreasing schedule") {
  const RunConfig config = loop_config(6, 1e-3);
  VivitModel model(config.model, 5, ModelHeads::kPretrain, DType::kFloat64);
  model.register_modality("A");
  model.register_modality("B");
  const auto train = studies(config.model, 10, 3, {"A", "B"}, false);
  const TrainSummary summary = pretrain_loop(model, config, train);
  REQUIRE(summary.steps.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(summary.steps[i].step == static_cast<std::int64_t>(i) + 1);
    CHECK(summary.steps[i].epoch == static_cast<std::int64_t>(i) / 2 + 1);
    CHECK(std::isfinite(summary.steps[i].loss));
    if (i > 0) CHECK(summary.steps[i].lr <= summary.steps[i - 1].lr);
  }
  CHECK(summary.steps[0].lr == doctest::Approx(1e-3));
  CHECK(summary.evals.empty());
  CHECK(summary.registered == std::vector<std::string>{"A", "B"});
}

TEST_CASE("identical runs produce identical losses and parameters") {
  const RunConfig config = loop_config(4, 1e-3);
  const auto train = studies(config.model, 20, 3, {"A", "B"}, false);
  std::vector<std::vector<double>> losses;
  std::vector<std::vector<std::uint8_t>> bytes;
  for (int run = 0; run < 2; ++run) {
    VivitModel model(config.model, 5, ModelHeads::kPretrain, DType::kFloat64);
    model.register_modality("A");
    model.register_modality("B");
    const auto summary = pretrain_loop(model, config, train);
    std::vector<double> l;
    for (const auto& s : summary.steps) l.push_back(s.loss);
    losses.push_back(l);
    bytes.push_back(encode_checkpoint(capture_checkpoint(model, nullptr, {})));
  }
  CHECK(losses[0] == losses[1]);
  CHECK(bytes[0] == bytes[1]);
}

TEST_CASE("checkpoint bytes round-trip and corruption is detected") {
  VivitModel model(testing::tiny_config(), 6, ModelHeads::kAll);
  model.register_modality("A");
  model.ensure_bank_entries({"A"});
  TrainingState state{"finetune", 12, 3, "rng-state", 0.5, "{}"};
  const auto bytes = encode_checkpoint(capture_checkpoint(model, nullptr, state));
  const Checkpoint ck = decode_checkpoint(bytes);
  CHECK(encode_checkpoint(ck) == bytes);
  const CheckpointInfo info = checkpoint_info(ck);
  CHECK(info.modalities == std::vector<std::string>{"A"});
  CHECK(info.state.step == 12);
  CHECK(info.state.epoch == 3);
  CHECK(info.state.best_metric == 0.5);
  CHECK(info.state.rng_state == "rng-state");
  CHECK_FALSE(info.has_optimizer);

  auto truncated = bytes;
  truncated.resize(bytes.size() / 2);
  CHECK_THROWS_AS(decode_checkpoint(truncated), DataError);
  auto magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(magic), DataError);
  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(decode_checkpoint(trailing), DataError);
  CHECK_THROWS_AS(decode_checkpoint({}), DataError);
  CHECK_THROWS_AS(read_checkpoint(testing::scratch_dir("ck_missing") / "none.vivt"), DataError);
}

TEST_CASE("a model rebuilt from a checkpoint reproduces forward passes bit for bit") {
  const ModelConfig config = testing::tiny_config();
  VivitModel model(config, 7, ModelHeads::kAll);
  model.register_modality("A");
  model.register_modality("B");
  model.ensure_bank_entries({"A", "B"});
  testing::randomize(model.parameters(), 8, 0.2);
  const auto dir = testing::scratch_dir("ck_rebuild");
  write_checkpoint(dir / "m.vivt", capture_checkpoint(model, nullptr, {}));
  const auto loaded = model_from_checkpoint(read_checkpoint(dir / "m.vivt"), ModelHeads::kAll);
  const auto study = testing::random_study(config, {"B", "A"}, 9, DType::kFloat32);
  CHECK(oracle::bitwise_equal(loaded->segment(study), model.segment(study)));
  const auto plan = make_mask_plan(16, 0.7, 10);
  CHECK(oracle::bitwise_equal(loaded->reconstruct(study, plan).predictions, model.reconstruct(study, plan).predictions));
  CHECK(loaded->registry().names() == model.registry().names());
}

TEST_CASE("partial loads report unmatched and fresh tensors") {
  const ModelConfig config = testing::tiny_config();
  VivitModel pre(config, 11, ModelHeads::kPretrain);
  pre.register_modality("A");
  testing::randomize(pre.parameters(), 12);
  const Checkpoint ck = capture_checkpoint(pre, nullptr, {});

  VivitModel seg(config, 13, ModelHeads::kSegment);
  const LoadReport report = load_parameters(seg, ck, {"tokenizer.", "encoder.", "modality."});
  CHECK(seg.registry().names() == std::vector<std::string>{"A"});
  CHECK_FALSE(report.loaded.empty());
  for (const auto& n : report.loaded) {
    CHECK(oracle::bitwise_equal(seg.parameters().at(n), pre.parameters().at(n)));
  }
  const auto has_prefix = [](const std::vector<std::string>& v, const std::string& p) {
    return std::any_of(v.begin(), v.end(), [&](const std::string& s) { return s.rfind(p, 0) == 0; });
  };
  CHECK(has_prefix(report.unmatched, "mae."));
  CHECK_FALSE(has_prefix(report.fresh, "encoder."));
  CHECK_FALSE(report.fresh.empty());

  ModelConfig other = config;
  other.embed_dim = 8;
  VivitModel mismatched(other, 1, ModelHeads::kSegment);
  CHECK_THROWS_AS(load_parameters(mismatched, ck, {"encoder."}), ShapeError);
}

TEST_CASE("finetuning with a modality absent from the init checkpoint adds fresh entries") {
  const ModelConfig config = testing::tiny_config();
  VivitModel pre(config, 14, ModelHeads::kPretrain, DType::kFloat64);
  pre.register_modality("A");
  pre.register_modality("B");
  const Checkpoint ck = capture_checkpoint(pre, nullptr, {});

  VivitModel seg(config, 15, ModelHeads::kSegment, DType::kFloat64);
  load_parameters(seg, ck, {"tokenizer.", "encoder.", "modality.", "bank."});
  seg.register_modality("C");
  REQUIRE(seg.registry().size() == 3);
  CHECK(seg.registry().id("C").index == 2);
  RunConfig rc = loop_config(2, 1e-3);
  rc.phase = Phase::kFinetune;
  const auto train = studies(config, 30, 2, {"A", "C"}, true);
  const auto summary = finetune_loop(seg, rc, train, {});
  CHECK(summary.steps.size() == 2);
  CHECK(seg.bank().contains("C", 1));
  CHECK(seg.bank().contains("A", 2));
  CHECK_FALSE(seg.bank().contains("B", 1));
  CHECK(ck.find("modality.C.vector") == nullptr);
}

TEST_CASE("best checkpoint tracks the highest validation Dice") {
  const ModelConfig config = testing::tiny_config();
  VivitModel model(config, 16, ModelHeads::kSegment, DType::kFloat64);
  model.register_modality("A");
  RunConfig rc = loop_config(6, 5e-3);
  rc.phase = Phase::kFinetune;
  rc.eval_every = 1;
  const auto train = studies(config, 40, 2, {"A"}, true);
  const auto val = studies(config, 50, 2, {"A"}, true);
  const auto dir = testing::scratch_dir("best_ckpt");
  const auto summary = finetune_loop(model, rc, train, val, RunOutputs{dir, nullptr, ""});
  REQUIRE(summary.evals.size() == 6);
  double best = -1.0;
  std::int64_t best_step = 0;
  for (const auto& e : summary.evals) {
    if (e.dice > best) {
      best = e.dice;
      best_step = e.step;
    }
  }
  CHECK(summary.best_metric == best);
  CHECK(summary.best_step == best_step);
  const CheckpointInfo info = checkpoint_info(read_checkpoint(dir / "checkpoints" / "best.vivt"));
  CHECK(info.state.step == best_step);
  CHECK(info.state.best_metric == best);
  CHECK(info.has_optimizer);
  CHECK(std::filesystem::exists(dir / "checkpoints" / "last.vivt"));
  CHECK(std::filesystem::exists(dir / "checkpoints" / "epoch_0001.vivt"));
}

TEST_CASE("finetuning rejects unlabelled studies") {
  const ModelConfig config = testing::tiny_config();
  VivitModel model(config, 17, ModelHeads::kSegment, DType::kFloat64);
  model.register_modality("A");
  RunConfig rc = loop_config(1, 1e-3);
  CHECK_THROWS_AS(finetune_loop(model, rc, studies(config, 1, 1, {"A"}, false), {}), DataError);
  VivitModel pre(config, 17, ModelHeads::kPretrain, DType::kFloat64);
  CHECK_THROWS_AS(finetune_loop(pre, rc, studies(config, 1, 1, {"A"}, true), {}), ConfigError);
}

TEST_CASE("optimizer moments survive a checkpoint") {
  VivitModel model(testing::tiny_config(), 18, ModelHeads::kPretrain, DType::kFloat64);
  model.register_modality("A");
  AdamW opt;
  {
    Tape tape;
    const auto study = testing::random_study(model.config(), {"A"}, 19);
    tape.backward(model.reconstruct(study, make_mask_plan(8, 0.5, 1)).loss);
  }
  opt.step(model.parameters(), 1e-3);
  const Checkpoint ck = decode_checkpoint(encode_checkpoint(capture_checkpoint(model, &opt, {})));
  CHECK(checkpoint_info(ck).has_optimizer);
  CHECK(load_parameters(model, ck).optimizer_entries > 0);
  AdamW restored;
  restore_optimizer(restored, ck);
  CHECK(restored.updates() == opt.updates());
  REQUIRE(restored.slots().size() == opt.slots().size());
  for (const auto& [name, slot] : opt.slots()) {
    const auto& other = restored.slots().at(name);
    CHECK(other.step == slot.step);
    CHECK(oracle::bitwise_equal(other.m, slot.m));
    CHECK(oracle::bitwise_equal(other.v, slot.v));
  }
}

TEST_CASE("run config accepts the tested mask ratios and rejects others") {
  const std::string base = R"({"phase": "pretrain", "manifest": "m.json", "output_dir": "out")";
  for (const char* ratio : {"0.5", "0.7", "0.9"}) {
    const RunConfig c = parse_run_config(base + ", \"mask_ratio\": " + ratio + "}");
    CHECK(c.mask_ratio == doctest::Approx(std::stod(ratio)));
    CHECK(c.validate().empty());
  }
  for (const char* ratio : {"1.2", "0", "1", "-0.1"}) {
    CHECK_THROWS_AS(parse_run_config(base + ", \"mask_ratio\": " + ratio + "}"), ConfigError);
  }
}

TEST_CASE("run config lists every problem at once") {
  try {
    parse_run_config(R"({"phase": "finetune", "lr": -1, "accumulation": 0, "bogus": 1, "mask_ratio": 2})");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    for (const char* key : {"manifest", "output_dir", "lr", "accumulation", "bogus: unknown field", "mask_ratio"}) {
      CHECK_MESSAGE(msg.find(key) != std::string::npos, key);
    }
  }
  CHECK_THROWS_AS(parse_run_config("not json"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"phase": "pretrain", "manifest": "m", "output_dir": "o", "init": "x"})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"phase": "pretrain", "manifest": "m", "output_dir": "o", "lr": "fast"})"),
                  ConfigError);
}

TEST_CASE("run config overrides and serialization round-trip") {
  const std::string text = R"({"phase": "finetune", "manifest": "m.json", "output_dir": "out", "init": "p.vivt"})";
  const RunConfig c =
      parse_run_config(text, {"lr=0.01", "model.depth=2", "model.conv_after=[1,2]", "exclude_modalities=[\"T2\"]",
                              "output_dir=other"});
  CHECK(c.phase == Phase::kFinetune);
  CHECK(c.lr == 0.01);
  CHECK(c.model.depth == 2);
  CHECK(c.output_dir == "other");
  CHECK(c.init_checkpoint == "p.vivt");
  CHECK(c.exclude_modalities == std::vector<std::string>{"T2"});
  const RunConfig again = parse_run_config(run_config_to_json(c));
  CHECK(run_config_to_json(again) == run_config_to_json(c));
  CHECK_THROWS_AS(parse_run_config(text, {"novalue"}), ConfigError);
  CHECK(default_lr(Phase::kPretrain) > 0.0);
}
