#include "vivit/training.hpp"

#include <algorithm>
#include <cstdio>
#include <functional>
#include <limits>

#include <json.hpp>

#include "vivit/errors.hpp"
#include "vivit/losses.hpp"
#include "vivit/mae.hpp"
#include "vivit/ops.hpp"

namespace vivit {

std::optional<std::int64_t> TrainSummary::first_step_reaching(double dice) const {
  for (const auto& e : evals) {
    if (e.dice >= dice) return e.step;
  }
  return std::nullopt;
}

MetricsLog::MetricsLog(const std::filesystem::path& path)
    : out_(std::make_unique<std::ofstream>(path, std::ios::trunc)) {
  if (!*out_) throw DataError("cannot open metrics log " + path.string());
}

void MetricsLog::step(const std::string& phase, const StepRecord& r) {
  if (!out_) return;
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["phase"] = phase;
  j["loss"] = r.loss;
  j["lr"] = r.lr;
  *out_ << j.dump() << '\n';
  out_->flush();
}

void MetricsLog::eval(const EvalRecord& r) {
  if (!out_) return;
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["phase"] = "val";
  j["dice"] = r.dice;
  *out_ << j.dump() << '\n';
  out_->flush();
}

std::int64_t steps_per_epoch(std::int64_t studies, std::int64_t accumulation) {
  if (studies < 1) throw DataError("no training studies");
  return (studies + accumulation - 1) / accumulation;
}

std::int64_t total_steps(const RunConfig& config, std::int64_t studies) {
  return config.steps > 0 ? config.steps : config.epochs * steps_per_epoch(studies, config.accumulation);
}

namespace {

// Seeded epoch-wise shuffling of study indices.
class StudyOrder {
 public:
  StudyOrder(std::size_t count, Rng rng) : order_(count), rng_(std::move(rng)) {
    for (std::size_t i = 0; i < count; ++i) order_[i] = i;
  }
  void shuffle() {
    for (std::size_t i = order_.size(); i > 1; --i) {
      std::swap(order_[i - 1], order_[static_cast<std::size_t>(rng_.uniform_int(i))]);
    }
  }
  std::vector<std::size_t> batch(std::int64_t k, std::int64_t size) const {
    const auto begin = static_cast<std::size_t>(k * size);
    const auto end = std::min(order_.size(), begin + static_cast<std::size_t>(size));
    return {order_.begin() + static_cast<std::ptrdiff_t>(begin), order_.begin() + static_cast<std::ptrdiff_t>(end)};
  }

 private:
  std::vector<std::size_t> order_;
  Rng rng_;
};

std::string epoch_file(std::int64_t epoch) {
  char name[32];
  std::snprintf(name, sizeof(name), "epoch_%04lld.vivt", static_cast<long long>(epoch));
  return name;
}

struct LoopHooks {
  std::string phase;
  // Scalar loss of one study, recorded on the active tape.
  std::function<Tensor(const StudyTensors&, Rng&)> loss;
  // Validation mean Dice, or nothing when there is no validation data.
  std::function<std::optional<double>()> validate;
};

TrainSummary run_loop(VivitModel& model, const RunConfig& config, const std::vector<StudyTensors>& train,
                      const RunOutputs& outputs, const LoopHooks& hooks) {
  const auto n = static_cast<std::int64_t>(train.size());
  const std::int64_t per_epoch = steps_per_epoch(n, config.accumulation);
  const std::int64_t total = total_steps(config, n);
  const bool has_val = static_cast<bool>(hooks.validate);

  Rng root(config.seed);
  StudyOrder order(train.size(), root.split("order"));
  Rng mask_rng = root.split("mask");
  AdamW optimizer(AdamWConfig{0.9, 0.999, 1e-8, config.weight_decay});
  ParameterSet& params = model.parameters();

  const std::filesystem::path ckpt_dir = outputs.dir.empty() ? std::filesystem::path() : outputs.dir / "checkpoints";
  if (!ckpt_dir.empty()) std::filesystem::create_directories(ckpt_dir);

  TrainSummary summary;
  summary.best_metric = has_val ? -1.0 : std::numeric_limits<double>::infinity();
  double epoch_loss = 0.0;
  std::int64_t epoch_count = 0;

  const auto save = [&](const std::string& file, std::int64_t step, std::int64_t epoch) {
    if (ckpt_dir.empty()) return;
    TrainingState state{hooks.phase, step, epoch, mask_rng.state(), summary.best_metric, outputs.config_json};
    write_checkpoint(ckpt_dir / file, capture_checkpoint(model, &optimizer, state));
  };
  const auto run_eval = [&](std::int64_t step, std::int64_t epoch) {
    const std::optional<double> dice = hooks.validate();
    if (!dice) return;
    const EvalRecord rec{step, *dice};
    summary.evals.push_back(rec);
    if (outputs.log) outputs.log->eval(rec);
    if (*dice > summary.best_metric) {
      summary.best_metric = *dice;
      summary.best_step = step;
      save("best.vivt", step, epoch);
    }
  };

  for (std::int64_t step = 1; step <= total; ++step) {
    const std::int64_t epoch = (step - 1) / per_epoch + 1;
    const std::int64_t k = (step - 1) % per_epoch;
    if (k == 0) order.shuffle();
    const auto batch = order.batch(k, config.accumulation);
    const double lr = cosine_lr(step - 1, total, config.lr, config.lr_min);

    params.zero_grad();
    double loss_sum = 0.0;
    for (const std::size_t idx : batch) {
      Tape tape;
      const Tensor loss = hooks.loss(train[idx], mask_rng);
      tape.backward(ops::scale(loss, 1.0 / static_cast<double>(batch.size())));
      loss_sum += loss.item();
    }
    optimizer.step(params, lr);
    params.zero_grad();

    const StepRecord rec{step, epoch, loss_sum / static_cast<double>(batch.size()), lr};
    summary.steps.push_back(rec);
    if (outputs.log) outputs.log->step(hooks.phase, rec);
    epoch_loss += rec.loss;
    ++epoch_count;

    const bool epoch_end = k == per_epoch - 1 || step == total;
    if (has_val && config.eval_every > 0 && (step % config.eval_every == 0 || step == total)) run_eval(step, epoch);
    if (epoch_end) {
      if (has_val && config.eval_every == 0) run_eval(step, epoch);
      const double mean_loss = epoch_loss / static_cast<double>(epoch_count);
      if (!has_val && mean_loss < summary.best_metric) {
        summary.best_metric = mean_loss;
        summary.best_step = step;
        save("best.vivt", step, epoch);
      }
      if (epoch % config.checkpoint_every == 0) save(epoch_file(epoch), step, epoch);
      epoch_loss = 0.0;
      epoch_count = 0;
    }
  }
  save("last.vivt", total, (total - 1) / per_epoch + 1);
  summary.registered = model.registry().names();
  return summary;
}

}  // namespace

TrainSummary pretrain_loop(VivitModel& model, const RunConfig& config, const std::vector<StudyTensors>& train,
                           const RunOutputs& outputs) {
  if (!model.has_mae()) throw ConfigError("pretraining needs a model with an MAE decoder");
  LoopHooks hooks;
  hooks.phase = "pretrain";
  hooks.loss = [&](const StudyTensors& study, Rng& rng) {
    const std::int64_t length =
        static_cast<std::int64_t>(study.volumes.size()) * model.config().tokens_per_modality();
    const MaskPlan plan = make_mask_plan(length, config.mask_ratio, rng.next_u64());
    return model.reconstruct(study, plan).loss;
  };
  return run_loop(model, config, train, outputs, hooks);
}

TrainSummary finetune_loop(VivitModel& model, const RunConfig& config, const std::vector<StudyTensors>& train,
                           const std::vector<StudyTensors>& val, const RunOutputs& outputs) {
  if (!model.has_segmentation()) throw ConfigError("finetuning needs a model with a segmentation head");
  for (const auto* set : {&train, &val}) {
    for (const auto& s : *set) {
      if (!s.label) throw DataError("study '" + s.id + "' has no label");
      model.ensure_bank_entries(s.modality_names());
    }
  }
  LoopHooks hooks;
  hooks.phase = "finetune";
  hooks.loss = [&](const StudyTensors& study, Rng&) {
    const Tensor logits = model.segment(study);
    if (logits.shape() != study.label->shape()) {
      throw DataError("study '" + study.id + "': label " + shape_str(study.label->shape()) + " vs logits " +
                      shape_str(logits.shape()));
    }
    return dice_loss(logits, *study.label);
  };
  if (!val.empty()) hooks.validate = [&]() -> std::optional<double> { return evaluate_dice(model, val); };
  return run_loop(model, config, train, outputs, hooks);
}

double evaluate_reconstruction(const VivitModel& model, const std::vector<StudyTensors>& studies, double ratio,
                               std::uint64_t seed) {
  if (studies.empty()) throw DataError("evaluate_reconstruction: no studies");
  NoGradGuard guard;
  double total = 0.0;
  for (std::size_t i = 0; i < studies.size(); ++i) {
    const std::int64_t length =
        static_cast<std::int64_t>(studies[i].volumes.size()) * model.config().tokens_per_modality();
    const MaskPlan plan = make_mask_plan(length, ratio, mix_seed(seed, i));
    total += model.reconstruct(studies[i], plan).loss.item();
  }
  return total / static_cast<double>(studies.size());
}

double evaluate_dice(VivitModel& model, const std::vector<StudyTensors>& studies) {
  if (studies.empty()) throw DataError("evaluate_dice: no studies");
  NoGradGuard guard;
  double total = 0.0;
  for (const auto& s : studies) total += dice_from_logits(model.segment(s), *s.label).mean;
  return total / static_cast<double>(studies.size());
}

double evaluate_soft_dice(VivitModel& model, const std::vector<StudyTensors>& studies) {
  if (studies.empty()) throw DataError("evaluate_soft_dice: no studies");
  NoGradGuard guard;
  double total = 0.0;
  for (const auto& s : studies) total += 1.0 - dice_loss(model.segment(s), *s.label).item();
  return total / static_cast<double>(studies.size());
}

std::vector<StudyTensors> load_split(const Manifest& manifest, Split split, const ModelConfig& model,
                                     const std::vector<std::string>& exclude, bool labels) {
  LoadOptions options;
  options.volume = model.volume;
  options.num_classes = model.num_classes;
  options.load_label = labels;
  std::vector<StudyTensors> out;
  for (const StudyRecord* record : manifest.split(split)) {
    StudyRecord kept = *record;
    std::erase_if(kept.volumes, [&](const auto& v) {
      return std::find(exclude.begin(), exclude.end(), v.first) != exclude.end();
    });
    if (kept.volumes.empty()) continue;
    out.push_back(load_study(manifest, kept, options));
  }
  return out;
}

namespace {

void prepare_run_dir(const std::filesystem::path& dir, bool force) {
  if (std::filesystem::exists(dir) && !std::filesystem::is_empty(dir)) {
    if (!force) throw ConfigError("output directory " + dir.string() + " already exists (use --force to replace it)");
    std::filesystem::remove_all(dir);
  }
  std::filesystem::create_directories(dir);
}

void require_valid(const RunConfig& config, Phase phase) {
  auto errors = config.validate();
  if (config.phase != phase) errors.insert(errors.begin(), std::string("phase: expected ") + phase_name(phase));
  if (!errors.empty()) {
    std::string msg = "invalid config:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
}

void register_universe(VivitModel& model, const Manifest& manifest, const std::vector<std::string>& exclude) {
  for (const auto& name : manifest.modalities) {
    if (std::find(exclude.begin(), exclude.end(), name) == exclude.end()) model.register_modality(name);
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

}  // namespace

TrainSummary run_pretrain(const RunConfig& config, bool force) {
  require_valid(config, Phase::kPretrain);
  const Manifest manifest = read_manifest(config.manifest);
  auto train = load_split(manifest, Split::kTrain, config.model, config.exclude_modalities, false);
  if (train.empty()) throw DataError("manifest has no training studies");

  const std::filesystem::path dir(config.output_dir);
  prepare_run_dir(dir, force);
  const std::string snapshot = run_config_to_json(config);
  write_text(dir / "config.json", snapshot);

  VivitModel model(config.model, config.seed, ModelHeads::kPretrain);
  register_universe(model, manifest, config.exclude_modalities);
  for (auto& s : train) canonicalize(s, model.registry());
  MetricsLog log(dir / "metrics.jsonl");
  return pretrain_loop(model, config, train, RunOutputs{dir, &log, snapshot});
}

TrainSummary run_finetune(const RunConfig& config, bool force) {
  require_valid(config, Phase::kFinetune);
  const Manifest manifest = read_manifest(config.manifest);
  auto train = load_split(manifest, Split::kTrain, config.model, config.exclude_modalities, true);
  auto val = load_split(manifest, Split::kVal, config.model, config.exclude_modalities, true);
  if (train.empty()) throw DataError("manifest has no training studies");

  VivitModel model(config.model, config.seed, ModelHeads::kSegment);
  LoadReport report;
  std::optional<Checkpoint> init;
  if (!config.init_checkpoint.empty()) {
    init = read_checkpoint(config.init_checkpoint);
    try {
      report = load_parameters(model, *init, {"tokenizer.", "encoder.", "modality.", "bank."});
    } catch (const ShapeError& e) {
      throw ConfigError(std::string("init checkpoint does not fit the model config: ") + e.what());
    }
  }
  register_universe(model, manifest, config.exclude_modalities);
  for (auto* set : {&train, &val}) {
    for (auto& s : *set) canonicalize(s, model.registry());
  }

  const std::filesystem::path dir(config.output_dir);
  prepare_run_dir(dir, force);
  const std::string snapshot = run_config_to_json(config);
  write_text(dir / "config.json", snapshot);
  MetricsLog log(dir / "metrics.jsonl");
  TrainSummary summary = finetune_loop(model, config, train, val, RunOutputs{dir, &log, snapshot});
  // Parameters that exist only because of this run, e.g. new modalities.
  if (init) {
    report.fresh.clear();
    for (const auto& [name, t] : model.parameters().tensors()) {
      if (!init->find(name)) report.fresh.push_back(name);
    }
  }
  summary.init_report = std::move(report);
  return summary;
}

}  // namespace vivit
