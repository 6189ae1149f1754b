#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include <json.hpp>

#include "vivit/checkpoint.hpp"
#include "vivit/errors.hpp"
#include "vivit/losses.hpp"
#include "vivit/manifest.hpp"
#include "vivit/ops.hpp"
#include "vivit/run_config.hpp"
#include "vivit/synthetic.hpp"
#include "vivit/training.hpp"

namespace vivit::cli {

namespace {

using json = nlohmann::ordered_json;

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// The subcommand decides the phase unless the file names one explicitly,
// in which case the two must agree.
RunConfig load_config(const TrainArgs& args, Phase phase) {
  const std::string text = read_text(args.config);
  std::vector<std::string> overrides;
  const auto doc = nlohmann::json::parse(text, nullptr, false);
  if (!doc.is_discarded() && doc.is_object() && !doc.contains("phase")) {
    overrides.push_back(std::string("phase=") + phase_name(phase));
  }
  overrides.insert(overrides.end(), args.overrides.begin(), args.overrides.end());
  RunConfig config = parse_run_config(text, overrides);
  if (config.phase != phase) {
    throw ConfigError(std::string("config is for phase '") + phase_name(config.phase) + "', run it with `vivit " +
                      phase_name(config.phase) + "`");
  }
  return config;
}

// Tensor names grouped by their first two components, e.g. "bank.T2: 40".
void print_groups(const char* title, const std::vector<std::string>& names) {
  std::map<std::string, int> groups;
  for (const auto& n : names) {
    const auto first = n.find('.');
    const auto second = first == std::string::npos ? first : n.find('.', first + 1);
    ++groups[n.substr(0, second)];
  }
  std::printf("%s: %zu\n", title, names.size());
  for (const auto& [group, count] : groups) std::printf("  %-32s %d\n", group.c_str(), count);
}

void print_summary(const RunConfig& config, const TrainSummary& summary) {
  const double last = summary.steps.empty() ? 0.0 : summary.steps.back().loss;
  std::printf("run directory: %s\n", config.output_dir.c_str());
  std::printf("steps: %zu  final loss: %.6f\n", summary.steps.size(), last);
  if (!summary.evals.empty()) {
    std::printf("best validation dice: %.4f at step %lld\n", summary.best_metric,
                static_cast<long long>(summary.best_step));
  }
}

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? sep : "") + parts[i];
  return out;
}

}  // namespace

int guarded(const std::string& command, const std::function<int()>& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    std::cerr << "vivit " << command << ": configuration error: " << e.what() << "\n";
    return kConfigError;
  } catch (const DataError& e) {
    std::cerr << "vivit " << command << ": data error: " << e.what() << "\n";
    return kDataError;
  } catch (const ShapeError& e) {
    std::cerr << "vivit " << command << ": shape error: " << e.what() << "\n";
    return kDataError;
  } catch (const NumericError& e) {
    std::cerr << "vivit " << command << ": numeric failure: " << e.what() << "\n";
    return kNumericError;
  } catch (const std::exception& e) {
    std::cerr << "vivit " << command << ": " << e.what() << "\n";
    return kFailure;
  }
}

int cmd_generate(const GenerateArgs& args) {
  const SyntheticSpec spec = args.spec == "default" ? default_synthetic_spec() : read_synthetic_spec(args.spec);
  std::uint64_t seed = 0;
  if (args.seed) {
    seed = *args.seed;
  } else {
    std::random_device rd;
    seed = (static_cast<std::uint64_t>(rd()) << 32) | rd();
    std::printf("seed: %llu\n", static_cast<unsigned long long>(seed));
  }
  const auto manifest = generate_synthetic_corpus(spec, seed, args.out_dir);
  std::printf("%s\n", manifest.string().c_str());
  return kOk;
}

int cmd_pretrain(const TrainArgs& args) {
  const RunConfig config = load_config(args, Phase::kPretrain);
  const TrainSummary summary = run_pretrain(config, args.force);
  print_summary(config, summary);
  return kOk;
}

int cmd_finetune(const TrainArgs& args) {
  const RunConfig config = load_config(args, Phase::kFinetune);
  const TrainSummary summary = run_finetune(config, args.force);
  if (!config.init_checkpoint.empty()) {
    std::printf("initialized from %s: %zu tensors loaded\n", config.init_checkpoint.c_str(),
                summary.init_report.loaded.size());
    print_groups("unmatched tensors", summary.init_report.unmatched);
    print_groups("freshly initialized tensors", summary.init_report.fresh);
  }
  print_summary(config, summary);
  return kOk;
}

int cmd_eval(const EvalArgs& args) {
  const Checkpoint ckpt = read_checkpoint(args.checkpoint);
  if (!ckpt.find("decoder.head.weight")) {
    throw ConfigError("checkpoint '" + args.checkpoint + "' has no segmentation decoder");
  }
  const auto model = model_from_checkpoint(ckpt, ModelHeads::kSegment);
  const ModelConfig& mc = model->config();
  const Manifest manifest = read_manifest(args.manifest);
  const auto records = manifest.split(parse_split(args.split));
  if (records.empty()) throw DataError("no studies in split '" + args.split + "'");

  LoadOptions options;
  options.volume = mc.volume;
  options.num_classes = mc.num_classes;

  json report;
  report["checkpoint"] = args.checkpoint;
  report["manifest"] = args.manifest;
  report["split"] = args.split;
  report["dropped_modalities"] = args.drop_modalities;
  report["studies"] = json::array();

  std::printf("%-16s %-24s %s\n", "study", "modalities", "dice");
  double total = 0.0;
  NoGradGuard no_grad;
  for (const StudyRecord* record : records) {
    if (!record->label) throw DataError("study '" + record->id + "' has no label");
    StudyTensors study = load_study(manifest, *record, options);
    std::erase_if(study.volumes, [&](const ModalityVolume& v) {
      return std::find(args.drop_modalities.begin(), args.drop_modalities.end(), v.modality) !=
             args.drop_modalities.end();
    });
    if (study.volumes.empty()) throw DataError("study '" + record->id + "' has no modalities left");
    for (const auto& v : study.volumes) {
      if (!model->registry().find(v.modality)) {
        throw ConfigError("study '" + record->id + "' uses modality '" + v.modality +
                          "', which the checkpoint was not trained with");
      }
    }
    canonicalize(study, model->registry());
    model->ensure_bank_entries(study.modality_names());

    Tensor logits;
    if (args.labels_as_logits) {
      logits = ops::scale(ops::add_scalar(ops::scale(*study.label, 2.0), -1.0), 20.0);
    } else {
      logits = model->segment(study);
    }
    const DiceScores scores = dice_from_logits(logits, *study.label);
    total += scores.mean;

    const auto names = study.modality_names();
    report["studies"].push_back(
        {{"id", study.id}, {"modalities", names}, {"dice", scores.per_channel}, {"mean", scores.mean}});
    std::string per_channel;
    for (double d : scores.per_channel) {
      char buf[16];
      std::snprintf(buf, sizeof buf, " %.4f", d);
      per_channel += buf;
    }
    std::printf("%-16s %-24s%s\n", study.id.c_str(), join(names, ",").c_str(), per_channel.c_str());
  }
  const double mean = total / static_cast<double>(records.size());
  report["mean_dice"] = mean;
  std::printf("mean dice over %zu studies: %.4f\n", records.size(), mean);

  if (!args.report.empty()) {
    std::ofstream out(args.report);
    if (!out) throw DataError("cannot write report '" + args.report + "'");
    out << report.dump(2) << "\n";
  }
  return kOk;
}

int cmd_inspect(const InspectArgs& args) {
  const Checkpoint ckpt = read_checkpoint(args.checkpoint);
  const CheckpointInfo info = checkpoint_info(ckpt);
  std::printf("checkpoint: %s\n", args.checkpoint.c_str());
  if (!info.state.phase.empty()) {
    std::printf("phase: %s  step: %lld  epoch: %lld\n", info.state.phase.c_str(),
                static_cast<long long>(info.state.step), static_cast<long long>(info.state.epoch));
  }
  std::printf("seed: %llu\n", static_cast<unsigned long long>(info.seed));
  std::printf("modalities: %s\n", join(info.modalities, ", ").c_str());
  std::printf("optimizer state: %s\n", info.has_optimizer ? "yes" : "no");
  std::printf("\n%-48s %-8s %-20s %s\n", "tensor", "dtype", "shape", "elements");
  std::int64_t params = 0;
  for (const auto& t : ckpt.tensors) {
    std::printf("%-48s %-8s %-20s %lld\n", t.name.c_str(), dtype_name(t.value.dtype()),
                shape_str(t.value.shape()).c_str(), static_cast<long long>(t.value.numel()));
    if (!t.name.starts_with("optimizer/")) params += t.value.numel();
  }
  std::printf("\n%zu tensors, %lld parameter values\n", ckpt.tensors.size(), static_cast<long long>(params));
  return kOk;
}

}  // namespace vivit::cli
