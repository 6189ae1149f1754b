#include <CLI11.hpp>

#include "commands.hpp"

using namespace vivit::cli;

int main(int argc, char** argv) {
  CLI::App app{"Variable-input vision transformer for multi-contrast 3D MR segmentation"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Write a seeded synthetic corpus");
  generate->add_option("spec", gen.spec, "Synthetic spec JSON, or 'default'")->required();
  generate->add_option("out", gen.out_dir, "Output directory")->required();
  generate->add_option("--seed", gen.seed, "Generator seed (drawn and printed when omitted)");

  TrainArgs pre;
  auto* pretrain = app.add_subcommand("pretrain", "Masked-autoencoder pretraining");
  pretrain->add_option("config", pre.config, "Run config JSON")->required()->check(CLI::ExistingFile);
  pretrain->add_option("--set", pre.overrides, "Override a config field, e.g. --set model.depth=4");
  pretrain->add_flag("--force", pre.force, "Replace an existing run directory");

  TrainArgs fine;
  auto* finetune = app.add_subcommand("finetune", "Segmentation finetuning");
  finetune->add_option("config", fine.config, "Run config JSON")->required()->check(CLI::ExistingFile);
  finetune->add_option("--set", fine.overrides, "Override a config field, e.g. --set lr=1e-3");
  finetune->add_flag("--force", fine.force, "Replace an existing run directory");

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Dice report of a checkpoint on a manifest split");
  eval->add_option("checkpoint", ev.checkpoint, "Segmentation checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("manifest", ev.manifest, "Manifest JSON")->required()->check(CLI::ExistingFile);
  eval->add_option("--split", ev.split, "train, val or test")->capture_default_str();
  eval->add_option("--drop-modality", ev.drop_modalities, "Remove a modality from every study");
  eval->add_option("--report", ev.report, "Write the JSON report here");
  eval->add_flag("--labels-as-logits", ev.labels_as_logits, "Debug: score the labels against themselves");

  InspectArgs ins;
  auto* inspect = app.add_subcommand("inspect", "Print the tensor table of a checkpoint");
  inspect->add_option("checkpoint", ins.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  if (*generate) return guarded("generate", [&] { return cmd_generate(gen); });
  if (*pretrain) return guarded("pretrain", [&] { return cmd_pretrain(pre); });
  if (*finetune) return guarded("finetune", [&] { return cmd_finetune(fine); });
  if (*eval) return guarded("eval", [&] { return cmd_eval(ev); });
  return guarded("inspect", [&] { return cmd_inspect(ins); });
}
