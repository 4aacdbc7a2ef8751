#include <CLI11.hpp>
#include <exception>
#include <functional>
#include <iostream>
#include <memory>

#include "commands.hpp"
#include "seedcl/error.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kRuntimeFailure = 1;
constexpr int kUsageError = 2;

}  // namespace

int main(int argc, char** argv) {
  using namespace seedcl::cli;
  CLI::App app{"Synthetic seed datasets, contrastive pretraining, linear probes and evaluation"};
  app.require_subcommand(1);

  std::string command;
  std::function<void(RunRecord&)> run;

  GenSyntheticOptions gen;
  auto* g = app.add_subcommand("gen-synthetic", "compose a synthetic dataset and its manifest");
  auto* cut = g->add_option("--cutouts", gen.cutouts_dir, "directory with one subdirectory of PNG photos per class");
  auto* toy = g->add_option("--toy-classes", gen.toy_classes, "number of procedural toy classes (2-6)");
  cut->excludes(toy);
  g->add_option("--toy-cutouts-per-class", gen.toy_cutouts_per_class, "procedural cutouts per toy class")
      ->capture_default_str();
  g->add_option("--toy-major-axis", gen.toy_major_axis, "toy seed length in pixels (default scales with --size)");
  g->add_option("--toy-palette", gen.toy_palette, "separated: one hue per class; shared: classes differ only in shape")
      ->capture_default_str()
      ->check(CLI::IsMember({"separated", "shared"}));
  g->add_option("--per-class", gen.per_class, "images per class")->capture_default_str();
  g->add_option("--seeds-per-image", gen.seeds_per_image, "seed instances per image")->capture_default_str();
  g->add_option("--size", gen.size, "canvas edge in pixels")->capture_default_str();
  g->add_option("--split", gen.split, "train,val fractions")->capture_default_str();
  g->add_flag("--no-overlap", gen.no_overlap, "reject overlapping placements");
  g->add_option("--seed", gen.seed, "master seed")->capture_default_str();
  g->add_option("--out", gen.out, "output directory")->required();
  g->callback([&] {
    command = "gen-synthetic";
    run = [&](RunRecord& r) { cmd_gen_synthetic(gen, r); };
  });

  PretrainOptions pre;
  auto* p = app.add_subcommand("pretrain", "self-supervised pretraining");
  p->add_option("--framework", pre.framework, "simclr | moco | byol")
      ->check(CLI::IsMember({"simclr", "moco", "byol"}));
  p->add_option("--config", pre.config, "run config JSON")->check(CLI::ExistingFile);
  p->add_option("--data", pre.data, "dataset manifest")->required()->check(CLI::ExistingFile);
  p->add_option("--out", pre.out, "output directory")->required();
  p->add_option("--epochs", pre.epochs, "override train.epochs");
  p->add_option("--batch-size", pre.batch_size, "override train.batch_size");
  p->add_option("--lr", pre.learning_rate, "override train.learning_rate");
  p->add_option("--seed", pre.seed, "override train.seed");
  p->callback([&] {
    command = "pretrain";
    run = [&](RunRecord& r) { cmd_pretrain(pre, r); };
  });

  ProbeOptions probe;
  auto* pr = app.add_subcommand("probe", "train a linear classifier on the frozen encoder");
  pr->add_option("--ckpt", probe.ckpt, "pretrain checkpoint directory")->required()->check(CLI::ExistingDirectory);
  pr->add_option("--data", probe.data, "dataset manifest")->required()->check(CLI::ExistingFile);
  pr->add_option("--out", probe.out, "output directory")->required();
  pr->add_option("--config", probe.config, "run config JSON supplying the probe section")->check(CLI::ExistingFile);
  pr->add_option("--per-class", probe.per_class, "labeled records per class");
  pr->add_option("--per-class-val", probe.per_class_val, "of which used for probe validation");
  pr->add_option("--label-fraction", probe.label_fraction, "fraction of each class's train records instead");
  pr->add_option("--epochs", probe.epochs, "probe epochs");
  pr->add_option("--lr", probe.learning_rate, "learning rate or auto");
  pr->add_option("--seed", probe.seed, "probe seed");
  pr->add_flag("--end-to-end", probe.end_to_end, "train the encoder together with the classifier");
  pr->add_flag("--random-init", probe.random_init, "probe a randomly initialized encoder instead");
  pr->callback([&] {
    command = "probe";
    run = [&](RunRecord& r) { cmd_probe(probe, r); };
  });

  EvalOptions ev;
  auto* e = app.add_subcommand("eval", "classification report");
  e->add_option("--ckpt", ev.ckpt, "encoder or pretrain checkpoint");
  e->add_option("--probe", ev.probe, "probe checkpoint directory");
  e->add_option("--data", ev.data, "dataset manifest");
  e->add_option("--split", ev.split, "train | val | test")->capture_default_str()->check(
      CLI::IsMember({"train", "val", "test"}));
  e->add_option("--predictions", ev.predictions, "CSV of truth,prediction class names")->check(CLI::ExistingFile);
  e->add_option("--report-out", ev.report_out, "text report path (JSON goes to <path>.json)");
  e->add_option("--json-out", ev.json_out, "JSON report path");
  e->callback([&] {
    command = "eval";
    run = [&](RunRecord& r) { cmd_eval(ev, r); };
  });

  LrFindCliOptions lr;
  auto* l = app.add_subcommand("lr-find", "learning-rate range test for the probe");
  l->add_option("--ckpt", lr.ckpt, "checkpoint directory")->required()->check(CLI::ExistingDirectory);
  l->add_option("--data", lr.data, "dataset manifest")->required()->check(CLI::ExistingFile);
  l->add_option("--out", lr.out, "output directory")->required();
  l->add_option("--per-class", lr.per_class, "labeled records per class");
  l->add_option("--per-class-val", lr.per_class_val, "held out per class");
  l->add_option("--min-lr", lr.min_lr)->capture_default_str();
  l->add_option("--max-lr", lr.max_lr)->capture_default_str();
  l->add_option("--steps", lr.steps)->capture_default_str();
  l->add_option("--seed", lr.seed)->capture_default_str();
  l->callback([&] {
    command = "lr-find";
    run = [&](RunRecord& r) { cmd_lr_find(lr, r); };
  });

  HistCompareOptions hist;
  auto* h = app.add_subcommand("hist-compare", "RMS difference of two normalized color histograms");
  h->add_option("image_a", hist.image_a)->required()->check(CLI::ExistingFile);
  h->add_option("image_b", hist.image_b)->required()->check(CLI::ExistingFile);
  h->callback([&] {
    command = "hist-compare";
    run = [&](RunRecord& r) { cmd_hist_compare(hist, r); };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& s) {
    return app.exit(s);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return kUsageError;
  }

  RunRecord record(command);
  try {
    run(record);
  } catch (const seedcl::ConfigError& err) {
    std::cerr << "error: " << err.what() << "\n";
    record.finish(kUsageError, err.what());
    return kUsageError;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    record.finish(kRuntimeFailure, err.what());
    return kRuntimeFailure;
  }
  record.finish(kOk);
  return kOk;
}
