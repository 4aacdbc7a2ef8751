#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "seedcl/checkpoint.hpp"
#include "seedcl/config.hpp"
#include "seedcl/contrastive.hpp"
#include "seedcl/csv.hpp"
#include "seedcl/error.hpp"
#include "seedcl/manifest.hpp"
#include "seedcl/metrics.hpp"
#include "seedcl/parallel.hpp"
#include "seedcl/probe.hpp"
#include "seedcl/synthgen.hpp"

namespace fs = std::filesystem;

namespace seedcl::cli {

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoFailure("cannot read " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::pair<double, double> parse_split_fractions(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) throw ConfigError("--split expects TRAIN,VAL such as 0.8,0.2");
  try {
    std::size_t used_a = 0, used_b = 0;
    const std::string a = text.substr(0, comma), b = text.substr(comma + 1);
    const double train = std::stod(a, &used_a);
    const double val = std::stod(b, &used_b);
    if (used_a != a.size() || used_b != b.size()) throw ConfigError("");
    return {train, val};
  } catch (const std::exception&) {
    throw ConfigError("--split expects two numbers such as 0.8,0.2, got '" + text + "'");
  }
}

std::vector<fs::path> sorted_entries(const fs::path& dir, bool directories) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (directories ? e.is_directory() : (e.is_regular_file() && e.path().extension() == ".png")) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<ClassCutouts> cutouts_from_directory(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("--cutouts " + dir.string() + " is not a directory");
  std::vector<ClassCutouts> classes;
  for (const auto& class_dir : sorted_entries(dir, true)) {
    ClassCutouts cls{class_dir.filename().string(), {}};
    for (const auto& file : sorted_entries(class_dir, false)) {
      Image img = read_png(file);
      const std::string id = cls.class_label + "/" + file.filename().string();
      if (img.has_alpha())
        cls.cutouts.push_back(Cutout{std::move(img), cls.class_label, id});
      else
        cls.cutouts.push_back(extract_cutout(img, cls.class_label, id));
    }
    if (cls.cutouts.empty()) throw ConfigError("class directory " + class_dir.string() + " holds no PNG files");
    classes.push_back(std::move(cls));
  }
  if (classes.empty()) throw ConfigError("--cutouts " + dir.string() + " has no class subdirectories");
  return classes;
}

struct Model {
  RunConfig config;
  ParamStore<float> encoder;  // heads removed, frozen
  CheckpointMeta meta;
};

RunConfig config_from_meta(const CheckpointMeta& meta) {
  return run_config_from_json(nlohmann::json::parse(meta.config.dump()));
}

Model load_model(const fs::path& dir) {
  Checkpoint ckpt = read_checkpoint(dir);
  Model m{config_from_meta(ckpt.meta), std::move(ckpt.params), std::move(ckpt.meta)};
  if (m.encoder.count_prefix("head.") > 0) {
    m.encoder = strip_framework_heads(std::move(m.encoder), m.config.framework.framework);
    m.encoder.erase_prefix("head.");
  }
  m.encoder.set_trainable_prefix("encoder.", false);
  if (m.encoder.count_prefix("encoder.") == 0) throw ConfigError(dir.string() + " holds no encoder parameters");
  return m;
}

DatasetManifest load_manifest(const std::string& path) {
  if (path.empty()) throw ConfigError("--data MANIFEST is required");
  auto m = read_manifest(path);
  m.validate();
  return m;
}

ProbeSplit draw_split(const DatasetManifest& manifest, const LabelBudget& labels, std::uint64_t seed) {
  Rng rng = Rng::derive(seed, {0x5b1e});
  if (labels.fraction > 0.0) return split_labels(manifest, labels.fraction, labels.per_class_val, rng);
  return split_labels_per_class(manifest, labels.per_class, labels.per_class_val, rng);
}

}  // namespace

void cmd_gen_synthetic(const GenSyntheticOptions& o, RunRecord& record) {
  if (o.out.empty()) throw ConfigError("--out is required");
  record.set_out_dir(o.out);
  if (o.cutouts_dir.empty() == (o.toy_classes == 0))
    throw ConfigError("pass exactly one of --cutouts DIR or --toy-classes N");
  const auto [train_fraction, val_fraction] = parse_split_fractions(o.split);
  DatasetSpec spec;
  spec.per_class = o.per_class;
  spec.seeds_per_image = o.seeds_per_image;
  spec.canvas = o.size;
  spec.train_fraction = train_fraction;
  spec.val_fraction = val_fraction;
  spec.compose.allow_overlap = !o.no_overlap;
  spec.threads = configured_threads();

  std::vector<ClassCutouts> classes;
  if (o.toy_classes > 0) {
    ToyCutoutOptions toy;
    toy.major_axis = o.toy_major_axis > 0 ? o.toy_major_axis
                                          : std::clamp(static_cast<int>(std::lround(0.3125 * o.size)), 3, 20);
    toy.palette = parse_toy_palette(o.toy_palette);
    Rng rng = Rng::derive(o.seed, {0xc7});
    auto cutouts = generate_toy_cutouts(o.toy_classes, o.toy_cutouts_per_class, rng, toy);
    for (int c = 0; c < o.toy_classes; ++c) {
      ClassCutouts cls{toy_class_name(c), {}};
      for (auto& cut : cutouts)
        if (cut.class_label == cls.class_label) cls.cutouts.push_back(cut);
      classes.push_back(std::move(cls));
    }
  } else {
    classes = cutouts_from_directory(o.cutouts_dir);
  }

  nlohmann::ordered_json cfg;
  cfg["source"] = o.toy_classes > 0 ? "toy" : o.cutouts_dir;
  if (o.toy_classes > 0) cfg["toy_palette"] = o.toy_palette;
  cfg["classes"] = classes.size();
  cfg["per_class"] = spec.per_class;
  cfg["seeds_per_image"] = spec.seeds_per_image;
  cfg["size"] = spec.canvas;
  cfg["split"] = {train_fraction, val_fraction};
  cfg["allow_overlap"] = spec.compose.allow_overlap;
  cfg["seed"] = o.seed;
  record.set_config(cfg);

  const auto manifest = generate_dataset(classes, spec, o.out, o.seed);
  record.add_artifact(fs::path(o.out) / "manifest.jsonl");
  record.add_artifact(fs::path(o.out) / "placements.jsonl");
  record.metrics()["images"] = manifest.records.size();
  record.metrics()["train"] = manifest.count(Split::train);
  record.metrics()["val"] = manifest.count(Split::val);
  std::cout << "wrote " << manifest.records.size() << " images (" << manifest.count(Split::train) << " train, "
            << manifest.count(Split::val) << " val) to " << o.out << "\n";
}

void cmd_pretrain(const PretrainOptions& o, RunRecord& record) {
  if (o.out.empty()) throw ConfigError("--out is required");
  record.set_out_dir(o.out);
  std::optional<Framework> flag;
  if (!o.framework.empty()) flag = parse_framework(o.framework);
  RunConfig cfg;
  if (!o.config.empty()) {
    record.set_config_text(read_text(o.config));
    cfg = load_run_config(o.config, flag.value_or(Framework::simclr));
    if (flag && cfg.framework.framework != *flag)
      throw ConfigError("--framework " + o.framework + " contradicts the config file");
  } else {
    if (!flag) throw ConfigError("--framework or --config is required");
    cfg = RunConfig::desk(*flag);
  }
  if (o.epochs) cfg.train.epochs = *o.epochs;
  if (o.batch_size) cfg.train.batch_size = *o.batch_size;
  if (o.learning_rate) cfg.train.learning_rate = *o.learning_rate;
  if (o.seed) cfg.train.seed = *o.seed;
  cfg.paths.data_dir = o.data;
  cfg.paths.out_dir = o.out;
  cfg.train.threads = configured_threads();
  record.set_config(to_json(cfg));
  cfg.validate();

  const auto manifest = load_manifest(o.data);
  const auto records = manifest.select(Split::train);
  if (records.empty()) throw InsufficientData("manifest has no train records");
  const auto images = load_images(fs::path(o.data).parent_path(), records, cfg.encoder.input_size, cfg.train.threads);

  const auto result = pretrain(cfg.framework, cfg.train, images, cfg.augmentation, cfg.encoder, [&](int e, double m) {
    std::cout << "epoch " << e << "/" << cfg.train.epochs << " mean loss " << format_real(m) << "\n" << std::flush;
  });

  const fs::path out(o.out);
  fs::create_directories(out);
  CheckpointMeta meta;
  meta.framework = std::string(to_string(cfg.framework.framework));
  meta.config = to_json(cfg);
  meta.epoch = cfg.train.epochs;
  meta.extra["steps_per_epoch"] = result.steps_per_epoch;
  meta.extra["batch_size"] = result.batch_size;
  if (cfg.framework.framework == Framework::moco) meta.extra["queue_size"] = result.queue_size;
  write_checkpoint(out / "checkpoint", result.params, meta);
  record.set_checkpoint(out / "checkpoint");

  TextFile steps(out / "loss.csv");
  steps << "epoch,step,loss\n";
  for (const auto& s : result.steps)
    steps << std::to_string(s.epoch) + "," + std::to_string(s.step) + "," + format_real(s.loss) + "\n";
  steps.close();
  TextFile epochs(out / "loss_epochs.csv");
  epochs << "epoch,mean_loss\n";
  for (std::size_t e = 0; e < result.epoch_means.size(); ++e)
    epochs << std::to_string(e + 1) + "," + format_real(result.epoch_means[e]) + "\n";
  epochs.close();
  TextFile snapshot(out / "config.json");
  snapshot << to_json(cfg).dump(2) + "\n";
  snapshot.close();
  for (const char* f : {"loss.csv", "loss_epochs.csv", "config.json"}) record.add_artifact(out / f);
  record.metrics()["final_epoch_loss"] = result.epoch_means.back();
  record.metrics()["steps_per_epoch"] = result.steps_per_epoch;
  std::cout << "checkpoint written to " << (out / "checkpoint").string() << "\n";
}

void cmd_probe(const ProbeOptions& o, RunRecord& record) {
  if (o.out.empty()) throw ConfigError("--out is required");
  record.set_out_dir(o.out);
  if (o.ckpt.empty()) throw ConfigError("--ckpt is required");
  Model model = load_model(o.ckpt);
  RunConfig& cfg = model.config;
  if (!o.config.empty()) {
    record.set_config_text(read_text(o.config));
    const RunConfig file = load_run_config(o.config, cfg.framework.framework);
    cfg.probe = file.probe;
    cfg.labels = file.labels;
  }
  if (o.per_class) cfg.labels.per_class = *o.per_class;
  if (o.per_class_val) cfg.labels.per_class_val = *o.per_class_val;
  if (o.label_fraction) cfg.labels.fraction = *o.label_fraction;
  if (o.epochs) cfg.probe.epochs = *o.epochs;
  if (o.seed) cfg.probe.seed = *o.seed;
  if (!o.learning_rate.empty()) {
    if (o.learning_rate == "auto") {
      cfg.probe.learning_rate.reset();
    } else {
      try {
        cfg.probe.learning_rate = std::stod(o.learning_rate);
      } catch (const std::exception&) {
        throw ConfigError("--lr expects a number or auto");
      }
    }
  }
  cfg.probe.end_to_end = o.end_to_end;
  record.set_config(to_json(cfg));
  cfg.validate();

  if (o.random_init) {
    Rng rng = Rng::derive(cfg.probe.seed, {0xe0c});
    model.encoder = ParamStore<float>{};
    Encoder<float>(cfg.encoder).init(model.encoder, rng);
    model.encoder.set_trainable_prefix("encoder.", false);
  }

  const auto manifest = load_manifest(o.data);
  const auto split = draw_split(manifest, cfg.labels, cfg.probe.seed);
  const fs::path data_dir = fs::path(o.data).parent_path();
  const int threads = configured_threads();
  const auto train_images = load_images(data_dir, split.train_records, cfg.encoder.input_size, threads);
  const auto val_images = load_images(data_dir, split.val_records, cfg.encoder.input_size, threads);
  const auto train_labels = record_labels(manifest, split.train_records);
  const auto val_labels = record_labels(manifest, split.val_records);
  const int classes = static_cast<int>(manifest.class_names.size());

  const auto result = train_probe(model.encoder, cfg.encoder, train_images, train_labels, val_images, val_labels,
                                  classes, cfg.probe);

  const fs::path out(o.out);
  fs::create_directories(out);
  CheckpointMeta enc_meta = model.meta;
  enc_meta.config = to_json(cfg);
  enc_meta.extra["stripped"] = true;
  write_checkpoint(out / "encoder", result.encoder, enc_meta);
  CheckpointMeta probe_meta;
  probe_meta.framework = "linear_probe";
  probe_meta.config = to_json(cfg);
  probe_meta.epoch = cfg.probe.epochs;
  probe_meta.extra["classes"] = manifest.class_names;
  probe_meta.extra["learning_rate"] = result.learning_rate;
  probe_meta.extra["train_records"] = split.train_records.size();
  probe_meta.extra["val_records"] = split.val_records.size();
  write_checkpoint(out / "probe", result.classifier, probe_meta);
  write_probe_curve_csv(out / "probe_curve.csv", result.curve);
  record.set_checkpoint(out / "probe");
  record.add_artifact(out / "encoder");
  record.add_artifact(out / "probe_curve.csv");
  if (result.lr_sweep) {
    write_lr_sweep_csv(out / "lr_sweep.csv", result.lr_sweep->sweep);
    record.add_artifact(out / "lr_sweep.csv");
  }
  const auto& last = result.curve.back();
  record.metrics()["learning_rate"] = result.learning_rate;
  record.metrics()["train_accuracy"] = last.train_accuracy;
  record.metrics()["val_accuracy"] = last.val_accuracy;
  std::cout << "probe lr " << format_real(result.learning_rate) << ", epoch " << last.epoch << " train acc "
            << format_real(last.train_accuracy) << ", val acc " << format_real(last.val_accuracy) << "\n";
}

void cmd_eval(const EvalOptions& o, RunRecord& record) {
  if (!o.report_out.empty()) record.set_out_dir(fs::path(o.report_out).parent_path().empty() ? fs::path(".")
                                                                                         : fs::path(o.report_out).parent_path());
  ConfusionMatrix cm({});
  if (!o.predictions.empty()) {
    std::ifstream in(o.predictions);
    if (!in) throw IoFailure("cannot read " + o.predictions);
    std::vector<std::string> truth, predicted;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      if (header) {
        header = false;
        if (line == "truth,prediction") continue;
      }
      const auto comma = line.find(',');
      if (comma == std::string::npos) throw ConfigError("prediction rows must be truth,prediction");
      truth.push_back(line.substr(0, comma));
      predicted.push_back(line.substr(comma + 1));
    }
    std::vector<std::string> names;
    if (!o.data.empty()) {
      names = load_manifest(o.data).class_names;
    } else {
      std::set<std::string> seen(truth.begin(), truth.end());
      seen.insert(predicted.begin(), predicted.end());
      names.assign(seen.begin(), seen.end());
    }
    cm = ConfusionMatrix::from_labels(truth, predicted, names);
  } else {
    if (o.ckpt.empty() || o.probe.empty()) throw ConfigError("eval needs --predictions or both --ckpt and --probe");
    const Model model = load_model(o.ckpt);
    const Checkpoint probe = read_checkpoint(o.probe);
    const auto manifest = load_manifest(o.data);
    const auto records = manifest.select(parse_split(o.split));
    if (records.empty()) throw InsufficientData("manifest has no " + o.split + " records");
    const auto images = load_images(fs::path(o.data).parent_path(), records, model.config.encoder.input_size,
                                    configured_threads());
    const auto pred = predict(model.encoder, model.config.encoder, probe.params, images);
    const auto truth = record_labels(manifest, records);
    if (pred.logits.cols() != static_cast<Eigen::Index>(manifest.class_names.size()))
      throw ShapeMismatch("probe predicts " + std::to_string(pred.logits.cols()) + " classes, manifest has " +
                          std::to_string(manifest.class_names.size()));
    cm = ConfusionMatrix::from_indices(truth, pred.labels, manifest.class_names);
    record.set_config(model.meta.config);
  }
  const auto report = classification_report(cm);
  const std::string text = render_report(report);
  std::cout << text;
  if (!o.report_out.empty()) {
    TextFile out(o.report_out);
    out << text;
    out.close();
    record.add_artifact(o.report_out);
  }
  const std::string json_path = !o.json_out.empty() ? o.json_out : (o.report_out.empty() ? "" : o.report_out + ".json");
  if (!json_path.empty()) {
    TextFile out(json_path);
    out << report_to_json(report).dump(2) + "\n";
    out.close();
    record.add_artifact(json_path);
  }
  record.metrics()["accuracy"] = report.accuracy;
  record.metrics()["macro_f1"] = report.macro.f1;
}

void cmd_lr_find(const LrFindCliOptions& o, RunRecord& record) {
  if (o.out.empty()) throw ConfigError("--out is required");
  record.set_out_dir(o.out);
  if (o.ckpt.empty()) throw ConfigError("--ckpt is required");
  const Model model = load_model(o.ckpt);
  LabelBudget labels = model.config.labels;
  if (o.per_class) labels.per_class = *o.per_class;
  if (o.per_class_val) labels.per_class_val = *o.per_class_val;
  labels.fraction = 0.0;
  LrFindOptions opts = model.config.probe.lr_find;
  opts.min_lr = o.min_lr;
  opts.max_lr = o.max_lr;
  opts.steps = o.steps;
  nlohmann::ordered_json cfg = {{"ckpt", o.ckpt}, {"data", o.data}, {"min_lr", o.min_lr}, {"max_lr", o.max_lr},
                                {"steps", o.steps}, {"seed", o.seed}, {"per_class", labels.per_class}};
  record.set_config(cfg);

  const auto manifest = load_manifest(o.data);
  const auto split = draw_split(manifest, labels, o.seed);
  const auto images = load_images(fs::path(o.data).parent_path(), split.train_records,
                                  model.config.encoder.input_size, configured_threads());
  LabeledFeatures data{encode(model.encoder, model.config.encoder, images), record_labels(manifest, split.train_records)};
  const auto result = probe_lr_find(data, static_cast<int>(manifest.class_names.size()), opts, o.seed,
                                    model.config.probe.batch_size);
  const fs::path out(o.out);
  fs::create_directories(out);
  write_lr_sweep_csv(out / "lr_sweep.csv", result.sweep);
  record.add_artifact(out / "lr_sweep.csv");
  record.metrics()["suggested_lr"] = result.suggested_lr;
  std::cout << "suggested learning rate " << format_real(result.suggested_lr) << "\n";
}

void cmd_hist_compare(const HistCompareOptions& o, RunRecord&) {
  const auto a = color_histogram(read_png(o.image_a));
  const auto b = color_histogram(read_png(o.image_b));
  std::printf("%.6f\n", histogram_rms_difference(a, b));
}

}  // namespace seedcl::cli
