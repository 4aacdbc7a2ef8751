#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "run_record.hpp"

namespace seedcl::cli {

struct GenSyntheticOptions {
  std::string cutouts_dir;
  int toy_classes = 0;
  int toy_cutouts_per_class = 30;
  int toy_major_axis = 0;  // 0: derived from the canvas size
  std::string toy_palette = "separated";
  int per_class = 1000;
  int seeds_per_image = 50;
  int size = 224;
  std::string split = "0.8,0.2";
  bool no_overlap = false;
  std::uint64_t seed = 0;
  std::string out;
};

struct PretrainOptions {
  std::string framework;
  std::string config;
  std::string data;
  std::string out;
  std::optional<int> epochs;
  std::optional<int> batch_size;
  std::optional<double> learning_rate;
  std::optional<std::uint64_t> seed;
};

struct ProbeOptions {
  std::string ckpt;
  std::string data;
  std::string out;
  std::string config;
  std::optional<int> per_class;
  std::optional<int> per_class_val;
  std::optional<double> label_fraction;
  std::optional<int> epochs;
  std::string learning_rate;  // number or "auto"; empty keeps the config value
  std::optional<std::uint64_t> seed;
  bool end_to_end = false;
  bool random_init = false;
};

struct EvalOptions {
  std::string ckpt;
  std::string probe;
  std::string data;
  std::string split = "test";
  std::string predictions;
  std::string report_out;
  std::string json_out;
};

struct LrFindCliOptions {
  std::string ckpt;
  std::string data;
  std::string out;
  std::optional<int> per_class;
  std::optional<int> per_class_val;
  double min_lr = 1e-5;
  double max_lr = 1.0;
  int steps = 100;
  std::uint64_t seed = 0;
};

struct HistCompareOptions {
  std::string image_a;
  std::string image_b;
};

void cmd_gen_synthetic(const GenSyntheticOptions& o, RunRecord& record);
void cmd_pretrain(const PretrainOptions& o, RunRecord& record);
void cmd_probe(const ProbeOptions& o, RunRecord& record);
void cmd_eval(const EvalOptions& o, RunRecord& record);
void cmd_lr_find(const LrFindCliOptions& o, RunRecord& record);
void cmd_hist_compare(const HistCompareOptions& o, RunRecord& record);

}  // namespace seedcl::cli
