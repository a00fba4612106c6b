#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace rsq::cli {

struct SummarizeArgs {
  std::string arch = "paper";  // preset name or config JSON path
  std::optional<int64_t> classes;
  std::optional<int64_t> input_size;
  bool plain = false;
  std::string format = "text";
  std::string out;  // empty = stdout
};

struct CompareSide {
  std::string summary_path;
  std::optional<double> size_gb;
  std::optional<double> size_bytes;
  std::optional<double> hours;
};

struct CompareArgs {
  CompareSide left;
  CompareSide right;
  std::string out;
};

struct TrainArgs {
  std::string dataset;
  std::string val_dataset;
  std::string arch = "auto";
  std::string out_dir;
  int epochs = 0;  // 0 = derive from steps or default
  int64_t steps = 0;
  int batch = 0;
  double lr = 0.01;
  double lr_gamma = 0.5;
  int lr_step = 10;
  double momentum = 0.9;
  double weight_decay = 0.0;
  double alpha0 = 0.3;
  std::string alpha_mode = "linear";
  std::string init = "xavier";
  std::string precision = "standard";
  uint64_t seed = 0;
  bool seed_set = false;
};

struct GradcheckArgs {
  std::string scale = "tiny";
  uint64_t seed = 0;
  bool seed_set = false;
  double tolerance = 1e-3;      // whole-network
  double tol_primitive = 1e-4;  // per primitive
  double eps = 1e-5;
  std::string inject_fault;  // test hook: "conv-backward-sign"
};

struct ProbeArgs {
  int depth = 12;
  int64_t width = 32;
  int64_t classes = 5;
  int epochs = 10;
  double threshold = 1e-7;
  int batch = 8;
  uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
  std::string csv;
};

struct GenDataArgs {
  int classes = 0;
  int per_class = 0;
  std::string size;  // "CxHxW"
  double noise = 0.05;
  uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
};

uint64_t resolve_seed(uint64_t flag_value, bool flag_set);

int cmd_summarize(const SummarizeArgs& args);
int cmd_compare(const CompareArgs& args);
int cmd_train(const TrainArgs& args);
int cmd_gradcheck(const GradcheckArgs& args);
int cmd_probe(const ProbeArgs& args);
int cmd_gen_data(const GenDataArgs& args);

}  // namespace rsq::cli
