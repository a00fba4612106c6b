#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include <json.hpp>

#include "rsq/archs.hpp"
#include "rsq/gradcheck.hpp"
#include "rsq/io_util.hpp"
#include "rsq/supervision.hpp"
#include "rsq/trainer.hpp"
#include "rsq/version.hpp"

namespace rsq::cli {

namespace fs = std::filesystem;
using nlohmann::json;

uint64_t resolve_seed(uint64_t flag_value, bool flag_set) {
  if (flag_set) return flag_value;
  if (const char* env = std::getenv("RSQ_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw DomainError("RSQ_SEED is not an unsigned integer: " + std::string(env));
    }
  }
  return 42;
}

namespace {

ArchConfig resolve_arch(const std::string& name, std::optional<int64_t> classes,
                        std::optional<int64_t> input_size) {
  ArchConfig cfg;
  if (name == "paper" || name == "default") {
    cfg = ArchConfig::paper_default();
  } else if (name == "desk") {
    cfg = ArchConfig::desk_small(classes.value_or(5));
  } else if (name == "miniature") {
    cfg = ArchConfig::miniature(classes.value_or(2));
  } else {
    cfg = ArchConfig::from_json_file(name);
  }
  if (classes) cfg.class_count = *classes;
  if (input_size) cfg.input_h = cfg.input_w = *input_size;
  cfg.validate();
  return cfg;
}

json built_network_json(const BuiltNetwork& net) {
  const ShapeReport rep = shape_report(net.graph);
  json weight_sets_main = json::array();
  for (const auto& ws : net.main_sets)
    weight_sets_main.push_back({{"name", ws.name}, {"nodes", ws.nodes}});
  json weight_sets_branch = json::array();
  for (const auto& ws : net.branch_sets)
    weight_sets_branch.push_back({{"name", ws.name}, {"nodes", ws.nodes}});

  json stages = json::array();
  for (const auto& st : net.stages) {
    const Shape& dest = net.graph.shape_of(st.dest);
    const Shape& proj = net.graph.shape_of(st.projection);
    stages.push_back({{"name", st.name},
                      {"source", st.source},
                      {"dest", st.dest},
                      {"projection", st.projection},
                      {"add", st.add},
                      {"dest_shape", {dest.c, dest.h, dest.w}},
                      {"projection_shape", {proj.c, proj.h, proj.w}}});
  }

  json fire_rows = json::array();
  for (size_t i = 0; i < net.config.fires.size(); ++i) {
    const FireConfig& f = net.config.fires[i];
    fire_rows.push_back(
        {{"name", "fire" + std::to_string(i + 1)}, {"s1", f.s1}, {"e1", f.e1}, {"e3", f.e3}});
  }

  json fire_cmp = json::array();
  for (const auto& row : fire_weight_comparison(net.config)) {
    fire_cmp.push_back({{"name", row.name},
                        {"in_channels", row.in_channels},
                        {"fire_weights", row.fire_weights},
                        {"plain_conv_weights", row.plain_conv_weights},
                        {"reduction_factor", row.reduction_factor}});
  }

  return json{{"tool_version", kVersion},
              {"variant", net.plain ? "plain" : "compressed"},
              {"arch", net.config.to_json()},
              {"report", shape_report_json(rep)},
              {"fire_rows", std::move(fire_rows)},
              {"weight_sets",
               {{"main", std::move(weight_sets_main)}, {"branch", std::move(weight_sets_branch)}}},
              {"residual_stages", std::move(stages)},
              {"aux", {{"tap", net.aux_tap}, {"loss", net.aux_loss}, {"logits", net.aux_logits}}},
              {"loss_nodes", json::array({net.main_loss, net.aux_loss})},
              {"fire_weight_comparison", std::move(fire_cmp)},
              {"graph", net.graph.to_json()}};
}

void emit(const std::string& out, const std::string& content) {
  if (out.empty()) {
    std::fputs(content.c_str(), stdout);
  } else {
    write_file_atomic(out, content);
  }
}

json manifest_json(const std::string& command, uint64_t seed, json config, json artifacts) {
  return json{{"command", command},
              {"tool_version", kVersion},
              {"seed", seed},
              {"config", std::move(config)},
              {"artifacts", std::move(artifacts)}};
}

}  // namespace

int cmd_summarize(const SummarizeArgs& args) {
  const ArchConfig cfg = resolve_arch(args.arch, args.classes, args.input_size);
  const BuiltNetwork net = args.plain ? build_plain_baseline(cfg) : build_res_squ_cnds(cfg);

  if (args.format == "json") {
    emit(args.out, built_network_json(net).dump(2) + "\n");
    return 0;
  }

  const ShapeReport rep = shape_report(net.graph);
  std::string text = shape_report_text(rep);
  text += "\nfire modules (s1x1, e1x1, e3x3):\n";
  for (size_t i = 0; i < cfg.fires.size(); ++i) {
    char line[96];
    std::snprintf(line, sizeof(line), "  fire%zu: (%lld, %lld, %lld)\n", i + 1,
                  static_cast<long long>(cfg.fires[i].s1), static_cast<long long>(cfg.fires[i].e1),
                  static_cast<long long>(cfg.fires[i].e3));
    text += line;
  }
  text += "\nmain weight sets:   " + std::to_string(net.main_sets.size()) + "\n";
  text += "branch weight sets: " + std::to_string(net.branch_sets.size()) + "\n";
  text += "residual stages:    " + std::to_string(net.stages.size()) + "\n";
  text += "aux branch tap:     " + net.aux_tap + "\n";
  emit(args.out, text);
  return 0;
}

namespace {

ModelMetrics load_side(const CompareSide& side, const char* which) {
  int sources = 0;
  sources += !side.summary_path.empty();
  sources += side.size_gb.has_value();
  sources += side.size_bytes.has_value();
  if (sources != 1)
    throw ConfigError(std::string(which) +
                      " side needs exactly one of: summary path, --size-gb, --size-bytes");
  ModelMetrics m;
  if (!side.summary_path.empty()) {
    json j;
    try {
      j = json::parse(read_file(side.summary_path));
    } catch (const json::parse_error& e) {
      throw FormatError("cannot parse " + side.summary_path + ": " + e.what());
    }
    m.size_bytes = j.at("report").at("size_bytes").at("fp32").get<double>();
  } else if (side.size_gb) {
    m.size_bytes = *side.size_gb * static_cast<double>(int64_t(1) << 30);
  } else {
    m.size_bytes = *side.size_bytes;
  }
  m.hours = side.hours;
  return m;
}

}  // namespace

int cmd_compare(const CompareArgs& args) {
  const ModelMetrics left = load_side(args.left, "left");
  const ModelMetrics right = load_side(args.right, "right");
  const ComparisonReport rep = compare_models(left, right);

  char line[160];
  const char* size_word = rep.size_reduction_pct >= 0 ? "smaller" : "larger";
  std::snprintf(line, sizeof(line), "size: %.0f B vs %.0f B -> %.2f%% %s\n", left.size_bytes,
                right.size_bytes, std::abs(rep.size_reduction_pct), size_word);
  std::string text = line;
  if (rep.time_reduction_pct) {
    const char* time_word = *rep.time_reduction_pct >= 0 ? "faster" : "slower";
    std::snprintf(line, sizeof(line), "time: %.2f h vs %.2f h -> %.2f%% %s\n", *left.hours,
                  *right.hours, std::abs(*rep.time_reduction_pct), time_word);
    text += line;
  }
  std::fputs(text.c_str(), stdout);

  if (!args.out.empty()) {
    json j{{"left", {{"size_bytes", left.size_bytes}}},
           {"right", {{"size_bytes", right.size_bytes}}},
           {"size_reduction_pct", rep.size_reduction_pct}};
    if (left.hours) j["left"]["hours"] = *left.hours;
    if (right.hours) j["right"]["hours"] = *right.hours;
    if (rep.time_reduction_pct) j["time_reduction_pct"] = *rep.time_reduction_pct;
    write_file_atomic(args.out, j.dump(2) + "\n");
  }
  return 0;
}

namespace {

ArchConfig arch_for_dataset(const std::string& arch, const Dataset& data) {
  const auto& h = data.header;
  if (arch == "auto") {
    if (h.height == 64 && h.width == 64) return ArchConfig::desk_small(h.class_count, 64);
    if ((h.height == 227 || h.height == 256) && h.height == h.width && h.channels == 3) {
      ArchConfig cfg = ArchConfig::paper_default();
      cfg.class_count = h.class_count;
      return cfg;
    }
    throw ConfigError("no preset fits " + std::to_string(h.height) + "x" + std::to_string(h.width) +
                      " samples; pass --arch <config.json>");
  }
  if (arch == "paper") {
    ArchConfig cfg = ArchConfig::paper_default();
    cfg.class_count = h.class_count;
    return cfg;
  }
  if (arch == "desk") return ArchConfig::desk_small(h.class_count, h.height);
  if (arch == "miniature") return ArchConfig::miniature(h.class_count);
  return ArchConfig::from_json_file(arch);
}

template <std::floating_point T>
int run_train(const TrainArgs& args, const Dataset& data, const ArchConfig& arch_cfg,
              uint64_t seed) {
  const BuiltNetwork net = build_res_squ_cnds(arch_cfg);
  const LossTaps taps{net.input_id, net.main_loss, net.aux_loss, net.main_logits};

  TrainConfig cfg;
  cfg.batch_train = args.batch > 0 ? args.batch : 256;
  cfg.base_lr = args.lr;
  cfg.lr_gamma = args.lr_gamma;
  cfg.lr_step = args.lr_step;
  cfg.momentum = args.momentum;
  cfg.weight_decay = args.weight_decay;
  cfg.seed = seed;
  cfg.max_steps = args.steps;
  const int64_t steps_per_epoch =
      (static_cast<int64_t>(data.labels.size()) + cfg.batch_train - 1) / cfg.batch_train;
  if (args.epochs > 0) {
    cfg.epochs = args.epochs;
  } else if (args.steps > 0) {
    cfg.epochs = static_cast<int>((args.steps + steps_per_epoch - 1) / steps_per_epoch);
  } else {
    cfg.epochs = 50;
  }
  cfg.alpha = AlphaSchedule{args.alpha0, cfg.epochs,
                            args.alpha_mode == "recursive" ? AlphaMode::recursive : AlphaMode::linear};
  if (args.init == "gaussian") cfg.init.body.kind = InitBody::Kind::gaussian;
  cfg.validate();

  const fs::path out_dir(args.out_dir);
  std::error_code ec;
  fs::create_directories(out_dir, ec);

  json cfg_json{{"dataset", args.dataset},
                {"val_dataset", args.val_dataset},
                {"arch", arch_cfg.to_json()},
                {"batch", cfg.batch_train},
                {"epochs", cfg.epochs},
                {"steps", cfg.max_steps},
                {"lr", cfg.base_lr},
                {"lr_gamma", cfg.lr_gamma},
                {"lr_step", cfg.lr_step},
                {"momentum", cfg.momentum},
                {"weight_decay", cfg.weight_decay},
                {"alpha0", cfg.alpha.alpha0},
                {"alpha_mode", args.alpha_mode},
                {"init", args.init},
                {"precision", args.precision}};
  json artifacts{{"manifest", (out_dir / "manifest.json").string()},
                 {"metrics_csv", (out_dir / "metrics.csv").string()},
                 {"eval", (out_dir / "eval.json").string()},
                 {"checkpoint_init", (out_dir / "checkpoint_init.json").string()},
                 {"checkpoint_final", (out_dir / "checkpoint_final.json").string()}};
  write_file_atomic(out_dir / "manifest.json",
                    manifest_json("train", seed, cfg_json, artifacts).dump(2) + "\n");

  TrainHooks<T> hooks;
  hooks.on_init = [&](const ParamStore<T>& params) {
    save_checkpoint(out_dir / "checkpoint_init.json", out_dir / "checkpoint_init.bin", net.graph,
                    params);
  };
  hooks.on_epoch_end = [&](int epoch, const ParamStore<T>& params) {
    char name[48];
    std::snprintf(name, sizeof(name), "checkpoint_epoch_%03d", epoch);
    save_checkpoint(out_dir / (std::string(name) + ".json"), out_dir / (std::string(name) + ".bin"),
                    net.graph, params);
  };

  TrainResult<T> result = train<T>(net.graph, taps, net.output_convs, cfg, data, &hooks);

  std::string csv = metrics_csv_header();
  for (const auto& row : result.metrics) csv += metrics_csv_row(row);
  write_file_atomic(out_dir / "metrics.csv", csv);
  save_checkpoint(out_dir / "checkpoint_final.json", out_dir / "checkpoint_final.bin", net.graph,
                  result.params);

  Dataset val;
  const Dataset* eval_set = &data;
  if (!args.val_dataset.empty()) {
    val = read_dataset(args.val_dataset);
    eval_set = &val;
  }
  const auto [top1, top5] = evaluate(net.graph, result.params, taps, *eval_set, 128);
  write_file_atomic(
      out_dir / "eval.json",
      json{{"top1", top1}, {"top5", top5}, {"samples", eval_set->labels.size()}}.dump(2) + "\n");

  std::printf("trained %zu steps; final batch loss %.4f; eval top1 %.4f top5 %.4f\n",
              result.metrics.size(), result.metrics.empty() ? 0.0 : result.metrics.back().total,
              top1, top5);
  return 0;
}

}  // namespace

int cmd_train(const TrainArgs& args) {
  const uint64_t seed = resolve_seed(args.seed, args.seed_set);
  const Dataset data = read_dataset(args.dataset);
  const ArchConfig arch_cfg = arch_for_dataset(args.arch, data);
  if (static_cast<int64_t>(data.header.class_count) != arch_cfg.class_count)
    throw ConfigError("dataset declares " + std::to_string(data.header.class_count) +
                      " classes but the architecture is configured for " +
                      std::to_string(arch_cfg.class_count));
  if (args.precision == "high") return run_train<double>(args, data, arch_cfg, seed);
  if (args.precision != "standard")
    throw ConfigError("precision must be 'standard' or 'high', got " + args.precision);
  return run_train<float>(args, data, arch_cfg, seed);
}

int cmd_gradcheck(const GradcheckArgs& args) {
  if (args.scale != "tiny") throw ConfigError("only --scale tiny is supported");
  GradCheckOptions opts;
  opts.seed = resolve_seed(args.seed, args.seed_set);
  opts.eps = args.eps;
  if (!args.inject_fault.empty()) {
    if (args.inject_fault == "conv-backward-sign") {
      opts.flip_conv_weight_grad_sign = true;
    } else {
      throw ConfigError("unknown fault '" + args.inject_fault + "'");
    }
  }

  std::vector<ComponentCheck> checks = primitive_grad_checks(opts, args.tol_primitive);
  checks.push_back(network_grad_check(opts, args.tolerance));

  bool all_pass = true;
  std::vector<std::string> offenders;
  for (const auto& c : checks) {
    std::printf("%-24s max_rel_err=%.3e tolerance=%.1e %s\n", c.name.c_str(), c.max_rel_err,
                c.tolerance, c.pass() ? "PASS" : "FAIL");
    if (!c.pass()) {
      all_pass = false;
      offenders.push_back(c.name);
    }
  }
  if (!all_pass) {
    std::string msg = "gradient check failed:";
    for (const auto& name : offenders) msg += " " + name;
    std::fprintf(stderr, "%s\n", msg.c_str());
    return 1;
  }
  return 0;
}

int cmd_probe(const ProbeArgs& args) {
  const uint64_t seed = resolve_seed(args.seed, args.seed_set);
  if (args.epochs < 10 || args.epochs > 50)
    throw DomainError("--epochs must lie in [10, 50], got " + std::to_string(args.epochs));

  const ProbeStack stack = build_probe_stack(args.depth, args.width, args.classes);
  const LossTaps taps{stack.input_id, stack.loss_id, "", stack.logits_id};
  const Shape in_shape = stack.graph.shape_of(stack.input_id);

  if (!args.out.empty()) {
    json cfg_json{{"depth", args.depth},          {"width", args.width},
                  {"classes", args.classes},      {"epochs", args.epochs},
                  {"threshold", args.threshold},  {"batch", args.batch}};
    json artifacts{{"report", args.out}};
    if (!args.csv.empty()) artifacts["csv"] = args.csv;
    write_file_atomic(args.out + ".manifest.json",
                      manifest_json("probe", seed, cfg_json, artifacts).dump(2) + "\n");
  }

  const Dataset data = synth_generate(static_cast<int>(args.classes), 20, in_shape.c, in_shape.h,
                                      in_shape.w, 0.1, mix_seed(seed, 0xDA7A));
  const GradientProbeReport rep = gradient_probe(stack.graph, stack.conv_ids, taps, data,
                                                 args.epochs, args.threshold, seed, args.batch);

  for (const auto& [layer, mean] : rep.layer_means)
    std::printf("%-12s mean|grad| = %.6e\n", layer.c_str(), mean);
  if (rep.recommended_insertion) {
    std::printf("recommended auxiliary classifier insertion: after %s\n",
                rep.recommended_insertion->c_str());
  } else {
    std::printf("no layer mean fell below threshold %.3e; no insertion recommended\n",
                rep.threshold);
  }

  if (!args.out.empty()) write_file_atomic(args.out, rep.to_json().dump(2) + "\n");
  if (!args.csv.empty()) write_file_atomic(args.csv, rep.to_csv());
  return 0;
}

int cmd_gen_data(const GenDataArgs& args) {
  const uint64_t seed = resolve_seed(args.seed, args.seed_set);
  if (args.classes < 2) throw DomainError("--classes must be >= 2");
  if (args.per_class < 1) throw DomainError("--per-class must be >= 1");

  long long c = 0, h = 0, w = 0;
  if (std::sscanf(args.size.c_str(), "%lldx%lldx%lld", &c, &h, &w) != 3)
    throw ConfigError("--size must look like CxHxW, got '" + args.size + "'");

  json cfg_json{{"classes", args.classes},
                {"per_class", args.per_class},
                {"size", args.size},
                {"noise", args.noise}};
  write_file_atomic(args.out + ".manifest.json",
                    manifest_json("gen-data", seed, cfg_json, json{{"dataset", args.out}}).dump(2) +
                        "\n");

  const Dataset data = synth_generate(args.classes, args.per_class, c, h, w, args.noise, seed);
  write_dataset(args.out, data);
  std::printf("wrote %u samples (%u classes, %lldx%lldx%lld) to %s\n", data.header.sample_count,
              data.header.class_count, c, h, w, args.out.c_str());
  return 0;
}

}  // namespace rsq::cli
