#include "rsq/archs.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "rsq/io_util.hpp"

namespace rsq {

namespace {

NodeSpec conv_node(std::string id, std::string input, int64_t out_channels, int kernel, int stride,
                   int pad, const std::string& group) {
  NodeSpec n;
  n.id = std::move(id);
  n.kind = NodeKind::conv;
  n.inputs = {std::move(input)};
  n.attrs = ConvAttrs{out_channels, kernel, stride, pad};
  n.param_group = group;
  return n;
}

NodeSpec unary_node(std::string id, NodeKind kind, std::string input) {
  NodeSpec n;
  n.id = std::move(id);
  n.kind = kind;
  n.inputs = {std::move(input)};
  return n;
}

NodeSpec pool_node(std::string id, std::string input, PoolKind kind, int kernel, int stride) {
  NodeSpec n;
  n.id = std::move(id);
  n.kind = NodeKind::pool;
  n.inputs = {std::move(input)};
  n.attrs = PoolAttrs{kind, kernel, stride, 0};
  return n;
}

NodeSpec scale_node(std::string id, std::string input, const std::string& group) {
  NodeSpec n;
  n.id = std::move(id);
  n.kind = NodeKind::scale;
  n.inputs = {std::move(input)};
  n.param_group = group;
  return n;
}

NodeSpec dropout_node(std::string id, std::string input, double rate) {
  NodeSpec n;
  n.id = std::move(id);
  n.kind = NodeKind::dropout;
  n.inputs = {std::move(input)};
  n.attrs = DropoutAttrs{rate};
  return n;
}

}  // namespace

void FireConfig::validate(std::string_view name) const {
  if (s1 < 1 || e1 < 1 || e3 < 1)
    throw ConfigError(std::string(name) + ": fire filter counts must be >= 1");
  if (s1 >= e1 + e3)
    throw ConfigError(std::string(name) + ": squeeze count " + std::to_string(s1) +
                      " must be less than e1+e3 = " + std::to_string(e1 + e3));
}

ArchConfig ArchConfig::paper_default() { return ArchConfig{}; }

ArchConfig ArchConfig::desk_small(int64_t classes, int64_t input) {
  ArchConfig cfg;
  cfg.class_count = classes;
  cfg.input_h = cfg.input_w = input;
  cfg.conv1_filters = 12;
  cfg.conv1_pad = 1;
  cfg.pool_kernel = 2;
  cfg.pool_stride = 2;
  cfg.aux_pool_kernel = 2;
  cfg.aux_pool_stride = 2;
  cfg.aux_reduce_filters = 16;
  cfg.head_filters = 64;
  cfg.fires = {FireConfig{2, 8, 8},    FireConfig{4, 16, 16}, FireConfig{4, 16, 16},
               FireConfig{8, 32, 32},  FireConfig{8, 32, 32}, FireConfig{8, 32, 32},
               FireConfig{8, 32, 32}};
  return cfg;
}

ArchConfig ArchConfig::miniature(int64_t classes) {
  ArchConfig cfg;
  cfg.class_count = classes;
  cfg.input_h = cfg.input_w = 8;
  cfg.conv1_filters = 4;
  cfg.conv1_stride = 1;
  cfg.pool_kernel = 2;
  cfg.pool_stride = 1;
  cfg.aux_pool_kernel = 2;
  cfg.aux_pool_stride = 1;
  cfg.aux_reduce_filters = 4;
  cfg.head_filters = 8;
  cfg.fires = {FireConfig{2, 4, 4}, FireConfig{2, 4, 4}, FireConfig{2, 4, 4}, FireConfig{2, 4, 4},
               FireConfig{2, 4, 4}, FireConfig{2, 4, 4}, FireConfig{2, 4, 4}};
  return cfg;
}

void ArchConfig::validate() const {
  if (class_count < 2) throw ConfigError("class_count must be >= 2");
  if (input_channels < 1 || input_h < 1 || input_w < 1)
    throw ConfigError("input extents must be >= 1");
  if (conv1_filters < 1 || aux_reduce_filters < 1 || head_filters < 1)
    throw ConfigError("filter counts must be >= 1");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw ConfigError("dropout_rate must lie in [0, 1)");
  if (alpha0 <= 0.0) throw ConfigError("alpha0 must be > 0");
  for (size_t i = 0; i < fires.size(); ++i) fires[i].validate("fire" + std::to_string(i + 1));
}

nlohmann::json ArchConfig::to_json() const {
  nlohmann::json fires_json = nlohmann::json::array();
  for (const auto& f : fires) fires_json.push_back({f.s1, f.e1, f.e3});
  return nlohmann::json{{"classes", class_count},
                        {"input_channels", input_channels},
                        {"input_h", input_h},
                        {"input_w", input_w},
                        {"conv1_filters", conv1_filters},
                        {"conv1_kernel", conv1_kernel},
                        {"conv1_stride", conv1_stride},
                        {"conv1_pad", conv1_pad},
                        {"pool_kernel", pool_kernel},
                        {"pool_stride", pool_stride},
                        {"aux_pool_kernel", aux_pool_kernel},
                        {"aux_pool_stride", aux_pool_stride},
                        {"aux_reduce_filters", aux_reduce_filters},
                        {"head_filters", head_filters},
                        {"dropout_rate", dropout_rate},
                        {"alpha0", alpha0},
                        {"fires", fires_json}};
}

ArchConfig ArchConfig::from_json(const nlohmann::json& j) {
  ArchConfig cfg;
  auto load = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  load("classes", cfg.class_count);
  load("input_channels", cfg.input_channels);
  load("input_h", cfg.input_h);
  load("input_w", cfg.input_w);
  load("conv1_filters", cfg.conv1_filters);
  load("conv1_kernel", cfg.conv1_kernel);
  load("conv1_stride", cfg.conv1_stride);
  load("conv1_pad", cfg.conv1_pad);
  load("pool_kernel", cfg.pool_kernel);
  load("pool_stride", cfg.pool_stride);
  load("aux_pool_kernel", cfg.aux_pool_kernel);
  load("aux_pool_stride", cfg.aux_pool_stride);
  load("aux_reduce_filters", cfg.aux_reduce_filters);
  load("head_filters", cfg.head_filters);
  load("dropout_rate", cfg.dropout_rate);
  load("alpha0", cfg.alpha0);
  if (j.contains("fires")) {
    const auto& fj = j.at("fires");
    if (fj.size() != cfg.fires.size())
      throw ConfigError("fire table must have exactly " + std::to_string(cfg.fires.size()) +
                        " rows, got " + std::to_string(fj.size()));
    for (size_t i = 0; i < cfg.fires.size(); ++i) {
      const auto& row = fj.at(i);
      cfg.fires[i] = FireConfig{row.at(0).get<int64_t>(), row.at(1).get<int64_t>(),
                                row.at(2).get<int64_t>()};
    }
  }
  cfg.validate();
  return cfg;
}

ArchConfig ArchConfig::from_json_file(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("cannot parse " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

std::string build_fire_module(Graph& g, const std::string& input_id, const FireConfig& cfg,
                              const std::string& name, const std::string& group,
                              std::vector<std::string>* conv_ids) {
  cfg.validate(name);
  const std::string squeeze = name + "/squeeze1x1";
  const std::string expand1 = name + "/expand1x1";
  const std::string expand3 = name + "/expand3x3";
  g.add_node(conv_node(squeeze, input_id, cfg.s1, 1, 1, 0, group));
  g.add_node(unary_node(name + "/squeeze_relu", NodeKind::relu, squeeze));
  g.add_node(conv_node(expand1, name + "/squeeze_relu", cfg.e1, 1, 1, 0, group));
  g.add_node(unary_node(name + "/expand1x1_relu", NodeKind::relu, expand1));
  g.add_node(conv_node(expand3, name + "/squeeze_relu", cfg.e3, 3, 1, 1, group));
  g.add_node(unary_node(name + "/expand3x3_relu", NodeKind::relu, expand3));
  NodeSpec concat;
  concat.id = name + "/concat";
  concat.kind = NodeKind::concat;
  concat.inputs = {name + "/expand1x1_relu", name + "/expand3x3_relu"};
  g.add_node(std::move(concat));
  g.add_node(scale_node(name + "/scale", name + "/concat", group));
  if (conv_ids) {
    conv_ids->push_back(squeeze);
    conv_ids->push_back(expand1);
    conv_ids->push_back(expand3);
  }
  return name + "/scale";
}

std::string build_residual_connection(Graph& g, const ResidualStageSpec& spec,
                                      const std::string& name, ResidualStageInfo* info) {
  const Shape& src = g.shape_of(spec.source);
  const Shape& dst = g.shape_of(spec.dest);
  if (spec.projection_filters != dst.c)
    throw ConfigError(name + ": projection to " + std::to_string(spec.projection_filters) +
                      " channels cannot match destination's " + std::to_string(dst.c));
  if (src.h != dst.h || src.w != dst.w)
    throw ConfigError(name + ": source " + src.str() + " and destination " + dst.str() +
                      " disagree spatially");
  const std::string proj = name + "/proj";
  g.add_node(conv_node(proj, spec.source, spec.projection_filters, 1, 1, 0, "main"));
  NodeSpec add;
  add.id = name + "/add";
  add.kind = NodeKind::add;
  add.inputs = {spec.dest, proj};
  g.add_node(std::move(add));
  if (info) *info = ResidualStageInfo{name, spec.source, spec.dest, proj, name + "/add"};
  return name + "/add";
}

AuxBranch build_aux_branch(Graph& g, const std::string& tap_id, const ArchConfig& cfg) {
  if (!g.has(tap_id)) throw ConfigError("auxiliary tap node '" + tap_id + "' does not exist");
  AuxBranch branch;
  g.add_node(pool_node("aux/pool", tap_id, PoolKind::avg, cfg.aux_pool_kernel, cfg.aux_pool_stride));
  g.add_node(conv_node("aux/conv1", "aux/pool", cfg.aux_reduce_filters, 1, 1, 0, "branch"));
  {
    NodeSpec s = scale_node("aux/conv1_scale", "aux/conv1", "branch");
    g.add_node(std::move(s));
  }
  g.add_node(unary_node("aux/conv1_relu", NodeKind::relu, "aux/conv1_scale"));
  g.add_node(conv_node("aux/conv2", "aux/conv1_relu", cfg.head_filters, 3, 1, 1, "branch"));
  g.add_node(unary_node("aux/conv2_relu", NodeKind::relu, "aux/conv2"));
  g.add_node(dropout_node("aux/drop", "aux/conv2_relu", cfg.dropout_rate));
  g.add_node(conv_node("aux/conv3", "aux/drop", cfg.head_filters, 3, 1, 1, "branch"));
  g.add_node(unary_node("aux/conv3_relu", NodeKind::relu, "aux/conv3"));
  g.add_node(conv_node("aux/conv4", "aux/conv3_relu", cfg.class_count, 1, 1, 0, "branch"));
  g.add_node(unary_node("aux/gap", NodeKind::gap, "aux/conv4"));
  g.add_node(unary_node("aux_loss", NodeKind::softmax_loss, "aux/gap"));

  branch.loss_id = "aux_loss";
  branch.logits_id = "aux/gap";
  branch.output_conv = "aux/conv4";
  branch.sets = {WeightSet{"Ws5", {"aux/conv1"}},
                 WeightSet{"Ws6", {"aux/conv2"}},
                 WeightSet{"Ws7", {"aux/conv3"}},
                 WeightSet{"Ws8", {"aux/conv4"}}};
  return branch;
}

namespace {

BuiltNetwork build_network(const ArchConfig& cfg, bool plain) {
  cfg.validate();
  BuiltNetwork net;
  net.config = cfg;
  net.plain = plain;
  Graph& g = net.graph;

  NodeSpec input;
  input.id = "data";
  input.kind = NodeKind::input;
  input.attrs = InputAttrs{cfg.input_channels, cfg.input_h, cfg.input_w};
  g.add_node(std::move(input));
  net.input_id = "data";

  g.add_node(conv_node("conv1", "data", cfg.conv1_filters, cfg.conv1_kernel, cfg.conv1_stride,
                       cfg.conv1_pad, "main"));
  g.add_node(scale_node("conv1_scale", "conv1", "main"));
  g.add_node(unary_node("conv1_relu", NodeKind::relu, "conv1_scale"));
  net.main_sets.push_back(WeightSet{"W1", {"conv1"}});

  auto add_pool = [&](int i, const std::string& from) {
    const std::string id = "pool" + std::to_string(i);
    g.add_node(pool_node(id, from, PoolKind::max, cfg.pool_kernel, cfg.pool_stride));
    return id;
  };

  // One fire module (or its plain 3x3 replacement) per table row.
  auto add_stage_block = [&](int i, const std::string& from) {
    const std::string name = "fire" + std::to_string(i);
    const FireConfig& fc = cfg.fires[static_cast<size_t>(i - 1)];
    std::string out;
    std::vector<std::string> convs;
    if (plain) {
      const std::string conv = name + "/conv";
      g.add_node(conv_node(conv, from, fc.e1 + fc.e3, 3, 1, 1, "main"));
      g.add_node(unary_node(name + "/relu", NodeKind::relu, conv));
      g.add_node(scale_node(name + "/scale", name + "/relu", "main"));
      out = name + "/scale";
      convs = {conv};
    } else {
      out = build_fire_module(g, from, fc, name, "main", &convs);
    }
    net.main_sets.push_back(WeightSet{"W" + std::to_string(i + 1), convs});
    net.fire_outputs.push_back(out);
    return out;
  };

  const std::string pool1 = add_pool(1, "conv1_relu");
  const std::string fire1 = add_stage_block(1, pool1);
  const std::string pool2 = add_pool(2, fire1);
  const std::string fire2 = add_stage_block(2, pool2);
  const std::string fire3 = add_stage_block(3, fire2);

  ResidualStageInfo info;
  const std::string res1 = build_residual_connection(
      g, ResidualStageSpec{pool2, fire3, g.shape_of(fire3).c}, "res1", &info);
  net.stages.push_back(info);
  net.aux_tap = res1;

  const std::string pool3 = add_pool(3, res1);
  const std::string fire4 = add_stage_block(4, pool3);
  const std::string fire5 = add_stage_block(5, fire4);
  const std::string res2 = build_residual_connection(
      g, ResidualStageSpec{pool3, fire5, g.shape_of(fire5).c}, "res2", &info);
  net.stages.push_back(info);

  const std::string pool4 = add_pool(4, res2);
  const std::string fire6 = add_stage_block(6, pool4);
  const std::string fire7 = add_stage_block(7, fire6);
  // Channels already match here; the projection is kept to strengthen the
  // final feature maps.
  const std::string res3 = build_residual_connection(
      g, ResidualStageSpec{pool4, fire7, g.shape_of(fire7).c}, "res3", &info);
  net.stages.push_back(info);

  const std::string pool5 = add_pool(5, res3);
  g.add_node(conv_node("conv6", pool5, cfg.head_filters, 3, 1, 1, "main"));
  g.add_node(unary_node("conv6_relu", NodeKind::relu, "conv6"));
  g.add_node(dropout_node("drop6", "conv6_relu", cfg.dropout_rate));
  g.add_node(conv_node("conv7", "drop6", cfg.head_filters, 3, 1, 1, "main"));
  g.add_node(unary_node("conv7_relu", NodeKind::relu, "conv7"));
  g.add_node(conv_node("conv8", "conv7_relu", cfg.class_count, 1, 1, 0, "main"));
  g.add_node(unary_node("gap", NodeKind::gap, "conv8"));
  g.add_node(unary_node("main_loss", NodeKind::softmax_loss, "gap"));
  net.main_sets.push_back(WeightSet{"W9", {"conv6"}});
  net.main_sets.push_back(WeightSet{"W10", {"conv7"}});
  net.main_sets.push_back(WeightSet{"W11", {"conv8"}});
  net.main_logits = "gap";
  net.main_loss = "main_loss";

  AuxBranch aux = build_aux_branch(g, net.aux_tap, cfg);
  net.aux_loss = aux.loss_id;
  net.aux_logits = aux.logits_id;
  net.branch_sets = std::move(aux.sets);
  net.output_convs = {"conv8", aux.output_conv};

  g.outputs = {net.main_loss, net.aux_loss};
  return net;
}

}  // namespace

BuiltNetwork build_res_squ_cnds(const ArchConfig& cfg) { return build_network(cfg, false); }

BuiltNetwork build_plain_baseline(const ArchConfig& cfg) { return build_network(cfg, true); }

ParamCount ShapeReport::all() const {
  return ParamCount{main.weights + branch.weights, main.biases + branch.biases};
}

ShapeReport shape_report(const Graph& g) {
  ShapeReport rep;
  const ParamCountReport counts = param_count(g);
  std::unordered_map<std::string, int64_t> per_node;
  for (const auto& [id, pc] : counts.per_node) per_node[id] = pc.total();
  for (size_t i = 0; i < g.size(); ++i) {
    const NodeSpec& n = g.node(i);
    ShapeReportRow row;
    row.name = n.id;
    row.kind = std::string(node_kind_name(n.kind));
    row.output = g.shape_at(i);
    auto it = per_node.find(n.id);
    row.params = it == per_node.end() ? 0 : it->second;
    rep.rows.push_back(std::move(row));
  }
  rep.main = counts.main;
  rep.branch = counts.branch;
  return rep;
}

std::string shape_report_text(const ShapeReport& rep) {
  std::ostringstream os;
  size_t name_w = 10;
  for (const auto& r : rep.rows) name_w = std::max(name_w, r.name.size());
  os << std::left << std::setw(static_cast<int>(name_w) + 2) << "layer" << std::setw(14) << "kind"
     << std::setw(18) << "output (c,h,w)" << std::right << std::setw(12) << "params" << "\n";
  for (const auto& r : rep.rows) {
    std::ostringstream shape;
    shape << r.output.c << "x" << r.output.h << "x" << r.output.w;
    os << std::left << std::setw(static_cast<int>(name_w) + 2) << r.name << std::setw(14) << r.kind
       << std::setw(18) << shape.str() << std::right << std::setw(12) << r.params << "\n";
  }
  os << "\n";
  os << "main branch params:   " << rep.main.total() << " (" << rep.main.weights << " weights, "
     << rep.main.biases << " biases)\n";
  os << "aux branch params:    " << rep.branch.total() << " (" << rep.branch.weights
     << " weights, " << rep.branch.biases << " biases)\n";
  const int64_t total = rep.all().total();
  os << "total params:         " << total << "\n";
  os << "size fp32:            " << model_size_bytes(total, 4) << " bytes ("
     << format_bytes(model_size_bytes(total, 4)) << ")\n";
  os << "size fp64:            " << model_size_bytes(total, 8) << " bytes ("
     << format_bytes(model_size_bytes(total, 8)) << ")\n";
  return os.str();
}

nlohmann::json shape_report_json(const ShapeReport& rep) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : rep.rows) {
    rows.push_back({{"name", r.name},
                    {"kind", r.kind},
                    {"output", {r.output.c, r.output.h, r.output.w}},
                    {"params", r.params}});
  }
  const int64_t total = rep.all().total();
  return nlohmann::json{
      {"rows", std::move(rows)},
      {"totals",
       {{"main", {{"weights", rep.main.weights}, {"biases", rep.main.biases}, {"total", rep.main.total()}}},
        {"branch",
         {{"weights", rep.branch.weights}, {"biases", rep.branch.biases}, {"total", rep.branch.total()}}},
        {"all", {{"weights", rep.all().weights}, {"biases", rep.all().biases}, {"total", total}}}}},
      {"size_bytes", {{"fp32", model_size_bytes(total, 4)}, {"fp64", model_size_bytes(total, 8)}}},
      {"size_text",
       {{"fp32", format_bytes(model_size_bytes(total, 4))},
        {"fp64", format_bytes(model_size_bytes(total, 8))}}}};
}

ComparisonReport compare_models(const ModelMetrics& left, const ModelMetrics& right) {
  auto pct = [](double base, double value) {
    if (base == 0.0) throw DomainError("comparison baseline is zero");
    return std::round((base - value) / base * 100.0 * 100.0) / 100.0;
  };
  ComparisonReport rep;
  rep.size_reduction_pct = pct(left.size_bytes, right.size_bytes);
  if (left.hours && right.hours) rep.time_reduction_pct = pct(*left.hours, *right.hours);
  return rep;
}

std::vector<FireWeightRow> fire_weight_comparison(const ArchConfig& cfg) {
  cfg.validate();
  std::vector<FireWeightRow> rows;
  int64_t in = cfg.conv1_filters;  // fire1 sees pool1(conv1) output
  for (size_t i = 0; i < cfg.fires.size(); ++i) {
    const FireConfig& f = cfg.fires[i];
    FireWeightRow row;
    row.name = "fire" + std::to_string(i + 1);
    row.in_channels = in;
    row.cfg = f;
    row.fire_weights = in * f.s1 + f.s1 * f.e1 + 9 * f.s1 * f.e3;
    row.plain_conv_weights = in * (f.e1 + f.e3) * 9;
    row.reduction_factor =
        static_cast<double>(row.plain_conv_weights) / static_cast<double>(row.fire_weights);
    rows.push_back(row);
    in = f.e1 + f.e3;
  }
  return rows;
}

ProbeStack build_probe_stack(int depth, int64_t width, int64_t classes, int64_t input_channels,
                             int64_t input_hw) {
  if (depth < 1) throw ConfigError("probe stack depth must be >= 1");
  if (width < 1 || classes < 2) throw ConfigError("probe stack needs width >= 1 and classes >= 2");
  if (input_channels < 1) input_channels = width;
  ProbeStack stack;
  Graph& g = stack.graph;
  NodeSpec input;
  input.id = "data";
  input.kind = NodeKind::input;
  input.attrs = InputAttrs{input_channels, input_hw, input_hw};
  g.add_node(std::move(input));
  stack.input_id = "data";

  // Channel width steps down every two layers. With all layers initialized
  // at the same tiny stddev, total gradient energy is roughly constant per
  // layer, so per-weight means track 1/sqrt(fan_in * fan_out): the narrowing
  // makes the shallow-to-deep magnitude profile observable above noise.
  const int64_t step = std::max<int64_t>(1, width / 8);
  auto width_at = [&](int i) { return std::max<int64_t>(4, width - ((i - 1) / 2) * step); };

  std::string prev = "data";
  int64_t hw = input_hw;
  for (int i = 1; i <= depth; ++i) {
    std::ostringstream name;
    name << "conv" << std::setw(2) << std::setfill('0') << i;
    const std::string conv = name.str();
    g.add_node(conv_node(conv, prev, width_at(i), 3, 1, 1, "main"));
    g.add_node(unary_node(conv + "_relu", NodeKind::relu, conv));
    prev = conv + "_relu";
    stack.conv_ids.push_back(conv);
    // downsample every third conv while room remains
    if (i % 3 == 0 && i < depth && hw >= 4) {
      const std::string pool = "pool" + std::to_string(i / 3);
      g.add_node(pool_node(pool, prev, PoolKind::max, 2, 2));
      prev = pool;
      hw /= 2;
    }
  }
  g.add_node(conv_node("classifier", prev, classes, 1, 1, 0, "main"));
  g.add_node(unary_node("gap", NodeKind::gap, "classifier"));
  g.add_node(unary_node("loss", NodeKind::softmax_loss, "gap"));
  stack.conv_ids.push_back("classifier");
  stack.output_conv = "classifier";
  stack.logits_id = "gap";
  stack.loss_id = "loss";
  g.outputs = {"loss"};
  return stack;
}

}  // namespace rsq
