#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rsq/graph.hpp"

namespace rsq {

/// Filter counts of one fire module: squeeze 1x1, expand 1x1, expand 3x3.
/// The squeeze count must stay below e1 + e3 so the 3x3 filters see few
/// input channels.
struct FireConfig {
  int64_t s1 = 0;
  int64_t e1 = 0;
  int64_t e3 = 0;
  void validate(std::string_view name) const;
};

/// Shortcut connection: project `source` (1x1 conv, stride 1) to
/// `projection_filters` channels and add it to `dest`. Channels after
/// projection must match dest's; spatial extents must already agree.
struct ResidualStageSpec {
  std::string source;
  std::string dest;
  int64_t projection_filters = 0;
};

/// Complete geometry of the network. The paper-scale defaults feed
/// 3x227x227 images through 3x3/stride-2 pools; the smaller presets keep the
/// identical topology and shrink kernels/strides so tiny inputs survive all
/// five pooling stages.
struct ArchConfig {
  int64_t class_count = 365;
  int64_t input_channels = 3;
  int64_t input_h = 227;
  int64_t input_w = 227;

  int64_t conv1_filters = 96;
  int conv1_kernel = 3;
  int conv1_stride = 2;
  int conv1_pad = 0;

  int pool_kernel = 3;
  int pool_stride = 2;

  int aux_pool_kernel = 5;
  int aux_pool_stride = 2;
  int64_t aux_reduce_filters = 128;

  int64_t head_filters = 512;
  double dropout_rate = 0.5;
  double alpha0 = 0.3;

  std::array<FireConfig, 7> fires{FireConfig{16, 64, 64},   FireConfig{32, 128, 128},
                                  FireConfig{32, 128, 128}, FireConfig{64, 256, 256},
                                  FireConfig{64, 256, 256}, FireConfig{64, 256, 256},
                                  FireConfig{64, 256, 256}};

  static ArchConfig paper_default();
  static ArchConfig desk_small(int64_t classes = 5, int64_t input = 64);
  static ArchConfig miniature(int64_t classes = 2);

  void validate() const;
  nlohmann::json to_json() const;
  static ArchConfig from_json(const nlohmann::json& j);
  static ArchConfig from_json_file(const std::filesystem::path& path);
};

struct WeightSet {
  std::string name;
  std::vector<std::string> nodes;
};

struct ResidualStageInfo {
  std::string name;
  std::string source;
  std::string dest;
  std::string projection;
  std::string add;
};

/// A constructed graph plus the bookkeeping the reports need: loss/logit
/// node ids, the weight-set grouping of the main and auxiliary branches, the
/// residual stages and the fire module outputs.
struct BuiltNetwork {
  Graph graph;
  ArchConfig config;
  bool plain = false;

  std::string input_id;
  std::string main_logits;
  std::string main_loss;
  std::string aux_tap;
  std::string aux_logits;
  std::string aux_loss;

  std::vector<WeightSet> main_sets;
  std::vector<WeightSet> branch_sets;
  std::vector<ResidualStageInfo> stages;
  std::vector<std::string> fire_outputs;
  std::vector<std::string> output_convs;  // K-way classifier convs
};

/// Squeeze 1x1 + ReLU feeding parallel expand 1x1 / expand 3x3 (pad 1), each
/// + ReLU, channel-concat (1x1 side first), then a learnable per-channel
/// scale. Returns the scale node id; conv ids are appended to *conv_ids.
std::string build_fire_module(Graph& g, const std::string& input_id, const FireConfig& cfg,
                              const std::string& name, const std::string& group,
                              std::vector<std::string>* conv_ids);

/// 1x1 projection on spec.source added elementwise to spec.dest.
/// Returns the add node id.
std::string build_residual_connection(Graph& g, const ResidualStageSpec& spec,
                                      const std::string& name, ResidualStageInfo* info);

/// Avg pool -> 1x1 reduce conv + scale + ReLU -> 3x3 conv + ReLU -> dropout
/// -> 3x3 conv + ReLU -> 1x1 K-way conv -> global avg pool -> softmax loss.
/// All four convs are tagged param_group = "branch".
struct AuxBranch {
  std::string loss_id;
  std::string logits_id;
  std::string output_conv;
  std::vector<WeightSet> sets;
};
AuxBranch build_aux_branch(Graph& g, const std::string& tap_id, const ArchConfig& cfg);

/// The full compressed network: conv1 + scale + ReLU, five max pools, seven
/// fire modules, three projected residual additions, the auxiliary branch
/// tapped at the first addition, and the conv6/conv7/conv8 head.
BuiltNetwork build_res_squ_cnds(const ArchConfig& cfg);

/// Same topology with each fire module replaced by a single 3x3 pad-1 conv
/// of e1+e3 filters; residual stages and the auxiliary branch are kept.
BuiltNetwork build_plain_baseline(const ArchConfig& cfg);

struct ShapeReportRow {
  std::string name;
  std::string kind;
  Shape output;  // batch extent recorded as 1
  int64_t params = 0;
};

struct ShapeReport {
  std::vector<ShapeReportRow> rows;
  ParamCount main;
  ParamCount branch;
  ParamCount all() const;
};

ShapeReport shape_report(const Graph& g);
std::string shape_report_text(const ShapeReport& rep);
nlohmann::json shape_report_json(const ShapeReport& rep);

/// Byte size and optional training duration of one model.
struct ModelMetrics {
  double size_bytes = 0;
  std::optional<double> hours;
};

struct ComparisonReport {
  double size_reduction_pct = 0;                 // (left - right) / left * 100, 2 decimals
  std::optional<double> time_reduction_pct;
};

/// Percent reduction of `right` relative to `left`. Throws DomainError when a
/// baseline quantity is zero.
ComparisonReport compare_models(const ModelMetrics& left, const ModelMetrics& right);

/// Weight counts of each fire module against the single 3x3 conv that
/// replaces it in the plain baseline, at the channel widths the full network
/// implies.
struct FireWeightRow {
  std::string name;
  int64_t in_channels = 0;
  FireConfig cfg;
  int64_t fire_weights = 0;        // in*s1 + s1*e1 + 9*s1*e3
  int64_t plain_conv_weights = 0;  // in*(e1+e3)*9
  double reduction_factor = 0;
};

std::vector<FireWeightRow> fire_weight_comparison(const ArchConfig& cfg);

/// Plain conv stack for the gradient magnitude probe: `depth` 3x3 convs with
/// interleaved max pools, a 1x1 classifier conv, global avg pool and softmax.
struct ProbeStack {
  Graph graph;
  std::string input_id;
  std::string loss_id;
  std::string logits_id;
  std::string output_conv;
  std::vector<std::string> conv_ids;  // shallow -> deep, classifier last
};

ProbeStack build_probe_stack(int depth, int64_t width = 16, int64_t classes = 5,
                             int64_t input_channels = 3, int64_t input_hw = 32);

}  // namespace rsq
