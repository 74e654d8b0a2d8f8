#pragma once

// Structured documents exchanged with the command line: scenes for label
// assignment, assignment results, cost reports, and the run configuration.
// All are JSON; emitters use a fixed field order so output is byte-stable.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "lfdet/abota.hpp"
#include "lfdet/cost.hpp"
#include "lfdet/heads.hpp"
#include "lfdet/toy.hpp"

namespace lfdet::io {

/// Input of `assign`: one level (index 0) with its grid and anchors.
struct SceneDocument {
  std::vector<GroundTruth> gts;
  std::vector<AnchorSize> anchors;
  GridSpec grid;
  PredictionMap predictions;
  double lambda = kDefaultLambda;
  double anchor_t = kDefaultAnchorT;

  std::vector<AnchorLevel> levels() const { return {{grid, anchors}}; }
  bool operator==(const SceneDocument&) const = default;
};

/// Throws ParseError (with line or field path) for malformed documents and
/// InputError for degenerate boxes or out-of-range probabilities.
SceneDocument parse_scene(std::string_view text);
std::string emit_scene(const SceneDocument& doc);

AssignmentResult parse_assignment(std::string_view text);
std::string emit_assignment(const AssignmentResult& result);

struct LfsaInsertion {
  std::size_t level = 0;
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  LayerCost cost;
  std::uint64_t attention_macs = 0;
  std::uint64_t full_attention_macs = 0;

  bool operator==(const LfsaInsertion&) const = default;
};

struct CostDocument {
  std::vector<CostReport> variants;  // coupled, decoupled, efficient
  double edh_dh_flops_ratio = 0.0;
  std::string reference_ratio = "5.8/34.7";
  std::vector<LfsaInsertion> lfsa;

  bool operator==(const CostDocument&) const = default;
};

CostDocument make_cost_document(const std::vector<LevelSpec>& levels, const HeadSpec& decoupled,
                                const HeadSpec& efficient);
CostDocument parse_cost_report(std::string_view text);
std::string emit_cost_report(const CostDocument& doc);
std::string emit_cost_table(const CostDocument& doc);

struct ToySettings {
  std::size_t steps = 500;
  double lr = 0.1;
  std::uint64_t seed = 0;
  HeadVariant head = HeadVariant::Efficient;
  std::size_t levels = 1;
  bool lfsa = true;

  bool operator==(const ToySettings&) const = default;
};

struct Config {
  std::vector<LevelSpec> levels;
  HeadSpec decoupled = HeadSpec::decoupled();
  HeadSpec efficient = HeadSpec::efficient();
  double lambda = kDefaultLambda;
  std::string report_format = "json";
  std::uint64_t seed = 0;
  ToySettings toy;

  /// Three levels of 256/512/1024 channels at strides 8/16/32 of a 640x640 image,
  /// 3 anchors, 80 classes.
  static Config defaults();
  ToyConfig toy_config() const;
  bool operator==(const Config&) const = default;
};

/// Missing fields take Config::defaults() values. Unknown fields and invalid
/// values raise ConfigError listing every offending field.
Config parse_config(std::string_view text);
std::string emit_config(const Config& config);

}  // namespace lfdet::io
