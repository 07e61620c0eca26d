#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace mtid {

/// Which latent features each cross-attention site receives.
enum class FeatureRouting {
  kPerBlock,  // block j attends to F_j
  kAll,       // every block attends to F_1..F_M
  kNone,      // no cross-attention
};

FeatureRouting parse_feature_routing(const std::string& s);
std::string to_string(FeatureRouting r);

struct UNetConfig {
  int levels = 3;
  int blocks_per_level = 2;
  int middle_blocks = 2;
  int base_width = 32;
  /// Channel width of level l is base_width * multipliers[l].
  std::vector<int> multipliers = {1, 2, 4};
  int max_groups = 8;
  FeatureRouting routing = FeatureRouting::kPerBlock;

  void validate() const;
  int width(int level) const { return base_width * multipliers.at(level); }
  bool operator==(const UNetConfig&) const = default;
};

nlohmann::json to_json(const UNetConfig& c);
UNetConfig unet_config_from_json(const nlohmann::json& j);

}  // namespace mtid
