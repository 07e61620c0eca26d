#include "mtid/unet_config.hpp"

#include "mtid/error.hpp"

namespace mtid {

FeatureRouting parse_feature_routing(const std::string& s) {
  if (s == "per-block") return FeatureRouting::kPerBlock;
  if (s == "all") return FeatureRouting::kAll;
  if (s == "none") return FeatureRouting::kNone;
  throw Error(Errc::kInvalidArgument, "unknown feature routing '" + s + "'");
}

std::string to_string(FeatureRouting r) {
  switch (r) {
    case FeatureRouting::kPerBlock: return "per-block";
    case FeatureRouting::kAll: return "all";
    case FeatureRouting::kNone: return "none";
  }
  return "?";
}

void UNetConfig::validate() const {
  if (levels < 1) throw Error(Errc::kInvalidArgument, "unet needs at least one level");
  if (blocks_per_level < 0 || middle_blocks < 0) throw Error(Errc::kInvalidArgument, "negative block count");
  if (static_cast<int>(multipliers.size()) != levels) {
    throw Error(Errc::kInvalidArgument, "need one width multiplier per level");
  }
  if (base_width < 1 || max_groups < 1) throw Error(Errc::kInvalidArgument, "unet widths must be positive");
  for (int m : multipliers)
    if (m < 1) throw Error(Errc::kInvalidArgument, "width multipliers must be positive");
  if (2 * levels * blocks_per_level + middle_blocks < 1) {
    throw Error(Errc::kInvalidArgument, "unet has no residual temporal blocks");
  }
}

nlohmann::json to_json(const UNetConfig& c) {
  return {{"levels", c.levels},         {"blocks_per_level", c.blocks_per_level},
          {"middle_blocks", c.middle_blocks}, {"base_width", c.base_width},
          {"multipliers", c.multipliers}, {"max_groups", c.max_groups},
          {"routing", to_string(c.routing)}};
}

UNetConfig unet_config_from_json(const nlohmann::json& j) {
  UNetConfig c;
  try {
    c.levels = j.value("levels", c.levels);
    c.blocks_per_level = j.value("blocks_per_level", c.blocks_per_level);
    c.middle_blocks = j.value("middle_blocks", c.middle_blocks);
    c.base_width = j.value("base_width", c.base_width);
    if (j.contains("multipliers")) {
      c.multipliers = j.at("multipliers").get<std::vector<int>>();
    } else if (c.levels != 3) {
      c.multipliers.clear();
      for (int l = 0; l < c.levels; ++l) c.multipliers.push_back(1 << l);
    }
    c.max_groups = j.value("max_groups", c.max_groups);
    if (j.contains("routing")) c.routing = parse_feature_routing(j.at("routing").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kInvalidArgument, std::string("unet config: ") + e.what());
  }
  return c;
}

}  // namespace mtid
