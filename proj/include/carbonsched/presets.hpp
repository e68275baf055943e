#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "carbonsched/profile.hpp"

namespace carbonsched {

struct CurvePreset {
  std::string name;
  MarginalCapacityCurve curve;
  PowerModel power;
};

/// Built-in curves: the two-server curves of the worked example plus geometric stand-ins for
/// the evaluated workloads (1 to 8 servers, CPU jobs at 60 W, GPU jobs at 210 W). The
/// stand-ins only reproduce the qualitative ordering of scalability.
inline std::vector<CurvePreset> const& curve_presets() {
  static std::vector<CurvePreset> const presets = [] {
    auto geo = [](double decay) { return synthetic_curve(CurveKind::diminishing, 1, 8, decay); };
    return std::vector<CurvePreset>{
        {"example_flat", synthetic_curve(CurveKind::linear, 1, 2), PowerModel{1000.0}},
        {"example_diminishing", synthetic_curve(CurveKind::diminishing, 1, 2, 0.7), PowerModel{1000.0}},
        {"linear", synthetic_curve(CurveKind::linear, 1, 8), PowerModel{60.0}},
        {"nbody_10k", geo(0.97), PowerModel{60.0}},
        {"nbody_100k", geo(0.93), PowerModel{60.0}},
        {"resnet18", geo(0.85), PowerModel{210.0}},
        {"efficientnet_b1", geo(0.75), PowerModel{210.0}},
        {"vgg16", geo(0.6), PowerModel{210.0}},
    };
  }();
  return presets;
}

inline std::optional<CurvePreset> find_preset(std::string_view name) {
  for (auto const& p : curve_presets()) {
    if (p.name == name) return p;
  }
  return std::nullopt;
}

}  // namespace carbonsched
