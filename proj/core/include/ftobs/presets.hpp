#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ftobs/simnet.hpp"

namespace ftobs::presets {

/// Six-state, four-agent benchmark network: 0.2 measurement noise,
/// 0.1 sin(50 t) disturbance on every state, edge delays uniform in
/// [0, 0.27] s with tau_bar = 0.27 s, t_delta = 1 s.
simnet::Scenario reference();

std::vector<std::string> names();
std::optional<simnet::Scenario> by_name(std::string_view name);

}  // namespace ftobs::presets
