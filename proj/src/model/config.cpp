#include "mait/model/config.hpp"

#include <fmt/format.h>

#include <cmath>

namespace mait::model {

const char* to_string(HeadKind kind) { return kind == HeadKind::discrete ? "discrete" : "continuous"; }

const char* to_string(SsmMode mode) { return mode == SsmMode::lti ? "lti" : "selective"; }

HeadKind head_kind_from_string(const std::string& s) {
  if (s == "discrete") return HeadKind::discrete;
  if (s == "continuous") return HeadKind::continuous;
  throw ConfigError("unknown head kind '" + s + "'");
}

SsmMode ssm_mode_from_string(const std::string& s) {
  if (s == "lti") return SsmMode::lti;
  if (s == "selective") return SsmMode::selective;
  throw ConfigError("unknown ssm mode '" + s + "'");
}

std::vector<std::string> config_violations(const MaitConfig& c) {
  std::vector<std::string> out;
  auto positive = [&](std::size_t v, const char* name) {
    if (v == 0) out.push_back(fmt::format("{} must be positive", name));
  };
  positive(c.d_in, "d_in");
  positive(c.d_model, "d_model");
  positive(c.layers, "layers");
  positive(c.heads, "heads");
  positive(c.d_state, "d_state");
  positive(c.mlp_mult, "mlp_mult");
  positive(c.out_width, "out_width (K >= 1)");
  positive(c.max_nodes, "max_nodes");
  positive(c.max_steps, "max_steps");
  if (c.heads > 0 && c.d_model % c.heads != 0) {
    out.push_back(fmt::format("d_model {} not divisible by heads {}", c.d_model, c.heads));
  }
  if (!(c.attn_ratio >= 0.0 && c.attn_ratio <= 1.0)) {
    out.push_back(fmt::format("attn_ratio {} outside [0, 1]", c.attn_ratio));
  }
  if (c.head_kind == HeadKind::continuous) {
    if (c.action_scale.size() != c.out_width) {
      out.push_back(fmt::format("action_scale has {} entries, expected out_width {}",
                                c.action_scale.size(), c.out_width));
    }
    for (double s : c.action_scale) {
      if (!(std::isfinite(s) && s > 0.0)) out.push_back(fmt::format("action_scale entry {} not positive", s));
    }
    if (!std::isfinite(c.init_log_std)) out.push_back("init_log_std must be finite");
  } else if (!c.action_scale.empty()) {
    out.push_back("action_scale is only meaningful for continuous heads");
  }
  return out;
}

void validate(const MaitConfig& config) {
  auto v = config_violations(config);
  if (v.empty()) return;
  std::string msg = "invalid MaitConfig:";
  for (const auto& s : v) msg += "\n  - " + s;
  throw ConfigError(msg);
}

std::size_t attention_layer_count(std::size_t layers, double ratio) {
  // 0.3 * 15 evaluates to 4.499999..., which must still round to 5.
  const double exact = ratio * static_cast<double>(layers);
  return static_cast<std::size_t>(std::floor(exact + 0.5 + 1e-9));
}

std::vector<LayerKind> layer_layout(std::size_t layers, double ratio) {
  const std::size_t k = attention_layer_count(layers, ratio);
  std::vector<LayerKind> kinds(layers, LayerKind::mamba);
  for (std::size_t i = 0; i < k; ++i) kinds[i * layers / k] = LayerKind::attention;
  return kinds;
}

}  // namespace mait::model
