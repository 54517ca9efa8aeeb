#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace mait::model {

enum class HeadKind { discrete, continuous };
enum class SsmMode { lti, selective };
enum class LayerKind { attention, mamba };

const char* to_string(HeadKind kind);
const char* to_string(SsmMode mode);
HeadKind head_kind_from_string(const std::string& s);
SsmMode ssm_mode_from_string(const std::string& s);

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct MaitConfig {
  std::size_t d_in = 4;
  std::size_t d_model = 32;
  std::size_t layers = 4;
  double attn_ratio = 0.5;
  std::size_t heads = 4;
  std::size_t d_k = 0;  // 0 selects d_model / heads
  std::size_t d_state = 4;
  std::size_t mlp_mult = 4;
  HeadKind head_kind = HeadKind::discrete;
  std::size_t out_width = 1;  // candidate stops, or action dimension
  std::size_t max_nodes = 16;
  std::size_t max_steps = 16;
  SsmMode ssm_mode = SsmMode::selective;
  /// Continuous heads only: physical scale S, one entry per output.
  std::vector<double> action_scale;
  /// Initial log of the policy std, in units of action_scale.
  double init_log_std = -1.2039728043259361;  // ln 0.3

  std::size_t key_width() const { return d_k == 0 ? d_model / heads : d_k; }

  bool operator==(const MaitConfig&) const = default;
};

/// Every violated constraint, empty when the config is usable.
std::vector<std::string> config_violations(const MaitConfig& config);
/// Throws ConfigError listing every violation.
void validate(const MaitConfig& config);

/// round(ratio * layers), with halves rounded up.
std::size_t attention_layer_count(std::size_t layers, double ratio);

/// Attention layers at evenly spaced positions floor(i * L / k), starting at 0;
/// Mamba everywhere else.
std::vector<LayerKind> layer_layout(std::size_t layers, double ratio);

}  // namespace mait::model
