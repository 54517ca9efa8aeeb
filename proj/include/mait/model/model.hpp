#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mait/model/config.hpp"
#include "mait/model/layers.hpp"
#include "mait/num/random.hpp"

namespace mait::model {

/// N node rows of width d_in, row-major, with one table id per row.
struct NodeSequence {
  std::size_t count = 0;
  std::size_t width = 0;
  std::vector<double> features;
  std::size_t time = 0;
  std::vector<std::size_t> ids;

  double at(std::size_t row, std::size_t col) const { return features[row * width + col]; }
};

/// Everything the policy sees at one decision step.
struct PolicyInput {
  NodeSequence nodes;
  /// Rows of `nodes` that belong to UAVs taking a decision now.
  std::vector<std::size_t> uav_rows;
  /// Discrete tasks: uav_rows.size() x K feasibility flags, row-major.
  std::vector<std::uint8_t> masks;

  std::span<const std::uint8_t> mask_row(std::size_t m, std::size_t k) const {
    return std::span<const std::uint8_t>(masks).subspan(m * k, k);
  }
};

enum class ActMode { greedy, sample };

struct UavDecision {
  std::size_t uav_row = 0;
  // discrete
  std::vector<double> probs;
  std::vector<double> log_probs;
  std::size_t choice = 0;
  // continuous
  std::vector<double> mean;
  std::vector<double> log_std;  // absolute, includes log S
  std::vector<double> raw_action;
  std::vector<double> action;   // raw_action clamped to [-S, S]
  double log_prob = 0.0;
};

struct PolicyOutput {
  HeadKind kind = HeadKind::discrete;
  std::vector<UavDecision> decisions;
  double joint_log_prob = 0.0;
};

struct OutputHead {
  DiffArray wq;       // d x K, shared by every UAV
  DiffArray log_std;  // 1 x K, continuous only, relative to action_scale
};

using NamedParameter = std::pair<std::string, DiffArray>;

/// Parameters are shared handles. Copying is disabled so that two models never
/// alias the same buffers by accident; use clone() for an independent copy.
class MaitModel {
 public:
  MaitModel() = default;
  MaitModel(const MaitModel&) = delete;
  MaitModel& operator=(const MaitModel&) = delete;
  MaitModel(MaitModel&&) = default;
  MaitModel& operator=(MaitModel&&) = default;

  MaitConfig config;
  DiffArray state_proj;  // d_in x d
  DiffArray temporal;    // max_steps x d
  DiffArray identity;    // max_nodes x d
  std::vector<EncoderLayer> layers;
  DiffArray final_norm;  // 1 x d
  OutputHead head;

  MaitModel clone() const;
  /// Every trainable array with a stable dotted name, in a fixed order.
  std::vector<NamedParameter> parameters() const;
  std::size_t attention_count() const;
  std::size_t mamba_count() const { return layers.size() - attention_count(); }
};

/// Seed-deterministic initialization. Throws ConfigError on an invalid config.
MaitModel build_model(const MaitConfig& config, std::uint64_t seed);

/// Row i = x_i W_s + p_t + b_{id(i)}.
DiffArray embed(const MaitModel& model, const NodeSequence& seq);
/// Embedding, every layer, final RMSNorm. N x d.
DiffArray encode(const MaitModel& model, const NodeSequence& seq, SsmPath path = SsmPath::scan);
/// Rows of `hidden` in the given order, M x d.
DiffArray gather_rows(const DiffArray& hidden, std::span<const std::size_t> rows);

/// M x K logits for the given UAV hidden rows.
DiffArray discrete_logits(const MaitModel& model, const DiffArray& uav_hidden);
/// Row softmax with -inf masking. Throws NumericError("no feasible stop point")
/// when a row is fully masked.
DiffArray discrete_head(const MaitModel& model, const DiffArray& uav_hidden,
                        std::span<const std::uint8_t> masks);
DiffArray discrete_log_probs(const MaitModel& model, const DiffArray& uav_hidden,
                             std::span<const std::uint8_t> masks);

struct Selection {
  std::size_t index = 0;
  double log_prob = 0.0;
};
/// Greedy picks the argmax (lowest index on ties); sample draws from probs.
Selection select_discrete(std::span<const double> probs, ActMode mode, Rng& rng);

/// Diagonal Gaussian policy: mean = tanh(H W^Q) * S (M x K), log_std the
/// absolute log standard deviation (1 x K).
struct GaussianHead {
  DiffArray mean;
  DiffArray log_std;
};
GaussianHead continuous_head(const MaitModel& model, const DiffArray& uav_hidden);

/// log N(x; mean, exp(log_std)^2) summed over the last axis, M x 1.
DiffArray gaussian_log_prob(const DiffArray& x, const DiffArray& mean, const DiffArray& log_std);
double gaussian_log_prob(std::span<const double> x, std::span<const double> mean,
                         std::span<const double> log_std);

/// Full policy step. Value-only; call under a TapeScope from the trainer when
/// gradients are needed through encode/heads instead.
PolicyOutput forward(const MaitModel& model, const PolicyInput& input, ActMode mode, Rng& rng);

/// Text checkpoint with the config and every named parameter.
void save_checkpoint(const MaitModel& model, std::ostream& out);
void save_checkpoint(const MaitModel& model, const std::string& path);
MaitModel load_checkpoint(std::istream& in);
MaitModel load_checkpoint(const std::string& path);

}  // namespace mait::model
