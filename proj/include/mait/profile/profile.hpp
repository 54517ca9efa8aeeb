#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "mait/env/continuous.hpp"
#include "mait/env/discrete.hpp"
#include "mait/env/episode.hpp"
#include "mait/grpo/tgrpo.hpp"
#include "mait/model/config.hpp"

namespace mait::profile {

enum class EnvKind { discrete_collect, continuous_mec };
const char* to_string(EnvKind kind);

/// Thrown by the parser. `line` and `column` are 1-based; 0 means the whole file.
class ProfileSyntaxError : public std::runtime_error {
 public:
  ProfileSyntaxError(std::size_t line, std::size_t column, const std::string& message);
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_, column_;
};

struct TaskSection {
  std::string name;
  EnvKind environment = EnvKind::discrete_collect;
  std::size_t nodes = 0;
  std::size_t uavs = 0;
  std::uint64_t world_seed = 0;
  /// `env.<parameter> = value` overrides, in the environment's parameter order.
  std::vector<std::pair<std::string, double>> env_overrides;

  bool operator==(const TaskSection&) const = default;
};

struct ActionSection {
  model::HeadKind kind = model::HeadKind::discrete;
  /// Candidate stops (discrete) or action dimensions (continuous).
  std::size_t width = 0;

  bool operator==(const ActionSection&) const = default;
};

struct ArchitectureSection {
  std::size_t layers = 0;
  double attn_ratio = 0.0;
  std::size_t d_model = 0;
  std::size_t heads = 0;
  std::optional<std::size_t> d_state;
  std::optional<std::size_t> mlp_mult;
  std::optional<model::SsmMode> ssm_mode;

  bool operator==(const ArchitectureSection&) const = default;
};

/// Omitted keys stay empty here and take the trainer defaults when derived.
struct TrainingSection {
  std::optional<std::size_t> group_size;
  std::optional<double> gamma;
  std::optional<double> clip_eps;
  std::optional<double> kl_coef;
  std::optional<double> delta;
  std::optional<double> learning_rate;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> iterations;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> checkpoint_every;

  bool operator==(const TrainingSection&) const = default;
};

struct Constraint {
  std::string name;
  double value = 0.0;

  bool operator==(const Constraint&) const = default;
};

struct TaskProfile {
  TaskSection task;
  std::vector<std::string> state;
  ActionSection action;
  std::string reward;
  ArchitectureSection architecture;
  TrainingSection training;
  std::vector<Constraint> constraints;

  bool operator==(const TaskProfile&) const = default;
};

TaskProfile parse_profile(const std::string& text);
TaskProfile read_profile_file(const std::string& path);
/// Canonical text; parse_profile(serialize_profile(p)) == p.
std::string serialize_profile(const TaskProfile& profile);

/// Applies `section.key=value` as if the line had been written in the file.
void apply_override(TaskProfile& profile, const std::string& assignment);

struct Issue {
  std::string path;
  std::string message;
};

struct ValidationReport {
  std::vector<Issue> errors;
  std::vector<Issue> warnings;

  bool ok() const { return errors.empty(); }
  std::string to_string() const;
};

ValidationReport validate(const TaskProfile& profile);

/// Recognized names for the target environment.
std::vector<std::string> state_fields(EnvKind kind);
std::vector<std::string> constraint_names(EnvKind kind);
std::string reward_id(EnvKind kind);

struct EnvSpec {
  EnvKind kind = EnvKind::discrete_collect;
  std::size_t nodes = 0;
  std::size_t uavs = 0;
  std::uint64_t world_seed = 0;
  std::variant<env::DiscreteParams, env::ContinuousParams> params;

  bool operator==(const EnvSpec&) const = default;
};

struct DerivedConfigs {
  model::MaitConfig model;
  grpo::TrainConfig train;
  EnvSpec env;
  std::size_t checkpoint_every = 0;  // 0: final checkpoint only
  std::vector<Issue> warnings;
};

/// Throws std::invalid_argument carrying the report when validation fails.
DerivedConfigs derive_configs(const TaskProfile& profile);

env::Instance make_instance(const EnvSpec& spec);
std::unique_ptr<env::Environment> make_environment(const env::Instance& instance);
std::unique_ptr<env::Environment> make_environment(const EnvSpec& spec);

}  // namespace mait::profile
