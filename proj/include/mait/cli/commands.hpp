#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mait/env/episode.hpp"
#include "mait/model/model.hpp"
#include "mait/num/gradcheck.hpp"
#include "mait/num/tape.hpp"
#include "mait/profile/profile.hpp"

namespace mait::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

inline constexpr const char* kTrainLogHeader =
    "iteration,mean_return,min_return,max_return,loss,mean_kl,mean_abs_ratio_dev,seconds";

struct TrainOptions {
  std::string profile;
  std::string out_dir;
  std::vector<std::string> overrides;  // section.key=value
  bool record_time = false;            // wall-clock column, breaks byte-identical logs
};

struct EvalOptions {
  std::string profile;
  std::string checkpoint;  // ignored with a baseline
  std::string out_dir;     // empty: no trajectory files
  std::vector<std::string> overrides;
  std::size_t episodes = 10;
  model::ActMode mode = model::ActMode::greedy;
  std::optional<env::BaselineKind> baseline;
};

struct OracleOptions {
  std::string instance;  // instance file, or
  std::string profile;   // a profile whose world is used
  std::string out_dir;
  std::vector<std::string> overrides;
};

struct GradcheckOptions {
  std::string profile;
  std::vector<std::string> overrides;
  double tolerance = 1e-4;
  double step = 1e-5;
  /// Test fixture: scale the backward rule of this primitive by 1.5.
  std::optional<std::string> corrupt_op;
};

int cmd_train(const TrainOptions& options, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalOptions& options, std::ostream& out, std::ostream& err);
int cmd_oracle(const OracleOptions& options, std::ostream& out, std::ostream& err);
int cmd_gradcheck(const GradcheckOptions& options, std::ostream& out, std::ostream& err);
int cmd_validate_profile(const std::string& profile, const std::vector<std::string>& overrides, std::ostream& out,
                         std::ostream& err);

// Building blocks shared with the acceptance suite.

/// Reads, overrides and validates. Throws ProfileError with the report.
class ProfileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
profile::TaskProfile load_profile(const std::string& path, const std::vector<std::string>& overrides);

std::string format_log_row(const grpo::IterationRecord& r);

struct EvalSummary {
  std::vector<double> energies;  // total per episode
  std::size_t violations = 0;
  double mean = 0.0;
  double std = 0.0;  // population
};
/// Runs `episodes` episodes on clones of `env`; episode e uses
/// derive_seed(seed, "eval", e). `make_policy(e, rng)` supplies the policy.
EvalSummary evaluate(const env::Environment& env, std::size_t episodes, std::uint64_t seed,
                     const std::function<env::Policy(std::size_t, Rng&)>& make_policy,
                     const std::string& traj_dir = {});

/// Constraint breaches visible in the world after an episode.
std::size_t count_violations(const env::Environment& env);

/// Model/environment shape mismatches, empty when compatible.
std::vector<std::string> compatibility_problems(const model::MaitConfig& config, const env::Environment& env);

/// Gradient check of the policy loss on a toy-sized version of the profile,
/// for both SSM modes. Block names are prefixed with the mode.
std::vector<num::GradReport> gradcheck_profile(const profile::DerivedConfigs& derived, double step, double tolerance);

/// 64-bit FNV-1a of a file's bytes, as 16 hex digits.
std::string file_checksum(const std::string& path);

}  // namespace mait::cli
