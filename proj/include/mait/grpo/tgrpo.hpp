#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mait/env/episode.hpp"
#include "mait/model/model.hpp"

namespace mait::grpo {

using num::DiffArray;

struct TrainConfig {
  std::size_t group_size = 4;   // G
  double gamma = 1.0;
  double clip_eps = 0.2;
  double kl_coef = 0.04;        // lambda
  double delta = 1e-8;          // std stabilizer
  double learning_rate = 3e-4;
  std::size_t epochs = 4;       // updates per sampled group
  std::size_t iterations = 100;
  std::uint64_t seed = 0;

  bool operator==(const TrainConfig&) const = default;
};

std::vector<std::string> config_violations(const TrainConfig& config);
/// Throws std::invalid_argument listing every violation.
void validate(const TrainConfig& config);

/// One decision step with the sampling policy's statistics cached.
struct StepRecord {
  model::PolicyInput input;
  env::JointAction action;
  double reward = 0.0;
  double logp_old = 0.0;               // joint, summed over acting UAVs
  // discrete: acting UAVs x K, masked entries 0
  std::vector<std::size_t> choices;
  std::vector<double> old_probs;
  std::vector<double> old_log_probs;
  // continuous: acting UAVs x K
  std::vector<double> raw_actions;
  std::vector<double> old_mean;
  std::vector<double> old_log_std;     // K, absolute
};

struct RolloutTrajectory {
  std::vector<StepRecord> steps;
  double total_energy = 0.0;

  std::vector<double> rewards() const;
};

struct GroupBatch {
  std::vector<RolloutTrajectory> trajectories;
  std::vector<double> returns;
  std::vector<double> advantages;
  double mean_return = 0.0;
  double std_return = 0.0;
};

/// G trajectories from the same initial state (env.reset(episode_seed)), each
/// with its own policy rng derived from `seed`. Returns/advantages unfilled.
GroupBatch rollout_group(const env::Environment& env, const model::MaitModel& model, model::ActMode mode,
                         std::size_t group_size, std::uint64_t seed, std::uint64_t episode_seed);

/// sum_t gamma^t r_t, accumulated in order.
double compute_return(std::span<const double> rewards, double gamma);

struct Advantages {
  std::vector<double> values;
  double mean = 0.0;
  double std = 0.0;  // sqrt(population variance + delta)
};
Advantages group_advantages(std::span<const double> returns, double delta);
/// Fills returns and advantages of `batch`.
void score_group(GroupBatch& batch, const TrainConfig& config);

double policy_ratio(double logp_new, double logp_old);
double clipped_term(double ratio, double advantage, double eps);

struct StepTerms {
  DiffArray logp_new;  // scalar, joint over acting UAVs
  DiffArray kl;        // scalar, KL(old || new) summed over acting UAVs
};
/// Differentiable log-probability of the recorded action and KL to the cached
/// sampling policy, both under the current parameters.
StepTerms step_terms(const model::MaitModel& model, const StepRecord& step);

struct LossResult {
  DiffArray loss;
  double mean_kl = 0.0;             // per step
  double mean_abs_ratio_dev = 0.0;  // per step
  std::size_t steps = 0;
};
/// -(1/G) sum_j sum_t min(r A, clip(r) A) + lambda (1/G) sum_j sum_t KL.
/// Throws NumericError naming the trajectory and step on a non-finite term.
LossResult total_loss(const GroupBatch& batch, const model::MaitModel& model, const TrainConfig& config);

/// Bias-corrected adaptive-moment optimizer over a fixed parameter list.
class Adam {
 public:
  Adam(std::vector<DiffArray> params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  /// Applies one update from the accumulated gradients, then clears them.
  void step();
  void zero_grad();
  std::size_t steps_taken() const { return t_; }

 private:
  std::vector<DiffArray> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kMaxMeanRatioDeviation = 10.0;

struct IterationRecord {
  std::size_t iteration = 0;
  double mean_return = 0.0;
  double min_return = 0.0;
  double max_return = 0.0;
  double loss = 0.0;
  double mean_kl = 0.0;
  double mean_abs_ratio_dev = 0.0;
  double seconds = 0.0;
};

struct TrainHooks {
  /// Called after every iteration's update.
  std::function<void(const IterationRecord&, const model::MaitModel&)> on_iteration;
  /// Wall-clock seconds are recorded only when set; zero keeps logs reproducible.
  bool record_time = false;
};

/// Sample a group, score it, take `epochs` loss/gradient steps, repeat.
/// Throws DivergenceError when the mean |ratio - 1| exceeds the limit or the
/// loss is not finite.
std::vector<IterationRecord> train(const env::Environment& env, model::MaitModel& model, const TrainConfig& config,
                                   const TrainHooks& hooks = {});

/// Adapts the model to an environment policy. Decisions go to the UAVs in
/// observation order; continuous moves are the clamped actions.
env::Policy model_policy(const model::MaitModel& model, model::ActMode mode, Rng& rng);

}  // namespace mait::grpo
