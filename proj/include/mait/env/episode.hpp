#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include "mait/env/continuous.hpp"
#include "mait/env/discrete.hpp"
#include "mait/num/random.hpp"

namespace mait::env {

struct EpisodeLog {
  std::vector<StepOutcome> steps;
  double total_reward = 0.0;
  Energy energy;

  void append(StepOutcome s) {
    total_reward += s.reward;
    energy += s.info;
    steps.push_back(std::move(s));
  }
};

using Policy = std::function<JointAction(const model::PolicyInput&)>;

/// Resets `env` with `episode_seed` and steps it with `policy` until done.
EpisodeLog run_episode(Environment& env, const Policy& policy, std::uint64_t episode_seed);

enum class BaselineKind { random, greedy_nearest };
const char* to_string(BaselineKind kind);

/// random: a uniform feasible stop, or a uniform move inside the limits.
/// greedy_nearest: the closest feasible stop (lowest index on ties), or no move.
Policy baseline_policy(BaselineKind kind, const Environment& env, Rng& rng);

struct TourResult {
  bool feasible = false;
  std::vector<std::size_t> order;
  double energy = 0.0;  // including the flight back to the depot
};

inline constexpr std::size_t kBruteForceLimit = 10;

/// Exhaustive search over visit orders for a single UAV, simulating every
/// step with discrete_step. Throws EnvError beyond kBruteForceLimit devices or
/// for more than one UAV. Among orders within 1e-9 relative energy of the best,
/// the lexicographically smallest wins.
TourResult brute_force_tour(const DiscreteWorld& world);
/// Total energy of one complete visit order, or +inf if the order is infeasible.
double tour_energy(const DiscreteWorld& world, const std::vector<std::size_t>& order);

// ---------------------------------------------------------------------------
// files

using Instance = std::variant<DiscreteWorld, ContinuousWorld>;

void write_instance(std::ostream& out, const DiscreteWorld& world);
void write_instance(std::ostream& out, const ContinuousWorld& world);
Instance read_instance(std::istream& in);
Instance read_instance_file(const std::string& path);
void write_instance_file(const std::string& path, const Instance& inst);

/// Header of trajectory files.
inline constexpr const char* kTrajectoryHeader = "step,uav,action,x,y,reward,e_fly,e_hover,e_charge";

/// One row per UAV event. Continuous rows report transmission energy under
/// e_hover and local computing energy under e_charge.
void write_trajectory_csv(std::ostream& out, const EpisodeLog& log);
void write_trajectory_csv(const std::string& path, const EpisodeLog& log);

/// Named numeric field of a parameter set, for files and overrides.
struct ParamField {
  std::string name;
  std::function<double()> get;
  std::function<void(double)> set;  // throws EnvError on an unusable value
};
std::vector<ParamField> parameter_fields(DiscreteParams& p);
std::vector<ParamField> parameter_fields(ContinuousParams& p);

}  // namespace mait::env
