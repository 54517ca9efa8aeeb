#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "mait/model/config.hpp"
#include "mait/model/model.hpp"

namespace mait::env {

class EnvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Energy ledger of one step or one UAV event, in joules. Discrete worlds use
/// fly/hover/charge; continuous worlds charge UE energy to offload/local.
struct Energy {
  double fly = 0.0;
  double hover = 0.0;
  double charge = 0.0;
  double offload = 0.0;
  double local = 0.0;

  double total() const { return fly + hover + charge + offload + local; }
  Energy& operator+=(const Energy& o) {
    fly += o.fly;
    hover += o.hover;
    charge += o.charge;
    offload += o.offload;
    local += o.local;
    return *this;
  }
};

/// What one UAV did during a step: a chosen stop, a move, or a return to the depot.
struct UavEvent {
  std::size_t uav = 0;
  std::string action;
  double x = 0.0;
  double y = 0.0;
  Energy energy;
};

struct StepOutcome {
  double reward = 0.0;
  bool done = false;
  Energy info;
  std::vector<UavEvent> events;
  /// Set when a continuous action had to be clamped.
  bool clamped = false;
};

/// Joint action of the UAVs acting this step, in the order of observe().uav_rows.
struct JointAction {
  std::vector<std::size_t> stops;            // discrete
  std::vector<std::vector<double>> moves;    // continuous: (distance, turn) per UAV
};

class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::unique_ptr<Environment> clone() const = 0;
  /// Back to the initial state. `episode_seed` selects the stochastic task
  /// stream where the world has one; deterministic worlds ignore it.
  virtual void reset(std::uint64_t episode_seed) = 0;
  virtual model::PolicyInput observe() const = 0;
  virtual StepOutcome step(const JointAction& action) = 0;
  virtual bool done() const = 0;

  virtual model::HeadKind action_kind() const = 0;
  virtual std::size_t feature_width() const = 0;
  virtual std::size_t action_width() const = 0;
  virtual std::size_t node_count() const = 0;  // rows in every observation
  virtual std::size_t horizon() const = 0;      // upper bound on steps per episode
  virtual std::vector<double> action_scale() const { return {}; }
};

}  // namespace mait::env
