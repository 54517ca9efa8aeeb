#pragma once

#include <cstdint>
#include <numbers>
#include <vector>

#include "mait/env/discrete.hpp"
#include "mait/env/environment.hpp"

namespace mait::env {

/// UAV-MEC offloading constants. Defaults follow the case-study table.
struct ContinuousParams {
  double area = 400.0;              // m
  std::size_t slots = 60;           // T
  std::size_t max_tasks = 30;       // V^max per UAV per slot
  double d_max = 30.0;              // m per slot
  double theta_max = std::numbers::pi / 4;
  double altitude = 75.0;           // m
  double g0 = 1.42e-4;              // channel gain at 1 m
  double p_tx = 0.1;                // W, UE transmit power
  double bandwidth = 10e6;          // Hz
  double noise_w = 1e-12;           // -90 dBm
  double k_switch = 1e-28;          // effective switched capacitance
  double f_max = 100e9;             // Hz, UAV server
  double t_max = 1.0;               // s
  double coverage = 100.0;          // m ground distance
  double f_ue = 1e9;                // Hz, local CPU
  double task_kb_min = 10.0;
  double task_kb_max = 50.0;
  double cycles_min = 2e9;
  double cycles_max = 2e10;
  double uav_energy = 1e6;          // J
  double fly_j_per_m = 7.5;         // propulsion, outside the UE objective

  double cycle_budget() const { return f_max * t_max; }
  bool operator==(const ContinuousParams&) const = default;
};

struct AerialServer {
  Point pos;
  double heading = 0.0;  // rad, wrapped to [0, 2 pi)
  double energy_j = 0.0;
};

struct ContinuousWorld {
  ContinuousParams params;
  std::uint64_t seed = 0;
  std::uint64_t task_seed = 0;
  std::vector<Point> ue;
  std::vector<AerialServer> uavs;
  std::vector<double> task_kb;      // current slot
  std::vector<double> task_cycles;  // current slot
  std::size_t slot = 0;

  std::size_t n() const { return ue.size(); }
  std::size_t m() const { return uavs.size(); }
};

ContinuousWorld make_continuous_world(std::size_t n_ue, std::size_t m_uav, std::uint64_t seed,
                                      const ContinuousParams& params = {});
ContinuousWorld make_continuous_world(std::vector<Point> ue, std::size_t m_uav, const ContinuousParams& params = {});
/// Rewinds to slot 0 with UAVs at the centre and draws the task stream of `task_seed`.
void reset_continuous(ContinuousWorld& w, std::uint64_t task_seed);

/// Uplink rate in bit/s for one of `served` UEs sharing a UAV's bandwidth.
double uplink_rate(const ContinuousParams& p, double ground_dist, std::size_t served);
double offload_energy(const ContinuousParams& p, double task_kb, double rate);
double local_energy(const ContinuousParams& p, double cycles);

struct OffloadPlan {
  std::vector<int> server;     // UAV per UE, -1 for local execution
  std::vector<double> energy;  // per UE
};
/// Greedy assignment: UEs by distance to their nearest UAV; a UE joins if it is
/// covered, the UAV has task and cycle capacity, and offloading stays cheaper
/// than local execution for every UE the UAV then serves.
OffloadPlan plan_offloading(const ContinuousWorld& w);

/// Moves every UAV by its (distance, turn), clamped to the limits and the area,
/// then settles the slot's tasks. Reward is minus the total UE energy.
StepOutcome continuous_step(ContinuousWorld& w, const std::vector<std::vector<double>>& moves);

/// Node rows: UEs (x, y, task size, cycles) then UAVs (x, y, heading, energy
/// fraction), every feature in [0, 1].
model::PolicyInput observe(const ContinuousWorld& w);

struct ContinuousRawState {
  std::vector<Point> ue;
  std::vector<double> task_kb;
  std::vector<double> task_cycles;
  std::vector<Point> uav_pos;
  std::vector<double> heading;
  std::vector<double> energy_j;
};
ContinuousRawState denormalize(const model::NodeSequence& seq, std::size_t n_ue, const ContinuousParams& params);

class ContinuousEnv : public Environment {
 public:
  explicit ContinuousEnv(ContinuousWorld initial) : initial_(std::move(initial)), world_(initial_) {}

  std::unique_ptr<Environment> clone() const override { return std::make_unique<ContinuousEnv>(*this); }
  void reset(std::uint64_t episode_seed) override;
  model::PolicyInput observe() const override { return env::observe(world_); }
  StepOutcome step(const JointAction& action) override { return continuous_step(world_, action.moves); }
  bool done() const override { return world_.slot >= world_.params.slots; }

  model::HeadKind action_kind() const override { return model::HeadKind::continuous; }
  std::size_t feature_width() const override { return 4; }
  std::size_t action_width() const override { return 2; }
  std::size_t node_count() const override { return initial_.n() + initial_.m(); }
  std::size_t horizon() const override { return initial_.params.slots; }
  std::vector<double> action_scale() const override {
    return {initial_.params.d_max, initial_.params.theta_max};
  }

  const ContinuousWorld& world() const { return world_; }

 private:
  ContinuousWorld initial_;
  ContinuousWorld world_;
};

}  // namespace mait::env
