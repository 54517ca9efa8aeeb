#pragma once

#include <cstdint>
#include <vector>

#include "mait/env/environment.hpp"

namespace mait::env {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

double distance(Point a, Point b);

/// WPT-IoT data collection constants. Defaults follow the case-study table.
struct DiscreteParams {
  double area = 1000.0;          // m, square side
  double data_min_mb = 0.2;
  double data_max_mb = 1.5;
  double rate_kb_s = 1024.0;     // collection rate R
  double p_fly = 75.0;           // W
  double p_hover = 50.0;         // W
  double p_collect = 0.5;        // W, receive circuitry while hovering
  double p_wpt = 50.0;           // W, harvested power phi
  double p_device_tx = 0.5;      // W, kept for completeness, not in the ledger
  double speed = 10.0;           // m/s
  double storage_mb = 150.0;
  double battery_mah = 2550.0;
  double voltage = 15.2;

  double battery_j() const { return battery_mah / 1000.0 * voltage * 3600.0; }
  Point depot() const { return {area / 2, area / 2}; }
  bool operator==(const DiscreteParams&) const = default;
};

struct Uav {
  Point pos;
  double storage_mb = 0.0;  // residual
  double energy_j = 0.0;    // residual
  double elapsed_s = 0.0;
  double collected_mb = 0.0;
  bool retired = false;
};

/// Plain state of a data-collection episode. Copyable.
struct DiscreteWorld {
  DiscreteParams params;
  std::uint64_t seed = 0;
  std::vector<Point> iotd;
  std::vector<double> data_mb;
  std::vector<std::uint8_t> visited;
  std::vector<int> visited_by;  // UAV index, -1 while unvisited
  std::vector<Uav> uavs;
  std::size_t steps = 0;

  std::size_t n() const { return iotd.size(); }
  std::size_t m() const { return uavs.size(); }
};

DiscreteWorld make_discrete_world(std::size_t n_iotd, std::size_t m_uav, std::uint64_t seed,
                                  const DiscreteParams& params = {});
/// World with explicit device positions and data; UAVs at the depot.
DiscreteWorld make_discrete_world(std::vector<Point> iotd, std::vector<double> data_mb, std::size_t m_uav,
                                  const DiscreteParams& params = {});

double flight_energy(const DiscreteParams& p, double meters);
double collection_time(const DiscreteParams& p, double data_mb);
/// Energy for visiting device i from `from`: fly there, hover and recharge it.
Energy visit_energy(const DiscreteParams& p, Point from, Point device, double data_mb);

bool discrete_done(const DiscreteWorld& w);
/// Index of the UAV that decides next: smallest elapsed time, lowest index on ties.
std::size_t acting_uav(const DiscreteWorld& w);
/// Feasible stops for UAV `u`: unvisited, fits in storage, and leaves enough
/// battery to fly there, collect, and return to the depot.
std::vector<std::uint8_t> feasibility_mask(const DiscreteWorld& w, std::size_t u);
/// Sends `uav` to `stop`. Retires UAVs that are left without a feasible stop,
/// and returns everyone home once every device is visited.
StepOutcome discrete_step(DiscreteWorld& w, std::size_t uav, std::size_t stop);

/// Node rows: devices (x, y, remaining data, visited) then UAVs (x, y, storage
/// fraction, battery fraction), every feature in [0, 1].
model::PolicyInput observe(const DiscreteWorld& w);

/// Raw quantities recovered from normalized features.
struct DiscreteRawState {
  std::vector<Point> iotd;
  std::vector<double> remaining_mb;
  std::vector<std::uint8_t> visited;
  std::vector<Point> uav_pos;
  std::vector<double> storage_mb;
  std::vector<double> energy_j;
};
DiscreteRawState denormalize(const model::NodeSequence& seq, std::size_t n_iotd, const DiscreteParams& params);

class DiscreteEnv : public Environment {
 public:
  explicit DiscreteEnv(DiscreteWorld initial) : initial_(std::move(initial)), world_(initial_) {}

  std::unique_ptr<Environment> clone() const override { return std::make_unique<DiscreteEnv>(*this); }
  void reset(std::uint64_t) override { world_ = initial_; }
  model::PolicyInput observe() const override { return env::observe(world_); }
  StepOutcome step(const JointAction& action) override;
  bool done() const override { return discrete_done(world_); }

  model::HeadKind action_kind() const override { return model::HeadKind::discrete; }
  std::size_t feature_width() const override { return 4; }
  std::size_t action_width() const override { return initial_.n(); }
  std::size_t node_count() const override { return initial_.n() + initial_.m(); }
  std::size_t horizon() const override { return initial_.n() + initial_.m(); }

  const DiscreteWorld& world() const { return world_; }
  const DiscreteWorld& initial() const { return initial_; }

 private:
  DiscreteWorld initial_;
  DiscreteWorld world_;
};

}  // namespace mait::env
