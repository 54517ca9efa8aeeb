#include "mait/env/discrete.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "mait/num/random.hpp"

namespace mait::env {

double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

double flight_energy(const DiscreteParams& p, double meters) { return p.p_fly * (meters / p.speed); }

double collection_time(const DiscreteParams& p, double data_mb) { return data_mb * 1024.0 / p.rate_kb_s; }

Energy visit_energy(const DiscreteParams& p, Point from, Point device, double data_mb) {
  const double tc = collection_time(p, data_mb);
  Energy e;
  e.fly = flight_energy(p, distance(from, device));
  e.hover = (p.p_hover + p.p_collect) * tc;
  e.charge = p.p_wpt * tc;
  return e;
}

namespace {

bool has_feasible_stop(const DiscreteWorld& w, std::size_t u) {
  auto mask = feasibility_mask(w, u);
  return std::any_of(mask.begin(), mask.end(), [](std::uint8_t v) { return v != 0; });
}

UavEvent return_home(DiscreteWorld& w, std::size_t u) {
  auto& uav = w.uavs[u];
  const Point depot = w.params.depot();
  const double dist = distance(uav.pos, depot);
  UavEvent ev;
  ev.uav = u;
  ev.action = "depot";
  ev.energy.fly = flight_energy(w.params, dist);
  uav.energy_j = std::max(0.0, uav.energy_j - ev.energy.fly);  // covered by the mask's reserve
  uav.elapsed_s += dist / w.params.speed;
  uav.pos = depot;
  uav.retired = true;
  ev.x = uav.pos.x;
  ev.y = uav.pos.y;
  return ev;
}

// Retires every UAV that cannot continue; all of them once the devices are done.
void settle(DiscreteWorld& w, StepOutcome& out) {
  const bool all_visited = std::all_of(w.visited.begin(), w.visited.end(), [](std::uint8_t v) { return v; });
  for (std::size_t u = 0; u < w.m(); ++u) {
    if (w.uavs[u].retired) continue;
    if (all_visited || !has_feasible_stop(w, u)) {
      auto ev = return_home(w, u);
      out.info += ev.energy;
      out.events.push_back(std::move(ev));
    }
  }
}

}  // namespace

DiscreteWorld make_discrete_world(std::vector<Point> iotd, std::vector<double> data_mb, std::size_t m_uav,
                                  const DiscreteParams& params) {
  if (iotd.empty() || m_uav == 0) throw EnvError("discrete world needs at least one device and one UAV");
  if (iotd.size() != data_mb.size()) throw EnvError("device positions and data amounts differ in length");
  DiscreteWorld w;
  w.params = params;
  w.iotd = std::move(iotd);
  w.data_mb = std::move(data_mb);
  w.visited.assign(w.n(), 0);
  w.visited_by.assign(w.n(), -1);
  w.uavs.resize(m_uav);
  for (auto& u : w.uavs) {
    u.pos = params.depot();
    u.storage_mb = params.storage_mb;
    u.energy_j = params.battery_j();
  }
  StepOutcome unused;
  settle(w, unused);  // UAVs that cannot fly at all retire at the depot for free
  return w;
}

DiscreteWorld make_discrete_world(std::size_t n_iotd, std::size_t m_uav, std::uint64_t seed,
                                  const DiscreteParams& params) {
  Rng rng(derive_seed(seed, "discrete-world"));
  std::vector<Point> pos(n_iotd);
  std::vector<double> data(n_iotd);
  for (std::size_t i = 0; i < n_iotd; ++i) {
    pos[i].x = rng.uniform(0.0, params.area);
    pos[i].y = rng.uniform(0.0, params.area);
    data[i] = rng.uniform(params.data_min_mb, params.data_max_mb);
  }
  auto w = make_discrete_world(std::move(pos), std::move(data), m_uav, params);
  w.seed = seed;
  return w;
}

bool discrete_done(const DiscreteWorld& w) {
  const bool all_visited = std::all_of(w.visited.begin(), w.visited.end(), [](std::uint8_t v) { return v; });
  const bool all_retired = std::all_of(w.uavs.begin(), w.uavs.end(), [](const Uav& u) { return u.retired; });
  return all_visited || all_retired;
}

std::size_t acting_uav(const DiscreteWorld& w) {
  std::size_t best = w.m();
  for (std::size_t u = 0; u < w.m(); ++u) {
    if (w.uavs[u].retired) continue;
    if (best == w.m() || w.uavs[u].elapsed_s < w.uavs[best].elapsed_s) best = u;
  }
  if (best == w.m()) throw EnvError("no active UAV: episode is over");
  return best;
}

std::vector<std::uint8_t> feasibility_mask(const DiscreteWorld& w, std::size_t u) {
  std::vector<std::uint8_t> mask(w.n(), 0);
  const auto& uav = w.uavs.at(u);
  if (uav.retired) return mask;
  const Point depot = w.params.depot();
  for (std::size_t i = 0; i < w.n(); ++i) {
    if (w.visited[i] || w.data_mb[i] > uav.storage_mb) continue;
    const double need = visit_energy(w.params, uav.pos, w.iotd[i], w.data_mb[i]).total() +
                        flight_energy(w.params, distance(w.iotd[i], depot));
    mask[i] = need <= uav.energy_j;
  }
  return mask;
}

StepOutcome discrete_step(DiscreteWorld& w, std::size_t u, std::size_t stop) {
  if (discrete_done(w)) throw EnvError("step on a finished episode");
  if (u >= w.m()) throw EnvError(fmt::format("UAV {} does not exist", u));
  if (w.uavs[u].retired) throw EnvError(fmt::format("UAV {} is retired", u));
  if (stop >= w.n()) throw EnvError(fmt::format("stop {} outside {} devices", stop, w.n()));
  if (w.visited[stop]) throw EnvError(fmt::format("stop {} was already visited", stop));
  if (!feasibility_mask(w, u)[stop]) throw EnvError(fmt::format("stop {} is masked for UAV {}", stop, u));

  auto& uav = w.uavs[u];
  StepOutcome out;
  UavEvent ev;
  ev.uav = u;
  ev.action = std::to_string(stop);
  ev.energy = visit_energy(w.params, uav.pos, w.iotd[stop], w.data_mb[stop]);
  uav.elapsed_s += distance(uav.pos, w.iotd[stop]) / w.params.speed + collection_time(w.params, w.data_mb[stop]);
  uav.pos = w.iotd[stop];
  uav.storage_mb -= w.data_mb[stop];
  uav.collected_mb += w.data_mb[stop];
  uav.energy_j -= ev.energy.total();
  w.visited[stop] = 1;
  w.visited_by[stop] = static_cast<int>(u);
  ev.x = uav.pos.x;
  ev.y = uav.pos.y;
  out.info += ev.energy;
  out.events.push_back(std::move(ev));

  settle(w, out);
  ++w.steps;
  out.reward = -out.info.total();
  out.done = discrete_done(w);
  return out;
}

model::PolicyInput observe(const DiscreteWorld& w) {
  const auto& p = w.params;
  const std::size_t n = w.n(), m = w.m();
  model::PolicyInput in;
  auto& s = in.nodes;
  s.count = n + m;
  s.width = 4;
  s.time = w.steps;
  s.features.reserve(s.count * 4);
  for (std::size_t i = 0; i < n; ++i) {
    const double remaining = w.visited[i] ? 0.0 : w.data_mb[i];
    s.features.insert(s.features.end(),
                      {w.iotd[i].x / p.area, w.iotd[i].y / p.area, remaining / p.data_max_mb,
                       static_cast<double>(w.visited[i])});
  }
  for (const auto& u : w.uavs) {
    s.features.insert(s.features.end(),
                      {u.pos.x / p.area, u.pos.y / p.area, u.storage_mb / p.storage_mb, u.energy_j / p.battery_j()});
  }
  for (std::size_t i = 0; i < n + m; ++i) s.ids.push_back(i);
  if (!discrete_done(w)) {
    const std::size_t u = acting_uav(w);
    in.uav_rows = {n + u};
    in.masks = feasibility_mask(w, u);
  }
  return in;
}

DiscreteRawState denormalize(const model::NodeSequence& seq, std::size_t n_iotd, const DiscreteParams& p) {
  if (seq.width != 4 || seq.count < n_iotd) throw EnvError("sequence does not match a discrete observation");
  DiscreteRawState raw;
  for (std::size_t i = 0; i < n_iotd; ++i) {
    raw.iotd.push_back({seq.at(i, 0) * p.area, seq.at(i, 1) * p.area});
    raw.remaining_mb.push_back(seq.at(i, 2) * p.data_max_mb);
    raw.visited.push_back(seq.at(i, 3) != 0.0);
  }
  for (std::size_t r = n_iotd; r < seq.count; ++r) {
    raw.uav_pos.push_back({seq.at(r, 0) * p.area, seq.at(r, 1) * p.area});
    raw.storage_mb.push_back(seq.at(r, 2) * p.storage_mb);
    raw.energy_j.push_back(seq.at(r, 3) * p.battery_j());
  }
  return raw;
}

StepOutcome DiscreteEnv::step(const JointAction& action) {
  if (action.stops.size() != 1) throw EnvError("discrete step expects exactly one stop for the acting UAV");
  return discrete_step(world_, acting_uav(world_), action.stops[0]);
}

}  // namespace mait::env
