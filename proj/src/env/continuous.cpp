#include "mait/env/continuous.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mait/num/random.hpp"

namespace mait::env {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap_angle(double a) {
  a = std::fmod(a, kTwoPi);
  return a < 0.0 ? a + kTwoPi : a;
}

void draw_tasks(ContinuousWorld& w) {
  const auto& p = w.params;
  Rng rng(derive_seed(w.task_seed, "tasks", w.slot));
  w.task_kb.resize(w.n());
  w.task_cycles.resize(w.n());
  for (std::size_t i = 0; i < w.n(); ++i) {
    w.task_kb[i] = rng.uniform(p.task_kb_min, p.task_kb_max);
    w.task_cycles[i] = rng.uniform(p.cycles_min, p.cycles_max);
  }
}

}  // namespace

void reset_continuous(ContinuousWorld& w, std::uint64_t task_seed) {
  const auto& p = w.params;
  w.task_seed = task_seed;
  w.slot = 0;
  for (std::size_t j = 0; j < w.m(); ++j) {
    w.uavs[j].pos = {p.area / 2, p.area / 2};
    w.uavs[j].heading = kTwoPi * static_cast<double>(j) / static_cast<double>(w.m());
    w.uavs[j].energy_j = p.uav_energy;
  }
  draw_tasks(w);
}

ContinuousWorld make_continuous_world(std::vector<Point> ue, std::size_t m_uav, const ContinuousParams& params) {
  if (ue.empty() || m_uav == 0) throw EnvError("continuous world needs at least one UE and one UAV");
  if (params.slots == 0) throw EnvError("continuous world needs at least one slot");
  ContinuousWorld w;
  w.params = params;
  w.ue = std::move(ue);
  w.uavs.resize(m_uav);
  reset_continuous(w, 0);
  return w;
}

ContinuousWorld make_continuous_world(std::size_t n_ue, std::size_t m_uav, std::uint64_t seed,
                                      const ContinuousParams& params) {
  Rng rng(derive_seed(seed, "continuous-world"));
  std::vector<Point> ue(n_ue);
  for (auto& p : ue) {
    p.x = rng.uniform(0.0, params.area);
    p.y = rng.uniform(0.0, params.area);
  }
  auto w = make_continuous_world(std::move(ue), m_uav, params);
  w.seed = seed;
  reset_continuous(w, seed);
  return w;
}

double uplink_rate(const ContinuousParams& p, double ground_dist, std::size_t served) {
  if (served == 0) throw EnvError("uplink rate with zero bandwidth share");
  const double snr = p.p_tx * p.g0 / (p.noise_w * (p.altitude * p.altitude + ground_dist * ground_dist));
  const double rate = p.bandwidth / static_cast<double>(served) * std::log2(1.0 + snr);
  if (!std::isfinite(rate) || rate <= 0.0) throw EnvError(fmt::format("non-finite uplink rate {}", rate));
  return rate;
}

double offload_energy(const ContinuousParams& p, double task_kb, double rate) {
  return p.p_tx * (task_kb * 1024.0 * 8.0) / rate;
}

double local_energy(const ContinuousParams& p, double cycles) { return p.k_switch * cycles * p.f_ue * p.f_ue; }

OffloadPlan plan_offloading(const ContinuousWorld& w) {
  const auto& p = w.params;
  const std::size_t n = w.n();
  std::vector<std::size_t> nearest(n, 0);
  std::vector<double> dist(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    dist[i] = distance(w.ue[i], w.uavs[0].pos);
    for (std::size_t j = 1; j < w.m(); ++j) {
      const double d = distance(w.ue[i], w.uavs[j].pos);
      if (d < dist[i]) {
        dist[i] = d;
        nearest[i] = j;
      }
    }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });

  std::vector<std::vector<std::size_t>> served(w.m());
  std::vector<double> cycles(w.m(), 0.0);
  for (std::size_t i : order) {
    const std::size_t j = nearest[i];
    if (dist[i] > p.coverage || served[j].size() >= p.max_tasks) continue;
    if (cycles[j] + w.task_cycles[i] > p.cycle_budget()) continue;
    const std::size_t share = served[j].size() + 1;
    auto cheaper = [&](std::size_t v) {
      return offload_energy(p, w.task_kb[v], uplink_rate(p, dist[v], share)) < local_energy(p, w.task_cycles[v]);
    };
    if (!cheaper(i) || !std::all_of(served[j].begin(), served[j].end(), cheaper)) continue;
    served[j].push_back(i);
    cycles[j] += w.task_cycles[i];
  }

  OffloadPlan plan;
  plan.server.assign(n, -1);
  plan.energy.resize(n);
  for (std::size_t i = 0; i < n; ++i) plan.energy[i] = local_energy(p, w.task_cycles[i]);
  for (std::size_t j = 0; j < w.m(); ++j) {
    for (std::size_t i : served[j]) {
      plan.server[i] = static_cast<int>(j);
      plan.energy[i] = offload_energy(p, w.task_kb[i], uplink_rate(p, dist[i], served[j].size()));
    }
  }
  return plan;
}

StepOutcome continuous_step(ContinuousWorld& w, const std::vector<std::vector<double>>& moves) {
  const auto& p = w.params;
  if (w.slot >= p.slots) throw EnvError("step on a finished episode");
  if (moves.size() != w.m()) throw EnvError(fmt::format("expected moves for {} UAVs, got {}", w.m(), moves.size()));

  StepOutcome out;
  out.events.resize(w.m());
  for (std::size_t j = 0; j < w.m(); ++j) {
    if (moves[j].size() != 2) throw EnvError(fmt::format("UAV {} move needs (distance, turn)", j));
    double d = moves[j][0], turn = moves[j][1];
    if (!std::isfinite(d) || !std::isfinite(turn)) throw EnvError(fmt::format("UAV {} move is not finite", j));
    if (std::abs(d) > p.d_max || std::abs(turn) > p.theta_max) out.clamped = true;
    d = std::clamp(d, -p.d_max, p.d_max);
    turn = std::clamp(turn, -p.theta_max, p.theta_max);

    auto& uav = w.uavs[j];
    uav.heading = wrap_angle(uav.heading + turn);
    const Point from = uav.pos;
    uav.pos.x = std::clamp(from.x + d * std::cos(uav.heading), 0.0, p.area);
    uav.pos.y = std::clamp(from.y + d * std::sin(uav.heading), 0.0, p.area);
    uav.energy_j = std::max(0.0, uav.energy_j - p.fly_j_per_m * distance(from, uav.pos));

    auto& ev = out.events[j];
    ev.uav = j;
    ev.action = fmt::format("{};{}", d, turn);
    ev.x = uav.pos.x;
    ev.y = uav.pos.y;
  }

  auto plan = plan_offloading(w);
  for (std::size_t i = 0; i < w.n(); ++i) {
    if (plan.server[i] >= 0) {
      out.events[static_cast<std::size_t>(plan.server[i])].energy.offload += plan.energy[i];
    } else {
      out.events[0].energy.local += plan.energy[i];
    }
  }
  for (const auto& ev : out.events) out.info += ev.energy;

  ++w.slot;
  if (w.slot < p.slots) draw_tasks(w);
  out.reward = -out.info.total();
  out.done = w.slot >= p.slots;
  return out;
}

model::PolicyInput observe(const ContinuousWorld& w) {
  const auto& p = w.params;
  const std::size_t n = w.n(), m = w.m();
  model::PolicyInput in;
  auto& s = in.nodes;
  s.count = n + m;
  s.width = 4;
  s.time = w.slot;
  s.features.reserve(s.count * 4);
  for (std::size_t i = 0; i < n; ++i) {
    s.features.insert(s.features.end(),
                      {w.ue[i].x / p.area, w.ue[i].y / p.area,
                       (w.task_kb[i] - p.task_kb_min) / (p.task_kb_max - p.task_kb_min),
                       (w.task_cycles[i] - p.cycles_min) / (p.cycles_max - p.cycles_min)});
  }
  for (const auto& u : w.uavs) {
    s.features.insert(s.features.end(),
                      {u.pos.x / p.area, u.pos.y / p.area, u.heading / kTwoPi, u.energy_j / p.uav_energy});
  }
  for (std::size_t i = 0; i < n + m; ++i) s.ids.push_back(i);
  for (std::size_t j = 0; j < m; ++j) in.uav_rows.push_back(n + j);
  return in;
}

ContinuousRawState denormalize(const model::NodeSequence& seq, std::size_t n_ue, const ContinuousParams& p) {
  if (seq.width != 4 || seq.count < n_ue) throw EnvError("sequence does not match a continuous observation");
  ContinuousRawState raw;
  for (std::size_t i = 0; i < n_ue; ++i) {
    raw.ue.push_back({seq.at(i, 0) * p.area, seq.at(i, 1) * p.area});
    raw.task_kb.push_back(p.task_kb_min + seq.at(i, 2) * (p.task_kb_max - p.task_kb_min));
    raw.task_cycles.push_back(p.cycles_min + seq.at(i, 3) * (p.cycles_max - p.cycles_min));
  }
  for (std::size_t r = n_ue; r < seq.count; ++r) {
    raw.uav_pos.push_back({seq.at(r, 0) * p.area, seq.at(r, 1) * p.area});
    raw.heading.push_back(seq.at(r, 2) * kTwoPi);
    raw.energy_j.push_back(seq.at(r, 3) * p.uav_energy);
  }
  return raw;
}

void ContinuousEnv::reset(std::uint64_t episode_seed) {
  world_ = initial_;
  reset_continuous(world_, episode_seed);
}

}  // namespace mait::env
