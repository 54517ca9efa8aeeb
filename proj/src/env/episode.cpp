#include "mait/env/episode.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace mait::env {

EpisodeLog run_episode(Environment& env, const Policy& policy, std::uint64_t episode_seed) {
  env.reset(episode_seed);
  EpisodeLog log;
  while (!env.done()) log.append(env.step(policy(env.observe())));
  return log;
}

const char* to_string(BaselineKind kind) { return kind == BaselineKind::random ? "random" : "greedy_nearest"; }

Policy baseline_policy(BaselineKind kind, const Environment& env, Rng& rng) {
  if (env.action_kind() == model::HeadKind::continuous) {
    const auto scale = env.action_scale();
    return [kind, scale, &rng](const model::PolicyInput& in) {
      JointAction a;
      for (std::size_t u = 0; u < in.uav_rows.size(); ++u) {
        std::vector<double> move(scale.size(), 0.0);
        if (kind == BaselineKind::random)
          for (std::size_t k = 0; k < scale.size(); ++k) move[k] = rng.uniform(-scale[k], scale[k]);
        a.moves.push_back(std::move(move));
      }
      return a;
    };
  }
  const std::size_t k = env.action_width();
  return [kind, k, &rng](const model::PolicyInput& in) {
    JointAction a;
    for (std::size_t u = 0; u < in.uav_rows.size(); ++u) {
      auto mask = in.mask_row(u, k);
      std::vector<std::size_t> feasible;
      for (std::size_t i = 0; i < k; ++i)
        if (mask[i]) feasible.push_back(i);
      if (feasible.empty()) throw EnvError("baseline: no feasible stop");
      if (kind == BaselineKind::random) {
        a.stops.push_back(feasible[rng.below(feasible.size())]);
        continue;
      }
      // Normalized coordinates share one scale, so nearest is preserved.
      const auto& s = in.nodes;
      const std::size_t row = in.uav_rows[u];
      std::size_t best = feasible.front();
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t i : feasible) {
        const double d = std::hypot(s.at(i, 0) - s.at(row, 0), s.at(i, 1) - s.at(row, 1));
        if (d < best_d) {
          best_d = d;
          best = i;
        }
      }
      a.stops.push_back(best);
    }
    return a;
  };
}

namespace {

bool all_visited(const DiscreteWorld& w) {
  return std::all_of(w.visited.begin(), w.visited.end(), [](std::uint8_t v) { return v != 0; });
}

void search(const DiscreteWorld& w, double spent, std::vector<std::size_t>& path, TourResult& best) {
  if (discrete_done(w)) {
    if (!all_visited(w)) return;
    if (!best.feasible || spent < best.energy * (1.0 - 1e-9)) {
      best.feasible = true;
      best.energy = spent;
      best.order = path;
    }
    return;
  }
  if (best.feasible && spent > best.energy * (1.0 + 1e-9)) return;
  const auto mask = feasibility_mask(w, 0);
  for (std::size_t i = 0; i < w.n(); ++i) {
    if (!mask[i]) continue;
    DiscreteWorld next = w;
    const auto out = discrete_step(next, 0, i);
    path.push_back(i);
    search(next, spent - out.reward, path, best);
    path.pop_back();
  }
}

}  // namespace

TourResult brute_force_tour(const DiscreteWorld& world) {
  if (world.m() != 1) throw EnvError(fmt::format("brute force needs a single UAV, instance has {}", world.m()));
  if (world.n() > kBruteForceLimit) {
    throw EnvError(fmt::format("brute force is limited to {} devices, instance has {}", kBruteForceLimit, world.n()));
  }
  TourResult best;
  std::vector<std::size_t> path;
  search(world, 0.0, path, best);
  return best;
}

double tour_energy(const DiscreteWorld& world, const std::vector<std::size_t>& order) {
  DiscreteWorld w = world;
  double spent = 0.0;
  for (std::size_t i : order) {
    if (discrete_done(w) || i >= w.n() || !feasibility_mask(w, 0)[i]) return std::numeric_limits<double>::infinity();
    spent -= discrete_step(w, 0, i).reward;
  }
  return discrete_done(w) && all_visited(w) ? spent : std::numeric_limits<double>::infinity();
}

// ---------------------------------------------------------------------------
// parameter fields

namespace {

ParamField real(const std::string& name, double& v, bool positive = true) {
  return {name, [&v] { return v; },
          [&v, positive, n = name](double x) {
            if (!std::isfinite(x) || (positive && x <= 0.0)) throw EnvError(fmt::format("{} must be positive", n));
            v = x;
          }};
}

ParamField count(const std::string& name, std::size_t& v) {
  return {name, [&v] { return static_cast<double>(v); },
          [&v, n = name](double x) {
            if (!(x >= 1.0) || x != std::floor(x) || x > 1e9) {
              throw EnvError(fmt::format("{} must be a positive integer", n));
            }
            v = static_cast<std::size_t>(x);
          }};
}

}  // namespace

std::vector<ParamField> parameter_fields(DiscreteParams& p) {
  return {real("area", p.area),         real("data_min_mb", p.data_min_mb), real("data_max_mb", p.data_max_mb),
          real("rate_kb_s", p.rate_kb_s), real("p_fly", p.p_fly),           real("p_hover", p.p_hover),
          real("p_collect", p.p_collect, false), real("p_wpt", p.p_wpt, false),
          real("p_device_tx", p.p_device_tx, false), real("speed", p.speed), real("storage_mb", p.storage_mb),
          real("battery_mah", p.battery_mah), real("voltage", p.voltage)};
}

std::vector<ParamField> parameter_fields(ContinuousParams& p) {
  return {real("area", p.area),
          count("slots", p.slots),
          count("max_tasks", p.max_tasks),
          real("d_max", p.d_max),
          real("theta_max", p.theta_max),
          real("altitude", p.altitude),
          real("g0", p.g0),
          real("p_tx", p.p_tx),
          real("bandwidth", p.bandwidth),
          real("noise_w", p.noise_w),
          real("k_switch", p.k_switch),
          real("f_max", p.f_max),
          real("t_max", p.t_max),
          real("coverage", p.coverage),
          real("f_ue", p.f_ue),
          real("task_kb_min", p.task_kb_min),
          real("task_kb_max", p.task_kb_max),
          real("cycles_min", p.cycles_min),
          real("cycles_max", p.cycles_max),
          real("uav_energy", p.uav_energy),
          real("fly_j_per_m", p.fly_j_per_m, false)};
}

// ---------------------------------------------------------------------------
// instance files

namespace {

constexpr const char* kInstanceMagic = "mait-instance 1";

std::string num(double v) { return fmt::format("{}", v); }

double parse_number(const std::string& t, std::size_t line) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size()) {
    throw EnvError(fmt::format("instance line {}: bad number '{}'", line, t));
  }
  return v;
}

std::uint64_t parse_u64(const std::string& t, std::size_t line) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size()) {
    throw EnvError(fmt::format("instance line {}: bad integer '{}'", line, t));
  }
  return v;
}

template <class Params>
void write_params(std::ostream& out, Params p) {
  for (const auto& f : parameter_fields(p)) out << "param " << f.name << ' ' << num(f.get()) << '\n';
}

}  // namespace

void write_instance(std::ostream& out, const DiscreteWorld& w) {
  out << kInstanceMagic << '\n' << "kind discrete_collect\n" << "seed " << w.seed << '\n' << "uavs " << w.m() << '\n';
  write_params(out, w.params);
  for (std::size_t i = 0; i < w.n(); ++i)
    out << "iotd " << num(w.iotd[i].x) << ' ' << num(w.iotd[i].y) << ' ' << num(w.data_mb[i]) << '\n';
  out << "end\n";
}

void write_instance(std::ostream& out, const ContinuousWorld& w) {
  out << kInstanceMagic << '\n'
      << "kind continuous_mec\n"
      << "seed " << w.seed << '\n'
      << "task_seed " << w.task_seed << '\n'
      << "uavs " << w.m() << '\n';
  write_params(out, w.params);
  for (const auto& p : w.ue) out << "ue " << num(p.x) << ' ' << num(p.y) << '\n';
  out << "end\n";
}

Instance read_instance(std::istream& in) {
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line) || line != kInstanceMagic) throw EnvError("instance: missing header");
  std::string kind;
  std::uint64_t seed = 0, task_seed = 0;
  std::size_t uavs = 0;
  bool has_task_seed = false, ended = false;
  DiscreteParams dp;
  ContinuousParams cp;
  std::vector<std::pair<std::string, double>> params;
  std::vector<Point> points;
  std::vector<double> data;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key) || key.starts_with('#')) continue;
    std::vector<std::string> rest;
    for (std::string t; ls >> t;) rest.push_back(t);
    auto need = [&](std::size_t k) {
      if (rest.size() != k) throw EnvError(fmt::format("instance line {}: '{}' takes {} values", lineno, key, k));
    };
    if (key == "end") {
      ended = true;
      break;
    } else if (key == "kind") {
      need(1);
      kind = rest[0];
    } else if (key == "seed") {
      need(1);
      seed = parse_u64(rest[0], lineno);
    } else if (key == "task_seed") {
      need(1);
      task_seed = parse_u64(rest[0], lineno);
      has_task_seed = true;
    } else if (key == "uavs") {
      need(1);
      uavs = parse_u64(rest[0], lineno);
    } else if (key == "param") {
      need(2);
      params.emplace_back(rest[0], parse_number(rest[1], lineno));
    } else if (key == "iotd") {
      need(3);
      points.push_back({parse_number(rest[0], lineno), parse_number(rest[1], lineno)});
      data.push_back(parse_number(rest[2], lineno));
    } else if (key == "ue") {
      need(2);
      points.push_back({parse_number(rest[0], lineno), parse_number(rest[1], lineno)});
    } else {
      throw EnvError(fmt::format("instance line {}: unknown record '{}'", lineno, key));
    }
  }
  if (!ended) throw EnvError("instance: truncated (no end marker)");

  auto apply = [&](auto& target) {
    auto fields = parameter_fields(target);
    for (const auto& [name, value] : params) {
      auto it = std::find_if(fields.begin(), fields.end(), [&](const ParamField& f) { return f.name == name; });
      if (it == fields.end()) throw EnvError(fmt::format("instance: unknown parameter '{}' for {}", name, kind));
      it->set(value);
    }
  };
  if (kind == "discrete_collect") {
    if (data.size() != points.size()) throw EnvError("instance: mixed device records");
    apply(dp);
    auto w = make_discrete_world(std::move(points), std::move(data), uavs, dp);
    w.seed = seed;
    return w;
  }
  if (kind == "continuous_mec") {
    if (!data.empty()) throw EnvError("instance: iotd records in a continuous instance");
    apply(cp);
    auto w = make_continuous_world(std::move(points), uavs, cp);
    w.seed = seed;
    reset_continuous(w, has_task_seed ? task_seed : seed);
    return w;
  }
  throw EnvError(fmt::format("instance: unknown kind '{}'", kind));
}

Instance read_instance_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw EnvError(fmt::format("cannot read instance file '{}'", path));
  return read_instance(in);
}

void write_instance_file(const std::string& path, const Instance& inst) {
  std::ofstream out(path);
  if (!out) throw EnvError(fmt::format("cannot write instance file '{}'", path));
  std::visit([&](const auto& w) { write_instance(out, w); }, inst);
}

void write_trajectory_csv(std::ostream& out, const EpisodeLog& log) {
  out << kTrajectoryHeader << '\n';
  for (std::size_t s = 0; s < log.steps.size(); ++s) {
    for (const auto& ev : log.steps[s].events) {
      const auto& e = ev.energy;
      out << fmt::format("{},{},{},{},{},{},{},{},{}\n", s, ev.uav, ev.action, ev.x, ev.y, -e.total(), e.fly,
                         e.hover + e.offload, e.charge + e.local);
    }
  }
}

void write_trajectory_csv(const std::string& path, const EpisodeLog& log) {
  std::ofstream out(path);
  if (!out) throw EnvError(fmt::format("cannot write trajectory '{}'", path));
  write_trajectory_csv(out, log);
}

}  // namespace mait::env
