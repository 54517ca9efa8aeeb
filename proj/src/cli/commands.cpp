#include "mait/cli/commands.hpp"

#include <fmt/chrono.h>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "mait/grpo/tgrpo.hpp"

namespace mait::cli {

namespace fs = std::filesystem;

namespace {

std::string now_utc() {
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::chrono::system_clock::to_time_t(
                                                   std::chrono::system_clock::now())));
}

std::string num(double v) { return fmt::format("{}", v); }

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error(fmt::format("cannot create output directory '{}': {}", dir, ec.message()));
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error(fmt::format("cannot write '{}'", path));
  return f;
}

struct Manifest {
  std::string command;
  std::string profile_path;
  std::string snapshot;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::string started;
  std::string finished;
  std::string status = "running";
  std::vector<std::string> artifacts;

  void write() const {
    auto f = open_out((fs::path(out_dir) / "manifest.txt").string());
    f << "command " << command << '\n'
      << "profile " << profile_path << '\n'
      << "seed " << seed << '\n'
      << "out " << out_dir << '\n'
      << "started " << started << '\n'
      << "finished " << (finished.empty() ? "-" : finished) << '\n'
      << "status " << status << '\n';
    for (const auto& a : artifacts) {
      f << "artifact " << a << ' ' << file_checksum((fs::path(out_dir) / a).string()) << '\n';
    }
    f << "config\n" << snapshot << "end\n";
  }
};

std::optional<num::OpKind> op_from_name(const std::string& name) {
  for (int k = 0; k <= static_cast<int>(num::OpKind::custom); ++k) {
    const auto kind = static_cast<num::OpKind>(k);
    if (name == num::op_name(kind)) return kind;
  }
  return std::nullopt;
}

}  // namespace

std::string file_checksum(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(fmt::format("cannot read '{}'", path));
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char c;
  while (in.get(c)) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", h);
}

profile::TaskProfile load_profile(const std::string& path, const std::vector<std::string>& overrides) {
  profile::TaskProfile p;
  try {
    p = profile::read_profile_file(path);
    for (const auto& o : overrides) profile::apply_override(p, o);
  } catch (const std::exception& e) {
    throw ProfileError(e.what());
  }
  const auto report = profile::validate(p);
  if (!report.ok()) throw ProfileError(fmt::format("profile '{}' is invalid:\n{}", path, report.to_string()));
  return p;
}

std::string format_log_row(const grpo::IterationRecord& r) {
  return fmt::format("{},{},{},{},{},{},{},{}", r.iteration, num(r.mean_return), num(r.min_return), num(r.max_return),
                     num(r.loss), num(r.mean_kl), num(r.mean_abs_ratio_dev), num(r.seconds));
}

std::vector<std::string> compatibility_problems(const model::MaitConfig& c, const env::Environment& env) {
  std::vector<std::string> p;
  if (c.head_kind != env.action_kind()) {
    p.push_back(fmt::format("checkpoint has a {} head, environment needs {}", model::to_string(c.head_kind),
                            model::to_string(env.action_kind())));
  }
  if (c.out_width != env.action_width()) {
    p.push_back(fmt::format("checkpoint out_width {} vs environment action width {}", c.out_width, env.action_width()));
  }
  if (c.d_in != env.feature_width()) {
    p.push_back(fmt::format("checkpoint d_in {} vs feature width {}", c.d_in, env.feature_width()));
  }
  if (c.max_nodes < env.node_count()) {
    p.push_back(fmt::format("checkpoint max_nodes {} < {} nodes", c.max_nodes, env.node_count()));
  }
  if (c.max_steps < env.horizon()) {
    p.push_back(fmt::format("checkpoint max_steps {} < horizon {}", c.max_steps, env.horizon()));
  }
  return p;
}

std::size_t count_violations(const env::Environment& e) {
  constexpr double tol = 1e-9;
  std::size_t v = 0;
  if (const auto* d = dynamic_cast<const env::DiscreteEnv*>(&e)) {
    const auto& w = d->world();
    for (const auto& u : w.uavs) {
      v += u.storage_mb < -tol;
      v += u.energy_j < -tol;
      v += u.collected_mb > w.params.storage_mb * (1 + tol);
    }
  } else if (const auto* c = dynamic_cast<const env::ContinuousEnv*>(&e)) {
    const auto& w = c->world();
    for (const auto& u : w.uavs) {
      v += u.energy_j < -tol;
      v += u.pos.x < -tol || u.pos.x > w.params.area + tol || u.pos.y < -tol || u.pos.y > w.params.area + tol;
    }
  }
  return v;
}

EvalSummary evaluate(const env::Environment& environment, std::size_t episodes, std::uint64_t seed,
                     const std::function<env::Policy(std::size_t, Rng&)>& make_policy, const std::string& traj_dir) {
  EvalSummary s;
  auto e = environment.clone();
  for (std::size_t i = 0; i < episodes; ++i) {
    Rng rng(derive_seed(seed, "eval-policy", i));
    const auto policy = make_policy(i, rng);
    env::EpisodeLog log;
    try {
      log = env::run_episode(*e, policy, derive_seed(seed, "eval", i));
    } catch (const env::EnvError&) {
      ++s.violations;
      s.energies.push_back(std::nan(""));
      continue;
    }
    s.violations += count_violations(*e);
    s.energies.push_back(log.energy.total());
    if (!traj_dir.empty()) env::write_trajectory_csv((fs::path(traj_dir) / fmt::format("traj_{}.csv", i)).string(), log);
  }
  if (!s.energies.empty()) {
    for (double x : s.energies) s.mean += x;
    s.mean /= static_cast<double>(s.energies.size());
    for (double x : s.energies) s.std += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(s.std / static_cast<double>(s.energies.size()));
  }
  return s;
}

int cmd_validate_profile(const std::string& path, const std::vector<std::string>& overrides, std::ostream& out,
                         std::ostream& err) {
  profile::TaskProfile p;
  try {
    p = profile::read_profile_file(path);
    for (const auto& o : overrides) profile::apply_override(p, o);
  } catch (const std::exception& e) {
    err << e.what() << '\n';
    return kExitUsage;
  }
  const auto report = profile::validate(p);
  err << report.to_string();
  if (!report.ok()) return kExitUsage;
  const auto d = profile::derive_configs(p);
  std::size_t attention = 0;
  for (auto k : model::layer_layout(d.model.layers, d.model.attn_ratio)) attention += k == model::LayerKind::attention;
  fmt::print(out, "profile {} ok\n", p.task.name);
  fmt::print(out, "environment {} nodes {} uavs {}\n", profile::to_string(d.env.kind), d.env.nodes, d.env.uavs);
  fmt::print(out, "layers {} attention {} mamba {}\n", d.model.layers, attention, d.model.layers - attention);
  fmt::print(out, "head {} width {}\n", model::to_string(d.model.head_kind), d.model.out_width);
  fmt::print(out, "group_size {} gamma {} clip_eps {} kl_coef {} iterations {}\n", d.train.group_size,
             num(d.train.gamma), num(d.train.clip_eps), num(d.train.kl_coef), d.train.iterations);
  return kExitOk;
}

int cmd_train(const TrainOptions& o, std::ostream& out, std::ostream& err) {
  profile::TaskProfile p;
  try {
    p = load_profile(o.profile, o.overrides);
  } catch (const ProfileError& e) {
    err << e.what() << '\n';
    return kExitUsage;
  }
  const auto d = profile::derive_configs(p);
  for (const auto& w : d.warnings) err << "warning: " << w.path << ": " << w.message << '\n';
  ensure_dir(o.out_dir);

  Manifest manifest;
  manifest.command = "train";
  manifest.profile_path = o.profile;
  manifest.snapshot = profile::serialize_profile(p);
  manifest.seed = d.train.seed;
  manifest.out_dir = o.out_dir;
  manifest.started = now_utc();
  {
    auto f = open_out((fs::path(o.out_dir) / "profile.resolved").string());
    f << manifest.snapshot;
  }
  manifest.artifacts.push_back("profile.resolved");
  manifest.write();

  const auto instance = profile::make_instance(d.env);
  env::write_instance_file((fs::path(o.out_dir) / "instance.txt").string(), instance);
  manifest.artifacts.push_back("instance.txt");
  auto environment = profile::make_environment(instance);
  auto model = model::build_model(d.model, derive_seed(d.train.seed, "model", 0));

  const auto log_path = (fs::path(o.out_dir) / "train_log.csv").string();
  auto log = open_out(log_path);
  log << kTrainLogHeader << '\n';
  std::vector<std::string> checkpoints;
  grpo::TrainHooks hooks;
  hooks.record_time = o.record_time;
  hooks.on_iteration = [&](const grpo::IterationRecord& r, const model::MaitModel& m) {
    log << format_log_row(r) << '\n';
    log.flush();
    if (d.checkpoint_every > 0 && (r.iteration + 1) % d.checkpoint_every == 0) {
      const auto name = fmt::format("checkpoint_{}.txt", r.iteration + 1);
      model::save_checkpoint(m, (fs::path(o.out_dir) / name).string());
      checkpoints.push_back(name);
    }
  };

  int code = kExitOk;
  std::vector<grpo::IterationRecord> records;
  try {
    records = grpo::train(*environment, model, d.train, hooks);
    manifest.status = "completed";
  } catch (const grpo::DivergenceError& e) {
    err << "training diverged: " << e.what() << '\n';
    manifest.status = "diverged";
    code = kExitFailure;
  } catch (const num::NumericError& e) {
    err << "training failed: " << e.what() << '\n';
    manifest.status = "failed";
    code = kExitFailure;
  }
  log.close();
  model::save_checkpoint(model, (fs::path(o.out_dir) / "checkpoint_final.txt").string());
  manifest.artifacts.push_back("train_log.csv");
  for (const auto& c : checkpoints) manifest.artifacts.push_back(c);
  manifest.artifacts.push_back("checkpoint_final.txt");
  manifest.finished = now_utc();
  manifest.write();

  if (!records.empty()) {
    const auto& last = records.back();
    fmt::print(out, "trained {} iterations, last mean return {}\n", records.size(), num(last.mean_return));
  }
  fmt::print(out, "log {}\n", log_path);
  return code;
}

int cmd_eval(const EvalOptions& o, std::ostream& out, std::ostream& err) {
  profile::TaskProfile p;
  try {
    p = load_profile(o.profile, o.overrides);
  } catch (const ProfileError& e) {
    err << e.what() << '\n';
    return kExitUsage;
  }
  const auto d = profile::derive_configs(p);
  auto environment = profile::make_environment(d.env);
  if (!o.out_dir.empty()) ensure_dir(o.out_dir);

  std::function<env::Policy(std::size_t, Rng&)> make_policy;
  std::optional<model::MaitModel> model;
  if (o.baseline) {
    const auto kind = *o.baseline;
    make_policy = [&environment, kind](std::size_t, Rng& rng) {
      return env::baseline_policy(kind, *environment, rng);
    };
  } else {
    try {
      model = model::load_checkpoint(o.checkpoint);
    } catch (const std::exception& e) {
      err << e.what() << '\n';
      return kExitFailure;
    }
    const auto problems = compatibility_problems(model->config, *environment);
    if (!problems.empty()) {
      err << "checkpoint does not fit the profile:\n";
      for (const auto& s : problems) err << "  - " << s << '\n';
      return kExitFailure;
    }
    const auto mode = o.mode;
    make_policy = [&model, mode](std::size_t, Rng& rng) { return grpo::model_policy(*model, mode, rng); };
  }
  const auto s = evaluate(*environment, o.episodes, d.train.seed, make_policy, o.out_dir);
  fmt::print(out, "episodes {}\n", o.episodes);
  if (o.episodes > 0) {
    fmt::print(out, "mean_energy {}\n", num(s.mean));
    fmt::print(out, "std_energy {}\n", num(s.std));
  }
  fmt::print(out, "violations {}\n", s.violations);
  return s.violations == 0 ? kExitOk : kExitFailure;
}

int cmd_oracle(const OracleOptions& o, std::ostream& out, std::ostream& err) {
  env::Instance instance;
  try {
    if (!o.instance.empty()) {
      instance = env::read_instance_file(o.instance);
    } else {
      instance = profile::make_instance(profile::derive_configs(load_profile(o.profile, o.overrides)).env);
    }
  } catch (const ProfileError& e) {
    err << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << e.what() << '\n';
    return kExitFailure;
  }
  const auto* world = std::get_if<env::DiscreteWorld>(&instance);
  if (!world) {
    err << "oracle: only discrete data-collection instances have a tour oracle\n";
    return kExitFailure;
  }
  if (world->n() > env::kBruteForceLimit || world->m() != 1) {
    err << fmt::format("oracle: refusing {} devices and {} UAVs; the exhaustive search is limited to {} devices "
                       "and one UAV\n",
                       world->n(), world->m(), env::kBruteForceLimit);
    return kExitFailure;
  }
  const auto tour = env::brute_force_tour(*world);
  if (!tour.feasible) {
    fmt::print(out, "infeasible\n");
    return kExitFailure;
  }
  std::string order;
  for (std::size_t i = 0; i < tour.order.size(); ++i) order += (i ? " " : "") + std::to_string(tour.order[i]);
  fmt::print(out, "order {}\n", order);
  fmt::print(out, "energy {}\n", num(tour.energy));
  if (!o.out_dir.empty()) {
    ensure_dir(o.out_dir);
    env::DiscreteEnv replay(*world);
    std::size_t next = 0;
    const auto log = env::run_episode(
        replay, [&](const model::PolicyInput&) { return env::JointAction{{tour.order.at(next++)}, {}}; }, 0);
    env::write_trajectory_csv((fs::path(o.out_dir) / "traj_oracle.csv").string(), log);
  }
  return kExitOk;
}

namespace {

// Shrinks a derived configuration to something finite differences can cover.
profile::DerivedConfigs toy_scale(profile::DerivedConfigs d) {
  d.env.nodes = std::min<std::size_t>(d.env.nodes, 4);
  d.env.uavs = std::min<std::size_t>(d.env.uavs, 2);
  if (auto* c = std::get_if<env::ContinuousParams>(&d.env.params)) c->slots = std::min<std::size_t>(c->slots, 3);
  auto& m = d.model;
  m.layers = std::min<std::size_t>(m.layers, 2);
  m.d_model = std::min<std::size_t>(m.d_model, 8);
  m.heads = 2;
  m.d_k = 0;
  m.d_state = std::min<std::size_t>(m.d_state, 2);
  m.mlp_mult = 2;
  m.max_nodes = d.env.nodes + d.env.uavs;
  if (d.env.kind == profile::EnvKind::discrete_collect) {
    m.out_width = d.env.nodes;
    m.max_steps = d.env.nodes + d.env.uavs;
  } else {
    m.max_steps = std::get<env::ContinuousParams>(d.env.params).slots;
  }
  d.train.group_size = 2;
  return d;
}

}  // namespace

std::vector<num::GradReport> gradcheck_profile(const profile::DerivedConfigs& derived, double step, double tolerance) {
  const auto d = toy_scale(derived);
  auto environment = profile::make_environment(d.env);
  std::vector<num::GradReport> reports;
  for (auto mode : {model::SsmMode::selective, model::SsmMode::lti}) {
    auto config = d.model;
    config.ssm_mode = mode;
    auto model = model::build_model(config, derive_seed(d.train.seed, "gradcheck", 0));
    auto batch = grpo::rollout_group(*environment, model, model::ActMode::sample, d.train.group_size,
                                     derive_seed(d.train.seed, "gradcheck", 1), 0);
    grpo::score_group(batch, d.train);
    // Step off the sampling policy so the KL and ratio terms carry gradient.
    Rng rng(derive_seed(d.train.seed, "gradcheck", 2));
    std::vector<num::DiffArray> params;
    std::vector<std::string> names;
    for (auto& [name, p] : model.parameters()) {
      for (auto& v : p.mutable_values()) v += rng.uniform(-0.01, 0.01);
      params.push_back(p);
      names.push_back(fmt::format("{}/{}", model::to_string(mode), name));
    }
    auto loss = [&] { return grpo::total_loss(batch, model, d.train).loss; };
    for (auto& r : num::check_gradients(loss, params, names, step, tolerance)) reports.push_back(std::move(r));
  }
  return reports;
}

int cmd_gradcheck(const GradcheckOptions& o, std::ostream& out, std::ostream& err) {
  profile::DerivedConfigs d;
  try {
    d = profile::derive_configs(load_profile(o.profile, o.overrides));
  } catch (const ProfileError& e) {
    err << e.what() << '\n';
    return kExitUsage;
  }
  std::optional<num::testing::ScopedBackwardFault> fault;
  if (o.corrupt_op) {
    const auto kind = op_from_name(*o.corrupt_op);
    if (!kind) {
      err << fmt::format("gradcheck: unknown primitive '{}'\n", *o.corrupt_op);
      return kExitUsage;
    }
    fault.emplace(*kind, 1.5);
  }
  const auto reports = gradcheck_profile(d, o.step, o.tolerance);
  std::vector<std::string> failed;
  for (const auto& r : reports) {
    fmt::print(out, "{:<40} {:.3e} {}\n", r.name, r.max_rel_error, r.pass ? "ok" : "FAIL");
    if (!r.pass) failed.push_back(r.name);
  }
  if (failed.empty()) {
    fmt::print(out, "all {} blocks within {}\n", reports.size(), num(o.tolerance));
    return kExitOk;
  }
  err << fmt::format("{} of {} blocks exceed tolerance {}:\n", failed.size(), reports.size(), num(o.tolerance));
  for (const auto& f : failed) err << "  " << f << '\n';
  return kExitFailure;
}

}  // namespace mait::cli
