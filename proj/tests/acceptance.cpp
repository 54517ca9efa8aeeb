// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.
#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "mait/cli/commands.hpp"
#include "mait/grpo/tgrpo.hpp"
#include "mait/model/layers.hpp"
#include "mait/num/ops.hpp"
#include "mait/profile/profile.hpp"

using namespace mait;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string preset(const char* name) { return std::string(MAIT_PRESET_DIR) + "/" + name + ".profile"; }

struct Verdict {
  bool pass = false;
  std::string detail;
};

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

num::DiffArray random_array(Rng& rng, num::Shape shape, double lo, double hi) {
  std::vector<double> v(num::shape_size(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return num::DiffArray::constant(std::move(shape), std::move(v));
}

// 1 ---------------------------------------------------------------------------

Verdict scan_kernel_equivalence() {
  const auto t0 = Clock::now();
  Rng rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t t = 1 + static_cast<std::size_t>(trial % 32);
    const std::size_t d = 2 + rng.below(7), s = 1 + rng.below(8);
    model::MambaLayerParams p;
    p.mode = model::SsmMode::lti;
    p.in_proj = random_array(rng, {d, d}, -0.7, 0.7);
    p.a_raw = random_array(rng, {d, s}, -3.0, 2.0);
    p.b = random_array(rng, {d, s}, -1.0, 1.0);
    p.c = random_array(rng, {d, s}, -1.0, 1.0);
    p.delta_raw = random_array(rng, {1, 1}, -3.0, 1.0);
    p.out_proj = random_array(rng, {d, d}, -0.7, 0.7);
    const auto x = random_array(rng, {t, d}, -2.0, 2.0);
    const auto ys = model::mamba_mix(p, x, model::SsmPath::scan);
    const auto yk = model::mamba_mix(p, x, model::SsmPath::kernel);
    const double rel = max_abs_diff(ys.values(), yk.values()) / std::max(max_abs(ys.values()), 1e-300);
    worst = std::max(worst, rel);
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-8 && secs < 10.0,
          fmt::format("200 systems, T in 1..32, worst relative gap {:.2e}, {:.2f} s", worst, secs)};
}

// 2 ---------------------------------------------------------------------------

Verdict gradient_suite() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t blocks = 0, failed = 0;
  std::set<std::string> kinds;
  for (const char* name : {"case1_continuous_mec", "case2_discrete_collect"}) {
    const auto d = profile::derive_configs(cli::load_profile(preset(name), {}));
    for (const auto& r : cli::gradcheck_profile(d, 1e-5, 1e-4)) {
      ++blocks;
      failed += !r.pass;
      worst = std::max(worst, r.max_rel_error);
      if (r.name.find("embed.") != std::string::npos) kinds.insert("embedding");
      if (r.name.find(".attn.") != std::string::npos) kinds.insert("attention");
      if (r.name.starts_with("lti/") && r.name.find(".ssm.") != std::string::npos) kinds.insert("ssm-lti");
      if (r.name.starts_with("selective/") && r.name.find(".ssm.delta_proj") != std::string::npos) {
        kinds.insert("ssm-selective");
      }
      if (r.name.find("mlp") != std::string::npos || r.name.find("norm") != std::string::npos) kinds.insert("mlp/norm");
      if (r.name.find("head.wq") != std::string::npos) kinds.insert("head");
      if (r.name.find("head.log_std") != std::string::npos) kinds.insert("log_std");
    }
  }
  const double secs = seconds_since(t0);
  return {failed == 0 && kinds.size() == 7 && secs < 60.0,
          fmt::format("{} blocks over both heads and SSM modes ({} kinds), {} failed, worst {:.2e}, {:.2f} s", blocks,
                      kinds.size(), failed, worst, secs)};
}

// 3 ---------------------------------------------------------------------------

model::MaitModel toy_model_for(const env::Environment& e, std::uint64_t seed) {
  model::MaitConfig c;
  c.d_model = 8;
  c.layers = 2;
  c.heads = 2;
  c.d_state = 2;
  c.mlp_mult = 2;
  c.head_kind = e.action_kind();
  c.out_width = e.action_width();
  c.max_nodes = e.node_count();
  c.max_steps = e.horizon();
  c.action_scale = e.action_scale();
  return model::build_model(c, seed);
}

Verdict grpo_identities() {
  grpo::TrainConfig cfg;
  cfg.delta = 1e-12;
  bool ok = true;
  double worst_kl = 0.0, worst_loss = 0.0;
  std::size_t steps = 0, ratio_misses = 0;
  env::ContinuousParams cp;
  cp.slots = 6;
  env::DiscreteEnv disc(env::make_discrete_world(6, 2, 31));
  env::ContinuousEnv cont(env::make_continuous_world(8, 2, 32, cp));
  for (const env::Environment* e : {static_cast<const env::Environment*>(&disc),
                                    static_cast<const env::Environment*>(&cont)}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      auto m = toy_model_for(*e, seed);
      auto batch = grpo::rollout_group(*e, m, model::ActMode::sample, 4, seed + 100, seed);
      grpo::score_group(batch, cfg);
      for (const auto& t : batch.trajectories) {
        for (const auto& s : t.steps) {
          const auto terms = grpo::step_terms(m, s);
          ratio_misses += grpo::policy_ratio(terms.logp_new.item(), s.logp_old) != 1.0;
          worst_kl = std::max(worst_kl, std::abs(terms.kl.item()));
          ++steps;
        }
      }
      worst_loss = std::max(worst_loss, std::abs(grpo::total_loss(batch, m, cfg).loss.item()));
    }
  }
  ok = ratio_misses == 0 && worst_kl <= 1e-12 && worst_loss < 1e-8;

  Rng rng(33);
  double worst_sum = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t g = 1 + rng.below(32);
    std::vector<double> r(g);
    for (auto& x : r) x = rng.uniform(-1e5, 1e5);
    const auto a = grpo::group_advantages(r, 1e-8);
    worst_sum = std::max(worst_sum, std::abs(std::accumulate(a.values.begin(), a.values.end(), 0.0)) / g);
  }
  ok = ok && worst_sum <= 1e-9;

  const auto ex = grpo::group_advantages(std::vector<double>{10, 20, 30}, 1e-15);
  const double dev = std::max({std::abs(ex.values[0] + 1.22474), std::abs(ex.values[1]),
                               std::abs(ex.values[2] - 1.22474)});
  ok = ok && dev <= 1e-5;
  return {ok, fmt::format("{} steps: ratio != 1 at {} steps, max |KL| {:.1e}, max |loss| {:.1e}; "
                          "max |sum A|/G {:.1e}; [10,20,30] -> [{:.5f}, {:.5f}, {:.5f}]",
                          steps, ratio_misses, worst_kl, worst_loss, worst_sum, ex.values[0], ex.values[1],
                          ex.values[2])};
}

// 4 ---------------------------------------------------------------------------

Verdict mask_safety() {
  Rng rng(44);
  std::map<std::pair<std::size_t, std::size_t>, model::MaitModel> models;
  std::size_t passes = 0, masked_picks = 0, masked_mass = 0;
  double worst_sum = 0.0;
  while (passes < 10000) {
    const std::size_t n = 2 + rng.below(11), m = 1 + rng.below(3);
    env::DiscreteParams params;
    params.storage_mb = rng.uniform(1.0, 8.0);
    params.battery_mah = rng.uniform(300.0, 2550.0);
    env::DiscreteEnv e(env::make_discrete_world(n, m, rng.next_u64(), params));
    auto it = models.find({n, m});
    if (it == models.end()) it = models.emplace(std::pair{n, m}, toy_model_for(e, n * 10 + m)).first;
    const auto& model = it->second;
    Rng policy_rng(rng.next_u64());
    while (!e.done() && passes < 10000) {
      const auto in = e.observe();
      const auto out = model::forward(model, in, model::ActMode::sample, policy_rng);
      env::JointAction a;
      for (std::size_t u = 0; u < out.decisions.size(); ++u) {
        const auto& d = out.decisions[u];
        const auto mask = in.mask_row(u, n);
        masked_picks += mask[d.choice] == 0;
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          sum += d.probs[i];
          masked_mass += mask[i] == 0 && d.probs[i] != 0.0;
        }
        worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
        a.stops.push_back(d.choice);
      }
      ++passes;
      e.step(a);
    }
  }
  return {masked_picks == 0 && masked_mass == 0 && worst_sum <= 1e-9,
          fmt::format("{} sampled passes over {} world shapes: {} masked picks, {} masked entries with mass, "
                      "worst |sum p - 1| {:.1e}",
                      passes, models.size(), masked_picks, masked_mass, worst_sum)};
}

// 5 ---------------------------------------------------------------------------

double wrapped_gap(double a, double b) {
  double d = std::fmod(std::abs(a - b), 2 * std::numbers::pi);
  return std::min(d, 2 * std::numbers::pi - d);
}

Verdict environment_conservation() {
  const auto t0 = Clock::now();
  Rng rng(55);
  std::size_t negative = 0, too_far = 0, too_sharp = 0, imbalance = 0, steps = 0;
  double worst_gap = 0.0;
  auto check_total = [&](double reward, double energy) {
    const double gap = std::abs(reward + energy) / std::max(1.0, std::abs(energy));
    worst_gap = std::max(worst_gap, gap);
    imbalance += gap > 1e-9;
  };
  for (int ep = 0; ep < 10000; ++ep) {
    env::DiscreteParams p;
    p.storage_mb = rng.uniform(1.0, 150.0);
    p.battery_mah = rng.uniform(50.0, 2550.0);
    p.area = rng.uniform(100.0, 1000.0);
    const std::size_t n = 1 + rng.below(15), m = 1 + rng.below(4);
    env::DiscreteEnv e(env::make_discrete_world(n, m, rng.next_u64(), p));
    Rng prng(rng.next_u64());
    auto policy = env::baseline_policy(rng.below(2) ? env::BaselineKind::random : env::BaselineKind::greedy_nearest,
                                       e, prng);
    double reward = 0.0, energy = 0.0;
    e.reset(0);
    while (!e.done()) {
      const auto out = e.step(policy(e.observe()));
      ++steps;
      reward += out.reward;
      energy += out.info.total();
      for (const auto& u : e.world().uavs) negative += u.storage_mb < 0.0 || u.energy_j < 0.0;
    }
    check_total(reward, energy);
  }
  for (int ep = 0; ep < 10000; ++ep) {
    env::ContinuousParams p;
    p.slots = 1 + rng.below(12);
    p.area = rng.uniform(100.0, 400.0);
    p.uav_energy = rng.uniform(500.0, 1e6);
    const std::size_t n = 1 + rng.below(12), m = 1 + rng.below(4);
    env::ContinuousEnv e(env::make_continuous_world(n, m, rng.next_u64(), p));
    e.reset(rng.next_u64());
    double reward = 0.0, energy = 0.0;
    while (!e.done()) {
      env::JointAction a;
      for (std::size_t u = 0; u < m; ++u) {
        a.moves.push_back({rng.uniform(-2 * p.d_max, 2 * p.d_max), rng.uniform(-2 * p.theta_max, 2 * p.theta_max)});
      }
      const auto before = e.world().uavs;
      const auto out = e.step(a);
      ++steps;
      reward += out.reward;
      energy += out.info.total();
      for (std::size_t u = 0; u < m; ++u) {
        const auto& now = e.world().uavs[u];
        too_far += env::distance(before[u].pos, now.pos) > p.d_max * (1 + 1e-12);
        too_sharp += wrapped_gap(before[u].heading, now.heading) > p.theta_max * (1 + 1e-12);
        negative += now.energy_j < 0.0;
      }
    }
    check_total(reward, energy);
  }
  const double secs = seconds_since(t0);
  return {negative == 0 && too_far == 0 && too_sharp == 0 && imbalance == 0,
          fmt::format("2 x 10000 episodes, {} steps: {} negative resources, {} over-long moves, {} over-sharp turns, "
                      "{} reward mismatches (worst {:.1e}), {:.1f} s",
                      steps, negative, too_far, too_sharp, imbalance, worst_gap, secs)};
}

// 6 ---------------------------------------------------------------------------

std::vector<std::string> discrete_smoke_overrides() {
  return {"task.nodes=8",         "task.uavs=1",        "task.world_seed=7",    "action.width=8",
          "architecture.layers=4", "architecture.d_model=32", "training.iterations=2000",
          "training.learning_rate=0.001"};
}

Verdict discrete_learning() {
  const auto t0 = Clock::now();
  const auto d = profile::derive_configs(cli::load_profile(preset("case2_discrete_collect"),
                                                           discrete_smoke_overrides()));
  const auto world = std::get<env::DiscreteWorld>(profile::make_instance(d.env));
  env::DiscreteEnv e(world);
  const auto optimum = env::brute_force_tour(world);

  Rng base_rng(66);
  double random_mean = 0.0;
  const int random_runs = 1000;
  auto random_policy = env::baseline_policy(env::BaselineKind::random, e, base_rng);
  for (int i = 0; i < random_runs; ++i) random_mean += env::run_episode(e, random_policy, 0).energy.total();
  random_mean /= random_runs;

  auto model = model::build_model(d.model, derive_seed(d.train.seed, "model", 0));
  auto greedy_energy = [&](const model::MaitModel& m) {
    Rng unused(0);
    auto policy = grpo::model_policy(m, model::ActMode::greedy, unused);
    return env::run_episode(e, policy, 0).energy.total();
  };
  auto good = [&](double energy) {
    return energy <= 1.10 * optimum.energy && energy <= 0.80 * random_mean;
  };

  // Stop at the first check that meets the bar; the budget stays 2000 iterations.
  struct Done {};
  double best_seen = greedy_energy(model), final_energy = best_seen;
  std::size_t used = 0;
  grpo::TrainHooks hooks;
  hooks.on_iteration = [&](const grpo::IterationRecord& r, const model::MaitModel& m) {
    used = r.iteration + 1;
    if (used % 10 != 0) return;
    final_energy = greedy_energy(m);
    best_seen = std::min(best_seen, final_energy);
    if (good(final_energy)) throw Done{};
  };
  try {
    grpo::train(e, model, d.train, hooks);
    final_energy = greedy_energy(model);
  } catch (const Done&) {
  }
  const double secs = seconds_since(t0);
  return {good(final_energy) && secs < 900.0,
          fmt::format("greedy tour {:.1f} J after {} iterations; optimum {:.1f} J (ratio {:.3f}); random mean {:.1f} J "
                      "(improvement {:.1f}%); {:.0f} s",
                      final_energy, used, optimum.energy, final_energy / optimum.energy, random_mean,
                      100.0 * (1.0 - final_energy / random_mean), secs)};
}

// 7 ---------------------------------------------------------------------------

std::pair<double, double> bootstrap_ci(const std::vector<double>& x, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> means;
  for (int b = 0; b < 10000; ++b) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[rng.below(x.size())];
    means.push_back(s / static_cast<double>(x.size()));
  }
  std::sort(means.begin(), means.end());
  return {means[249], means[9749]};
}

std::vector<std::string> continuous_smoke_overrides() {
  return {"task.nodes=10", "task.uavs=1", "task.world_seed=7", "architecture.layers=4", "architecture.d_model=32",
          "training.iterations=150", "training.learning_rate=0.001"};
}

Verdict continuous_learning() {
  const auto t0 = Clock::now();
  const auto d = profile::derive_configs(cli::load_profile(preset("case1_continuous_mec"),
                                                           continuous_smoke_overrides()));
  auto e = profile::make_environment(d.env);
  auto model = model::build_model(d.model, derive_seed(d.train.seed, "model", 0));
  grpo::train(*e, model, d.train);

  // Held-out task streams, shared by both policies.
  const std::uint64_t eval_seed = 777;
  const auto trained = cli::evaluate(*e, 100, eval_seed, [&](std::size_t, Rng& rng) {
    return grpo::model_policy(model, model::ActMode::greedy, rng);
  });
  const auto zero = cli::evaluate(*e, 100, eval_seed, [&](std::size_t, Rng& rng) {
    return env::baseline_policy(env::BaselineKind::greedy_nearest, *e, rng);
  });
  const auto ci_t = bootstrap_ci(trained.energies, 1), ci_z = bootstrap_ci(zero.energies, 2);
  const double secs = seconds_since(t0);
  return {ci_t.second < ci_z.first && trained.violations == 0 && secs < 900.0,
          fmt::format("trained {:.2f} J [{:.2f}, {:.2f}] vs zero-action {:.2f} J [{:.2f}, {:.2f}] over 100 episodes "
                      "after {} iterations; {:.0f} s",
                      trained.mean, ci_t.first, ci_t.second, zero.mean, ci_z.first, ci_z.second, d.train.iterations,
                      secs)};
}

// 8 ---------------------------------------------------------------------------

Verdict architecture_ratios() {
  std::string detail;
  bool ok = true;
  for (auto [name, att, mam] : {std::tuple{"case1_continuous_mec", 7u, 3u}, std::tuple{"case2_discrete_collect", 5u, 10u}}) {
    const auto d = profile::derive_configs(cli::load_profile(preset(name), {}));
    const auto m = model::build_model(d.model, 0);
    ok = ok && m.attention_count() == att && m.mamba_count() == mam;
    detail += fmt::format("{}: {} attention + {} mamba; ", name, m.attention_count(), m.mamba_count());
  }
  return {ok, detail.substr(0, detail.size() - 2)};
}

// 9 ---------------------------------------------------------------------------

Verdict reproducibility() {
  const auto root = fs::temp_directory_path() / "mait_acceptance_repro";
  fs::remove_all(root);
  std::vector<std::string> checks;
  bool ok = true;
  auto ov = discrete_smoke_overrides();
  ov.push_back("training.iterations=20");
  std::vector<std::string> sums;
  for (const char* run : {"a", "b"}) {
    std::ostringstream out, err;
    const auto dir = (root / run).string();
    if (cli::cmd_train({preset("case2_discrete_collect"), dir, ov}, out, err) != cli::kExitOk) ok = false;
    sums.push_back(cli::file_checksum((fs::path(dir) / "train_log.csv").string()));
  }
  ok = ok && sums[0] == sums[1];
  checks.push_back(fmt::format("train logs {} / {}", sums[0], sums[1]));
  for (const char* name : {"case1_continuous_mec", "case2_discrete_collect"}) {
    std::ifstream in(preset(name));
    std::stringstream ss;
    ss << in.rdbuf();
    const bool same = profile::serialize_profile(profile::parse_profile(ss.str())) == ss.str();
    ok = ok && same;
    checks.push_back(fmt::format("{} round trip {}", name, same ? "exact" : "differs"));
  }
  fs::remove_all(root);
  std::string detail;
  for (const auto& c : checks) detail += (detail.empty() ? "" : "; ") + c;
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"scan/kernel equivalence", scan_kernel_equivalence},
      {"gradient suite", gradient_suite},
      {"T-GRPO identities", grpo_identities},
      {"mask safety", mask_safety},
      {"environment conservation", environment_conservation},
      {"learning smoke (discrete)", discrete_learning},
      {"learning smoke (continuous)", continuous_learning},
      {"architecture ratios", architecture_ratios},
      {"reproducibility", reproducibility},
  };
  std::set<std::size_t> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::stoul(argv[i]));
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!wanted.empty() && !wanted.count(i + 1)) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, fmt::format("threw: {}", e.what())};
    }
    failures += !v.pass;
    fmt::print("{} [{}] {}: {}\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, v.detail);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
