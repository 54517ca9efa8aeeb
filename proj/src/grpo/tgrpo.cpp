#include "mait/grpo/tgrpo.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>

#include "mait/num/ops.hpp"
#include "mait/num/tape.hpp"

namespace mait::grpo {

namespace ops = mait::num;
using model::ActMode;
using model::HeadKind;

std::vector<std::string> config_violations(const TrainConfig& c) {
  std::vector<std::string> out;
  if (c.group_size < 1) out.push_back("group_size must be at least 1");
  if (!(c.gamma >= 0.0 && c.gamma <= 1.0)) out.push_back(fmt::format("gamma {} outside [0, 1]", c.gamma));
  if (!(c.clip_eps > 0.0 && c.clip_eps < 1.0)) out.push_back(fmt::format("clip_eps {} outside (0, 1)", c.clip_eps));
  if (!(c.kl_coef >= 0.0) || !std::isfinite(c.kl_coef)) out.push_back(fmt::format("kl_coef {} negative", c.kl_coef));
  if (!(c.delta > 0.0) || !std::isfinite(c.delta)) out.push_back(fmt::format("delta {} not positive", c.delta));
  if (!(c.learning_rate > 0.0) || !std::isfinite(c.learning_rate)) {
    out.push_back(fmt::format("learning_rate {} not positive", c.learning_rate));
  }
  if (c.epochs < 1) out.push_back("epochs must be at least 1");
  return out;
}

void validate(const TrainConfig& config) {
  auto v = config_violations(config);
  if (v.empty()) return;
  std::string msg = "invalid TrainConfig:";
  for (const auto& s : v) msg += "\n  - " + s;
  throw std::invalid_argument(msg);
}

std::vector<double> RolloutTrajectory::rewards() const {
  std::vector<double> r;
  r.reserve(steps.size());
  for (const auto& s : steps) r.push_back(s.reward);
  return r;
}

namespace {

env::JointAction to_joint_action(const model::PolicyOutput& out) {
  env::JointAction a;
  for (const auto& d : out.decisions) {
    if (out.kind == HeadKind::discrete) {
      a.stops.push_back(d.choice);
    } else {
      a.moves.push_back(d.action);
    }
  }
  return a;
}

}  // namespace

env::Policy model_policy(const model::MaitModel& model, ActMode mode, Rng& rng) {
  return [&model, mode, &rng](const model::PolicyInput& in) { return to_joint_action(model::forward(model, in, mode, rng)); };
}

GroupBatch rollout_group(const env::Environment& environment, const model::MaitModel& model, ActMode mode,
                         std::size_t group_size, std::uint64_t seed, std::uint64_t episode_seed) {
  GroupBatch batch;
  auto env = environment.clone();
  for (std::size_t j = 0; j < group_size; ++j) {
    env->reset(episode_seed);
    Rng rng(derive_seed(seed, "rollout", j));
    RolloutTrajectory traj;
    while (!env->done()) {
      StepRecord rec;
      rec.input = env->observe();
      const auto out = model::forward(model, rec.input, mode, rng);
      rec.action = to_joint_action(out);
      rec.logp_old = out.joint_log_prob;
      for (const auto& d : out.decisions) {
        if (out.kind == HeadKind::discrete) {
          rec.choices.push_back(d.choice);
          rec.old_probs.insert(rec.old_probs.end(), d.probs.begin(), d.probs.end());
          rec.old_log_probs.insert(rec.old_log_probs.end(), d.log_probs.begin(), d.log_probs.end());
        } else {
          rec.raw_actions.insert(rec.raw_actions.end(), d.raw_action.begin(), d.raw_action.end());
          rec.old_mean.insert(rec.old_mean.end(), d.mean.begin(), d.mean.end());
          rec.old_log_std = d.log_std;
        }
      }
      env::StepOutcome outcome;
      try {
        outcome = env->step(rec.action);
      } catch (const std::exception& e) {
        throw env::EnvError(fmt::format("rollout {} step {}: {}", j, traj.steps.size(), e.what()));
      }
      rec.reward = outcome.reward;
      traj.total_energy += outcome.info.total();
      traj.steps.push_back(std::move(rec));
    }
    batch.trajectories.push_back(std::move(traj));
  }
  return batch;
}

double compute_return(std::span<const double> rewards, double gamma) {
  double ret = 0.0, discount = 1.0;
  for (double r : rewards) {
    ret += discount * r;
    discount *= gamma;
  }
  return ret;
}

Advantages group_advantages(std::span<const double> returns, double delta) {
  Advantages a;
  if (returns.empty()) return a;
  const double g = static_cast<double>(returns.size());
  for (double r : returns) a.mean += r;
  a.mean /= g;
  double var = 0.0;
  for (double r : returns) var += (r - a.mean) * (r - a.mean);
  var /= g;
  a.std = std::sqrt(var + delta);
  for (double r : returns) a.values.push_back((r - a.mean) / a.std);
  return a;
}

void score_group(GroupBatch& batch, const TrainConfig& config) {
  batch.returns.clear();
  for (const auto& t : batch.trajectories) batch.returns.push_back(compute_return(t.rewards(), config.gamma));
  auto adv = group_advantages(batch.returns, config.delta);
  batch.advantages = std::move(adv.values);
  batch.mean_return = adv.mean;
  batch.std_return = adv.std;
}

double policy_ratio(double logp_new, double logp_old) { return std::exp(logp_new - logp_old); }

double clipped_term(double ratio, double advantage, double eps) {
  return std::min(ratio * advantage, std::clamp(ratio, 1.0 - eps, 1.0 + eps) * advantage);
}

StepTerms step_terms(const model::MaitModel& model, const StepRecord& step) {
  const auto& in = step.input;
  const std::size_t m = in.uav_rows.size(), k = model.config.out_width;
  auto hidden = model::gather_rows(model::encode(model, in.nodes), in.uav_rows);
  if (model.config.head_kind == HeadKind::discrete) {
    auto lp = model::discrete_log_probs(model, hidden, in.masks);
    std::vector<double> onehot(m * k, 0.0);
    for (std::size_t u = 0; u < m; ++u) onehot[u * k + step.choices[u]] = 1.0;
    auto logp = ops::reduce_sum(ops::mul(lp, DiffArray::constant({m, k}, std::move(onehot))));
    // Masked entries carry p_old = 0 and log p = 0 on both sides.
    auto p_old = DiffArray::constant({m, k}, step.old_probs);
    auto lp_old = DiffArray::constant({m, k}, step.old_log_probs);
    auto kl = ops::reduce_sum(ops::mul(p_old, ops::sub(lp_old, lp)));
    return {logp, kl};
  }
  auto head = model::continuous_head(model, hidden);
  auto raw = DiffArray::constant({m, k}, step.raw_actions);
  auto logp = ops::reduce_sum(model::gaussian_log_prob(raw, head.mean, head.log_std));

  std::vector<double> var_old(m * k), ls_old(m * k);
  for (std::size_t u = 0; u < m; ++u) {
    for (std::size_t j = 0; j < k; ++j) {
      ls_old[u * k + j] = step.old_log_std[j];
      var_old[u * k + j] = std::exp(2.0 * step.old_log_std[j]);
    }
  }
  auto ls_new = ops::broadcast_rows(head.log_std, m);
  auto diff = ops::sub(DiffArray::constant({m, k}, step.old_mean), head.mean);
  auto spread = ops::add(DiffArray::constant({m, k}, std::move(var_old)), ops::mul(diff, diff));
  auto quad = ops::scale(ops::mul(spread, ops::exp(ops::scale(ls_new, -2.0))), 0.5);
  auto per_dim = ops::add(ops::sub(ls_new, DiffArray::constant({m, k}, std::move(ls_old))), quad);
  auto kl = ops::sub(ops::reduce_sum(per_dim), DiffArray::constant({1}, 0.5 * static_cast<double>(m * k)));
  return {logp, kl};
}

LossResult total_loss(const GroupBatch& batch, const model::MaitModel& model, const TrainConfig& config) {
  if (batch.advantages.size() != batch.trajectories.size()) {
    throw std::invalid_argument("total_loss: batch has not been scored");
  }
  const double g = static_cast<double>(batch.trajectories.size());
  LossResult res;
  DiffArray surrogate_sum, kl_sum;
  double kl_total = 0.0, dev_total = 0.0;
  for (std::size_t j = 0; j < batch.trajectories.size(); ++j) {
    const double adv = batch.advantages[j];
    const auto& steps = batch.trajectories[j].steps;
    for (std::size_t t = 0; t < steps.size(); ++t) {
      try {
        auto terms = step_terms(model, steps[t]);
        auto ratio = ops::exp(ops::sub(terms.logp_new, DiffArray::constant({1}, steps[t].logp_old)));
        auto clipped = ops::clip(ratio, 1.0 - config.clip_eps, 1.0 + config.clip_eps);
        auto surrogate = ops::minimum(ops::scale(ratio, adv), ops::scale(clipped, adv));
        surrogate_sum = surrogate_sum.defined() ? ops::add(surrogate_sum, surrogate) : surrogate;
        kl_sum = kl_sum.defined() ? ops::add(kl_sum, terms.kl) : terms.kl;
        kl_total += terms.kl.item();
        dev_total += std::abs(ratio.item() - 1.0);
        ++res.steps;
      } catch (const num::NumericError& e) {
        throw num::NumericError(fmt::format("loss at trajectory {} step {}: {}", j, t, e.what()));
      }
    }
  }
  if (res.steps == 0) throw std::invalid_argument("total_loss: batch has no steps");
  res.loss = ops::add(ops::scale(surrogate_sum, -1.0 / g), ops::scale(kl_sum, config.kl_coef / g));
  res.mean_kl = kl_total / static_cast<double>(res.steps);
  res.mean_abs_ratio_dev = dev_total / static_cast<double>(res.steps);
  return res;
}

Adam::Adam(std::vector<DiffArray> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    if (!p.is_leaf() || !p.requires_grad()) throw std::invalid_argument("Adam: parameters must be trainable leaves");
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    const auto g = p.grad();
    auto w = p.mutable_values();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
      w[k] -= lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
    }
  }
  zero_grad();
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

namespace {

void check_compatible(const env::Environment& env, const model::MaitModel& model) {
  const auto& c = model.config;
  std::vector<std::string> problems;
  if (env.action_kind() != c.head_kind) {
    problems.push_back(fmt::format("environment wants a {} head, model has {}", model::to_string(env.action_kind()),
                                   model::to_string(c.head_kind)));
  }
  if (env.action_width() != c.out_width) {
    problems.push_back(fmt::format("action width {} vs model out_width {}", env.action_width(), c.out_width));
  }
  if (env.feature_width() != c.d_in) {
    problems.push_back(fmt::format("feature width {} vs model d_in {}", env.feature_width(), c.d_in));
  }
  if (env.node_count() > c.max_nodes) {
    problems.push_back(fmt::format("{} nodes exceed max_nodes {}", env.node_count(), c.max_nodes));
  }
  if (env.horizon() > c.max_steps) {
    problems.push_back(fmt::format("horizon {} exceeds max_steps {}", env.horizon(), c.max_steps));
  }
  if (problems.empty()) return;
  std::string msg = "model and environment do not match:";
  for (const auto& p : problems) msg += "\n  - " + p;
  throw std::invalid_argument(msg);
}

}  // namespace

std::vector<IterationRecord> train(const env::Environment& env, model::MaitModel& model, const TrainConfig& config,
                                   const TrainHooks& hooks) {
  validate(config);
  check_compatible(env, model);
  std::vector<DiffArray> params;
  for (auto& [name, p] : model.parameters()) params.push_back(p);
  Adam adam(params, config.learning_rate);

  std::vector<IterationRecord> log;
  for (std::size_t it = 0; it < config.iterations; ++it) {
    const auto t0 = std::chrono::steady_clock::now();
    auto batch = rollout_group(env, model, ActMode::sample, config.group_size, derive_seed(config.seed, "rollout", it),
                               derive_seed(config.seed, "episode", it));
    score_group(batch, config);

    IterationRecord rec;
    rec.iteration = it;
    rec.mean_return = batch.mean_return;
    rec.min_return = *std::min_element(batch.returns.begin(), batch.returns.end());
    rec.max_return = *std::max_element(batch.returns.begin(), batch.returns.end());
    for (std::size_t e = 0; e < config.epochs; ++e) {
      num::Tape tape;
      LossResult res;
      {
        num::TapeScope scope(&tape);
        res = total_loss(batch, model, config);
      }
      const double loss = res.loss.item();
      if (!std::isfinite(loss)) {
        throw DivergenceError(fmt::format("iteration {} epoch {}: loss is {}", it, e, loss));
      }
      if (res.mean_abs_ratio_dev > kMaxMeanRatioDeviation) {
        throw DivergenceError(fmt::format("iteration {} epoch {}: mean |ratio - 1| = {} exceeds {}", it, e,
                                          res.mean_abs_ratio_dev, kMaxMeanRatioDeviation));
      }
      tape.backward(res.loss);
      adam.step();
      rec.loss = loss;
      rec.mean_kl = res.mean_kl;
      rec.mean_abs_ratio_dev = res.mean_abs_ratio_dev;
    }
    if (hooks.record_time) {
      rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    log.push_back(rec);
    if (hooks.on_iteration) hooks.on_iteration(rec, model);
  }
  return log;
}

}  // namespace mait::grpo
