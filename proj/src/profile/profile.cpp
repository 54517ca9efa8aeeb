#include "mait/profile/profile.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace mait::profile {

const char* to_string(EnvKind kind) {
  return kind == EnvKind::discrete_collect ? "discrete_collect" : "continuous_mec";
}

ProfileSyntaxError::ProfileSyntaxError(std::size_t line, std::size_t column, const std::string& message)
    : std::runtime_error(line == 0 ? fmt::format("profile: {}", message)
                                   : fmt::format("profile:{}:{}: {}", line, column, message)),
      line_(line),
      column_(column) {}

namespace {

constexpr std::array<const char*, 7> kSections = {"task",         "state",    "action",     "reward",
                                                   "architecture", "training", "constraints"};

// A value error at a known key; the parser adds the position.
struct BadValue {
  std::string message;
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string num(double v) { return fmt::format("{}", v); }

double to_real(const std::string& v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) {
    throw BadValue{fmt::format("expected a number, got '{}'", v)};
  }
  return out;
}

std::uint64_t to_u64(const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw BadValue{fmt::format("expected a non-negative integer, got '{}'", v)};
  }
  return out;
}

std::size_t to_count(const std::string& v) { return static_cast<std::size_t>(to_u64(v)); }

EnvKind to_env_kind(const std::string& v) {
  if (v == "discrete_collect") return EnvKind::discrete_collect;
  if (v == "continuous_mec") return EnvKind::continuous_mec;
  throw BadValue{fmt::format("unknown environment '{}' (discrete_collect, continuous_mec)", v)};
}

model::HeadKind to_head_kind(const std::string& v) {
  try {
    return model::head_kind_from_string(v);
  } catch (const std::exception&) {
    throw BadValue{fmt::format("unknown action kind '{}' (discrete, continuous)", v)};
  }
}

model::SsmMode to_ssm_mode(const std::string& v) {
  try {
    return model::ssm_mode_from_string(v);
  } catch (const std::exception&) {
    throw BadValue{fmt::format("unknown ssm_mode '{}' (lti, selective)", v)};
  }
}

std::vector<std::string> to_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto t = trim(item);
    if (t.empty()) throw BadValue{"empty list entry"};
    out.push_back(t);
  }
  return out;
}

std::vector<std::string> env_parameter_names(EnvKind kind) {
  std::vector<std::string> names;
  if (kind == EnvKind::discrete_collect) {
    env::DiscreteParams p;
    for (const auto& f : env::parameter_fields(p)) names.push_back(f.name);
  } else {
    env::ContinuousParams p;
    for (const auto& f : env::parameter_fields(p)) names.push_back(f.name);
  }
  return names;
}

void sort_overrides(TaskSection& t) {
  const auto names = env_parameter_names(t.environment);
  auto rank = [&](const std::string& n) {
    return static_cast<std::size_t>(std::find(names.begin(), names.end(), n) - names.begin());
  };
  std::stable_sort(t.env_overrides.begin(), t.env_overrides.end(),
                   [&](const auto& a, const auto& b) { return rank(a.first) < rank(b.first); });
}

// Sets one key. Returns false for an unknown key; throws BadValue on a bad value.
bool set_key(TaskProfile& p, const std::string& section, const std::string& key, const std::string& value) {
  if (section == "task") {
    auto& t = p.task;
    if (key == "name") {
      if (value.empty()) throw BadValue{"empty name"};
      t.name = value;
    } else if (key == "environment") {
      t.environment = to_env_kind(value);
    } else if (key == "nodes") {
      t.nodes = to_count(value);
    } else if (key == "uavs") {
      t.uavs = to_count(value);
    } else if (key == "world_seed") {
      t.world_seed = to_u64(value);
    } else if (key.starts_with("env.") && key.size() > 4) {
      const auto name = key.substr(4);
      const double v = to_real(value);
      auto it = std::find_if(t.env_overrides.begin(), t.env_overrides.end(),
                             [&](const auto& o) { return o.first == name; });
      if (it != t.env_overrides.end()) {
        it->second = v;
      } else {
        t.env_overrides.emplace_back(name, v);
      }
    } else {
      return false;
    }
    return true;
  }
  if (section == "state") {
    if (key != "fields") return false;
    p.state = to_list(value);
    return true;
  }
  if (section == "action") {
    if (key == "kind") {
      p.action.kind = to_head_kind(value);
    } else if (key == "width") {
      p.action.width = to_count(value);
    } else {
      return false;
    }
    return true;
  }
  if (section == "reward") {
    if (key != "id") return false;
    if (value.empty()) throw BadValue{"empty reward id"};
    p.reward = value;
    return true;
  }
  if (section == "architecture") {
    auto& a = p.architecture;
    if (key == "layers") {
      a.layers = to_count(value);
    } else if (key == "attn_ratio") {
      a.attn_ratio = to_real(value);
    } else if (key == "d_model") {
      a.d_model = to_count(value);
    } else if (key == "heads") {
      a.heads = to_count(value);
    } else if (key == "d_state") {
      a.d_state = to_count(value);
    } else if (key == "mlp_mult") {
      a.mlp_mult = to_count(value);
    } else if (key == "ssm_mode") {
      a.ssm_mode = to_ssm_mode(value);
    } else {
      return false;
    }
    return true;
  }
  if (section == "training") {
    auto& t = p.training;
    if (key == "group_size") {
      t.group_size = to_count(value);
    } else if (key == "gamma") {
      t.gamma = to_real(value);
    } else if (key == "clip_eps") {
      t.clip_eps = to_real(value);
    } else if (key == "kl_coef") {
      t.kl_coef = to_real(value);
    } else if (key == "delta") {
      t.delta = to_real(value);
    } else if (key == "learning_rate") {
      t.learning_rate = to_real(value);
    } else if (key == "epochs") {
      t.epochs = to_count(value);
    } else if (key == "iterations") {
      t.iterations = to_count(value);
    } else if (key == "seed") {
      t.seed = to_u64(value);
    } else if (key == "checkpoint_every") {
      t.checkpoint_every = to_count(value);
    } else {
      return false;
    }
    return true;
  }
  if (section == "constraints") {
    const double v = to_real(value);
    auto it = std::find_if(p.constraints.begin(), p.constraints.end(), [&](const auto& c) { return c.name == key; });
    if (it != p.constraints.end()) {
      it->value = v;
    } else {
      p.constraints.push_back({key, v});
    }
    return true;
  }
  return false;
}

const std::map<std::string, std::vector<std::string>>& required_keys() {
  static const std::map<std::string, std::vector<std::string>> r = {
      {"task", {"name", "environment", "nodes", "uavs", "world_seed"}},
      {"state", {"fields"}},
      {"action", {"kind", "width"}},
      {"reward", {"id"}},
      {"architecture", {"layers", "attn_ratio", "d_model", "heads"}},
      {"training", {}},
      {"constraints", {}},
  };
  return r;
}

}  // namespace

TaskProfile parse_profile(const std::string& text) {
  TaskProfile p;
  std::map<std::string, std::size_t> section_line;
  std::map<std::string, std::set<std::string>> seen;
  std::map<std::string, std::size_t> override_line;
  std::string section;
  std::istringstream in(text);
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string_view view(raw);
    if (auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    const auto line = trim(view);
    if (line.empty()) continue;
    const std::size_t indent = raw.find_first_not_of(" \t") + 1;
    if (line.front() == '[') {
      if (line.back() != ']') throw ProfileSyntaxError(lineno, indent, "unterminated section header");
      const auto name = trim(std::string_view(line).substr(1, line.size() - 2));
      if (std::find(kSections.begin(), kSections.end(), name) == kSections.end()) {
        throw ProfileSyntaxError(lineno, indent + 1, fmt::format("unknown section [{}]", name));
      }
      if (section_line.count(name)) {
        throw ProfileSyntaxError(lineno, indent, fmt::format("section [{}] repeated (first at line {})", name,
                                                             section_line[name]));
      }
      section = name;
      section_line[name] = lineno;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ProfileSyntaxError(lineno, indent, "expected 'key = value'");
    if (section.empty()) throw ProfileSyntaxError(lineno, indent, "key outside any section");
    const auto key = trim(std::string_view(line).substr(0, eq));
    const auto value = trim(std::string_view(line).substr(eq + 1));
    const auto eq_pos = raw.find('=', indent - 1);
    const auto value_pos = raw.find_first_not_of(" \t", eq_pos + 1);
    const std::size_t value_col = (value_pos == std::string::npos ? eq_pos + 1 : value_pos) + 1;
    if (key.empty()) throw ProfileSyntaxError(lineno, indent, "empty key");
    if (!seen[section].insert(key).second) {
      throw ProfileSyntaxError(lineno, indent, fmt::format("duplicate key '{}' in [{}]", key, section));
    }
    try {
      if (!set_key(p, section, key, value)) {
        throw ProfileSyntaxError(lineno, indent, fmt::format("unknown key '{}' in [{}]", key, section));
      }
    } catch (const BadValue& e) {
      throw ProfileSyntaxError(lineno, value_col, fmt::format("{}.{}: {}", section, key, e.message));
    }
    if (section == "task" && key.starts_with("env.")) override_line[key.substr(4)] = lineno;
  }
  for (const char* s : kSections) {
    if (!section_line.count(s)) throw ProfileSyntaxError(0, 0, fmt::format("missing section [{}]", s));
    for (const auto& k : required_keys().at(s)) {
      if (!seen[s].count(k)) {
        throw ProfileSyntaxError(section_line[s], 1, fmt::format("[{}] is missing '{}'", s, k));
      }
    }
  }
  const auto names = env_parameter_names(p.task.environment);
  for (const auto& [name, v] : p.task.env_overrides) {
    if (std::find(names.begin(), names.end(), name) == names.end()) {
      throw ProfileSyntaxError(override_line[name], 1,
                               fmt::format("unknown parameter 'env.{}' for {}", name, to_string(p.task.environment)));
    }
  }
  sort_overrides(p.task);
  return p;
}

TaskProfile read_profile_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot read profile '{}'", path));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_profile(ss.str());
}

std::string serialize_profile(const TaskProfile& p) {
  std::string out;
  auto kv = [&](const std::string& k, const std::string& v) { out += k + " = " + v + "\n"; };
  out += "[task]\n";
  kv("name", p.task.name);
  kv("environment", to_string(p.task.environment));
  kv("nodes", std::to_string(p.task.nodes));
  kv("uavs", std::to_string(p.task.uavs));
  kv("world_seed", std::to_string(p.task.world_seed));
  auto task = p.task;
  sort_overrides(task);
  for (const auto& [name, v] : task.env_overrides) kv("env." + name, num(v));

  std::string fields;
  for (std::size_t i = 0; i < p.state.size(); ++i) fields += (i ? ", " : "") + p.state[i];
  out += "\n[state]\n";
  kv("fields", fields);

  out += "\n[action]\n";
  kv("kind", model::to_string(p.action.kind));
  kv("width", std::to_string(p.action.width));

  out += "\n[reward]\n";
  kv("id", p.reward);

  const auto& a = p.architecture;
  out += "\n[architecture]\n";
  kv("layers", std::to_string(a.layers));
  kv("attn_ratio", num(a.attn_ratio));
  kv("d_model", std::to_string(a.d_model));
  kv("heads", std::to_string(a.heads));
  if (a.d_state) kv("d_state", std::to_string(*a.d_state));
  if (a.mlp_mult) kv("mlp_mult", std::to_string(*a.mlp_mult));
  if (a.ssm_mode) kv("ssm_mode", model::to_string(*a.ssm_mode));

  const auto& t = p.training;
  out += "\n[training]\n";
  if (t.group_size) kv("group_size", std::to_string(*t.group_size));
  if (t.gamma) kv("gamma", num(*t.gamma));
  if (t.clip_eps) kv("clip_eps", num(*t.clip_eps));
  if (t.kl_coef) kv("kl_coef", num(*t.kl_coef));
  if (t.delta) kv("delta", num(*t.delta));
  if (t.learning_rate) kv("learning_rate", num(*t.learning_rate));
  if (t.epochs) kv("epochs", std::to_string(*t.epochs));
  if (t.iterations) kv("iterations", std::to_string(*t.iterations));
  if (t.seed) kv("seed", std::to_string(*t.seed));
  if (t.checkpoint_every) kv("checkpoint_every", std::to_string(*t.checkpoint_every));

  out += "\n[constraints]\n";
  for (const auto& c : p.constraints) kv(c.name, num(c.value));
  return out;
}

void apply_override(TaskProfile& profile, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto path = trim(std::string_view(assignment).substr(0, eq == std::string::npos ? 0 : eq));
  const auto dot = path.find('.');
  if (eq == std::string::npos || dot == std::string::npos) {
    throw std::invalid_argument(fmt::format("override '{}' is not section.key=value", assignment));
  }
  const auto section = path.substr(0, dot), key = path.substr(dot + 1);
  const auto value = trim(std::string_view(assignment).substr(eq + 1));
  if (std::find(kSections.begin(), kSections.end(), section) == kSections.end()) {
    throw std::invalid_argument(fmt::format("override '{}': unknown section [{}]", assignment, section));
  }
  auto updated = profile;
  try {
    if (!set_key(updated, section, key, value)) {
      throw std::invalid_argument(fmt::format("override '{}': unknown key '{}' in [{}]", assignment, key, section));
    }
  } catch (const BadValue& e) {
    throw std::invalid_argument(fmt::format("override '{}': {}", assignment, e.message));
  }
  const auto names = env_parameter_names(updated.task.environment);
  for (const auto& [name, v] : updated.task.env_overrides) {
    if (std::find(names.begin(), names.end(), name) == names.end()) {
      throw std::invalid_argument(fmt::format("override '{}': unknown parameter 'env.{}' for {}", assignment, name,
                                              to_string(updated.task.environment)));
    }
  }
  sort_overrides(updated.task);
  profile = std::move(updated);
}

std::string ValidationReport::to_string() const {
  std::string out;
  for (const auto& e : errors) out += fmt::format("error: {}: {}\n", e.path, e.message);
  for (const auto& w : warnings) out += fmt::format("warning: {}: {}\n", w.path, w.message);
  return out;
}

std::vector<std::string> state_fields(EnvKind kind) {
  if (kind == EnvKind::discrete_collect) return {"position", "remaining_data", "visited", "storage", "battery"};
  return {"position", "task_size", "cycles", "heading", "energy"};
}

std::vector<std::string> constraint_names(EnvKind kind) {
  if (kind == EnvKind::discrete_collect) return {"storage", "battery"};
  return {"max_distance", "max_angle", "max_tasks", "compute_budget", "coverage_radius"};
}

std::string reward_id(EnvKind kind) { return kind == EnvKind::discrete_collect ? "uav_energy" : "ue_energy"; }

namespace {

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + v[i];
  return out;
}

// Environment parameter each constraint writes.
std::string constraint_target(const std::string& name) {
  static const std::map<std::string, std::string> m = {
      {"storage", "storage_mb"}, {"battery", "battery_mah"},   {"max_distance", "d_max"},
      {"max_angle", "theta_max"}, {"max_tasks", "max_tasks"}, {"coverage_radius", "coverage"},
  };
  auto it = m.find(name);
  return it == m.end() ? std::string() : it->second;
}

template <class Params>
void apply_fields(Params& params, const TaskProfile& p, std::vector<Issue>& errors) {
  auto fields = env::parameter_fields(params);
  auto set = [&](const std::string& path, const std::string& name, double v) {
    auto it = std::find_if(fields.begin(), fields.end(), [&](const auto& f) { return f.name == name; });
    if (it == fields.end()) {
      errors.push_back({path, fmt::format("no environment parameter '{}'", name)});
      return;
    }
    try {
      it->set(v);
    } catch (const std::exception& e) {
      errors.push_back({path, e.what()});
    }
  };
  for (const auto& [name, v] : p.task.env_overrides) set("task.env." + name, name, v);
  const auto known = constraint_names(p.task.environment);
  std::set<std::string> seen;
  for (const auto& c : p.constraints) {
    const auto path = "constraints." + c.name;
    if (!seen.insert(c.name).second) {
      errors.push_back({path, "constraint listed twice"});
      continue;
    }
    if (std::find(known.begin(), known.end(), c.name) == known.end()) {
      errors.push_back({path, fmt::format("unknown constraint for {}; recognized: {}",
                                          to_string(p.task.environment), join(known))});
      continue;
    }
    if constexpr (std::is_same_v<Params, env::ContinuousParams>) {
      if (c.name == "compute_budget") {
        if (!(c.value > 0.0)) {
          errors.push_back({path, "compute budget must be positive"});
        } else {
          set(path, "f_max", c.value / params.t_max);
        }
        continue;
      }
    }
    set(path, constraint_target(c.name), c.value);
  }
}

model::MaitConfig model_config(const TaskProfile& p, const EnvSpec& env) {
  model::MaitConfig m;
  const auto& a = p.architecture;
  m.d_in = 4;
  m.d_model = a.d_model;
  m.layers = a.layers;
  m.attn_ratio = a.attn_ratio;
  m.heads = a.heads;
  if (a.d_state) m.d_state = *a.d_state;
  if (a.mlp_mult) m.mlp_mult = *a.mlp_mult;
  if (a.ssm_mode) m.ssm_mode = *a.ssm_mode;
  m.head_kind = p.action.kind;
  m.out_width = p.action.width;
  m.max_nodes = p.task.nodes + p.task.uavs;
  if (const auto* c = std::get_if<env::ContinuousParams>(&env.params)) {
    m.max_steps = c->slots;
    m.action_scale = {c->d_max, c->theta_max};
  } else {
    m.max_steps = p.task.nodes + p.task.uavs;
  }
  return m;
}

struct Checked {
  ValidationReport report;
  EnvSpec env;
};

Checked check(const TaskProfile& p) {
  Checked out;
  auto& errors = out.report.errors;
  auto& warnings = out.report.warnings;
  const auto kind = p.task.environment;

  if (p.task.name.empty()) errors.push_back({"task.name", "empty"});
  if (p.task.nodes < 1) errors.push_back({"task.nodes", "need at least one node"});
  if (p.task.uavs < 1) errors.push_back({"task.uavs", "need at least one UAV"});

  if (p.state.empty()) errors.push_back({"state.fields", "no state fields"});
  const auto fields = state_fields(kind);
  std::set<std::string> seen_fields;
  for (const auto& f : p.state) {
    if (std::find(fields.begin(), fields.end(), f) == fields.end()) {
      errors.push_back({"state.fields", fmt::format("'{}' not observed by {}; recognized: {}", f, to_string(kind),
                                                    join(fields))});
    } else if (!seen_fields.insert(f).second) {
      errors.push_back({"state.fields", fmt::format("'{}' listed twice", f)});
    }
  }

  const auto want_kind = kind == EnvKind::discrete_collect ? model::HeadKind::discrete : model::HeadKind::continuous;
  if (p.action.kind != want_kind) {
    errors.push_back({"action.kind", fmt::format("{} actions do not fit {} (needs {})", model::to_string(p.action.kind),
                                                 to_string(kind), model::to_string(want_kind))});
  }
  const std::size_t want_width = kind == EnvKind::discrete_collect ? p.task.nodes : 2;
  if (p.action.width != want_width) {
    errors.push_back({"action.width", fmt::format("{} does not match the environment's {}", p.action.width, want_width)});
  }
  if (p.reward != reward_id(kind)) {
    errors.push_back({"reward.id", fmt::format("'{}' unknown for {}; recognized: {}", p.reward, to_string(kind),
                                               reward_id(kind))});
  }

  const auto& a = p.architecture;
  if (a.layers < 1) errors.push_back({"architecture.layers", "need at least one layer"});
  if (!(a.attn_ratio >= 0.0 && a.attn_ratio <= 1.0)) {
    errors.push_back({"architecture.attn_ratio", fmt::format("{} outside [0, 1]", a.attn_ratio)});
  }
  if (a.d_model < 1) errors.push_back({"architecture.d_model", "must be positive"});
  if (a.heads < 1 || (a.d_model > 0 && a.heads > 0 && a.d_model % a.heads != 0)) {
    errors.push_back({"architecture.heads", fmt::format("{} heads do not divide d_model {}", a.heads, a.d_model)});
  }
  if (a.d_state && *a.d_state < 1) errors.push_back({"architecture.d_state", "must be positive"});
  if (a.mlp_mult && *a.mlp_mult < 1) errors.push_back({"architecture.mlp_mult", "must be positive"});

  const auto& t = p.training;
  const grpo::TrainConfig defaults;
  const double default_gamma = kind == EnvKind::discrete_collect ? 1.0 : 0.99;
  auto missing = [&](const char* key, const std::string& value) {
    warnings.push_back({fmt::format("training.{}", key), fmt::format("omitted, using default {}", value)});
  };
  if (!t.group_size) missing("group_size", std::to_string(defaults.group_size));
  if (!t.gamma) missing("gamma", num(default_gamma));
  if (!t.clip_eps) missing("clip_eps", num(defaults.clip_eps));
  if (!t.kl_coef) missing("kl_coef", num(defaults.kl_coef));
  if (!t.delta) missing("delta", num(defaults.delta));
  if (!t.learning_rate) missing("learning_rate", num(defaults.learning_rate));
  if (!t.epochs) missing("epochs", std::to_string(defaults.epochs));
  if (!t.iterations) missing("iterations", std::to_string(defaults.iterations));
  if (!t.seed) missing("seed", std::to_string(defaults.seed));
  if (t.group_size && *t.group_size < 1) errors.push_back({"training.group_size", "must be at least 1"});
  if (t.gamma && !(*t.gamma >= 0.0 && *t.gamma <= 1.0)) {
    errors.push_back({"training.gamma", fmt::format("{} outside [0, 1]", *t.gamma)});
  }
  if (t.clip_eps && !(*t.clip_eps > 0.0 && *t.clip_eps < 1.0)) {
    errors.push_back({"training.clip_eps", fmt::format("{} outside (0, 1)", *t.clip_eps)});
  }
  if (t.kl_coef && *t.kl_coef < 0.0) errors.push_back({"training.kl_coef", "must not be negative"});
  if (t.delta && !(*t.delta > 0.0)) errors.push_back({"training.delta", "must be positive"});
  if (t.learning_rate && !(*t.learning_rate > 0.0)) errors.push_back({"training.learning_rate", "must be positive"});
  if (t.epochs && *t.epochs < 1) errors.push_back({"training.epochs", "must be at least 1"});

  out.env.kind = kind;
  out.env.nodes = p.task.nodes;
  out.env.uavs = p.task.uavs;
  out.env.world_seed = p.task.world_seed;
  if (kind == EnvKind::discrete_collect) {
    env::DiscreteParams params;
    apply_fields(params, p, errors);
    out.env.params = params;
  } else {
    env::ContinuousParams params;
    apply_fields(params, p, errors);
    out.env.params = params;
  }
  if (errors.empty()) {
    for (const auto& v : model::config_violations(model_config(p, out.env))) errors.push_back({"architecture", v});
  }
  return out;
}

}  // namespace

ValidationReport validate(const TaskProfile& profile) { return check(profile).report; }

DerivedConfigs derive_configs(const TaskProfile& p) {
  auto checked = check(p);
  if (!checked.report.ok()) throw std::invalid_argument("invalid task profile:\n" + checked.report.to_string());
  DerivedConfigs d;
  d.env = checked.env;
  d.warnings = checked.report.warnings;

  d.model = model_config(p, d.env);

  auto& t = d.train;
  const auto& s = p.training;
  t.gamma = p.task.environment == EnvKind::discrete_collect ? 1.0 : 0.99;
  if (s.group_size) t.group_size = *s.group_size;
  if (s.gamma) t.gamma = *s.gamma;
  if (s.clip_eps) t.clip_eps = *s.clip_eps;
  if (s.kl_coef) t.kl_coef = *s.kl_coef;
  if (s.delta) t.delta = *s.delta;
  if (s.learning_rate) t.learning_rate = *s.learning_rate;
  if (s.epochs) t.epochs = *s.epochs;
  if (s.iterations) t.iterations = *s.iterations;
  if (s.seed) t.seed = *s.seed;
  d.checkpoint_every = s.checkpoint_every.value_or(0);
  grpo::validate(t);
  return d;
}

env::Instance make_instance(const EnvSpec& spec) {
  if (const auto* c = std::get_if<env::ContinuousParams>(&spec.params)) {
    return env::make_continuous_world(spec.nodes, spec.uavs, spec.world_seed, *c);
  }
  return env::make_discrete_world(spec.nodes, spec.uavs, spec.world_seed, std::get<env::DiscreteParams>(spec.params));
}

std::unique_ptr<env::Environment> make_environment(const env::Instance& instance) {
  if (const auto* c = std::get_if<env::ContinuousWorld>(&instance)) return std::make_unique<env::ContinuousEnv>(*c);
  return std::make_unique<env::DiscreteEnv>(std::get<env::DiscreteWorld>(instance));
}

std::unique_ptr<env::Environment> make_environment(const EnvSpec& spec) {
  return make_environment(make_instance(spec));
}

}  // namespace mait::profile
