#include "mait/model/model.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>

#include "mait/num/ops.hpp"

namespace mait::model {

namespace ops = mait::num;
using num::NoGradGuard;
using num::NumericError;
using num::ShapeError;

namespace {

// Visits every parameter slot in the canonical order. Works on const and
// non-const models so that parameters() and clone() share one listing.
template <class Model, class F>
void visit_parameters(Model& m, F&& f) {
  f("embed.state_proj", m.state_proj);
  f("embed.temporal", m.temporal);
  f("embed.identity", m.identity);
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    auto& layer = m.layers[l];
    const std::string p = fmt::format("layers.{}.", l);
    if (layer.kind == LayerKind::attention) {
      f(p + "attn.wq", layer.attention.wq);
      f(p + "attn.wk", layer.attention.wk);
      f(p + "attn.wv", layer.attention.wv);
      f(p + "attn.wz", layer.attention.wz);
    } else {
      auto& s = layer.mamba;
      f(p + "ssm.in_proj", s.in_proj);
      f(p + "ssm.a_raw", s.a_raw);
      f(p + "ssm.b", s.b);
      f(p + "ssm.c", s.c);
      if (s.mode == SsmMode::selective) {
        f(p + "ssm.delta_proj", s.delta_proj);
        f(p + "ssm.delta_bias", s.delta_bias);
      } else {
        f(p + "ssm.delta_raw", s.delta_raw);
      }
      f(p + "ssm.out_proj", s.out_proj);
    }
    f(p + "mix_norm", layer.sub.mix_norm);
    f(p + "mlp_norm", layer.sub.mlp_norm);
    f(p + "mlp.w1", layer.sub.w1);
    f(p + "mlp.b1", layer.sub.b1);
    f(p + "mlp.w2", layer.sub.w2);
    f(p + "mlp.b2", layer.sub.b2);
  }
  f("final_norm", m.final_norm);
  f("head.wq", m.head.wq);
  if (m.config.head_kind == HeadKind::continuous) f("head.log_std", m.head.log_std);
}

double inverse_softplus(double y) { return std::log(std::expm1(y)); }

class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(derive_seed(seed, "init")) {}

  DiffArray glorot(std::size_t fan_in, std::size_t fan_out) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    return uniform({fan_in, fan_out}, bound);
  }
  DiffArray uniform(num::Shape shape, double bound) {
    std::vector<double> v(num::shape_size(shape));
    for (auto& x : v) x = rng_.uniform(-bound, bound);
    return DiffArray::parameter(std::move(shape), std::move(v));
  }
  DiffArray normal(num::Shape shape, double stddev) {
    std::vector<double> v(num::shape_size(shape));
    for (auto& x : v) x = stddev * rng_.normal();
    return DiffArray::parameter(std::move(shape), std::move(v));
  }
  static DiffArray fill(num::Shape shape, double value) {
    return DiffArray::parameter(shape, std::vector<double>(num::shape_size(shape), value));
  }

 private:
  Rng rng_;
};

MambaLayerParams init_mamba(const MaitConfig& c, Initializer& init) {
  const std::size_t d = c.d_model, s = c.d_state;
  MambaLayerParams p;
  p.mode = c.ssm_mode;
  p.in_proj = init.glorot(d, d);
  // -softplus(a_raw) spans [-1, -0.1] across the state index, same for every channel.
  std::vector<double> a(d * s);
  for (std::size_t ch = 0; ch < d; ++ch) {
    for (std::size_t k = 0; k < s; ++k) {
      const double mag = s == 1 ? 0.5 : 0.1 + 0.9 * static_cast<double>(k) / static_cast<double>(s - 1);
      a[ch * s + k] = inverse_softplus(mag);
    }
  }
  p.a_raw = DiffArray::parameter({d, s}, std::move(a));
  const double bc = std::sqrt(6.0 / static_cast<double>(1 + s));
  p.b = init.uniform({d, s}, bc);
  p.c = init.uniform({d, s}, bc);
  if (p.mode == SsmMode::selective) {
    p.delta_proj = init.glorot(d, d);
    p.delta_bias = Initializer::fill({1, d}, inverse_softplus(0.5));
  } else {
    p.delta_raw = Initializer::fill({1, 1}, inverse_softplus(0.5));
  }
  p.out_proj = init.glorot(d, d);
  return p;
}

std::vector<double> clamp_to_scale(std::span<const double> raw, std::span<const double> scale) {
  std::vector<double> out(raw.size());
  for (std::size_t k = 0; k < raw.size(); ++k) out[k] = std::clamp(raw[k], -scale[k], scale[k]);
  return out;
}

}  // namespace

MaitModel MaitModel::clone() const {
  MaitModel out;
  out.config = config;
  out.layers.resize(layers.size());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    out.layers[l].kind = layers[l].kind;
    out.layers[l].attention.heads = layers[l].attention.heads;
    out.layers[l].attention.d_k = layers[l].attention.d_k;
    out.layers[l].mamba.mode = layers[l].mamba.mode;
  }
  std::vector<DiffArray> copies;
  visit_parameters(*this, [&](const std::string&, const DiffArray& a) { copies.push_back(a.copy()); });
  std::size_t i = 0;
  visit_parameters(out, [&](const std::string&, DiffArray& a) { a = copies[i++]; });
  return out;
}

std::vector<NamedParameter> MaitModel::parameters() const {
  std::vector<NamedParameter> out;
  visit_parameters(*this, [&](const std::string& name, const DiffArray& a) { out.emplace_back(name, a); });
  return out;
}

std::size_t MaitModel::attention_count() const {
  return static_cast<std::size_t>(std::count_if(layers.begin(), layers.end(), [](const EncoderLayer& l) {
    return l.kind == LayerKind::attention;
  }));
}

MaitModel build_model(const MaitConfig& config, std::uint64_t seed) {
  validate(config);
  const std::size_t d = config.d_model;
  const std::size_t dk = config.key_width();
  const std::size_t hidden = config.mlp_mult * d;
  Initializer init(seed);

  MaitModel m;
  m.config = config;
  m.state_proj = init.glorot(config.d_in, d);
  m.temporal = init.normal({config.max_steps, d}, 0.02);
  m.identity = init.normal({config.max_nodes, d}, 0.02);
  for (LayerKind kind : layer_layout(config.layers, config.attn_ratio)) {
    EncoderLayer layer;
    layer.kind = kind;
    if (kind == LayerKind::attention) {
      auto& a = layer.attention;
      a.heads = config.heads;
      a.d_k = dk;
      a.wq = init.glorot(d, config.heads * dk);
      a.wk = init.glorot(d, config.heads * dk);
      a.wv = init.glorot(d, config.heads * dk);
      a.wz = init.glorot(config.heads * dk, d);
    } else {
      layer.mamba = init_mamba(config, init);
    }
    layer.sub.mix_norm = Initializer::fill({1, d}, 1.0);
    layer.sub.mlp_norm = Initializer::fill({1, d}, 1.0);
    layer.sub.w1 = init.glorot(d, hidden);
    layer.sub.b1 = Initializer::fill({1, hidden}, 0.0);
    layer.sub.w2 = init.glorot(hidden, d);
    layer.sub.b2 = Initializer::fill({1, d}, 0.0);
    m.layers.push_back(std::move(layer));
  }
  m.final_norm = Initializer::fill({1, d}, 1.0);
  m.head.wq = init.glorot(d, config.out_width);
  if (config.head_kind == HeadKind::continuous) {
    m.head.log_std = Initializer::fill({1, config.out_width}, config.init_log_std);
  }
  return m;
}

DiffArray gather_rows(const DiffArray& hidden, std::span<const std::size_t> rows) {
  if (rows.empty()) throw std::invalid_argument("gather_rows: no rows requested");
  std::vector<DiffArray> parts;
  parts.reserve(rows.size());
  for (std::size_t r : rows) {
    if (r >= hidden.rows()) {
      throw std::out_of_range(fmt::format("gather_rows: row {} outside {} rows", r, hidden.rows()));
    }
    parts.push_back(ops::slice(hidden, 0, r, r + 1));
  }
  return parts.size() == 1 ? parts.front() : ops::concat(parts, 0);
}

DiffArray embed(const MaitModel& model, const NodeSequence& seq) {
  const auto& c = model.config;
  if (seq.count == 0) throw std::invalid_argument("embed: empty node sequence");
  if (seq.width != c.d_in || seq.features.size() != seq.count * seq.width) {
    throw ShapeError(fmt::format("embed: features are {}x{} ({} values), model expects width {}", seq.count,
                                 seq.width, seq.features.size(), c.d_in));
  }
  if (seq.ids.size() != seq.count) {
    throw std::invalid_argument(fmt::format("embed: {} ids for {} nodes", seq.ids.size(), seq.count));
  }
  if (seq.time >= c.max_steps) {
    throw std::out_of_range(fmt::format("embed: time {} outside temporal table of {}", seq.time, c.max_steps));
  }
  std::set<std::size_t> seen;
  for (std::size_t id : seq.ids) {
    if (id >= c.max_nodes) {
      throw std::out_of_range(fmt::format("embed: node id {} outside identity table of {}", id, c.max_nodes));
    }
    if (!seen.insert(id).second) throw std::invalid_argument(fmt::format("embed: duplicate node id {}", id));
  }
  auto x = DiffArray::constant({seq.count, seq.width}, seq.features);
  auto projected = ops::matmul(x, model.state_proj);
  auto time_row = ops::broadcast_rows(ops::slice(model.temporal, 0, seq.time, seq.time + 1), seq.count);
  auto ids = gather_rows(model.identity, seq.ids);
  return ops::add(ops::add(projected, time_row), ids);
}

DiffArray encode(const MaitModel& model, const NodeSequence& seq, SsmPath path) {
  DiffArray h = embed(model, seq);
  for (const auto& layer : model.layers) h = encoder_block(layer, h, path);
  return gained_rms_norm(h, model.final_norm);
}

DiffArray discrete_logits(const MaitModel& model, const DiffArray& uav_hidden) {
  if (model.config.head_kind != HeadKind::discrete) throw std::logic_error("discrete head on a continuous model");
  return ops::matmul(uav_hidden, model.head.wq);
}

namespace {
void check_masks(std::span<const std::uint8_t> masks, std::size_t rows, std::size_t k) {
  if (masks.size() != rows * k) {
    throw ShapeError(fmt::format("discrete head: mask has {} entries, expected {}x{}", masks.size(), rows, k));
  }
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = masks.subspan(r * k, k);
    if (std::none_of(row.begin(), row.end(), [](std::uint8_t v) { return v != 0; })) {
      throw NumericError(fmt::format("no feasible stop point for UAV row {}", r));
    }
  }
}
}  // namespace

DiffArray discrete_head(const MaitModel& model, const DiffArray& uav_hidden, std::span<const std::uint8_t> masks) {
  auto logits = discrete_logits(model, uav_hidden);
  check_masks(masks, logits.rows(), logits.cols());
  return ops::softmax_lastdim(logits, masks);
}

DiffArray discrete_log_probs(const MaitModel& model, const DiffArray& uav_hidden,
                             std::span<const std::uint8_t> masks) {
  auto logits = discrete_logits(model, uav_hidden);
  check_masks(masks, logits.rows(), logits.cols());
  return ops::log_softmax_lastdim(logits, masks);
}

Selection select_discrete(std::span<const double> probs, ActMode mode, Rng& rng) {
  if (probs.empty()) throw std::invalid_argument("select_discrete: empty distribution");
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw std::invalid_argument("select_discrete: invalid probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-6) {
    throw std::invalid_argument(fmt::format("select_discrete: probabilities sum to {}", total));
  }
  std::size_t pick = 0;
  if (mode == ActMode::greedy) {
    for (std::size_t i = 1; i < probs.size(); ++i)
      if (probs[i] > probs[pick]) pick = i;
  } else {
    const double u = rng.uniform() * total;
    double acc = 0.0;
    std::size_t last_positive = 0;
    bool found = false;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (probs[i] <= 0.0) continue;
      last_positive = i;
      acc += probs[i];
      if (u < acc) {
        pick = i;
        found = true;
        break;
      }
    }
    if (!found) pick = last_positive;  // rounding left u past the final sum
  }
  return {pick, std::log(probs[pick])};
}

GaussianHead continuous_head(const MaitModel& model, const DiffArray& uav_hidden) {
  const auto& c = model.config;
  if (c.head_kind != HeadKind::continuous) throw std::logic_error("continuous head on a discrete model");
  const std::size_t m = uav_hidden.rows();
  auto scale_row = DiffArray::constant({1, c.out_width}, c.action_scale);
  auto mean = ops::mul(ops::tanh(ops::matmul(uav_hidden, model.head.wq)), ops::broadcast_rows(scale_row, m));
  std::vector<double> log_scale(c.out_width);
  for (std::size_t k = 0; k < c.out_width; ++k) log_scale[k] = std::log(c.action_scale[k]);
  auto log_std = ops::add(model.head.log_std, DiffArray::constant({1, c.out_width}, std::move(log_scale)));
  return {mean, log_std};
}

DiffArray gaussian_log_prob(const DiffArray& x, const DiffArray& mean, const DiffArray& log_std) {
  const std::size_t m = mean.rows(), k = mean.cols();
  auto ls = log_std.rows() == m ? log_std : ops::broadcast_rows(log_std, m);
  auto z = ops::mul(ops::sub(x, mean), ops::exp(ops::scale(ls, -1.0)));
  auto per_dim = ops::add(ops::scale(ops::mul(z, z), -0.5), ops::scale(ls, -1.0));
  const double norm = -0.5 * std::log(2.0 * std::numbers::pi) * static_cast<double>(k);
  auto summed = ops::reduce_sum(per_dim, num::Axis::last);
  return ops::add(ops::reshape(summed, {m, 1}), DiffArray::constant({m, 1}, norm));
}

double gaussian_log_prob(std::span<const double> x, std::span<const double> mean, std::span<const double> log_std) {
  double out = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double z = (x[k] - mean[k]) * std::exp(-log_std[k]);
    out += -0.5 * z * z - log_std[k] - 0.5 * std::log(2.0 * std::numbers::pi);
  }
  return out;
}

PolicyOutput forward(const MaitModel& model, const PolicyInput& input, ActMode mode, Rng& rng) {
  NoGradGuard no_grad;
  if (input.uav_rows.empty()) throw std::invalid_argument("forward: no acting UAV rows");
  const auto& c = model.config;
  auto hidden = gather_rows(encode(model, input.nodes), input.uav_rows);
  const std::size_t m = input.uav_rows.size(), k = c.out_width;

  PolicyOutput out;
  out.kind = c.head_kind;
  out.decisions.resize(m);
  if (c.head_kind == HeadKind::discrete) {
    auto probs = discrete_head(model, hidden, input.masks);
    // Log-probabilities come from log_softmax so that a trainer re-evaluating
    // the same parameters reproduces them bit for bit.
    auto log_probs = discrete_log_probs(model, hidden, input.masks);
    for (std::size_t u = 0; u < m; ++u) {
      auto& d = out.decisions[u];
      d.uav_row = input.uav_rows[u];
      auto row = probs.values().subspan(u * k, k);
      d.probs.assign(row.begin(), row.end());
      auto lrow = log_probs.values().subspan(u * k, k);
      d.log_probs.assign(lrow.begin(), lrow.end());
      d.choice = select_discrete(d.probs, mode, rng).index;
      d.log_prob = d.log_probs[d.choice];
      out.joint_log_prob += d.log_prob;
    }
    return out;
  }
  auto head = continuous_head(model, hidden);
  for (std::size_t u = 0; u < m; ++u) {
    auto& d = out.decisions[u];
    d.uav_row = input.uav_rows[u];
    auto mean = head.mean.values().subspan(u * k, k);
    d.mean.assign(mean.begin(), mean.end());
    d.log_std.assign(head.log_std.values().begin(), head.log_std.values().end());
    d.raw_action = d.mean;
    if (mode == ActMode::sample) {
      for (std::size_t j = 0; j < k; ++j) d.raw_action[j] += std::exp(d.log_std[j]) * rng.normal();
    }
    d.action = clamp_to_scale(d.raw_action, c.action_scale);
  }
  // Same array arithmetic as the trainer's re-evaluation.
  std::vector<double> raw;
  for (const auto& d : out.decisions) raw.insert(raw.end(), d.raw_action.begin(), d.raw_action.end());
  auto lp = gaussian_log_prob(DiffArray::constant({m, k}, std::move(raw)), head.mean, head.log_std);
  for (std::size_t u = 0; u < m; ++u) {
    out.decisions[u].log_prob = lp[u];
    out.joint_log_prob += lp[u];
  }
  return out;
}

// ---------------------------------------------------------------------------
// checkpoint

namespace {

constexpr const char* kMagic = "mait-checkpoint 1";

void write_values(std::ostream& out, std::span<const double> values) {
  for (std::size_t i = 0; i < values.size(); ++i) out << (i ? " " : "") << fmt::format("{}", values[i]);
  out << '\n';
}

double parse_double(const std::string& token) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw std::runtime_error(fmt::format("checkpoint: bad number '{}'", token));
  }
  return v;
}

std::size_t parse_size(const std::string& token) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw std::runtime_error(fmt::format("checkpoint: bad integer '{}'", token));
  }
  return v;
}

}  // namespace

void save_checkpoint(const MaitModel& model, std::ostream& out) {
  const auto& c = model.config;
  out << kMagic << '\n';
  out << "config d_in " << c.d_in << '\n';
  out << "config d_model " << c.d_model << '\n';
  out << "config layers " << c.layers << '\n';
  out << "config attn_ratio " << fmt::format("{}", c.attn_ratio) << '\n';
  out << "config heads " << c.heads << '\n';
  out << "config d_k " << c.d_k << '\n';
  out << "config d_state " << c.d_state << '\n';
  out << "config mlp_mult " << c.mlp_mult << '\n';
  out << "config head_kind " << to_string(c.head_kind) << '\n';
  out << "config out_width " << c.out_width << '\n';
  out << "config max_nodes " << c.max_nodes << '\n';
  out << "config max_steps " << c.max_steps << '\n';
  out << "config ssm_mode " << to_string(c.ssm_mode) << '\n';
  out << "config init_log_std " << fmt::format("{}", c.init_log_std) << '\n';
  out << "config action_scale " << c.action_scale.size();
  for (double s : c.action_scale) out << ' ' << fmt::format("{}", s);
  out << '\n';
  for (const auto& [name, array] : model.parameters()) {
    out << "param " << name << ' ' << array.rank();
    for (std::size_t dim : array.shape()) out << ' ' << dim;
    out << '\n';
    write_values(out, array.values());
  }
  out << "end\n";
}

void save_checkpoint(const MaitModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot write checkpoint '{}'", path));
  save_checkpoint(model, out);
  if (!out) throw std::runtime_error(fmt::format("error writing checkpoint '{}'", path));
}

MaitModel load_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kMagic) throw std::runtime_error("checkpoint: missing header");
  MaitConfig c;
  std::vector<std::pair<std::string, std::pair<num::Shape, std::vector<double>>>> arrays;
  bool ended = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string kind, key;
    ls >> kind;
    if (kind == "end") {
      ended = true;
      break;
    }
    ls >> key;
    if (kind == "config") {
      std::string v;
      ls >> v;
      if (key == "d_in") c.d_in = parse_size(v);
      else if (key == "d_model") c.d_model = parse_size(v);
      else if (key == "layers") c.layers = parse_size(v);
      else if (key == "attn_ratio") c.attn_ratio = parse_double(v);
      else if (key == "heads") c.heads = parse_size(v);
      else if (key == "d_k") c.d_k = parse_size(v);
      else if (key == "d_state") c.d_state = parse_size(v);
      else if (key == "mlp_mult") c.mlp_mult = parse_size(v);
      else if (key == "head_kind") c.head_kind = head_kind_from_string(v);
      else if (key == "out_width") c.out_width = parse_size(v);
      else if (key == "max_nodes") c.max_nodes = parse_size(v);
      else if (key == "max_steps") c.max_steps = parse_size(v);
      else if (key == "ssm_mode") c.ssm_mode = ssm_mode_from_string(v);
      else if (key == "init_log_std") c.init_log_std = parse_double(v);
      else if (key == "action_scale") {
        c.action_scale.resize(parse_size(v));
        for (auto& s : c.action_scale) {
          std::string t;
          ls >> t;
          s = parse_double(t);
        }
      } else {
        throw std::runtime_error(fmt::format("checkpoint: unknown config key '{}'", key));
      }
    } else if (kind == "param") {
      std::string t;
      ls >> t;
      num::Shape shape(parse_size(t));
      for (auto& dim : shape) {
        ls >> t;
        dim = parse_size(t);
      }
      std::string values_line;
      if (!std::getline(in, values_line)) throw std::runtime_error(fmt::format("checkpoint: '{}' has no values", key));
      std::istringstream vs(values_line);
      std::vector<double> values;
      while (vs >> t) values.push_back(parse_double(t));
      if (values.size() != num::shape_size(shape)) {
        throw std::runtime_error(fmt::format("checkpoint: '{}' has {} values for shape {}", key, values.size(),
                                             num::shape_string(shape)));
      }
      arrays.push_back({key, {std::move(shape), std::move(values)}});
    } else if (!kind.empty()) {
      throw std::runtime_error(fmt::format("checkpoint: unexpected line '{}'", line));
    }
  }
  if (!ended) throw std::runtime_error("checkpoint: truncated (no end marker)");

  MaitModel model = build_model(c, 0);
  std::size_t matched = 0;
  visit_parameters(model, [&](const std::string& name, DiffArray& slot) {
    auto it = std::find_if(arrays.begin(), arrays.end(), [&](const auto& a) { return a.first == name; });
    if (it == arrays.end()) throw std::runtime_error(fmt::format("checkpoint: missing parameter '{}'", name));
    if (it->second.first != slot.shape()) {
      throw std::runtime_error(fmt::format("checkpoint: '{}' has shape {}, model expects {}", name,
                                           num::shape_string(it->second.first), num::shape_string(slot.shape())));
    }
    slot = DiffArray::parameter(it->second.first, it->second.second);
    ++matched;
  });
  if (matched != arrays.size()) throw std::runtime_error("checkpoint: contains parameters the config does not use");
  return model;
}

MaitModel load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot read checkpoint '{}'", path));
  return load_checkpoint(in);
}

}  // namespace mait::model
