#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>
#include <string>

#include "mait/model/model.hpp"
#include "mait/num/gradcheck.hpp"
#include "mait/num/ops.hpp"
#include "mait/num/tape.hpp"
#include "support.hpp"

using namespace mait::model;
using mait::Rng;
using mait::num::DiffArray;
using mait::num::NumericError;
using test_support::dense_matmul;
using test_support::max_abs;
using test_support::max_abs_diff;
using test_support::random_param;
using test_support::random_values;

namespace {

MaitConfig toy_config(HeadKind kind = HeadKind::discrete) {
  MaitConfig c;
  c.d_in = 4;
  c.d_model = 8;
  c.layers = 2;
  c.attn_ratio = 0.5;
  c.heads = 2;
  c.d_state = 2;
  c.mlp_mult = 2;
  c.head_kind = kind;
  c.out_width = kind == HeadKind::discrete ? 5 : 2;
  c.max_nodes = 8;
  c.max_steps = 8;
  if (kind == HeadKind::continuous) c.action_scale = {30.0, std::numbers::pi / 4};
  return c;
}

NodeSequence random_sequence(Rng& rng, std::size_t n, std::size_t width, std::size_t time = 0) {
  NodeSequence s;
  s.count = n;
  s.width = width;
  s.features = random_values(rng, n * width, 0.0, 1.0);
  s.time = time;
  for (std::size_t i = 0; i < n; ++i) s.ids.push_back(i);
  return s;
}

void zero_out(DiffArray& a) {
  for (auto& v : a.mutable_values()) v = 0.0;
}

// Per-pair loop over nodes and heads, no tape and no matrix ops.
std::vector<double> naive_attention(const AttentionLayerParams& p, std::span<const double> h, std::size_t n,
                                    std::size_t d) {
  const std::size_t hk = p.heads * p.d_k;
  auto proj = [&](const DiffArray& w, std::size_t i, std::size_t col) {
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) acc += h[i * d + j] * w.at(j, col);
    return acc;
  };
  std::vector<double> merged(n * hk, 0.0);
  for (std::size_t head = 0; head < p.heads; ++head) {
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> score(n);
      double mx = -INFINITY;
      for (std::size_t j = 0; j < n; ++j) {
        double dot = 0.0;
        for (std::size_t k = 0; k < p.d_k; ++k) {
          const std::size_t col = head * p.d_k + k;
          dot += proj(p.wq, i, col) * proj(p.wk, j, col);
        }
        score[j] = dot / std::sqrt(static_cast<double>(p.d_k));
        mx = std::max(mx, score[j]);
      }
      double z = 0.0;
      for (auto& s : score) z += (s = std::exp(s - mx));
      for (std::size_t k = 0; k < p.d_k; ++k) {
        const std::size_t col = head * p.d_k + k;
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += score[j] / z * proj(p.wv, j, col);
        merged[i * hk + col] = acc;
      }
    }
  }
  return dense_matmul(merged, p.wz.values(), n, hk, d);
}

}  // namespace

TEST_CASE("build_model: layer counts follow the rounding rule") {
  struct Case {
    std::size_t layers;
    double ratio;
    std::size_t attn;
  };
  for (auto [layers, ratio, attn] : {Case{10, 0.7, 7}, Case{15, 0.3, 5}, Case{2, 1.0, 2}, Case{4, 0.0, 0}}) {
    auto c = toy_config();
    c.layers = layers;
    c.attn_ratio = ratio;
    auto m = build_model(c, 1);
    CHECK(m.layers.size() == layers);
    CHECK(m.attention_count() == attn);
    CHECK(m.mamba_count() == layers - attn);
  }
}

TEST_CASE("layer layout spreads attention evenly starting at layer 0") {
  auto kinds = layer_layout(10, 0.7);
  CHECK(kinds[0] == LayerKind::attention);
  std::vector<std::size_t> attn;
  for (std::size_t i = 0; i < kinds.size(); ++i)
    if (kinds[i] == LayerKind::attention) attn.push_back(i);
  CHECK(attn == std::vector<std::size_t>{0, 1, 2, 4, 5, 7, 8});
  auto five = layer_layout(15, 0.3);
  std::vector<std::size_t> pos;
  for (std::size_t i = 0; i < five.size(); ++i)
    if (five[i] == LayerKind::attention) pos.push_back(i);
  CHECK(pos == std::vector<std::size_t>{0, 3, 6, 9, 12});
}

TEST_CASE("build_model rejects invalid configs with every violation") {
  auto c = toy_config();
  c.heads = 3;
  c.out_width = 0;
  try {
    (void)build_model(c, 1);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    CHECK(msg.find("divisible") != std::string::npos);
    CHECK(msg.find("out_width") != std::string::npos);
  }
}

TEST_CASE("build_model is seed-deterministic and parameters are finite") {
  auto a = build_model(toy_config(), 42);
  auto b = build_model(toy_config(), 42);
  auto c = build_model(toy_config(), 43);
  auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  REQUIRE(pa.size() == pb.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].first == pb[i].first);
    CHECK(max_abs_diff(pa[i].second.values(), pb[i].second.values()) == 0.0);
    for (double v : pa[i].second.values()) CHECK(std::isfinite(v));
    if (max_abs_diff(pa[i].second.values(), pc[i].second.values()) > 0.0) any_diff = true;
  }
  CHECK(any_diff);
}

TEST_CASE("initialized SSM state matrices span [-1, -0.1]") {
  auto c = toy_config();
  c.d_state = 4;
  auto m = build_model(c, 1);
  for (const auto& layer : m.layers) {
    if (layer.kind != LayerKind::mamba) continue;
    auto a = mait::num::softplus(layer.mamba.a_raw);
    CHECK(a.at(0, 0) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(a.at(0, 3) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("clone is independent of the original") {
  auto m = build_model(toy_config(), 3);
  auto c = m.clone();
  c.head.wq.mutable_values()[0] += 1.0;
  CHECK(m.head.wq[0] + 1.0 == c.head.wq[0]);
}

TEST_CASE("embed: trivial and oracle cases") {
  auto c = toy_config();
  auto m = build_model(c, 5);
  Rng rng(2);

  SUBCASE("zero inputs and zero tables give zero") {
    zero_out(m.temporal);
    zero_out(m.identity);
    auto seq = random_sequence(rng, 3, 4);
    std::fill(seq.features.begin(), seq.features.end(), 0.0);
    CHECK(max_abs(embed(m, seq).values()) == 0.0);
  }
  SUBCASE("identity projection") {
    c.d_model = 4;
    c.heads = 1;
    auto sq = build_model(c, 5);
    auto w = sq.state_proj.mutable_values();
    for (std::size_t i = 0; i < 16; ++i) w[i] = (i % 5 == 0) ? 1.0 : 0.0;
    zero_out(sq.temporal);
    auto seq = random_sequence(rng, 3, 4);
    seq.ids = {5, 0, 2};
    auto h = embed(sq, seq);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 4; ++j)
        CHECK(h.at(i, j) == seq.at(i, j) + sq.identity.at(seq.ids[i], j));
  }
  SUBCASE("dense arithmetic oracle") {
    auto seq = random_sequence(rng, 3, 4, 6);
    seq.ids = {7, 1, 3};
    auto h = embed(m, seq);
    auto proj = dense_matmul(seq.features, m.state_proj.values(), 3, 4, 8);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 8; ++j) {
        const double expect = proj[i * 8 + j] + m.temporal.at(6, j) + m.identity.at(seq.ids[i], j);
        CHECK(std::abs(h.at(i, j) - expect) < 1e-12);
      }
  }
  SUBCASE("table ranges are enforced") {
    auto seq = random_sequence(rng, 2, 4, 8);
    CHECK_THROWS_AS(embed(m, seq), std::out_of_range);
    seq.time = 0;
    seq.ids = {0, 8};
    CHECK_THROWS_AS(embed(m, seq), std::out_of_range);
    seq.ids = {1, 1};
    CHECK_THROWS_AS(embed(m, seq), std::invalid_argument);
  }
}

TEST_CASE("attention: single node, identical rows, naive oracle") {
  Rng rng(4);
  AttentionLayerParams p;
  p.heads = 2;
  p.d_k = 4;
  p.wq = random_param(rng, {8, 8});
  p.wk = random_param(rng, {8, 8});
  p.wv = random_param(rng, {8, 8});
  p.wz = random_param(rng, {8, 8});

  SUBCASE("N = 1 reduces to W^z W^v h") {
    auto h = DiffArray::constant({1, 8}, random_values(rng, 8));
    auto y = attention_mix(p, h);
    auto v = dense_matmul(h.values(), p.wv.values(), 1, 8, 8);
    auto expect = dense_matmul(v, p.wz.values(), 1, 8, 8);
    CHECK(max_abs_diff(y.values(), expect) < 1e-13);
  }
  SUBCASE("identical rows get equal weights") {
    auto row = random_values(rng, 8);
    std::vector<double> two(row);
    two.insert(two.end(), row.begin(), row.end());
    auto h = DiffArray::constant({2, 8}, two);
    auto q = mait::num::slice(mait::num::matmul(h, p.wq), 1, 0, 4);
    auto k = mait::num::slice(mait::num::matmul(h, p.wk), 1, 0, 4);
    auto w = mait::num::softmax_lastdim(mait::num::scale(mait::num::matmul(q, mait::num::transpose(k)), 0.5));
    for (double x : w.values()) CHECK(x == 0.5);
  }
  SUBCASE("random input matches the per-pair loop") {
    for (int trial = 0; trial < 10; ++trial) {
      auto h = DiffArray::constant({4, 8}, random_values(rng, 32, -2, 2));
      auto y = attention_mix(p, h);
      auto expect = naive_attention(p, h.values(), 4, 8);
      CHECK(max_abs_diff(y.values(), expect) < 1e-10);
    }
  }
}

TEST_CASE("discrete head: uniform, renormalized, oracle, and errors") {
  auto m = build_model(toy_config(), 7);
  Rng rng(8);
  const std::size_t k = 5;

  SUBCASE("equal logits") {
    zero_out(m.head.wq);
    auto h = DiffArray::constant({1, 8}, random_values(rng, 8));
    std::vector<std::uint8_t> all(k, 1), some{1, 1, 0, 1, 1};
    auto p = discrete_head(m, h, all);
    for (double v : p.values()) CHECK(v == doctest::Approx(0.2).epsilon(1e-15));
    auto q = discrete_head(m, h, some);
    CHECK(q[2] == 0.0);
    for (std::size_t i : {0, 1, 3, 4}) CHECK(q[i] == doctest::Approx(0.25).epsilon(1e-15));
  }
  SUBCASE("masked softmax oracle") {
    for (int trial = 0; trial < 50; ++trial) {
      auto h = DiffArray::constant({3, 8}, random_values(rng, 24, -2, 2));
      std::vector<std::uint8_t> mask(3 * k);
      for (std::size_t r = 0; r < 3; ++r) {
        for (std::size_t j = 0; j < k; ++j) mask[r * k + j] = rng.uniform() < 0.6;
        mask[r * k + rng.below(k)] = 1;
      }
      auto p = discrete_head(m, h, mask);
      auto logits = dense_matmul(h.values(), m.head.wq.values(), 3, 8, k);
      for (std::size_t r = 0; r < 3; ++r) {
        double mx = -INFINITY, z = 0.0, total = 0.0;
        for (std::size_t j = 0; j < k; ++j)
          if (mask[r * k + j]) mx = std::max(mx, logits[r * k + j]);
        for (std::size_t j = 0; j < k; ++j)
          if (mask[r * k + j]) z += std::exp(logits[r * k + j] - mx);
        for (std::size_t j = 0; j < k; ++j) {
          const double expect = mask[r * k + j] ? std::exp(logits[r * k + j] - mx) / z : 0.0;
          if (!mask[r * k + j]) CHECK(p.at(r, j) == 0.0);
          CHECK(std::abs(p.at(r, j) - expect) < 1e-12);
          CHECK(p.at(r, j) >= 0.0);
          total += p.at(r, j);
        }
        CHECK(std::abs(total - 1.0) < 1e-9);
      }
    }
  }
  SUBCASE("argmax is invariant to a constant logit shift") {
    auto logits = DiffArray::constant({1, k}, random_values(rng, k));
    std::vector<std::uint8_t> mask{1, 0, 1, 1, 1};
    auto p1 = mait::num::softmax_lastdim(logits, mask);
    auto shifted = mait::num::add(logits, DiffArray::scalar(123.0));
    auto p2 = mait::num::softmax_lastdim(shifted, mask);
    Rng unused(0);
    CHECK(select_discrete(p1.values(), ActMode::greedy, unused).index ==
          select_discrete(p2.values(), ActMode::greedy, unused).index);
  }
  SUBCASE("all masked") {
    auto h = DiffArray::constant({1, 8}, random_values(rng, 8));
    std::vector<std::uint8_t> none(k, 0);
    try {
      (void)discrete_head(m, h, none);
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("no feasible stop point") != std::string::npos);
    }
  }
}

TEST_CASE("select_discrete: greedy, ties, and sampling frequency") {
  Rng rng(9);
  std::vector<double> p{0.1, 0.7, 0.2};
  auto s = select_discrete(p, ActMode::greedy, rng);
  CHECK(s.index == 1);
  CHECK(s.log_prob == doctest::Approx(std::log(0.7)));
  std::vector<double> tie{0.4, 0.2, 0.4};
  CHECK(select_discrete(tie, ActMode::greedy, rng).index == 0);

  std::vector<double> two{0.3, 0.7};
  int hits = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) hits += select_discrete(two, ActMode::sample, rng).index == 1;
  CHECK(std::abs(hits / static_cast<double>(n) - 0.7) < 0.01);

  std::vector<double> bad{0.5, 0.2};
  CHECK_THROWS_AS(select_discrete(bad, ActMode::greedy, rng), std::invalid_argument);
}

TEST_CASE("continuous head: mean scaling and saturation") {
  auto m = build_model(toy_config(HeadKind::continuous), 11);
  const double s0 = 30.0, s1 = std::numbers::pi / 4;

  SUBCASE("zero pre-activation gives zero mean") {
    auto h = DiffArray::constant({1, 8}, 0.0);
    auto head = continuous_head(m, h);
    CHECK(head.mean[0] == 0.0);
    CHECK(head.mean[1] == 0.0);
  }
  SUBCASE("saturated pre-activation reaches the scale") {
    auto w = m.head.wq.mutable_values();
    std::fill(w.begin(), w.end(), 0.0);
    w[0] = 1.0;   // column 0 reads h[0]
    w[1] = -1.0;  // column 1 reads -h[0]
    auto h = DiffArray::constant({1, 8}, 0.0);
    std::vector<double> big(8, 0.0);
    big[0] = 50.0;
    auto head = continuous_head(m, DiffArray::constant({1, 8}, big));
    CHECK(head.mean[0] == s0);
    CHECK(head.mean[1] == -s1);
  }
  SUBCASE("mean stays within the scale for arbitrary inputs") {
    Rng rng(12);
    for (int trial = 0; trial < 200; ++trial) {
      auto h = DiffArray::constant({2, 8}, random_values(rng, 16, -50, 50));
      auto head = continuous_head(m, h);
      for (std::size_t r = 0; r < 2; ++r) {
        CHECK(std::abs(head.mean.at(r, 0)) <= s0);
        CHECK(std::abs(head.mean.at(r, 1)) <= s1);
      }
    }
  }
  SUBCASE("log std is relative to the scale") {
    auto head = continuous_head(m, DiffArray::constant({1, 8}, 0.0));
    CHECK(std::exp(head.log_std[0]) == doctest::Approx(0.3 * s0).epsilon(1e-14));
    CHECK(std::exp(head.log_std[1]) == doctest::Approx(0.3 * s1).epsilon(1e-14));
  }
}

TEST_CASE("gaussian log density agrees between the array and scalar forms") {
  Rng rng(13);
  auto x = DiffArray::constant({2, 3}, random_values(rng, 6));
  auto mu = DiffArray::constant({2, 3}, random_values(rng, 6));
  auto ls = DiffArray::constant({1, 3}, random_values(rng, 3));
  auto lp = gaussian_log_prob(x, mu, ls);
  for (std::size_t r = 0; r < 2; ++r) {
    double direct = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
      const double sd = std::exp(ls[k]);
      const double z = (x.at(r, k) - mu.at(r, k)) / sd;
      direct += std::log(1.0 / (sd * std::sqrt(2 * std::numbers::pi)) * std::exp(-0.5 * z * z));
    }
    CHECK(lp[r] == doctest::Approx(direct).epsilon(1e-12));
    CHECK(gaussian_log_prob(x.values().subspan(r * 3, 3), mu.values().subspan(r * 3, 3), ls.values()) ==
          doctest::Approx(direct).epsilon(1e-12));
  }
}

TEST_CASE("forward is deterministic given the rng state") {
  for (HeadKind kind : {HeadKind::discrete, HeadKind::continuous}) {
    auto m = build_model(toy_config(kind), 21);
    Rng data(1);
    PolicyInput in;
    in.nodes = random_sequence(data, 6, 4, 2);
    in.uav_rows = {4, 5};
    if (kind == HeadKind::discrete) in.masks.assign(10, 1);
    Rng r1(99), r2(99);
    auto a = forward(m, in, ActMode::sample, r1);
    auto b = forward(m, in, ActMode::sample, r2);
    CHECK(a.joint_log_prob == b.joint_log_prob);
    for (std::size_t u = 0; u < 2; ++u) {
      CHECK(a.decisions[u].choice == b.decisions[u].choice);
      CHECK(a.decisions[u].raw_action == b.decisions[u].raw_action);
      CHECK(a.decisions[u].probs == b.decisions[u].probs);
    }
    CHECK(a.joint_log_prob == doctest::Approx(a.decisions[0].log_prob + a.decisions[1].log_prob));
  }
}

TEST_CASE("continuous sampling clamps the action but scores the raw draw") {
  auto m = build_model(toy_config(HeadKind::continuous), 22);
  m.head.log_std.mutable_values()[0] = 2.0;  // std = 30 * e^2, forces clamping
  Rng data(2), rng(3);
  PolicyInput in;
  in.nodes = random_sequence(data, 3, 4);
  in.uav_rows = {2};
  bool clamped = false;
  for (int i = 0; i < 50; ++i) {
    auto out = forward(m, in, ActMode::sample, rng);
    const auto& d = out.decisions[0];
    CHECK(std::abs(d.action[0]) <= 30.0);
    CHECK(std::abs(d.action[1]) <= std::numbers::pi / 4);
    if (d.action[0] != d.raw_action[0]) clamped = true;
    CHECK(d.log_prob == doctest::Approx(gaussian_log_prob(d.raw_action, d.mean, d.log_std)).epsilon(1e-14));
  }
  CHECK(clamped);
  auto greedy = forward(m, in, ActMode::greedy, rng);
  CHECK(greedy.decisions[0].raw_action == greedy.decisions[0].mean);
}

TEST_CASE("attention-only stack is permutation-equivariant over nodes") {
  auto c = toy_config();
  c.layers = 3;
  c.attn_ratio = 1.0;
  auto m = build_model(c, 31);
  zero_out(m.temporal);
  zero_out(m.identity);
  Rng rng(32);
  auto seq = random_sequence(rng, 6, 4);
  std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
  NodeSequence shuffled = seq;
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 4; ++j) shuffled.features[i * 4 + j] = seq.at(perm[i], j);
  auto h = encode(m, seq);
  auto hp = encode(m, shuffled);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 8; ++j) CHECK(std::abs(hp.at(i, j) - h.at(perm[i], j)) < 1e-10);
}

TEST_CASE("encoder scan and kernel paths agree for an LTI model") {
  auto c = toy_config();
  c.layers = 4;
  c.ssm_mode = SsmMode::lti;
  auto m = build_model(c, 41);
  Rng rng(42);
  auto seq = random_sequence(rng, 7, 4, 3);
  auto a = encode(m, seq, SsmPath::scan);
  auto b = encode(m, seq, SsmPath::kernel);
  CHECK(max_abs_diff(a.values(), b.values()) <= 1e-8 * max_abs(a.values()));
}

TEST_CASE("masked stops are never sampled") {
  auto m = build_model(toy_config(), 51);
  Rng rng(52);
  for (int i = 0; i < 10000; ++i) {
    PolicyInput in;
    in.nodes = random_sequence(rng, 6, 4, rng.below(8));
    in.uav_rows = {5};
    in.masks.resize(5);
    for (auto& v : in.masks) v = rng.uniform() < 0.5;
    in.masks[rng.below(5)] = 1;
    auto out = forward(m, in, ActMode::sample, rng);
    REQUIRE(in.masks[out.decisions[0].choice] == 1);
  }
}

TEST_CASE("checkpoint round trip reproduces forward outputs bit for bit") {
  for (HeadKind kind : {HeadKind::discrete, HeadKind::continuous}) {
    for (SsmMode mode : {SsmMode::lti, SsmMode::selective}) {
      auto c = toy_config(kind);
      c.ssm_mode = mode;
      auto m = build_model(c, 61);
      std::stringstream buf;
      save_checkpoint(m, buf);
      auto loaded = load_checkpoint(buf);
      CHECK(loaded.config == m.config);
      Rng data(62);
      PolicyInput in;
      in.nodes = random_sequence(data, 5, 4, 1);
      in.uav_rows = {4};
      if (kind == HeadKind::discrete) in.masks.assign(5, 1);
      Rng r1(7), r2(7);
      auto a = forward(m, in, ActMode::sample, r1);
      auto b = forward(loaded, in, ActMode::sample, r2);
      CHECK(a.joint_log_prob == b.joint_log_prob);
      CHECK(a.decisions[0].probs == b.decisions[0].probs);
      CHECK(a.decisions[0].mean == b.decisions[0].mean);
    }
  }
}

TEST_CASE("checkpoint loader rejects damaged files") {
  auto m = build_model(toy_config(), 71);
  std::stringstream buf;
  save_checkpoint(m, buf);
  std::string text = buf.str();
  std::stringstream truncated(text.substr(0, text.size() / 2));
  CHECK_THROWS(load_checkpoint(truncated));
  std::stringstream bad_header("not-a-checkpoint\n");
  CHECK_THROWS(load_checkpoint(bad_header));
}

TEST_CASE("every parameter block passes the gradient check through the encoder") {
  for (SsmMode mode : {SsmMode::lti, SsmMode::selective}) {
    for (HeadKind kind : {HeadKind::discrete, HeadKind::continuous}) {
      auto c = toy_config(kind);
      c.ssm_mode = mode;
      auto m = build_model(c, 81);
      Rng rng(82);
      auto seq = random_sequence(rng, 5, 4, 2);
      std::vector<std::size_t> rows{3, 4};
      std::vector<std::uint8_t> mask{1, 1, 0, 1, 1, 1, 0, 1, 1, 1};
      auto x = DiffArray::constant({2, 2}, random_values(rng, 4));
      auto f = [&] {
        auto h = gather_rows(encode(m, seq), rows);
        if (kind == HeadKind::discrete) {
          auto lp = discrete_log_probs(m, h, mask);
          auto w = DiffArray::constant({2, 5}, {0.3, -1, 0, 2, 0.5, 1, 0, -0.7, 0.2, 0.9});
          return mait::num::reduce_sum(mait::num::mul(lp, w));
        }
        auto head = continuous_head(m, h);
        return mait::num::reduce_sum(gaussian_log_prob(x, head.mean, head.log_std));
      };
      auto named = m.parameters();
      std::vector<DiffArray> params;
      std::vector<std::string> names;
      for (auto& [n, p] : named) {
        params.push_back(p);
        names.push_back(n);
      }
      for (const auto& r : mait::num::check_gradients(f, params, names, 1e-5, 1e-4)) {
        INFO(to_string(mode) << " " << to_string(kind) << " " << r.name << " err=" << r.max_rel_error);
        CHECK(r.pass);
      }
    }
  }
}
