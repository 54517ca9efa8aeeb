#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "mait/cli/commands.hpp"

using namespace mait;
using namespace mait::cli;
namespace fs = std::filesystem;

namespace {

std::string preset(const char* name) { return std::string(MAIT_PRESET_DIR) + "/" + name + ".profile"; }

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("mait_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_lines(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

// Case 2 preset shrunk to a single UAV touring a few devices.
std::vector<std::string> small_discrete(std::size_t nodes, std::size_t iterations) {
  return {"task.nodes=" + std::to_string(nodes), "task.uavs=1", "action.width=" + std::to_string(nodes),
          "architecture.layers=2", "architecture.d_model=8", "architecture.heads=2", "architecture.d_state=2",
          "training.iterations=" + std::to_string(iterations)};
}

std::vector<std::string> small_continuous() {
  return {"task.nodes=5", "task.uavs=1", "task.env.slots=4", "architecture.layers=2", "architecture.d_model=8",
          "architecture.heads=2", "architecture.d_state=2", "training.iterations=3"};
}

struct Run {
  int code;
  std::string out, err;
};

template <class F>
Run capture(F&& f) {
  std::ostringstream out, err;
  const int code = f(out, err);
  return {code, out.str(), err.str()};
}

std::map<std::string, double> parse_summary(const std::string& text) {
  std::map<std::string, double> m;
  std::istringstream in(text);
  std::string key;
  double v;
  while (in >> key >> v) m[key] = v;
  return m;
}

}  // namespace

TEST_CASE("validate-profile") {
  for (const char* name : {"case1_continuous_mec", "case2_discrete_collect"}) {
    auto r = capture([&](auto& o, auto& e) { return cmd_validate_profile(preset(name), {}, o, e); });
    CHECK(r.code == kExitOk);
  }
  auto r = capture([&](auto& o, auto& e) {
    return cmd_validate_profile(preset("case2_discrete_collect"), {"training.gamma=1.5"}, o, e);
  });
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("training.gamma") != std::string::npos);
  r = capture([&](auto& o, auto& e) { return cmd_validate_profile("/no/such.profile", {}, o, e); });
  CHECK(r.code == kExitUsage);
}

TEST_CASE("train writes log, checkpoints and manifest") {
  const auto dir = scratch("train");
  TrainOptions o{preset("case2_discrete_collect"), dir.string(), small_discrete(8, 50)};
  o.overrides.push_back("training.checkpoint_every=20");
  auto r = capture([&](auto& out, auto& err) { return cmd_train(o, out, err); });
  INFO(r.err);
  REQUIRE(r.code == kExitOk);
  const auto log = slurp(dir / "train_log.csv");
  CHECK(log.starts_with(std::string(kTrainLogHeader) + "\n"));
  CHECK(count_lines(dir / "train_log.csv") == 51);
  CHECK(fs::exists(dir / "checkpoint_20.txt"));
  CHECK(fs::exists(dir / "checkpoint_40.txt"));
  CHECK(fs::exists(dir / "checkpoint_final.txt"));
  const auto manifest = slurp(dir / "manifest.txt");
  CHECK(manifest.find("status completed") != std::string::npos);
  CHECK(manifest.find("artifact train_log.csv " + file_checksum((dir / "train_log.csv").string())) !=
        std::string::npos);
  CHECK(manifest.find("nodes = 8") != std::string::npos);
  CHECK(manifest.find("finished -") == std::string::npos);
}

TEST_CASE("train is byte-reproducible and replayable from its snapshot") {
  const auto a = scratch("repro_a"), b = scratch("repro_b"), c = scratch("repro_c");
  auto overrides = small_discrete(5, 6);
  overrides.push_back("training.seed=7");
  auto run = [&](const std::string& profile, const fs::path& dir, const std::vector<std::string>& ov) {
    TrainOptions o{profile, dir.string(), ov};
    std::ostringstream out, err;
    REQUIRE(cmd_train(o, out, err) == kExitOk);
    return file_checksum((dir / "train_log.csv").string());
  };
  const auto first = run(preset("case2_discrete_collect"), a, overrides);
  CHECK(run(preset("case2_discrete_collect"), b, overrides) == first);
  CHECK(slurp(a / "checkpoint_final.txt") == slurp(b / "checkpoint_final.txt"));
  CHECK(run((a / "profile.resolved").string(), c, {}) == first);
}

TEST_CASE("train refuses bad input") {
  const auto dir = scratch("train_bad");
  auto r = capture([&](auto& o, auto& e) { return cmd_train({"/missing/task.profile", dir.string(), {}}, o, e); });
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("/missing/task.profile") != std::string::npos);
  r = capture([&](auto& o, auto& e) {
    return cmd_train({preset("case2_discrete_collect"), dir.string(), {"action.kind=continuous"}}, o, e);
  });
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("action.kind") != std::string::npos);
}

TEST_CASE("continuous training runs end to end") {
  const auto dir = scratch("train_cont");
  auto r = capture([&](auto& o, auto& e) {
    return cmd_train({preset("case1_continuous_mec"), dir.string(), small_continuous()}, o, e);
  });
  INFO(r.err);
  CHECK(r.code == kExitOk);
  CHECK(count_lines(dir / "train_log.csv") == 4);
}

TEST_CASE("eval of an untrained checkpoint") {
  const auto dir = scratch("eval");
  const auto ov = small_discrete(6, 1);
  {
    std::ostringstream out, err;
    REQUIRE(cmd_train({preset("case2_discrete_collect"), dir.string(), ov}, out, err) == kExitOk);
  }
  EvalOptions e;
  e.profile = preset("case2_discrete_collect");
  e.checkpoint = (dir / "checkpoint_final.txt").string();
  e.out_dir = (dir / "eval").string();
  e.overrides = ov;
  e.episodes = 10;
  auto r = capture([&](auto& o, auto& err) { return cmd_eval(e, o, err); });
  INFO(r.err);
  CHECK(r.code == kExitOk);
  auto s = parse_summary(r.out);
  CHECK(s["episodes"] == 10);
  CHECK(s["violations"] == 0);
  CHECK(std::isfinite(s["mean_energy"]));
  CHECK(s["mean_energy"] > 0);
  for (int i = 0; i < 10; ++i) CHECK(fs::exists(dir / "eval" / ("traj_" + std::to_string(i) + ".csv")));
  CHECK(slurp(dir / "eval" / "traj_0.csv").starts_with(env::kTrajectoryHeader));

  e.episodes = 0;
  e.out_dir.clear();
  r = capture([&](auto& o, auto& err) { return cmd_eval(e, o, err); });
  CHECK(r.code == kExitOk);
  CHECK(r.out == "episodes 0\nviolations 0\n");

  e.episodes = 5;
  e.mode = model::ActMode::sample;
  r = capture([&](auto& o, auto& err) { return cmd_eval(e, o, err); });
  CHECK(r.code == kExitOk);

  e.baseline = env::BaselineKind::random;
  r = capture([&](auto& o, auto& err) { return cmd_eval(e, o, err); });
  CHECK(r.code == kExitOk);
  CHECK(parse_summary(r.out)["violations"] == 0);
}

TEST_CASE("eval rejects a checkpoint of the other head kind") {
  const auto dir = scratch("eval_kind");
  {
    std::ostringstream out, err;
    REQUIRE(cmd_train({preset("case2_discrete_collect"), dir.string(), small_discrete(5, 1)}, out, err) == kExitOk);
  }
  EvalOptions e;
  e.profile = preset("case1_continuous_mec");
  e.overrides = small_continuous();
  e.checkpoint = (dir / "checkpoint_final.txt").string();
  auto r = capture([&](auto& o, auto& err) { return cmd_eval(e, o, err); });
  CHECK(r.code == kExitFailure);
  CHECK(r.err.find("head") != std::string::npos);
}

TEST_CASE("oracle delegates to the exhaustive search") {
  const auto dir = scratch("oracle");
  const auto world = env::make_discrete_world(8, 1, 7);
  const auto path = (dir / "n8.txt").string();
  env::write_instance_file(path, world);
  auto r = capture([&](auto& o, auto& e) { return cmd_oracle({path, "", dir.string(), {}}, o, e); });
  REQUIRE(r.code == kExitOk);
  const auto tour = env::brute_force_tour(world);
  std::string order = "order";
  for (auto i : tour.order) order += " " + std::to_string(i);
  CHECK(r.out.find(order + "\n") != std::string::npos);
  CHECK(parse_summary(r.out.substr(r.out.find("energy")))["energy"] == tour.energy);
  CHECK(count_lines(dir / "traj_oracle.csv") >= 10);

  const auto big = (dir / "n11.txt").string();
  env::write_instance_file(big, env::make_discrete_world(11, 1, 7));
  r = capture([&](auto& o, auto& e) { return cmd_oracle({big, "", "", {}}, o, e); });
  CHECK(r.code == kExitFailure);
  CHECK(r.err.find("10") != std::string::npos);

  const auto one = (dir / "n1.txt").string();
  env::write_instance_file(one, env::make_discrete_world(1, 1, 3));
  r = capture([&](auto& o, auto& e) { return cmd_oracle({one, "", "", {}}, o, e); });
  CHECK(r.code == kExitOk);
  CHECK(r.out.starts_with("order 0\n"));

  r = capture([&](auto& o, auto& e) {
    return cmd_oracle({"", preset("case2_discrete_collect"), "", small_discrete(4, 1)}, o, e);
  });
  CHECK(r.code == kExitOk);
}

TEST_CASE("gradcheck passes, and catches a broken backward rule") {
  for (const char* name : {"case1_continuous_mec", "case2_discrete_collect"}) {
    GradcheckOptions g;
    g.profile = preset(name);
    auto r = capture([&](auto& o, auto& e) { return cmd_gradcheck(g, o, e); });
    INFO(r.out << r.err);
    CHECK(r.code == kExitOk);
    CHECK(r.out.find("embed.identity") != std::string::npos);
    CHECK(r.out.find("lti/layers.") != std::string::npos);
    CHECK(r.out.find("selective/layers.") != std::string::npos);
  }
  GradcheckOptions g;
  g.profile = preset("case2_discrete_collect");
  g.corrupt_op = "tanh";
  auto r = capture([&](auto& o, auto& e) { return cmd_gradcheck(g, o, e); });
  CHECK(r.code == kExitFailure);
  CHECK(r.err.find("mlp.w1") != std::string::npos);

  g.corrupt_op.reset();
  g.tolerance = 1e-12;
  r = capture([&](auto& o, auto& e) { return cmd_gradcheck(g, o, e); });
  CHECK(r.code == kExitFailure);
}
