#include <CLI11.hpp>

#include <iostream>
#include <map>

#include "mait/cli/commands.hpp"

using namespace mait;

int main(int argc, char** argv) {
  CLI::App app{"MAIT trajectory planner: train, evaluate and check policies on UAV task profiles"};
  app.require_subcommand(1);

  cli::TrainOptions train;
  auto* train_cmd = app.add_subcommand("train", "train a policy with T-GRPO");
  train_cmd->add_option("--profile", train.profile, "task profile")->required();
  train_cmd->add_option("--out", train.out_dir, "output directory")->required();
  train_cmd->add_option("--set", train.overrides, "section.key=value override (repeatable)");
  train_cmd->add_flag("--record-time", train.record_time, "fill the seconds column with wall-clock time");

  cli::EvalOptions eval;
  std::string eval_mode = "greedy", baseline;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint or a baseline");
  eval_cmd->add_option("--profile", eval.profile, "task profile")->required();
  auto* ckpt = eval_cmd->add_option("--checkpoint", eval.checkpoint, "checkpoint file");
  auto* base = eval_cmd->add_option("--baseline", baseline, "random or greedy_nearest instead of a checkpoint")
                   ->check(CLI::IsMember({"random", "greedy_nearest"}));
  ckpt->excludes(base);
  eval_cmd->add_option("--out", eval.out_dir, "directory for trajectory files");
  eval_cmd->add_option("--episodes", eval.episodes, "number of episodes")->capture_default_str();
  eval_cmd->add_option("--mode", eval_mode, "greedy or sample")->check(CLI::IsMember({"greedy", "sample"}));
  eval_cmd->add_option("--set", eval.overrides, "section.key=value override (repeatable)");

  cli::OracleOptions oracle;
  auto* oracle_cmd = app.add_subcommand("oracle", "exhaustive optimal tour for a small single-UAV instance");
  auto* inst = oracle_cmd->add_option("--instance", oracle.instance, "instance file");
  auto* prof = oracle_cmd->add_option("--profile", oracle.profile, "task profile");
  inst->excludes(prof);
  oracle_cmd->add_option("--out", oracle.out_dir, "directory for the trajectory file");
  oracle_cmd->add_option("--set", oracle.overrides, "section.key=value override (repeatable)");

  cli::GradcheckOptions grad;
  std::string corrupt;
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of the policy loss gradients");
  grad_cmd->add_option("--profile", grad.profile, "task profile")->required();
  grad_cmd->add_option("--tolerance", grad.tolerance, "max relative error")->capture_default_str();
  grad_cmd->add_option("--step", grad.step, "finite-difference step")->capture_default_str();
  grad_cmd->add_option("--set", grad.overrides, "section.key=value override (repeatable)");
  grad_cmd->add_option("--corrupt-op", corrupt, "scale one primitive's backward rule (self-test)");

  std::string vp_profile;
  std::vector<std::string> vp_overrides;
  auto* vp_cmd = app.add_subcommand("validate-profile", "check a task profile and show the derived setup");
  vp_cmd->add_option("--profile", vp_profile, "task profile")->required();
  vp_cmd->add_option("--set", vp_overrides, "section.key=value override (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::kExitUsage;
  }

  try {
    if (*train_cmd) return cli::cmd_train(train, std::cout, std::cerr);
    if (*eval_cmd) {
      if (baseline.empty() && eval.checkpoint.empty()) {
        std::cerr << "eval: give --checkpoint or --baseline\n";
        return cli::kExitUsage;
      }
      eval.mode = eval_mode == "sample" ? model::ActMode::sample : model::ActMode::greedy;
      if (!baseline.empty()) {
        eval.baseline = baseline == "random" ? env::BaselineKind::random : env::BaselineKind::greedy_nearest;
      }
      return cli::cmd_eval(eval, std::cout, std::cerr);
    }
    if (*oracle_cmd) {
      if (oracle.instance.empty() && oracle.profile.empty()) {
        std::cerr << "oracle: give --instance or --profile\n";
        return cli::kExitUsage;
      }
      return cli::cmd_oracle(oracle, std::cout, std::cerr);
    }
    if (*grad_cmd) {
      if (!corrupt.empty()) grad.corrupt_op = corrupt;
      return cli::cmd_gradcheck(grad, std::cout, std::cerr);
    }
    if (*vp_cmd) return cli::cmd_validate_profile(vp_profile, vp_overrides, std::cout, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::kExitFailure;
  }
  return cli::kExitUsage;
}
