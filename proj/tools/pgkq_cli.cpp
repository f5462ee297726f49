#include <algorithm>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pgkq/errors.hpp"
#include "pgkq/harness.hpp"

namespace {

// CLI11 does not read config files attached to a subcommand, so `run
// --config f` is expanded here: the file's `key = value` lines become leading
// `--key value` flags and later flags win.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  if (args.empty() || args[0] != "run") return args;
  for (std::size_t i = 1; i < args.size(); ++i) {
    std::string path;
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      args.erase(args.begin() + static_cast<long>(i), args.begin() + static_cast<long>(i) + 2);
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      args.erase(args.begin() + static_cast<long>(i));
    } else {
      continue;
    }
    std::vector<std::string> from_file;
    for (const auto& item : CLI::ConfigINI().from_file(path)) {
      if (item.name == "++" || item.name == "--") continue;  // section markers
      from_file.push_back("--" + item.name);
      for (const auto& v : item.inputs) from_file.push_back(v);
    }
    args.insert(args.begin() + 1, from_file.begin(), from_file.end());
    break;
  }
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Policy gradient with episodic kernel quadrature"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  pgkq::harness::ExperimentConfig cfg;
  auto* run = app.add_subcommand("run", "train and write per-iteration CSV");
  std::string config_file;
  run->add_option("--config", config_file, "key = value file mirroring the flags; flags override it");
  run->add_option("--env", cfg.env_id, "lqr1d | pendulum | chain")->capture_default_str();
  run->add_option("--algo", cfg.algo, "<vpg|ppo>-<plain|kq|kq-no-mean|large>")->capture_default_str();
  run->add_option("--big-batch", cfg.big_batch, "N")->capture_default_str();
  run->add_option("--small-batch", cfg.small_batch, "n")->capture_default_str();
  run->add_option("--iters", cfg.iterations)->capture_default_str();
  run->add_option("--seeds", cfg.seeds)->capture_default_str();
  run->add_option("--seed-base", cfg.seed_base)->capture_default_str();
  run->add_option("--gamma", cfg.gamma)->capture_default_str();
  run->add_option("--lr", cfg.lr, "policy, baseline and GP learning rate")->capture_default_str();
  run->add_option("--ppo-clip", cfg.ppo_clip)->capture_default_str();
  run->add_option("--kernel-loss-form", cfg.kernel_loss_form, "nlml | as_printed")->capture_default_str();
  run->add_option("--gp-minibatch", cfg.gp_minibatch)->capture_default_str();
  run->add_option("--advantage", cfg.advantage, "default | final-time")->capture_default_str();
  run->add_option("--out", cfg.out, "CSV output path")->required();

  std::vector<std::string> inputs;
  std::string summary_out;
  auto* summarize = app.add_subcommand("summarize", "mean and standard error per iteration across runs");
  summarize->add_option("files", inputs)->required()->check(CLI::ExistingFile);
  summarize->add_option("--out", summary_out)->required();

  std::string plot_out, x_axis = "iteration";
  auto* plot = app.add_subcommand("plotdata", "gnuplot columns from run CSVs");
  plot->add_option("files", inputs)->required()->check(CLI::ExistingFile);
  plot->add_option("--x", x_axis, "iteration | steps")->check(CLI::IsMember({"iteration", "steps"}));
  plot->add_option("--out", plot_out)->required();

  std::vector<std::string> args;
  try {
    args = expand_config(argc, argv);
  } catch (const CLI::Error& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  }
  std::reverse(args.begin(), args.end());  // CLI11 consumes a reversed vector
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*run) {
      pgkq::harness::run_experiment(cfg);
    } else if (*summarize) {
      std::ofstream out(summary_out);
      if (!out) throw pgkq::ConfigError("cannot open '" + summary_out + "'");
      pgkq::harness::write_summary(out, pgkq::harness::summarize(inputs));
    } else if (*plot) {
      std::ofstream out(plot_out);
      if (!out) throw pgkq::ConfigError("cannot open '" + plot_out + "'");
      pgkq::harness::write_plot_data(out, pgkq::harness::summarize(inputs), x_axis == "steps");
    }
  } catch (const pgkq::ConfigError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
