#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "pgkq/trainer.hpp"

namespace pgkq::harness {

struct ExperimentConfig {
  std::string env_id = "pendulum";
  std::string algo = "vpg-kq";
  int big_batch = 64;
  int small_batch = 8;
  int iterations = 500;
  int seeds = 10;
  std::uint64_t seed_base = 0;
  double gamma = 0.995;
  double lr = 3e-4;  // policy, baseline and GP networks
  double ppo_clip = 0.2;
  std::string kernel_loss_form = "nlml";  // nlml | as_printed
  int gp_minibatch = 256;
  std::string advantage = "default";  // default | final-time
  std::string out;

  void validate() const;
  pg::AlgoVariant variant() const;
  pg::TrainerConfig trainer_config() const;
};

inline constexpr const char* kCsvHeader = "seed,iteration,env_steps,reward_evals,mean_total_reward,wce_sq";

std::vector<pg::IterationRecord> run_seed(const ExperimentConfig& config, std::uint64_t seed);

/// Header plus one row per (seed, iteration), seeds seed_base .. seed_base + seeds - 1.
void run_experiment(const ExperimentConfig& config, std::ostream& csv);
/// Same, written to config.out.
void run_experiment(const ExperimentConfig& config);

void write_record(std::ostream& csv, const pg::IterationRecord& rec);

struct SummaryRow {
  int iteration = 0;
  int count = 0;
  double env_steps_mean = 0.0;
  double reward_evals_mean = 0.0;
  double reward_mean = 0.0;
  double reward_se = 0.0;
  bool has_wce = false;
  double wce_sq_mean = 0.0;
};

/// Mean and standard error (sample sd / sqrt(count)) per iteration across all
/// runs in the given CSV texts.
std::vector<SummaryRow> summarize_csv(const std::vector<std::string>& csv_texts);
std::vector<SummaryRow> summarize(const std::vector<std::string>& paths);

inline constexpr const char* kSummaryHeader =
    "iteration,runs,env_steps_mean,reward_evals_mean,mean_total_reward_mean,mean_total_reward_se,wce_sq_mean";
void write_summary(std::ostream& os, const std::vector<SummaryRow>& rows);

/// Whitespace-separated columns for gnuplot: x reward_mean reward_se, where x
/// is the iteration or the mean cumulative environment steps.
void write_plot_data(std::ostream& os, const std::vector<SummaryRow>& rows, bool x_is_steps);

}  // namespace pgkq::harness
