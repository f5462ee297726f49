#include "pgkq/harness.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>

#include "pgkq/errors.hpp"

namespace pgkq::harness {

void ExperimentConfig::validate() const {
  make_environment(env_id);
  variant();
  trainer_config().validate();
  if (iterations < 1) throw ConfigError("iterations must be positive");
  if (seeds < 1) throw ConfigError("seeds must be positive");
  if (!(ppo_clip > 0.0 && ppo_clip < 1.0)) throw ConfigError("ppo clip must lie in (0, 1)");
}

pg::AlgoVariant ExperimentConfig::variant() const {
  auto v = pg::AlgoVariant::parse(algo);
  v.clip = ppo_clip;
  if (advantage == "default") v.advantage = pg::AdvantageKind::Default;
  else if (advantage == "final-time") v.advantage = pg::AdvantageKind::FinalTime;
  else throw ConfigError("advantage must be 'default' or 'final-time'");
  return v;
}

pg::TrainerConfig ExperimentConfig::trainer_config() const {
  pg::TrainerConfig c;
  c.big_batch = big_batch;
  c.small_batch = small_batch;
  c.gamma = gamma;
  c.lr_policy = c.lr_baseline = c.lr_gp = lr;
  c.gp_minibatch = gp_minibatch;
  if (kernel_loss_form == "nlml") c.kernel_loss_form = gp::KernelLossForm::Nlml;
  else if (kernel_loss_form == "as_printed") c.kernel_loss_form = gp::KernelLossForm::AsPrinted;
  else throw ConfigError("kernel_loss_form must be 'nlml' or 'as_printed'");
  return c;
}

std::vector<pg::IterationRecord> run_seed(const ExperimentConfig& config, std::uint64_t seed) {
  config.validate();
  const Environment env = make_environment(config.env_id);
  const auto variant = config.variant();
  const auto tc = config.trainer_config();
  pg::TrainerState state(env, variant, tc, seed);
  std::vector<pg::IterationRecord> records;
  records.reserve(config.iterations);
  for (int it = 0; it < config.iterations; ++it) records.push_back(pg::train_iteration(variant, tc, state, env));
  return records;
}

void write_record(std::ostream& csv, const pg::IterationRecord& rec) {
  csv << rec.seed << ',' << rec.iteration << ',' << rec.env_steps << ',' << rec.reward_evals << ','
      << std::setprecision(12) << rec.mean_total_reward << ',';
  if (rec.wce_sq) csv << std::setprecision(12) << *rec.wce_sq;
  csv << '\n';
}

void run_experiment(const ExperimentConfig& config, std::ostream& csv) {
  config.validate();
  csv << kCsvHeader << '\n';
  for (int s = 0; s < config.seeds; ++s)
    for (const auto& rec : run_seed(config, config.seed_base + static_cast<std::uint64_t>(s))) write_record(csv, rec);
}

void run_experiment(const ExperimentConfig& config) {
  if (config.out.empty()) throw ConfigError("output path is required");
  config.validate();
  std::ofstream file(config.out);
  if (!file) throw ConfigError("cannot open '" + config.out + "' for writing");
  run_experiment(config, file);
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

struct Accumulator {
  std::vector<double> rewards, steps, evals, wce;
};

}  // namespace

std::vector<SummaryRow> summarize_csv(const std::vector<std::string>& csv_texts) {
  if (csv_texts.empty()) throw ConfigError("summarize: no inputs");
  std::map<int, Accumulator> by_iter;
  std::optional<std::size_t> iterations_per_run;
  std::optional<bool> kq_runs;

  for (std::size_t f = 0; f < csv_texts.size(); ++f) {
    std::istringstream in(csv_texts[f]);
    std::string line;
    if (!std::getline(in, line) || line != kCsvHeader)
      throw ConfigError("summarize: input " + std::to_string(f) + " has an unexpected header");
    std::map<std::string, std::size_t> rows_per_seed;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto cells = split(line);
      if (cells.size() != 6) throw ConfigError("summarize: malformed row '" + line + "'");
      const bool has_wce = !cells[5].empty();
      if (kq_runs && *kq_runs != has_wce) throw ConfigError("summarize: inputs mix quadrature and plain runs");
      kq_runs = has_wce;
      rows_per_seed[cells[0]] += 1;
      auto& acc = by_iter[std::stoi(cells[1])];
      acc.steps.push_back(std::stod(cells[2]));
      acc.evals.push_back(std::stod(cells[3]));
      acc.rewards.push_back(std::stod(cells[4]));
      if (has_wce) acc.wce.push_back(std::stod(cells[5]));
    }
    for (const auto& [seed, count] : rows_per_seed) {
      if (iterations_per_run && *iterations_per_run != count)
        throw ConfigError("summarize: runs have different iteration counts");
      iterations_per_run = count;
    }
  }

  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  };

  std::vector<SummaryRow> rows;
  for (const auto& [iter, acc] : by_iter) {
    SummaryRow r;
    r.iteration = iter;
    r.count = static_cast<int>(acc.rewards.size());
    r.env_steps_mean = mean(acc.steps);
    r.reward_evals_mean = mean(acc.evals);
    r.reward_mean = mean(acc.rewards);
    if (r.count > 1) {
      double ss = 0.0;
      for (double x : acc.rewards) ss += (x - r.reward_mean) * (x - r.reward_mean);
      r.reward_se = std::sqrt(ss / (r.count - 1)) / std::sqrt(static_cast<double>(r.count));
    }
    r.has_wce = !acc.wce.empty();
    r.wce_sq_mean = mean(acc.wce);
    rows.push_back(r);
  }
  return rows;
}

std::vector<SummaryRow> summarize(const std::vector<std::string>& paths) {
  std::vector<std::string> texts;
  for (const auto& p : paths) {
    std::ifstream file(p);
    if (!file) throw ConfigError("summarize: cannot read '" + p + "'");
    std::ostringstream ss;
    ss << file.rdbuf();
    texts.push_back(ss.str());
  }
  return summarize_csv(texts);
}

void write_summary(std::ostream& os, const std::vector<SummaryRow>& rows) {
  os << kSummaryHeader << '\n' << std::setprecision(12);
  for (const auto& r : rows) {
    os << r.iteration << ',' << r.count << ',' << r.env_steps_mean << ',' << r.reward_evals_mean << ','
       << r.reward_mean << ',' << r.reward_se << ',';
    if (r.has_wce) os << r.wce_sq_mean;
    os << '\n';
  }
}

void write_plot_data(std::ostream& os, const std::vector<SummaryRow>& rows, bool x_is_steps) {
  os << (x_is_steps ? "# env_steps" : "# iteration") << " reward_mean reward_se\n" << std::setprecision(12);
  for (const auto& r : rows)
    os << (x_is_steps ? r.env_steps_mean : static_cast<double>(r.iteration)) << ' ' << r.reward_mean << ' '
       << r.reward_se << '\n';
}

}  // namespace pgkq::harness
