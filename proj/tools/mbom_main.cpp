// Command-line front end: zoo building, pretraining, the adaptation test
// phase, aggregation, plotting and the standalone verification suite.

#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "mbom/harness.hpp"
#include "mbom/oracle.hpp"

namespace {

using namespace mbom;

harness::ExperimentConfig load_config(const std::string& path) {
  return harness::ExperimentConfig::from_file(path);
}

int cmd_zoo(const std::string& config_path, const std::string& out_dir) {
  harness::ExperimentConfig cfg = load_config(config_path);
  opponents::Zoo zoo = harness::ensure_zoo(cfg, out_dir);
  int train = 0, val = 0, test = 0, reasoning = 0;
  for (const auto& s : zoo.snapshots) {
    if (s.reasoning)
      ++reasoning;
    else if (s.role == opponents::Role::train)
      ++train;
    else if (s.role == opponents::Role::validation)
      ++val;
    else
      ++test;
  }
  std::cout << "zoo ready under " << out_dir << "/zoo: " << train << " train, " << val
            << " validation, " << test << " test, " << reasoning << " reasoning learners\n";
  return 0;
}

int cmd_pretrain(const std::string& config_path, const std::string& out_dir,
                 const std::string& variant, std::uint64_t seed) {
  harness::ExperimentConfig cfg = load_config(config_path);
  cfg.set("variant", variant);
  opponents::Zoo zoo = harness::ensure_zoo(cfg, out_dir);
  const bool use_om = variant != "ppo_only";
  harness::PretrainBundle bundle = harness::ensure_bundle(cfg, zoo, seed, use_om, out_dir);
  std::cout << "pretrained seed " << seed << " (" << (use_om ? "with" : "without")
            << " opponent model): env model train error " << bundle.env_model_train_error
            << ", held-out error " << bundle.env_model_eval_error << "\n";
  return 0;
}

int cmd_test(const std::string& config_path, const std::string& out_dir,
             const std::string& variant, int workers, long seed_filter) {
  harness::ExperimentConfig cfg = load_config(config_path);
  cfg.set("variant", variant);
  opponents::Zoo zoo = harness::ensure_zoo(cfg, out_dir);

  std::vector<std::uint64_t> seeds = cfg.seed_list();
  if (seed_filter >= 0) seeds = {static_cast<std::uint64_t>(seed_filter)};

  const bool use_om = variant != "ppo_only";
  std::map<std::uint64_t, harness::PretrainBundle> bundles;
  for (std::uint64_t seed : seeds)
    bundles.emplace(seed, harness::ensure_bundle(cfg, zoo, seed, use_om, out_dir));

  auto plain = zoo.with_role(opponents::Role::test, false);
  auto reasoners = zoo.with_role(opponents::Role::test, true);
  std::vector<harness::DiagRow> diagnostics;
  std::vector<harness::RunRequest> requests;
  for (const char* type : {"fixed", "naive", "reasoning"}) {
    const auto& pool = std::string(type) == "reasoning" ? reasoners : plain;
    for (const opponents::OpponentSnapshot* snap : pool)
      for (std::uint64_t seed : seeds) {
        harness::RunRequest req{seed, snap, type, variant, &bundles.at(seed)};
        if (use_om && requests.empty()) req.diagnostics = &diagnostics;
        requests.push_back(req);
      }
  }
  if (requests.empty()) {
    std::cerr << "no test opponents in the zoo\n";
    return 1;
  }
  std::vector<harness::MetricsRow> rows = harness::run_grid(cfg, requests, workers);
  std::filesystem::create_directories(out_dir);
  const std::string metrics_path = out_dir + "/metrics_" + variant + ".csv";
  harness::write_metrics_csv(metrics_path, rows, cfg.hash());
  std::cout << "wrote " << rows.size() << " rows to " << metrics_path << "\n";
  if (!diagnostics.empty()) {
    const std::string diag_path = out_dir + "/diagnostics_" + variant + ".csv";
    harness::write_diagnostics_csv(diag_path, diagnostics, cfg.hash());
    std::cout << "wrote mixer diagnostics to " << diag_path << "\n";
  }
  return 0;
}

int cmd_aggregate(const std::string& config_path, const std::string& out_dir) {
  harness::ExperimentConfig cfg = load_config(config_path);
  std::vector<harness::MetricsRow> rows;
  std::vector<std::string> files;
  for (const auto& entry : std::filesystem::directory_iterator(out_dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("metrics_", 0) == 0 && name.size() > 4 &&
        name.substr(name.size() - 4) == ".csv")
      files.push_back(entry.path().string());
  }
  std::sort(files.begin(), files.end());
  for (const std::string& f : files) {
    auto part = harness::read_metrics_csv(f);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  if (rows.empty()) {
    std::cerr << "no metrics_*.csv under " << out_dir << "\n";
    return 1;
  }
  auto summary = harness::aggregate(rows);
  harness::write_summary_csv(out_dir + "/summary.csv", summary, cfg.hash());
  std::printf("%-14s %-11s %12s %14s %8s\n", "variant", "opponent", "mean", "ci95", "seeds");
  for (const auto& row : summary)
    std::printf("%-14s %-11s %12.4f %14.4f %8d\n", row.variant.c_str(),
                row.opponent_type.c_str(), row.mean, row.ci95_halfwidth, row.n_seeds);
  std::cout << "wrote " << out_dir << "/summary.csv\n";
  return 0;
}

int cmd_plot(const std::string& kind, const std::string& data_path, const std::string& out_path) {
  const std::string hash = harness::file_config_hash(data_path);
  if (kind == "per_opponent_bars") {
    harness::emit_per_opponent_bars(harness::read_metrics_csv(data_path), out_path, hash);
  } else if (kind == "learning_curve") {
    harness::emit_learning_curve(harness::read_metrics_csv(data_path), out_path, hash);
  } else if (kind == "alpha_trajectory") {
    harness::emit_alpha_trajectory(harness::read_diagnostics_csv(data_path), out_path, hash);
  } else {
    std::cerr << "unknown plot kind: " << kind << "\n";
    return 1;
  }
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int cmd_dump(const std::string& config_path, const std::string& out_path, int episodes,
             std::uint64_t seed) {
  harness::ExperimentConfig cfg = load_config(config_path);
  auto env = cfg.make_game();
  Rng rng(derive_seed(cfg.u64("game.seed"), seed, 0xd0));
  std::vector<std::vector<envs::TransitionRecord>> eps(episodes);
  for (int e = 0; e < episodes; ++e) {
    env->reset(rng.next_u64());
    while (!env->state().done) {
      envs::TransitionRecord tr;
      tr.s = env->state().observation;
      tr.a = rng.below(env->spec().agent_actions);
      tr.a_o = rng.below(env->spec().opponent_actions);
      envs::StepResult res = env->step(tr.a, tr.a_o);
      tr.s_next = res.next_state.observation;
      tr.r = res.r;
      tr.r_o = res.r_o;
      eps[e].push_back(std::move(tr));
    }
  }
  std::ofstream os(out_path, std::ios::binary | std::ios::trunc);
  envs::dump_trajectories_csv(os, eps);
  std::cout << "wrote " << episodes << " uniform-play episodes to " << out_path << "\n";
  return 0;
}

int cmd_verify(std::uint64_t seed) {
  auto rows = oracle::run_verification(seed);
  bool all_ok = true;
  std::printf("%-36s %-6s %s\n", "check", "result", "detail");
  for (const auto& row : rows) {
    all_ok = all_ok && row.passed;
    std::printf("%-36s %-6s %s\n", row.name.c_str(), row.passed ? "PASS" : "FAIL",
                row.detail.c_str());
  }
  return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"model-based opponent modeling simulator"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", variant = "mbom", plot_kind, data_path, plot_out;
  std::uint64_t seed = 0;
  long seed_filter = -1;
  int workers = 0;

  CLI::App* zoo = app.add_subcommand("zoo", "build the opponent pool");
  zoo->add_option("--config", config_path, "config file")->required();
  zoo->add_option("--out", out_dir, "output directory");

  CLI::App* pretrain = app.add_subcommand("pretrain", "train agent, environment model and "
                                                      "level-0 opponent model");
  pretrain->add_option("--config", config_path, "config file")->required();
  pretrain->add_option("--out", out_dir, "output directory");
  pretrain->add_option("--seed", seed, "agent seed");
  pretrain->add_option("--variant", variant, "variant (ppo_only trains without opponent model)");

  CLI::App* test = app.add_subcommand("test", "run the adaptation test phase");
  test->add_option("--config", config_path, "config file")->required();
  test->add_option("--out", out_dir, "output directory");
  test->add_option("--variant", variant, "variant to run");
  test->add_option("--workers", workers, "worker threads (0 = hardware)");
  test->add_option("--seed", seed_filter, "restrict to one seed");

  CLI::App* agg = app.add_subcommand("aggregate", "summarize metrics CSVs");
  agg->add_option("--config", config_path, "config file")->required();
  agg->add_option("--out", out_dir, "directory holding metrics_*.csv");

  CLI::App* plot = app.add_subcommand("plot", "emit an SVG plot");
  plot->add_option("--kind", plot_kind,
                   "per_opponent_bars | learning_curve | alpha_trajectory")
      ->required();
  plot->add_option("--data", data_path, "metrics or diagnostics CSV")->required();
  plot->add_option("--out", plot_out, "output SVG path")->required();

  int dump_episodes = 5;
  CLI::App* dump = app.add_subcommand("dump", "write uniform-play trajectories to CSV");
  dump->add_option("--config", config_path, "config file")->required();
  dump->add_option("--out", plot_out, "output CSV path")->required();
  dump->add_option("--episodes", dump_episodes, "episodes to record");
  dump->add_option("--seed", seed, "dump seed");

  CLI::App* verify = app.add_subcommand("verify", "run the oracle verification suite");
  verify->add_option("--seed", seed, "suite seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (zoo->parsed()) return cmd_zoo(config_path, out_dir);
    if (pretrain->parsed()) return cmd_pretrain(config_path, out_dir, variant, seed);
    if (test->parsed()) return cmd_test(config_path, out_dir, variant, workers, seed_filter);
    if (agg->parsed()) return cmd_aggregate(config_path, out_dir);
    if (plot->parsed()) return cmd_plot(plot_kind, data_path, plot_out);
    if (dump->parsed()) return cmd_dump(config_path, plot_out, dump_episodes, seed);
    if (verify->parsed()) return cmd_verify(seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
