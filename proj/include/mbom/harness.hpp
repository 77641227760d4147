#pragma once

// Experiment orchestration: flat-file configuration, the pretraining
// phase, the 100-episode adaptation test phase with its ablation
// variants, metrics aggregation with t-based confidence intervals, SVG
// plot emission, and a worker pool for independent runs.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "mbom/opmodel.hpp"
#include "mbom/opponents.hpp"

namespace mbom::harness {

// --- configuration -----------------------------------------------------------

inline const std::vector<std::string>& known_variants() {
  static const std::vector<std::string> v = {"mbom",      "mbom_wo_iops", "mbom_bm",
                                             "mbom_unif", "mbom_phi_m",   "ppo_only"};
  return v;
}

// Flat key=value configuration with dotted sections. Unset keys fall
// back to per-game defaults; the canonical sorted text of all effective
// values feeds the config hash embedded in every output.
class ExperimentConfig {
 public:
  static ExperimentConfig defaults(const std::string& game) {
    ExperimentConfig cfg;
    cfg.values_["game.name"] = game;
    cfg.values_["game.seed"] = "0";
    cfg.values_["ppo.lr"] = "0.001";
    cfg.values_["ppo.updates"] = "10";
    cfg.values_["ppo.clip"] = "0.115";
    cfg.values_["ppo.entropy_coef"] = "0.01";
    cfg.values_["ppo.minibatch"] = "64";
    cfg.values_["ppo.rollout_steps"] = "512";
    cfg.values_["ppo.hidden"] = "64,32";
    cfg.values_["envmodel.epochs"] = "10";
    cfg.values_["envmodel.batch"] = "64";
    cfg.values_["envmodel.lr"] = "0.001";
    cfg.values_["iop.epochs"] = "10";
    cfg.values_["iop.batch"] = "64";
    cfg.values_["iop.lr"] = "0.001";
    cfg.values_["mbom.n_seq"] = "16";
    cfg.values_["mbom.exhaustive_limit"] = "256";
    cfg.values_["mbom.lambda"] = "0.9";
    cfg.values_["mbom.horizon"] = "10";
    cfg.values_["mbom.temperature"] = "1";
    cfg.values_["mbom.finetune_steps"] = "3";
    cfg.values_["mbom.finetune_lr"] = "0.005";
    cfg.values_["mbom.phi_level"] = "1";
    cfg.values_["pretrain.iterations"] = "160";
    cfg.values_["pretrain.nu"] = "20";
    cfg.values_["pretrain.opponent_updates"] = "1";
    cfg.values_["zoo.runs"] = "10";
    cfg.values_["zoo.train_per_run"] = "20";
    cfg.values_["zoo.val_per_run"] = "3";
    cfg.values_["zoo.test_per_run"] = "3";
    cfg.values_["zoo.reasoners_per_run"] = "3";
    cfg.values_["zoo.iterations"] = "120";
    cfg.values_["zoo.rollout_steps"] = "512";
    cfg.values_["zoo.seed"] = "9000";
    cfg.values_["zoo.entropy_coef"] = "0";
    cfg.values_["test.episodes"] = "100";
    cfg.values_["test.ppo_epochs"] = "10";
    cfg.values_["test.update_window"] = "4";
    cfg.values_["seeds"] = "0,1,2,3,4";
    cfg.values_["variant"] = "mbom";
    cfg.values_["workers"] = "0";
    if (game == "triangle") {
      cfg.values_["game.episode_len"] = "25";
      cfg.values_["ppo.gamma"] = "0.99";
      cfg.values_["ppo.gae_lambda"] = "0.99";
      cfg.values_["mbom.levels"] = "3";
      cfg.values_["mbom.k"] = "2";
      cfg.values_["zoo.variants"] =
          "plain,favor-T1,favor-T2,favor-T3,commute-T12,commute-T23,commute-T13,rotate";
    } else if (game == "coingame" || game == "coingame_joint") {
      cfg.values_["game.episode_len"] = "150";
      cfg.values_["ppo.gamma"] = "0";
      cfg.values_["ppo.gae_lambda"] = "0";
      cfg.values_["mbom.levels"] = "2";
      cfg.values_["mbom.k"] = "1";
      cfg.values_["zoo.variants"] = "plain";
    } else if (game == "pursuit") {
      cfg.values_["game.episode_len"] = "200";
      cfg.values_["ppo.gamma"] = "0.99";
      cfg.values_["ppo.gae_lambda"] = "0.99";
      cfg.values_["mbom.levels"] = "2";
      cfg.values_["mbom.k"] = "1";
      cfg.values_["zoo.variants"] = "plain";
    } else if (game == "matrix") {
      cfg.values_["game.episode_len"] = "8";
      cfg.values_["ppo.gamma"] = "0.99";
      cfg.values_["ppo.gae_lambda"] = "0.99";
      cfg.values_["mbom.levels"] = "2";
      cfg.values_["mbom.k"] = "1";
      cfg.values_["zoo.variants"] = "plain";
    } else {
      throw ConfigError("no defaults for game: " + game);
    }
    return cfg;
  }

  static ExperimentConfig from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read config: " + path);
    std::map<std::string, std::string> raw;
    std::string line;
    while (std::getline(is, line)) {
      const std::size_t hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos) continue;
      auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
      };
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (!key.empty()) raw[key] = value;
    }
    auto it = raw.find("game.name");
    if (it == raw.end()) throw ConfigError("config is missing game.name");
    ExperimentConfig cfg = defaults(it->second);
    for (const auto& [k, v] : raw) {
      if (!cfg.values_.count(k)) throw ConfigError("unknown config key: " + k);
      cfg.values_[k] = v;
    }
    cfg.validate();
    return cfg;
  }

  void set(const std::string& key, const std::string& value) {
    if (!values_.count(key)) throw ConfigError("unknown config key: " + key);
    if (key == "variant") {
      bool ok = false;
      for (const std::string& v : known_variants()) ok = ok || v == value;
      if (!ok) throw ConfigError("unknown variant: " + value);
    }
    values_[key] = value;
  }

  const std::string& str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key: " + key);
    return it->second;
  }

  int integer(const std::string& key) const { return std::stoi(str(key)); }
  double real(const std::string& key) const { return std::stod(str(key)); }
  std::uint64_t u64(const std::string& key) const { return std::stoull(str(key)); }

  std::vector<int> int_list(const std::string& key) const {
    std::vector<int> out;
    std::stringstream ss(str(key));
    std::string tok;
    while (std::getline(ss, tok, ','))
      if (!tok.empty()) out.push_back(std::stoi(tok));
    return out;
  }

  std::vector<std::uint64_t> seed_list() const {
    std::vector<std::uint64_t> out;
    std::stringstream ss(str("seeds"));
    std::string tok;
    while (std::getline(ss, tok, ','))
      if (!tok.empty()) out.push_back(std::stoull(tok));
    return out;
  }

  std::vector<std::string> string_list(const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream ss(str(key));
    std::string tok;
    while (std::getline(ss, tok, ','))
      if (!tok.empty()) out.push_back(tok);
    return out;
  }

  void validate() const {
    const std::string& variant = str("variant");
    bool ok = false;
    for (const std::string& v : known_variants()) ok = ok || v == variant;
    if (!ok) throw ConfigError("unknown variant: " + variant);
    if (variant == "mbom_phi_m" && integer("mbom.phi_level") >= integer("mbom.levels"))
      throw ConfigError("mbom.phi_level must be below mbom.levels");
    if (integer("mbom.levels") < 1) throw ConfigError("mbom.levels must be positive");
    if (seed_list().empty()) throw ConfigError("seeds must be non-empty");
  }

  std::string canonical_text() const {
    std::string out;
    for (const auto& [k, v] : values_) {
      out += k;
      out += '=';
      out += v;
      out += '\n';
    }
    return out;
  }

  std::string hash() const {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a(canonical_text())));
    return buf;
  }

  // Hash over the keys matching any of the given dotted prefixes; used to
  // key on-disk caches to the settings that actually affect them.
  std::string sub_hash(std::span<const std::string> prefixes) const {
    std::string text;
    for (const auto& [k, v] : values_) {
      for (const std::string& p : prefixes) {
        if (k.rfind(p, 0) == 0) {
          text += k + "=" + v + "\n";
          break;
        }
      }
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(text)));
    return buf;
  }

  ppo::PpoConfig ppo_config() const {
    ppo::PpoConfig c;
    c.lr = real("ppo.lr");
    c.epochs = integer("ppo.updates");
    c.clip = real("ppo.clip");
    c.entropy_coef = real("ppo.entropy_coef");
    c.minibatch = integer("ppo.minibatch");
    c.gamma = real("ppo.gamma");
    c.lam = real("ppo.gae_lambda");
    return c;
  }

  opmodel::MbomOptions mbom_options() const {
    opmodel::MbomOptions o;
    o.k = integer("mbom.k");
    o.n_seq = integer("mbom.n_seq");
    o.exhaustive_limit = integer("mbom.exhaustive_limit");
    o.gamma = real("ppo.gamma");
    o.finetune_steps = integer("mbom.finetune_steps");
    o.finetune_lr = real("mbom.finetune_lr");
    const std::string& game = str("game.name");
    if (game == "coingame_joint") {
      o.v_sign = 1.0;  // cooperative: the partner's value matches ours
      o.mode = opmodel::RolloutMode::bootstrapped;
    } else {
      o.v_sign = -1.0;
      o.mode = opmodel::RolloutMode::bootstrapped;
    }
    if (o.gamma == 0.0) o.mode = opmodel::RolloutMode::plain;
    return o;
  }

  opponents::ZooConfig zoo_config() const {
    opponents::ZooConfig z;
    z.runs = integer("zoo.runs");
    z.train_per_run = integer("zoo.train_per_run");
    z.val_per_run = integer("zoo.val_per_run");
    z.test_per_run = integer("zoo.test_per_run");
    z.reasoners_per_run = integer("zoo.reasoners_per_run");
    z.iterations = integer("zoo.iterations");
    z.rollout_steps = integer("zoo.rollout_steps");
    z.hidden = int_list("ppo.hidden");
    z.ppo = ppo_config();
    z.opponent_entropy = real("zoo.entropy_coef");
    z.variants = string_list("zoo.variants");
    z.seed = u64("zoo.seed");
    return z;
  }

  std::unique_ptr<envs::Env> make_game() const {
    return envs::make_env(str("game.name"), integer("game.episode_len"));
  }

 private:
  std::map<std::string, std::string> values_;
};

// --- metrics -------------------------------------------------------------------

struct MetricsRow {
  std::uint64_t seed = 0;
  std::string opponent_id;
  std::string opponent_type;
  std::string variant;
  int episode = 0;
  double agent_return = 0.0;
  double opponent_return = 0.0;
  double aux_metric = 0.0;
};

inline constexpr const char* kMetricsHeader =
    "seed,opponent_id,opponent_type,variant,episode,agent_return,opponent_return,aux_metric";

inline void sort_metrics(std::vector<MetricsRow>& rows) {
  std::sort(rows.begin(), rows.end(), [](const MetricsRow& a, const MetricsRow& b) {
    return std::tie(a.variant, a.opponent_type, a.opponent_id, a.seed, a.episode) <
           std::tie(b.variant, b.opponent_type, b.opponent_id, b.seed, b.episode);
  });
}

inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_metrics_csv(const std::string& path, std::vector<MetricsRow> rows,
                              const std::string& config_hash) {
  sort_metrics(rows);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ConfigError("cannot write metrics: " + path);
  os << kMetricsHeader << "\n";
  for (const MetricsRow& r : rows) {
    os << r.seed << ',' << r.opponent_id << ',' << r.opponent_type << ',' << r.variant << ','
       << r.episode << ',' << format_real(r.agent_return) << ',' << format_real(r.opponent_return)
       << ',' << format_real(r.aux_metric) << "\n";
  }
  os << "# config_hash=" << config_hash << "\n";
}

inline std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read metrics: " + path);
  std::string line;
  std::getline(is, line);
  if (line != kMetricsHeader) throw ConfigError("metrics header mismatch in " + path);
  std::vector<MetricsRow> rows;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string tok;
    MetricsRow r;
    std::getline(ss, tok, ',');
    r.seed = std::stoull(tok);
    std::getline(ss, r.opponent_id, ',');
    std::getline(ss, r.opponent_type, ',');
    std::getline(ss, r.variant, ',');
    std::getline(ss, tok, ',');
    r.episode = std::stoi(tok);
    std::getline(ss, tok, ',');
    r.agent_return = std::stod(tok);
    std::getline(ss, tok, ',');
    r.opponent_return = std::stod(tok);
    std::getline(ss, tok, ',');
    r.aux_metric = std::stod(tok);
    rows.push_back(std::move(r));
  }
  return rows;
}

// --- statistics ------------------------------------------------------------------

// Two-sided 97.5% Student-t quantiles for df 1..30, then the normal limit.
inline double t_quantile_975(int df) {
  static const double table[] = {
      12.7062047364321, 4.3026527296961, 3.1824463052843, 2.7764451051978, 2.5705818356363,
      2.4469118511450,  2.3646242515928, 2.3060041352042, 2.2621571628541, 2.2281388519649,
      2.2009851600829,  2.1788128296634, 2.1603686564610, 2.1447866879169, 2.1314495455593,
      2.1199052992210,  2.1098155778332, 2.1009220402410, 2.0930240544083, 2.0859634472658,
      2.0796138447277,  2.0738730679040, 2.0686576104190, 2.0638985616280, 2.0595385527533,
      2.0555294386429,  2.0518305164803, 2.0484071417952, 2.0452296421327, 2.0422724563012};
  if (df < 1) throw UsageError("t quantile: df must be positive");
  if (df <= 30) return table[df - 1];
  return 1.9599639845401;
}

struct MeanCi {
  double mean = 0.0;
  double halfwidth = 0.0;
  int n = 0;
};

inline MeanCi mean_ci95(std::span<const double> values) {
  MeanCi out;
  out.n = static_cast<int>(values.size());
  if (out.n < 2) throw UsageError("mean_ci95: needs at least 2 values");
  for (double v : values) out.mean += v;
  out.mean /= out.n;
  double var = 0.0;
  for (double v : values) var += (v - out.mean) * (v - out.mean);
  var /= (out.n - 1);
  out.halfwidth = t_quantile_975(out.n - 1) * std::sqrt(var / out.n);
  return out;
}

struct SummaryRow {
  std::string variant;
  std::string opponent_type;
  double mean = 0.0;
  double ci95_halfwidth = 0.0;
  int n_seeds = 0;
};

// Mean with a t-based 95% confidence interval over per-seed means, per
// (variant, opponent type).
inline std::vector<SummaryRow> aggregate(const std::vector<MetricsRow>& rows) {
  std::map<std::pair<std::string, std::string>, std::map<std::uint64_t, std::pair<double, int>>>
      groups;
  for (const MetricsRow& r : rows) {
    auto& acc = groups[{r.variant, r.opponent_type}][r.seed];
    acc.first += r.agent_return;
    acc.second += 1;
  }
  std::vector<SummaryRow> out;
  for (const auto& [key, per_seed] : groups) {
    Vec means;
    for (const auto& [seed, acc] : per_seed) means.push_back(acc.first / acc.second);
    MeanCi ci = mean_ci95(means);
    out.push_back({key.first, key.second, ci.mean, ci.halfwidth, ci.n});
  }
  return out;
}

inline void write_summary_csv(const std::string& path, const std::vector<SummaryRow>& rows,
                              const std::string& config_hash) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  os << "variant,opponent_type,mean,ci95_halfwidth,n_seeds\n";
  for (const SummaryRow& r : rows)
    os << r.variant << ',' << r.opponent_type << ',' << format_real(r.mean) << ','
       << format_real(r.ci95_halfwidth) << ',' << r.n_seeds << "\n";
  os << "# config_hash=" << config_hash << "\n";
}

// --- pretraining ------------------------------------------------------------------

struct PretrainBundle {
  ppo::ConditionedPolicy policy;
  ppo::ValueNet value;
  opmodel::EnvModel env_model;
  opmodel::Iop iop0;
  double env_model_train_error = 0.0;
  double env_model_eval_error = 0.0;
  std::string config_hash;
  std::uint64_t seed = 0;
};

struct TrainCurveRow {
  int iteration = 0;
  double mean_return = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
};

// Trains the agent policy against nu learning opponents drawn from the
// zoo's training role, collecting the experience buffer, then fits the
// environment model (with a 10% held-out split) and the level-0 opponent
// model on it. `use_opponent_model` turns the concurrent level-0
// predictor on; the plain-policy baseline trains with an uninformative
// uniform predictor instead.
inline PretrainBundle run_pretraining(const ExperimentConfig& cfg, const opponents::Zoo& zoo,
                                      std::uint64_t seed, bool use_opponent_model,
                                      std::vector<TrainCurveRow>* curve = nullptr) {
  auto env = cfg.make_game();
  const int obs_dim = env->spec().state_dim;
  const int n_a = env->spec().agent_actions;
  const int n_o = env->spec().opponent_actions;
  const std::vector<int> hidden = cfg.int_list("ppo.hidden");
  Rng rng(derive_seed(cfg.u64("game.seed"), seed, use_opponent_model ? 1 : 2, 77));

  PretrainBundle bundle;
  bundle.seed = seed;
  bundle.config_hash = cfg.hash();
  bundle.policy = ppo::make_conditioned_policy(obs_dim, n_o, n_a, hidden, rng);
  bundle.value = ppo::make_value_net(obs_dim, hidden, rng);
  bundle.env_model = opmodel::make_env_model(obs_dim, n_a, n_o, hidden, rng);
  bundle.iop0 = opmodel::make_iop(obs_dim, n_o, hidden, rng);

  auto train_snaps = zoo.with_role(opponents::Role::train, false);
  if (train_snaps.empty()) throw UsageError("pretraining: zoo has no training snapshots");
  const int nu = std::min<int>(cfg.integer("pretrain.nu"), static_cast<int>(train_snaps.size()));
  const bool opponents_update = cfg.integer("pretrain.opponent_updates") != 0;
  const ppo::PpoConfig pcfg = cfg.ppo_config();

  std::vector<std::unique_ptr<opponents::OpponentAgent>> learners;
  for (int i = 0; i < nu; ++i)
    learners.push_back(std::make_unique<opponents::NaiveLearner>(*train_snaps[i], pcfg));

  nn::OptState popt = nn::make_opt(bundle.policy.net.spec, pcfg.lr);
  nn::OptState vopt = nn::make_opt(bundle.value.net.spec, pcfg.lr);

  std::vector<envs::TransitionRecord> buffer;
  const int iterations = cfg.integer("pretrain.iterations");
  const int rollout_steps = cfg.integer("ppo.rollout_steps");
  const opmodel::MbomOptions mopt = cfg.mbom_options();

  env->reset(rng.next_u64());
  for (int iter = 0; iter < iterations; ++iter) {
    opponents::OpponentAgent& opp = *learners[iter % nu];
    ppo::OpponentActor actor = [&opp](const Vec& obs, Rng& r) {
      return std::pair{opp.act(obs, r), 0.0};
    };
    ppo::OpponentPredictor predictor;
    if (use_opponent_model && iter > 0) {
      const opmodel::Iop& iop = bundle.iop0;
      predictor = [&iop](const Vec& obs) { return iop.probs(obs); };
    } else {
      predictor = ppo::uniform_predictor(n_o);
    }
    ppo::RolloutBuffer buf = ppo::collect_rollout(bundle.policy, bundle.value, *env, actor,
                                                  rollout_steps, predictor, rng, pcfg);
    ppo::PpoStats stats = ppo::ppo_update(bundle.policy, popt, bundle.value, vopt, buf, pcfg, rng);
    if (curve)
      curve->push_back({iter, buf.mean_episode_return(), stats.policy_loss, stats.value_loss,
                        stats.entropy});

    if (use_opponent_model) {
      // track at the cadence the online phase will use: one episode window
      const int window = cfg.integer("game.episode_len");
      std::vector<std::pair<Vec, int>> pairs;
      const std::size_t from =
          buf.steps.size() > static_cast<std::size_t>(window) ? buf.steps.size() - window : 0;
      for (std::size_t i = from; i < buf.steps.size(); ++i)
        pairs.emplace_back(buf.steps[i].obs, buf.steps[i].a_o);
      opmodel::finetune_level0(bundle.iop0, pairs, mopt.finetune_steps, mopt.finetune_lr, rng);
    }
    if (opponents_update) {
      opponents::EpisodeTrace trace;
      for (const ppo::StepRecord& st : buf.steps)
        trace.push_back({st.obs, st.a, st.a_o, st.r, st.r_o, st.obs_next, st.done});
      opp.episode_update(trace, rng);
    }
    auto records = buf.transitions();
    buffer.insert(buffer.end(), records.begin(), records.end());
  }

  // 90/10 split for the model's generalization check
  const std::size_t held_out = std::max<std::size_t>(1, buffer.size() / 10);
  const std::size_t train_count = buffer.size() - held_out;
  std::span<const envs::TransitionRecord> train_span(buffer.data(), train_count);
  std::span<const envs::TransitionRecord> eval_span(buffer.data() + train_count, held_out);
  opmodel::train_env_model(bundle.env_model, train_span, cfg.integer("envmodel.epochs"),
                           cfg.integer("envmodel.batch"), cfg.real("envmodel.lr"), rng);
  bundle.env_model_train_error = opmodel::env_model_error(bundle.env_model, train_span);
  bundle.env_model_eval_error = opmodel::env_model_error(bundle.env_model, eval_span);

  std::vector<std::pair<Vec, int>> all_pairs;
  all_pairs.reserve(buffer.size());
  for (const envs::TransitionRecord& tr : buffer) all_pairs.emplace_back(tr.s, tr.a_o);
  opmodel::train_level0(bundle.iop0, all_pairs, cfg.integer("iop.epochs"),
                        cfg.integer("iop.batch"), cfg.real("iop.lr"), rng);
  return bundle;
}

inline void write_train_curve_csv(const std::string& path,
                                  const std::vector<TrainCurveRow>& curve,
                                  const std::string& config_hash) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  os << "iteration,mean_return,policy_loss,value_loss,entropy\n";
  for (const TrainCurveRow& r : curve)
    os << r.iteration << ',' << format_real(r.mean_return) << ',' << format_real(r.policy_loss)
       << ',' << format_real(r.value_loss) << ',' << format_real(r.entropy) << "\n";
  os << "# config_hash=" << config_hash << "\n";
}

inline void save_bundle(const std::string& dir, const PretrainBundle& b,
                        const std::string& zoo_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nn::save_checkpoint(dir + "/policy.ckpt", b.policy.net.spec, b.policy.net.params);
  nn::save_checkpoint(dir + "/value.ckpt", b.value.net.spec, b.value.net.params);
  nn::save_checkpoint(dir + "/envmodel.ckpt", b.env_model.net.spec, b.env_model.net.params);
  nn::save_checkpoint(dir + "/iop0.ckpt", b.iop0.net.spec, b.iop0.net.params);
  nlohmann::json manifest;
  manifest["config_hash"] = b.config_hash;
  manifest["seed"] = b.seed;
  manifest["zoo"] = zoo_dir;
  manifest["env_model_train_error"] = b.env_model_train_error;
  manifest["env_model_eval_error"] = b.env_model_eval_error;
  manifest["components"] = {"policy.ckpt", "value.ckpt", "envmodel.ckpt", "iop0.ckpt"};
  std::ofstream os(dir + "/bundle.json");
  os << manifest.dump(2) << "\n";
}

inline PretrainBundle load_bundle(const std::string& dir, const ExperimentConfig& cfg) {
  std::ifstream is(dir + "/bundle.json");
  if (!is) throw ConfigError("bundle manifest not found in " + dir);
  nlohmann::json manifest = nlohmann::json::parse(is);
  PretrainBundle b;
  b.config_hash = manifest.at("config_hash").get<std::string>();
  b.seed = manifest.at("seed").get<std::uint64_t>();
  b.env_model_train_error = manifest.at("env_model_train_error").get<double>();
  b.env_model_eval_error = manifest.at("env_model_eval_error").get<double>();
  auto env = cfg.make_game();
  nn::Checkpoint pc = nn::load_checkpoint(dir + "/policy.ckpt");
  b.policy.net = {pc.spec, pc.params};
  b.policy.obs_dim = env->spec().state_dim;
  b.policy.opp_actions = env->spec().opponent_actions;
  nn::Checkpoint vc = nn::load_checkpoint(dir + "/value.ckpt");
  b.value.net = {vc.spec, vc.params};
  nn::Checkpoint mc = nn::load_checkpoint(dir + "/envmodel.ckpt");
  b.env_model.net = {mc.spec, mc.params};
  b.env_model.state_dim = env->spec().state_dim;
  b.env_model.agent_actions = env->spec().agent_actions;
  b.env_model.opp_actions = env->spec().opponent_actions;
  nn::Checkpoint ic = nn::load_checkpoint(dir + "/iop0.ckpt");
  b.iop0.net = {ic.spec, ic.params};
  b.iop0.level = 0;
  return b;
}

// --- test phase -------------------------------------------------------------------

struct DiagRow {
  int epoch = 0;
  Vec alpha;
  Vec psi;
  double level0_loss = 0.0;
  double env_model_eval_error = 0.0;
};

inline void write_diagnostics_csv(const std::string& path, const std::vector<DiagRow>& rows,
                                  const std::string& config_hash) {
  if (rows.empty()) throw UsageError("diagnostics: no rows");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  const int M = static_cast<int>(rows[0].alpha.size());
  os << "epoch";
  for (int m = 0; m < M; ++m) os << ",alpha_" << m;
  for (int m = 0; m < M; ++m) os << ",psi_" << m;
  os << ",level0_finetune_loss,env_model_eval_error\n";
  for (const DiagRow& r : rows) {
    os << r.epoch;
    for (double a : r.alpha) os << ',' << format_real(a);
    for (double p : r.psi) os << ',' << format_real(p);
    os << ',' << format_real(r.level0_loss) << ',' << format_real(r.env_model_eval_error) << "\n";
  }
  os << "# config_hash=" << config_hash << "\n";
}

// One PPO pass over a sliding window of recent episode buffers, with
// values and advantages recomputed under the current value net; log
// probabilities stay from collection time so the clipped ratio handles
// the drift of older episodes.
inline ppo::PpoStats windowed_policy_update(ppo::ConditionedPolicy& policy, nn::OptState& popt,
                                            ppo::ValueNet& value, nn::OptState& vopt,
                                            std::deque<ppo::RolloutBuffer>& window,
                                            const ppo::PpoConfig& cfg, Rng& rng) {
  std::vector<Vec> policy_in, value_in;
  std::vector<int> actions;
  Vec old_logp, adv, ret;
  for (ppo::RolloutBuffer& buf : window) {
    Vec rewards, values;
    for (ppo::StepRecord& st : buf.steps) {
      st.value = value.value(st.obs);
      rewards.push_back(st.r);
      values.push_back(st.value);
    }
    auto [a, r2] = ppo::compute_gae(rewards, values, 0.0, cfg.gamma, cfg.lam);
    for (std::size_t i = 0; i < buf.steps.size(); ++i) {
      const ppo::StepRecord& st = buf.steps[i];
      Vec input;
      policy.build_input(st.obs, st.cond, input);
      policy_in.push_back(std::move(input));
      value_in.push_back(st.obs);
      actions.push_back(st.a);
      old_logp.push_back(st.logp);
      adv.push_back(a[i]);
      ret.push_back(r2[i]);
    }
  }
  return ppo::ppo_update_batch(policy.net, popt, value.net, vopt, policy_in, value_in, actions,
                               old_logp, adv, ret, cfg, rng);
}

// Game-specific auxiliary metric: touch count for the pursuit game,
// joint score for the coin game, zero elsewhere.
inline double aux_metric_for(const std::string& game, const opponents::EpisodeTrace& episode) {
  if (game == "pursuit") {
    int touches = 0;
    for (const auto& st : episode)
      if (st.r < 0.0) ++touches;
    return touches;
  }
  if (game == "coingame") {
    double joint = 0.0;
    for (const auto& st : episode) joint += st.r + st.r_o;
    return joint;
  }
  if (game == "coingame_joint") {
    double joint = 0.0;
    for (const auto& st : episode) joint += st.r;
    return joint;
  }
  return 0.0;
}

// 100 adaptation episodes against one test opponent. The environment
// model is frozen; the policy, value net and the opponent-model stack
// keep finetuning between episodes; the opponent behaves per its type.
inline std::vector<MetricsRow> run_test_phase(const ExperimentConfig& cfg,
                                              const PretrainBundle& bundle,
                                              const opponents::OpponentSnapshot& snap,
                                              const std::string& opponent_type,
                                              std::uint64_t seed,
                                              std::vector<DiagRow>* diagnostics = nullptr) {
  if (snap.role != opponents::Role::test)
    throw UsageError("run_test_phase: opponent " + snap.id + " is not in the test role");
  const std::string variant = cfg.str("variant");
  const std::string game = cfg.str("game.name");
  auto env = cfg.make_game();
  const int n_o = env->spec().opponent_actions;
  const ppo::PpoConfig pcfg = cfg.ppo_config();
  opmodel::MbomOptions mopt = cfg.mbom_options();
  const bool uses_opmodel = variant != "ppo_only";

  Rng rng(derive_seed(cfg.u64("game.seed"), seed, fnv1a(snap.id + "/" + opponent_type),
                      fnv1a(variant)));

  ppo::ConditionedPolicy policy = bundle.policy;  // finetuned online
  ppo::ValueNet value = bundle.value;
  const opmodel::EnvModel& env_model = bundle.env_model;  // frozen
  const std::uint64_t model_version = env_model.net.params.version;

  int m_levels = cfg.integer("mbom.levels");
  if (variant == "mbom_wo_iops") m_levels = 1;
  if (variant == "mbom_bm") mopt.random_finetune_targets = true;
  if (variant == "mbom_unif") mopt.uniform_mixing = true;
  if (variant == "mbom_phi_m") mopt.fixed_level = cfg.integer("mbom.phi_level");

  opmodel::IopStack stack = opmodel::make_stack(bundle.iop0, uses_opmodel ? m_levels : 1);
  opmodel::MixerState mixer = opmodel::make_mixer(uses_opmodel ? m_levels : 1,
                                                  cfg.real("mbom.lambda"),
                                                  cfg.integer("mbom.horizon"),
                                                  cfg.real("mbom.temperature"));

  ppo::OpponentPredictor predictor;
  if (uses_opmodel) {
    predictor = [levels = stack, alpha = mixer.alpha](const Vec& s) {
      return opmodel::mixed_iop(levels, alpha, s);
    };
  } else {
    predictor = ppo::uniform_predictor(n_o);
  }

  auto opponent = opponents::make_opponent(snap, opponent_type, pcfg,
                                           env->spec().agent_actions);
  nn::OptState popt = nn::make_opt(policy.net.spec, pcfg.lr);
  nn::OptState vopt = nn::make_opt(value.net.spec, pcfg.lr);

  const int episodes = cfg.integer("test.episodes");
  const int horizon = cfg.integer("mbom.horizon");
  ppo::PpoConfig online_cfg = pcfg;
  online_cfg.epochs = cfg.integer("test.ppo_epochs");
  const int update_window = std::max(1, cfg.integer("test.update_window"));
  std::deque<ppo::RolloutBuffer> window;
  std::vector<MetricsRow> rows;

  for (int episode = 0; episode < episodes; ++episode) {
    env->reset(rng.next_u64());
    ppo::RolloutBuffer buf;
    opponents::EpisodeTrace trace;
    while (!env->state().done) {
      ppo::StepRecord st;
      st.obs = env->state().observation;
      Vec pred = predictor(st.obs);
      const int a_o_pred = rng.categorical(pred);
      st.cond = one_hot(a_o_pred, n_o);
      ppo::ActResult act = ppo::conditioned_act(policy, st.obs, st.cond, rng);
      st.a = act.action;
      st.logp = act.log_prob;
      const int a_o = opponent->act(st.obs, rng);
      st.a_o = a_o;
      st.value = value.value(st.obs);
      envs::StepResult res = env->step(st.a, a_o);
      st.obs_next = res.next_state.observation;
      st.r = res.r;
      st.r_o = res.r_o;
      st.done = res.done;
      trace.push_back({st.obs, st.a, st.a_o, st.r, st.r_o, st.obs_next, st.done});
      buf.steps.push_back(std::move(st));
    }

    MetricsRow row;
    row.seed = seed;
    row.opponent_id = snap.id;
    row.opponent_type = opponent_type;
    row.variant = variant;
    row.episode = episode;
    for (const auto& st : trace) {
      row.agent_return += st.r;
      row.opponent_return += st.r_o;
    }
    row.aux_metric = aux_metric_for(game, trace);
    rows.push_back(std::move(row));

    if (uses_opmodel) {
      std::vector<std::pair<Vec, int>> recent;
      for (const auto& st : trace) recent.emplace_back(st.obs, st.a_o);
      std::vector<Vec> sim_states;
      const std::size_t from = trace.size() > static_cast<std::size_t>(horizon)
                                   ? trace.size() - horizon
                                   : 0;
      for (std::size_t i = from; i < trace.size(); ++i) sim_states.push_back(trace[i].obs);
      opmodel::MbomEpochResult res = opmodel::mbom_epoch(stack, mixer, env_model, policy, value,
                                                         recent, sim_states, mopt, rng);
      predictor = std::move(res.predictor);
      if (diagnostics)
        diagnostics->push_back({episode, res.alpha, mixer.psi, res.level0_loss,
                                opmodel::env_model_error(env_model, buf.transitions())});
    }

    window.push_back(std::move(buf));
    while (static_cast<int>(window.size()) > update_window) window.pop_front();
    if (online_cfg.epochs > 0)
      windowed_policy_update(policy, popt, value, vopt, window, online_cfg, rng);
    opponent->episode_update(trace, rng);
  }

  if (env_model.net.params.version != model_version)
    throw TrainingError("run_test_phase: environment model changed during testing");
  return rows;
}

// --- parallel grid ------------------------------------------------------------------

inline void parallel_for(int count, int workers, const std::function<void(int)>& fn) {
  if (workers <= 0) workers = static_cast<int>(std::thread::hardware_concurrency());
  workers = std::max(1, std::min(workers, count));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::atomic<bool> failed{false};
  std::string error;
  std::mutex error_mu;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= count || failed.load()) return;
        try {
          fn(i);
        } catch (const std::exception& e) {
          std::lock_guard<std::mutex> lock(error_mu);
          failed.store(true);
          error = e.what();
          return;
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (failed.load()) throw TrainingError("parallel run failed: " + error);
}

struct RunRequest {
  std::uint64_t seed = 0;
  const opponents::OpponentSnapshot* snapshot = nullptr;
  std::string opponent_type;
  std::string variant;
  const PretrainBundle* bundle = nullptr;
  std::vector<DiagRow>* diagnostics = nullptr;  // optional capture for one run
};

// Executes independent test-phase runs in worker threads; the result
// order is deterministic regardless of scheduling.
inline std::vector<MetricsRow> run_grid(const ExperimentConfig& base_cfg,
                                        const std::vector<RunRequest>& requests, int workers) {
  std::vector<std::vector<MetricsRow>> per_request(requests.size());
  parallel_for(static_cast<int>(requests.size()), workers, [&](int i) {
    const RunRequest& req = requests[i];
    ExperimentConfig cfg = base_cfg;
    cfg.set("variant", req.variant);
    per_request[i] = run_test_phase(cfg, *req.bundle, *req.snapshot, req.opponent_type, req.seed,
                                    req.diagnostics);
  });
  std::vector<MetricsRow> rows;
  for (const auto& part : per_request) rows.insert(rows.end(), part.begin(), part.end());
  return rows;
}

// --- on-disk caches ---------------------------------------------------------------

inline const std::vector<std::string>& zoo_cache_keys() {
  static const std::vector<std::string> keys = {"game.", "ppo.", "zoo."};
  return keys;
}

inline const std::vector<std::string>& pretrain_cache_keys() {
  static const std::vector<std::string> keys = {"game.", "ppo.",     "zoo.",
                                                "envmodel.", "iop.", "mbom.", "pretrain."};
  return keys;
}

// Loads the zoo cached under out_dir when its settings hash matches,
// otherwise builds and saves it.
inline opponents::Zoo ensure_zoo(const ExperimentConfig& cfg, const std::string& out_dir) {
  namespace fs = std::filesystem;
  const std::string dir = out_dir + "/zoo";
  const std::string key = cfg.sub_hash(zoo_cache_keys());
  const std::string meta_path = dir + "/zoo_meta.json";
  if (fs::exists(meta_path)) {
    std::ifstream is(meta_path);
    nlohmann::json meta = nlohmann::json::parse(is);
    if (meta.value("key", "") == key) return opponents::load_zoo(dir);
  }
  opponents::Zoo zoo =
      opponents::build_zoo(cfg.str("game.name"), cfg.integer("game.episode_len"),
                           cfg.zoo_config());
  opponents::save_zoo(dir, zoo);
  nlohmann::json meta;
  meta["key"] = key;
  std::ofstream os(meta_path);
  os << meta.dump(2) << "\n";
  return zoo;
}

// Loads a cached pretraining bundle for (seed, architecture) when its
// settings hash matches, otherwise trains and saves it.
inline PretrainBundle ensure_bundle(const ExperimentConfig& cfg, const opponents::Zoo& zoo,
                                    std::uint64_t seed, bool use_opponent_model,
                                    const std::string& out_dir) {
  namespace fs = std::filesystem;
  const std::string dir = out_dir + "/pretrain_" + (use_opponent_model ? "om" : "plain") + "_" +
                          std::to_string(seed);
  const std::string key = cfg.sub_hash(pretrain_cache_keys());
  const std::string meta_path = dir + "/cache_key.json";
  if (fs::exists(meta_path)) {
    std::ifstream is(meta_path);
    nlohmann::json meta = nlohmann::json::parse(is);
    if (meta.value("key", "") == key) return load_bundle(dir, cfg);
  }
  std::vector<TrainCurveRow> curve;
  PretrainBundle bundle = run_pretraining(cfg, zoo, seed, use_opponent_model, &curve);
  save_bundle(dir, bundle, out_dir + "/zoo");
  write_train_curve_csv(dir + "/train_curve.csv", curve, cfg.hash());
  nlohmann::json meta;
  meta["key"] = key;
  std::ofstream os(meta_path);
  os << meta.dump(2) << "\n";
  return bundle;
}

inline std::vector<DiagRow> read_diagnostics_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read diagnostics: " + path);
  std::string header;
  std::getline(is, header);
  int m_levels = 0;
  {
    std::stringstream ss(header);
    std::string col;
    while (std::getline(ss, col, ','))
      if (col.rfind("alpha_", 0) == 0) ++m_levels;
  }
  if (m_levels == 0) throw ConfigError("not a diagnostics file: " + path);
  std::vector<DiagRow> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string tok;
    DiagRow r;
    std::getline(ss, tok, ',');
    r.epoch = std::stoi(tok);
    for (int m = 0; m < m_levels; ++m) {
      std::getline(ss, tok, ',');
      r.alpha.push_back(std::stod(tok));
    }
    for (int m = 0; m < m_levels; ++m) {
      std::getline(ss, tok, ',');
      r.psi.push_back(std::stod(tok));
    }
    std::getline(ss, tok, ',');
    r.level0_loss = std::stod(tok);
    std::getline(ss, tok, ',');
    r.env_model_eval_error = std::stod(tok);
    rows.push_back(std::move(r));
  }
  return rows;
}

// Trailing "# config_hash=..." comment of any emitted CSV.
inline std::string file_config_hash(const std::string& path) {
  std::ifstream is(path);
  std::string line, hash;
  while (std::getline(is, line)) {
    const std::string tag = "# config_hash=";
    if (line.rfind(tag, 0) == 0) hash = line.substr(tag.size());
  }
  return hash;
}

// --- cooperative training --------------------------------------------------------------

struct CoopResult {
  Vec joint_score_per_iteration;  // summed joint reward of each iteration's episode

  double mean_tail(double fraction = 0.2) const {
    const std::size_t n = joint_score_per_iteration.size();
    const std::size_t from = n - std::max<std::size_t>(1, static_cast<std::size_t>(n * fraction));
    double acc = 0.0;
    for (std::size_t i = from; i < n; ++i) acc += joint_score_per_iteration[i];
    return acc / (n - from);
  }
};

// Scripted baseline: walk straight toward the coin regardless of color.
inline int greedy_coin_action(const Vec& obs, bool blue_player) {
  int self = 0, coin = 0;
  for (int i = 0; i < 9; ++i) {
    if (obs[(blue_player ? 0 : 9) + i] == 1.0) self = i;
    if (obs[18 + i] == 1.0) coin = i;
  }
  const int sx = self % 3, sy = self / 3, cx = coin % 3, cy = coin / 3;
  if (std::abs(cx - sx) >= std::abs(cy - sy) && cx != sx) return cx > sx ? 3 : 2;
  if (cy != sy) return cy > sy ? 0 : 1;
  return 0;
}

// Both sides learn simultaneously on the shared joint reward, each with
// a conditioned policy and an online level-0 model of the other. The
// greedy baseline replaces both learners with the scripted collector.
inline CoopResult run_cooperative_training(const ExperimentConfig& cfg, int iterations,
                                           std::uint64_t seed, bool greedy_baseline) {
  envs::CoinGame env(cfg.integer("game.episode_len"), /*joint_reward=*/true);
  const int obs_dim = env.spec().state_dim;
  const int n_actions = 4;
  const std::vector<int> hidden = cfg.int_list("ppo.hidden");
  const ppo::PpoConfig pcfg = cfg.ppo_config();
  const opmodel::MbomOptions mopt = cfg.mbom_options();
  Rng rng(derive_seed(cfg.u64("game.seed"), seed, greedy_baseline ? 91 : 17));

  struct Side {
    ppo::ConditionedPolicy policy;
    ppo::ValueNet value;
    opmodel::Iop partner_model;
    nn::OptState popt, vopt;
  };
  auto make_side = [&](Rng& r) {
    Side s{ppo::make_conditioned_policy(obs_dim, n_actions, n_actions, hidden, r),
           ppo::make_value_net(obs_dim, hidden, r),
           opmodel::make_iop(obs_dim, n_actions, hidden, r),
           {},
           {}};
    s.popt = nn::make_opt(s.policy.net.spec, pcfg.lr);
    s.vopt = nn::make_opt(s.value.net.spec, pcfg.lr);
    return s;
  };
  Side blue = make_side(rng);
  Side red = make_side(rng);

  CoopResult result;
  for (int iter = 0; iter < iterations; ++iter) {
    env.reset(rng.next_u64());
    ppo::RolloutBuffer blue_buf, red_buf;
    double joint = 0.0;
    while (!env.state().done) {
      const Vec obs = env.state().observation;
      int a, a_o;
      ppo::StepRecord bs, rs;
      if (greedy_baseline) {
        a = greedy_coin_action(obs, true);
        a_o = greedy_coin_action(obs, false);
      } else {
        Vec pred_red = iter > 0 ? blue.partner_model.probs(obs) : Vec(n_actions, 0.25);
        bs.cond = one_hot(rng.categorical(pred_red), n_actions);
        ppo::ActResult ba = ppo::conditioned_act(blue.policy, obs, bs.cond, rng);
        Vec pred_blue = iter > 0 ? red.partner_model.probs(obs) : Vec(n_actions, 0.25);
        rs.cond = one_hot(rng.categorical(pred_blue), n_actions);
        ppo::ActResult ra = ppo::conditioned_act(red.policy, obs, rs.cond, rng);
        a = ba.action;
        a_o = ra.action;
        bs.logp = ba.log_prob;
        rs.logp = ra.log_prob;
        bs.value = blue.value.value(obs);
        rs.value = red.value.value(obs);
      }
      envs::StepResult res = env.step(a, a_o);
      joint += res.r;
      if (!greedy_baseline) {
        bs.obs = obs;
        bs.a = a;
        bs.a_o = a_o;
        bs.r = res.r;
        bs.r_o = res.r_o;
        bs.obs_next = res.next_state.observation;
        bs.done = res.done;
        rs.obs = obs;
        rs.a = a_o;  // the red side optimizes its own action
        rs.a_o = a;
        rs.r = res.r_o;
        rs.r_o = res.r;
        rs.obs_next = res.next_state.observation;
        rs.done = res.done;
        blue_buf.steps.push_back(std::move(bs));
        red_buf.steps.push_back(std::move(rs));
      }
    }
    result.joint_score_per_iteration.push_back(joint);
    if (!greedy_baseline) {
      ppo::finalize_rollout(blue_buf, pcfg.gamma, pcfg.lam, 0.0);
      ppo::finalize_rollout(red_buf, pcfg.gamma, pcfg.lam, 0.0);
      ppo::ppo_update(blue.policy, blue.popt, blue.value, blue.vopt, blue_buf, pcfg, rng);
      ppo::ppo_update(red.policy, red.popt, red.value, red.vopt, red_buf, pcfg, rng);
      std::vector<std::pair<Vec, int>> red_actions, blue_actions;
      for (const auto& st : blue_buf.steps) {
        red_actions.emplace_back(st.obs, st.a_o);
        blue_actions.emplace_back(st.obs, st.a);
      }
      opmodel::finetune_level0(blue.partner_model, red_actions, mopt.finetune_steps,
                               mopt.finetune_lr, rng);
      opmodel::finetune_level0(red.partner_model, blue_actions, mopt.finetune_steps,
                               mopt.finetune_lr, rng);
    }
  }
  return result;
}

// --- plots --------------------------------------------------------------------------------

enum class PlotKind { per_opponent_bars, learning_curve, alpha_trajectory };

namespace detail {

class SvgWriter {
 public:
  SvgWriter(double width, double height) : width_(width), height_(height) {
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
                  "viewBox=\"0 0 %.0f %.0f\">\n",
                  width_, height_, width_, height_);
    body_ = buf;
    body_ += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  }

  void comment(const std::string& text) { body_ += "<!-- " + text + " -->\n"; }

  void rect(double x, double y, double w, double h, const std::string& fill) {
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "<rect x=\"%.3f\" y=\"%.3f\" width=\"%.3f\" height=\"%.3f\" fill=\"%s\"/>\n", x,
                  y, w, h, fill.c_str());
    body_ += buf;
  }

  void circle(double x, double y, double r, const std::string& fill) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "<circle cx=\"%.3f\" cy=\"%.3f\" r=\"%.3f\" fill=\"%s\"/>\n",
                  x, y, r, fill.c_str());
    body_ += buf;
  }

  void line(double x1, double y1, double x2, double y2, const std::string& stroke) {
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%.3f\" y1=\"%.3f\" x2=\"%.3f\" y2=\"%.3f\" stroke=\"%s\" "
                  "stroke-width=\"1\"/>\n",
                  x1, y1, x2, y2, stroke.c_str());
    body_ += buf;
  }

  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke) {
    body_ += "<polyline fill=\"none\" stroke=\"" + stroke + "\" stroke-width=\"1.5\" points=\"";
    char buf[64];
    for (const auto& [x, y] : pts) {
      std::snprintf(buf, sizeof(buf), "%.3f,%.3f ", x, y);
      body_ += buf;
    }
    body_ += "\"/>\n";
  }

  void text(double x, double y, const std::string& s, int size = 10) {
    char buf[120];
    std::snprintf(buf, sizeof(buf), "<text x=\"%.3f\" y=\"%.3f\" font-size=\"%d\">", x, y, size);
    body_ += buf;
    body_ += s;
    body_ += "</text>\n";
  }

  void save(const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw ConfigError("cannot write plot: " + path);
    os << body_ << "</svg>\n";
  }

  double width() const { return width_; }
  double height() const { return height_; }

 private:
  double width_, height_;
  std::string body_;
};

inline std::string variant_color(std::size_t index) {
  static const char* palette[] = {"#c44e52", "#4c72b0", "#55a868", "#8172b3", "#ccb974",
                                  "#64b5cd"};
  return palette[index % 6];
}

}  // namespace detail

// Per-opponent mean-return bars, grouped by variant.
inline void emit_per_opponent_bars(const std::vector<MetricsRow>& rows, const std::string& path,
                                   const std::string& config_hash) {
  if (rows.empty()) throw UsageError("emit_plot: no data");
  std::map<std::string, std::map<std::string, std::pair<double, int>>> acc;  // opponent -> variant
  for (const MetricsRow& r : rows) {
    auto& a = acc[r.opponent_id][r.variant];
    a.first += r.agent_return;
    a.second += 1;
  }
  std::vector<std::string> variants;
  for (const MetricsRow& r : rows)
    if (std::find(variants.begin(), variants.end(), r.variant) == variants.end())
      variants.push_back(r.variant);
  std::sort(variants.begin(), variants.end());

  double lo = 0.0, hi = 0.0;
  for (const auto& [opp, per_variant] : acc)
    for (const auto& [v, a] : per_variant) {
      const double mean = a.first / a.second;
      lo = std::min(lo, mean);
      hi = std::max(hi, mean);
    }
  if (hi == lo) hi = lo + 1.0;

  detail::SvgWriter svg(std::max(320.0, 40.0 + acc.size() * (variants.size() * 8.0 + 6.0)), 240);
  svg.comment("config_hash=" + config_hash);
  const double base_y = 200.0;
  const double scale = 160.0 / (hi - lo);
  const double zero_y = base_y - (0.0 - lo) * scale;
  svg.line(30, zero_y, svg.width() - 10, zero_y, "#888888");
  double x = 40.0;
  int index = 0;
  for (const auto& [opp, per_variant] : acc) {
    for (std::size_t vi = 0; vi < variants.size(); ++vi) {
      auto it = per_variant.find(variants[vi]);
      if (it == per_variant.end()) continue;
      const double mean = it->second.first / it->second.second;
      const double y = base_y - (mean - lo) * scale;
      svg.rect(x + vi * 8.0, std::min(y, zero_y), 7.0, std::abs(y - zero_y),
               detail::variant_color(vi));
    }
    if (index % 5 == 0) svg.text(x, 216, std::to_string(index), 8);
    x += variants.size() * 8.0 + 6.0;
    ++index;
  }
  for (std::size_t vi = 0; vi < variants.size(); ++vi) {
    svg.rect(40.0 + vi * 90.0, 224, 8, 8, detail::variant_color(vi));
    svg.text(52.0 + vi * 90.0, 232, variants[vi], 9);
  }
  svg.save(path);
}

// Mean return per episode index, one polyline per variant.
inline void emit_learning_curve(const std::vector<MetricsRow>& rows, const std::string& path,
                                const std::string& config_hash) {
  if (rows.empty()) throw UsageError("emit_plot: no data");
  std::map<std::string, std::map<int, std::pair<double, int>>> acc;  // variant -> episode
  int max_episode = 0;
  double lo = 0.0, hi = 0.0;
  for (const MetricsRow& r : rows) {
    auto& a = acc[r.variant][r.episode];
    a.first += r.agent_return;
    a.second += 1;
    max_episode = std::max(max_episode, r.episode);
  }
  for (auto& [v, per_ep] : acc)
    for (auto& [e, a] : per_ep) {
      const double mean = a.first / a.second;
      lo = std::min(lo, mean);
      hi = std::max(hi, mean);
    }
  if (hi == lo) hi = lo + 1.0;

  detail::SvgWriter svg(420, 240);
  svg.comment("config_hash=" + config_hash);
  svg.line(30, 200, 410, 200, "#888888");
  svg.line(30, 20, 30, 200, "#888888");
  std::size_t vi = 0;
  for (const auto& [variant, per_ep] : acc) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& [e, a] : per_ep) {
      const double mean = a.first / a.second;
      pts.emplace_back(30.0 + 380.0 * e / std::max(1, max_episode),
                       200.0 - 180.0 * (mean - lo) / (hi - lo));
    }
    svg.polyline(pts, detail::variant_color(vi));
    svg.rect(40.0 + vi * 90.0, 224, 8, 8, detail::variant_color(vi));
    svg.text(52.0 + vi * 90.0, 232, variant, 9);
    ++vi;
  }
  svg.save(path);
}

// Mixture-weight trajectory in the (alpha_0, alpha_1) plane, colored
// from red (early) to green (late).
inline void emit_alpha_trajectory(const std::vector<DiagRow>& diag, const std::string& path,
                                  const std::string& config_hash) {
  if (diag.empty()) throw UsageError("emit_plot: no data");
  detail::SvgWriter svg(260, 260);
  svg.comment("config_hash=" + config_hash);
  svg.line(30, 230, 230, 230, "#888888");
  svg.line(30, 230, 30, 30, "#888888");
  svg.text(120, 250, "alpha_0", 9);
  svg.text(4, 130, "a_1", 9);
  const std::size_t n = diag.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double a0 = diag[i].alpha[0];
    const double a1 = diag[i].alpha.size() > 1 ? diag[i].alpha[1] : 0.0;
    const double frac = n > 1 ? static_cast<double>(i) / (n - 1) : 0.0;
    char color[10];
    std::snprintf(color, sizeof(color), "#%02x%02x00", static_cast<int>(255 * (1.0 - frac)),
                  static_cast<int>(255 * frac));
    svg.circle(30.0 + 200.0 * a0, 230.0 - 200.0 * a1, 2.2, color);
  }
  svg.save(path);
}

}  // namespace mbom::harness
