// venom_cli: data generation, training, attacks, evaluation, ablation and
// rendering. Exit codes: 0 ok, 1 usage/validation, 2 I/O or format, 3 numeric.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <type_traits>
#include <vector>

#include "venom/venom.hpp"

namespace fs = std::filesystem;
using namespace venom;

namespace {

std::string to_text(const std::string& v) { return v; }
std::string to_text(bool v) { return v ? "true" : "false"; }
std::string to_text(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
template <class T>
  requires std::is_integral_v<T>
std::string to_text(T v) {
  return std::to_string(v);
}

/// Binds a CLI11 option to a variable and remembers how to print it back
/// into resolved.cfg.
class Command {
 public:
  Command(CLI::App& app, const std::string& name, const std::string& desc) : sub_(app.add_subcommand(name, desc)) {
    sub_->add_option("--config", config_path_, "key=value config file; flags override it");
  }

  template <class T>
  CLI::Option* add(const std::string& key, T& var, const std::string& desc) {
    printers_.emplace_back(key, [&var] { return to_text(var); });
    return sub_->add_option("--" + key, var, desc)->capture_default_str();
  }

  CLI::App* app() const { return sub_; }
  std::string name() const { return sub_->get_name(); }
  bool given(const std::string& key) const { return sub_->get_option("--" + key)->count() > 0; }

  std::set<std::string> keys() const {
    std::set<std::string> out;
    for (const auto& [k, f] : printers_) out.insert(k);
    return out;
  }

  RunConfig resolved() const {
    RunConfig cfg{{"command", name()}};
    for (const auto& [k, f] : printers_) cfg[k] = f();
    return cfg;
  }

 private:
  CLI::App* sub_;
  std::string config_path_;
  std::vector<std::pair<std::string, std::function<std::string()>>> printers_;
};

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir);
}

void write_text(const std::string& path, const std::string& text) {
  binio::write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

void write_resolved(const Command& cmd, const std::string& out) {
  write_text((fs::path(out) / "resolved.cfg").string(), format_config(cmd.resolved()));
}

/// A directory argument resolves to the named file inside it.
std::string in_dir(const std::string& path, const std::string& file) {
  return fs::is_directory(path) ? (fs::path(path) / file).string() : path;
}

void require_flag(const std::string& value, const std::string& key) {
  if (value.empty()) throw ConfigError("--" + key + " is required");
}

std::optional<int> optional_label(int v) { return v < 0 ? std::nullopt : std::optional<int>(v); }

struct AttackFlags {
  std::string mode = "nae";
  std::string direction = "targeted";
  int cls = -1;     // -1 cycles classes (NAE)
  int target = -1;  // -1 lets select_target choose
  std::size_t count = 200;
  std::size_t n = 5;
  std::size_t tstart = 12;
  double scale = 0.5;
  double beta = 0.5;
  double cfg_scale = 1.0;
  std::uint64_t seed = 0;
  bool adaptive = true;
  bool apply_on_deactivation = true;
  bool normalize = false;
  std::size_t uae_depth = 0;
  std::string diff;
  std::string victim;
  std::string ref;
  std::size_t jobs = 1;

  void bind(Command& c) {
    c.add("mode", mode, "nae | uae");
    c.add("direction", direction, "targeted | untargeted");
    c.add("class", cls, "generation class, -1 cycles classes");
    c.add("target", target, "target label, -1 picks the runner-up class");
    c.add("count", count, "number of attacks");
    c.add("n", n, "max passes");
    c.add("tstart", tstart, "guidance window start step");
    c.add("scale", scale, "guidance scale s");
    c.add("beta", beta, "momentum coefficient");
    c.add("cfg-scale", cfg_scale, "classifier-free guidance scale");
    c.add("seed", seed, "base seed");
    c.add("adaptive", adaptive, "adaptive switch (false forces it ON)");
    c.add("apply-on-deactivation", apply_on_deactivation, "apply the update on the step the switch turns OFF");
    c.add("normalize", normalize, "L2-normalise guidance gradients");
    c.add("uae-depth", uae_depth, "UAE inversion depth, 0 = full");
    c.add("diff", diff, "diffusion checkpoint");
    c.add("victim", victim, "white-box victim checkpoint");
    c.add("ref", ref, "reference dataset for UAE mode");
    c.add("jobs", jobs, "worker threads");
  }

  BatchSpec spec(const Dataset* refs) const {
    BatchSpec s;
    AttackConfig& b = s.base;
    b.mode = parse_mode(mode);
    b.direction = parse_direction(direction);
    b.max_passes = n;
    b.t_start = tstart;
    b.scale = scale;
    b.beta = beta;
    b.cfg_scale = cfg_scale;
    b.seed = seed;
    b.adaptive = adaptive;
    b.apply_on_deactivation = apply_on_deactivation;
    b.normalize_gradient = normalize;
    b.uae_depth = uae_depth;
    b.target = optional_label(target);
    if (cls >= static_cast<int>(kNumClasses)) throw ConfigError("--class out of range");
    if (b.mode == Mode::kUae && cls >= 0) throw ConfigError("--class is taken from the reference labels in UAE mode");
    if (b.mode == Mode::kUae && b.target) throw ConfigError("UAE batches pick targets per reference; drop --target");
    if (b.target && cls < 0) throw ConfigError("--target needs a fixed --class");
    if (b.direction == Direction::kUntargeted && b.target) throw ConfigError("--target has no meaning when untargeted");
    s.fixed_class = cls >= 0;
    b.cls = std::max(cls, 0);
    s.count = count;
    s.references = refs;
    s.jobs = jobs;
    return s;
  }

  void check_inputs() const {
    require_flag(diff, "diff");
    require_flag(victim, "victim");
    if (mode == "uae" && ref.empty()) throw ConfigError("UAE mode requires --ref");
  }
};

int cmd_gen_data(const Command& cmd, const std::string& out, std::uint64_t seed, std::size_t per_class) {
  if (per_class == 0) throw ConfigError("--per-class must be at least 1");
  require_flag(out, "out");
  const auto ds = generate_dataset(seed, per_class);
  ensure_dir(out);
  save_dataset(ds.train, (fs::path(out) / "train.vnmd").string());
  save_dataset(ds.test, (fs::path(out) / "test.vnmd").string());
  std::string manifest = "file,count,hash\n";
  manifest += "train.vnmd," + std::to_string(ds.train.size()) + "," + tensor_hash(ds.train.images) + "\n";
  manifest += "test.vnmd," + std::to_string(ds.test.size()) + "," + tensor_hash(ds.test.images) + "\n";
  write_text((fs::path(out) / "manifest.csv").string(), manifest);
  write_resolved(cmd, out);
  std::cout << "train " << ds.train.size() << " test " << ds.test.size() << "\n";
  return 0;
}

struct DiffusionFlags {
  std::string data, out;
  std::uint64_t seed = 0;
  int T = 200;
  double beta_min = 1e-4, beta_max = 0.02;
  std::size_t sample_steps = 50;
  DenoiserTrainConfig train;

  void bind(Command& c) {
    c.add("data", data, "dataset directory or train file");
    c.add("out", out, "output directory");
    c.add("seed", seed, "training seed");
    c.add("T", T, "training horizon");
    c.add("beta-min", beta_min, "first beta");
    c.add("beta-max", beta_max, "last beta");
    c.add("sample-steps", sample_steps, "DDIM steps");
    c.add("steps", train.steps, "optimiser steps");
    c.add("batch", train.batch, "batch size");
    c.add("lr", train.lr, "initial learning rate");
    c.add("lr-final", train.lr_final, "final learning rate");
    c.add("cfg-dropout", train.cfg_dropout, "null-token probability");
    c.add("hidden", train.hidden, "hidden width");
    c.add("ema", train.ema_decay, "weight averaging decay, 0 disables");
  }
};

int cmd_train_diffusion(const Command& cmd, const DiffusionFlags& f) {
  require_flag(f.data, "data");
  require_flag(f.out, "out");
  if (!(f.beta_min > 0.0 && f.beta_min <= f.beta_max && f.beta_max < 1.0) || f.T < 1 || f.sample_steps < 1 ||
      f.sample_steps > static_cast<std::size_t>(f.T))
    throw ConfigError("schedule parameters out of range");
  const Dataset train = load_dataset(in_dir(f.data, "train.vnmd"));
  const NoiseSchedule sched = build_schedule(f.T, f.beta_min, f.beta_max, f.sample_steps);
  Rng rng(f.seed);
  auto result = train_denoiser(sched, train, f.train, rng);
  ensure_dir(f.out);
  save_diffusion({sched, result.model}, (fs::path(f.out) / "diffusion.vnmc").string());
  std::string trace = "step,loss\n";
  for (std::size_t i = 0; i < result.loss_trace.size(); ++i)
    trace += std::to_string(i + 1) + "," + format_number(result.loss_trace[i]) + "\n";
  write_text((fs::path(f.out) / "trace.csv").string(), trace);
  write_resolved(cmd, f.out);
  const std::size_t tail = std::min<std::size_t>(1000, result.loss_trace.size());
  double mean = 0.0;
  for (std::size_t i = result.loss_trace.size() - tail; i < result.loss_trace.size(); ++i) mean += result.loss_trace[i];
  std::cout << "trailing mean loss " << format_number(mean / static_cast<double>(tail)) << "\n";
  return 0;
}

struct VictimFlags {
  std::string data, out, arch = "a";
  std::uint64_t seed = 0;
  double adv_eps = 0.0;
  ClassifierTrainConfig train;

  void bind(Command& c) {
    c.add("data", data, "dataset directory");
    c.add("out", out, "output directory");
    c.add("arch", arch, "a | b");
    c.add("seed", seed, "training seed");
    c.add("adv-eps", adv_eps, "sign-gradient training perturbation, 0 = plain training");
    c.add("epochs", train.epochs, "epochs");
    c.add("batch", train.batch, "batch size");
    c.add("lr", train.lr, "learning rate");
  }
};

int cmd_train_victim(const Command& cmd, const VictimFlags& f) {
  require_flag(f.data, "data");
  require_flag(f.out, "out");
  const Arch arch = parse_arch(f.arch);
  if (f.adv_eps < 0.0) throw ConfigError("--adv-eps must be non-negative");
  const Dataset train = load_dataset(in_dir(f.data, "train.vnmd"));
  const Dataset test = load_dataset((fs::path(f.data) / "test.vnmd").string());
  Rng rng(f.seed);
  auto result = adv_train_classifier(train, test, arch, f.adv_eps, f.train, rng);
  ensure_dir(f.out);
  save_victim(result.classifier, (fs::path(f.out) / "victim.vnmc").string());
  std::string trace = "epoch,loss,train_accuracy,test_accuracy\n";
  for (const auto& e : result.report.trace)
    trace += std::to_string(e.epoch) + "," + format_number(e.loss) + "," + format_number(e.train_accuracy) + "," +
             format_number(e.test_accuracy) + "\n";
  write_text((fs::path(f.out) / "trace.csv").string(), trace);
  const auto& r = result.report;
  write_text((fs::path(f.out) / "report.csv").string(),
             "train_accuracy,test_accuracy,perturbed_accuracy\n" + format_number(r.train_accuracy) + "," +
                 format_number(r.test_accuracy) + "," +
                 (std::isnan(r.perturbed_accuracy) ? std::string("NA") : format_number(r.perturbed_accuracy)) + "\n");
  write_resolved(cmd, f.out);
  std::cout << "test accuracy " << format_number(r.test_accuracy) << "\n";
  return 0;
}

int cmd_attack(const Command& cmd, const AttackFlags& f, const std::string& out, bool trajectory) {
  f.check_inputs();
  require_flag(out, "out");
  std::optional<Dataset> refs;
  if (f.mode == "uae") refs = load_dataset(in_dir(f.ref, "test.vnmd"));
  const BatchSpec spec = f.spec(refs ? &*refs : nullptr);
  const DiffusionModel diff = load_diffusion(f.diff);
  validate(spec.base, diff.schedule.num_steps());
  const VictimClassifier clf = load_victim(f.victim);
  const BatchResult result = run_batch(spec, diff.schedule, diff.predictor, clf);
  ensure_dir(out);
  save_records(result.records, (fs::path(out) / "records.jsonl").string(), trajectory);
  write_text((fs::path(out) / "summary.csv").string(), summary_csv(result.summary, spec.base));
  write_resolved(cmd, out);
  std::cout << "asr " << format_optional(result.summary.asr) << " over " << result.summary.count << "\n";
  return 0;
}

struct EvalFlags {
  std::string run, transfer, advtrain, defense = "purify", clean_ref, out, run_id;
  double purify_depth = 0.3;

  void bind(Command& c) {
    c.add("run", run, "attack run directory");
    c.add("transfer", transfer, "black-box victim checkpoint");
    c.add("advtrain", advtrain, "adversarially trained victim checkpoint");
    c.add("defense", defense, "purify | none");
    c.add("purify-depth", purify_depth, "purification depth fraction");
    c.add("clean-ref", clean_ref, "dataset for the Frechet distance instead of the run's clean samples");
    c.add("run-id", run_id, "run label, defaults to the run directory name");
    c.add("out", out, "output directory");
  }
};

Tensor flatten_dataset(const Dataset& ds) { return ds.images.reshaped({ds.size(), kImagePixels}); }

int cmd_eval(const Command& cmd, const EvalFlags& f) {
  require_flag(f.run, "run");
  require_flag(f.out, "out");
  if (f.defense != "purify" && f.defense != "none") throw ConfigError("--defense must be purify or none");
  const RunConfig run_cfg = load_config((fs::path(f.run) / "resolved.cfg").string());
  auto get = [&](const std::string& k) {
    auto it = run_cfg.find(k);
    if (it == run_cfg.end()) throw FormatError("run config lacks '" + k + "'");
    return it->second;
  };
  const auto records = load_records((fs::path(f.run) / "records.jsonl").string());
  if (records.empty()) throw FormatError("run has no records");
  const VictimClassifier white = load_victim(get("victim"));
  std::optional<VictimClassifier> transfer, adv;
  if (!f.transfer.empty()) transfer = load_victim(f.transfer);
  if (!f.advtrain.empty()) adv = load_victim(f.advtrain);
  std::optional<DiffusionModel> diff;
  if (f.defense == "purify") diff = load_diffusion(get("diff"));
  const Tensor clean =
      f.clean_ref.empty() ? clean_batch(records) : flatten_dataset(load_dataset(in_dir(f.clean_ref, "test.vnmd")));

  const std::uint64_t seed = std::stoull(get("seed"));
  SuiteModels models{&white, transfer ? &*transfer : nullptr, adv ? &*adv : nullptr, diff ? &*diff : nullptr,
                     f.purify_depth, seed};
  const MetricReport rep = evaluate_suite(records, clean, models);
  AttackConfig echo = records.front().config;
  echo.scale = std::stod(get("scale"));
  echo.beta = std::stod(get("beta"));
  echo.t_start = std::stoul(get("tstart"));
  const std::string id = f.run_id.empty() ? fs::path(f.run).lexically_normal().filename().string() : f.run_id;
  ensure_dir(f.out);
  write_text((fs::path(f.out) / "metrics.csv").string(),
             std::string(kMetricsHeader) + "\n" + metrics_csv_row(id.empty() ? "run" : id, rep, echo, seed) + "\n");
  write_resolved(cmd, f.out);
  std::cout << "asr_white " << format_number(rep.asr_white) << "\n";
  return 0;
}

int cmd_ablate(const Command& cmd, const AttackFlags& f, const std::string& module, const std::string& clean_ref,
               const std::string& out) {
  f.check_inputs();
  require_flag(out, "out");
  std::vector<AblationCell> cells =
      module == "grid" ? ablation_grid() : std::vector<AblationCell>{parse_ablation_cell(module)};
  std::optional<Dataset> refs;
  if (f.mode == "uae") refs = load_dataset(in_dir(f.ref, "test.vnmd"));
  const BatchSpec spec = f.spec(refs ? &*refs : nullptr);
  const DiffusionModel diff = load_diffusion(f.diff);
  validate(spec.base, diff.schedule.num_steps());
  const VictimClassifier clf = load_victim(f.victim);
  Tensor clean_features;
  if (!clean_ref.empty()) clean_features = clf.features(flatten_dataset(load_dataset(in_dir(clean_ref, "test.vnmd"))));

  std::string csv = "cell,momentum,adaptive,n,asr,fd,mean_guidance_steps,mean_passes,s,beta,t_start,seed\n";
  for (const auto& cell : cells) {
    const BatchSpec cs = ablation_spec(spec, cell);
    const BatchResult r = run_batch(cs, diff.schedule, diff.predictor, clf);
    // shared seeds: every cell has the same clean samples
    if (clean_ref.empty() && clean_features.empty()) {
      const Tensor cb = clean_batch(r.records);
      if (cb.rows() > clf.feature_dim()) clean_features = clf.features(cb);
    }
    std::optional<double> fd;
    std::vector<std::size_t> ok;
    for (std::size_t i = 0; i < r.records.size(); ++i)
      if (!r.records[i].x_star.empty()) ok.push_back(i);
    if (clean_features.rows() > clf.feature_dim() && ok.size() > clf.feature_dim()) {
      Tensor batch({ok.size(), kImagePixels});
      for (std::size_t j = 0; j < ok.size(); ++j)
        std::copy_n(r.records[ok[j]].x_star.data(), kImagePixels, batch.data() + j * kImagePixels);
      fd = frechet_distance(clf.features(batch), clean_features);
    }
    csv += std::string(ablation_cell_name(cell)) + "," + (cell.momentum ? "on" : "off") + "," +
           (cell.adaptive ? "on" : "off") + "," + std::to_string(r.summary.count) + "," +
           format_optional(r.summary.asr) + "," + format_optional(fd) + "," +
           format_number(r.summary.mean_guidance_steps) + "," + format_number(r.summary.mean_passes) + "," +
           format_number(cs.base.scale) + "," + format_number(cs.base.beta) + "," + std::to_string(cs.base.t_start) +
           "," + std::to_string(cs.base.seed) + "\n";
    std::cout << ablation_cell_name(cell) << " asr " << format_optional(r.summary.asr) << "\n";
  }
  ensure_dir(out);
  write_text((fs::path(out) / "ablation.csv").string(), csv);
  write_resolved(cmd, out);
  return 0;
}

int cmd_render(const Command& cmd, const std::string& run, const std::string& dataset, const std::string& grid,
               const std::string& out) {
  require_flag(out, "out");
  if (run.empty() == dataset.empty()) throw ConfigError("give exactly one of --run or --dataset");
  const GridSpec g = parse_grid(grid);
  std::vector<Tensor> tiles;
  if (!run.empty()) {
    for (auto& r : load_records((fs::path(run) / "records.jsonl").string()))
      if (!r.x_star.empty()) tiles.push_back(std::move(r.x_star));
  } else {
    const Dataset ds = load_dataset(in_dir(dataset, "test.vnmd"));
    for (std::size_t i = 0; i < ds.size(); ++i) tiles.push_back(ds.image(i));
  }
  const auto bytes = render_grid(tiles, g);
  ensure_dir(out);
  binio::write_file((fs::path(out) / "grid.pgm").string(), bytes);
  write_resolved(cmd, out);
  return 0;
}

const std::set<std::string> kCommands = {"gen-data", "train-diffusion", "train-victim", "attack",
                                         "eval",     "ablate",          "render"};

/// Expands `--config FILE` into explicit `--key=value` arguments placed
/// before the user's flags, so flags given on the command line win.
std::vector<std::string> expand_config(const std::vector<std::string>& args, RunConfig& file_cfg) {
  std::string path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  std::vector<std::string> rest;
  std::string command;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (command.empty() && kCommands.count(args[i])) {
      command = args[i];
      continue;
    }
    rest.push_back(args[i]);
  }
  if (!path.empty()) file_cfg = load_config(path);
  if (auto it = file_cfg.find("command"); it != file_cfg.end()) {
    if (!command.empty() && command != it->second)
      throw ConfigError("config is for '" + it->second + "', not '" + command + "'");
    command = it->second;
    file_cfg.erase(it);
  }
  std::vector<std::string> out{args[0]};
  if (!command.empty()) out.push_back(command);
  for (const auto& [k, v] : file_cfg)
    if (!v.empty()) out.push_back("--" + k + "=" + v);
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

int run(int argc, char** argv) {
  CLI::App app{"VENOM desk-scale toolkit"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  Command gen(app, "gen-data", "generate the toy shape dataset");
  std::string gen_out;
  std::uint64_t gen_seed = 0;
  std::size_t per_class = 1000;
  gen.add("out", gen_out, "output directory");
  gen.add("seed", gen_seed, "dataset seed");
  gen.add("per-class", per_class, "training images per class");

  Command tdiff(app, "train-diffusion", "train the conditional noise predictor");
  DiffusionFlags dflags;
  dflags.bind(tdiff);

  Command tvic(app, "train-victim", "train a victim classifier");
  VictimFlags vflags;
  vflags.bind(tvic);

  Command atk(app, "attack", "run a batch of VENOM attacks");
  AttackFlags aflags;
  std::string atk_out;
  bool trajectory = false;
  aflags.bind(atk);
  atk.add("out", atk_out, "output directory");
  atk.add("trajectory", trajectory, "log per-step switch and gradient norms");

  Command ev(app, "eval", "evaluate an attack run");
  EvalFlags eflags;
  eflags.bind(ev);

  Command abl(app, "ablate", "momentum x adaptive-switch ablation");
  AttackFlags bflags;
  std::string module = "grid", abl_ref, abl_out;
  bflags.bind(abl);
  abl.add("module", module, "grid | both | mo | as | none");
  abl.add("clean-ref", abl_ref, "dataset for the Frechet distance instead of the clean samples");
  abl.add("out", abl_out, "output directory");

  Command ren(app, "render", "render images as a PGM grid");
  std::string ren_run, ren_data, ren_grid = "8x8", ren_out;
  ren.add("run", ren_run, "attack run directory");
  ren.add("dataset", ren_data, "dataset file or directory");
  ren.add("grid", ren_grid, "RxC");
  ren.add("out", ren_out, "output directory");

  std::vector<Command*> commands{&gen, &tdiff, &tvic, &atk, &ev, &abl, &ren};

  std::vector<std::string> args(argv, argv + argc);
  RunConfig file_cfg;
  args = expand_config(args, file_cfg);
  for (Command* c : commands)
    if (args.size() > 1 && args[1] == c->name()) check_known_keys(file_cfg, c->keys());

  std::vector<const char*> cargs;
  for (const auto& a : args) cargs.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  // VENOM_SEED is the fallback when neither a flag nor the config sets a seed.
  auto seed_fallback = [](Command& c, std::uint64_t& seed) {
    if (c.given("seed")) return;
    if (const char* env = std::getenv("VENOM_SEED")) {
      try {
        seed = std::stoull(env);
      } catch (const std::exception&) {
        throw ConfigError(std::string("VENOM_SEED is not an integer: ") + env);
      }
    }
  };

  if (gen.app()->parsed()) {
    seed_fallback(gen, gen_seed);
    return cmd_gen_data(gen, gen_out, gen_seed, per_class);
  }
  if (tdiff.app()->parsed()) {
    seed_fallback(tdiff, dflags.seed);
    return cmd_train_diffusion(tdiff, dflags);
  }
  if (tvic.app()->parsed()) {
    seed_fallback(tvic, vflags.seed);
    return cmd_train_victim(tvic, vflags);
  }
  if (atk.app()->parsed()) {
    seed_fallback(atk, aflags.seed);
    return cmd_attack(atk, aflags, atk_out, trajectory);
  }
  if (ev.app()->parsed()) return cmd_eval(ev, eflags);
  if (abl.app()->parsed()) {
    seed_fallback(abl, bflags.seed);
    return cmd_ablate(abl, bflags, module, abl_ref, abl_out);
  }
  if (ren.app()->parsed()) return cmd_render(ren, ren_run, ren_data, ren_grid, ren_out);
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ContractViolation& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
