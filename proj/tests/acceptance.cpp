// Acceptance run: one PASS/FAIL line per criterion, tolerances fixed below.
// usage: acceptance --ref DIR --cli PATH --work DIR

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <thread>

#include "oracles.hpp"
#include "support.hpp"

using namespace venom;
using namespace venom::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Clock {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct Context {
  std::string ref, cli, work;
  std::size_t jobs = 1;
  Dataset test;
  DiffusionModel diff;
  VictimClassifier a, b, adv;
  // filled by criterion 6 and reused by 8 and 10
  std::optional<BatchResult> nae;
};

// 1
Outcome autodiff_fd() {
  Clock clock;
  Rng rng(101);
  std::size_t passed = 0;
  double worst = 0.0;
  const std::size_t nets = 24;
  for (std::size_t k = 0; k < nets; ++k) {
    std::vector<std::size_t> widths{2 + rng.index(6)};
    const std::size_t depth = 1 + rng.index(3);
    for (std::size_t d = 0; d < depth; ++d) widths.push_back(2 + rng.index(7));
    const Activation act = k % 2 ? Activation::kTanh : Activation::kRelu;
    Mlp net(widths, act, rng);
    const Tensor x = random_tensor({1, widths.front()}, rng);
    const Tensor w = random_tensor({widths.back()}, rng);
    ScalarFn fn = [&](ad::Tape& t, ad::Var v) {
      auto p = bind_parameters(t, net.params(), false);
      return t.sum(t.mul(t.log_softmax(net.forward(t, p, v)), t.constant(w.reshaped({1, widths.back()}))));
    };
    const auto rep = finite_diff_check(fn, x, 1e-4);
    passed += rep.passed;
    worst = std::max(worst, rep.max_rel_error);
  }
  const double secs = clock.seconds();
  return {passed == nets && secs < 10.0, std::to_string(passed) + "/" + std::to_string(nets) +
                                               " nets within 1e-4 (worst " + fmt("%.2e", worst) + "), " +
                                               fmt("%.2f", secs) + " s < 10 s"};
}

// 2
Outcome ddim_algebra() {
  // (a) one-step denoise with eps_hat = e, c = 1, e = 1, abar 0.72 -> 0.9
  const double ab_hi = 0.72, ab_lo = 0.9;
  const Tensor z({1}, std::sqrt(ab_hi) * 1.0 + std::sqrt(1.0 - ab_hi) * 1.0);
  const double got_a = ddim_transfer(z, Tensor({1}, 1.0), ab_hi, ab_lo)[0];
  const double want_a = std::sqrt(ab_lo) * 1.0 + std::sqrt(1.0 - ab_lo) * 1.0;
  const bool a_ok = std::abs(got_a - want_a) <= 1e-12;

  // (b) invert then reverse through every level under a t-only oracle
  const auto s = build_schedule(200, 1e-4, 0.02, 50);
  Rng rng(102);
  double worst_b = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor x = random_tensor({16, 16}, rng);
    for (std::size_t k = 1; k <= s.num_steps(); ++k) {
      const Tensor up = ddim_invert_step(s, TimeOnlyNoise{}, x, k, 0);
      const Tensor back = ddim_reverse_step(s, TimeOnlyNoise{}, up, k, 0);
      for (std::size_t i = 0; i < x.size(); ++i) worst_b = std::max(worst_b, std::abs(back[i] - x[i]));
    }
  }
  const bool b_ok = worst_b <= 1e-12;

  // (c) eps_hat = 0: the full chain scales by sqrt(1 / abar_top)
  const Tensor zT = random_tensor({16, 16}, rng);
  const Tensor x0 = reverse_from(s, ZeroNoise{}, zT, s.num_steps(), 0);
  double worst_c = 0.0;
  const long double scale = std::sqrt(1.0L / static_cast<long double>(s.alpha_bar_at_level(s.num_steps())));
  for (std::size_t i = 0; i < zT.size(); ++i)
    worst_c = std::max(worst_c, std::abs(x0[i] - static_cast<double>(scale * zT[i])) / std::max(1.0, std::abs(x0[i])));
  const bool c_ok = worst_c <= 1e-12;
  return {a_ok && b_ok && c_ok, "(a) err " + fmt("%.1e", std::abs(got_a - want_a)) + ", (b) max err " +
                                    fmt("%.1e", worst_b) + ", (c) rel err " + fmt("%.1e", worst_c) + "; bound 1e-12"};
}

// 3
Outcome momentum() {
  GuidanceState st;
  const double g[] = {4.0, 2.0, -1.0}, want[] = {4.0, 3.0, 1.0};
  bool fold = true;
  for (int k = 0; k < 3; ++k) {
    momentum_update(st, Tensor::scalar(g[k]), k == 0, 0.5);
    fold = fold && st.v[0] == want[k];
  }
  Rng rng(103);
  GuidanceState zero, one;
  bool degenerate = true;
  Tensor first;
  for (int k = 0; k < 10; ++k) {
    const Tensor gk = random_tensor({8}, rng);
    if (k == 0) first = gk;
    momentum_update(zero, gk, k == 0, 0.0);
    momentum_update(one, gk, k == 0, 1.0);
    degenerate = degenerate && zero.v == gk && one.v == first;
  }
  return {fold && degenerate, std::string("fold 4,2,-1 -> 4,3,1 ") + (fold ? "exact" : "MISMATCH") +
                                  "; beta=0 tracks g, beta=1 frozen: " + (degenerate ? "yes" : "no")};
}

// 4
Outcome switch_machine() {
  Clock clock;
  std::size_t cases = 0, bad = 0, applied_total = 0;
  for (bool apply_on_deact : {true, false})
    for (std::size_t L = 1; L <= 6; ++L)
      for (unsigned mask = 0; mask < (1u << L); ++mask)
        for (std::size_t t_start = 1; t_start <= L; ++t_start)
          for (std::size_t pass = 1; pass <= 4; ++pass)
            for (bool start_on : {true, false}) {
              std::vector<bool> verdicts(L);
              for (std::size_t i = 0; i < L; ++i) verdicts[i] = (mask >> i) & 1u;
              bool on = start_on;
              const auto want = reference_pass(verdicts, t_start, pass, on, apply_on_deact);
              const SwitchPolicy policy{true, apply_on_deact};
              SwitchState sw = start_on ? SwitchState::kOn : SwitchState::kOff;
              bool ok = true;
              for (std::size_t i = 0; i < L; ++i) {
                const std::size_t step = L - i;
                std::optional<bool> hit;
                if (needs_verdict(sw, step, t_start, pass, policy)) hit = verdicts[i];
                const auto d = switch_step(sw, hit, step, t_start, pass, policy);
                ok = ok && d.apply == want[i].applied;
                ok = ok && (pass <= 2 ? (d.next == SwitchState::kOn) == want[i].on_after : d.effective == SwitchState::kOn);
                applied_total += d.apply;
                sw = d.next;
              }
              bad += !ok;
              ++cases;
            }
  const double secs = clock.seconds();
  return {bad == 0 && secs < 1.0, std::to_string(cases - bad) + "/" + std::to_string(cases) +
                                      " traces match the pseudocode (" + std::to_string(applied_total) +
                                      " updates), " + fmt("%.3f", secs) + " s < 1 s"};
}

// 5
Outcome zero_scale(const Context& c) {
  std::size_t equal = 0;
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    AttackConfig cfg;
    cfg.seed = seed;
    cfg.cls = static_cast<int>(seed % 6);
    cfg.scale = 0.0;
    const auto rec = run_attack(cfg, c.diff.schedule, c.diff.predictor, c.a);
    Rng rng(seed);
    const Tensor clean = sample(c.diff.schedule, c.diff.predictor, cfg.cls, cfg.cfg_scale, Tensor::normal({16, 16}, rng));
    equal += rec.x_star == clean;
  }
  return {equal == 8, std::to_string(equal) + "/8 zero-scale attacks bit-equal clean sampling on the reference model"};
}

BatchResult timed_batch(const Context& c, BatchSpec spec, double& secs) {
  spec.jobs = c.jobs;
  Clock clock;
  BatchResult r = run_batch(spec, c.diff.schedule, c.diff.predictor, c.a);
  secs = clock.seconds();
  return r;
}

// 6
Outcome nae_efficacy(Context& c) {
  BatchSpec spec;
  spec.base.seed = 2024;
  spec.count = 200;
  double secs = 0.0;
  c.nae = timed_batch(c, spec, secs);
  const double asr = c.nae->summary.asr.value_or(0.0);
  std::size_t max_pass = 0;
  for (const auto& r : c.nae->records) max_pass = std::max(max_pass, r.passes_used);
  return {asr >= 0.90 && max_pass <= 5 && secs < 600.0,
          "ASR " + fmt("%.3f", asr) + " >= 0.90, max passes " + std::to_string(max_pass) + " <= 5, wall " +
              fmt("%.1f", secs) + " s < 600 s on " + std::to_string(c.jobs) + " worker(s)"};
}

// 7
Outcome uae_untargeted(const Context& c) {
  BatchSpec spec;
  spec.base.mode = Mode::kUae;
  spec.base.direction = Direction::kUntargeted;
  spec.base.seed = 2025;
  spec.count = 200;
  spec.references = &c.test;
  double secs = 0.0;
  const auto r = timed_batch(c, spec, secs);
  const double asr = r.summary.asr.value_or(0.0);
  // context only: the same run with unit-norm gradients
  spec.base.normalize_gradient = true;
  double secs_norm = 0.0;
  const double asr_norm = timed_batch(c, spec, secs_norm).summary.asr.value_or(0.0);
  return {asr >= 0.90, "untargeted UAE ASR " + fmt("%.3f", asr) + " >= 0.90 (" + fmt("%.1f", secs) +
                           " s); with --normalize true it would be " + fmt("%.3f", asr_norm)};
}

// Frechet distance against the guidance-free samples of the same seeds
std::optional<double> batch_frechet(const Context& c, const BatchResult& r, const Tensor& clean_features) {
  std::vector<const Tensor*> imgs;
  for (const auto& rec : r.records)
    if (!rec.x_star.empty()) imgs.push_back(&rec.x_star);
  if (imgs.size() <= c.a.feature_dim()) return std::nullopt;
  Tensor batch({imgs.size(), kImagePixels});
  for (std::size_t i = 0; i < imgs.size(); ++i) std::copy_n(imgs[i]->data(), kImagePixels, batch.data() + i * kImagePixels);
  return frechet_distance(c.a.features(batch), clean_features);
}

// 8
Outcome ablation(const Context& c) {
  BatchSpec spec;
  spec.base.seed = 2024;
  spec.count = 200;
  const Tensor clean_features = c.a.features(clean_batch(c.nae->records));
  std::map<std::string, std::pair<double, std::optional<double>>> cells;
  for (const auto& cell : ablation_grid()) {
    double secs = 0.0;
    const bool is_reference = cell.momentum && cell.adaptive;
    const BatchResult r = is_reference ? *c.nae : timed_batch(c, ablation_spec(spec, cell), secs);
    cells[ablation_cell_name(cell)] = {r.summary.asr.value_or(0.0), batch_frechet(c, r, clean_features)};
  }
  const auto& on = cells["mo+as"];
  const auto& off = cells["mo"];
  const bool fd_ok = on.second && off.second && *on.second <= *off.second;
  const bool asr_ok = std::abs(on.first - off.first) <= 0.02;
  std::string detail;
  for (const auto& [name, v] : cells)
    detail += name + ": ASR " + fmt("%.3f", v.first) + " FD " + (v.second ? fmt("%.3f", *v.second) : "NA") + "; ";
  return {fd_ok && asr_ok, detail + "need FD(mo+as) <= FD(mo) and |dASR| <= 0.02"};
}

// 9
Outcome uae_ssim(const Context& c) {
  BatchSpec spec;
  spec.base.mode = Mode::kUae;
  spec.base.seed = 2026;
  spec.count = 200;
  spec.references = &c.test;
  double secs = 0.0;
  const auto r = timed_batch(c, spec, secs);
  std::vector<double> values;
  for (const auto& rec : r.records)
    if (!rec.x_star.empty()) values.push_back(ssim(rec.x_star, rec.reference));
  const double med = values.empty() ? 0.0 : median(values);
  return {med >= 0.7, "targeted UAE median SSIM " + fmt("%.3f", med) + " >= 0.7 (ASR " +
                          fmt("%.3f", r.summary.asr.value_or(0.0)) + ")"};
}

// 10
Outcome defenses(const Context& c) {
  SuiteModels m;
  m.white = &c.a;
  m.transfer = &c.b;
  m.adv_trained = &c.adv;
  m.purifier = &c.diff;
  m.seed = 2024;
  const auto rep = evaluate_suite(c.nae->records, Tensor{}, m);
  const bool purify_ok = *rep.asr_purify <= 0.6 * rep.asr_white;
  const bool adv_ok = *rep.asr_advtrain < rep.asr_white;
  return {purify_ok && adv_ok, "white " + fmt("%.3f", rep.asr_white) + ", purified " + fmt("%.3f", *rep.asr_purify) +
                                   " <= 0.6x, adv-trained " + fmt("%.3f", *rep.asr_advtrain) +
                                   " < white; transfer " + fmt("%.3f", *rep.asr_transfer)};
}

struct OneHot {
  Tensor log_probs(const Tensor& x) const {
    Tensor out({6}, -std::numeric_limits<double>::infinity());
    out[static_cast<std::size_t>(std::lround(x[0]))] = 0.0;
    return out;
  }
};

// 11
Outcome metric_self_tests() {
  Rng rng(111);
  auto gauss = [&](std::size_t n, std::size_t d, double shift) {
    Tensor x({n, d});
    for (std::size_t i = 0; i < n; ++i) {
      const double u = rng.normal(), v = rng.normal(), w = rng.normal();
      const double vals[3] = {u + shift, 0.6 * u + 0.8 * v, 0.3 * v - 1.5 * w - shift};
      for (std::size_t j = 0; j < d; ++j) x.at(i, j) = vals[j];
    }
    return x;
  };
  const Tensor same = gauss(400, 3, 0.0);
  const double identity = frechet_distance(same, same);
  Tensor a({100000, 1}), b({100000, 1});
  for (std::size_t i = 0; i < 100000; ++i) {
    a[i] = rng.normal();
    b[i] = 1.0 + rng.normal();
  }
  // means 0 and 1, equal sigma
  const double closed = std::abs(frechet_distance(a, b) - 1.0);
  double oracle = 0.0;
  for (int t = 0; t < 5; ++t) {
    const Tensor p = gauss(200, 3, 0.0), q = gauss(150, 3, 0.3 * t);
    oracle = std::max(oracle, std::abs(frechet_distance(p, q) - static_cast<double>(oracle_frechet(p, q))));
  }
  const Tensor img = clipped(random_tensor({16, 16}, rng, 0.5));
  const double ssim_id = ssim(img, img);
  const double c1 = 0.02 * 0.02;
  const double ssim_const =
      std::abs(ssim(Tensor({16, 16}, 0.2), Tensor({16, 16}, 0.6)) - (2 * 0.2 * 0.6 + c1) / (0.04 + 0.36 + c1));
  FixedClassifier uniform{std::vector<double>(6, 1.0 / 6.0)};
  const double is_low = inception_score_toy(std::vector<Tensor>(12, Tensor({16, 16})), uniform);
  std::vector<Tensor> onehot;
  for (int k = 0; k < 6; ++k) onehot.push_back(Tensor({16, 16}, k));
  const double is_high = inception_score_toy(onehot, OneHot{});
  const bool ok = identity <= 1e-6 && closed <= 0.1 && oracle <= 1e-8 && ssim_id == 1.0 && ssim_const <= 1e-9 &&
                  std::abs(is_low - 1.0) <= 1e-12 && std::abs(is_high - 6.0) <= 1e-12;
  return {ok, "FD identity " + fmt("%.1e", identity) + ", 1-D err " + fmt("%.3f", closed) + ", oracle err " +
                  fmt("%.1e", oracle) + ", SSIM identity " + fmt("%.17g", ssim_id) + ", constant err " +
                  fmt("%.1e", ssim_const) + ", IS " + fmt("%.12g", is_low) + " / " + fmt("%.12g", is_high)};
}

std::vector<std::uint8_t> bytes_of(const fs::path& p) { return binio::read_file(p.string()); }

bool same_outputs(const fs::path& x, const fs::path& y, std::string& why) {
  for (const auto& e : fs::directory_iterator(x)) {
    const auto name = e.path().filename();
    if (!fs::exists(y / name)) {
      why = "missing " + name.string();
      return false;
    }
    if (name == "resolved.cfg") {
      auto cx = load_config(e.path().string()), cy = load_config((y / name).string());
      cx.erase("out");
      cy.erase("out");
      if (cx != cy) {
        why = "resolved.cfg differs";
        return false;
      }
    } else if (bytes_of(e.path()) != bytes_of(y / name)) {
      why = name.string() + " differs";
      return false;
    }
  }
  return true;
}

int sh(const std::string& cmd) {
  const int rc = std::system((cmd + " > /dev/null 2>&1").c_str());
  return rc == -1 ? -1 : WEXITSTATUS(rc);
}

// 12
Outcome determinism(const Context& c) {
  const fs::path w = fs::path(c.work) / "replay";
  fs::remove_all(w);
  fs::create_directories(w);
  const std::string cli = "\"" + c.cli + "\"";
  const std::string diff = (fs::path(c.ref) / "diffusion/diffusion.vnmc").string();
  const std::string va = (fs::path(c.ref) / "victim_a/victim.vnmc").string();
  const std::string vb = (fs::path(c.ref) / "victim_b/victim.vnmc").string();
  const std::string data = (fs::path(c.ref) / "data").string();
  const std::vector<std::pair<std::string, std::string>> runs = {
      {"gen", "gen-data --seed 3 --per-class 20"},
      {"tdiff", "train-diffusion --data " + (w / "gen1").string() + " --steps 200 --hidden 32 --seed 3"},
      {"tvic", "train-victim --data " + (w / "gen1").string() + " --epochs 2 --seed 3"},
      {"atk", "attack --diff " + diff + " --victim " + va + " --count 6 --jobs 2 --seed 5"},
      {"uae", "attack --mode uae --ref " + data + " --diff " + diff + " --victim " + va + " --count 4 --seed 6"},
      {"eval", "eval --run " + (w / "atk1").string() + " --transfer " + vb + " --clean-ref " + data},
      {"abl", "ablate --diff " + diff + " --victim " + va + " --count 3 --seed 7"},
      {"render", "render --run " + (w / "atk1").string() + " --grid 2x3"},
  };
  std::size_t ok = 0;
  std::string failures;
  for (const auto& [name, args] : runs) {
    const fs::path first = w / (name + "1"), again = w / (name + "2"), replay = w / (name + "3");
    const int r1 = sh(cli + " " + args + " --out " + first.string());
    const int r2 = sh(cli + " " + args + " --out " + again.string());
    const int r3 = sh(cli + " --config " + (first / "resolved.cfg").string() + " --out " + replay.string());
    std::string why;
    if (r1 != 0 || r2 != 0 || r3 != 0)
      why = "exit codes " + std::to_string(r1) + "/" + std::to_string(r2) + "/" + std::to_string(r3);
    else if (same_outputs(first, again, why) && same_outputs(first, replay, why))
      ++ok;
    if (!why.empty()) failures += " " + name + ": " + why + ";";
  }

  // container round-trips on the reference artifacts
  const auto test_bytes = bytes_of(fs::path(c.ref) / "data/test.vnmd");
  const bool vnmd = encode_dataset(decode_dataset(test_bytes)) == test_bytes;
  const auto diff_bytes = bytes_of(diff);
  const bool vnmc = encode_checkpoint(decode_checkpoint(diff_bytes)) == diff_bytes;

  // PGM layout: 8x8 tiles of 16 px with 1 px separators
  const fs::path grid = w / "grid";
  const int rg = sh(cli + " render --dataset " + data + " --grid 8x8 --out " + grid.string());
  bool pgm = false;
  if (rg == 0) {
    const auto g = bytes_of(grid / "grid.pgm");
    const std::string header = "P5\n135 135\n255\n";
    pgm = g.size() == header.size() + 135 * 135 && std::equal(header.begin(), header.end(), g.begin()) &&
          g[header.size() + 16] == 128;
  }
  const bool pass = ok == runs.size() && vnmd && vnmc && pgm;
  return {pass, std::to_string(ok) + "/" + std::to_string(runs.size()) +
                    " commands byte-reproducible (twice and from resolved.cfg); VNMD " + (vnmd ? "ok" : "FAIL") +
                    ", VNMC " + (vnmc ? "ok" : "FAIL") + ", PGM 8x8 = 135x135 " + (pgm ? "ok" : "FAIL") + failures};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  Context c;
  app.add_option("--ref", c.ref, "reference artifact directory")->required();
  app.add_option("--cli", c.cli, "venom_cli binary")->required();
  app.add_option("--work", c.work, "scratch directory")->required();
  app.add_option("--jobs", c.jobs, "worker threads for attack batches");
  CLI11_PARSE(app, argc, argv);
  if (c.jobs == 0) c.jobs = 1;
  if (!app.count("--jobs")) c.jobs = std::max(1u, std::min(4u, std::thread::hardware_concurrency()));

  try {
    c.test = load_dataset((fs::path(c.ref) / "data/test.vnmd").string());
    c.diff = load_diffusion((fs::path(c.ref) / "diffusion/diffusion.vnmc").string());
    c.a = load_victim((fs::path(c.ref) / "victim_a/victim.vnmc").string());
    c.b = load_victim((fs::path(c.ref) / "victim_b/victim.vnmc").string());
    c.adv = load_victim((fs::path(c.ref) / "victim_adv/victim.vnmc").string());
  } catch (const std::exception& e) {
    std::cerr << "cannot load reference artifacts: " << e.what() << "\n";
    return 2;
  }
  fs::create_directories(c.work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"autodiff finite differences", [] { return autodiff_fd(); }},
      {"DDIM algebra", [] { return ddim_algebra(); }},
      {"momentum recurrence", [] { return momentum(); }},
      {"switch state machine", [] { return switch_machine(); }},
      {"zero-scale identity", [&] { return zero_scale(c); }},
      {"white-box NAE efficacy", [&] { return nae_efficacy(c); }},
      {"untargeted UAE efficacy", [&] { return uae_untargeted(c); }},
      {"ablation direction", [&] { return ablation(c); }},
      {"UAE imperceptibility", [&] { return uae_ssim(c); }},
      {"defense direction", [&] { return defenses(c); }},
      {"metric self-tests", [] { return metric_self_tests(); }},
      {"determinism and formats", [&] { return determinism(c); }},
  };

  std::size_t passed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Clock clock;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    passed += o.pass;
    std::printf("criterion %2zu %s  %-28s %s [%.1f s]\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                o.detail.c_str(), clock.seconds());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", passed, criteria.size());
  return passed == criteria.size() ? 0 : 1;
}
