// Acceptance run: one PASS/FAIL line per criterion.
//
//   latentlab_acceptance [workspace] [--properties-only]
//
// Criteria 9-14 build (or reuse) a default-config workspace and run the
// experiment matrix on it.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "latentlab/latentlab.hpp"

using namespace latentlab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, double limit_s, const std::function<Outcome()>& f) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = f();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (limit_s > 0 && secs >= limit_s) {
    o.pass = false;
    o.detail += " (over the " + std::to_string(static_cast<int>(limit_s)) + " s budget)";
  }
  if (!o.pass) ++failures;
  std::printf("[%s] %2d %s: %s [%.2f s]\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

ModelConfig small_model(int layers = 4) {
  ModelConfig c;
  c.d_model = 16;
  c.n_layers = layers;
  c.n_heads = 2;
  c.seed = 11;
  return c;
}

Tensor<double> random_tensor(Shape s, Rng& rng) {
  Tensor<double> t(std::move(s));
  for (auto& v : t.vec()) v = rng.uniform(-1.0, 1.0);
  return t;
}

// ---- property criteria -----------------------------------------------------------

Outcome extraction_oracle() {
  PolicyModel<double> m(small_model(), Vocabulary());
  TaskSuite s = generate_suite(SuiteTag::Spatial, 7, 3);
  const TaskSpec& t = s.tasks[0];
  s.tasks = {t};
  auto eps = collect_demos(s, 3, 5).episodes;
  eps[1].steps.resize(eps[1].steps.size() - 1);
  eps[2].steps.resize(2);
  const auto prompt = m.vocab().tokenize(t.prompt);
  Tensor<double> sum;
  std::size_t count = 0;
  for (const auto& ep : eps)
    for (const auto& st : ep.steps) {
      ForwardTrace<double> tr;
      m.forward({observe(st.state, m.config()), prompt, std::nullopt}, nullptr, &tr);
      if (sum.empty()) sum = Tensor<double>(tr.text_hidden.shape());
      for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += tr.text_hidden[i];
      ++count;
    }
  for (auto& v : sum.vec()) v /= static_cast<double>(count);
  const auto lat = extract_latent(m, t, eps);
  std::set<std::size_t> lengths;
  for (const auto& e : eps) lengths.insert(e.steps.size());
  return {lat.tensor == sum && lengths.size() == 3,
          "demo lengths " + std::to_string(eps[0].steps.size()) + "/" + std::to_string(eps[1].steps.size()) + "/" +
              std::to_string(eps[2].steps.size()) + ", bitwise equal: " + (lat.tensor == sum ? "yes" : "no")};
}

Outcome tli_algebra() {
  Rng rng(21);
  int bad = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Shape s{3, 1 + static_cast<std::size_t>(rng.below(6)), 8};
    auto h = random_tensor(s, rng), t1 = random_tensor(s, rng), t2 = random_tensor(s, rng);
    if (tli_edit(h, t1, t2, 0.5) != h) ++bad;
    if (tli_edit(h, t1, t1, rng.uniform(0.0, 1.0)) != h) ++bad;
    auto e0 = tli_edit(h, t1, t2, 0.0), e1 = tli_edit(h, t1, t2, 1.0);
    for (std::size_t i = 0; i < h.size(); ++i) {
      if (e0[i] != h[i] + (t1[i] - t2[i])) ++bad;
      if (e1[i] != h[i] - (t1[i] - t2[i])) ++bad;
    }
    const double a = rng.uniform(0.0, 1.0);
    auto fwd = tli_edit(h, t1, t2, a), swp = tli_edit(h, t2, t1, a);
    for (std::size_t i = 0; i < h.size(); ++i)
      if (std::abs((fwd[i] - h[i]) + (swp[i] - h[i])) > 1e-14) ++bad;
  }
  return {bad == 0, "100 random tensors, " + std::to_string(bad) + " violations"};
}

Outcome alpha_clipping() {
  int bad = 0;
  for (int lambda : {1, 14, 20})
    for (int i = 0; i <= 3 * lambda; ++i)
      if (alpha(i, lambda) != std::min(static_cast<double>(i) / lambda, 1.0)) ++bad;
  return {bad == 0, "lambda 1/14/20, " + std::to_string(bad) + " mismatches"};
}

Outcome token_fitting() {
  Rng rng(5);
  int bad = 0;
  auto x = random_tensor({3, 6, 4}, rng);
  auto cut = fit_token_axis(x, 4), pad = fit_token_axis(x, 9);
  for (std::size_t l = 0; l < 3; ++l)
    for (std::size_t j = 0; j < 4; ++j) {
      for (std::size_t i = 0; i < 4; ++i) bad += cut.at3(l, i, j) != x.at3(l, i, j);
      for (std::size_t i = 0; i < 6; ++i) bad += pad.at3(l, i, j) != x.at3(l, i, j);
      for (std::size_t i = 6; i < 9; ++i) bad += pad.at3(l, i, j) != 0.0;
    }
  bad += fit_token_axis(pad, 6) != x;
  bad += fit_token_axis(fit_token_axis(x, 4), 9) != fit_token_axis(cut, 9);

  PolicyModel<double> m(small_model(), Vocabulary());
  const auto s = generate_suite(SuiteTag::Goal, 7, 2);
  const auto& t = s.tasks[0];
  TaskSuite one = s;
  one.tasks = {t};
  auto lat = extract_latent(m, t, collect_demos(one, 1, 3).episodes);
  const auto longer = m.vocab().tokenize(t.prompt + " on the plate");
  const auto padded = fit_token_length(lat, longer.size());
  PolicyInput<double> in{observe(t.initial_layout, m.config()), longer, std::nullopt};
  HookSet<double> pad_only(3);
  for (int l = 1; l <= 3; ++l) {
    Tensor<double> e({longer.size(), 16});
    for (std::size_t i = lat.length(); i < longer.size(); ++i)
      for (std::size_t j = 0; j < 16; ++j) e(i, j) = padded.tensor.at3(static_cast<std::size_t>(l - 1), i, j);
    pad_only.add(l, e);
  }
  bad += m.forward(in, &pad_only) != m.forward(in);
  return {bad == 0, "truncate/pad round trips and padded-slice no-op, " + std::to_string(bad) + " violations"};
}

Outcome unembed_round_trip() {
  PolicyModel<float> m(ModelConfig{}, Vocabulary());
  const auto& E = m.embedding_table();
  const std::size_t V = E.dim(0), d = E.dim(1);
  int bad = 0;
  for (std::size_t id = 0; id < V; ++id) {
    Tensor<float> row({1, d}), scaled({1, d});
    for (std::size_t j = 0; j < d; ++j) {
      row(0, j) = E(id, j);
      scaled(0, j) = 2.5f * E(id, j);
    }
    const auto a = unembed(row, E), b = unembed(scaled, E);
    bad += a.ids != std::vector<int>{static_cast<int>(id)};
    bad += b.ids != a.ids;
  }
  return {bad == 0, std::to_string(V) + " tokens, " + std::to_string(bad) + " mismatches"};
}

Outcome gradient_check() {
  ModelConfig cfg = small_model(3);
  cfg.d_model = 8;
  PolicyModel<double> m(cfg, Vocabulary());
  const auto s = generate_suite(SuiteTag::Object, 7, 2);
  std::vector<PolicyInput<double>> inputs;
  for (const auto& t : s.tasks) inputs.push_back({observe(t.initial_layout, cfg), m.vocab().tokenize(t.prompt), std::nullopt});
  std::vector<const PolicyInput<double>*> batch{&inputs[0], &inputs[1]};
  const std::vector<Action> targets{Action::Left, Action::Pick};
  auto loss_value = [&] {
    Graph<double> g(false);
    return g.value(m.loss(g, batch, targets))[0];
  };
  m.parameters().zero_grad();
  {
    Graph<double> g;
    g.backward(m.loss(g, batch, targets));
  }
  const double h = 1e-5;
  double worst = 0;
  std::string worst_name;
  for (auto& p : m.parameters()) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double keep = p.value[i];
      p.value[i] = keep + h;
      const double up = loss_value();
      p.value[i] = keep - h;
      const double down = loss_value();
      p.value[i] = keep;
      const double numeric = (up - down) / (2 * h);
      const double analytic = p.grad[i];
      const double rel = std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      if (rel > worst) {
        worst = rel;
        worst_name = p.name;
      }
    }
  }
  return {worst <= 1e-4, std::to_string(m.parameters().size()) + " parameter blocks, max relative error " +
                              fmt("%.2e", worst) + " (" + worst_name + ")"};
}

RunConfig tiny_run() {
  RunConfig c;
  c.model.d_model = 16;
  c.model.n_layers = 3;
  c.model.n_heads = 2;
  c.train.steps = 40;
  c.train.batch_size = 16;
  c.train.warmup_steps = 5;
  c.train.demos_per_task = 2;
  c.train.log_every = 10;
  c.eval_runs = 1;
  c.train_eval_runs = 1;
  return c;
}

void run_tiny(const fs::path& root) {
  Pipeline p(Workspace{root}, tiny_run(), [](const std::string&) {});
  p.init(true);
  p.build_suites(true);
  p.build_demos(true);
  p.build_model(true);
  p.build_latents(true);
  auto res = run_experiments(p, [](const std::string&) {});
  emit_report(res.bundle, p.workspace().reports(), p.stamp());
  auto ctx = p.context();
  ctx.keep_traces = true;
  auto r = run_job(ctx, {&p.suite("ood"), Method::TLI, 0, 1, p.eval_seed()});
  std::string traces;
  for (std::size_t i = 0; i < r.traces.size(); ++i) traces += episode_trace_jsonl(r.traces[i], 0);
  write_text_file(root / "traces.jsonl", traces);
}

Outcome determinism(const fs::path& scratch) {
  const fs::path a = scratch / "det_a", b = scratch / "det_b";
  fs::remove_all(a);
  fs::remove_all(b);
  run_tiny(a);
  run_tiny(b);
  int files = 0;
  std::vector<std::string> differ;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a);
    ++files;
    if (!fs::exists(b / rel) || read_text_file(e.path()) != read_text_file(b / rel)) differ.push_back(rel.string());
  }
  std::string detail = std::to_string(files) + " files compared (suites, demos, checkpoint, latents, reports, traces)";
  for (const auto& d : differ) detail += "; differs: " + d;
  fs::remove_all(a);
  fs::remove_all(b);
  return {differ.empty() && files > 0, detail};
}

Outcome ood_validity(const RunConfig& cfg) {
  Pipeline p(Workspace{fs::temp_directory_path() / "latentlab-acceptance-unused"}, cfg, [](const std::string&) {});
  std::vector<TaskSuite> bases;
  for (const auto& n : base_suite_names()) bases.push_back(p.make_base_suite(n));
  const auto ood = generate_ood_suite(bases, derive_seed(cfg.seed, "ood"), cfg.ood_tasks, {cfg.swap_fraction});
  std::map<std::string, std::set<std::pair<int, int>>> grasps, places;
  std::map<std::string, std::set<std::vector<int>>> pairs;
  for (const auto& s : bases)
    for (const auto& t : s.tasks) {
      const Cell g = t.grasp_location(), q = t.place_location();
      grasps[t.family].insert({g.x, g.y});
      places[t.family].insert({q.x, q.y});
      pairs[t.family].insert({g.x, g.y, q.x, q.y});
    }
  int bad = 0;
  for (const auto& t : ood.tasks) {
    const Cell g = t.grasp_location(), q = t.place_location();
    bad += !grasps[t.family].count({g.x, g.y});
    bad += !places[t.family].count({q.x, q.y});
    bad += pairs[t.family].count({g.x, g.y, q.x, q.y}) > 0;
    bad += !oracle_episode(t, t.initial_layout, 60).success;
  }
  return {bad == 0 && !ood.tasks.empty(),
          std::to_string(ood.tasks.size()) + " tasks scanned, " + std::to_string(bad) + " violations"};
}

// ---- end-to-end criteria -----------------------------------------------------------

struct Pooled {
  int successes = 0, episodes = 0;
  double rate() const { return episodes ? static_cast<double>(successes) / episodes : 0.0; }
};

Pooled pooled(const ExperimentResults& r, const std::string& method) {
  Pooled p;
  for (const auto& s : base_suite_names()) {
    const auto& rep = r.get(s, method);
    p.successes += rep.successes;
    p.episodes += rep.episodes;
  }
  return p;
}

}  // namespace

int main(int argc, char** argv) {
  fs::path ws = "acceptance-ws";
  bool properties_only = false;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--properties-only") properties_only = true;
    else ws = a;
  }
  const RunConfig cfg;

  report(1, "latent extraction equals naive average", 1, extraction_oracle);
  report(2, "TLI algebra", 1, tli_algebra);
  report(3, "alpha clipping", 1, alpha_clipping);
  report(4, "token-length fitting", 1, token_fitting);
  report(5, "unembed round trip and scale invariance", 5, unembed_round_trip);
  report(6, "gradient check of every parameter block", 60, gradient_check);
  report(7, "determinism across two runs", 0, [&] { return determinism(fs::temp_directory_path() / ("latentlab-acceptance-" + std::to_string(::getpid()))); });
  report(8, "OOD suite validity", 0, [&] { return ood_validity(cfg); });
  if (properties_only) return failures ? 1 : 0;

  std::printf("building or reusing workspace %s\n", ws.string().c_str());
  std::fflush(stdout);
  Pipeline p(Workspace{ws}, cfg, log_stderr);
  p.init(false);
  p.build_suites(false);
  p.build_demos(false);
  p.build_model(false);
  p.build_latents(false);
  const ExperimentResults res = run_experiments(p);
  emit_report(res.bundle, p.workspace().reports(), p.stamp());

  report(9, "base training success", 0, [&] {
    Outcome o{true, ""};
    for (const auto& s : base_suite_names()) {
      const double r = res.get(s, "original").rate();
      o.pass = o.pass && r >= 0.90;
      o.detail += s + " " + fmt("%.2f", r) + " ";
    }
    o.detail += "(need >= 0.90)";
    return o;
  });
  report(10, "reconstruction ordering", 0, [&] {
    const auto blank = pooled(res, "blank_prompt"), mask = pooled(res, "mask_prompt"), plus = pooled(res, "blank_plus_latent");
    return Outcome{plus.episodes >= 100 && plus.rate() >= blank.rate() + 0.30 && mask.rate() <= 0.40 && blank.rate() <= 0.40,
                   fmt("blank+latent %.3f, blank %.3f, mask %.3f", plus.rate(), blank.rate(), mask.rate()) + " over " +
                       std::to_string(plus.episodes) + " episodes per mode"};
  });
  report(11, "extrapolation ordering", 0, [&] {
    const double tli = res.get("ood", "tli").rate(), van = res.get("ood", "vanilla").rate(),
                 sw = res.get("ood", "prompt_switch").rate(), blank = res.get("ood", "tli_blank").rate();
    return Outcome{tli >= van + 0.30 && tli >= sw - 0.05 && blank < tli,
                   fmt("tli %.3f, vanilla %.3f, prompt_switch %.3f, tli_blank %.3f", tli, van, sw, blank)};
  });
  report(12, "layer ablation", 0, [&] {
    const auto& ab = *res.bundle.ablation;
    double best = 0;
    int best_layer = 0;
    for (const auto& [l, r] : ab.per_layer)
      if (r.rate() > best) {
        best = r.rate();
        best_layer = l;
      }
    const double all = ab.all_layers.rate();
    const bool complete = static_cast<int>(ab.per_layer.size()) == cfg.model.hook_layers();
    const bool shape = best >= 0.5 * all;
    const bool reference = all == res.get("ood", "tli").rate();
    return Outcome{complete && (shape || reference),
                   std::to_string(ab.per_layer.size()) + " layers, best layer " + std::to_string(best_layer) +
                       fmt(" %.3f vs all-layers %.3f", best, all) + (shape ? "" : " (reference fallback)")};
  });
  report(13, "spatial-overfitting diagnostic", 0, [&] {
    const auto& pos = res.get("object-displaced", "ood_position");
    const double trained = res.bundle.diagnostic->fraction(Approach::TrainedLocation);
    const double oracle = res.bundle.oracle_diagnostic->fraction(Approach::CurrentLocation);
    return Outcome{pos.rate() <= 0.10 && trained >= 0.60 && oracle == 1.0,
                   fmt("policy success %.3f, trained-location %.3f, oracle current-location %.3f", pos.rate(), trained,
                       oracle)};
  });
  report(14, "unembedded-prompt pipeline", 0, [&] {
    const auto unemb = pooled(res, "unembedded_prompt_l" + std::to_string(cfg.unembed_layer)), blank = pooled(res, "blank_prompt");
    return Outcome{unemb.rate() >= blank.rate(),
                   fmt("layer %.0f prompts %.3f vs blank %.3f", cfg.unembed_layer, unemb.rate(), blank.rate())};
  });
  std::printf("%s: %d criteria failed\n", failures ? "FAILED" : "PASSED", failures);
  return failures ? 1 : 0;
}
