// latentlab: command-line driver for the text-latent experiments.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "latentlab/latentlab.hpp"

namespace fs = std::filesystem;
using namespace latentlab;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kMissing = 2, kVerify = 3 };

struct Globals {
  std::string workspace = Workspace::default_root().string();
  std::string config_file;
  std::optional<std::uint64_t> seed;
  int workers = 0;
  bool force = false;
  bool quiet = false;
};

LogFn make_logger(const Globals& g) {
  if (g.quiet) return [](const std::string&) {};
  return log_stderr;
}

// Config precedence: defaults < run.json in the workspace < --config file < flags.
RunConfig resolve_config(const Globals& g) {
  const Workspace ws{g.workspace};
  Json j = Json::object();
  if (fs::exists(ws.config())) j = Json::parse(read_text_file(ws.config()));
  if (!g.config_file.empty()) {
    require_artifact(g.config_file, "a run config file");
    j = Json::parse(read_text_file(g.config_file));
  }
  if (g.seed) j["seed"] = *g.seed;
  if (g.workers > 0) j["workers"] = g.workers;
  return run_config_from_json(j);
}

Pipeline open_pipeline(const Globals& g, bool init_workspace = true) {
  Pipeline p(Workspace{g.workspace}, resolve_config(g), make_logger(g));
  if (init_workspace) p.init(g.force);
  return p;
}

void print_task_table(const TaskSuite& s) {
  std::printf("%-10s %-8s %-9s %-9s %s\n", "task_id", "family", "grasp", "place", "prompt");
  for (const auto& t : s.tasks) {
    char g[16], p[16];
    std::snprintf(g, sizeof g, "(%d,%d)", t.grasp_location().x, t.grasp_location().y);
    std::snprintf(p, sizeof p, "(%d,%d)", t.place_location().x, t.place_location().y);
    std::printf("%-10s %-8s %-9s %-9s %s\n", t.task_id.c_str(), t.family.c_str(), g, p, t.prompt.c_str());
  }
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

// "task_id<TAB>prompt" per line; '#' starts a comment.
std::map<std::string, std::string> read_prompt_file(const fs::path& path) {
  require_artifact(path, "latentlab unembed");
  std::map<std::string, std::string> out;
  std::istringstream in(read_text_file(path));
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw UsageError(path.string() + ": expected 'task_id<TAB>prompt' lines");
    out[line.substr(0, tab)] = line.substr(tab + 1);
  }
  return out;
}

std::string report_line(const EvalReport& r) {
  if (!r.ok()) return r.suite + "/" + r.method + ": error: " + r.error;
  return r.suite + "/" + r.method + ": " + std::to_string(r.successes) + "/" + std::to_string(r.episodes) + " = " +
         format_rate(r.rate());
}

int cmd_verify(const Globals& g) {
  Pipeline p = open_pipeline(g, false);
  const auto& ws = p.workspace();
  std::vector<std::string> drift;
  const std::string cfg_fp = config_fingerprint(p.config());
  auto check_provenance = [&](const Json& prov, const std::string& what) {
    if (!prov.contains("config_fingerprint")) drift.push_back(what + ": no recorded config");
    else if (prov.at("config_fingerprint").get<std::string>() != cfg_fp) drift.push_back(what + ": produced by a different config");
  };
  for (const auto& name : base_suite_names()) {
    require_artifact(ws.suite(name), "latentlab suite all");
    const Json j = Json::parse(read_text_file(ws.suite(name)));
    check_provenance(j.value("provenance", Json::object()), ws.suite(name).string());
    if (suite_fingerprint(p.suite(name)) != suite_fingerprint(p.make_base_suite(name)))
      drift.push_back(ws.suite(name).string() + ": content differs from regeneration");
  }
  if (fs::exists(ws.dataset())) {
    const Json j = Json::parse(read_text_file(ws.dataset()));
    check_provenance(j.value("provenance", Json::object()), ws.dataset().string());
    DemoDataset fresh;
    for (const auto* s : p.base_suites()) fresh.append(collect_demos(*s, p.config().train.demos_per_task, derive_seed(p.config().seed, "demos")));
    if (dataset_fingerprint(fresh) != dataset_fingerprint(p.dataset()))
      drift.push_back(ws.dataset().string() + ": content differs from regeneration");
  }
  if (fs::exists(ws.checkpoint())) {
    CheckpointInfo info;
    (void)load_checkpoint<float>(ws.checkpoint(), &info);
    check_provenance(info.training, ws.checkpoint().string());
    const std::string mfp = p.model_fp();
    for (const auto& [id, lat] : p.latents().all()) {
      check_provenance(lat->provenance, ws.latent(id).string());
      if (lat->model_fingerprint != mfp) drift.push_back(ws.latent(id).string() + ": extracted from another checkpoint");
    }
    if (fs::exists(ws.reports() / "results.csv")) {
      const std::string stamp = p.stamp().line();
      std::ifstream in(ws.reports() / "results.csv");
      std::string first;
      std::getline(in, first);
      if (first + "\n" != stamp) drift.push_back((ws.reports() / "results.csv").string() + ": stamp does not match artifacts");
    }
  }
  for (const auto& d : drift) std::fprintf(stderr, "[latentlab] drift: %s\n", d.c_str());
  if (!drift.empty()) throw VerificationError(std::to_string(drift.size()) + " artifact(s) failed verification");
  std::printf("verified workspace %s\n", ws.root.string().c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latentlab: text-latent extraction and steering on a pick-and-place gridworld"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("-w,--workspace", g.workspace, "workspace directory (env LATENTLAB_WORKSPACE)");
  app.add_option("-c,--config", g.config_file, "run config JSON (keys override workspace defaults)");
  app.add_option("--seed", g.seed, "global seed");
  app.add_option("-j,--workers", g.workers, "evaluation threads (default: all cores)");
  app.add_flag("-f,--force", g.force, "recompute outputs that already exist");
  app.add_flag("-q,--quiet", g.quiet, "no progress logging");

  int rc = kOk;

  // suite ---------------------------------------------------------------------
  auto* suite = app.add_subcommand("suite", "generate task suites");
  suite->require_subcommand(1);
  std::string archetype, out_path, from;
  int n_tasks = 10;
  double swap = 0.2;
  std::uint64_t suite_seed = 7;
  auto* gen = suite->add_subcommand("gen", "generate one base suite");
  gen->add_option("--archetype", archetype, "goal | object | spatial")->required();
  gen->add_option("--n", n_tasks, "number of tasks")->check(CLI::PositiveNumber);
  gen->add_option("--seed", suite_seed, "suite seed");
  gen->add_option("-o,--out", out_path, "output manifest (default: <workspace>/suites/<archetype>.json)");
  gen->callback([&] {
    SuiteTag tag;
    try {
      tag = parse_tag(archetype);
    } catch (const Error&) {
      throw UsageError("invalid archetype '" + archetype + "' (expected goal, object or spatial)");
    }
    if (tag == SuiteTag::Ood) throw UsageError("use 'suite gen-ood' for extrapolated suites");
    const fs::path out = out_path.empty() ? Workspace{g.workspace}.suite(archetype) : fs::path(out_path);
    if (fs::exists(out) && !g.force) {
      print_task_table(load_suite(out));
      return;
    }
    auto s = generate_suite(tag, suite_seed, n_tasks);
    save_suite(s, out, {{"seed", suite_seed}, {"n", n_tasks}});
    print_task_table(s);
  });
  auto* gen_ood = suite->add_subcommand("gen-ood", "generate an extrapolated suite from base suites");
  gen_ood->add_option("--from", from, "comma-separated base suite manifests")->required();
  gen_ood->add_option("--n", n_tasks, "number of tasks")->check(CLI::PositiveNumber);
  gen_ood->add_option("--seed", suite_seed, "suite seed");
  gen_ood->add_option("--swap-fraction", swap, "share of object-swap tasks")->check(CLI::Range(0.0, 1.0));
  gen_ood->add_option("-o,--out", out_path, "output manifest (default: <workspace>/suites/ood.json)");
  gen_ood->callback([&] {
    std::vector<TaskSuite> bases;
    for (const auto& f : split_list(from)) {
      require_artifact(f, "latentlab suite gen");
      bases.push_back(load_suite(f));
    }
    const fs::path out = out_path.empty() ? Workspace{g.workspace}.suite("ood") : fs::path(out_path);
    if (fs::exists(out) && !g.force) {
      print_task_table(load_suite(out));
      return;
    }
    auto s = generate_ood_suite(bases, suite_seed, n_tasks, {swap});
    save_suite(s, out, {{"seed", suite_seed}, {"n", n_tasks}, {"from", split_list(from)}, {"swap_fraction", swap}});
    print_task_table(s);
  });
  auto* all = suite->add_subcommand("all", "generate every suite of the run config into the workspace");
  all->callback([&] {
    auto p = open_pipeline(g);
    p.build_suites(g.force);
    for (const auto& n : {"goal", "object", "spatial", "ood"}) std::printf("%s: %zu tasks\n", n, p.suite(n).tasks.size());
  });

  // demos / train ---------------------------------------------------------------
  app.add_subcommand("demos", "collect oracle demonstrations for the base suites")->callback([&] {
    auto p = open_pipeline(g);
    p.build_demos(g.force);
    std::printf("%zu episodes, %zu samples\n", p.dataset().episodes.size(), p.dataset().sample_count());
  });
  std::optional<int> train_steps;
  auto* train_cmd = app.add_subcommand("train", "train the policy on the demonstrations");
  train_cmd->add_option("--steps", train_steps, "optimizer steps (overrides the config)");
  train_cmd->callback([&] {
    Globals gg = g;
    auto p = [&] {
      if (!train_steps) return open_pipeline(gg);
      RunConfig c = resolve_config(gg);
      c.train.steps = *train_steps;
      Pipeline q(Workspace{gg.workspace}, c, make_logger(gg));
      q.init(gg.force);
      return q;
    }();
    p.build_model(g.force);
    std::printf("checkpoint %s\n", p.workspace().checkpoint().string().c_str());
  });

  // extract ----------------------------------------------------------------------
  std::string task_id;
  std::optional<int> demos_k;
  auto* extract = app.add_subcommand("extract", "extract text latents from demonstrations");
  extract->add_option("--task", task_id, "one task id (default: every base task)");
  extract->add_option("--demos", demos_k, "number of demonstrations (default: all collected)")->check(CLI::PositiveNumber);
  extract->add_option("-o,--out", out_path, "output file (single task only)");
  extract->callback([&] {
    auto p = open_pipeline(g);
    if (task_id.empty()) {
      if (demos_k) throw UsageError("--demos needs --task");
      p.build_latents(g.force);
      std::printf("%zu latents\n", p.latents().size());
      return;
    }
    const TaskSpec* task = nullptr;
    const TaskSuite* home = nullptr;
    for (const auto* s : p.base_suites())
      for (const auto& t : s->tasks)
        if (t.task_id == task_id) task = &t, home = s;
    if (!task) throw UsageError("unknown base task '" + task_id + "'");
    std::vector<Episode> demos;
    if (demos_k) {
      TaskSuite one = *home;
      one.tasks = {*task};
      demos = collect_demos(one, *demos_k, derive_seed(p.config().seed, "demos")).episodes;
    } else {
      demos = p.dataset().episodes_of(task_id);
    }
    const fs::path out = out_path.empty() ? p.workspace().latent(task_id) : fs::path(out_path);
    if (fs::exists(out) && !g.force) {
      std::printf("%s exists\n", out.string().c_str());
      return;
    }
    TextLatent lat = extract_latent(p.model(), *task, demos);
    lat.provenance = p.provenance();
    save_latent(lat, out);
    std::printf("%s: K=%zu, %zu steps, %zux%zux%zu\n", out.string().c_str(), lat.demo_count, lat.total_timesteps, lat.layers(),
                lat.length(), lat.width());
  });

  // eval -------------------------------------------------------------------------
  std::string suite_name = "ood", method_str = "original", lambda_str = "auto", prompt_file;
  int layer = 1, runs = 0;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate one method on one suite");
  eval_cmd->add_option("--suite", suite_name, "goal | object | spatial | ood");
  eval_cmd->add_option("--method", method_str,
                       "original, mask_prompt, blank_prompt, blank_plus_latent, unembedded_prompt, vanilla, "
                       "prompt_switch, tli, tei_tli, tli_blank, layer_ablation");
  eval_cmd->add_option("--layer", layer, "layer for unembedded_prompt and layer_ablation");
  eval_cmd->add_option("--lambda", lambda_str, "interpolation steps: auto or a positive integer");
  eval_cmd->add_option("--runs", runs, "episodes per task (default: config)");
  eval_cmd->add_option("--prompt-file", prompt_file, "per-task prompts written by 'unembed'");
  eval_cmd->add_option("-o,--out", out_path, "CSV output (default: <workspace>/reports/eval_<suite>_<method>.csv)");
  eval_cmd->callback([&] {
    int fixed_lambda = 0;
    if (lambda_str != "auto") {
      try {
        fixed_lambda = std::stoi(lambda_str);
      } catch (const std::exception&) {
        throw UsageError("--lambda must be 'auto' or a positive integer");
      }
      if (fixed_lambda < 1) throw UsageError("--lambda must be 'auto' or a positive integer");
    }
    const Method method = prompt_file.empty() ? parse_method(method_str) : Method::ExplicitPrompt;
    auto p = open_pipeline(g);
    auto ctx = p.context();
    if (fixed_lambda > 0) {
      ctx.lambda_by_family.clear();
      ctx.default_lambda = fixed_lambda;
    }
    EvalJob job{&p.suite(suite_name), method, layer, runs > 0 ? runs : p.config().eval_runs, p.eval_seed()};
    if (!prompt_file.empty())
      for (const auto& [id, text] : read_prompt_file(prompt_file)) job.prompts[id] = p.model().vocab().tokenize(text);
    auto r = run_job(ctx, job);
    if (!r.ok()) throw ConfigError(r.error);
    if (!prompt_file.empty()) r.method = "prompt_file";
    const fs::path out = out_path.empty() ? p.workspace().reports() / ("eval_" + r.suite + "_" + r.method + ".csv") : fs::path(out_path);
    write_text_file(out, results_csv({r}, p.stamp()));
    std::printf("%s\n", report_line(r).c_str());
  });

  // unembed ------------------------------------------------------------------------
  auto* unembed_cmd = app.add_subcommand("unembed", "read latents back as prompts via the embedding table");
  unembed_cmd->add_option("--task", task_id, "one task id (default: every latent)");
  unembed_cmd->add_option("--layer", layer, "hooked layer to read")->required();
  unembed_cmd->add_option("-o,--out", out_path, "prompt file (default: stdout)");
  unembed_cmd->callback([&] {
    auto p = open_pipeline(g);
    std::string text = "# layer " + std::to_string(layer) + "\n";
    for (const auto& [id, lat] : p.latents().all()) {
      if (!task_id.empty() && id != task_id) continue;
      if (layer < 1 || static_cast<std::size_t>(layer) > lat->layers()) throw UsageError("--layer must be in 1.." + std::to_string(lat->layers()));
      const auto tokens = unembed(lat->layer(layer), p.model().embedding_table());
      text += id + "\t" + p.model().vocab().detokenize(tokens) + "\n";
    }
    if (!task_id.empty() && text.find(task_id + "\t") == std::string::npos)
      throw MissingArtifactError("missing artifact " + p.workspace().latent(task_id).string() + " (run 'latentlab extract' first)");
    if (out_path.empty()) std::fputs(text.c_str(), stdout);
    else write_text_file(out_path, text);
  });

  // attribute ------------------------------------------------------------------------
  std::string timesteps = "0,3,6,9", out_dir;
  auto* attribute = app.add_subcommand("attribute", "render latent-attribution heatmaps for one task");
  attribute->add_option("--task", task_id, "base task id")->required();
  attribute->add_option("--timesteps", timesteps, "comma-separated demo timesteps");
  attribute->add_option("--out-dir", out_dir, "directory for PGM files (default: <workspace>/reports)");
  attribute->callback([&] {
    auto p = open_pipeline(g);
    const TaskSpec* task = nullptr;
    for (const auto* s : p.base_suites())
      for (const auto& t : s->tasks)
        if (t.task_id == task_id) task = &t;
    if (!task) throw UsageError("unknown base task '" + task_id + "'");
    const auto demos = p.dataset().episodes_of(task_id);
    std::vector<int> ts;
    for (const auto& s : split_list(timesteps)) ts.push_back(std::stoi(s));
    const fs::path dir = out_dir.empty() ? p.workspace().reports() : fs::path(out_dir);
    const ReportStamp stamp = p.stamp();
    for (const auto& grid : attribution_heatmap(p.model(), *task, *p.latents().get(task_id), demos.at(0), ts)) {
      const fs::path f = dir / ("heatmap_" + task_id + "_t" + std::to_string(grid.timestep) + ".pgm");
      write_text_file(f, stamped_pgm(grid, stamp));
      std::printf("%s\n", f.string().c_str());
    }
  });

  // report / run / verify --------------------------------------------------------------
  app.add_subcommand("report", "run the full experiment matrix and write reports")->callback([&] {
    auto p = open_pipeline(g);
    auto res = run_experiments(p, make_logger(g));
    emit_report(res.bundle, p.workspace().reports(), p.stamp());
    for (const auto& r : res.bundle.reports) std::printf("%s\n", report_line(r).c_str());
  });
  app.add_subcommand("run", "build every artifact, then report")->callback([&] {
    auto p = open_pipeline(g);
    p.build_suites(g.force);
    p.build_demos(g.force);
    p.build_model(g.force);
    p.build_latents(g.force);
    auto res = run_experiments(p, make_logger(g));
    emit_report(res.bundle, p.workspace().reports(), p.stamp());
    for (const auto& r : res.bundle.reports) std::printf("%s\n", report_line(r).c_str());
  });
  app.add_subcommand("verify", "re-derive fingerprints and fail on drift")->callback([&] { rc = cmd_verify(g); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  } catch (const MissingArtifactError& e) {
    std::fprintf(stderr, "latentlab: %s\n", e.what());
    return kMissing;
  } catch (const VerificationError& e) {
    std::fprintf(stderr, "latentlab: verification failed: %s\n", e.what());
    return kVerify;
  } catch (const FingerprintError& e) {
    std::fprintf(stderr, "latentlab: refusing: %s\n", e.what());
    return kVerify;
  } catch (const LoadError& e) {
    std::fprintf(stderr, "latentlab: %s\n", e.what());
    return kVerify;
  } catch (const Error& e) {
    std::fprintf(stderr, "latentlab: %s\n", e.what());
    return kUsage;
  } catch (const Json::exception& e) {
    std::fprintf(stderr, "latentlab: malformed JSON: %s\n", e.what());
    return kUsage;
  }
  return rc;
}
