#pragma once

#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "latentlab/core/io.hpp"
#include "latentlab/eval/attribution.hpp"
#include "latentlab/eval/diagnostics.hpp"
#include "latentlab/eval/eval.hpp"

namespace latentlab {

/// Fingerprints that every emitted file is stamped with.
struct ReportStamp {
  std::string model;
  std::string latents;
  std::string config;
  std::uint64_t seed = 0;

  std::string line() const {
    return "# model=" + model + " latents=" + latents + " config=" + config + " seed=" + std::to_string(seed) + "\n";
  }
};

struct ReportBundle {
  std::vector<EvalReport> reports;
  std::optional<AblationCurve> ablation;
  std::optional<OverfitDiagnostic> diagnostic;
  std::optional<OverfitDiagnostic> oracle_diagnostic;
  std::optional<TwoPromptReport> two_prompt;
  std::vector<std::pair<std::string, ScoreGrid>> heatmaps;  // (file stem, grid)
};

inline std::string format_rate(double r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", r);
  return buf;
}

inline std::string results_csv(const std::vector<EvalReport>& reports, const ReportStamp& stamp) {
  std::string s = stamp.line() + "suite,task_id,method,runs,successes,rate\n";
  for (const auto& r : reports) {
    if (!r.ok()) continue;
    for (const auto& t : r.tasks)
      s += r.suite + "," + t.task_id + "," + r.method + "," + std::to_string(t.runs) + "," +
           std::to_string(t.successes) + "," + format_rate(t.runs ? static_cast<double>(t.successes) / t.runs : 0) +
           "\n";
  }
  return s;
}

inline std::string ablation_csv(const AblationCurve& c, const ReportStamp& stamp) {
  std::string s = stamp.line() + "layer,successes,episodes,rate\n";
  for (const auto& [l, r] : c.per_layer)
    s += std::to_string(l) + "," + std::to_string(r.successes) + "," + std::to_string(r.episodes) + "," +
         format_rate(r.rate()) + "\n";
  s += "all," + std::to_string(c.all_layers.successes) + "," + std::to_string(c.all_layers.episodes) + "," +
       format_rate(c.all_layers.rate()) + "\n";
  return s;
}

inline std::string diagnostic_csv(const OverfitDiagnostic& d, const ReportStamp& stamp) {
  std::string s = stamp.line() + "task_id,run,classification,success\n";
  for (const auto& r : d.records)
    s += r.task_id + "," + std::to_string(r.run) + "," + approach_name(r.approach) + "," + (r.success ? "1" : "0") +
         "\n";
  return s;
}

inline Json summary_json(const ReportBundle& b, const ReportStamp& stamp) {
  Json j;
  j["model_fingerprint"] = stamp.model;
  j["latent_fingerprint"] = stamp.latents;
  j["config_fingerprint"] = stamp.config;
  j["seed"] = stamp.seed;
  j["methods"] = Json::array();
  std::map<std::string, const EvalReport*> by_method;
  for (const auto& r : b.reports) {
    Json m{{"suite", r.suite}, {"method", r.method}};
    if (r.ok()) {
      m["successes"] = r.successes;
      m["episodes"] = r.episodes;
      m["rate"] = r.rate();
      by_method[r.suite + "/" + r.method] = &r;
    } else {
      m["error"] = r.error;
    }
    j["methods"].push_back(m);
  }
  for (const auto& [key, r] : by_method) {
    if (r->method != "vanilla") continue;
    auto it = by_method.find(r->suite + "/tli");
    if (it == by_method.end()) continue;
    const double delta = it->second->rate() - r->rate();
    j["headline"] = "TLI " + format_rate(it->second->rate()) + " vs vanilla " + format_rate(r->rate()) + " on " +
                    r->suite + " (delta " + (delta >= 0 ? "+" : "") + format_rate(delta) + ")";
    j["vanilla_vs_tli_delta"] = delta;
  }
  if (b.ablation) {
    Json a = Json::array();
    for (const auto& [l, r] : b.ablation->per_layer) a.push_back({{"layer", l}, {"rate", r.rate()}});
    j["layer_ablation"] = {{"per_layer", a}, {"all_layers", b.ablation->all_layers.rate()}};
  }
  if (b.diagnostic) {
    j["ood_position"] = {{"trained_location", b.diagnostic->fraction(Approach::TrainedLocation)},
                         {"current_location", b.diagnostic->fraction(Approach::CurrentLocation)},
                         {"neither", b.diagnostic->fraction(Approach::Neither)}};
    if (b.oracle_diagnostic)
      j["ood_position"]["oracle_current_location"] = b.oracle_diagnostic->fraction(Approach::CurrentLocation);
  }
  if (b.two_prompt) {
    Json c = Json::array();
    for (const auto& cl : b.two_prompt->clusters)
      c.push_back({{"cluster", cl.cluster}, {"prompt", cl.canonical_prompt}, {"successes", cl.successes},
                   {"runs", cl.runs}, {"rate", cl.rate()}});
    j["two_prompt"] = {{"rate", b.two_prompt->report.rate()}, {"clusters", c}};
  }
  return j;
}

inline std::string stamped_pgm(const ScoreGrid& g, const ReportStamp& stamp) {
  std::string pgm = render_pgm(g);
  pgm.insert(pgm.find('\n') + 1, stamp.line());
  return pgm;
}

/// Writes results.csv, summary.json and, when present, ablation.csv,
/// diagnostic.csv and one PGM per heat map into `dir`.
inline std::vector<std::filesystem::path> emit_report(const ReportBundle& b, const std::filesystem::path& dir,
                                                      const ReportStamp& stamp) {
  std::vector<std::filesystem::path> files;
  auto put = [&](const std::string& name, const std::string& text) {
    write_text_file(dir / name, text);
    files.push_back(dir / name);
  };
  std::vector<EvalReport> all = b.reports;
  if (b.two_prompt) all.push_back(b.two_prompt->report);
  put("results.csv", results_csv(all, stamp));
  put("summary.json", summary_json(b, stamp).dump(2) + "\n");
  if (b.ablation) put("ablation.csv", ablation_csv(*b.ablation, stamp));
  if (b.diagnostic) put("diagnostic.csv", diagnostic_csv(*b.diagnostic, stamp));
  for (const auto& [stem, g] : b.heatmaps) put(stem + ".pgm", stamped_pgm(g, stamp));
  return files;
}

}  // namespace latentlab
