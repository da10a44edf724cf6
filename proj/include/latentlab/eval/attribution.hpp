#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "latentlab/core/io.hpp"
#include "latentlab/latent/latent.hpp"
#include "latentlab/model/policy.hpp"

namespace latentlab {

/// Per-cell scores for one timestep; cells without an observation token are 0.
struct ScoreGrid {
  int size = 0;
  int timestep = 0;
  std::vector<double> cells;  // row-major, index y * size + x
  double at(int x, int y) const { return cells[static_cast<std::size_t>(y * size + x)]; }
};

/// Raw score of every observation token: the largest cosine similarity
/// between the token's hidden state at layer l and any token vector of the
/// latent's layer l, over all hook layers. Rows are entity tokens in
/// observation order, then the proprio token.
template <class T>
std::vector<double> token_attribution(const ForwardTrace<T>& tr, const TextLatent& latent) {
  const std::size_t d = latent.width();
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < tr.entity_count; ++i) rows.push_back(i);
  rows.push_back(tr.proprio_row);
  std::vector<double> out(rows.size(), -1.0);
  for (std::size_t l = 0; l < tr.hidden.size() && l < latent.layers(); ++l) {
    const auto& H = tr.hidden[l];
    for (std::size_t k = 0; k < rows.size(); ++k) {
      double hn = 0;
      for (std::size_t j = 0; j < d; ++j) hn += static_cast<double>(H(rows[k], j)) * static_cast<double>(H(rows[k], j));
      hn = std::sqrt(hn);
      for (std::size_t t = 0; t < latent.length(); ++t) {
        double dot = 0, tn = 0;
        for (std::size_t j = 0; j < d; ++j) {
          const double v = latent.tensor.at3(l, t, j);
          dot += static_cast<double>(H(rows[k], j)) * v;
          tn += v * v;
        }
        if (hn == 0 || tn == 0) continue;
        out[k] = std::max(out[k], dot / (hn * std::sqrt(tn)));
      }
    }
  }
  return out;
}

/// Attribution heat map of each requested timestep of an episode: token
/// scores are min-max normalised per frame to [0, 1] and painted onto the
/// entity's cell (every cell of a destination region; the gripper cell for
/// the proprio token), keeping the maximum where tokens share a cell.
template <class T>
std::vector<ScoreGrid> attribution_heatmap(const PolicyModel<T>& model, const TaskSpec& task, const TextLatent& latent,
                                           const Episode& ep, const std::vector<int>& timesteps) {
  const PromptTokens prompt = model.vocab().tokenize(task.prompt);
  std::vector<ScoreGrid> out;
  for (int ts : timesteps) {
    if (ts < 0 || static_cast<std::size_t>(ts) >= ep.steps.size())
      throw ConfigError("attribution timestep " + std::to_string(ts) + " outside episode of length " +
                        std::to_string(ep.steps.size()));
    const WorldState& s = ep.steps[static_cast<std::size_t>(ts)].state;
    PolicyInput<T> in{observe(s, model.config()), prompt, {}};
    ForwardTrace<T> tr;
    model.forward(in, nullptr, &tr);
    std::vector<double> raw = token_attribution(tr, latent);
    const double lo = *std::min_element(raw.begin(), raw.end());
    const double hi = *std::max_element(raw.begin(), raw.end());
    for (auto& v : raw) v = hi > lo ? (v - lo) / (hi - lo) : 1.0;

    ScoreGrid g;
    g.size = s.grid_size;
    g.timestep = ts;
    g.cells.assign(static_cast<std::size_t>(g.size * g.size), 0.0);
    auto paint = [&](Cell c, double v) {
      auto& cell = g.cells[static_cast<std::size_t>(c.y * g.size + c.x)];
      cell = std::max(cell, v);
    };
    // observation order: objects by id, then destinations by id
    std::vector<const ObjectInstance*> objs;
    for (const auto& o : s.objects) objs.push_back(&o);
    std::sort(objs.begin(), objs.end(), [](auto* a, auto* b) { return a->id < b->id; });
    std::vector<const Destination*> dsts;
    for (const auto& d : s.destinations) dsts.push_back(&d);
    std::sort(dsts.begin(), dsts.end(), [](auto* a, auto* b) { return a->id < b->id; });
    std::size_t k = 0;
    for (auto* o : objs) paint(o->pos, raw[k++]);
    for (auto* d : dsts) {
      for (int dy = 0; dy < d->region.height; ++dy)
        for (int dx = 0; dx < d->region.width; ++dx) {
          const Cell c{d->region.origin.x + dx, d->region.origin.y + dy};
          if (c.x < g.size && c.y < g.size) paint(c, raw[k]);
        }
      ++k;
    }
    paint(s.gripper.pos, raw[k]);
    out.push_back(std::move(g));
  }
  return out;
}

/// Binary PGM (P5), `scale` pixels per cell, top image row = highest y.
inline std::string render_pgm(const ScoreGrid& g, int scale = 16) {
  const int w = g.size * scale;
  std::string s = "P5\n# latentlab attribution t=" + std::to_string(g.timestep) + "\n" + std::to_string(w) + " " +
                  std::to_string(w) + "\n255\n";
  for (int py = 0; py < w; ++py) {
    const int y = g.size - 1 - py / scale;
    for (int px = 0; px < w; ++px) {
      const double v = std::clamp(g.at(px / scale, y), 0.0, 1.0);
      s.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
  }
  return s;
}

inline void write_pgm(const ScoreGrid& g, const std::filesystem::path& path, int scale = 16) {
  write_text_file(path, render_pgm(g, scale));
}

}  // namespace latentlab
