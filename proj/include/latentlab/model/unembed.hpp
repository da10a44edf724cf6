#pragma once

#include <cmath>
#include <vector>

#include "latentlab/core/error.hpp"
#include "latentlab/model/vocab.hpp"
#include "latentlab/numerics/tensor.hpp"

namespace latentlab {

/// Logit-lens readout: for each row of `latent` ([n x d]) pick the vocabulary
/// entry of `table` ([V x d]) with the highest cosine similarity. Ties go to
/// the smallest id; zero rows (latent or table) never win and a zero latent
/// row reads as PAD.
template <class T, class U>
PromptTokens unembed(const Tensor<T>& latent, const Tensor<U>& table) {
  if (latent.rank() != 2 || table.rank() != 2 || latent.dim(1) != table.dim(1))
    throw DimensionError("unembed width mismatch: latent " + shape_str(latent.shape()) + ", table " +
                         shape_str(table.shape()));
  const std::size_t d = table.dim(1);
  std::vector<double> norms(table.dim(0));
  for (std::size_t v = 0; v < table.dim(0); ++v) {
    double s = 0;
    for (std::size_t j = 0; j < d; ++j) s += static_cast<double>(table(v, j)) * static_cast<double>(table(v, j));
    norms[v] = std::sqrt(s);
  }
  PromptTokens out;
  for (std::size_t i = 0; i < latent.dim(0); ++i) {
    double ln = 0;
    for (std::size_t j = 0; j < d; ++j) ln += static_cast<double>(latent(i, j)) * static_cast<double>(latent(i, j));
    ln = std::sqrt(ln);
    int best = Vocabulary::kPad;
    if (ln > 0) {
      double best_sim = -2;
      for (std::size_t v = 0; v < table.dim(0); ++v) {
        if (norms[v] == 0) continue;
        double dot = 0;
        for (std::size_t j = 0; j < d; ++j) dot += static_cast<double>(latent(i, j)) * static_cast<double>(table(v, j));
        const double sim = dot / (ln * norms[v]);
        if (sim > best_sim) {
          best_sim = sim;
          best = static_cast<int>(v);
        }
      }
    }
    out.ids.push_back(best);
  }
  return out;
}

}  // namespace latentlab
