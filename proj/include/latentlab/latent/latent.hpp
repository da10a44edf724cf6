#pragma once

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "latentlab/core/error.hpp"
#include "latentlab/core/hash.hpp"
#include "latentlab/core/io.hpp"
#include "latentlab/model/checkpoint.hpp"
#include "latentlab/model/policy.hpp"
#include "latentlab/world/suite.hpp"

namespace latentlab {

/// Mean text-token hidden state of one task, [(L-1) x |T| x d], with the
/// metadata needed to audit and re-inject it.
struct TextLatent {
  Tensor<double> tensor;
  std::string task_id;
  std::string prompt;
  std::size_t demo_count = 0;
  std::size_t total_timesteps = 0;
  std::string model_fingerprint;
  nlohmann::ordered_json provenance = nlohmann::ordered_json::object();

  std::size_t layers() const { return tensor.dim(0); }
  std::size_t length() const { return tensor.dim(1); }
  std::size_t width() const { return tensor.dim(2); }

  /// One layer as a [|T| x d] matrix (layer is 1-based).
  Tensor<double> layer(int l) const {
    if (l < 1 || static_cast<std::size_t>(l) > layers())
      throw ConfigError("latent layer " + std::to_string(l) + " outside 1.." + std::to_string(layers()));
    const std::size_t n = length() * width();
    std::vector<double> v(tensor.data() + (l - 1) * n, tensor.data() + l * n);
    return Tensor<double>({length(), width()}, std::move(v));
  }
};

/// Element-wise mean of h^T over every timestep of every demonstration
/// (a flat average, so long demos weigh more). Accumulates in 64-bit.
template <class T>
TextLatent extract_latent(const PolicyModel<T>& model, const TaskSpec& task, const std::vector<Episode>& demos) {
  if (demos.empty()) throw ConfigError("extract_latent: no demonstrations for task " + task.task_id);
  const auto& cfg = model.config();
  const PromptTokens prompt = model.vocab().tokenize(task.prompt);
  const std::size_t L1 = static_cast<std::size_t>(cfg.hook_layers());
  const std::size_t d = static_cast<std::size_t>(cfg.d_model);
  Tensor<double> acc({L1, prompt.size(), d});
  std::size_t count = 0;
  for (const auto& ep : demos) {
    if (ep.task_id != task.task_id)
      throw ConfigError("extract_latent: demo of task " + ep.task_id + " passed for task " + task.task_id);
    if (!ep.success) throw ConfigError("extract_latent: unsuccessful demo for task " + task.task_id);
    for (const auto& st : ep.steps) {
      PolicyInput<T> in{observe(st.state, cfg), prompt, {}};
      ForwardTrace<T> tr;
      model.forward(in, nullptr, &tr);
      for (std::size_t i = 0; i < acc.size(); ++i) {
        const double v = static_cast<double>(tr.text_hidden[i]);
        if (!std::isfinite(v))
          throw ExtractionError("non-finite hidden state while extracting " + task.task_id + " (demo step " +
                                std::to_string(count) + ")");
        acc[i] += v;
      }
      ++count;
    }
  }
  if (count == 0) throw ConfigError("extract_latent: demonstrations for " + task.task_id + " have no timesteps");
  for (auto& v : acc.vec()) v /= static_cast<double>(count);
  TextLatent out;
  out.tensor = std::move(acc);
  out.task_id = task.task_id;
  out.prompt = task.prompt;
  out.demo_count = demos.size();
  out.total_timesteps = count;
  out.model_fingerprint = model_fingerprint(model);
  return out;
}

/// Truncate or zero-pad the token axis (from the end) to `target_len`.
template <class T>
Tensor<T> fit_token_axis(const Tensor<T>& x, std::size_t target_len) {
  if (x.rank() != 3) throw DimensionError("fit_token_axis expects a rank-3 tensor, got " + shape_str(x.shape()));
  const std::size_t L = x.dim(0), n = x.dim(1), d = x.dim(2);
  Tensor<T> out({L, target_len, d});
  const std::size_t keep = std::min(n, target_len);
  for (std::size_t l = 0; l < L; ++l)
    for (std::size_t i = 0; i < keep; ++i)
      for (std::size_t j = 0; j < d; ++j) out.at3(l, i, j) = x.at3(l, i, j);
  return out;
}

inline TextLatent fit_token_length(const TextLatent& latent, std::size_t target_len) {
  if (target_len < 1) throw ConfigError("fit_token_length: target length must be at least 1");
  TextLatent out = latent;
  out.tensor = fit_token_axis(latent.tensor, target_len);
  return out;
}

inline void check_fingerprint(const TextLatent& latent, const std::string& model_fp) {
  if (latent.model_fingerprint != model_fp)
    throw FingerprintError("latent for " + latent.task_id + " was extracted from model " + latent.model_fingerprint +
                           ", current model is " + model_fp);
}

inline constexpr char kLatentMagic[8] = {'L', 'L', 'A', 'B', 'L', 'A', 'T', 'N'};
inline constexpr std::uint32_t kLatentVersion = 1;

inline void save_latent(const TextLatent& t, const std::filesystem::path& path) {
  nlohmann::ordered_json h;
  h["format"] = "latentlab-latent";
  h["version"] = kLatentVersion;
  h["task_id"] = t.task_id;
  h["prompt"] = t.prompt;
  h["prompt_length"] = t.length();
  h["demo_count"] = t.demo_count;
  h["total_timesteps"] = t.total_timesteps;
  h["shape"] = t.tensor.shape();
  h["dtype"] = "float64";
  h["model_fingerprint"] = t.model_fingerprint;
  h["provenance"] = t.provenance;
  ByteWriter w;
  w.put_bytes(kLatentMagic, sizeof kLatentMagic);
  w.put<std::uint32_t>(kLatentVersion);
  w.put_string(h.dump());
  for (double v : t.tensor.vec()) w.put(v);
  w.put<std::uint64_t>(Fnv1a().values<double>(t.tensor.span()).digest());
  w.save(path);
}

inline TextLatent load_latent(const std::filesystem::path& path) {
  ByteReader r = ByteReader::from_file(path);
  const std::string what = path.string();
  char magic[8];
  r.get_bytes(magic, sizeof magic);
  if (std::memcmp(magic, kLatentMagic, sizeof magic) != 0) throw LoadError(what + ": not a latent file");
  if (r.get<std::uint32_t>() != kLatentVersion) throw LoadError(what + ": unsupported latent version");
  TextLatent t;
  try {
    auto h = nlohmann::ordered_json::parse(r.get_string());
    t.task_id = h.at("task_id").get<std::string>();
    t.prompt = h.at("prompt").get<std::string>();
    t.demo_count = h.at("demo_count").get<std::size_t>();
    t.total_timesteps = h.at("total_timesteps").get<std::size_t>();
    t.model_fingerprint = h.at("model_fingerprint").get<std::string>();
    t.provenance = h.value("provenance", nlohmann::ordered_json::object());
    const auto shape = h.at("shape").get<Shape>();
    if (shape.size() != 3) throw LoadError(what + ": latent shape must be rank 3");
    t.tensor = Tensor<double>(shape);
  } catch (const nlohmann::ordered_json::exception& e) {
    throw LoadError(what + ": bad latent header: " + e.what());
  }
  for (auto& v : t.tensor.vec()) v = r.get<double>();
  if (r.get<std::uint64_t>() != Fnv1a().values<double>(t.tensor.span()).digest())
    throw LoadError(what + ": latent payload checksum mismatch");
  for (double v : t.tensor.vec())
    if (!std::isfinite(v)) throw LoadError(what + ": latent contains non-finite values");
  return t;
}

}  // namespace latentlab
