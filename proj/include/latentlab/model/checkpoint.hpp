#pragma once

#include <cstring>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "latentlab/core/error.hpp"
#include "latentlab/core/hash.hpp"
#include "latentlab/core/io.hpp"
#include "latentlab/model/policy.hpp"

namespace latentlab {

inline constexpr char kCheckpointMagic[8] = {'L', 'L', 'A', 'B', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Identity of a set of weights: config, vocabulary, parameter names, shapes
/// and values (as stored, i.e. 32-bit).
template <class T>
std::string model_fingerprint(const PolicyModel<T>& m) {
  Fnv1a h;
  h.str(to_json(m.config()).dump());
  for (const auto& w : m.vocab().tokens()) h.str(w);
  for (const auto& p : m.parameters()) {
    h.str(p.name);
    for (auto s : p.value.shape()) h.value<std::uint64_t>(s);
    for (auto v : p.value.vec()) h.value(static_cast<float>(v));
  }
  return h.hex();
}

struct CheckpointInfo {
  std::string fingerprint;
  nlohmann::ordered_json training;  // training config and provenance, opaque here
};

/// Layout: magic, version, header length + JSON header, then every parameter
/// as little-endian float32 in header order, then an FNV-1a checksum.
template <class T>
void save_checkpoint(const PolicyModel<T>& m, const std::filesystem::path& path,
                     const nlohmann::ordered_json& training = nlohmann::ordered_json::object()) {
  nlohmann::ordered_json h;
  h["format"] = "latentlab-checkpoint";
  h["version"] = kCheckpointVersion;
  h["dtype"] = "float32";
  h["model"] = to_json(m.config());
  h["seed"] = m.config().seed;
  h["vocabulary"] = m.vocab().tokens();
  h["parameters"] = nlohmann::ordered_json::array();
  for (const auto& p : m.parameters()) h["parameters"].push_back({{"name", p.name}, {"shape", p.value.shape()}});
  h["fingerprint"] = model_fingerprint(m);
  h["training"] = training;
  ByteWriter w;
  w.put_bytes(kCheckpointMagic, sizeof kCheckpointMagic);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put_string(h.dump());
  Fnv1a sum;
  for (const auto& p : m.parameters())
    for (auto v : p.value.vec()) {
      const float f = static_cast<float>(v);
      w.put(f);
      sum.value(f);
    }
  w.put<std::uint64_t>(sum.digest());
  w.save(path);
}

template <class T>
PolicyModel<T> load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info = nullptr,
                               const ModelConfig* expect = nullptr) {
  ByteReader r = ByteReader::from_file(path);
  const std::string what = path.string();
  char magic[8];
  r.get_bytes(magic, sizeof magic);
  if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) throw LoadError(what + ": not a checkpoint file");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw LoadError(what + ": checkpoint version " + std::to_string(version) + ", expected " +
                    std::to_string(kCheckpointVersion));
  nlohmann::ordered_json h;
  try {
    h = nlohmann::ordered_json::parse(r.get_string());
  } catch (const nlohmann::ordered_json::exception& e) {
    throw LoadError(what + ": bad header: " + e.what());
  }
  ModelConfig cfg;
  std::vector<std::string> vocab_words;
  try {
    cfg = model_config_from_json(h.at("model"));
    vocab_words = h.at("vocabulary").get<std::vector<std::string>>();
  } catch (const nlohmann::ordered_json::exception& e) {
    throw LoadError(what + ": bad header: " + e.what());
  }
  if (expect && (expect->d_model != cfg.d_model || expect->n_layers != cfg.n_layers))
    throw LoadError(what + ": checkpoint has d_model=" + std::to_string(cfg.d_model) + ", n_layers=" +
                    std::to_string(cfg.n_layers) + "; expected d_model=" + std::to_string(expect->d_model) +
                    ", n_layers=" + std::to_string(expect->n_layers));
  if (vocab_words.size() < 2 || vocab_words[0] != Vocabulary::kPadWord || vocab_words[1] != Vocabulary::kBlankWord)
    throw LoadError(what + ": vocabulary lacks reserved tokens");
  PolicyModel<T> m(cfg, Vocabulary(std::vector<std::string>(vocab_words.begin() + 2, vocab_words.end())));
  const auto& plist = h.at("parameters");
  if (plist.size() != m.parameters().size())
    throw LoadError(what + ": checkpoint has " + std::to_string(plist.size()) + " parameter tensors, model expects " +
                    std::to_string(m.parameters().size()));
  for (std::size_t i = 0; i < plist.size(); ++i) {
    auto& p = m.parameters()[i];
    const auto name = plist[i].at("name").get<std::string>();
    const auto shape = plist[i].at("shape").get<Shape>();
    if (name != p.name || shape != p.value.shape())
      throw LoadError(what + ": parameter " + std::to_string(i) + " is " + name + shape_str(shape) + ", model expects " +
                      p.name + shape_str(p.value.shape()));
  }
  Fnv1a sum;
  for (auto& p : m.parameters())
    for (auto& v : p.value.vec()) {
      const float f = r.get<float>();
      sum.value(f);
      v = static_cast<T>(f);
    }
  if (r.get<std::uint64_t>() != sum.digest()) throw LoadError(what + ": checkpoint payload checksum mismatch");
  if (r.remaining() != 0) throw LoadError(what + ": trailing bytes after checkpoint payload");
  if (info) {
    info->fingerprint = h.value("fingerprint", "");
    info->training = h.value("training", nlohmann::ordered_json::object());
  }
  return m;
}

}  // namespace latentlab
