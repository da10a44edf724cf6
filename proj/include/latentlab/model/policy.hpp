#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "latentlab/core/error.hpp"
#include "latentlab/core/rng.hpp"
#include "latentlab/model/vocab.hpp"
#include "latentlab/numerics/autodiff.hpp"
#include "latentlab/world/world.hpp"
#include "latentlab/world/words.hpp"

namespace latentlab {

struct ModelConfig {
  int d_model = 64;
  int n_layers = 6;
  int n_heads = 4;
  int mlp_ratio = 4;
  int grid_size = 9;
  int max_text = 32;
  int max_entities = 16;
  /// Leading layers in which text positions and the rest of the sequence
  /// attend only among themselves.
  int text_encoder_layers = 1;
  std::uint64_t seed = 1;

  /// Number of layers whose text hidden states are exposed for editing.
  int hook_layers() const { return n_layers - 1; }

  void validate() const {
    if (d_model < 1 || n_layers < 2 || n_heads < 1 || mlp_ratio < 1 || grid_size < 2 || max_text < 1 ||
        max_entities < 1)
      throw ConfigError("model config fields must be positive (and at least two layers)");
    if (d_model % n_heads != 0) throw ConfigError("d_model must be divisible by n_heads");
    if (text_encoder_layers < 0 || text_encoder_layers >= n_layers)
      throw ConfigError("text_encoder_layers must be in 0.." + std::to_string(n_layers - 1));
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline nlohmann::ordered_json to_json(const ModelConfig& c) {
  return {{"d_model", c.d_model},     {"n_layers", c.n_layers},   {"n_heads", c.n_heads},
          {"mlp_ratio", c.mlp_ratio}, {"grid_size", c.grid_size}, {"max_text", c.max_text},
          {"max_entities", c.max_entities}, {"text_encoder_layers", c.text_encoder_layers}, {"seed", c.seed}};
}

inline ModelConfig model_config_from_json(const nlohmann::ordered_json& j) {
  ModelConfig c;
  c.d_model = j.at("d_model").get<int>();
  c.n_layers = j.at("n_layers").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.mlp_ratio = j.at("mlp_ratio").get<int>();
  c.grid_size = j.at("grid_size").get<int>();
  c.max_text = j.at("max_text").get<int>();
  c.max_entities = j.at("max_entities").get<int>();
  c.text_encoder_layers = j.at("text_encoder_layers").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

/// Object-centric observation: one token per entity (objects by id, then
/// destinations by id) plus the proprioceptive gripper state.
struct ObservationTokens {
  std::vector<std::size_t> entity_types;
  std::vector<Cell> cells;
  Cell gripper;
  bool holding = false;
  std::size_t entity_count() const { return entity_types.size(); }
};

inline std::size_t entity_type_index(const std::string& name) {
  const auto& names = words::entity_names();
  auto it = std::lower_bound(names.begin(), names.end(), name);
  if (it == names.end() || *it != name) throw ConfigError("no entity type named '" + name + "'");
  return static_cast<std::size_t>(it - names.begin());
}

inline ObservationTokens observe(const WorldState& s, const ModelConfig& cfg) {
  if (s.grid_size != cfg.grid_size)
    throw ConfigError("world grid size " + std::to_string(s.grid_size) + " does not match model grid size " +
                      std::to_string(cfg.grid_size));
  if (static_cast<int>(s.objects.size() + s.destinations.size()) > cfg.max_entities)
    throw ConfigError("observation has " + std::to_string(s.objects.size() + s.destinations.size()) +
                      " entities; model supports " + std::to_string(cfg.max_entities));
  ObservationTokens o;
  std::vector<const ObjectInstance*> objs;
  for (const auto& x : s.objects) objs.push_back(&x);
  std::sort(objs.begin(), objs.end(), [](auto* a, auto* b) { return a->id < b->id; });
  std::vector<const Destination*> dsts;
  for (const auto& x : s.destinations) dsts.push_back(&x);
  std::sort(dsts.begin(), dsts.end(), [](auto* a, auto* b) { return a->id < b->id; });
  for (auto* x : objs) {
    o.entity_types.push_back(entity_type_index(x->name));
    o.cells.push_back(x->pos);
  }
  for (auto* x : dsts) {
    o.entity_types.push_back(entity_type_index(x->name));
    o.cells.push_back(x->region.origin);
  }
  o.gripper = s.gripper.pos;
  o.holding = s.gripper.held.has_value();
  return o;
}

/// Additive edits applied to the text positions of the residual stream after
/// layers 1..L-1. Several edits on one layer are applied in insertion order.
template <class T>
class HookSet {
 public:
  explicit HookSet(int hook_layers = 0) : edits_(static_cast<std::size_t>(std::max(hook_layers, 0))) {}

  void add(int layer, Tensor<T> edit) {
    if (layer < 1 || layer > static_cast<int>(edits_.size()))
      throw InterventionError("hook layer " + std::to_string(layer) + " outside 1.." + std::to_string(edits_.size()));
    edits_[static_cast<std::size_t>(layer - 1)].push_back(std::move(edit));
  }

  const std::vector<Tensor<T>>& at(int layer) const { return edits_.at(static_cast<std::size_t>(layer - 1)); }
  int layers() const { return static_cast<int>(edits_.size()); }
  bool empty() const {
    for (const auto& e : edits_)
      if (!e.empty()) return false;
    return true;
  }

 private:
  std::vector<std::vector<Tensor<T>>> edits_;
};

/// Internal representation captured during one forward pass.
template <class T>
struct ForwardTrace {
  Tensor<T> text_embedding;          // [|T| x d]
  Tensor<T> text_hidden;             // [(L-1) x |T| x d], recorded after hook edits
  std::vector<Tensor<T>> hidden;     // per layer 1..L-1: every position, [n x d]
  Tensor<T> logits;                  // [6]
  std::size_t entity_count = 0;
  std::size_t text_offset = 0;
  std::size_t text_length = 0;
  std::size_t proprio_row = 0;
  std::size_t query_row = 0;
};

/// One policy query: observation plus either prompt tokens or an explicit
/// text-embedding matrix that replaces them.
template <class T>
struct PolicyInput {
  ObservationTokens observation;
  PromptTokens prompt;
  std::optional<Tensor<T>> text_override;  // [|T| x d]

  std::size_t text_length() const { return text_override ? text_override->dim(0) : prompt.size(); }
};

/// Transformer policy: pre-norm residual blocks over
/// [entity tokens; text tokens; proprio token; action query].
template <class T>
class PolicyModel {
 public:
  PolicyModel() = default;

  PolicyModel(ModelConfig config, Vocabulary vocab) : config_(config), vocab_(std::move(vocab)) {
    config_.validate();
    build_parameters();
  }

  const ModelConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  ParameterSet<T>& parameters() { return params_; }
  const ParameterSet<T>& parameters() const { return params_; }

  /// Token embedding table E [V x d].
  const Tensor<T>& embedding_table() const { return params_[idx_.word].value; }

  /// e^T for a prompt: word embedding plus text-position embedding.
  Tensor<T> text_embeddings(const PromptTokens& p) const {
    check_text(p.size());
    const std::size_t d = static_cast<std::size_t>(config_.d_model);
    Tensor<T> out({p.size(), d});
    const auto& E = params_[idx_.word].value;
    const auto& P = params_[idx_.text_pos].value;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p.ids[i] < 0 || static_cast<std::size_t>(p.ids[i]) >= E.rows()) throw TokenizationError("token id out of range");
      for (std::size_t j = 0; j < d; ++j) out(i, j) = E(static_cast<std::size_t>(p.ids[i]), j) + P(i, j);
    }
    return out;
  }

  /// Observation token embeddings e^-: entity rows then the proprio row.
  Tensor<T> encode_observation(const WorldState& state) const {
    ObservationTokens obs = observe(state, config_);
    Graph<T> g(false);
    auto& self = const_cast<PolicyModel&>(*this);
    const std::size_t n = obs.entity_count() + 1;
    std::vector<std::size_t> ent_rows(obs.entity_count());
    for (std::size_t i = 0; i < ent_rows.size(); ++i) ent_rows[i] = i;
    auto x = self.entity_embeddings(g, {&obs, 1}, {ent_rows}, n);
    x = g.add(x, self.proprio_embeddings(g, {&obs, 1}, {n - 1}, n));
    return g.value(x);
  }

  /// Single-sample forward pass with optional hooks and trace capture.
  Tensor<T> forward(const PolicyInput<T>& in, const HookSet<T>* hooks = nullptr, ForwardTrace<T>* trace = nullptr) const {
    Graph<T> g(false);
    auto& self = const_cast<PolicyModel&>(*this);
    std::vector<const PolicyInput<T>*> batch{&in};
    std::vector<const HookSet<T>*> hk{hooks};
    auto logits = self.build(g, batch, hk, trace);
    Tensor<T> out = g.value(logits).reshaped({kActionCount});
    if (trace) trace->logits = out;
    return out;
  }

  Action greedy_action(const Tensor<T>& logits) const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i)
      if (logits[i] > logits[best]) best = i;
    return static_cast<Action>(best);
  }

  /// Mean cross-entropy of `targets` over a batch, recorded on `g`.
  typename Graph<T>::Var loss(Graph<T>& g, const std::vector<const PolicyInput<T>*>& batch,
                              const std::vector<Action>& targets) {
    std::vector<const HookSet<T>*> none(batch.size(), nullptr);
    auto logits = build(g, batch, none, nullptr);
    std::vector<std::size_t> t;
    for (Action a : targets) t.push_back(static_cast<std::size_t>(a));
    return g.softmax_cross_entropy(logits, std::move(t));
  }

  /// Stacked forward over a batch; returns the [B x 6] logits node.
  typename Graph<T>::Var build(Graph<T>& g, const std::vector<const PolicyInput<T>*>& batch,
                               const std::vector<const HookSet<T>*>& hooks, ForwardTrace<T>* trace) {
    using Var = typename Graph<T>::Var;
    const std::size_t d = static_cast<std::size_t>(config_.d_model);
    const int L = config_.n_layers;
    if (trace && batch.size() != 1) throw UsageError("trace capture requires a single-sample batch");

    struct Rows {
      std::size_t start, n_ent, n_text;
      std::size_t text() const { return start + n_ent; }
      std::size_t proprio() const { return start + n_ent + n_text; }
      std::size_t query() const { return proprio() + 1; }
      std::size_t length() const { return n_ent + n_text + 2; }
    };
    std::vector<Rows> rows;
    std::size_t total = 0;
    AttentionLayout layout, encoder_layout;
    for (const auto* in : batch) {
      check_text(in->text_length());
      if (static_cast<int>(in->observation.entity_count()) > config_.max_entities)
        throw ConfigError("too many observation entities");
      Rows r{total, in->observation.entity_count(), in->text_length()};
      layout.segments.push_back({r.start, r.length()});
      encoder_layout.segments.push_back({r.start, r.length()});
      encoder_layout.groups.resize(r.start + r.length(), 0);
      std::fill(encoder_layout.groups.begin() + static_cast<std::ptrdiff_t>(r.text()),
                encoder_layout.groups.begin() + static_cast<std::ptrdiff_t>(r.proprio()), 1);
      total += r.length();
      rows.push_back(r);
    }

    // input embeddings
    std::vector<ObservationTokens> obs;
    std::vector<std::vector<std::size_t>> ent_rows;
    std::vector<std::size_t> proprio_rows, query_rows;
    std::vector<std::size_t> word_idx, word_dst, pos_idx;
    Tensor<T> override_rows({total, d});
    bool any_override = false;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto* in = batch[b];
      obs.push_back(in->observation);
      std::vector<std::size_t> er;
      for (std::size_t i = 0; i < rows[b].n_ent; ++i) er.push_back(rows[b].start + i);
      ent_rows.push_back(std::move(er));
      proprio_rows.push_back(rows[b].proprio());
      query_rows.push_back(rows[b].query());
      if (in->text_override) {
        any_override = true;
        if (in->text_override->rank() != 2 || in->text_override->dim(1) != d)
          throw InterventionError("text embedding override must be [|T| x d]");
        for (std::size_t i = 0; i < rows[b].n_text; ++i)
          for (std::size_t j = 0; j < d; ++j) override_rows(rows[b].text() + i, j) = (*in->text_override)(i, j);
      } else {
        for (std::size_t i = 0; i < rows[b].n_text; ++i) {
          const int id = in->prompt.ids[i];
          if (id < 0 || static_cast<std::size_t>(id) >= vocab_.size()) throw TokenizationError("token id out of range");
          word_idx.push_back(static_cast<std::size_t>(id));
          word_dst.push_back(rows[b].text() + i);
          pos_idx.push_back(i);
        }
      }
    }
    Var x = entity_embeddings(g, obs, ent_rows, total);
    x = g.add(x, proprio_embeddings(g, obs, proprio_rows, total));
    x = g.add(x, g.embed(g.param(params_[idx_.query]), std::vector<std::size_t>(query_rows.size(), 0), query_rows, total));
    if (!word_idx.empty()) {
      x = g.add(x, g.embed(g.param(params_[idx_.word]), word_idx, word_dst, total));
      x = g.add(x, g.embed(g.param(params_[idx_.text_pos]), pos_idx, word_dst, total));
    }
    if (any_override) x = g.add(x, g.constant(std::move(override_rows)));

    if (trace) {
      const auto& X = g.value(x);
      trace->entity_count = rows[0].n_ent;
      trace->text_offset = rows[0].text();
      trace->text_length = rows[0].n_text;
      trace->proprio_row = rows[0].proprio();
      trace->query_row = rows[0].query();
      trace->text_embedding = Tensor<T>({rows[0].n_text, d});
      for (std::size_t i = 0; i < rows[0].n_text; ++i)
        for (std::size_t j = 0; j < d; ++j) trace->text_embedding(i, j) = X(rows[0].text() + i, j);
      trace->text_hidden = Tensor<T>({static_cast<std::size_t>(L - 1), rows[0].n_text, d});
      trace->hidden.clear();
    }

    for (int l = 1; l <= L; ++l) {
      const auto& P = layer_idx_[static_cast<std::size_t>(l - 1)];
      Var a = g.layernorm(x, g.param(params_[P.ln1_g]), g.param(params_[P.ln1_b]));
      Var q = g.add_row(g.matmul(a, g.param(params_[P.wq])), g.param(params_[P.bq]));
      Var k = g.add_row(g.matmul(a, g.param(params_[P.wk])), g.param(params_[P.bk]));
      Var v = g.add_row(g.matmul(a, g.param(params_[P.wv])), g.param(params_[P.bv]));
      Var att = g.attention(q, k, v, static_cast<std::size_t>(config_.n_heads),
                            l <= config_.text_encoder_layers ? encoder_layout : layout);
      x = g.add(x, g.add_row(g.matmul(att, g.param(params_[P.wo])), g.param(params_[P.bo])));
      Var m = g.layernorm(x, g.param(params_[P.ln2_g]), g.param(params_[P.ln2_b]));
      Var h = g.gelu(g.add_row(g.matmul(m, g.param(params_[P.w1])), g.param(params_[P.b1])));
      x = g.add(x, g.add_row(g.matmul(h, g.param(params_[P.w2])), g.param(params_[P.b2])));

      if (l <= L - 1) {
        bool any = false;
        Tensor<T> edit({total, d});
        for (std::size_t b = 0; b < batch.size(); ++b) {
          const HookSet<T>* hs = b < hooks.size() ? hooks[b] : nullptr;
          if (!hs || hs->layers() == 0) continue;
          if (hs->layers() != L - 1)
            throw InterventionError("hook set covers " + std::to_string(hs->layers()) + " layers, model exposes " +
                                    std::to_string(L - 1));
          for (const auto& e : hs->at(l)) {
            if (e.rank() != 2 || e.dim(0) != rows[b].n_text || e.dim(1) != d)
              throw InterventionError("hook edit at layer " + std::to_string(l) + " has shape " +
                                      shape_str(e.shape()) + ", expected (" + std::to_string(rows[b].n_text) + "," +
                                      std::to_string(d) + ")");
            any = true;
          }
        }
        if (any) {
          // apply each edit as its own addition so +D then -D composes exactly
          std::size_t max_edits = 0;
          for (std::size_t b = 0; b < batch.size(); ++b)
            if (b < hooks.size() && hooks[b] && hooks[b]->layers()) max_edits = std::max(max_edits, hooks[b]->at(l).size());
          for (std::size_t e = 0; e < max_edits; ++e) {
            edit.fill(T{});
            for (std::size_t b = 0; b < batch.size(); ++b) {
              const HookSet<T>* hs = b < hooks.size() ? hooks[b] : nullptr;
              if (!hs || !hs->layers() || e >= hs->at(l).size()) continue;
              const auto& E = hs->at(l)[e];
              for (std::size_t i = 0; i < rows[b].n_text; ++i)
                for (std::size_t j = 0; j < d; ++j) edit(rows[b].text() + i, j) = E(i, j);
            }
            x = g.add(x, g.constant(edit));
          }
        }
        if (trace) {
          const auto& X = g.value(x);
          for (std::size_t i = 0; i < rows[0].n_text; ++i)
            for (std::size_t j = 0; j < d; ++j)
              trace->text_hidden.at3(static_cast<std::size_t>(l - 1), i, j) = X(rows[0].text() + i, j);
          trace->hidden.push_back(X);
        }
      }
    }

    Var fq = g.gather_rows(x, query_rows);
    fq = g.layernorm(fq, g.param(params_[idx_.lnf_g]), g.param(params_[idx_.lnf_b]));
    return g.add_row(g.matmul(fq, g.param(params_[idx_.head_w])), g.param(params_[idx_.head_b]));
  }

 private:
  struct LayerParams {
    std::size_t ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
  };
  struct Indices {
    std::size_t word, text_pos, entity, pos_x, pos_y, proprio_w, proprio_b, query, lnf_g, lnf_b, head_w, head_b;
  };

  void check_text(std::size_t n) const {
    if (static_cast<int>(n) > config_.max_text)
      throw ConfigError("prompt has " + std::to_string(n) + " tokens; model supports " +
                        std::to_string(config_.max_text));
  }

  typename Graph<T>::Var entity_embeddings(Graph<T>& g, std::span<const ObservationTokens> obs,
                                           const std::vector<std::vector<std::size_t>>& ent_rows, std::size_t total) {
    std::vector<std::size_t> types, xs, ys, dst;
    for (std::size_t b = 0; b < obs.size(); ++b) {
      for (std::size_t i = 0; i < obs[b].entity_count(); ++i) {
        const Cell c = obs[b].cells[i];
        if (c.x < 0 || c.y < 0 || c.x >= config_.grid_size || c.y >= config_.grid_size)
          throw ConfigError("entity cell outside model grid");
        types.push_back(obs[b].entity_types[i]);
        xs.push_back(static_cast<std::size_t>(c.x));
        ys.push_back(static_cast<std::size_t>(c.y));
        dst.push_back(ent_rows[b][i]);
      }
    }
    auto x = g.embed(g.param(params_[idx_.entity]), types, dst, total);
    x = g.add(x, g.embed(g.param(params_[idx_.pos_x]), xs, dst, total));
    return g.add(x, g.embed(g.param(params_[idx_.pos_y]), ys, dst, total));
  }

  // proprio token = [onehot(x); onehot(y); holding] @ W + b
  typename Graph<T>::Var proprio_embeddings(Graph<T>& g, std::span<const ObservationTokens> obs,
                                            const std::vector<std::size_t>& dst_rows, std::size_t total) {
    const std::size_t gs = static_cast<std::size_t>(config_.grid_size);
    Tensor<T> feats({obs.size(), 2 * gs + 1});
    for (std::size_t b = 0; b < obs.size(); ++b) {
      const Cell c = obs[b].gripper;
      if (c.x < 0 || c.y < 0 || c.x >= config_.grid_size || c.y >= config_.grid_size)
        throw ConfigError("gripper cell outside model grid");
      feats(b, static_cast<std::size_t>(c.x)) = T{1};
      feats(b, gs + static_cast<std::size_t>(c.y)) = T{1};
      feats(b, 2 * gs) = obs[b].holding ? T{1} : T{0};
    }
    auto p = g.add_row(g.matmul(g.constant(std::move(feats)), g.param(params_[idx_.proprio_w])),
                       g.param(params_[idx_.proprio_b]));
    return g.scatter_rows(p, dst_rows, total);
  }

  std::size_t add_uniform(const std::string& name, Shape shape, double bound) {
    Rng rng = Rng(config_.seed).split(name);
    Tensor<T> t(std::move(shape));
    for (auto& v : t.vec()) v = static_cast<T>(rng.uniform(-bound, bound));
    return params_.add(name, std::move(t));
  }

  std::size_t add_const(const std::string& name, Shape shape, T value) {
    return params_.add(name, Tensor<T>(std::move(shape), value));
  }

  void build_parameters() {
    const std::size_t d = static_cast<std::size_t>(config_.d_model);
    const std::size_t hidden = d * static_cast<std::size_t>(config_.mlp_ratio);
    const std::size_t gs = static_cast<std::size_t>(config_.grid_size);
    const double emb = 1.0 / std::sqrt(static_cast<double>(d));
    idx_.word = add_uniform("word_embedding", {vocab_.size(), d}, emb);
    // PAD is never fed to the model; a zero row keeps it out of unembedding.
    for (std::size_t j = 0; j < d; ++j) params_[idx_.word].value(Vocabulary::kPad, j) = T{};
    idx_.text_pos = add_uniform("text_position", {static_cast<std::size_t>(config_.max_text), d}, emb);
    idx_.entity = add_uniform("entity_type", {words::entity_names().size(), d}, emb);
    idx_.pos_x = add_uniform("position_x", {gs, d}, emb);
    idx_.pos_y = add_uniform("position_y", {gs, d}, emb);
    idx_.proprio_w = add_uniform("proprio.weight", {2 * gs + 1, d}, 1.0 / std::sqrt(2.0 * gs + 1.0));
    idx_.proprio_b = add_const("proprio.bias", {1, d}, T{});
    idx_.query = add_uniform("action_query", {1, d}, emb);
    const double fan_d = 1.0 / std::sqrt(static_cast<double>(d));
    const double fan_h = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (int l = 1; l <= config_.n_layers; ++l) {
      const std::string p = "layer" + std::to_string(l) + ".";
      LayerParams lp;
      lp.ln1_g = add_const(p + "ln1.gain", {1, d}, T{1});
      lp.ln1_b = add_const(p + "ln1.bias", {1, d}, T{});
      lp.wq = add_uniform(p + "attn.wq", {d, d}, fan_d);
      lp.bq = add_const(p + "attn.bq", {1, d}, T{});
      lp.wk = add_uniform(p + "attn.wk", {d, d}, fan_d);
      lp.bk = add_const(p + "attn.bk", {1, d}, T{});
      lp.wv = add_uniform(p + "attn.wv", {d, d}, fan_d);
      lp.bv = add_const(p + "attn.bv", {1, d}, T{});
      lp.wo = add_uniform(p + "attn.wo", {d, d}, fan_d);
      lp.bo = add_const(p + "attn.bo", {1, d}, T{});
      lp.ln2_g = add_const(p + "ln2.gain", {1, d}, T{1});
      lp.ln2_b = add_const(p + "ln2.bias", {1, d}, T{});
      lp.w1 = add_uniform(p + "mlp.w1", {d, hidden}, fan_d);
      lp.b1 = add_const(p + "mlp.b1", {1, hidden}, T{});
      lp.w2 = add_uniform(p + "mlp.w2", {hidden, d}, fan_h);
      lp.b2 = add_const(p + "mlp.b2", {1, d}, T{});
      layer_idx_.push_back(lp);
    }
    idx_.lnf_g = add_const("final_ln.gain", {1, d}, T{1});
    idx_.lnf_b = add_const("final_ln.bias", {1, d}, T{});
    // small readout so the untrained policy starts near uniform
    idx_.head_w = add_uniform("head.weight", {d, kActionCount}, 0.1 * fan_d);
    idx_.head_b = add_const("head.bias", {1, kActionCount}, T{});
  }

  ModelConfig config_;
  Vocabulary vocab_;
  ParameterSet<T> params_;
  Indices idx_{};
  std::vector<LayerParams> layer_idx_;
};

/// Copy of a model in another scalar type (e.g. a 64-bit twin for checks).
template <class U, class T>
PolicyModel<U> convert_model(const PolicyModel<T>& m) {
  PolicyModel<U> out(m.config(), m.vocab());
  for (std::size_t i = 0; i < m.parameters().size(); ++i)
    out.parameters()[i].value = m.parameters()[i].value.template cast<U>();
  return out;
}

}  // namespace latentlab
