#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "latentlab/model/checkpoint.hpp"
#include "latentlab/model/policy.hpp"
#include "latentlab/model/unembed.hpp"
#include "latentlab/model/vocab.hpp"
#include "latentlab/world/suite.hpp"

using namespace latentlab;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.d_model = 16;
  c.n_layers = 3;
  c.n_heads = 2;
  c.seed = 5;
  return c;
}

const TaskSpec& goal_task() {
  static const TaskSuite s = generate_suite(SuiteTag::Goal, 7, 3);
  return s.tasks[0];
}

template <class T>
PolicyInput<T> input_for(const PolicyModel<T>& m, const WorldState& s, const std::string& prompt) {
  return {observe(s, m.config()), m.vocab().tokenize(prompt), std::nullopt};
}

fs::path temp_path(const std::string& name) {
  auto p = fs::temp_directory_path() / ("latentlab_test_" + std::to_string(::getpid()) + "_" + name);
  fs::remove(p);
  return p;
}

}  // namespace

TEST(Vocabulary, TokenizesWords) {
  Vocabulary v;
  auto p = v.tokenize("Put the BOWL on the stove");
  ASSERT_EQ(p.size(), 6u);
  EXPECT_EQ(p.ids[1], p.ids[4]);
  EXPECT_EQ(v.detokenize(p), "put the bowl on the stove");
  EXPECT_TRUE(v.tokenize("").empty());
  EXPECT_TRUE(v.tokenize("   ").empty());
}

TEST(Vocabulary, UnknownWordsAreListed) {
  Vocabulary v;
  try {
    v.tokenize("put the zebra on the moon");
    FAIL();
  } catch (const TokenizationError& e) {
    EXPECT_NE(std::string(e.what()).find("zebra"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("moon"), std::string::npos);
  }
}

TEST(Vocabulary, ReservedTokens) {
  Vocabulary v;
  EXPECT_EQ(v.id(Vocabulary::kPadWord), Vocabulary::kPad);
  EXPECT_EQ(v.id(Vocabulary::kBlankWord), Vocabulary::kBlank);
  EXPECT_EQ(Vocabulary::blank_prompt(4).ids, std::vector<int>(4, Vocabulary::kBlank));
  for (const auto& w : words::prompt_words()) EXPECT_GT(v.id(w), Vocabulary::kBlank);
  for (auto tag : {SuiteTag::Goal, SuiteTag::Object, SuiteTag::Spatial})
    for (const auto& t : generate_suite(tag, 3, 10).tasks) EXPECT_NO_THROW(v.tokenize(t.prompt)) << t.prompt;
}

TEST(Observation, LocalityOfTokens) {
  PolicyModel<double> m(tiny_config(), Vocabulary());
  WorldState s = goal_task().initial_layout;
  const auto base = m.encode_observation(s);
  EXPECT_EQ(base, m.encode_observation(s));
  const std::size_t n_ent = s.objects.size() + s.destinations.size();
  ASSERT_EQ(base.dim(0), n_ent + 1);

  WorldState moved = s;
  moved.objects[1].pos.x = (moved.objects[1].pos.x + 1) % s.grid_size;
  const auto mv = m.encode_observation(moved);
  for (std::size_t r = 0; r < base.dim(0); ++r) {
    bool same = true;
    for (std::size_t c = 0; c < base.dim(1); ++c) same &= base(r, c) == mv(r, c);
    EXPECT_EQ(same, r != 1) << "row " << r;
  }

  WorldState holding = s;
  holding.gripper.pos = holding.objects[0].pos;
  WorldState empty = holding;
  holding.gripper.held = holding.objects[0].id;
  const auto a = m.encode_observation(empty), b = m.encode_observation(holding);
  for (std::size_t r = 0; r < a.dim(0); ++r) {
    bool same = true;
    for (std::size_t c = 0; c < a.dim(1); ++c) same &= a(r, c) == b(r, c);
    EXPECT_EQ(same, r != a.dim(0) - 1) << "row " << r;
  }
}

TEST(Observation, EntityOverflowAndGridMismatch) {
  ModelConfig c = tiny_config();
  c.max_entities = 3;
  EXPECT_THROW(observe(goal_task().initial_layout, c), ConfigError);
  c = tiny_config();
  c.grid_size = 7;
  EXPECT_THROW(observe(goal_task().initial_layout, c), ConfigError);
}

TEST(Forward, TraceShapesAndDeterminism) {
  PolicyModel<double> m(tiny_config(), Vocabulary());
  const auto& t = goal_task();
  auto in = input_for(m, t.initial_layout, t.prompt);
  ForwardTrace<double> tr;
  auto logits = m.forward(in, nullptr, &tr);
  EXPECT_EQ(logits.size(), kActionCount);
  EXPECT_EQ(tr.text_hidden.shape(), (Shape{2, in.prompt.size(), 16}));
  EXPECT_EQ(tr.text_embedding.shape(), (Shape{in.prompt.size(), 16}));
  EXPECT_EQ(tr.text_embedding, m.text_embeddings(in.prompt));
  EXPECT_EQ(tr.hidden.size(), 2u);
  EXPECT_EQ(tr.query_row, tr.proprio_row + 1);
  EXPECT_EQ(tr.text_offset, tr.entity_count);
  EXPECT_EQ(logits, m.forward(in));
}

TEST(Forward, EncoderLayerKeepsTextAndObservationApart) {
  PolicyModel<double> m(tiny_config(), Vocabulary());
  const auto& t = goal_task();
  WorldState moved = t.initial_layout;
  moved.gripper.pos = {moved.gripper.pos.x == 0 ? 1 : 0, moved.gripper.pos.y};
  ForwardTrace<double> a, b, c;
  m.forward(input_for(m, t.initial_layout, t.prompt), nullptr, &a);
  m.forward(input_for(m, moved, t.prompt), nullptr, &b);
  auto blank = input_for(m, t.initial_layout, t.prompt);
  blank.prompt = Vocabulary::blank_prompt(blank.prompt.size());
  m.forward(blank, nullptr, &c);
  const std::size_t d = 16;
  for (std::size_t r = 0; r < a.hidden[0].dim(0); ++r) {
    const bool text = r >= a.text_offset && r < a.text_offset + a.text_length;
    for (std::size_t j = 0; j < d; ++j) {
      if (text) EXPECT_EQ(a.hidden[0](r, j), b.hidden[0](r, j));
      else EXPECT_EQ(a.hidden[0](r, j), c.hidden[0](r, j));
    }
  }
  // from layer 2 on, text positions read the observation
  EXPECT_NE(a.hidden[1](a.text_offset, 0), b.hidden[1](a.text_offset, 0));
}

TEST(Forward, MaskedPromptRuns) {
  PolicyModel<double> m(tiny_config(), Vocabulary());
  PolicyInput<double> in{observe(goal_task().initial_layout, m.config()), {}, std::nullopt};
  ForwardTrace<double> tr;
  auto logits = m.forward(in, nullptr, &tr);
  for (double x : logits.vec()) EXPECT_TRUE(std::isfinite(x));
  EXPECT_EQ(tr.text_hidden.dim(1), 0u);
}

TEST(Forward, TextOverrideEqualsPromptEmbedding) {
  PolicyModel<double> m(tiny_config(), Vocabulary());
  const auto& t = goal_task();
  auto in = input_for(m, t.initial_layout, t.prompt);
  auto ov = in;
  ov.text_override = m.text_embeddings(in.prompt);
  EXPECT_EQ(m.forward(in), m.forward(ov));
}

TEST(Hooks, ZeroEditIsBitwiseIdentity) {
  PolicyModel<double> m(tiny_config(), Vocabulary());
  const auto& t = goal_task();
  auto in = input_for(m, t.initial_layout, t.prompt);
  HookSet<double> h(2);
  h.add(1, Tensor<double>({in.prompt.size(), 16}));
  h.add(2, Tensor<double>({in.prompt.size(), 16}));
  EXPECT_EQ(m.forward(in, &h), m.forward(in));
}

TEST(Hooks, PlusMinusDeltaCancels) {
  PolicyModel<double> m(tiny_config(), Vocabulary());
  const auto& t = goal_task();
  auto in = input_for(m, t.initial_layout, t.prompt);
  Rng rng(8);
  Tensor<double> delta({in.prompt.size(), 16});
  for (auto& x : delta.vec()) x = rng.uniform(-3, 3);
  Tensor<double> neg = delta;
  for (auto& x : neg.vec()) x = -x;
  for (int layer = 1; layer <= 2; ++layer) {
    HookSet<double> one(2), both(2);
    one.add(layer, delta);
    both.add(layer, delta);
    both.add(layer, neg);
    const auto plain = m.forward(in), edited = m.forward(in, &one), undone = m.forward(in, &both);
    double moved = 0;
    for (std::size_t i = 0; i < plain.size(); ++i) {
      EXPECT_NEAR(undone[i], plain[i], 1e-9);
      moved += std::abs(edited[i] - plain[i]);
    }
    EXPECT_GT(moved, 1e-6) << "hook at layer " << layer << " had no effect";
  }
}

TEST(Hooks, TraceRecordsPostEditValues) {
  PolicyModel<double> m(tiny_config(), Vocabulary());
  const auto& t = goal_task();
  auto in = input_for(m, t.initial_layout, t.prompt);
  ForwardTrace<double> plain, edited;
  m.forward(in, nullptr, &plain);
  Tensor<double> delta({in.prompt.size(), 16}, 0.5);
  HookSet<double> h(2);
  h.add(2, delta);
  m.forward(in, &h, &edited);
  const std::size_t n = in.prompt.size() * 16;
  for (std::size_t i = 0; i < n; ++i) {
    EXPECT_EQ(edited.text_hidden[i], plain.text_hidden[i]);           // layer 1 untouched
    EXPECT_EQ(edited.text_hidden[n + i], plain.text_hidden[n + i] + 0.5);  // layer 2 edited
  }
}

TEST(Hooks, ShapeAndLayerErrors) {
  PolicyModel<double> m(tiny_config(), Vocabulary());
  const auto& t = goal_task();
  auto in = input_for(m, t.initial_layout, t.prompt);
  HookSet<double> h(2);
  EXPECT_THROW(h.add(0, Tensor<double>({1, 16})), InterventionError);
  EXPECT_THROW(h.add(3, Tensor<double>({1, 16})), InterventionError);
  h.add(1, Tensor<double>({in.prompt.size() + 1, 16}));
  EXPECT_THROW(m.forward(in, &h), InterventionError);
}

TEST(Forward, BatchedRowsMatchSingleSamples) {
  PolicyModel<float> m(tiny_config(), Vocabulary());
  const auto& t = goal_task();
  auto a = input_for(m, t.initial_layout, t.prompt);
  auto b = input_for(m, step(t.initial_layout, Action::Up), "put the mug on the rack");
  Graph<float> g(false);
  auto logits = m.build(g, {&a, &b}, {nullptr, nullptr}, nullptr);
  const auto& L = g.value(logits);
  const auto la = m.forward(a), lb = m.forward(b);
  for (std::size_t j = 0; j < kActionCount; ++j) {
    EXPECT_EQ(L(0, j), la[j]);
    EXPECT_EQ(L(1, j), lb[j]);
  }
}

TEST(Forward, InitialLossIsNearUniform) {
  PolicyModel<float> m(ModelConfig{}, Vocabulary());
  const auto& t = goal_task();
  auto in = input_for(m, t.initial_layout, t.prompt);
  Graph<float> g;
  auto loss = m.loss(g, {&in}, {Action::Up});
  EXPECT_NEAR(g.value(loss)[0], std::log(6.0), 0.1);
}

TEST(Forward, GreedyTiesGoToLowestIndex) {
  PolicyModel<double> m(tiny_config(), Vocabulary());
  EXPECT_EQ(m.greedy_action(Tensor<double>({6}, std::vector<double>{0, 2, 2, 1, 2, 0})), Action::Down);
}

TEST(Unembed, EveryTokenRoundTripsAndScaleInvariant) {
  PolicyModel<float> m(ModelConfig{}, Vocabulary());
  const auto& E = m.embedding_table();
  for (std::size_t v = 0; v < E.dim(0); ++v) {
    double norm = 0;
    for (std::size_t j = 0; j < E.dim(1); ++j) norm += double(E(v, j)) * E(v, j);
    Tensor<double> row({1, E.dim(1)}), scaled({1, E.dim(1)});
    for (std::size_t j = 0; j < E.dim(1); ++j) {
      row(0, j) = E(v, j);
      scaled(0, j) = 2.5 * E(v, j);
    }
    const int expect = norm == 0 ? Vocabulary::kPad : static_cast<int>(v);
    EXPECT_EQ(unembed(row, E).ids[0], expect) << m.vocab().token(static_cast<int>(v));
    EXPECT_EQ(unembed(scaled, E).ids[0], expect);
  }
}

TEST(Unembed, MatchesExhaustiveCosineScan) {
  PolicyModel<float> m(ModelConfig{}, Vocabulary());
  const auto& E = m.embedding_table();
  Rng rng(21);
  Tensor<double> lat({40, E.dim(1)});
  for (auto& x : lat.vec()) x = rng.uniform(-1, 1);
  const auto got = unembed(lat, E);
  for (std::size_t i = 0; i < lat.dim(0); ++i) {
    long double best = -2;
    int arg = -1;
    for (std::size_t v = 0; v < E.dim(0); ++v) {
      long double dot = 0, a = 0, b = 0;
      for (std::size_t j = 0; j < E.dim(1); ++j) {
        dot += lat(i, j) * E(v, j);
        a += lat(i, j) * lat(i, j);
        b += static_cast<long double>(E(v, j)) * E(v, j);
      }
      if (b == 0) continue;
      const long double cs = dot / std::sqrt(a * b);
      if (cs > best) best = cs, arg = static_cast<int>(v);
    }
    EXPECT_EQ(got.ids[i], arg);
  }
}

TEST(Unembed, TiesZeroRowsAndWidth) {
  Tensor<double> table({4, 2}, std::vector<double>{0, 0, 1, 0, 1, 0, 0, 1});
  EXPECT_EQ(unembed(Tensor<double>({1, 2}, std::vector<double>{3, 0}), table).ids[0], 1);
  EXPECT_EQ(unembed(Tensor<double>({1, 2}, std::vector<double>{0, 0}), table).ids[0], Vocabulary::kPad);
  EXPECT_THROW(unembed(Tensor<double>({1, 3}), table), DimensionError);
}

TEST(Checkpoint, RoundTripIsBitwise) {
  PolicyModel<float> m(tiny_config(), Vocabulary());
  const auto p = temp_path("rt.ckpt");
  save_checkpoint(m, p, {{"note", "unit"}});
  CheckpointInfo info;
  auto back = load_checkpoint<float>(p, &info);
  EXPECT_EQ(info.fingerprint, model_fingerprint(m));
  EXPECT_EQ(info.training["note"], "unit");
  EXPECT_EQ(model_fingerprint(back), model_fingerprint(m));
  const auto& t = goal_task();
  EXPECT_EQ(back.forward(input_for(back, t.initial_layout, t.prompt)), m.forward(input_for(m, t.initial_layout, t.prompt)));
  fs::remove(p);
}

TEST(Checkpoint, TruncationAndCorruptionAreLoadErrors) {
  PolicyModel<float> m(tiny_config(), Vocabulary());
  const auto p = temp_path("trunc.ckpt");
  save_checkpoint(m, p, {});
  const auto full = fs::file_size(p);
  std::string bytes;
  {
    std::ifstream in(p, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  for (std::size_t cut : {std::size_t{0}, std::size_t{5}, std::size_t{40}, static_cast<std::size_t>(full / 2), static_cast<std::size_t>(full - 1)}) {
    std::ofstream(p, std::ios::binary | std::ios::trunc).write(bytes.data(), static_cast<std::streamsize>(cut));
    EXPECT_THROW(load_checkpoint<float>(p), LoadError) << "cut at " << cut;
  }
  std::string flipped = bytes;
  flipped[flipped.size() - 20] ^= 0x40;
  std::ofstream(p, std::ios::binary | std::ios::trunc).write(flipped.data(), static_cast<std::streamsize>(flipped.size()));
  EXPECT_THROW(load_checkpoint<float>(p), LoadError);
  std::string longer = bytes + "x";
  std::ofstream(p, std::ios::binary | std::ios::trunc).write(longer.data(), static_cast<std::streamsize>(longer.size()));
  EXPECT_THROW(load_checkpoint<float>(p), LoadError);
  fs::remove(p);
}

TEST(Checkpoint, DifferentWidthIsShapeError) {
  ModelConfig c = tiny_config();
  c.d_model = 32;
  PolicyModel<float> wide(c, Vocabulary());
  const auto p = temp_path("wide.ckpt");
  save_checkpoint(wide, p, {});
  const ModelConfig expect = tiny_config();
  try {
    load_checkpoint<float>(p, nullptr, &expect);
    FAIL();
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find("d_model=32"), std::string::npos);
  }
  fs::remove(p);
}

TEST(Checkpoint, MissingFileIsLoadError) {
  EXPECT_THROW(load_checkpoint<float>(temp_path("none.ckpt")), Error);
}

TEST(ModelConfig, JsonRoundTripAndValidation) {
  ModelConfig c = tiny_config();
  auto back = model_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  c.n_heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config();
  c.n_layers = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config();
  c.text_encoder_layers = c.n_layers;
  EXPECT_THROW(c.validate(), ConfigError);
}
