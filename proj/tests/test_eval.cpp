#include <gtest/gtest.h>

#include "latentlab/eval/report.hpp"
#include "latentlab/latent/latent.hpp"
#include "latentlab/training/demos.hpp"

using namespace latentlab;

namespace {

Episode path(std::vector<Cell> cells, std::vector<Action> actions) {
  Episode ep;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    WorldState s;
    s.grid_size = 8;
    s.gripper.pos = cells[i];
    ep.steps.push_back({s, actions[i], 0.0});
  }
  ep.final_state = ep.steps.back().state;
  return ep;
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.d_model = 16;
  c.n_layers = 3;
  c.n_heads = 2;
  c.seed = 3;
  return c;
}

}  // namespace

TEST(Classify, FirstPickDecides) {
  const Cell trained{5, 5}, current{2, 5};
  auto ep = path({{2, 2}, {2, 3}, {2, 4}, {2, 5}}, {Action::Up, Action::Up, Action::Up, Action::Pick});
  // (2,4) is adjacent to current before the pick
  EXPECT_EQ(classify_first_approach(ep, trained, current), Approach::CurrentLocation);
  auto picked = path({{5, 5}}, {Action::Pick});
  EXPECT_EQ(classify_first_approach(picked, trained, current), Approach::TrainedLocation);
  auto stray = path({{0, 0}}, {Action::Pick});
  EXPECT_EQ(classify_first_approach(stray, trained, current), Approach::Neither);
}

TEST(Classify, ProximityWithoutPick) {
  const Cell trained{6, 2}, current{2, 2};
  auto ep = path({{4, 0}, {5, 0}, {5, 1}, {5, 2}}, {Action::Right, Action::Up, Action::Up, Action::Right});
  EXPECT_EQ(classify_first_approach(ep, trained, current), Approach::TrainedLocation);
  // equidistant cell counts as neither
  auto mid = path({{4, 0}, {4, 1}, {4, 2}}, {Action::Up, Action::Up, Action::Up});
  EXPECT_EQ(classify_first_approach(mid, Cell{5, 2}, Cell{3, 2}), Approach::Neither);
  // the start state alone does not decide
  auto start = path({{2, 3}, {2, 4}}, {Action::Up, Action::Up});
  start.final_state.gripper.pos = {2, 5};
  EXPECT_EQ(classify_first_approach(start, trained, current), Approach::Neither);
  Episode empty;
  EXPECT_EQ(classify_first_approach(empty, trained, current), Approach::Neither);
}

TEST(Diagnostic, Fractions) {
  OverfitDiagnostic d;
  d.records = {{"a", 0, Approach::TrainedLocation, false},
               {"a", 1, Approach::TrainedLocation, false},
               {"b", 0, Approach::CurrentLocation, true},
               {"b", 1, Approach::Neither, false}};
  EXPECT_DOUBLE_EQ(d.fraction(Approach::TrainedLocation), 0.5);
  EXPECT_EQ(d.count(Approach::Neither), 1);
  EXPECT_DOUBLE_EQ(OverfitDiagnostic{}.fraction(Approach::Neither), 0.0);
  EXPECT_EQ(diagnostic_csv(d, {"m", "l", "c", 4}),
            "# model=m latents=l config=c seed=4\ntask_id,run,classification,success\n"
            "a,0,trained-location,0\na,1,trained-location,0\nb,0,current-location,1\nb,1,neither,0\n");
}

TEST(Pgm, MatchesHandRenderedBytes) {
  ScoreGrid g{2, 3, {0.0, 1.0, 0.5, 0.25}};  // (0,0)=0 (1,0)=1 (0,1)=.5 (1,1)=.25
  const std::string header = "P5\n# latentlab attribution t=3\n4 4\n255\n";
  // top rows are y=1: 128 128 64 64; bottom rows y=0: 0 0 255 255
  const unsigned char top[] = {128, 128, 64, 64}, bottom[] = {0, 0, 255, 255};
  std::string body;
  for (int r = 0; r < 2; ++r) body.append(reinterpret_cast<const char*>(top), 4);
  for (int r = 0; r < 2; ++r) body.append(reinterpret_cast<const char*>(bottom), 4);
  EXPECT_EQ(render_pgm(g, 2), header + body);
  const std::string stamped = stamped_pgm(g, {"m", "l", "c", 1});
  EXPECT_EQ(stamped.substr(0, 3), "P5\n");
  EXPECT_NE(stamped.find("# model=m"), std::string::npos);
  EXPECT_EQ(stamped.substr(stamped.size() - 16), render_pgm(g, 16).substr(render_pgm(g, 16).size() - 16));
}

TEST(Csv, ResultsSkipErroredJobs) {
  EvalReport ok{"goal", "original", {{"goal-000", 10, 7}, {"goal-001", 10, 10}}, 17, 20, "", {}};
  EvalReport bad{"goal", "tli", {}, 0, 0, "no latent", {}};
  EXPECT_EQ(results_csv({ok, bad}, {"m", "l", "c", 9}),
            "# model=m latents=l config=c seed=9\nsuite,task_id,method,runs,successes,rate\n"
            "goal,goal-000,original,10,7,0.7000\ngoal,goal-001,original,10,10,1.0000\n");
  AblationCurve c;
  c.per_layer.push_back({1, {"ood", "tli_layer1", {}, 3, 4, "", {}}});
  c.all_layers = {"ood", "tli", {}, 4, 4, "", {}};
  EXPECT_EQ(ablation_csv(c, {"m", "l", "c", 9}),
            "# model=m latents=l config=c seed=9\nlayer,successes,episodes,rate\n1,3,4,0.7500\nall,4,4,1.0000\n");
}

TEST(Methods, NamesRoundTrip) {
  for (Method m : {Method::Original, Method::MaskPrompt, Method::BlankPrompt, Method::BlankPlusLatent, Method::TLI,
                   Method::TEI_TLI, Method::TLI_blank, Method::PromptSwitch, Method::Vanilla})
    EXPECT_EQ(parse_method(method_name(m)), m);
  EXPECT_THROW(parse_method("bogus"), UsageError);
}

TEST(RunJob, MissingLatentIsReportedAndOthersStillRun) {
  auto s = generate_suite(SuiteTag::Goal, 7, 2);
  PolicyModel<float> m(tiny_config(), Vocabulary());
  LatentStore empty;
  EvalContext ctx;
  ctx.model = &m;
  ctx.latents = &empty;
  ctx.rollout.max_steps = 5;
  auto reps = run_matrix(ctx, {{&s, Method::BlankPlusLatent, 0, 2, 1}, {&s, Method::Original, 0, 2, 1}});
  ASSERT_EQ(reps.size(), 2u);
  EXPECT_FALSE(reps[0].ok());
  EXPECT_NE(reps[0].error.find("no latent"), std::string::npos);
  EXPECT_TRUE(reps[1].ok());
  EXPECT_EQ(reps[1].episodes, 4);
  auto missing = run_job(ctx, {&s, Method::ExplicitPrompt, 0, 1, 1});
  EXPECT_FALSE(missing.ok());
}

TEST(RunJob, CountsMatchIndividualRollouts) {
  auto s = generate_suite(SuiteTag::Goal, 7, 3);
  PolicyModel<float> m(tiny_config(), Vocabulary());
  EvalContext ctx;
  ctx.model = &m;
  ctx.rollout.max_steps = 20;
  ctx.workers = 3;
  auto rep = run_job(ctx, {&s, Method::Original, 0, 3, 11});
  int total = 0;
  for (std::size_t ti = 0; ti < s.tasks.size(); ++ti) {
    int n = 0;
    RolloutOptions opt = ctx.rollout;
    opt.start_jitter = s.start_jitter;
    for (int r = 0; r < 3; ++r) n += rollout(m, s.tasks[ti], nullptr, 11, r, opt).success ? 1 : 0;
    EXPECT_EQ(rep.tasks[ti].successes, n);
    total += n;
  }
  EXPECT_EQ(rep.successes, total);
  EXPECT_EQ(rep.episodes, 9);
}

TEST(Displace, MovesTargetsAndRejectsBadOffsets) {
  auto s = generate_suite(SuiteTag::Object, 7, 10);
  auto moved = displace_targets(s, {-3, 0});
  for (std::size_t i = 0; i < s.tasks.size(); ++i) {
    EXPECT_EQ(moved.tasks[i].grasp_location().x, s.tasks[i].grasp_location().x - 3);
    EXPECT_EQ(moved.tasks[i].grasp_location().y, s.tasks[i].grasp_location().y);
  }
  EXPECT_THROW(displace_targets(s, {-100, 0}), ConfigError);
  EXPECT_THROW(displace_targets(s, {0, 0}), ConfigError);
}

TEST(Displace, OracleAlwaysApproachesCurrentLocation) {
  auto s = generate_suite(SuiteTag::Object, 7, 10);
  PolicyModel<float> m(tiny_config(), Vocabulary());
  EvalContext ctx;
  ctx.model = &m;
  ctx.rollout.max_steps = 60;
  auto res = ood_position_eval(ctx, s, {-3, 0}, 2, 5);
  EXPECT_EQ(res.oracle.records.size(), 20u);
  EXPECT_DOUBLE_EQ(res.oracle.fraction(Approach::CurrentLocation), 1.0);
  for (const auto& r : res.oracle.records) EXPECT_TRUE(r.success);
  EXPECT_EQ(res.policy.records.size(), 20u);
}

TEST(TwoPrompt, EveryTaskUsesItsClusterPrompt) {
  auto s = generate_suite(SuiteTag::Object, 7, 10);
  PolicyModel<float> m(tiny_config(), Vocabulary());
  EvalContext ctx;
  ctx.model = &m;
  ctx.rollout.max_steps = 4;
  auto res = two_prompt_eval(ctx, s, 1, 5);
  int runs = 0;
  for (std::size_t i = 0; i < res.clusters.size(); ++i) {
    runs += res.clusters[i].runs;
    EXPECT_EQ(res.clusters[i].canonical_prompt, s.task(s.clusters[i].task_ids.front()).prompt);
  }
  EXPECT_EQ(runs, 10);
  EXPECT_EQ(res.report.episodes, 10);
  auto goal = generate_suite(SuiteTag::Goal, 7, 2);
  EXPECT_THROW(two_prompt_eval(ctx, goal, 1, 5), ConfigError);
}

TEST(Attribution, ScoresAreNormalisedAndPainted) {
  auto s = generate_suite(SuiteTag::Goal, 7, 1);
  const auto& t = s.tasks[0];
  PolicyModel<double> m(tiny_config(), Vocabulary());
  auto demo = oracle_episode(t, t.initial_layout, 60);
  auto lat = extract_latent(m, t, {demo});
  auto grids = attribution_heatmap(m, t, lat, demo, {0, 1});
  ASSERT_EQ(grids.size(), 2u);
  for (const auto& g : grids) {
    double hi = 0;
    for (double v : g.cells) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
      hi = std::max(hi, v);
    }
    EXPECT_DOUBLE_EQ(hi, 1.0);
  }
  EXPECT_THROW(attribution_heatmap(m, t, lat, demo, {static_cast<int>(demo.steps.size())}), ConfigError);
}
