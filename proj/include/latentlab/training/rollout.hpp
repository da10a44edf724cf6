#pragma once

#include <optional>

#include "latentlab/model/policy.hpp"
#include "latentlab/steer/steer.hpp"
#include "latentlab/training/demos.hpp"
#include "latentlab/world/suite.hpp"

namespace latentlab {

struct RolloutOptions {
  int max_steps = kDefaultMaxSteps;
  int start_jitter = 1;
};

/// Greedy closed-loop execution of one task from a given start state, with an
/// optional intervention applied at every step.
template <class T>
Episode rollout_from(const PolicyModel<T>& model, const TaskSpec& task, const WorldState& start,
                     const InterventionConfig* iv, int max_steps = kDefaultMaxSteps) {
  const PromptTokens prompt = model.vocab().tokenize(task.prompt);
  std::optional<Steering<T>> steer;
  if (iv) steer.emplace(model, *iv, prompt);
  Episode ep;
  ep.task_id = task.task_id;
  ep.mode = iv ? mode_name(iv->mode) : "none";
  WorldState s = start;
  for (int i = 0; i < max_steps && !goal_satisfied(s, task.goal); ++i) {
    PolicyInput<T> in;
    in.observation = observe(s, model.config());
    double a = 0;
    Action act;
    if (steer) {
      SteeringStep<T> st = steer->at(i);
      in.prompt = std::move(st.prompt);
      in.text_override = std::move(st.text_override);
      a = st.alpha;
      act = model.greedy_action(model.forward(in, &st.hooks));
    } else {
      in.prompt = prompt;
      act = model.greedy_action(model.forward(in));
    }
    ep.steps.push_back({s, act, a});
    s = step(s, act);
  }
  ep.final_state = s;
  ep.success = goal_satisfied(s, task.goal);
  return ep;
}

/// Run `run` of a task: the start state is derived from (seed, task, run).
template <class T>
Episode rollout(const PolicyModel<T>& model, const TaskSpec& task, const InterventionConfig* iv, std::uint64_t seed,
                std::uint64_t run = 0, const RolloutOptions& opt = {}) {
  return rollout_from(model, task, start_state(task, opt.start_jitter, seed, run), iv, opt.max_steps);
}

}  // namespace latentlab
