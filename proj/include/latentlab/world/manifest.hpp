#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "latentlab/core/error.hpp"
#include "latentlab/core/hash.hpp"
#include "latentlab/core/io.hpp"
#include "latentlab/world/suite.hpp"

namespace latentlab {

using Json = nlohmann::ordered_json;

inline constexpr int kSuiteFormatVersion = 1;

inline Json to_json(const WorldState& s) {
  Json j;
  j["grid_size"] = s.grid_size;
  j["gripper"] = {{"x", s.gripper.pos.x}, {"y", s.gripper.pos.y}};
  j["gripper"]["held"] = s.gripper.held ? Json(*s.gripper.held) : Json(nullptr);
  j["objects"] = Json::array();
  for (const auto& o : s.objects) j["objects"].push_back({{"id", o.id}, {"name", o.name}, {"x", o.pos.x}, {"y", o.pos.y}});
  j["destinations"] = Json::array();
  for (const auto& d : s.destinations)
    j["destinations"].push_back({{"id", d.id},
                                 {"name", d.name},
                                 {"x", d.region.origin.x},
                                 {"y", d.region.origin.y},
                                 {"w", d.region.width},
                                 {"h", d.region.height}});
  j["step_count"] = s.step_count;
  return j;
}

inline WorldState world_from_json(const Json& j) {
  try {
    WorldState s;
    s.grid_size = j.at("grid_size").get<int>();
    s.gripper.pos = {j.at("gripper").at("x").get<int>(), j.at("gripper").at("y").get<int>()};
    if (j.at("gripper").contains("held") && !j.at("gripper").at("held").is_null())
      s.gripper.held = j.at("gripper").at("held").get<int>();
    for (const auto& o : j.at("objects"))
      s.objects.push_back({o.at("id").get<int>(), o.at("name").get<std::string>(), {o.at("x").get<int>(), o.at("y").get<int>()}});
    for (const auto& d : j.at("destinations"))
      s.destinations.push_back({d.at("id").get<int>(),
                                d.at("name").get<std::string>(),
                                {{d.at("x").get<int>(), d.at("y").get<int>()}, d.at("w").get<int>(), d.at("h").get<int>()}});
    s.step_count = j.value("step_count", 0);
    validate(s);
    return s;
  } catch (const Json::exception& e) {
    throw LoadError(std::string("malformed world state: ") + e.what());
  }
}

inline Json to_json(const TaskSpec& t) {
  Json j;
  j["task_id"] = t.task_id;
  j["prompt"] = t.prompt;
  j["suite_tag"] = tag_name(t.tag);
  j["family"] = t.family;
  j["object_phrase_len"] = t.object_phrase_len;
  j["parents"] = t.parents;
  j["object_swap"] = t.object_swap;
  j["lambda_override"] = t.lambda_override ? Json(*t.lambda_override) : Json(nullptr);
  j["goal"] = {{"object_id", t.goal.object_id}, {"destination_id", t.goal.destination_id}};
  j["grasp"] = {t.grasp_location().x, t.grasp_location().y};
  j["place"] = {t.place_location().x, t.place_location().y};
  j["layout"] = to_json(t.initial_layout);
  return j;
}

inline TaskSpec task_from_json(const Json& j) {
  try {
    TaskSpec t;
    t.task_id = j.at("task_id").get<std::string>();
    t.prompt = j.at("prompt").get<std::string>();
    t.tag = parse_tag(j.at("suite_tag").get<std::string>());
    t.family = j.at("family").get<std::string>();
    t.object_phrase_len = j.at("object_phrase_len").get<int>();
    t.parents = j.value("parents", std::vector<std::string>{});
    t.object_swap = j.value("object_swap", false);
    if (j.contains("lambda_override") && !j.at("lambda_override").is_null())
      t.lambda_override = j.at("lambda_override").get<int>();
    t.goal = {j.at("goal").at("object_id").get<int>(), j.at("goal").at("destination_id").get<int>()};
    t.initial_layout = world_from_json(j.at("layout"));
    (void)t.initial_layout.object(t.goal.object_id);
    (void)t.initial_layout.destination(t.goal.destination_id);
    return t;
  } catch (const Json::exception& e) {
    throw LoadError(std::string("malformed task record: ") + e.what());
  }
}

/// Suite manifest. `extra` carries provenance (run config, seed) written by callers.
inline Json to_json(const TaskSuite& s, const Json& extra = Json::object()) {
  Json j;
  j["format"] = "latentlab-suite";
  j["version"] = kSuiteFormatVersion;
  j["name"] = s.name;
  j["archetype"] = tag_name(s.tag);
  j["seed"] = s.seed;
  j["start_jitter"] = s.start_jitter;
  j["clusters"] = Json::array();
  for (const auto& c : s.clusters)
    j["clusters"].push_back({{"name", c.name}, {"x", c.cell.x}, {"y", c.cell.y}, {"task_ids", c.task_ids}});
  j["tasks"] = Json::array();
  for (const auto& t : s.tasks) j["tasks"].push_back(to_json(t));
  if (!extra.empty()) j["provenance"] = extra;
  return j;
}

inline TaskSuite suite_from_json(const Json& j) {
  try {
    if (j.value("format", "") != "latentlab-suite") throw LoadError("not a suite manifest");
    if (j.at("version").get<int>() != kSuiteFormatVersion) throw LoadError("unsupported suite manifest version");
    TaskSuite s;
    s.name = j.at("name").get<std::string>();
    s.tag = parse_tag(j.at("archetype").get<std::string>());
    s.seed = j.at("seed").get<std::uint64_t>();
    s.start_jitter = j.value("start_jitter", 1);
    for (const auto& c : j.value("clusters", Json::array()))
      s.clusters.push_back({c.at("name").get<std::string>(),
                            {c.at("x").get<int>(), c.at("y").get<int>()},
                            c.at("task_ids").get<std::vector<std::string>>()});
    for (const auto& t : j.at("tasks")) s.tasks.push_back(task_from_json(t));
    return s;
  } catch (const Json::exception& e) {
    throw LoadError(std::string("malformed suite manifest: ") + e.what());
  }
}

inline void save_suite(const TaskSuite& s, const std::filesystem::path& path, const Json& extra = Json::object()) {
  write_text_file(path, to_json(s, extra).dump(2) + "\n");
}

inline TaskSuite load_suite(const std::filesystem::path& path) {
  try {
    return suite_from_json(Json::parse(read_text_file(path)));
  } catch (const Json::parse_error& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

/// Content fingerprint of a suite (independent of provenance fields).
inline std::string suite_fingerprint(const TaskSuite& s) { return Fnv1a().str(to_json(s).dump()).hex(); }

/// One JSON line per executed step: state snapshot, action, alpha and mode.
inline std::string episode_trace_jsonl(const Episode& ep, int run = 0) {
  std::string out;
  for (std::size_t i = 0; i < ep.steps.size(); ++i) {
    const auto& st = ep.steps[i];
    Json j;
    j["task_id"] = ep.task_id;
    j["run"] = run;
    j["step"] = i;
    j["mode"] = ep.mode;
    j["alpha"] = st.alpha;
    j["action"] = std::string(action_name(st.action));
    j["state"] = to_json(st.state);
    out += j.dump() + "\n";
  }
  Json end;
  end["task_id"] = ep.task_id;
  end["run"] = run;
  end["step"] = ep.steps.size();
  end["mode"] = ep.mode;
  end["final"] = true;
  end["success"] = ep.success;
  end["state"] = to_json(ep.final_state);
  out += end.dump() + "\n";
  return out;
}

}  // namespace latentlab
