#pragma once

#include <algorithm>
#include <string>
#include <vector>

namespace latentlab::words {

// Scene object pools. Every name is a single token.
inline const std::vector<std::string> kGoalObjects = {"bowl", "mug", "wine_bottle", "cheese", "kettle", "pan", "cup"};
inline const std::vector<std::string> kGoalDestinations = {"plate", "stove", "cabinet", "rack"};

inline const std::vector<std::string> kObjectSuiteObjects = {
    "cream_cheese", "alphabet_soup", "salad_dressing", "bbq_sauce", "ketchup",
    "tomato_sauce", "butter",        "milk",           "chocolate_pudding", "orange_juice"};
inline const std::vector<std::string> kObjectSuiteFillers = {"apple", "banana", "lemon"};
inline const std::string kBasket = "basket";

inline const std::string kSpatialObject = "bowl";
inline const std::vector<std::string> kSpatialLandmarks = {"cookie_box", "ramekin"};
inline const std::vector<std::string> kSpatialDestinations = {"plate", "tray", "stove"};
inline const std::vector<std::string> kRelations = {"left", "right", "top", "bottom"};

inline const std::vector<std::string> kFunctionWords = {"put", "the", "on",   "in", "pick", "up",
                                                        "and", "place", "it", "next", "to"};

/// Every noun that can appear as a scene entity, sorted and unique. Entity
/// embeddings are indexed by position in this list.
inline const std::vector<std::string>& entity_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto* pool : {&kGoalObjects, &kGoalDestinations, &kObjectSuiteObjects, &kObjectSuiteFillers,
                             &kSpatialLandmarks, &kSpatialDestinations})
      v.insert(v.end(), pool->begin(), pool->end());
    v.push_back(kBasket);
    v.push_back(kSpatialObject);
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
  }();
  return names;
}

/// The fixed prompt word list (sorted, unique).
inline const std::vector<std::string>& prompt_words() {
  static const std::vector<std::string> all = [] {
    std::vector<std::string> v = entity_names();
    v.insert(v.end(), kFunctionWords.begin(), kFunctionWords.end());
    v.insert(v.end(), kRelations.begin(), kRelations.end());
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
  }();
  return all;
}

}  // namespace latentlab::words
