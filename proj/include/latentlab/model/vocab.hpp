#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <string>
#include <vector>

#include "latentlab/core/error.hpp"
#include "latentlab/world/suite.hpp"
#include "latentlab/world/words.hpp"

namespace latentlab {

/// Token ids of one prompt, in order.
struct PromptTokens {
  std::vector<int> ids;
  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
  friend bool operator==(const PromptTokens&, const PromptTokens&) = default;
};

/// Word-level vocabulary. Id 0 is PAD, id 1 is BLANK (the placeholder used
/// for prompts that carry no task information); words follow.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBlank = 1;
  static constexpr const char* kPadWord = "<pad>";
  static constexpr const char* kBlankWord = "<blank>";

  Vocabulary() : Vocabulary(words::prompt_words()) {}

  explicit Vocabulary(const std::vector<std::string>& words) {
    add(kPadWord);
    add(kBlankWord);
    for (const auto& w : words) add(w);
  }

  std::size_t size() const { return id_to_token_.size(); }
  const std::vector<std::string>& tokens() const { return id_to_token_; }

  const std::string& token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= size()) throw TokenizationError("token id out of range");
    return id_to_token_[static_cast<std::size_t>(id)];
  }

  bool contains(const std::string& w) const { return token_to_id_.count(w) > 0; }

  int id(const std::string& w) const {
    auto it = token_to_id_.find(w);
    if (it == token_to_id_.end()) throw TokenizationError("unknown word '" + w + "'");
    return it->second;
  }

  /// One token per whitespace-separated, lower-cased word.
  PromptTokens tokenize(const std::string& prompt) const {
    PromptTokens out;
    std::vector<std::string> unknown;
    for (auto w : split_words(prompt)) {
      std::transform(w.begin(), w.end(), w.begin(), [](unsigned char c) { return std::tolower(c); });
      auto it = token_to_id_.find(w);
      if (it == token_to_id_.end()) unknown.push_back(w);
      else out.ids.push_back(it->second);
    }
    if (!unknown.empty()) throw TokenizationError("unknown word(s) in prompt: " + join_words(unknown));
    return out;
  }

  std::string detokenize(const PromptTokens& p) const {
    std::vector<std::string> w;
    for (int id : p.ids) w.push_back(token(id));
    return join_words(w);
  }

  static PromptTokens blank_prompt(std::size_t n) { return {std::vector<int>(n, kBlank)}; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.id_to_token_ == b.id_to_token_; }

 private:
  void add(const std::string& w) {
    if (token_to_id_.count(w)) throw ConfigError("duplicate vocabulary entry '" + w + "'");
    token_to_id_[w] = static_cast<int>(id_to_token_.size());
    id_to_token_.push_back(w);
  }

  std::map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

}  // namespace latentlab
