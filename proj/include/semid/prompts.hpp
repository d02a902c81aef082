#pragma once

// Instruction-tuning corpora for the six index-alignment tasks, preference
// summaries, and the proportional task mixer.

#include <algorithm>
#include <array>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "semid/common.hpp"

namespace semid {

enum class TaskKind { NextItem, IndexToPref, PrefToIndex, HistoryToIndex, RatingPred, IntentItem };

inline constexpr std::array<TaskKind, 6> kAllTasks = {TaskKind::NextItem,       TaskKind::IndexToPref,
                                                      TaskKind::PrefToIndex,    TaskKind::HistoryToIndex,
                                                      TaskKind::RatingPred,     TaskKind::IntentItem};

inline std::string to_string(TaskKind t) {
  switch (t) {
    case TaskKind::NextItem: return "next_item";
    case TaskKind::IndexToPref: return "index_to_pref";
    case TaskKind::PrefToIndex: return "pref_to_index";
    case TaskKind::HistoryToIndex: return "history_to_index";
    case TaskKind::RatingPred: return "rating_pred";
    case TaskKind::IntentItem: return "intent_item";
  }
  return "?";
}

inline TaskKind parse_task(std::string_view s) {
  for (auto t : kAllTasks)
    if (to_string(t) == s) return t;
  throw UsageError("unknown task '" + std::string(s) + "'");
}

// Bumped whenever template wording changes.
inline constexpr std::string_view kPromptTemplateVersion = "v1";
inline constexpr std::size_t kMaxHistory = 20;
inline constexpr std::size_t kDefaultCandidates = 20;

struct PromptInstance {
  TaskKind task = TaskKind::NextItem;
  std::string user_id;
  std::string input;
  std::string target;
  std::size_t response_offset = 0;  // in characters; the response starts right after `input`

  bool operator==(const PromptInstance&) const = default;
};

// A..Z, then AA, AB, ...
inline std::string index_letter(std::size_t i) {
  if (i < 26) return std::string(1, static_cast<char>('A' + i));
  i -= 26;
  if (i >= 26 * 26) throw UsageError("too many candidates for letter labels");
  return {static_cast<char>('A' + i / 26), static_cast<char>('A' + i % 26)};
}

inline std::optional<std::size_t> letter_index(std::string_view s) {
  if (s.size() == 1 && s[0] >= 'A' && s[0] <= 'Z') return static_cast<std::size_t>(s[0] - 'A');
  if (s.size() == 2 && s[0] >= 'A' && s[0] <= 'Z' && s[1] >= 'A' && s[1] <= 'Z')
    return 26 + static_cast<std::size_t>(s[0] - 'A') * 26 + static_cast<std::size_t>(s[1] - 'A');
  return std::nullopt;
}

inline std::size_t utf8_length(std::string_view s) {
  std::size_t n = 0;
  for (unsigned char c : s) n += (c & 0xC0) != 0x80;
  return n;
}

// Integer ratings print as "4", half steps as "4.5".
inline std::string render_rating(double r) {
  const double twice = std::round(r * 2.0);
  if (static_cast<long long>(twice) % 2 == 0) return std::to_string(static_cast<long long>(twice / 2));
  return std::to_string(static_cast<long long>(twice) / 2) + ".5";
}

struct RatedTitle {
  std::string title;
  double rating = 0.0;  // 0 when absent
};

class PromptBuilder {
 public:
  std::size_t skipped(TaskKind t) const {
    auto it = skipped_.find(t);
    return it == skipped_.end() ? 0 : it->second;
  }
  const std::map<TaskKind, std::size_t>& skip_counts() const { return skipped_; }

  std::optional<PromptInstance> next_item(const std::string& user_id, const std::string& rendered_id,
                                          std::span<const std::string> history,
                                          std::span<const std::string> candidates,
                                          std::optional<std::size_t> gt_position) {
    if (history.empty() || candidates.empty() || !gt_position || *gt_position >= candidates.size())
      return skip(TaskKind::NextItem);
    return make(TaskKind::NextItem, user_id, next_item_question(rendered_id, history, candidates),
                index_letter(*gt_position));
  }

  // Ranking prompt without the answer scaffold; also used at inference time.
  static std::string next_item_question(const std::string& rendered_id, std::span<const std::string> history,
                                        std::span<const std::string> candidates) {
    std::string in = "User " + rendered_id + " has interacted with the following items in chronological order:\n";
    in += numbered(capped(history));
    in += "Candidate items:\n" + lettered(candidates);
    in += "Which candidate item is the user most likely to interact with next? Answer with the index letter.\n";
    return in;
  }

  std::optional<PromptInstance> index_to_pref(const std::string& user_id, const std::string& rendered_id,
                                              const std::optional<std::string>& summary) {
    if (!summary || summary->empty()) return skip(TaskKind::IndexToPref);
    std::string in = "Describe the preferences of user " + rendered_id + ".\n";
    return make(TaskKind::IndexToPref, user_id, std::move(in), *summary);
  }

  std::optional<PromptInstance> pref_to_index(const std::string& user_id, const std::string& rendered_id,
                                              const std::optional<std::string>& summary) {
    if (!summary || summary->empty()) return skip(TaskKind::PrefToIndex);
    std::string in = "Which user has the following preferences?\n" + *summary + "\n";
    return make(TaskKind::PrefToIndex, user_id, std::move(in), rendered_id);
  }

  std::optional<PromptInstance> history_to_index(const std::string& user_id, const std::string& rendered_id,
                                                 std::span<const std::string> history) {
    if (history.empty()) return skip(TaskKind::HistoryToIndex);
    std::string in = "A user has interacted with the following items in chronological order:\n";
    in += numbered(capped(history));
    in += "Which user does this history belong to?\n";
    return make(TaskKind::HistoryToIndex, user_id, std::move(in), rendered_id);
  }

  // The last entry's rating is the target and is hidden from the input.
  std::optional<PromptInstance> rating_pred(const std::string& user_id, const std::string& rendered_id,
                                            const std::optional<std::string>& summary,
                                            std::span<const RatedTitle> history) {
    if (history.empty() || history.back().rating < 1.0 || history.back().rating > 5.0)
      return skip(TaskKind::RatingPred);
    if (history.size() > kMaxHistory) history = history.subspan(history.size() - kMaxHistory);
    std::string in = "User " + rendered_id;
    if (summary && !summary->empty()) in += " has the following preferences: " + *summary + ".\nThe user";
    in += " rated the following items in chronological order:\n";
    for (std::size_t i = 0; i < history.size(); ++i) {
      in += std::to_string(i + 1) + ". " + history[i].title;
      if (i + 1 == history.size())
        in += " (rating: ?)";
      else if (history[i].rating >= 1.0)
        in += " (rating: " + render_rating(history[i].rating) + ")";
      in += '\n';
    }
    in += "Predict the user's rating of the last item on a scale of 1 to 5.\n";
    return make(TaskKind::RatingPred, user_id, std::move(in), render_rating(history.back().rating));
  }

  std::optional<PromptInstance> intent_item(const std::string& user_id, const std::optional<std::string>& summary,
                                            std::span<const std::string> candidates,
                                            std::optional<std::size_t> gt_position) {
    if (!summary || summary->empty() || candidates.empty() || !gt_position || *gt_position >= candidates.size())
      return skip(TaskKind::IntentItem);
    std::string in = "A user has the following preferences: " + *summary + ".\n";
    in += "Candidate items:\n" + lettered(candidates);
    in += "Which candidate item matches these preferences best? Answer with the index letter.\n";
    return make(TaskKind::IntentItem, user_id, std::move(in), index_letter(*gt_position));
  }

 private:
  static std::span<const std::string> capped(std::span<const std::string> history) {
    return history.size() > kMaxHistory ? history.subspan(history.size() - kMaxHistory) : history;
  }

  static std::string numbered(std::span<const std::string> titles) {
    std::string s;
    for (std::size_t i = 0; i < titles.size(); ++i) s += std::to_string(i + 1) + ". " + titles[i] + "\n";
    return s;
  }

  static std::string lettered(std::span<const std::string> titles) {
    std::string s;
    for (std::size_t i = 0; i < titles.size(); ++i) s += "(" + index_letter(i) + ") " + titles[i] + "\n";
    return s;
  }

  static PromptInstance make(TaskKind t, const std::string& user_id, std::string input, std::string target) {
    input += "Answer: ";
    PromptInstance p{t, user_id, std::move(input), std::move(target), 0};
    p.response_offset = utf8_length(p.input);
    return p;
  }

  std::nullopt_t skip(TaskKind t) {
    ++skipped_[t];
    return std::nullopt;
  }

  std::map<TaskKind, std::size_t> skipped_;
};

// --- preference summaries ----------------------------------------------------

inline constexpr std::string_view kNoPreferences = "no stated preferences";

struct PreferenceSummary {
  std::string user_id;
  std::string text;
};

class Summarizer {
 public:
  virtual ~Summarizer() = default;
  virtual std::string name() const = 0;
  virtual std::string summarize(const std::string& user_id, std::span<const std::string> reviews) = 0;
};

inline bool is_stopword(std::string_view w) {
  static const std::set<std::string_view> words = {
      "a",     "about", "after", "again",  "all",   "also",  "am",    "an",    "and",   "any",   "are",
      "as",    "at",    "be",    "been",   "but",   "by",    "can",   "could", "did",   "do",    "does",
      "for",   "from",  "get",   "got",    "had",   "has",   "have",  "he",    "her",   "him",   "his",
      "how",   "i",     "if",    "in",     "into",  "is",    "it",    "its",   "just",  "me",    "more",
      "most",  "my",    "no",    "not",    "now",   "of",    "on",    "one",   "only",  "or",    "other",
      "our",   "out",   "over",  "really", "she",   "so",    "some",  "than",  "that",  "the",   "their",
      "them",  "then",  "there", "these",  "they",  "this",  "those", "to",    "too",   "up",    "us",
      "use",   "used",  "very",  "was",    "we",    "well",  "were",  "what",  "when",  "which", "while",
      "who",   "will",  "with",  "would",  "you",   "your",  "love",  "like",  "great", "good",  "product",
      "item",  "bought", "buy",  "would",  "much",  "even",  "still", "because", "make", "makes", "way"};
  return words.contains(w);
}

// Top-m content tokens by frequency across all reviews (ties alphabetical).
class ExtractiveSummarizer final : public Summarizer {
 public:
  explicit ExtractiveSummarizer(std::size_t top_m = 12) : top_m_(top_m) {}
  std::string name() const override { return "extractive"; }

  std::string summarize(const std::string&, std::span<const std::string> reviews) override {
    std::map<std::string, std::size_t> tf;
    for (const auto& r : reviews)
      for (auto& tok : tokenize(r)) {
        if (tok.size() < 2 || is_stopword(tok)) continue;
        if (std::all_of(tok.begin(), tok.end(), [](char c) { return c >= '0' && c <= '9'; })) continue;
        ++tf[std::move(tok)];
      }
    if (tf.empty()) return std::string(kNoPreferences);
    std::vector<std::pair<std::string, std::size_t>> ranked(tf.begin(), tf.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    if (ranked.size() > top_m_) ranked.resize(top_m_);
    std::string out;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      if (i > 0) out += ", ";
      out += ranked[i].first;
    }
    return out;
  }

 private:
  std::size_t top_m_;
};

inline PreferenceSummary summarize_prefs(Summarizer& summarizer, const std::string& user_id,
                                         std::span<const std::string> reviews) {
  std::vector<std::string> nonempty;
  for (const auto& r : reviews)
    if (!r.empty()) nonempty.push_back(r);
  if (nonempty.empty()) return {user_id, std::string(kNoPreferences)};
  auto text = summarizer.summarize(user_id, nonempty);
  if (text.empty()) text = std::string(kNoPreferences);
  return {user_id, std::move(text)};
}

// Line-delimited {"user_id", "text"} records.
inline void write_summaries(std::ostream& os, const std::map<std::string, std::string>& summaries) {
  for (const auto& [u, t] : summaries)
    os << nlohmann::json{{"user_id", u}, {"text", t}}.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace)
       << '\n';
}

inline std::map<std::string, std::string> read_summaries(std::istream& is) {
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("user_id") || !j.contains("text"))
      throw DataError("summaries: malformed line");
    out[j["user_id"].get<std::string>()] = j["text"].get<std::string>();
  }
  return out;
}

// --- mixing ------------------------------------------------------------------

struct MixtureConfig {
  std::map<TaskKind, double> proportions;
  std::size_t total = 0;
  std::uint64_t seed = 0;

  static MixtureConfig uniform(std::size_t total, std::uint64_t seed) {
    MixtureConfig c{{}, total, seed};
    for (auto t : kAllTasks) c.proportions[t] = 1.0 / static_cast<double>(kAllTasks.size());
    return c;
  }
};

// Largest-remainder allocation of `total` over the proportions; equal
// remainders go to the lexicographically smaller task name.
inline std::map<TaskKind, std::size_t> allocate_counts(const MixtureConfig& cfg) {
  double sum = 0.0;
  for (const auto& [t, p] : cfg.proportions) {
    if (p < 0.0 || !std::isfinite(p)) throw UsageError("mixture: proportion for " + to_string(t) + " is invalid");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw UsageError("mixture: proportions must sum to 1");

  struct Share {
    TaskKind task;
    std::size_t base;
    double remainder;
  };
  std::vector<Share> shares;
  std::size_t assigned = 0;
  for (const auto& [t, p] : cfg.proportions) {
    const double exact = static_cast<double>(cfg.total) * p;
    const auto base = static_cast<std::size_t>(std::floor(exact));
    shares.push_back({t, base, exact - static_cast<double>(base)});
    assigned += base;
  }
  std::sort(shares.begin(), shares.end(), [](const Share& a, const Share& b) {
    if (a.remainder != b.remainder) return a.remainder > b.remainder;
    return to_string(a.task) < to_string(b.task);
  });
  for (std::size_t i = 0; assigned < cfg.total && !shares.empty(); i = (i + 1) % shares.size(), ++assigned)
    ++shares[i].base;
  std::map<TaskKind, std::size_t> out;
  for (const auto& s : shares) out[s.task] = s.base;
  return out;
}

struct MixResult {
  std::vector<PromptInstance> corpus;
  std::map<TaskKind, std::size_t> counts;
  std::vector<std::string> warnings;
};

inline MixResult mix(const std::map<TaskKind, std::vector<PromptInstance>>& per_task, const MixtureConfig& cfg) {
  MixResult out;
  const auto wanted = allocate_counts(cfg);
  std::mt19937_64 rng(cfg.seed);

  // tasks in name order so the random stream does not depend on enum layout
  std::vector<TaskKind> order(kAllTasks.begin(), kAllTasks.end());
  std::sort(order.begin(), order.end(), [](TaskKind a, TaskKind b) { return to_string(a) < to_string(b); });

  for (auto task : order) {
    auto w = wanted.find(task);
    if (w == wanted.end() || w->second == 0) continue;
    std::vector<PromptInstance> pool;
    if (auto it = per_task.find(task); it != per_task.end()) pool = it->second;
    std::stable_sort(pool.begin(), pool.end(),
                     [](const PromptInstance& a, const PromptInstance& b) { return a.user_id < b.user_id; });
    std::size_t take = w->second;
    if (take > pool.size()) {
      out.warnings.push_back("task " + to_string(task) + ": requested " + std::to_string(take) + " but only " +
                             std::to_string(pool.size()) + " available");
      take = pool.size();
    }
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(take);
    out.counts[task] = take;
    for (auto& p : pool) out.corpus.push_back(std::move(p));
  }
  std::stable_sort(out.corpus.begin(), out.corpus.end(), [](const PromptInstance& a, const PromptInstance& b) {
    const auto ta = to_string(a.task), tb = to_string(b.task);
    if (ta != tb) return ta < tb;
    return a.user_id < b.user_id;
  });
  std::shuffle(out.corpus.begin(), out.corpus.end(), rng);
  return out;
}

inline nlohmann::json to_json(const PromptInstance& p) {
  return {{"task", to_string(p.task)},
          {"user_id", p.user_id},
          {"input", p.input},
          {"target", p.target},
          {"response_offset", p.response_offset}};
}

inline void write_corpus(std::ostream& os, std::span<const PromptInstance> corpus) {
  for (const auto& p : corpus)
    os << to_json(p).dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
}

inline std::vector<PromptInstance> read_corpus(std::istream& is) {
  std::vector<PromptInstance> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw DataError("corpus: malformed line");
    PromptInstance p;
    p.task = parse_task(j.at("task").get<std::string>());
    p.user_id = j.at("user_id").get<std::string>();
    p.input = j.at("input").get<std::string>();
    p.target = j.at("target").get<std::string>();
    p.response_offset = j.at("response_offset").get<std::size_t>();
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace semid
