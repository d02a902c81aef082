#pragma once

// Candidate retrieval, letter-verbalizer re-ranking, and token cross-entropy.

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "semid/common.hpp"

namespace semid {

// --- retrieval ---------------------------------------------------------------

class Retriever {
 public:
  virtual ~Retriever() = default;
  virtual std::string name() const = 0;
  // `history` is chronological, most recent last.
  virtual std::vector<std::string> retrieve(const std::string& user_id, std::span<const std::string> history,
                                            std::size_t top_k) = 0;
};

// score(i) = sum_j cooc(j -> i) * decay^age(j) + lambda * popularity(i)
// cooc counts adjacent training pairs; age 0 is the most recent history item.
class CoocRetriever final : public Retriever {
 public:
  CoocRetriever(const std::vector<std::vector<std::string>>& train_sequences, std::vector<std::string> catalog,
                double decay = 0.9, double lambda = 0.01)
      : catalog_(std::move(catalog)), decay_(decay), lambda_(lambda) {
    std::sort(catalog_.begin(), catalog_.end());
    catalog_.erase(std::unique(catalog_.begin(), catalog_.end()), catalog_.end());
    for (std::size_t i = 0; i < catalog_.size(); ++i) slot_[catalog_[i]] = i;
    popularity_.assign(catalog_.size(), 0.0);
    for (const auto& seq : train_sequences) {
      for (std::size_t i = 0; i < seq.size(); ++i) {
        auto it = slot_.find(seq[i]);
        if (it != slot_.end()) popularity_[it->second] += 1.0;
        if (i + 1 < seq.size()) {
          auto nx = slot_.find(seq[i + 1]);
          if (nx != slot_.end()) cooc_[seq[i]][nx->second] += 1.0;
        }
      }
    }
  }

  std::string name() const override { return "cooc"; }
  std::size_t short_lists() const { return short_lists_; }

  std::vector<std::string> retrieve(const std::string&, std::span<const std::string> history,
                                    std::size_t top_k) override {
    if (history.empty()) throw DataError("retrieve: empty history");
    std::vector<double> score(catalog_.size());
    for (std::size_t i = 0; i < score.size(); ++i) score[i] = lambda_ * popularity_[i];
    double weight = 1.0;
    for (std::size_t a = 0; a < history.size(); ++a, weight *= decay_) {
      auto it = cooc_.find(history[history.size() - 1 - a]);
      if (it == cooc_.end()) continue;
      for (const auto& [next, count] : it->second) score[next] += count * weight;
    }
    std::unordered_set<std::string> seen(history.begin(), history.end());
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < catalog_.size(); ++i)
      if (!seen.contains(catalog_[i])) pool.push_back(i);
    if (pool.size() < top_k) ++short_lists_;
    const auto k = std::min(top_k, pool.size());
    // catalog_ is sorted, so index order is item_id order
    std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k), pool.end(),
                      [&](std::size_t a, std::size_t b) { return score[a] != score[b] ? score[a] > score[b] : a < b; });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < k; ++i) out.push_back(catalog_[pool[i]]);
    return out;
  }

 private:
  std::vector<std::string> catalog_;
  std::unordered_map<std::string, std::size_t> slot_;
  std::vector<double> popularity_;
  std::unordered_map<std::string, std::map<std::size_t, double>> cooc_;
  double decay_;
  double lambda_;
  std::size_t short_lists_ = 0;
};

// user_id TAB item1,item2,...
using CandidateTable = std::map<std::string, std::vector<std::string>>;

inline void write_candidates(std::ostream& os, const CandidateTable& table) {
  for (const auto& [u, items] : table) {
    os << u << '\t';
    for (std::size_t i = 0; i < items.size(); ++i) os << (i ? "," : "") << items[i];
    os << '\n';
  }
}

inline CandidateTable read_candidates(std::istream& is) {
  CandidateTable out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError("candidates: missing tab");
    auto& items = out[line.substr(0, tab)];
    for (auto cell : split(std::string_view(line).substr(tab + 1), ','))
      if (!cell.empty()) items.emplace_back(cell);
  }
  return out;
}

// Serves externally computed candidate lists.
class FileRetriever final : public Retriever {
 public:
  explicit FileRetriever(CandidateTable table) : table_(std::move(table)) {}
  std::string name() const override { return "file"; }
  std::vector<std::string> retrieve(const std::string& user_id, std::span<const std::string>,
                                    std::size_t top_k) override {
    auto it = table_.find(user_id);
    if (it == table_.end()) throw DataError("candidate file has no entry for user '" + user_id + "'");
    auto out = it->second;
    if (out.size() > top_k) out.resize(top_k);
    return out;
  }

 private:
  CandidateTable table_;
};

// --- scoring -----------------------------------------------------------------

struct RankQuery {
  std::string user_id;
  std::string prompt;
  std::vector<std::string> history_titles;
  std::vector<std::string> candidate_ids;
  std::vector<std::string> candidate_titles;
};

// Stand-in for the language model head: one logit per candidate letter.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual std::string name() const = 0;
  virtual std::vector<double> score(const RankQuery& q) = 0;
};

// Fraction of a candidate title's tokens that occur anywhere in the history titles.
class ToyOverlapScorer final : public Scorer {
 public:
  std::string name() const override { return "toy-overlap"; }
  std::vector<double> score(const RankQuery& q) override {
    std::unordered_set<std::string> vocab;
    for (const auto& t : q.history_titles)
      for (auto& tok : tokenize(t)) vocab.insert(std::move(tok));
    std::vector<double> out;
    for (const auto& title : q.candidate_titles) {
      const auto toks = tokenize(title);
      if (toks.empty()) {
        out.push_back(0.0);
        continue;
      }
      std::size_t shared = 0;
      for (const auto& tok : toks) shared += vocab.contains(tok);
      out.push_back(static_cast<double>(shared) / static_cast<double>(toks.size()));
    }
    return out;
  }
};

// Knows the answer: 1 for the ground truth, 0 elsewhere.
class OracleScorer final : public Scorer {
 public:
  explicit OracleScorer(std::map<std::string, std::string> truth) : truth_(std::move(truth)) {}
  std::string name() const override { return "oracle"; }
  std::vector<double> score(const RankQuery& q) override {
    const auto& gt = truth_.at(q.user_id);
    std::vector<double> out;
    for (const auto& id : q.candidate_ids) out.push_back(id == gt ? 1.0 : 0.0);
    return out;
  }

 private:
  std::map<std::string, std::string> truth_;
};

// Puts the ground truth last.
class AdversarialScorer final : public Scorer {
 public:
  explicit AdversarialScorer(std::map<std::string, std::string> truth) : truth_(std::move(truth)) {}
  std::string name() const override { return "adversarial"; }
  std::vector<double> score(const RankQuery& q) override {
    const auto& gt = truth_.at(q.user_id);
    std::vector<double> out;
    for (const auto& id : q.candidate_ids) out.push_back(id == gt ? 0.0 : 1.0);
    return out;
  }

 private:
  std::map<std::string, std::string> truth_;
};

class UniformScorer final : public Scorer {
 public:
  std::string name() const override { return "uniform"; }
  std::vector<double> score(const RankQuery& q) override { return std::vector<double>(q.candidate_ids.size(), 0.0); }
};

// Per-user random logits; independent of the order users are scored in.
class RandomScorer final : public Scorer {
 public:
  explicit RandomScorer(std::uint64_t seed) : seed_(seed) {}
  std::string name() const override { return "random"; }
  std::vector<double> score(const RankQuery& q) override {
    std::mt19937_64 rng(fnv1a64(q.user_id) ^ (seed_ * 0x9e3779b97f4a7c15ULL));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> out;
    for (std::size_t i = 0; i < q.candidate_ids.size(); ++i) out.push_back(u(rng));
    return out;
  }

 private:
  std::uint64_t seed_;
};

// user_id TAB l1,l2,...
using LogitTable = std::map<std::string, std::vector<double>>;

inline LogitTable read_logits(std::istream& is) {
  LogitTable out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError("logits: missing tab");
    auto& v = out[line.substr(0, tab)];
    for (auto cell : split(std::string_view(line).substr(tab + 1), ',')) v.push_back(parse_double(cell));
  }
  return out;
}

inline void write_logits(std::ostream& os, const LogitTable& table) {
  for (const auto& [u, v] : table) {
    os << u << '\t';
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << format_double(v[i]);
    os << '\n';
  }
}

// Replays logits computed by an external model.
class FileScorer final : public Scorer {
 public:
  explicit FileScorer(LogitTable table) : table_(std::move(table)) {}
  std::string name() const override { return "file"; }
  std::vector<double> score(const RankQuery& q) override {
    auto it = table_.find(q.user_id);
    if (it == table_.end()) throw DataError("logit file has no entry for user '" + q.user_id + "'");
    return it->second;
  }

 private:
  LogitTable table_;
};

// --- verbalizer --------------------------------------------------------------

struct RankingResult {
  std::string user_id;
  std::vector<std::string> ranked;  // candidate ids, best first
  std::string gt_item;
  bool gt_in_candidates = false;
  std::optional<std::size_t> gt_rank;  // 1-based

  bool operator==(const RankingResult&) const = default;
};

// Orders candidate positions by descending logit, earlier letter first on ties.
inline std::vector<std::size_t> letter_order(std::span<const double> logits) {
  std::vector<std::size_t> order(logits.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return logits[a] > logits[b]; });
  return order;
}

// Candidate i is identified by letter i; its score is the logit of that letter.
inline RankingResult verbalize_rank(Scorer& scorer, const RankQuery& q, const std::string& gt_item) {
  const auto logits = scorer.score(q);
  if (logits.size() != q.candidate_ids.size())
    throw DataError("scorer '" + scorer.name() + "' returned " + std::to_string(logits.size()) + " logits for " +
                    std::to_string(q.candidate_ids.size()) + " candidates");
  if (!all_finite(logits)) throw DivergenceError("scorer '" + scorer.name() + "' returned a non-finite logit");

  RankingResult r;
  r.user_id = q.user_id;
  r.gt_item = gt_item;
  for (auto pos : letter_order(logits)) r.ranked.push_back(q.candidate_ids[pos]);
  for (std::size_t i = 0; i < r.ranked.size(); ++i)
    if (r.ranked[i] == gt_item) {
      r.gt_in_candidates = true;
      r.gt_rank = i + 1;
      break;
    }
  return r;
}

inline nlohmann::json to_json(const RankingResult& r) {
  nlohmann::json j{{"user_id", r.user_id}, {"ranked", r.ranked}, {"gt_item", r.gt_item},
                   {"gt_in_candidates", r.gt_in_candidates}};
  j["gt_rank"] = r.gt_rank ? nlohmann::json(*r.gt_rank) : nlohmann::json(nullptr);
  return j;
}

inline void write_rankings(std::ostream& os, std::span<const RankingResult> results) {
  for (const auto& r : results) os << to_json(r).dump() << '\n';
}

inline std::vector<RankingResult> read_rankings(std::istream& is) {
  std::vector<RankingResult> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw DataError("rankings: malformed line");
    RankingResult r;
    r.user_id = j.at("user_id").get<std::string>();
    r.ranked = j.at("ranked").get<std::vector<std::string>>();
    r.gt_item = j.at("gt_item").get<std::string>();
    r.gt_in_candidates = j.at("gt_in_candidates").get<bool>();
    if (!j.at("gt_rank").is_null()) r.gt_rank = j.at("gt_rank").get<std::size_t>();
    out.push_back(std::move(r));
  }
  return out;
}

// --- cross-entropy -----------------------------------------------------------

struct CrossEntropy {
  double value = 0.0;
  bool divergent = false;  // some target had probability zero
};

// -sum_t log p_t[target_t]
inline CrossEntropy token_cross_entropy(std::span<const std::size_t> targets, std::span<const Vec> distributions) {
  if (targets.size() != distributions.size()) throw DataError("cross-entropy: length mismatch");
  CrossEntropy ce;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const auto& p = distributions[t];
    const double s = std::accumulate(p.begin(), p.end(), 0.0);
    if (std::abs(s - 1.0) > 1e-9) throw DataError("cross-entropy: distribution " + std::to_string(t) + " does not sum to 1");
    if (targets[t] >= p.size()) throw DataError("cross-entropy: target index out of range");
    const double pt = p[targets[t]];
    if (pt <= 0.0) {
      ce.divergent = true;
      ce.value = std::numeric_limits<double>::infinity();
      return ce;
    }
    ce.value -= std::log(pt);
  }
  return ce;
}

}  // namespace semid
