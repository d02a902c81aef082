#pragma once

// Review ingestion, k-core filtering and leave-one-out splitting.

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "semid/common.hpp"

namespace semid {

struct Interaction {
  std::string user_id;
  std::string item_id;
  double rating = 0.0;  // 0 means "not given"
  std::int64_t timestamp = 0;
  std::string review_text;

  bool has_rating() const { return rating >= 1.0 && rating <= 5.0; }
  bool operator==(const Interaction&) const = default;
};

struct ItemRecord {
  std::string item_id;
  std::string title;
};

// item_id -> title. Ordered so every serialization is deterministic.
using Catalog = std::map<std::string, std::string>;

struct UserSequence {
  std::string user_id;
  std::vector<Interaction> interactions;  // ascending timestamp, ties in input order

  std::size_t size() const { return interactions.size(); }
  bool operator==(const UserSequence&) const = default;
};

struct IngestReport {
  std::size_t review_lines = 0;
  std::size_t malformed_reviews = 0;
  std::size_t metadata_lines = 0;
  std::size_t malformed_metadata = 0;
  std::size_t untitled_items = 0;
  std::size_t dropped_untitled = 0;  // interactions whose item has no title row

  std::string summary() const {
    std::ostringstream os;
    os << "reviews=" << review_lines << " malformed_reviews=" << malformed_reviews
       << " metadata=" << metadata_lines << " malformed_metadata=" << malformed_metadata
       << " untitled_items=" << untitled_items << " dropped_untitled=" << dropped_untitled;
    return os.str();
  }
};

struct IngestResult {
  std::vector<UserSequence> sequences;  // sorted by user_id
  Catalog catalog;
  IngestReport report;
};

namespace detail {

inline const nlohmann::json* field(const nlohmann::json& obj, const char* amazon, const char* canonical) {
  if (auto it = obj.find(amazon); it != obj.end() && !it->is_null()) return &*it;
  if (auto it = obj.find(canonical); it != obj.end() && !it->is_null()) return &*it;
  return nullptr;
}

inline std::optional<std::string> string_field(const nlohmann::json& obj, const char* amazon, const char* canonical) {
  const auto* f = field(obj, amazon, canonical);
  if (f == nullptr) return std::nullopt;
  if (f->is_string()) return f->get<std::string>();
  if (f->is_number_integer()) return std::to_string(f->get<long long>());
  return std::nullopt;
}

inline std::optional<Interaction> parse_review_line(const std::string& line) {
  auto obj = nlohmann::json::parse(line, nullptr, false);
  if (obj.is_discarded() || !obj.is_object()) return std::nullopt;

  Interaction it;
  auto user = string_field(obj, "reviewerID", "user_id");
  auto item = string_field(obj, "asin", "item_id");
  if (!user || !item || user->empty() || item->empty()) return std::nullopt;
  it.user_id = std::move(*user);
  it.item_id = std::move(*item);

  const auto* ts = field(obj, "unixReviewTime", "timestamp");
  if (ts == nullptr || !ts->is_number_integer()) return std::nullopt;
  it.timestamp = ts->get<std::int64_t>();
  if (it.timestamp < 0) return std::nullopt;

  if (const auto* r = field(obj, "overall", "rating")) {
    if (!r->is_number()) return std::nullopt;
    it.rating = r->get<double>();
    if (it.rating < 1.0 || it.rating > 5.0) return std::nullopt;
  }
  if (const auto* t = field(obj, "reviewText", "review_text")) {
    if (!t->is_string()) return std::nullopt;
    it.review_text = t->get<std::string>();
  }
  return it;
}

}  // namespace detail

// Reads line-delimited review and metadata records. Interactions on items
// without a title are dropped. Throws DataError when no user survives.
inline IngestResult ingest(std::istream& reviews, std::istream& metadata) {
  IngestResult result;
  auto& report = result.report;

  std::set<std::string> untitled;
  std::string line;
  while (std::getline(metadata, line)) {
    if (line.empty()) continue;
    ++report.metadata_lines;
    auto obj = nlohmann::json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) {
      ++report.malformed_metadata;
      continue;
    }
    auto item = detail::string_field(obj, "asin", "item_id");
    if (!item || item->empty()) {
      ++report.malformed_metadata;
      continue;
    }
    auto title = detail::string_field(obj, "title", "title");
    if (!title || title->empty()) {
      untitled.insert(*item);
      continue;
    }
    result.catalog.emplace(std::move(*item), std::move(*title));
  }
  for (const auto& id : untitled)
    if (!result.catalog.contains(id)) ++report.untitled_items;

  std::map<std::string, std::vector<Interaction>> by_user;
  while (std::getline(reviews, line)) {
    if (line.empty()) continue;
    ++report.review_lines;
    auto parsed = detail::parse_review_line(line);
    if (!parsed) {
      ++report.malformed_reviews;
      continue;
    }
    if (!result.catalog.contains(parsed->item_id)) {
      ++report.dropped_untitled;
      continue;
    }
    by_user[parsed->user_id].push_back(std::move(*parsed));
  }

  for (auto& [user, items] : by_user) {
    std::stable_sort(items.begin(), items.end(),
                     [](const Interaction& a, const Interaction& b) { return a.timestamp < b.timestamp; });
    result.sequences.push_back({user, std::move(items)});
  }
  if (result.sequences.empty()) throw DataError("ingest: no users survived (" + report.summary() + ")");
  return result;
}

// Repeatedly drops users and items with fewer than k interactions until
// every survivor has at least k.
inline std::vector<UserSequence> kcore_filter(std::vector<UserSequence> sequences, std::size_t k) {
  if (k < 1) throw UsageError("kcore_filter: k must be >= 1");
  while (true) {
    std::unordered_map<std::string, std::size_t> item_counts;
    for (const auto& s : sequences)
      for (const auto& it : s.interactions) ++item_counts[it.item_id];

    bool changed = false;
    std::vector<UserSequence> next;
    next.reserve(sequences.size());
    for (auto& s : sequences) {
      const auto before = s.interactions.size();
      std::erase_if(s.interactions, [&](const Interaction& it) { return item_counts[it.item_id] < k; });
      if (s.interactions.size() != before) changed = true;
      if (s.interactions.size() < k) {
        changed = true;
        continue;
      }
      next.push_back(std::move(s));
    }
    sequences = std::move(next);
    if (!changed) break;
  }
  if (sequences.empty())
    throw DataError("kcore_filter: no users or items left with at least " + std::to_string(k) + " interactions");
  return sequences;
}

// Keeps only catalog entries that some sequence references.
inline Catalog restrict_catalog(const Catalog& catalog, const std::vector<UserSequence>& sequences) {
  Catalog out;
  for (const auto& s : sequences)
    for (const auto& it : s.interactions)
      if (auto c = catalog.find(it.item_id); c != catalog.end()) out.insert(*c);
  return out;
}

struct UserSplit {
  std::string user_id;
  std::vector<Interaction> train;
  Interaction valid;
  Interaction test;
};

struct SplitSet {
  std::vector<UserSplit> users;
  std::vector<std::string> excluded;  // users with fewer than three interactions
};

inline SplitSet split_leave_one_out(const std::vector<UserSequence>& sequences) {
  SplitSet out;
  for (const auto& s : sequences) {
    const auto n = s.interactions.size();
    if (n < 3) {
      out.excluded.push_back(s.user_id);
      continue;
    }
    UserSplit u;
    u.user_id = s.user_id;
    u.train.assign(s.interactions.begin(), s.interactions.end() - 2);
    u.valid = s.interactions[n - 2];
    u.test = s.interactions[n - 1];
    out.users.push_back(std::move(u));
  }
  return out;
}

// --- serialization ---------------------------------------------------------
//
// sequences.tsv: user_id TAB item:timestamp:rating item:timestamp:rating ...
// catalog.tsv:   item_id TAB title
// reviews.tsv:   user_id TAB position TAB review text (tabs/newlines blanked)

inline void write_sequences(std::ostream& os, const std::vector<UserSequence>& sequences) {
  for (const auto& s : sequences) {
    os << s.user_id << '\t';
    for (std::size_t i = 0; i < s.interactions.size(); ++i) {
      const auto& it = s.interactions[i];
      if (i > 0) os << ' ';
      os << it.item_id << ':' << it.timestamp << ':' << format_double(it.rating);
    }
    os << '\n';
  }
}

inline void write_reviews(std::ostream& os, const std::vector<UserSequence>& sequences) {
  for (const auto& s : sequences)
    for (std::size_t i = 0; i < s.interactions.size(); ++i)
      if (!s.interactions[i].review_text.empty())
        os << s.user_id << '\t' << i << '\t' << sanitize_field(s.interactions[i].review_text) << '\n';
}

inline void write_catalog(std::ostream& os, const Catalog& catalog) {
  for (const auto& [id, title] : catalog) os << id << '\t' << sanitize_field(title) << '\n';
}

inline std::vector<UserSequence> read_sequences(std::istream& is) {
  std::vector<UserSequence> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError("sequences line " + std::to_string(lineno) + ": missing tab");
    UserSequence s;
    s.user_id = line.substr(0, tab);
    for (auto tok : split(std::string_view(line).substr(tab + 1), ' ')) {
      if (tok.empty()) continue;
      // item ids may contain ':'; the last two fields are timestamp and rating
      const auto r = tok.rfind(':');
      const auto t = r == std::string_view::npos ? r : tok.rfind(':', r - 1);
      if (t == std::string_view::npos || r == 0)
        throw DataError("sequences line " + std::to_string(lineno) + ": bad entry '" + std::string(tok) + "'");
      Interaction it;
      it.user_id = s.user_id;
      it.item_id = std::string(tok.substr(0, t));
      it.timestamp = parse_int(tok.substr(t + 1, r - t - 1));
      it.rating = parse_double(tok.substr(r + 1));
      s.interactions.push_back(std::move(it));
    }
    out.push_back(std::move(s));
  }
  return out;
}

// Attaches review texts written by write_reviews back onto sequences.
inline void read_reviews(std::istream& is, std::vector<UserSequence>& sequences) {
  std::unordered_map<std::string, UserSequence*> index;
  for (auto& s : sequences) index[s.user_id] = &s;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto a = line.find('\t');
    const auto b = a == std::string::npos ? a : line.find('\t', a + 1);
    if (b == std::string::npos) throw DataError("reviews: malformed line");
    auto it = index.find(line.substr(0, a));
    if (it == index.end()) continue;
    const auto pos = static_cast<std::size_t>(parse_int(std::string_view(line).substr(a + 1, b - a - 1)));
    if (pos >= it->second->interactions.size()) throw DataError("reviews: position out of range");
    it->second->interactions[pos].review_text = line.substr(b + 1);
  }
}

inline Catalog read_catalog(std::istream& is) {
  Catalog out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError("catalog: missing tab");
    out.emplace(line.substr(0, tab), line.substr(tab + 1));
  }
  return out;
}

struct CorpusStats {
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t interactions = 0;
  double avg_length = 0.0;
};

inline CorpusStats corpus_stats(const std::vector<UserSequence>& sequences) {
  CorpusStats st;
  std::set<std::string> items;
  st.users = sequences.size();
  for (const auto& s : sequences) {
    st.interactions += s.size();
    for (const auto& it : s.interactions) items.insert(it.item_id);
  }
  st.items = items.size();
  st.avg_length = st.users ? static_cast<double>(st.interactions) / static_cast<double>(st.users) : 0.0;
  return st;
}

}  // namespace semid
