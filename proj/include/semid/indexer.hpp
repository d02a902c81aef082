#pragma once

// Semantic user IDs (P-ID) plus the numeric (N-ID) and original (O-ID) baselines.

#include <algorithm>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "semid/common.hpp"
#include "semid/rqvae.hpp"

namespace semid {

enum class IndexMode { PID, NID, OID };

inline std::string to_string(IndexMode m) {
  switch (m) {
    case IndexMode::PID: return "P-ID";
    case IndexMode::NID: return "N-ID";
    case IndexMode::OID: return "O-ID";
  }
  return "?";
}

inline IndexMode parse_index_mode(std::string_view s) {
  if (s == "P-ID") return IndexMode::PID;
  if (s == "N-ID") return IndexMode::NID;
  if (s == "O-ID") return IndexMode::OID;
  throw UsageError("unknown index mode '" + std::string(s) + "' (expected P-ID, N-ID or O-ID)");
}

// Codeword tuple rendered as one atomic token per level: "<a_219> <b_2> <c_95> <d_238>".
struct SemanticId {
  std::vector<std::size_t> codes;

  static constexpr std::size_t kMaxLevels = 26;

  std::string render() const {
    if (codes.size() > kMaxLevels) throw UsageError("semantic id: at most 26 levels");
    std::string out;
    for (std::size_t l = 0; l < codes.size(); ++l) {
      if (l > 0) out.push_back(' ');
      out += '<';
      out += static_cast<char>('a' + l);
      out += '_';
      out += std::to_string(codes[l]);
      out += '>';
    }
    return out;
  }

  // Accepts tokens with or without separating whitespace. Levels must appear
  // in letter order starting from 'a'.
  static SemanticId parse(std::string_view s) {
    SemanticId id;
    std::size_t i = 0;
    auto fail = [&](const char* why) {
      throw DataError("invalid semantic id '" + std::string(s) + "': " + why);
    };
    while (true) {
      while (i < s.size() && s[i] == ' ') ++i;
      if (i == s.size()) break;
      if (s[i] != '<' || i + 3 >= s.size()) fail("expected '<'");
      const char letter = s[i + 1];
      if (letter != static_cast<char>('a' + id.codes.size())) fail("level letters out of order");
      if (s[i + 2] != '_') fail("expected '_'");
      const auto close = s.find('>', i + 3);
      if (close == std::string_view::npos || close == i + 3) fail("unterminated token");
      const auto digits = s.substr(i + 3, close - i - 3);
      if (!std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) fail("bad code");
      id.codes.push_back(static_cast<std::size_t>(parse_int(digits)));
      i = close + 1;
    }
    if (id.codes.empty()) fail("empty");
    return id;
  }

  bool operator==(const SemanticId&) const = default;
  auto operator<=>(const SemanticId&) const = default;
};

struct IndexAssignment {
  IndexMode mode = IndexMode::PID;
  std::map<std::string, std::string> rendered;  // user_id -> rendered id

  const std::string& id_of(const std::string& user) const {
    auto it = rendered.find(user);
    if (it == rendered.end()) throw DataError("no index assigned to user '" + user + "'");
    return it->second;
  }

  bool injective() const {
    std::set<std::string> seen;
    for (const auto& [u, r] : rendered)
      if (!seen.insert(r).second) return false;
    return true;
  }
};

// K^p, saturating at SIZE_MAX.
inline std::size_t index_capacity(std::size_t codebook_size, std::size_t levels) {
  std::size_t cap = 1;
  for (std::size_t l = 0; l < levels; ++l) {
    if (codebook_size != 0 && cap > SIZE_MAX / codebook_size) return SIZE_MAX;
    cap *= codebook_size;
  }
  return cap;
}

struct RawCode {
  std::vector<std::size_t> codes;
  Vec latent;  // encoder output; empty when unknown
};

struct CollisionStats {
  std::size_t colliding_users = 0;  // users moved off their raw tuple
  std::size_t max_hamming = 0;
};

namespace detail {

// Level subsets of size h, deepest levels first: {p-1}, {p-2}, ... for h = 1.
inline std::vector<std::vector<std::size_t>> level_sets(std::size_t p, std::size_t h) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> cur;
  auto rec = [&](auto&& self, std::size_t next_max) -> void {
    if (cur.size() == h) {
      out.push_back(cur);
      return;
    }
    for (std::size_t l = next_max; l-- > 0;) {
      cur.push_back(l);
      self(self, l);
      cur.pop_back();
    }
  };
  rec(rec, p);
  return out;  // each set is descending; the list is lexicographically descending
}

inline double tuple_cost(const CodebookStack& stack, const Vec& latent, const std::vector<std::size_t>& codes) {
  if (latent.empty()) return 0.0;
  Vec r = latent;
  for (std::size_t l = 0; l < codes.size(); ++l) {
    auto v = stack.levels[l].vector(codes[l]);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] -= v[j];
  }
  return squared_norm(r);
}

// Closest free tuple to `raw`: fewest changed levels, then deepest changed
// levels, then smallest reconstruction error, then smallest tuple.
inline std::optional<std::vector<std::size_t>> nearest_free_tuple(const CodebookStack& stack, const RawCode& raw,
                                                                  const std::set<std::vector<std::size_t>>& taken) {
  const auto p = raw.codes.size();
  const auto k = stack.codebook_size();
  for (std::size_t h = 1; h <= p; ++h) {
    for (const auto& levels : level_sets(p, h)) {
      std::optional<std::vector<std::size_t>> best;
      double best_cost = 0.0;
      std::vector<std::size_t> cand = raw.codes;
      // odometer over the non-raw codes at the chosen levels
      std::vector<std::size_t> digit(h, 0);
      auto code_at = [&](std::size_t i) {
        const auto skip = raw.codes[levels[i]];
        return digit[i] < skip ? digit[i] : digit[i] + 1;
      };
      if (k < 2) break;
      while (true) {
        for (std::size_t i = 0; i < h; ++i) cand[levels[i]] = code_at(i);
        if (!taken.contains(cand)) {
          const double c = tuple_cost(stack, raw.latent, cand);
          if (!best || c < best_cost || (c == best_cost && cand < *best)) {
            best = cand;
            best_cost = c;
          }
        }
        std::size_t i = 0;
        while (i < h && ++digit[i] == k - 1) digit[i++] = 0;
        if (i == h) break;
      }
      if (best) return best;
    }
  }
  return std::nullopt;
}

}  // namespace detail

// Users whose raw tuple is unique keep it. Within a colliding group (ordered
// by user_id) the first user keeps the tuple; every other user moves to the
// closest tuple not yet taken, preferring a change at the deepest level.
inline std::map<std::string, std::vector<std::size_t>> resolve_collisions(const std::map<std::string, RawCode>& raw,
                                                                          const CodebookStack& stack,
                                                                          CollisionStats* stats = nullptr) {
  std::map<std::string, std::vector<std::size_t>> out;
  std::set<std::vector<std::size_t>> taken;
  std::vector<const std::string*> pending;
  for (const auto& [user, rc] : raw) {
    if (rc.codes.size() != stack.depth()) throw DataError("resolve_collisions: tuple length does not match depth");
    if (taken.insert(rc.codes).second)
      out[user] = rc.codes;
    else
      pending.push_back(&user);
  }
  CollisionStats st;
  for (const auto* user : pending) {
    const auto& rc = raw.at(*user);
    auto moved = detail::nearest_free_tuple(stack, rc, taken);
    if (!moved) throw DataError("resolve_collisions: every semantic id is taken");
    std::size_t hamming = 0;
    for (std::size_t l = 0; l < moved->size(); ++l) hamming += (*moved)[l] != rc.codes[l];
    st.max_hamming = std::max(st.max_hamming, hamming);
    ++st.colliding_users;
    taken.insert(*moved);
    out[*user] = std::move(*moved);
  }
  if (stats) *stats = st;
  return out;
}

inline IndexAssignment assign_pid(const RqvaeModel& model, const std::map<std::string, Vec>& fused,
                                  CollisionStats* stats = nullptr) {
  const auto capacity = index_capacity(model.stack.codebook_size(), model.stack.depth());
  if (fused.size() > capacity)
    throw DataError("capacity exceeded: " + std::to_string(fused.size()) + " users but only " +
                    std::to_string(capacity) + " semantic ids");
  std::map<std::string, RawCode> raw;
  for (const auto& [user, x] : fused) {
    Vec z = encode(model, x);
    auto q = quantize(model.stack, z);
    raw[user] = RawCode{std::move(q.codewords), std::move(z)};
  }
  IndexAssignment a;
  a.mode = IndexMode::PID;
  for (auto& [user, codes] : resolve_collisions(raw, model.stack, stats))
    a.rendered[user] = SemanticId{std::move(codes)}.render();
  return a;
}

inline IndexAssignment assign_nid(std::vector<std::string> users) {
  if (users.empty()) throw DataError("assign_nid: no users");
  std::sort(users.begin(), users.end());
  if (std::adjacent_find(users.begin(), users.end()) != users.end())
    throw DataError("assign_nid: duplicate user id");
  IndexAssignment a;
  a.mode = IndexMode::NID;
  for (std::size_t i = 0; i < users.size(); ++i) a.rendered[users[i]] = std::to_string(i + 1);
  return a;
}

inline IndexAssignment assign_oid(const std::vector<std::string>& users) {
  if (users.empty()) throw DataError("assign_oid: no users");
  IndexAssignment a;
  a.mode = IndexMode::OID;
  for (const auto& u : users)
    if (!a.rendered.emplace(u, u).second) throw DataError("assign_oid: duplicate user id '" + u + "'");
  return a;
}

// user_id TAB rendered_id TAB mode
inline void write_assignment(std::ostream& os, const IndexAssignment& a) {
  for (const auto& [u, r] : a.rendered) os << u << '\t' << r << '\t' << to_string(a.mode) << '\n';
}

inline IndexAssignment read_assignment(std::istream& is) {
  IndexAssignment a;
  std::optional<IndexMode> mode;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split(line, '\t');
    if (f.size() != 3) throw DataError("assignment: expected 3 columns");
    const auto m = parse_index_mode(f[2]);
    if (mode && *mode != m) throw DataError("assignment: mixed modes");
    mode = m;
    if (!a.rendered.emplace(std::string(f[0]), std::string(f[1])).second)
      throw DataError("assignment: duplicate user '" + std::string(f[0]) + "'");
  }
  if (mode) a.mode = *mode;
  return a;
}

}  // namespace semid
