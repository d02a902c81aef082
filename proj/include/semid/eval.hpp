#pragma once

// Leave-one-out ranking metrics with a single relevant item per user.
//
// Rank view:    mean over users whose ground truth was retrieved.
// Overall view: the same per-user values summed over all users / all users,
//               i.e. rank_value * hit_rate.

#include <cmath>
#include <iomanip>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "semid/common.hpp"
#include "semid/rank.hpp"

namespace semid {

struct UserMetric {
  double mrr = 0.0;
  double ndcg = 0.0;
  double recall = 0.0;
};

inline UserMetric user_metric(std::optional<std::size_t> rank, std::size_t k) {
  if (k < 1) throw UsageError("metric cutoff k must be >= 1");
  if (!rank) return {};
  if (*rank < 1) throw DataError("rank must be 1-based");
  if (*rank > k) return {};
  const double r = static_cast<double>(*rank);
  return {1.0 / r, 1.0 / std::log2(r + 1.0), 1.0};
}

struct MetricRow {
  std::string name;  // e.g. "M@5"
  std::size_t k = 0;
  double rank_value = 0.0;
  double overall_value = 0.0;
};

struct MetricsReport {
  std::vector<std::size_t> ks;
  std::vector<MetricRow> rows;  // per k: M@k, N@k, R@k
  std::size_t n_users_total = 0;
  std::size_t n_users_hit = 0;
  bool no_hits = false;

  const MetricRow& row(const std::string& name) const {
    for (const auto& r : rows)
      if (r.name == name) return r;
    throw UsageError("no metric named '" + name + "'");
  }
  double rank(const std::string& name) const { return row(name).rank_value; }
  double overall(const std::string& name) const { return row(name).overall_value; }
};

inline MetricsReport aggregate(std::span<const RankingResult> results, std::span<const std::size_t> ks) {
  MetricsReport rep;
  rep.ks.assign(ks.begin(), ks.end());
  rep.n_users_total = results.size();
  for (const auto& r : results) rep.n_users_hit += r.gt_in_candidates;
  rep.no_hits = rep.n_users_hit == 0;

  for (auto k : ks) {
    UserMetric sum;
    for (const auto& r : results) {
      if (!r.gt_in_candidates) continue;
      const auto m = user_metric(r.gt_rank, k);
      sum.mrr += m.mrr;
      sum.ndcg += m.ndcg;
      sum.recall += m.recall;
    }
    const auto hit = static_cast<double>(rep.n_users_hit);
    const auto total = static_cast<double>(rep.n_users_total);
    auto push = [&](const char* prefix, double s) {
      MetricRow row{std::string(prefix) + "@" + std::to_string(k), k, 0.0, 0.0};
      if (rep.n_users_hit > 0) row.rank_value = s / hit;
      if (rep.n_users_total > 0) row.overall_value = s / total;
      rep.rows.push_back(std::move(row));
    };
    push("M", sum.mrr);
    push("N", sum.ndcg);
    push("R", sum.recall);
  }
  return rep;
}

struct Discrepancy {
  std::string scope;  // user id, or "report"
  std::string field;
  double expected = 0.0;
  double actual = 0.0;
};

// Recomputes ranks from the ordered lists and every metric with plain loops,
// then lists each value that disagrees by more than `tol`.
inline std::vector<Discrepancy> oracle_check(std::span<const RankingResult> results, const MetricsReport& report,
                                             double tol = 1e-12) {
  std::vector<Discrepancy> out;
  std::vector<long> ranks;  // 0 = not retrieved
  for (const auto& r : results) {
    long found = 0;
    for (std::size_t i = 0; i < r.ranked.size(); i++) {
      if (r.ranked[i] == r.gt_item) {
        found = static_cast<long>(i) + 1;
        break;
      }
    }
    const long stored = r.gt_rank ? static_cast<long>(*r.gt_rank) : 0;
    if (stored != found) out.push_back({r.user_id, "gt_rank", double(found), double(stored)});
    if (r.gt_in_candidates != (found > 0))
      out.push_back({r.user_id, "gt_in_candidates", double(found > 0), double(r.gt_in_candidates)});
    ranks.push_back(found);
  }

  long hits = 0;
  for (long rk : ranks)
    if (rk > 0) hits = hits + 1;
  if (report.n_users_total != results.size())
    out.push_back({"report", "n_users_total", double(results.size()), double(report.n_users_total)});
  if (static_cast<long>(report.n_users_hit) != hits)
    out.push_back({"report", "n_users_hit", double(hits), double(report.n_users_hit)});

  for (const auto& row : report.rows) {
    double total = 0.0;
    for (long rk : ranks) {
      if (rk == 0 || rk > static_cast<long>(row.k)) continue;
      if (row.name[0] == 'M') total += 1.0 / double(rk);
      if (row.name[0] == 'N') total += std::log(2.0) / std::log(double(rk) + 1.0);
      if (row.name[0] == 'R') total += 1.0;
    }
    const double rank_view = hits > 0 ? total / double(hits) : 0.0;
    const double overall_view = results.empty() ? 0.0 : total / double(results.size());
    if (!(std::abs(rank_view - row.rank_value) <= tol))
      out.push_back({"report", row.name + " rank", rank_view, row.rank_value});
    if (!(std::abs(overall_view - row.overall_value) <= tol))
      out.push_back({"report", row.name + " overall", overall_view, row.overall_value});
  }
  return out;
}

inline std::string format_report(const MetricsReport& rep) {
  std::ostringstream os;
  os << std::left << std::setw(9) << "";
  for (const auto& r : rep.rows) os << std::right << std::setw(9) << r.name;
  os << '\n';
  os << std::left << std::setw(9) << "Rank";
  for (const auto& r : rep.rows) os << std::right << std::setw(9) << std::fixed << std::setprecision(4) << r.rank_value;
  os << '\n';
  os << std::left << std::setw(9) << "Overall";
  for (const auto& r : rep.rows)
    os << std::right << std::setw(9) << std::fixed << std::setprecision(4) << r.overall_value;
  os << '\n';
  os << "users: " << rep.n_users_total << ", ground truth retrieved: " << rep.n_users_hit;
  if (rep.no_hits) os << " (no hits: rank view reported as 0)";
  os << '\n';
  return os.str();
}

// One record per (metric, view) plus a trailing summary record.
inline void write_report_jsonl(std::ostream& os, const MetricsReport& rep) {
  for (const auto& r : rep.rows) {
    os << nlohmann::json{{"metric", r.name}, {"k", r.k}, {"view", "rank"}, {"value", r.rank_value}}.dump() << '\n';
    os << nlohmann::json{{"metric", r.name}, {"k", r.k}, {"view", "overall"}, {"value", r.overall_value}}.dump()
       << '\n';
  }
  os << nlohmann::json{{"n_users_total", rep.n_users_total},
                       {"n_users_hit", rep.n_users_hit},
                       {"no_hits", rep.no_hits}}
            .dump()
     << '\n';
}

}  // namespace semid
