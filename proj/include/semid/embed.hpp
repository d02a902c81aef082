#pragma once

// Text embedding providers and the precomputed-embedding TSV format.

#include <istream>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <string_view>

#include "semid/common.hpp"

namespace semid {

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string name() const = 0;
  virtual std::size_t dimension() const = 0;
  // Must be deterministic for a fixed configuration.
  virtual Vec embed(std::string_view text) const = 0;
};

// Seeded feature hashing over a bag of lowercase alphanumeric tokens.
// Each token maps to one (bucket, sign) pair; the sum is L2-normalized.
class HashingEmbedder final : public EmbeddingProvider {
 public:
  explicit HashingEmbedder(std::size_t dimension = 64, std::uint64_t seed = 0) : dim_(dimension), seed_(seed) {
    if (dim_ == 0) throw UsageError("hashing embedder: dimension must be positive");
  }

  std::string name() const override { return "hashing"; }
  std::size_t dimension() const override { return dim_; }

  Vec embed(std::string_view text) const override {
    Vec v(dim_, 0.0);
    for (const auto& tok : tokenize(text)) {
      const auto [bucket, sign] = slot(tok);
      v[bucket] += sign;
    }
    const double norm = std::sqrt(squared_norm(v));
    if (norm > 0.0)
      for (double& x : v) x /= norm;
    return v;
  }

  std::pair<std::size_t, double> slot(std::string_view token) const {
    const std::uint64_t basis = 0xcbf29ce484222325ULL ^ (seed_ * 0x9e3779b97f4a7c15ULL);
    const std::uint64_t h = fnv1a64(token, basis);
    return {static_cast<std::size_t>(h % dim_), (h >> 63) ? -1.0 : 1.0};
  }

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

// Keyed vectors with a declared dimension. File layout:
//   D=<int>
//   key TAB v1,v2,...,vD
class EmbeddingTable {
 public:
  explicit EmbeddingTable(std::size_t dimension = 0) : dim_(dimension) {}

  std::size_t dimension() const { return dim_; }
  std::size_t size() const { return rows_.size(); }
  bool contains(const std::string& key) const { return rows_.contains(key); }
  const std::map<std::string, Vec>& rows() const { return rows_; }

  void insert(const std::string& key, Vec v) {
    if (v.size() != dim_)
      throw DataError("embedding '" + key + "' has dimension " + std::to_string(v.size()) + ", expected " +
                      std::to_string(dim_));
    if (key.find_first_of("\t\n\r") != std::string::npos) throw DataError("embedding key contains a tab or newline");
    rows_[key] = std::move(v);
  }

  const Vec& at(const std::string& key) const {
    auto it = rows_.find(key);
    if (it == rows_.end()) throw DataError("no embedding for key '" + key + "'");
    return it->second;
  }

  void save(std::ostream& os) const {
    os << "D=" << dim_ << '\n';
    for (const auto& [key, v] : rows_) {
      os << key << '\t';
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (i > 0) os << ',';
        os << format_double(v[i]);
      }
      os << '\n';
    }
  }

  static EmbeddingTable load(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("D=", 0) != 0) throw DataError("embedding file: missing 'D=<int>' header");
    const auto d = parse_int(std::string_view(line).substr(2));
    if (d <= 0) throw DataError("embedding file: dimension must be positive");
    EmbeddingTable table(static_cast<std::size_t>(d));
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos) throw DataError("embedding file line " + std::to_string(lineno) + ": missing tab");
      Vec v;
      for (auto cell : split(std::string_view(line).substr(tab + 1), ',')) v.push_back(parse_double(cell));
      if (v.size() != table.dim_)
        throw DataError("embedding file line " + std::to_string(lineno) + ": dimension " + std::to_string(v.size()) +
                        " does not match declared D=" + std::to_string(table.dim_));
      if (!all_finite(v)) throw DataError("embedding file line " + std::to_string(lineno) + ": non-finite value");
      table.rows_[line.substr(0, tab)] = std::move(v);
    }
    return table;
  }

 private:
  std::size_t dim_;
  std::map<std::string, Vec> rows_;
};

// Serves vectors from a precomputed table, keyed by the (sanitized) text.
class PrecomputedProvider final : public EmbeddingProvider {
 public:
  explicit PrecomputedProvider(std::shared_ptr<const EmbeddingTable> table) : table_(std::move(table)) {}

  std::string name() const override { return "precomputed"; }
  std::size_t dimension() const override { return table_->dimension(); }
  Vec embed(std::string_view text) const override {
    if (text.empty()) return Vec(dimension(), 0.0);
    return table_->at(sanitize_field(text));
  }

 private:
  std::shared_ptr<const EmbeddingTable> table_;
};

inline Vec embed_text(const EmbeddingProvider& provider, std::string_view text) {
  if (text.empty()) return Vec(provider.dimension(), 0.0);
  Vec v = provider.embed(text);
  if (v.size() != provider.dimension())
    throw DataError(provider.name() + " returned a vector of the wrong dimension");
  if (!all_finite(v)) throw DivergenceError(provider.name() + " returned a non-finite embedding");
  return v;
}

}  // namespace semid
