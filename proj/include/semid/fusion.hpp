#pragma once

// Attention pooling of a user's review embeddings, keyed on the embedding of
// the user's original ID:
//   logit_i = e_i^T A o,   alpha = softmax(logit),   x = sum_i alpha_i e_i
// A single matrix A is shared by every review and every user.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "semid/common.hpp"

namespace semid {

struct AttentionParams {
  Matrix weight;  // D x D
  std::uint64_t seed = 0;

  std::size_t dimension() const { return weight.rows; }
};

// Identity plus N(0, noise^2) entries.
inline AttentionParams init_attention(std::size_t dimension, std::uint64_t seed, double noise = 0.01) {
  AttentionParams p{Matrix::identity(dimension), seed};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, noise);
  for (double& w : p.weight.data) w += gauss(rng);
  return p;
}

inline std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

namespace detail {

inline void check_fusion_inputs(const AttentionParams& params, std::span<const Vec> reviews, const Vec& id_vec) {
  if (reviews.empty()) throw DataError("no reviews for user");
  const auto d = params.dimension();
  if (params.weight.cols != d) throw UsageError("attention matrix must be square");
  if (id_vec.size() != d) throw DataError("id embedding has the wrong dimension");
  for (const auto& r : reviews)
    if (r.size() != d) throw DataError("review embedding has the wrong dimension");
}

}  // namespace detail

inline std::vector<double> attention_logits(const AttentionParams& params, std::span<const Vec> reviews,
                                            const Vec& id_vec) {
  detail::check_fusion_inputs(params, reviews, id_vec);
  Vec a_o(params.dimension());
  matvec(params.weight, id_vec, a_o);
  std::vector<double> logits;
  logits.reserve(reviews.size());
  for (const auto& r : reviews) logits.push_back(dot(r, a_o));
  return logits;
}

inline std::vector<double> attention_weights(const AttentionParams& params, std::span<const Vec> reviews,
                                             const Vec& id_vec) {
  return softmax(attention_logits(params, reviews, id_vec));
}

inline Vec fuse(const AttentionParams& params, std::span<const Vec> reviews, const Vec& id_vec) {
  const auto alpha = attention_weights(params, reviews, id_vec);
  Vec x(params.dimension(), 0.0);
  for (std::size_t i = 0; i < reviews.size(); ++i)
    for (std::size_t j = 0; j < x.size(); ++j) x[j] += alpha[i] * reviews[i][j];
  return x;
}

struct FusedUserVector {
  std::string user_id;
  Vec x;
};

inline FusedUserVector fuse_user(const AttentionParams& params, const std::string& user_id,
                                 std::span<const Vec> reviews, const Vec& id_vec) {
  return {user_id, fuse(params, reviews, id_vec)};
}

// Gradient of <upstream, x> with respect to A:
//   sum_j alpha_j (g.e_j - g.x) e_j o^T
inline void accumulate_fusion_grad(const AttentionParams& params, std::span<const Vec> reviews, const Vec& id_vec,
                                   std::span<const double> upstream, Matrix& grad) {
  const auto alpha = attention_weights(params, reviews, id_vec);
  double g_x = 0.0;
  std::vector<double> g_e(reviews.size());
  for (std::size_t i = 0; i < reviews.size(); ++i) {
    g_e[i] = dot(upstream, reviews[i]);
    g_x += alpha[i] * g_e[i];
  }
  for (std::size_t i = 0; i < reviews.size(); ++i) {
    const double coeff = alpha[i] * (g_e[i] - g_x);
    if (coeff != 0.0) add_outer(grad, reviews[i], id_vec, coeff);
  }
}

inline Matrix fusion_grad(const AttentionParams& params, std::span<const Vec> reviews, const Vec& id_vec,
                          std::span<const double> upstream) {
  if (upstream.size() != params.dimension()) throw DataError("upstream gradient has the wrong dimension");
  Matrix grad(params.dimension(), params.dimension());
  accumulate_fusion_grad(params, reviews, id_vec, upstream, grad);
  return grad;
}

}  // namespace semid
