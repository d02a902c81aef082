#pragma once

// Reference computations for the tests. Nothing here calls into the library's
// math helpers; each routine is a plain loop written from the definitions.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "semid/rqvae.hpp"

namespace oracle {

using V = std::vector<double>;

inline double sqdist(const V& a, const V& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); i++) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

inline std::size_t exhaustive_nearest(const std::vector<V>& codebook, const V& r) {
  std::vector<double> d;
  for (const auto& c : codebook) d.push_back(sqdist(c, r));
  return static_cast<std::size_t>(std::min_element(d.begin(), d.end()) - d.begin());
}

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 14695981039346656037ULL) {
  for (char c : s) {
    h = h ^ static_cast<std::uint8_t>(c);
    h = h * 1099511628211ULL;
  }
  return h;
}

inline double cos(const V& a, const V& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); i++) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

// x = sum_i softmax(e_i . (A o))_i e_i, computed entry by entry.
inline V fuse(const semid::Matrix& a, const std::vector<V>& reviews, const V& o) {
  const std::size_t d = o.size();
  std::vector<double> logit;
  for (const auto& e : reviews) {
    double s = 0.0;
    for (std::size_t r = 0; r < d; r++)
      for (std::size_t c = 0; c < d; c++) s += e[r] * a.data[r * d + c] * o[c];
    logit.push_back(s);
  }
  double mx = logit[0];
  for (double l : logit) mx = std::max(mx, l);
  double z = 0.0;
  for (double& l : logit) z += (l = std::exp(l - mx));
  V x(d, 0.0);
  for (std::size_t i = 0; i < reviews.size(); i++)
    for (std::size_t j = 0; j < d; j++) x[j] += logit[i] / z * reviews[i][j];
  return x;
}

inline V mlp(const semid::Mlp& m, const V& x) {
  const auto& h = m.hidden;
  const auto& o = m.output;
  V hid(h.weight.rows);
  for (std::size_t r = 0; r < h.weight.rows; r++) {
    double s = h.bias[r];
    for (std::size_t c = 0; c < h.weight.cols; c++) s += h.weight.data[r * h.weight.cols + c] * x[c];
    hid[r] = std::tanh(s);
  }
  V out(o.weight.rows);
  for (std::size_t r = 0; r < o.weight.rows; r++) {
    double s = o.bias[r];
    for (std::size_t c = 0; c < o.weight.cols; c++) s += o.weight.data[r * o.weight.cols + c] * hid[c];
    out[r] = s;
  }
  return out;
}

struct Params {
  semid::RqvaeModel model;
  semid::Matrix attention;
};

struct Sample {
  std::vector<V> reviews;
  V id_vec;
  std::vector<std::size_t> codes;  // frozen assignment
};

inline V codeword(const semid::RqvaeModel& m, std::size_t level, std::size_t k) {
  const auto& cb = m.stack.levels[level].vectors;
  return V(cb.data.begin() + static_cast<std::ptrdiff_t>(k * cb.cols),
           cb.data.begin() + static_cast<std::ptrdiff_t>((k + 1) * cb.cols));
}

// Joint loss with every sg[.] evaluated at the frozen parameters:
//   x_in = fuse(A), target = sg[fuse(A)], z = enc(x_in)
//   x_hat = dec(z + sg[z_hat - z])
//   r_i = z - sum_{j<i} sg[v_j]
//   L = |target - x_hat|^2 + sum_i |sg[r_i] - v_i|^2 + beta |r_i - sg[v_i]|^2
inline double joint_loss(const Params& live, const Params& frozen, const Sample& s) {
  const V x_live = fuse(live.attention, s.reviews, s.id_vec);
  const V x_frozen = fuse(frozen.attention, s.reviews, s.id_vec);
  const V z = mlp(live.model.encoder, x_live);
  const V z0 = mlp(frozen.model.encoder, x_frozen);
  const std::size_t p = s.codes.size();

  V zhat0(z.size(), 0.0);
  for (std::size_t l = 0; l < p; l++) {
    const V v = codeword(frozen.model, l, s.codes[l]);
    for (std::size_t j = 0; j < z.size(); j++) zhat0[j] += v[j];
  }
  V dec_in(z.size());
  for (std::size_t j = 0; j < z.size(); j++) dec_in[j] = z[j] + (zhat0[j] - z0[j]);
  double loss = sqdist(x_frozen, mlp(live.model.decoder, dec_in));

  V r = z, r0 = z0;
  for (std::size_t l = 0; l < p; l++) {
    const V v_live = codeword(live.model, l, s.codes[l]);
    const V v_frozen = codeword(frozen.model, l, s.codes[l]);
    loss += sqdist(r0, v_live) + live.model.beta * sqdist(r, v_frozen);
    for (std::size_t j = 0; j < r.size(); j++) {
      r[j] -= v_frozen[j];
      r0[j] -= v_frozen[j];
    }
  }
  return loss;
}

// Every scalar parameter of `p`, in a fixed order.
inline std::vector<double*> parameters(Params& p) {
  std::vector<double*> out;
  auto add = [&](std::vector<double>& v) {
    for (double& x : v) out.push_back(&x);
  };
  for (semid::Mlp* m : {&p.model.encoder, &p.model.decoder}) {
    add(m->hidden.weight.data);
    add(m->hidden.bias);
    add(m->output.weight.data);
    add(m->output.bias);
  }
  for (auto& cb : p.model.stack.levels) add(cb.vectors.data);
  add(p.attention.data);
  return out;
}

// Central differences of the summed joint loss over `samples`.
inline std::vector<double> numeric_gradient(const Params& base, const std::vector<Sample>& samples, double h = 1e-5) {
  Params live = base;
  auto slots = parameters(live);
  std::vector<double> g(slots.size());
  auto total = [&] {
    double s = 0.0;
    for (const auto& smp : samples) s += joint_loss(live, base, smp);
    return s;
  };
  for (std::size_t i = 0; i < slots.size(); i++) {
    const double keep = *slots[i];
    *slots[i] = keep + h;
    const double up = total();
    *slots[i] = keep - h;
    const double down = total();
    *slots[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

// Naive single-relevant-item metrics.
inline double mrr(std::optional<std::size_t> rank, std::size_t k) {
  return rank && *rank <= k ? 1.0 / double(*rank) : 0.0;
}
inline double ndcg(std::optional<std::size_t> rank, std::size_t k) {
  return rank && *rank <= k ? 1.0 / std::log2(double(*rank) + 1.0) : 0.0;
}
inline double recall(std::optional<std::size_t> rank, std::size_t k) { return rank && *rank <= k ? 1.0 : 0.0; }

}  // namespace oracle
