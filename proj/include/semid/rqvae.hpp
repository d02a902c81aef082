#pragma once

// Residual-quantized autoencoder.
//
//   z = encoder(x)
//   r_0 = z,  d_i = argmin_k |r_i - v^i_k|^2,  r_{i+1} = r_i - v^i_{d_i}
//   z_hat = sum_i v^i_{d_i},  x_hat = decoder(z_hat)
//
//   L_recon = |x - x_hat|^2
//   L_rq    = sum_i |sg[r_i] - v^i_{d_i}|^2 + beta |r_i - sg[v^i_{d_i}]|^2
//
// Encoder gradients pass the quantizer straight through. Residuals are built
// from stopped codewords, so codebooks are trained only by the first L_rq term.

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <functional>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "semid/common.hpp"
#include "semid/fusion.hpp"

namespace semid {

// --- dense layers ------------------------------------------------------------

struct Dense {
  Matrix weight;  // out x in
  Vec bias;

  std::size_t in() const { return weight.cols; }
  std::size_t out() const { return weight.rows; }
  bool operator==(const Dense&) const = default;
};

// Two layers: tanh hidden, linear output.
struct Mlp {
  Dense hidden;
  Dense output;

  std::size_t in() const { return hidden.in(); }
  std::size_t out() const { return output.out(); }
  bool operator==(const Mlp&) const = default;
};

struct MlpCache {
  Vec input;
  Vec hidden;  // tanh activations
  Vec output;
};

inline Dense make_dense(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  Dense d{Matrix(out, in), Vec(out, 0.0)};
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (double& w : d.weight.data) w = u(rng);
  return d;
}

inline Mlp make_mlp(std::size_t in, std::size_t hidden, std::size_t out, std::mt19937_64& rng) {
  Mlp m;
  m.hidden = make_dense(in, hidden, rng);
  m.output = make_dense(hidden, out, rng);
  return m;
}

inline MlpCache mlp_forward(const Mlp& m, std::span<const double> x) {
  MlpCache c;
  c.input.assign(x.begin(), x.end());
  c.hidden.resize(m.hidden.out());
  matvec(m.hidden.weight, x, c.hidden);
  for (std::size_t i = 0; i < c.hidden.size(); ++i) c.hidden[i] = std::tanh(c.hidden[i] + m.hidden.bias[i]);
  c.output.resize(m.output.out());
  matvec(m.output.weight, c.hidden, c.output);
  for (std::size_t i = 0; i < c.output.size(); ++i) c.output[i] += m.output.bias[i];
  return c;
}

// Accumulates parameter gradients into `grad`; writes d/dinput when requested.
inline void mlp_backward(const Mlp& m, const MlpCache& c, std::span<const double> grad_out, Mlp& grad,
                         std::span<double> grad_in = {}) {
  add_outer(grad.output.weight, grad_out, c.hidden);
  for (std::size_t i = 0; i < grad_out.size(); ++i) grad.output.bias[i] += grad_out[i];

  Vec g_hidden(m.hidden.out());
  matvec_t(m.output.weight, grad_out, g_hidden);
  for (std::size_t i = 0; i < g_hidden.size(); ++i) g_hidden[i] *= 1.0 - c.hidden[i] * c.hidden[i];

  add_outer(grad.hidden.weight, g_hidden, c.input);
  for (std::size_t i = 0; i < g_hidden.size(); ++i) grad.hidden.bias[i] += g_hidden[i];

  if (!grad_in.empty()) matvec_t(m.hidden.weight, g_hidden, grad_in);
}

inline Mlp zeros_like(const Mlp& m) {
  Mlp z;
  z.hidden = {Matrix(m.hidden.weight.rows, m.hidden.weight.cols), Vec(m.hidden.bias.size(), 0.0)};
  z.output = {Matrix(m.output.weight.rows, m.output.weight.cols), Vec(m.output.bias.size(), 0.0)};
  return z;
}

// --- codebooks ---------------------------------------------------------------

struct Codebook {
  std::size_t level = 0;
  Matrix vectors;  // K x d_code
  std::vector<std::size_t> usage_counts;

  std::size_t size() const { return vectors.rows; }
  std::size_t dimension() const { return vectors.cols; }
  std::span<const double> vector(std::size_t k) const { return vectors.row(k); }
};

struct CodebookStack {
  std::vector<Codebook> levels;

  std::size_t depth() const { return levels.size(); }
  std::size_t codebook_size() const { return levels.empty() ? 0 : levels.front().size(); }
  std::size_t dimension() const { return levels.empty() ? 0 : levels.front().dimension(); }

  static CodebookStack zeros(std::size_t depth, std::size_t size, std::size_t dimension) {
    if (depth == 0 || size == 0 || dimension == 0) throw UsageError("codebook stack needs p, K and d_code > 0");
    CodebookStack s;
    for (std::size_t l = 0; l < depth; ++l)
      s.levels.push_back({l, Matrix(size, dimension), std::vector<std::size_t>(size, 0)});
    return s;
  }
};

// Smallest index among the minimal squared distances.
inline std::size_t nearest_code(const Codebook& codebook, std::span<const double> r) {
  std::size_t best = 0;
  double best_d = squared_distance(r, codebook.vector(0));
  for (std::size_t k = 1; k < codebook.size(); ++k) {
    const double d = squared_distance(r, codebook.vector(k));
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

struct QuantizationResult {
  std::vector<std::size_t> codewords;  // d_0 .. d_{p-1}
  Vec quantized;                       // z_hat
  std::vector<Vec> residuals;          // r_0 .. r_p
};

inline QuantizationResult quantize_with(const CodebookStack& stack, std::span<const double> z,
                                        std::span<const std::size_t> codes) {
  QuantizationResult q;
  q.quantized.assign(z.size(), 0.0);
  q.residuals.emplace_back(z.begin(), z.end());
  for (std::size_t l = 0; l < stack.depth(); ++l) {
    const auto& cb = stack.levels[l];
    const std::size_t d = codes.empty() ? nearest_code(cb, q.residuals.back()) : codes[l];
    q.codewords.push_back(d);
    Vec next = q.residuals.back();
    auto v = cb.vector(d);
    for (std::size_t j = 0; j < next.size(); ++j) {
      next[j] -= v[j];
      q.quantized[j] += v[j];
    }
    q.residuals.push_back(std::move(next));
  }
  return q;
}

inline QuantizationResult quantize(const CodebookStack& stack, std::span<const double> z) {
  if (z.size() != stack.dimension()) throw DataError("quantize: latent has the wrong dimension");
  return quantize_with(stack, z, {});
}

// --- model -------------------------------------------------------------------

struct RqvaeConfig {
  std::size_t input_dim = 64;
  std::size_t hidden_dim = 128;
  std::size_t code_dim = 32;
  std::size_t codebook_size = 256;
  std::size_t levels = 4;
  double beta = 0.25;
  std::uint64_t seed = 0;
};

struct RqvaeModel {
  Mlp encoder;  // D -> hidden -> d_code
  Mlp decoder;  // d_code -> hidden -> D
  CodebookStack stack;
  double beta = 0.25;

  std::size_t input_dim() const { return encoder.in(); }
  std::size_t code_dim() const { return encoder.out(); }
};

inline RqvaeModel make_model(const RqvaeConfig& cfg) {
  if (!(cfg.beta > 0.0)) throw UsageError("rqvae: beta must be > 0");
  if (cfg.input_dim == 0 || cfg.hidden_dim == 0 || cfg.code_dim == 0)
    throw UsageError("rqvae: layer widths must be positive");
  std::mt19937_64 rng(cfg.seed);
  RqvaeModel m;
  m.encoder = make_mlp(cfg.input_dim, cfg.hidden_dim, cfg.code_dim, rng);
  m.decoder = make_mlp(cfg.code_dim, cfg.hidden_dim, cfg.input_dim, rng);
  m.stack = CodebookStack::zeros(cfg.levels, cfg.codebook_size, cfg.code_dim);
  m.beta = cfg.beta;
  return m;
}

inline Vec encode(const RqvaeModel& m, std::span<const double> x) { return mlp_forward(m.encoder, x).output; }

struct ForwardState {
  MlpCache encoder;
  QuantizationResult quant;
  MlpCache decoder;
  Vec target;
  double recon = 0.0;
  double rq = 0.0;
  double total = 0.0;
};

// `input` feeds the encoder, `target` is what the decoder must reproduce.
// Passing `codes` freezes the codeword assignment instead of searching.
inline ForwardState forward(const RqvaeModel& m, std::span<const double> input, std::span<const double> target,
                            std::span<const std::size_t> codes = {}) {
  if (input.size() != m.input_dim() || target.size() != m.input_dim())
    throw DataError("rqvae: input has the wrong dimension");
  ForwardState s;
  s.encoder = mlp_forward(m.encoder, input);
  s.quant = quantize_with(m.stack, s.encoder.output, codes);
  s.decoder = mlp_forward(m.decoder, s.quant.quantized);
  s.target.assign(target.begin(), target.end());

  s.recon = squared_distance(s.target, s.decoder.output);
  for (std::size_t l = 0; l < m.stack.depth(); ++l) {
    // both L_rq terms share the same value in the forward pass
    const double d = squared_distance(s.quant.residuals[l], m.stack.levels[l].vector(s.quant.codewords[l]));
    s.rq += (1.0 + m.beta) * d;
  }
  s.total = s.recon + s.rq;
  if (!std::isfinite(s.total)) throw DivergenceError("numerical divergence: non-finite loss");
  return s;
}

inline ForwardState losses(const RqvaeModel& m, std::span<const double> x) { return forward(m, x, x); }

struct Gradients {
  Mlp encoder;
  Mlp decoder;
  std::vector<Matrix> codebooks;
  Matrix attention;  // empty unless training fusion jointly

  static Gradients zeros_like(const RqvaeModel& m) {
    Gradients g;
    g.encoder = semid::zeros_like(m.encoder);
    g.decoder = semid::zeros_like(m.decoder);
    for (const auto& cb : m.stack.levels) g.codebooks.emplace_back(cb.vectors.rows, cb.vectors.cols);
    return g;
  }
};

// Accumulates gradients of L_total for one sample. `input_grad`, when given,
// receives d L_total / d encoder-input (the target is held constant).
inline void backward(const RqvaeModel& m, const ForwardState& s, Gradients& g, std::span<double> input_grad = {}) {
  const auto dim = m.input_dim();
  Vec g_xhat(dim);
  for (std::size_t i = 0; i < dim; ++i) g_xhat[i] = 2.0 * (s.decoder.output[i] - s.target[i]);

  Vec g_z(m.code_dim());
  mlp_backward(m.decoder, s.decoder, g_xhat, g.decoder, g_z);  // straight through: d/dz_hat -> d/dz

  for (std::size_t l = 0; l < m.stack.depth(); ++l) {
    const auto code = s.quant.codewords[l];
    const auto& r = s.quant.residuals[l];
    auto v = m.stack.levels[l].vector(code);
    auto gv = g.codebooks[l].row(code);
    for (std::size_t j = 0; j < g_z.size(); ++j) {
      const double diff = r[j] - v[j];
      gv[j] -= 2.0 * diff;
      g_z[j] += 2.0 * m.beta * diff;
    }
  }
  mlp_backward(m.encoder, s.encoder, g_z, g.encoder, input_grad);
}

// --- k-means -----------------------------------------------------------------

// Lloyd's algorithm from K seeded sample points. Ends on an update step, so
// the returned centers are the means of their last assignment.
inline Matrix kmeans(std::span<const Vec> points, std::size_t k, std::size_t iterations, std::mt19937_64& rng) {
  if (points.empty()) throw DataError("kmeans: no points");
  const auto dim = points.front().size();
  Matrix centers(k, dim);

  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t c = 0; c < k; ++c) {
    const auto& p = points[order[c % order.size()]];
    std::copy(p.begin(), p.end(), centers.row(c).begin());
  }

  Codebook view{0, std::move(centers), {}};
  std::vector<std::size_t> assign(points.size());
  for (std::size_t it = 0; it < iterations; ++it) {
    for (std::size_t i = 0; i < points.size(); ++i) assign[i] = nearest_code(view, points[i]);
    Matrix sums(k, dim);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      auto row = sums.row(assign[i]);
      for (std::size_t j = 0; j < dim; ++j) row[j] += points[i][j];
      ++counts[assign[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its center
      auto dst = view.vectors.row(c);
      auto src = sums.row(c);
      for (std::size_t j = 0; j < dim; ++j) dst[j] = src[j] / static_cast<double>(counts[c]);
    }
  }
  return std::move(view.vectors);
}

// Fits every level on the residuals left by the levels above it.
inline void init_codebooks_kmeans(RqvaeModel& m, std::span<const Vec> inputs, std::size_t iterations,
                                  std::mt19937_64& rng) {
  std::vector<Vec> residuals;
  residuals.reserve(inputs.size());
  for (const auto& x : inputs) residuals.push_back(encode(m, x));
  for (auto& cb : m.stack.levels) {
    cb.vectors = kmeans(residuals, cb.size(), iterations, rng);
    std::fill(cb.usage_counts.begin(), cb.usage_counts.end(), 0);
    for (auto& r : residuals) {
      const auto k = nearest_code(cb, r);
      ++cb.usage_counts[k];
      auto v = cb.vector(k);
      for (std::size_t j = 0; j < r.size(); ++j) r[j] -= v[j];
    }
  }
}

// Mean |r_l|^2 over the inputs for l = 0..p.
inline std::vector<double> mean_residual_norms(const RqvaeModel& m, std::span<const Vec> inputs) {
  std::vector<double> out(m.stack.depth() + 1, 0.0);
  for (const auto& x : inputs) {
    const auto q = quantize(m.stack, encode(m, x));
    for (std::size_t l = 0; l < q.residuals.size(); ++l) out[l] += squared_norm(q.residuals[l]);
  }
  for (double& v : out) v /= static_cast<double>(inputs.size());
  return out;
}

// --- training ----------------------------------------------------------------

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 8;
  double lr = 1e-3;
  double momentum = 0.0;
  std::uint64_t seed = 0;
  std::size_t kmeans_iterations = 10;
  bool reseed_dead_codes = true;
};

struct EpochStats {
  std::size_t epoch = 0;
  double mean_recon = 0.0;
  double mean_rq = 0.0;
  std::size_t reseeded = 0;

  bool operator==(const EpochStats&) const = default;
};

struct TrainResult {
  std::vector<EpochStats> trace;
  std::vector<double> init_residual_norms;  // after k-means, before any step
  bool diverged = false;
  std::string error;
};

namespace detail {

inline void sgd_step(std::span<double> param, std::span<const double> grad, std::span<double> velocity, double lr,
                     double momentum, double scale) {
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i] * scale;
    if (momentum != 0.0) {
      velocity[i] = momentum * velocity[i] + g;
      param[i] -= lr * velocity[i];
    } else {
      param[i] -= lr * g;
    }
  }
}

// Visits every (param, grad) pair in a fixed order.
template <class F>
void for_each_param(RqvaeModel& m, Gradients& g, AttentionParams* attention, F&& f) {
  auto mlp = [&](Mlp& p, Mlp& q) {
    f(std::span<double>(p.hidden.weight.data), std::span<double>(q.hidden.weight.data));
    f(std::span<double>(p.hidden.bias), std::span<double>(q.hidden.bias));
    f(std::span<double>(p.output.weight.data), std::span<double>(q.output.weight.data));
    f(std::span<double>(p.output.bias), std::span<double>(q.output.bias));
  };
  mlp(m.encoder, g.encoder);
  mlp(m.decoder, g.decoder);
  for (std::size_t l = 0; l < m.stack.depth(); ++l)
    f(std::span<double>(m.stack.levels[l].vectors.data), std::span<double>(g.codebooks[l].data));
  if (attention != nullptr) f(std::span<double>(attention->weight.data), std::span<double>(g.attention.data));
}

inline void zero(Gradients& g) {
  auto clear = [](Mlp& p) {
    p.hidden.weight.fill(0.0);
    std::fill(p.hidden.bias.begin(), p.hidden.bias.end(), 0.0);
    p.output.weight.fill(0.0);
    std::fill(p.output.bias.begin(), p.output.bias.end(), 0.0);
  };
  clear(g.encoder);
  clear(g.decoder);
  for (auto& c : g.codebooks) c.fill(0.0);
  g.attention.fill(0.0);
}

// Sample i -> encoder input. The reconstruction target equals the input value.
using InputFn = std::function<Vec(std::size_t)>;
// Sample i, d L / d input -> accumulate into gradients of upstream parameters.
using InputGradFn = std::function<void(std::size_t, std::span<const double>, Gradients&)>;

inline TrainResult train_loop(RqvaeModel& m, std::size_t n, const InputFn& input, const InputGradFn& input_grad,
                              AttentionParams* attention, const TrainConfig& cfg) {
  if (n == 0) throw DataError("train: no inputs");
  if (cfg.batch_size == 0 || !(cfg.lr > 0.0)) throw UsageError("train: batch_size and lr must be positive");

  std::mt19937_64 rng(cfg.seed);
  TrainResult result;
  {
    std::vector<Vec> initial;
    initial.reserve(n);
    for (std::size_t i = 0; i < n; ++i) initial.push_back(input(i));
    init_codebooks_kmeans(m, initial, cfg.kmeans_iterations, rng);
    result.init_residual_norms = mean_residual_norms(m, initial);
  }

  Gradients grad = Gradients::zeros_like(m);
  if (attention != nullptr) grad.attention = Matrix(attention->weight.rows, attention->weight.cols);
  Gradients velocity = grad;
  detail::zero(velocity);
  std::vector<std::span<double>> velocity_slots;
  for_each_param(m, velocity, attention,
                 [&](std::span<double>, std::span<double> v) { velocity_slots.push_back(v); });

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const auto depth = m.stack.depth();
  Vec input_g(m.input_dim());

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (auto& cb : m.stack.levels) std::fill(cb.usage_counts.begin(), cb.usage_counts.end(), 0);
    std::vector<std::vector<Vec>> last_batch_residuals(depth);
    double sum_recon = 0.0, sum_rq = 0.0;

    try {
      for (std::size_t start = 0; start < n; start += cfg.batch_size) {
        const std::size_t end = std::min(n, start + cfg.batch_size);
        zero(grad);
        for (auto& r : last_batch_residuals) r.clear();
        for (std::size_t b = start; b < end; ++b) {
          const auto idx = order[b];
          const Vec x = input(idx);
          const ForwardState s = forward(m, x, x);
          sum_recon += s.recon;
          sum_rq += s.rq;
          for (std::size_t l = 0; l < depth; ++l) {
            ++m.stack.levels[l].usage_counts[s.quant.codewords[l]];
            last_batch_residuals[l].push_back(s.quant.residuals[l]);
          }
          if (input_grad) {
            backward(m, s, grad, input_g);
            input_grad(idx, input_g, grad);
          } else {
            backward(m, s, grad);
          }
        }
        const double scale = 1.0 / static_cast<double>(end - start);
        std::size_t slot = 0;
        for_each_param(m, grad, attention, [&](std::span<double> p, std::span<double> g) {
          sgd_step(p, g, velocity_slots[slot++], cfg.lr, cfg.momentum, scale);
        });
        for (const auto& cb : m.stack.levels)
          if (!all_finite(cb.vectors.data))
            throw DivergenceError("numerical divergence: non-finite codebook at epoch " + std::to_string(epoch));
      }
    } catch (const DivergenceError& e) {
      result.diverged = true;
      result.error = std::string(e.what()) + " (epoch " + std::to_string(epoch) + ")";
      return result;
    }

    EpochStats st;
    st.epoch = epoch;
    st.mean_recon = sum_recon / static_cast<double>(n);
    st.mean_rq = sum_rq / static_cast<double>(n);
    if (cfg.reseed_dead_codes) {
      for (std::size_t l = 0; l < depth; ++l) {
        auto& cb = m.stack.levels[l];
        const auto& pool = last_batch_residuals[l];
        if (pool.empty()) continue;
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        for (std::size_t k = 0; k < cb.size(); ++k) {
          if (cb.usage_counts[k] != 0) continue;
          const auto& r = pool[pick(rng)];
          std::copy(r.begin(), r.end(), cb.vectors.row(k).begin());
          ++st.reseeded;
        }
      }
    }
    result.trace.push_back(st);
  }
  return result;
}

}  // namespace detail

// Plain training on fixed input vectors. Deterministic for a fixed seed.
inline TrainResult train(RqvaeModel& m, std::span<const Vec> inputs, const TrainConfig& cfg) {
  for (const auto& x : inputs)
    if (x.size() != m.input_dim()) throw DataError("train: input has the wrong dimension");
  return detail::train_loop(
      m, inputs.size(), [&](std::size_t i) { return inputs[i]; }, {}, nullptr, cfg);
}

struct UserReviews {
  std::string user_id;
  std::vector<Vec> reviews;
  Vec id_vec;
};

// Trains the autoencoder and the shared attention matrix together. The fused
// vector feeds the encoder; as reconstruction target it is a constant.
inline TrainResult train_joint(RqvaeModel& m, AttentionParams& attention, std::span<const UserReviews> users,
                               const TrainConfig& cfg) {
  return detail::train_loop(
      m, users.size(), [&](std::size_t i) { return fuse(attention, users[i].reviews, users[i].id_vec); },
      [&](std::size_t i, std::span<const double> g, Gradients& grads) {
        accumulate_fusion_grad(attention, users[i].reviews, users[i].id_vec, g, grads.attention);
      },
      &attention, cfg);
}

// --- checkpoint --------------------------------------------------------------

namespace detail {

inline constexpr char kCheckpointMagic[8] = {'S', 'E', 'M', 'I', 'D', 'R', 'Q', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw DataError("checkpoint: truncated");
  return v;
}

inline void put_doubles(std::ostream& os, std::span<const double> v) {
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

inline void get_doubles(std::istream& is, std::span<double> v) {
  if (!is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double))))
    throw DataError("checkpoint: truncated");
}

}  // namespace detail

inline void save_checkpoint(std::ostream& os, const RqvaeModel& m, const AttentionParams* attention = nullptr) {
  using namespace detail;
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  put<std::uint32_t>(os, kCheckpointVersion);
  put<std::uint64_t>(os, m.input_dim());
  put<std::uint64_t>(os, m.encoder.hidden.out());
  put<std::uint64_t>(os, m.code_dim());
  put<std::uint64_t>(os, m.stack.codebook_size());
  put<std::uint64_t>(os, m.stack.depth());
  put<double>(os, m.beta);
  for (const Mlp* mlp : {&m.encoder, &m.decoder}) {
    put_doubles(os, mlp->hidden.weight.data);
    put_doubles(os, mlp->hidden.bias);
    put_doubles(os, mlp->output.weight.data);
    put_doubles(os, mlp->output.bias);
  }
  for (const auto& cb : m.stack.levels) put_doubles(os, cb.vectors.data);
  put<std::uint8_t>(os, attention != nullptr ? 1 : 0);
  if (attention != nullptr) {
    put<std::uint64_t>(os, attention->dimension());
    put<std::uint64_t>(os, attention->seed);
    put_doubles(os, attention->weight.data);
  }
}

struct Checkpoint {
  RqvaeModel model;
  std::optional<AttentionParams> attention;
};

inline Checkpoint load_checkpoint(std::istream& is) {
  using namespace detail;
  char magic[8];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw DataError("checkpoint: bad magic");
  if (get<std::uint32_t>(is) != kCheckpointVersion) throw DataError("checkpoint: unsupported version");
  RqvaeConfig cfg;
  cfg.input_dim = get<std::uint64_t>(is);
  cfg.hidden_dim = get<std::uint64_t>(is);
  cfg.code_dim = get<std::uint64_t>(is);
  cfg.codebook_size = get<std::uint64_t>(is);
  cfg.levels = get<std::uint64_t>(is);
  cfg.beta = get<double>(is);
  Checkpoint ck{make_model(cfg), std::nullopt};
  for (Mlp* mlp : {&ck.model.encoder, &ck.model.decoder}) {
    get_doubles(is, mlp->hidden.weight.data);
    get_doubles(is, mlp->hidden.bias);
    get_doubles(is, mlp->output.weight.data);
    get_doubles(is, mlp->output.bias);
  }
  for (auto& cb : ck.model.stack.levels) get_doubles(is, cb.vectors.data);
  if (get<std::uint8_t>(is) != 0) {
    const auto d = get<std::uint64_t>(is);
    AttentionParams a{Matrix(d, d), get<std::uint64_t>(is)};
    get_doubles(is, a.weight.data);
    ck.attention = std::move(a);
  }
  return ck;
}

}  // namespace semid
