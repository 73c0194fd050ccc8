// Copyright 2026 the chemlm authors
// SPDX-License-Identifier: Apache-2.0
//
// RoBERTa-style transformer encoder (post-norm, GELU, learned positions)
// with an MLM head and a linear classification head. Forward and exact
// analytic backward, written straight-line so the finite-difference tests
// can pin every parameter tensor.
#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "chemlm/datapipe.hpp"
#include "chemlm/rng.hpp"
#include "chemlm/tensor.hpp"
#include "chemlm/tokenize.hpp"

namespace chemlm {

struct AllPositionsIgnored : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ModelConfig {
  int n_layers = 2;
  int n_heads = 2;
  int d_model = 64;
  int d_ff = 256;
  int vocab_size = 0;
  int max_positions = 512;
  double dropout_rate = 0.1;

  int attention_mechanisms() const { return n_layers * n_heads; }

  void validate() const {
    if (d_model % n_heads != 0) throw ShapeMismatch("d_model must be divisible by n_heads");
    if (max_positions > kMaxSequenceLength)
      throw ShapeMismatch("max_positions exceeds the 512-token cap");
    if (vocab_size <= 0) throw ShapeMismatch("vocab_size must be set");
  }

  bool operator==(const ModelConfig&) const = default;
};

inline nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"n_layers", c.n_layers},     {"n_heads", c.n_heads},
          {"d_model", c.d_model},       {"d_ff", c.d_ff},
          {"vocab_size", c.vocab_size}, {"max_positions", c.max_positions},
          {"dropout_rate", c.dropout_rate}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.n_layers = j.at("n_layers").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.d_ff = j.at("d_ff").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.max_positions = j.at("max_positions").get<int>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  return c;
}

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kMaskBias = -1e9;
inline constexpr double kInitStd = 0.02;

namespace nn {

inline double gelu(double x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double a = 0.044715;
  return 0.5 * x * (1.0 + std::tanh(c * (x + a * x * x * x)));
}

inline double gelu_grad(double x) {
  constexpr double c = 0.7978845608028654;
  constexpr double a = 0.044715;
  double u = c * (x + a * x * x * x);
  double t = std::tanh(u);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c * (1.0 + 3.0 * a * x * x);
}

// y[N,dout] = x[N,din] * w[din,dout] + b
inline void linear_forward(const std::vector<double>& x, int n, int din, const Tensor& w,
                           const Tensor& b, std::vector<double>& y) {
  const int dout = w.shape[1];
  y.assign(static_cast<std::size_t>(n) * dout, 0.0);
  for (int i = 0; i < n; ++i) {
    const double* xi = &x[static_cast<std::size_t>(i) * din];
    double* yi = &y[static_cast<std::size_t>(i) * dout];
    for (int o = 0; o < dout; ++o) yi[o] = b.v[o];
    for (int k = 0; k < din; ++k) {
      double xv = xi[k];
      if (xv == 0.0) continue;
      const double* wk = &w.v[static_cast<std::size_t>(k) * dout];
      for (int o = 0; o < dout; ++o) yi[o] += xv * wk[o];
    }
  }
}

inline void linear_backward(const std::vector<double>& x, int n, int din, const Tensor& w,
                            const std::vector<double>& dy, Tensor& dw, Tensor& db,
                            std::vector<double>& dx) {
  const int dout = w.shape[1];
  dx.assign(static_cast<std::size_t>(n) * din, 0.0);
  for (int i = 0; i < n; ++i) {
    const double* xi = &x[static_cast<std::size_t>(i) * din];
    const double* dyi = &dy[static_cast<std::size_t>(i) * dout];
    double* dxi = &dx[static_cast<std::size_t>(i) * din];
    for (int o = 0; o < dout; ++o) db.v[o] += dyi[o];
    for (int k = 0; k < din; ++k) {
      double* dwk = &dw.v[static_cast<std::size_t>(k) * dout];
      const double* wk = &w.v[static_cast<std::size_t>(k) * dout];
      double acc = 0.0;
      for (int o = 0; o < dout; ++o) {
        dwk[o] += xi[k] * dyi[o];
        acc += wk[o] * dyi[o];
      }
      dxi[k] = acc;
    }
  }
}

struct LayerNormCache {
  std::vector<double> xhat;
  std::vector<double> inv_std;  // per row
};

inline void layernorm_forward(const std::vector<double>& x, int n, int d, const Tensor& gamma,
                              const Tensor& beta, std::vector<double>& y, LayerNormCache& cache) {
  y.resize(x.size());
  cache.xhat.resize(x.size());
  cache.inv_std.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double* xi = &x[static_cast<std::size_t>(i) * d];
    double mean = 0.0;
    for (int k = 0; k < d; ++k) mean += xi[k];
    mean /= d;
    double var = 0.0;
    for (int k = 0; k < d; ++k) var += (xi[k] - mean) * (xi[k] - mean);
    var /= d;
    double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    cache.inv_std[i] = inv;
    for (int k = 0; k < d; ++k) {
      double xh = (xi[k] - mean) * inv;
      cache.xhat[static_cast<std::size_t>(i) * d + k] = xh;
      y[static_cast<std::size_t>(i) * d + k] = gamma.v[k] * xh + beta.v[k];
    }
  }
}

inline void layernorm_backward(int n, int d, const Tensor& gamma, const LayerNormCache& cache,
                               const std::vector<double>& dy, Tensor& dgamma, Tensor& dbeta,
                               std::vector<double>& dx) {
  dx.assign(static_cast<std::size_t>(n) * d, 0.0);
  for (int i = 0; i < n; ++i) {
    const double* dyi = &dy[static_cast<std::size_t>(i) * d];
    const double* xh = &cache.xhat[static_cast<std::size_t>(i) * d];
    double sum_g = 0.0, sum_gx = 0.0;
    for (int k = 0; k < d; ++k) {
      double g = dyi[k] * gamma.v[k];
      sum_g += g;
      sum_gx += g * xh[k];
      dgamma.v[k] += dyi[k] * xh[k];
      dbeta.v[k] += dyi[k];
    }
    for (int k = 0; k < d; ++k) {
      double g = dyi[k] * gamma.v[k];
      dx[static_cast<std::size_t>(i) * d + k] =
          cache.inv_std[i] * (g - sum_g / d - xh[k] * sum_gx / d);
    }
  }
}

}  // namespace nn

struct AttentionRecord {
  int layer = 0;
  int head = 0;
  std::vector<std::vector<double>> matrix;  // L_real x L_real, row-stochastic
};

struct Batch {
  int size = 0;
  int length = 0;
  std::vector<int> ids;   // size*length
  std::vector<int> mask;  // size*length, 1 = real token

  static Batch from_sequences(const std::vector<TokenSequence>& seqs) {
    Batch b;
    b.size = static_cast<int>(seqs.size());
    b.length = b.size ? static_cast<int>(seqs[0].ids.size()) : 0;
    for (const auto& s : seqs) {
      if (static_cast<int>(s.ids.size()) != b.length)
        throw ShapeMismatch("ragged batch lengths");
      b.ids.insert(b.ids.end(), s.ids.begin(), s.ids.end());
      b.mask.insert(b.mask.end(), s.attention_mask.begin(), s.attention_mask.end());
    }
    return b;
  }
};

inline ParamMap init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParamMap p;
  Rng rng(seed);
  auto trunc_normal = [&](Tensor& t) {
    for (auto& x : t.v) {
      double z;
      do {
        z = rand_normal(rng);
      } while (std::abs(z) > 2.0);
      x = z * kInitStd;
    }
  };
  auto add = [&](const std::string& name, std::vector<int> shape, bool random) {
    Tensor t(std::move(shape));
    if (random) trunc_normal(t);
    p.emplace(name, std::move(t));
  };
  const int d = cfg.d_model, f = cfg.d_ff, v = cfg.vocab_size;
  add("embed.token", {v, d}, true);
  add("embed.position", {cfg.max_positions, d}, true);
  for (int l = 0; l < cfg.n_layers; ++l) {
    std::string pre = "layer" + std::to_string(l) + ".";
    add(pre + "attn.wq", {d, d}, true);
    add(pre + "attn.bq", {1, d}, false);
    add(pre + "attn.wk", {d, d}, true);
    add(pre + "attn.bk", {1, d}, false);
    add(pre + "attn.wv", {d, d}, true);
    add(pre + "attn.bv", {1, d}, false);
    add(pre + "attn.wo", {d, d}, true);
    add(pre + "attn.bo", {1, d}, false);
    add(pre + "ln1.gamma", {1, d}, false);
    add(pre + "ln1.beta", {1, d}, false);
    add(pre + "ffn.w1", {d, f}, true);
    add(pre + "ffn.b1", {1, f}, false);
    add(pre + "ffn.w2", {f, d}, true);
    add(pre + "ffn.b2", {1, d}, false);
    add(pre + "ln2.gamma", {1, d}, false);
    add(pre + "ln2.beta", {1, d}, false);
    for (const char* g : {"ln1.gamma", "ln2.gamma"})
      for (auto& x : p.at(pre + g).v) x = 1.0;
  }
  add("mlm.w", {d, v}, true);
  add("mlm.b", {1, v}, false);
  add("cls.w", {d, 2}, true);
  add("cls.b", {1, 2}, false);
  return p;
}

enum class TaskMode { Mlm, Classify };

namespace detail {

struct LayerCache {
  std::vector<double> input;          // B*L*D
  std::vector<double> q, k, vv;       // B*L*D
  std::vector<double> att;            // B*H*L*L
  std::vector<double> ctx;            // B*L*D
  std::vector<double> attn_proj;      // B*L*D (after output projection)
  std::vector<double> drop1;          // dropout mask (empty when inactive)
  std::vector<double> res1;           // B*L*D
  nn::LayerNormCache ln1;
  std::vector<double> mid;            // B*L*D (after ln1)
  std::vector<double> f1pre, f1;      // B*L*F
  std::vector<double> f2;             // B*L*D
  std::vector<double> drop2;
  std::vector<double> res2;
  nn::LayerNormCache ln2;
  std::vector<double> out;            // B*L*D
};

struct ForwardCache {
  std::vector<double> embedded;  // B*L*D (post-dropout)
  std::vector<double> drop_embed;
  std::vector<LayerCache> layers;
  std::vector<double> final_hidden;  // alias of last layer out
};

}  // namespace detail

class TransformerModel {
 public:
  ModelConfig cfg;
  ParamMap params;

  TransformerModel() = default;
  TransformerModel(ModelConfig c, std::uint64_t seed) : cfg(c), params(init_params(c, seed)) {}
  TransformerModel(ModelConfig c, ParamMap p) : cfg(c), params(std::move(p)) { cfg.validate(); }

  struct ForwardOutput {
    std::vector<double> logits;  // B*L*V (mlm) or B*2 (classify)
    std::vector<AttentionRecord> attention;  // batch item 0, when captured
  };

  // Encoder forward; caches everything needed for the analytic backward.
  std::vector<double> encode(const Batch& batch, detail::ForwardCache& cache, bool training,
                             Rng* dropout_rng, std::vector<AttentionRecord>* capture) const {
    const int B = batch.size, L = batch.length, D = cfg.d_model, H = cfg.n_heads;
    const int dh = D / H;
    if (L > cfg.max_positions) throw ShapeMismatch("sequence length exceeds max_positions");
    for (int id : batch.ids)
      if (id < 0 || id >= cfg.vocab_size) throw ShapeMismatch("token id out of vocab range");
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const bool drop = training && cfg.dropout_rate > 0.0 && dropout_rng != nullptr;

    auto apply_dropout = [&](std::vector<double>& x, std::vector<double>& mask_out) {
      if (!drop) return;
      mask_out.resize(x.size());
      const double keep = 1.0 - cfg.dropout_rate;
      for (std::size_t i = 0; i < x.size(); ++i) {
        double m = rand_unit(*dropout_rng) < keep ? 1.0 / keep : 0.0;
        mask_out[i] = m;
        x[i] *= m;
      }
    };

    const Tensor& tok = params.at("embed.token");
    const Tensor& pos = params.at("embed.position");
    std::vector<double> h(static_cast<std::size_t>(B) * L * D);
    for (int b = 0; b < B; ++b)
      for (int l = 0; l < L; ++l) {
        int id = batch.ids[static_cast<std::size_t>(b) * L + l];
        double* out = &h[(static_cast<std::size_t>(b) * L + l) * D];
        const double* te = &tok.v[static_cast<std::size_t>(id) * D];
        const double* pe = &pos.v[static_cast<std::size_t>(l) * D];
        for (int k = 0; k < D; ++k) out[k] = te[k] + pe[k];
      }
    apply_dropout(h, cache.drop_embed);
    cache.embedded = h;
    cache.layers.assign(static_cast<std::size_t>(cfg.n_layers), {});

    const int N = B * L;
    for (int l = 0; l < cfg.n_layers; ++l) {
      auto& lc = cache.layers[l];
      lc.input = h;
      const std::string pre = "layer" + std::to_string(l) + ".";
      nn::linear_forward(h, N, D, params.at(pre + "attn.wq"), params.at(pre + "attn.bq"), lc.q);
      nn::linear_forward(h, N, D, params.at(pre + "attn.wk"), params.at(pre + "attn.bk"), lc.k);
      nn::linear_forward(h, N, D, params.at(pre + "attn.wv"), params.at(pre + "attn.bv"), lc.vv);

      lc.att.assign(static_cast<std::size_t>(B) * H * L * L, 0.0);
      lc.ctx.assign(static_cast<std::size_t>(N) * D, 0.0);
      for (int b = 0; b < B; ++b) {
        const int* mrow = &batch.mask[static_cast<std::size_t>(b) * L];
        bool any_real = false;
        for (int j = 0; j < L; ++j) any_real |= (mrow[j] != 0);
        for (int hd = 0; hd < H; ++hd) {
          for (int i = 0; i < L; ++i) {
            double* arow =
                &lc.att[((static_cast<std::size_t>(b) * H + hd) * L + i) * L];
            if (!any_real) {
              arow[0] = 1.0;  // degenerate all-pad row attends bos position
            } else {
              double maxv = -1e300;
              std::vector<double> scores(L);
              for (int j = 0; j < L; ++j) {
                double s = 0.0;
                const double* qi = &lc.q[(static_cast<std::size_t>(b) * L + i) * D + hd * dh];
                const double* kj = &lc.k[(static_cast<std::size_t>(b) * L + j) * D + hd * dh];
                for (int k2 = 0; k2 < dh; ++k2) s += qi[k2] * kj[k2];
                s *= scale;
                if (mrow[j] == 0) s += kMaskBias;
                scores[j] = s;
                maxv = std::max(maxv, s);
              }
              double z = 0.0;
              for (int j = 0; j < L; ++j) {
                scores[j] = std::exp(scores[j] - maxv);
                z += scores[j];
              }
              for (int j = 0; j < L; ++j) arow[j] = scores[j] / z;
            }
            double* crow = &lc.ctx[(static_cast<std::size_t>(b) * L + i) * D + hd * dh];
            for (int j = 0; j < L; ++j) {
              double a = arow[j];
              if (a == 0.0) continue;
              const double* vj = &lc.vv[(static_cast<std::size_t>(b) * L + j) * D + hd * dh];
              for (int k2 = 0; k2 < dh; ++k2) crow[k2] += a * vj[k2];
            }
          }
        }
      }
      if (capture && B > 0) {
        int real = 0;
        for (int j = 0; j < L; ++j) real += batch.mask[j];
        if (real == 0) real = 1;
        for (int hd = 0; hd < H; ++hd) {
          AttentionRecord rec;
          rec.layer = l;
          rec.head = hd;
          rec.matrix.assign(real, std::vector<double>(real, 0.0));
          for (int i = 0; i < real; ++i)
            for (int j = 0; j < real; ++j)
              rec.matrix[i][j] = lc.att[((static_cast<std::size_t>(0) * H + hd) * L + i) * L + j];
          capture->push_back(std::move(rec));
        }
      }

      nn::linear_forward(lc.ctx, N, D, params.at(pre + "attn.wo"), params.at(pre + "attn.bo"),
                         lc.attn_proj);
      std::vector<double> dropped = lc.attn_proj;
      apply_dropout(dropped, lc.drop1);
      lc.res1.resize(dropped.size());
      for (std::size_t i = 0; i < dropped.size(); ++i) lc.res1[i] = lc.input[i] + dropped[i];
      nn::layernorm_forward(lc.res1, N, D, params.at(pre + "ln1.gamma"),
                            params.at(pre + "ln1.beta"), lc.mid, lc.ln1);

      nn::linear_forward(lc.mid, N, D, params.at(pre + "ffn.w1"), params.at(pre + "ffn.b1"),
                         lc.f1pre);
      lc.f1.resize(lc.f1pre.size());
      for (std::size_t i = 0; i < lc.f1pre.size(); ++i) lc.f1[i] = nn::gelu(lc.f1pre[i]);
      nn::linear_forward(lc.f1, N, cfg.d_ff, params.at(pre + "ffn.w2"), params.at(pre + "ffn.b2"),
                         lc.f2);
      std::vector<double> dropped2 = lc.f2;
      apply_dropout(dropped2, lc.drop2);
      lc.res2.resize(dropped2.size());
      for (std::size_t i = 0; i < dropped2.size(); ++i) lc.res2[i] = lc.mid[i] + dropped2[i];
      nn::layernorm_forward(lc.res2, N, D, params.at(pre + "ln2.gamma"),
                            params.at(pre + "ln2.beta"), lc.out, lc.ln2);
      h = lc.out;
    }
    cache.final_hidden = h;
    return h;
  }

  ForwardOutput forward_mlm(const Batch& batch, bool capture_attention = false,
                            bool training = false, Rng* dropout_rng = nullptr) const {
    detail::ForwardCache cache;
    ForwardOutput out;
    std::vector<AttentionRecord>* cap = capture_attention ? &out.attention : nullptr;
    auto h = encode(batch, cache, training, dropout_rng, cap);
    nn::linear_forward(h, batch.size * batch.length, cfg.d_model, params.at("mlm.w"),
                       params.at("mlm.b"), out.logits);
    return out;
  }

  ForwardOutput forward_classify(const Batch& batch, bool capture_attention = false,
                                 bool training = false, Rng* dropout_rng = nullptr) const {
    detail::ForwardCache cache;
    ForwardOutput out;
    std::vector<AttentionRecord>* cap = capture_attention ? &out.attention : nullptr;
    auto h = encode(batch, cache, training, dropout_rng, cap);
    std::vector<double> bos(static_cast<std::size_t>(batch.size) * cfg.d_model);
    for (int b = 0; b < batch.size; ++b)
      std::copy_n(&h[static_cast<std::size_t>(b) * batch.length * cfg.d_model], cfg.d_model,
                  &bos[static_cast<std::size_t>(b) * cfg.d_model]);
    nn::linear_forward(bos, batch.size, cfg.d_model, params.at("cls.w"), params.at("cls.b"),
                       out.logits);
    return out;
  }

  // Mean cross-entropy + full analytic gradient. Mlm labels use the
  // ignore marker; classify labels are one {0,1} per batch row.
  std::pair<double, ParamMap> loss_and_grads(const Batch& batch, const std::vector<int>& labels,
                                             TaskMode mode, bool training = false,
                                             Rng* dropout_rng = nullptr) const {
    detail::ForwardCache cache;
    auto h = encode(batch, cache, training, dropout_rng, nullptr);
    ParamMap grads = zeros_like(params);
    const int B = batch.size, L = batch.length, D = cfg.d_model;
    const int N = B * L;
    double loss = 0.0;
    std::vector<double> dh(static_cast<std::size_t>(N) * D, 0.0);

    if (mode == TaskMode::Mlm) {
      if (static_cast<int>(labels.size()) != N)
        throw ShapeMismatch("mlm labels must match batch positions");
      std::vector<double> logits;
      nn::linear_forward(h, N, D, params.at("mlm.w"), params.at("mlm.b"), logits);
      const int V = cfg.vocab_size;
      long long count = 0;
      for (int lab : labels)
        if (lab != kIgnoreLabel) ++count;
      if (count == 0) throw AllPositionsIgnored("mlm batch has no masked positions");
      std::vector<double> dlogits(logits.size(), 0.0);
      for (int i = 0; i < N; ++i) {
        if (labels[i] == kIgnoreLabel) continue;
        const double* row = &logits[static_cast<std::size_t>(i) * V];
        double maxv = row[0];
        for (int k = 1; k < V; ++k) maxv = std::max(maxv, row[k]);
        double z = 0.0;
        for (int k = 0; k < V; ++k) z += std::exp(row[k] - maxv);
        double logz = std::log(z) + maxv;
        loss += (logz - row[labels[i]]) / static_cast<double>(count);
        double* drow = &dlogits[static_cast<std::size_t>(i) * V];
        for (int k = 0; k < V; ++k)
          drow[k] = std::exp(row[k] - logz) / static_cast<double>(count);
        drow[labels[i]] -= 1.0 / static_cast<double>(count);
      }
      nn::linear_backward(h, N, D, params.at("mlm.w"), dlogits, grads.at("mlm.w"),
                          grads.at("mlm.b"), dh);
    } else {
      if (static_cast<int>(labels.size()) != B)
        throw ShapeMismatch("classify labels must match batch size");
      std::vector<double> bos(static_cast<std::size_t>(B) * D);
      for (int b = 0; b < B; ++b)
        std::copy_n(&h[static_cast<std::size_t>(b) * L * D], D,
                    &bos[static_cast<std::size_t>(b) * D]);
      std::vector<double> logits;
      nn::linear_forward(bos, B, D, params.at("cls.w"), params.at("cls.b"), logits);
      std::vector<double> dlogits(logits.size(), 0.0);
      for (int b = 0; b < B; ++b) {
        const double* row = &logits[static_cast<std::size_t>(b) * 2];
        double maxv = std::max(row[0], row[1]);
        double z = std::exp(row[0] - maxv) + std::exp(row[1] - maxv);
        double logz = std::log(z) + maxv;
        loss += (logz - row[labels[b]]) / B;
        double* drow = &dlogits[static_cast<std::size_t>(b) * 2];
        drow[0] = std::exp(row[0] - logz) / B;
        drow[1] = std::exp(row[1] - logz) / B;
        drow[labels[b]] -= 1.0 / B;
      }
      std::vector<double> dbos;
      nn::linear_backward(bos, B, D, params.at("cls.w"), dlogits, grads.at("cls.w"),
                          grads.at("cls.b"), dbos);
      for (int b = 0; b < B; ++b)
        for (int k = 0; k < D; ++k)
          dh[static_cast<std::size_t>(b) * L * D + k] = dbos[static_cast<std::size_t>(b) * D + k];
    }
    if (!std::isfinite(loss)) throw NonFiniteValue("loss is not finite");
    backward_encoder(batch, cache, dh, grads);
    return {loss, std::move(grads)};
  }

 private:
  void backward_encoder(const Batch& batch, const detail::ForwardCache& cache,
                        std::vector<double> dh, ParamMap& grads) const {
    const int B = batch.size, L = batch.length, D = cfg.d_model, H = cfg.n_heads;
    const int dh_dim = D / H, N = B * L;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh_dim));

    for (int l = cfg.n_layers - 1; l >= 0; --l) {
      const auto& lc = cache.layers[l];
      const std::string pre = "layer" + std::to_string(l) + ".";
      std::vector<double> dres2;
      nn::layernorm_backward(N, D, params.at(pre + "ln2.gamma"), lc.ln2, dh,
                             grads.at(pre + "ln2.gamma"), grads.at(pre + "ln2.beta"), dres2);
      // res2 = mid + dropout(f2)
      std::vector<double> df2 = dres2;
      if (!lc.drop2.empty())
        for (std::size_t i = 0; i < df2.size(); ++i) df2[i] *= lc.drop2[i];
      std::vector<double> df1;
      nn::linear_backward(lc.f1, N, cfg.d_ff, params.at(pre + "ffn.w2"), df2,
                          grads.at(pre + "ffn.w2"), grads.at(pre + "ffn.b2"), df1);
      for (std::size_t i = 0; i < df1.size(); ++i) df1[i] *= nn::gelu_grad(lc.f1pre[i]);
      std::vector<double> dmid_ffn;
      nn::linear_backward(lc.mid, N, D, params.at(pre + "ffn.w1"), df1,
                          grads.at(pre + "ffn.w1"), grads.at(pre + "ffn.b1"), dmid_ffn);
      std::vector<double> dmid = dres2;
      for (std::size_t i = 0; i < dmid.size(); ++i) dmid[i] += dmid_ffn[i];

      std::vector<double> dres1;
      nn::layernorm_backward(N, D, params.at(pre + "ln1.gamma"), lc.ln1, dmid,
                             grads.at(pre + "ln1.gamma"), grads.at(pre + "ln1.beta"), dres1);
      // res1 = input + dropout(attn_proj)
      std::vector<double> dproj = dres1;
      if (!lc.drop1.empty())
        for (std::size_t i = 0; i < dproj.size(); ++i) dproj[i] *= lc.drop1[i];
      std::vector<double> dctx;
      nn::linear_backward(lc.ctx, N, D, params.at(pre + "attn.wo"), dproj,
                          grads.at(pre + "attn.wo"), grads.at(pre + "attn.bo"), dctx);

      std::vector<double> dq(static_cast<std::size_t>(N) * D, 0.0);
      std::vector<double> dk(static_cast<std::size_t>(N) * D, 0.0);
      std::vector<double> dv(static_cast<std::size_t>(N) * D, 0.0);
      for (int b = 0; b < B; ++b) {
        const int* mrow = &batch.mask[static_cast<std::size_t>(b) * L];
        bool any_real = false;
        for (int j = 0; j < L; ++j) any_real |= (mrow[j] != 0);
        for (int hd = 0; hd < H; ++hd) {
          for (int i = 0; i < L; ++i) {
            const double* arow =
                &lc.att[((static_cast<std::size_t>(b) * H + hd) * L + i) * L];
            const double* dcrow =
                &dctx[(static_cast<std::size_t>(b) * L + i) * D + hd * dh_dim];
            // dv and datt
            std::vector<double> datt(L, 0.0);
            for (int j = 0; j < L; ++j) {
              double a = arow[j];
              double* dvj = &dv[(static_cast<std::size_t>(b) * L + j) * D + hd * dh_dim];
              const double* vj =
                  &lc.vv[(static_cast<std::size_t>(b) * L + j) * D + hd * dh_dim];
              double acc = 0.0;
              for (int k2 = 0; k2 < dh_dim; ++k2) {
                if (a != 0.0) dvj[k2] += a * dcrow[k2];
                acc += vj[k2] * dcrow[k2];
              }
              datt[j] = acc;
            }
            if (!any_real) continue;  // fallback rows are constants
            double dot = 0.0;
            for (int j = 0; j < L; ++j) dot += datt[j] * arow[j];
            const double* qi = &lc.q[(static_cast<std::size_t>(b) * L + i) * D + hd * dh_dim];
            double* dqi = &dq[(static_cast<std::size_t>(b) * L + i) * D + hd * dh_dim];
            for (int j = 0; j < L; ++j) {
              double ds = arow[j] * (datt[j] - dot) * scale;
              if (ds == 0.0) continue;
              const double* kj =
                  &lc.k[(static_cast<std::size_t>(b) * L + j) * D + hd * dh_dim];
              double* dkj = &dk[(static_cast<std::size_t>(b) * L + j) * D + hd * dh_dim];
              for (int k2 = 0; k2 < dh_dim; ++k2) {
                dqi[k2] += ds * kj[k2];
                dkj[k2] += ds * qi[k2];
              }
            }
          }
        }
      }
      std::vector<double> dx_q, dx_k, dx_v;
      nn::linear_backward(lc.input, N, D, params.at(pre + "attn.wq"), dq,
                          grads.at(pre + "attn.wq"), grads.at(pre + "attn.bq"), dx_q);
      nn::linear_backward(lc.input, N, D, params.at(pre + "attn.wk"), dk,
                          grads.at(pre + "attn.wk"), grads.at(pre + "attn.bk"), dx_k);
      nn::linear_backward(lc.input, N, D, params.at(pre + "attn.wv"), dv,
                          grads.at(pre + "attn.wv"), grads.at(pre + "attn.bv"), dx_v);
      for (std::size_t i = 0; i < dres1.size(); ++i)
        dh[i] = dres1[i] + dx_q[i] + dx_k[i] + dx_v[i];
    }

    // embedding backward
    if (!cache.drop_embed.empty())
      for (std::size_t i = 0; i < dh.size(); ++i) dh[i] *= cache.drop_embed[i];
    Tensor& dtok = grads.at("embed.token");
    Tensor& dpos = grads.at("embed.position");
    for (int b = 0; b < B; ++b)
      for (int l = 0; l < L; ++l) {
        int id = batch.ids[static_cast<std::size_t>(b) * L + l];
        const double* row = &dh[(static_cast<std::size_t>(b) * L + l) * D];
        double* td = &dtok.v[static_cast<std::size_t>(id) * D];
        double* pd = &dpos.v[static_cast<std::size_t>(l) * D];
        for (int k = 0; k < D; ++k) {
          td[k] += row[k];
          pd[k] += row[k];
        }
      }
  }
};

}  // namespace chemlm
