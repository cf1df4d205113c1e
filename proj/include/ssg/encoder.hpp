#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "ssg/autodiff.hpp"
#include "ssg/matrix.hpp"

namespace ssg {

struct EncoderConfig {
  int dim = 512;
  int heads = 4;
  int layers = 4;
  int ffn_mult = 2;       // hidden width = ffn_mult * dim
  double dropout = 0.1;
  bool mask_padding = true;  // hide zero-padded KV slots from attention

  void validate() const {
    if (dim <= 0 || heads <= 0 || layers <= 0 || ffn_mult <= 0)
      throw std::invalid_argument("EncoderConfig: non-positive field");
    if (dim % heads != 0) throw std::invalid_argument("EncoderConfig: dim not divisible by heads");
    if (dropout < 0.0 || dropout >= 1.0)
      throw std::invalid_argument("EncoderConfig: dropout out of range");
  }
};

// Fixed sinusoidal embeddings over sequence positions.
inline Matrix sinusoidal_positions(int n, int dim) {
  Matrix p(n, dim);
  for (int pos = 0; pos < n; ++pos) {
    for (int i = 0; i < dim; ++i) {
      const double exponent = static_cast<double>(2 * (i / 2)) / dim;
      const double rate = std::pow(10000.0, exponent);
      const double a = pos / rate;
      p.at(pos, i) = (i % 2 == 0) ? std::sin(a) : std::cos(a);
    }
  }
  return p;
}

// Per-call inspection hooks for tests.
struct EncoderTrace {
  std::vector<int> attention_nodes;  // softmax nodes, layers x heads
  int kv_with_positions = -1;
};

// Transformer encoder block stack with cross attention: learnable query
// vectors attend over an ordered KV sequence of input features. Positional
// embeddings are added to the keys/values only.
class CrossAttentionEncoder {
 public:
  CrossAttentionEncoder() = default;
  CrossAttentionEncoder(std::string name, const EncoderConfig& cfg, Rng& rng)
      : name_(std::move(name)), cfg_(cfg) {
    cfg_.validate();
    layers_.resize(cfg_.layers);
    for (int l = 0; l < cfg_.layers; ++l) {
      auto& L = layers_[l];
      const std::string p = name_ + ".layer" + std::to_string(l) + ".";
      const int d = cfg_.dim, f = cfg_.ffn_mult * cfg_.dim;
      L.wq = ad::Param(p + "wq", ad::xavier_uniform(d, d, rng));
      L.bq = ad::Param(p + "bq", Matrix(1, d));
      L.wk = ad::Param(p + "wk", ad::xavier_uniform(d, d, rng));
      L.bk = ad::Param(p + "bk", Matrix(1, d));
      L.wv = ad::Param(p + "wv", ad::xavier_uniform(d, d, rng));
      L.bv = ad::Param(p + "bv", Matrix(1, d));
      L.wo = ad::Param(p + "wo", ad::xavier_uniform(d, d, rng));
      L.bo = ad::Param(p + "bo", Matrix(1, d));
      L.ln1_g = ad::Param(p + "ln1_g", ones(1, d));
      L.ln1_b = ad::Param(p + "ln1_b", Matrix(1, d));
      L.w1 = ad::Param(p + "ffn_w1", ad::xavier_uniform(d, f, rng));
      L.c1 = ad::Param(p + "ffn_b1", Matrix(1, f));
      L.w2 = ad::Param(p + "ffn_w2", ad::xavier_uniform(f, d, rng));
      L.c2 = ad::Param(p + "ffn_b2", Matrix(1, d));
      L.ln2_g = ad::Param(p + "ln2_g", ones(1, d));
      L.ln2_b = ad::Param(p + "ln2_b", Matrix(1, d));
    }
  }

  const EncoderConfig& config() const { return cfg_; }
  const std::string& name() const { return name_; }

  // queries: (nq x dim), kv: (nk x dim). kv_valid marks real KV slots; padded
  // slots are masked out of the attention softmax when cfg.mask_padding.
  // Returns (nq x dim) node.
  int forward(ad::Tape& t, int queries, int kv, const std::vector<char>& kv_valid,
              bool training, Rng& rng, EncoderTrace* trace = nullptr) {
    const Matrix& kvv = t.value(kv);
    const int nk = kvv.rows;
    if (nk == 0) throw std::invalid_argument("encoder: empty KV");
    if (t.value(queries).cols != cfg_.dim || kvv.cols != cfg_.dim)
      throw std::invalid_argument("encoder: dimension mismatch");
    if (static_cast<int>(kv_valid.size()) != nk)
      throw std::invalid_argument("encoder: kv_valid size mismatch");

    int kv_pe = t.add(kv, t.constant(sinusoidal_positions(nk, cfg_.dim)));
    if (trace) trace->kv_with_positions = kv_pe;

    Matrix mask_row(1, nk);
    bool any_masked = false;
    for (int i = 0; i < nk; ++i) {
      if (cfg_.mask_padding && !kv_valid[i]) {
        mask_row.at(0, i) = -1e9;
        any_masked = true;
      }
    }

    int x = queries;
    const int dh = cfg_.dim / cfg_.heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (auto& L : layers_) {
      const int nq = t.value(x).rows;
      int qp = t.add_rowwise(t.matmul(x, t.param(L.wq)),
                             t.param(L.bq));
      int kp = t.add_rowwise(t.matmul(kv_pe, t.param(L.wk)),
                             t.param(L.bk));
      int vp = t.add_rowwise(t.matmul(kv_pe, t.param(L.wv)),
                             t.param(L.bv));
      std::vector<int> head_outs;
      for (int h = 0; h < cfg_.heads; ++h) {
        int qh = t.slice_cols(qp, h * dh, dh);
        int kh = t.slice_cols(kp, h * dh, dh);
        int vh = t.slice_cols(vp, h * dh, dh);
        int scores = t.mul_scalar(t.matmul_nt(qh, kh), scale);
        if (any_masked) {
          Matrix m(nq, nk);
          for (int i = 0; i < nq; ++i)
            for (int j = 0; j < nk; ++j) m.at(i, j) = mask_row.at(0, j);
          scores = t.add(scores, t.constant(std::move(m)));
        }
        int attn = t.softmax_rows(scores);
        if (trace) trace->attention_nodes.push_back(attn);
        head_outs.push_back(t.matmul(attn, vh));
      }
      int concat = cfg_.heads == 1 ? head_outs[0] : t.concat_cols(head_outs);
      int attn_out = t.add_rowwise(t.matmul(concat, t.param(L.wo)),
                                   t.param(L.bo));
      attn_out = t.dropout(attn_out, cfg_.dropout, rng, training);
      int res1 = t.layer_norm_rows(t.add(x, attn_out), t.param(L.ln1_g),
                                   t.param(L.ln1_b));
      int ff = t.add_rowwise(t.matmul(res1, t.param(L.w1)),
                             t.param(L.c1));
      ff = t.gelu(ff);
      ff = t.add_rowwise(t.matmul(ff, t.param(L.w2)),
                         t.param(L.c2));
      ff = t.dropout(ff, cfg_.dropout, rng, training);
      x = t.layer_norm_rows(t.add(res1, ff), t.param(L.ln2_g),
                            t.param(L.ln2_b));
    }
    return x;
  }

  // Convenience, non-training path over plain matrices.
  Matrix encode(const Matrix& queries, const Matrix& kv,
                const std::vector<char>& kv_valid) {
    ad::Tape t;
    Rng rng(0);
    const int out = forward(t, t.constant(queries), t.constant(kv), kv_valid, false, rng);
    return t.value(out);
  }

  void collect_params(std::vector<ad::Param*>& out) {
    for (auto& L : layers_)
      for (ad::Param* p :
           {&L.wq, &L.bq, &L.wk, &L.bk, &L.wv, &L.bv, &L.wo, &L.bo, &L.ln1_g, &L.ln1_b, &L.w1,
            &L.c1, &L.w2, &L.c2, &L.ln2_g, &L.ln2_b})
        out.push_back(p);
  }

 private:
  static Matrix ones(int r, int c) {
    Matrix m(r, c);
    std::fill(m.d.begin(), m.d.end(), 1.0);
    return m;
  }

  struct Layer {
    ad::Param wq, bq, wk, bk, wv, bv, wo, bo;
    ad::Param ln1_g, ln1_b;
    ad::Param w1, c1, w2, c2;
    ad::Param ln2_g, ln2_b;
  };

  std::string name_;
  EncoderConfig cfg_;
  std::vector<Layer> layers_;
};

}  // namespace ssg
