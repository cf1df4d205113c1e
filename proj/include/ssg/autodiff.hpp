#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ssg/matrix.hpp"
#include "ssg/random.hpp"

namespace ssg::ad {

// Trainable tensor with accumulated gradient and Adamax state. Parameters
// live outside the tape and persist across steps.
struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix m;  // first moment
  Matrix u;  // infinity norm
  Param() = default;
  Param(std::string n, Matrix v)
      : name(std::move(n)),
        value(std::move(v)),
        grad(value.rows, value.cols),
        m(value.rows, value.cols),
        u(value.rows, value.cols) {}
  void zero_grad() { std::fill(grad.d.begin(), grad.d.end(), 0.0); }
};

// Reverse-mode tape. Nodes are appended in topological order; backward()
// walks them in reverse. Ops validate shapes eagerly and throw on mismatch.
class Tape {
 public:
  struct Node {
    Matrix value;
    Matrix grad;  // allocated on demand during backward
    bool requires_grad = false;
    Param* param = nullptr;
    std::function<void(Tape&, Node&)> backprop;
  };

  int constant(Matrix v) {
    nodes_.push_back(Node{std::move(v), {}, false, nullptr, nullptr});
    return last();
  }

  // Differentiable leaf that is not a persistent Param (used by tests).
  int leaf(Matrix v) {
    nodes_.push_back(Node{std::move(v), {}, true, nullptr, nullptr});
    return last();
  }

  int param(Param& p) {
    nodes_.push_back(Node{p.value, {}, true, &p, nullptr});
    return last();
  }

  const Matrix& value(int id) const { return nodes_[id].value; }
  const Matrix& grad(int id) const { return nodes_[id].grad; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  size_t size() const { return nodes_.size(); }

  // ---- elementwise ----

  int add(int a, int b) {
    check_same_shape(a, b, "add");
    Matrix out = nodes_[a].value;
    const Matrix& bv = nodes_[b].value;
    for (size_t i = 0; i < out.size(); ++i) out.d[i] += bv.d[i];
    return unary_or_binary(std::move(out), a, b, [a, b](Tape& t, Node& n) {
      t.accum(a, n.grad);
      t.accum(b, n.grad);
    });
  }

  int sub(int a, int b) {
    check_same_shape(a, b, "sub");
    Matrix out = nodes_[a].value;
    const Matrix& bv = nodes_[b].value;
    for (size_t i = 0; i < out.size(); ++i) out.d[i] -= bv.d[i];
    return unary_or_binary(std::move(out), a, b, [a, b](Tape& t, Node& n) {
      t.accum(a, n.grad);
      Matrix neg = n.grad;
      for (double& v : neg.d) v = -v;
      t.accum(b, neg);
    });
  }

  int hadamard(int a, int b) {
    check_same_shape(a, b, "hadamard");
    Matrix out = nodes_[a].value;
    const Matrix& bv = nodes_[b].value;
    for (size_t i = 0; i < out.size(); ++i) out.d[i] *= bv.d[i];
    return unary_or_binary(std::move(out), a, b, [a, b](Tape& t, Node& n) {
      const Matrix& av = t.nodes_[a].value;
      const Matrix& bv2 = t.nodes_[b].value;
      Matrix ga = n.grad, gb = n.grad;
      for (size_t i = 0; i < ga.size(); ++i) {
        ga.d[i] *= bv2.d[i];
        gb.d[i] *= av.d[i];
      }
      t.accum(a, ga);
      t.accum(b, gb);
    });
  }

  int mul_scalar(int a, double s) {
    Matrix out = nodes_[a].value;
    for (double& v : out.d) v *= s;
    return unary_or_binary(std::move(out), a, -1, [a, s](Tape& t, Node& n) {
      Matrix g = n.grad;
      for (double& v : g.d) v *= s;
      t.accum(a, g);
    });
  }

  // broadcast 1xC bias over all rows of a (NxC)
  int add_rowwise(int a, int b) {
    const Matrix& av = nodes_[a].value;
    const Matrix& bv = nodes_[b].value;
    if (bv.rows != 1 || bv.cols != av.cols)
      throw std::invalid_argument("add_rowwise: bias must be 1x" + std::to_string(av.cols));
    Matrix out = av;
    for (int i = 0; i < out.rows; ++i)
      for (int j = 0; j < out.cols; ++j) out.at(i, j) += bv.at(0, j);
    return unary_or_binary(std::move(out), a, b, [a, b](Tape& t, Node& n) {
      t.accum(a, n.grad);
      Matrix gb(1, n.grad.cols);
      for (int i = 0; i < n.grad.rows; ++i)
        for (int j = 0; j < n.grad.cols; ++j) gb.at(0, j) += n.grad.at(i, j);
      t.accum(b, gb);
    });
  }

  int gelu(int a) {
    static constexpr double kInvSqrt2 = 0.70710678118654752440;
    static constexpr double kInvSqrt2Pi = 0.39894228040143267794;
    Matrix out = nodes_[a].value;
    for (double& v : out.d) v = v * 0.5 * (1.0 + std::erf(v * kInvSqrt2));
    return unary_or_binary(std::move(out), a, -1, [a](Tape& t, Node& n) {
      const Matrix& av = t.nodes_[a].value;
      Matrix g = n.grad;
      for (size_t i = 0; i < g.size(); ++i) {
        const double x = av.d[i];
        const double phi = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        g.d[i] *= phi + x * pdf;
      }
      t.accum(a, g);
    });
  }

  int sigmoid(int a) {
    Matrix out = nodes_[a].value;
    for (double& v : out.d) v = stable_sigmoid(v);
    return unary_or_binary(std::move(out), a, -1, [a](Tape& t, Node& n) {
      Matrix g = n.grad;
      const Matrix& y = n.value;
      for (size_t i = 0; i < g.size(); ++i) g.d[i] *= y.d[i] * (1.0 - y.d[i]);
      t.accum(a, g);
    });
  }

  // Inverted dropout with a fixed mask drawn at construction time.
  int dropout(int a, double p, Rng& rng, bool training) {
    if (p <= 0.0 || !training) return a;
    if (p >= 1.0) throw std::invalid_argument("dropout: p must be < 1");
    const double keep = 1.0 - p;
    Matrix mask(nodes_[a].value.rows, nodes_[a].value.cols);
    for (double& v : mask.d) v = rng.next_double() < p ? 0.0 : 1.0 / keep;
    Matrix out = nodes_[a].value;
    for (size_t i = 0; i < out.size(); ++i) out.d[i] *= mask.d[i];
    return unary_or_binary(std::move(out), a, -1,
                           [a, mask = std::move(mask)](Tape& t, Node& n) {
                             Matrix g = n.grad;
                             for (size_t i = 0; i < g.size(); ++i) g.d[i] *= mask.d[i];
                             t.accum(a, g);
                           });
  }

  // ---- matrix products ----

  int matmul(int a, int b) {
    const Matrix& av = nodes_[a].value;
    const Matrix& bv = nodes_[b].value;
    if (av.cols != bv.rows) throw std::invalid_argument("matmul: inner dims differ");
    Matrix out(av.rows, bv.cols);
    gemm_accum(out, av, bv);
    return unary_or_binary(std::move(out), a, b, [a, b](Tape& t, Node& n) {
      if (t.wants_grad(a)) {
        Matrix ga(t.nodes_[a].value.rows, t.nodes_[a].value.cols);
        gemm_nt_accum(ga, n.grad, t.nodes_[b].value);  // g * B^T
        t.accum(a, ga);
      }
      if (t.wants_grad(b)) {
        Matrix gb(t.nodes_[b].value.rows, t.nodes_[b].value.cols);
        gemm_tn_accum(gb, t.nodes_[a].value, n.grad);  // A^T * g
        t.accum(b, gb);
      }
    });
  }

  // a * b^T
  int matmul_nt(int a, int b) {
    const Matrix& av = nodes_[a].value;
    const Matrix& bv = nodes_[b].value;
    if (av.cols != bv.cols) throw std::invalid_argument("matmul_nt: inner dims differ");
    Matrix out(av.rows, bv.rows);
    gemm_nt_accum(out, av, bv);
    return unary_or_binary(std::move(out), a, b, [a, b](Tape& t, Node& n) {
      if (t.wants_grad(a)) {
        Matrix ga(t.nodes_[a].value.rows, t.nodes_[a].value.cols);
        gemm_accum(ga, n.grad, t.nodes_[b].value);  // g * B
        t.accum(a, ga);
      }
      if (t.wants_grad(b)) {
        Matrix gb(t.nodes_[b].value.rows, t.nodes_[b].value.cols);
        gemm_tn_accum(gb, n.grad, t.nodes_[a].value);  // g^T * A
        t.accum(b, gb);
      }
    });
  }

  // ---- structure ----

  int concat_rows(const std::vector<int>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
    const int cols = nodes_[parts[0]].value.cols;
    int rows = 0;
    for (int p : parts) {
      if (nodes_[p].value.cols != cols)
        throw std::invalid_argument("concat_rows: column mismatch");
      rows += nodes_[p].value.rows;
    }
    Matrix out(rows, cols);
    int r = 0;
    for (int p : parts) {
      const Matrix& pv = nodes_[p].value;
      std::copy(pv.d.begin(), pv.d.end(), out.d.begin() + static_cast<size_t>(r) * cols);
      r += pv.rows;
    }
    bool any = false;
    for (int p : parts) any = any || nodes_[p].requires_grad;
    nodes_.push_back(Node{std::move(out), {}, any, nullptr,
                          [parts](Tape& t, Node& n) {
                            int r2 = 0;
                            for (int p : parts) {
                              const int pr = t.nodes_[p].value.rows;
                              if (t.wants_grad(p)) {
                                Matrix g(pr, n.grad.cols);
                                std::copy(n.grad.d.begin() + static_cast<size_t>(r2) * n.grad.cols,
                                          n.grad.d.begin() +
                                              static_cast<size_t>(r2 + pr) * n.grad.cols,
                                          g.d.begin());
                                t.accum(p, g);
                              }
                              r2 += pr;
                            }
                          }});
    return last();
  }

  int slice_rows(int a, int r0, int n_rows) {
    const Matrix& av = nodes_[a].value;
    if (r0 < 0 || r0 + n_rows > av.rows) throw std::invalid_argument("slice_rows: out of range");
    Matrix out(n_rows, av.cols);
    std::copy(av.d.begin() + static_cast<size_t>(r0) * av.cols,
              av.d.begin() + static_cast<size_t>(r0 + n_rows) * av.cols, out.d.begin());
    return unary_or_binary(std::move(out), a, -1, [a, r0](Tape& t, Node& n) {
      Matrix g(t.nodes_[a].value.rows, t.nodes_[a].value.cols);
      std::copy(n.grad.d.begin(), n.grad.d.end(),
                g.d.begin() + static_cast<size_t>(r0) * g.cols);
      t.accum(a, g);
    });
  }

  int slice_cols(int a, int c0, int n_cols) {
    const Matrix& av = nodes_[a].value;
    if (c0 < 0 || c0 + n_cols > av.cols) throw std::invalid_argument("slice_cols: out of range");
    Matrix out(av.rows, n_cols);
    for (int i = 0; i < av.rows; ++i)
      for (int j = 0; j < n_cols; ++j) out.at(i, j) = av.at(i, c0 + j);
    return unary_or_binary(std::move(out), a, -1, [a, c0](Tape& t, Node& n) {
      Matrix g(t.nodes_[a].value.rows, t.nodes_[a].value.cols);
      for (int i = 0; i < n.grad.rows; ++i)
        for (int j = 0; j < n.grad.cols; ++j) g.at(i, c0 + j) = n.grad.at(i, j);
      t.accum(a, g);
    });
  }

  int concat_cols(const std::vector<int>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
    const int rows = nodes_[parts[0]].value.rows;
    int cols = 0;
    for (int p : parts) {
      if (nodes_[p].value.rows != rows) throw std::invalid_argument("concat_cols: row mismatch");
      cols += nodes_[p].value.cols;
    }
    Matrix out(rows, cols);
    int c = 0;
    for (int p : parts) {
      const Matrix& pv = nodes_[p].value;
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < pv.cols; ++j) out.at(i, c + j) = pv.at(i, j);
      c += pv.cols;
    }
    bool any = false;
    for (int p : parts) any = any || nodes_[p].requires_grad;
    nodes_.push_back(Node{std::move(out), {}, any, nullptr,
                          [parts](Tape& t, Node& n) {
                            int c2 = 0;
                            for (int p : parts) {
                              const int pc = t.nodes_[p].value.cols;
                              if (t.wants_grad(p)) {
                                Matrix g(n.grad.rows, pc);
                                for (int i = 0; i < n.grad.rows; ++i)
                                  for (int j = 0; j < pc; ++j) g.at(i, j) = n.grad.at(i, c2 + j);
                                t.accum(p, g);
                              }
                              c2 += pc;
                            }
                          }});
    return last();
  }

  // ---- normalization / nonlinear rows ----

  int softmax_rows(int a) {
    const Matrix& av = nodes_[a].value;
    Matrix out(av.rows, av.cols);
    for (int i = 0; i < av.rows; ++i) {
      double mx = av.at(i, 0);
      for (int j = 1; j < av.cols; ++j) mx = std::max(mx, av.at(i, j));
      double sum = 0.0;
      for (int j = 0; j < av.cols; ++j) {
        const double e = std::exp(av.at(i, j) - mx);
        out.at(i, j) = e;
        sum += e;
      }
      for (int j = 0; j < av.cols; ++j) out.at(i, j) /= sum;
    }
    return unary_or_binary(std::move(out), a, -1, [a](Tape& t, Node& n) {
      const Matrix& y = n.value;
      Matrix g(y.rows, y.cols);
      for (int i = 0; i < y.rows; ++i) {
        double dot = 0.0;
        for (int j = 0; j < y.cols; ++j) dot += n.grad.at(i, j) * y.at(i, j);
        for (int j = 0; j < y.cols; ++j)
          g.at(i, j) = y.at(i, j) * (n.grad.at(i, j) - dot);
      }
      t.accum(a, g);
    });
  }

  // Per-row layer norm with learnable 1xC gain and bias.
  int layer_norm_rows(int a, int gamma, int beta, double eps = 1e-5) {
    const Matrix& av = nodes_[a].value;
    const Matrix& gv = nodes_[gamma].value;
    const Matrix& bv = nodes_[beta].value;
    if (gv.rows != 1 || gv.cols != av.cols || bv.rows != 1 || bv.cols != av.cols)
      throw std::invalid_argument("layer_norm_rows: gain/bias must be 1xC");
    Matrix xhat(av.rows, av.cols);
    Matrix inv_std(av.rows, 1);
    Matrix out(av.rows, av.cols);
    for (int i = 0; i < av.rows; ++i) {
      double mu = 0.0;
      for (int j = 0; j < av.cols; ++j) mu += av.at(i, j);
      mu /= av.cols;
      double var = 0.0;
      for (int j = 0; j < av.cols; ++j) {
        const double c = av.at(i, j) - mu;
        var += c * c;
      }
      var /= av.cols;
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std.at(i, 0) = is;
      for (int j = 0; j < av.cols; ++j) {
        xhat.at(i, j) = (av.at(i, j) - mu) * is;
        out.at(i, j) = gv.at(0, j) * xhat.at(i, j) + bv.at(0, j);
      }
    }
    bool any = nodes_[a].requires_grad || nodes_[gamma].requires_grad ||
               nodes_[beta].requires_grad;
    nodes_.push_back(Node{std::move(out), {}, any, nullptr,
                          [a, gamma, beta, xhat = std::move(xhat),
                           inv_std = std::move(inv_std)](Tape& t, Node& n) {
                            const Matrix& gv2 = t.nodes_[gamma].value;
                            const int rows = n.grad.rows, cols = n.grad.cols;
                            if (t.wants_grad(gamma) || t.wants_grad(beta)) {
                              Matrix dg(1, cols), db(1, cols);
                              for (int i = 0; i < rows; ++i)
                                for (int j = 0; j < cols; ++j) {
                                  dg.at(0, j) += n.grad.at(i, j) * xhat.at(i, j);
                                  db.at(0, j) += n.grad.at(i, j);
                                }
                              t.accum(gamma, dg);
                              t.accum(beta, db);
                            }
                            if (t.wants_grad(a)) {
                              Matrix gx(rows, cols);
                              for (int i = 0; i < rows; ++i) {
                                double mean_d = 0.0, mean_dx = 0.0;
                                for (int j = 0; j < cols; ++j) {
                                  const double d = n.grad.at(i, j) * gv2.at(0, j);
                                  mean_d += d;
                                  mean_dx += d * xhat.at(i, j);
                                }
                                mean_d /= cols;
                                mean_dx /= cols;
                                for (int j = 0; j < cols; ++j) {
                                  const double d = n.grad.at(i, j) * gv2.at(0, j);
                                  gx.at(i, j) = (d - mean_d - xhat.at(i, j) * mean_dx) *
                                                inv_std.at(i, 0);
                                }
                              }
                              t.accum(a, gx);
                            }
                          }});
    return last();
  }

  // ---- losses ----

  // Weighted-mean cross entropy over rows of `logits`. Row i contributes
  // weight[i] * CE(logits_i, target_i); result = sum / sum(weights).
  // Rows with weight 0 receive exactly zero gradient.
  int cross_entropy_rows(int logits, const std::vector<int>& targets,
                         const std::vector<double>& weights) {
    const Matrix& lv = nodes_[logits].value;
    if (static_cast<int>(targets.size()) != lv.rows ||
        static_cast<int>(weights.size()) != lv.rows)
      throw std::invalid_argument("cross_entropy_rows: row count mismatch");
    double wsum = 0.0;
    for (double w : weights) wsum += w;
    if (wsum <= 0.0) throw std::invalid_argument("cross_entropy_rows: no active rows");
    Matrix probs(lv.rows, lv.cols);
    double loss = 0.0;
    for (int i = 0; i < lv.rows; ++i) {
      double mx = lv.at(i, 0);
      for (int j = 1; j < lv.cols; ++j) mx = std::max(mx, lv.at(i, j));
      double sum = 0.0;
      for (int j = 0; j < lv.cols; ++j) {
        const double e = std::exp(lv.at(i, j) - mx);
        probs.at(i, j) = e;
        sum += e;
      }
      for (int j = 0; j < lv.cols; ++j) probs.at(i, j) /= sum;
      if (weights[i] != 0.0) {
        if (targets[i] < 0 || targets[i] >= lv.cols)
          throw std::invalid_argument("cross_entropy_rows: target out of range");
        loss += weights[i] * -std::log(std::max(probs.at(i, targets[i]), 1e-300));
      }
    }
    Matrix out(1, 1);
    out.at(0, 0) = loss / wsum;
    return unary_or_binary(
        std::move(out), logits, -1,
        [logits, targets, weights, wsum, probs = std::move(probs)](Tape& t, Node& n) {
          const double g = n.grad.at(0, 0);
          Matrix gl(probs.rows, probs.cols);
          for (int i = 0; i < probs.rows; ++i) {
            if (weights[i] == 0.0) continue;
            const double scale = g * weights[i] / wsum;
            for (int j = 0; j < probs.cols; ++j) gl.at(i, j) = scale * probs.at(i, j);
            gl.at(i, targets[i]) -= scale;
          }
          t.accum(logits, gl);
        });
  }

  // Mean binary cross entropy with logits over all entries.
  int bce_with_logits(int logits, const Matrix& targets) {
    const Matrix& lv = nodes_[logits].value;
    if (!lv.same_shape(targets)) throw std::invalid_argument("bce_with_logits: shape mismatch");
    const double n_elem = static_cast<double>(lv.size());
    double loss = 0.0;
    for (size_t i = 0; i < lv.size(); ++i) {
      const double x = lv.d[i], y = targets.d[i];
      loss += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
    }
    Matrix out(1, 1);
    out.at(0, 0) = loss / n_elem;
    return unary_or_binary(std::move(out), logits, -1,
                           [logits, targets, n_elem](Tape& t, Node& n) {
                             const double g = n.grad.at(0, 0) / n_elem;
                             const Matrix& lv2 = t.nodes_[logits].value;
                             Matrix gl(lv2.rows, lv2.cols);
                             for (size_t i = 0; i < lv2.size(); ++i)
                               gl.d[i] = g * (stable_sigmoid(lv2.d[i]) - targets.d[i]);
                             t.accum(logits, gl);
                           });
  }

  // ---- driver ----

  void backward(int root) {
    Node& r = nodes_[root];
    if (r.value.rows != 1 || r.value.cols != 1)
      throw std::invalid_argument("backward: root must be scalar");
    ensure_grad(root);
    nodes_[root].grad.at(0, 0) = 1.0;
    for (int i = root; i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.size() == 0) continue;
      if (n.backprop) n.backprop(*this, n);
      if (n.param) {
        for (size_t k = 0; k < n.grad.size(); ++k) n.param->grad.d[k] += n.grad.d[k];
      }
    }
  }

  void clear() { nodes_.clear(); }

 private:
  static double stable_sigmoid(double x) {
    if (x >= 0) {
      const double z = std::exp(-x);
      return 1.0 / (1.0 + z);
    }
    const double z = std::exp(x);
    return z / (1.0 + z);
  }

  int last() const { return static_cast<int>(nodes_.size()) - 1; }

  bool wants_grad(int id) const { return nodes_[id].requires_grad; }

  void ensure_grad(int id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = Matrix(n.value.rows, n.value.cols);
  }

  void accum(int id, const Matrix& g) {
    if (!nodes_[id].requires_grad) return;
    ensure_grad(id);
    Matrix& dst = nodes_[id].grad;
    for (size_t i = 0; i < dst.size(); ++i) dst.d[i] += g.d[i];
  }

  int unary_or_binary(Matrix out, int a, int b, std::function<void(Tape&, Node&)> bp) {
    const bool any =
        nodes_[a].requires_grad || (b >= 0 && nodes_[b].requires_grad);
    nodes_.push_back(Node{std::move(out), {}, any, nullptr, any ? std::move(bp) : nullptr});
    return last();
  }

  std::vector<Node> nodes_;
};

// Adamax step (Adam paper, sec 7.1) with externally supplied learning rate.
class AdamaxOptimizer {
 public:
  explicit AdamaxOptimizer(std::vector<Param*> params, double beta1 = 0.9,
                           double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(double lr) {
    ++t_;
    const double bias = 1.0 - std::pow(beta1_, t_);
    for (Param* p : params_) {
      for (size_t i = 0; i < p->value.size(); ++i) {
        const double g = p->grad.d[i];
        p->m.d[i] = beta1_ * p->m.d[i] + (1.0 - beta1_) * g;
        p->u.d[i] = std::max(beta2_ * p->u.d[i], std::abs(g));
        p->value.d[i] -= (lr / bias) * p->m.d[i] / (p->u.d[i] + eps_);
      }
      p->zero_grad();
    }
  }

 private:
  std::vector<Param*> params_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
};

inline Matrix xavier_uniform(int rows, int cols, Rng& rng) {
  Matrix m(rows, cols);
  const double bound = std::sqrt(6.0 / (rows + cols));
  for (double& v : m.d) v = rng.uniform(-bound, bound);
  return m;
}

inline Matrix gaussian_matrix(int rows, int cols, Rng& rng, double stddev = 0.02) {
  Matrix m(rows, cols);
  for (double& v : m.d) v = rng.next_gaussian() * stddev;
  return m;
}

}  // namespace ssg::ad
