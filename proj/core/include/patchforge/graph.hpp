#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "patchforge/tensor.hpp"

namespace patchforge {

template <class T>
struct Parameter {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;
};

// Reverse-mode tape over row-major matrices. Forward values are computed
// with the shared row kernels; backward closures accumulate into node
// gradients and parameter gradients. A tape built with record=false only
// evaluates and never touches parameter gradients.
template <class T>
class Graph {
 public:
  using Var = std::size_t;

  explicit Graph(bool record) : record_(record) {}

  const Matrix<T>& value(Var v) const { return nodes_[v].value; }

  Var embed(Parameter<T>& table, std::span<const int> ids, T scale, const Matrix<T>& pe) {
    const std::size_t d = table.value.cols();
    Matrix<T> out(ids.size(), d);
    for (std::size_t i = 0; i < ids.size(); ++i)
      kernels::embed_row(table.value, ids[i], scale, pe.row(i).data(), out.row(i).data());
    const Var v = push(std::move(out));
    if (record_) {
      std::vector<int> saved(ids.begin(), ids.end());
      nodes_[v].back = [this, v, &table, saved = std::move(saved), scale] {
        const Matrix<T>& g = nodes_[v].grad;
        const std::size_t d = g.cols();
        for (std::size_t i = 0; i < saved.size(); ++i) {
          T* row = table.grad.data() + static_cast<std::size_t>(saved[i]) * d;
          for (std::size_t j = 0; j < d; ++j) row[j] += g(i, j) * scale;
        }
      };
    }
    return v;
  }

  Var linear(Var x, Parameter<T>& w, Parameter<T>& b) {
    const Matrix<T>& xv = nodes_[x].value;
    Matrix<T> out(xv.rows(), w.value.cols());
    for (std::size_t i = 0; i < xv.rows(); ++i)
      kernels::linear_row(xv.row(i).data(), w.value, b.value.data(), out.row(i).data());
    const Var v = push(std::move(out));
    if (record_) {
      nodes_[v].back = [this, v, x, &w, &b] {
        const Matrix<T>& g = nodes_[v].grad;
        const Matrix<T>& xv = nodes_[x].value;
        Matrix<T>& gx = grad(x);
        const std::size_t in = w.value.rows();
        const std::size_t out = w.value.cols();
        for (std::size_t i = 0; i < g.rows(); ++i) {
          const T* gi = g.row(i).data();
          const T* xi = xv.row(i).data();
          T* gxi = gx.row(i).data();
          for (std::size_t k = 0; k < in; ++k) {
            const T* wk = w.value.data() + k * out;
            T* gwk = w.grad.data() + k * out;
            T s = 0;
            const T xk = xi[k];
            for (std::size_t j = 0; j < out; ++j) {
              s += gi[j] * wk[j];
              gwk[j] += xk * gi[j];
            }
            gxi[k] += s;
          }
          for (std::size_t j = 0; j < out; ++j) b.grad.data()[j] += gi[j];
        }
      };
    }
    return v;
  }

  Var add(Var a, Var b) {
    const Matrix<T>& av = nodes_[a].value;
    const Matrix<T>& bv = nodes_[b].value;
    Matrix<T> out(av.rows(), av.cols());
    for (std::size_t i = 0; i < av.rows(); ++i)
      kernels::add_row(av.row(i).data(), bv.row(i).data(), av.cols(), out.row(i).data());
    const Var v = push(std::move(out));
    if (record_) {
      nodes_[v].back = [this, v, a, b] {
        const auto& g = nodes_[v].grad.storage();
        auto& ga = grad(a).storage();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        auto& gb = grad(b).storage();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      };
    }
    return v;
  }

  Var layer_norm(Var x, Parameter<T>& gain, Parameter<T>& bias) {
    const Matrix<T>& xv = nodes_[x].value;
    const std::size_t n = xv.cols();
    Matrix<T> out(xv.rows(), n);
    for (std::size_t i = 0; i < xv.rows(); ++i)
      kernels::layer_norm_row(xv.row(i).data(), gain.value.data(), bias.value.data(), n,
                              out.row(i).data());
    const Var v = push(std::move(out));
    if (record_) {
      nodes_[v].back = [this, v, x, &gain, &bias] {
        const Matrix<T>& g = nodes_[v].grad;
        const Matrix<T>& xv = nodes_[x].value;
        Matrix<T>& gx = grad(x);
        const std::size_t n = xv.cols();
        std::vector<T> xhat(n), dxhat(n);
        for (std::size_t i = 0; i < xv.rows(); ++i) {
          const T* xi = xv.row(i).data();
          T mean = 0;
          for (std::size_t j = 0; j < n; ++j) mean += xi[j];
          mean /= static_cast<T>(n);
          T var = 0;
          for (std::size_t j = 0; j < n; ++j) var += (xi[j] - mean) * (xi[j] - mean);
          var /= static_cast<T>(n);
          const T rstd = T(1) / std::sqrt(var + T(1e-5));
          T mean_d = 0, mean_dx = 0;
          for (std::size_t j = 0; j < n; ++j) {
            xhat[j] = (xi[j] - mean) * rstd;
            const T gj = g(i, j);
            gain.grad.data()[j] += gj * xhat[j];
            bias.grad.data()[j] += gj;
            dxhat[j] = gj * gain.value.data()[j];
            mean_d += dxhat[j];
            mean_dx += dxhat[j] * xhat[j];
          }
          mean_d /= static_cast<T>(n);
          mean_dx /= static_cast<T>(n);
          for (std::size_t j = 0; j < n; ++j)
            gx(i, j) += rstd * (dxhat[j] - mean_d - xhat[j] * mean_dx);
        }
      };
    }
    return v;
  }

  Var relu(Var x) {
    const Matrix<T>& xv = nodes_[x].value;
    Matrix<T> out(xv.rows(), xv.cols());
    for (std::size_t i = 0; i < xv.rows(); ++i)
      kernels::relu_row(xv.row(i).data(), xv.cols(), out.row(i).data());
    const Var v = push(std::move(out));
    if (record_) {
      nodes_[v].back = [this, v, x] {
        const auto& g = nodes_[v].grad.storage();
        const auto& xs = nodes_[x].value.storage();
        auto& gx = grad(x).storage();
        for (std::size_t i = 0; i < g.size(); ++i)
          if (xs[i] > T(0)) gx[i] += g[i];
      };
    }
    return v;
  }

  // Inverted dropout; identity when rate == 0.
  Var dropout(Var x, double rate, Rng& rng) {
    if (rate <= 0.0) return x;
    const Matrix<T>& xv = nodes_[x].value;
    Matrix<T> mask(xv.rows(), xv.cols());
    const T keep = static_cast<T>(1.0 / (1.0 - rate));
    for (auto& m : mask.storage()) m = rng.uniform() < rate ? T(0) : keep;
    Matrix<T> out(xv.rows(), xv.cols());
    for (std::size_t i = 0; i < out.size(); ++i)
      out.storage()[i] = xv.storage()[i] * mask.storage()[i];
    const Var v = push(std::move(out));
    if (record_) {
      nodes_[v].back = [this, v, x, mask = std::move(mask)] {
        const auto& g = nodes_[v].grad.storage();
        auto& gx = grad(x).storage();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask.storage()[i];
      };
    }
    return v;
  }

  // Query row i attends to key rows [0, limit_i) where limit_i is key_len,
  // or min(i + 1, key_len) when causal.
  Var attention(Var q, Var k, Var vv, std::size_t heads, bool causal, std::size_t key_len) {
    const Matrix<T>& qv = nodes_[q].value;
    const Matrix<T>& kv = nodes_[k].value;
    const Matrix<T>& vvv = nodes_[vv].value;
    const std::size_t d = qv.cols();
    const std::size_t nq = qv.rows();
    Matrix<T> out(nq, d);
    Matrix<T> probs(nq * heads, key_len);
    std::vector<T> scratch;
    for (std::size_t i = 0; i < nq; ++i) {
      const std::size_t limit = causal ? std::min(i + 1, key_len) : key_len;
      kernels::attention_row(qv.row(i).data(), kv.data(), vvv.data(), limit, d, heads,
                             out.row(i).data(), record_ ? probs.row(i * heads).data() : nullptr,
                             scratch);
    }
    const Var v = push(std::move(out));
    if (record_) {
      nodes_[v].back = [this, v, q, k, vv, heads, causal, key_len, probs = std::move(probs)] {
        const Matrix<T>& g = nodes_[v].grad;
        const Matrix<T>& qv = nodes_[q].value;
        const Matrix<T>& kv = nodes_[k].value;
        const Matrix<T>& vvv = nodes_[vv].value;
        Matrix<T>& gq = grad(q);
        Matrix<T>& gk = grad(k);
        Matrix<T>& gv = grad(vv);
        const std::size_t d = qv.cols();
        const std::size_t dh = d / heads;
        const T scale = T(1) / std::sqrt(static_cast<T>(dh));
        std::vector<T> dp(key_len);
        for (std::size_t i = 0; i < qv.rows(); ++i) {
          const std::size_t limit = causal ? std::min(i + 1, key_len) : key_len;
          for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t c0 = h * dh;
            // attention_row packs the heads of row i at a stride of `limit`.
            const T* p = probs.data() + i * heads * key_len + h * limit;
            const T* go = g.row(i).data() + c0;
            T weighted = 0;
            for (std::size_t j = 0; j < limit; ++j) {
              const T* vj = vvv.row(j).data() + c0;
              T* gvj = gv.row(j).data() + c0;
              T s = 0;
              for (std::size_t c = 0; c < dh; ++c) {
                s += go[c] * vj[c];
                gvj[c] += p[j] * go[c];
              }
              dp[j] = s;
              weighted += p[j] * s;
            }
            const T* qi = qv.row(i).data() + c0;
            T* gqi = gq.row(i).data() + c0;
            for (std::size_t j = 0; j < limit; ++j) {
              const T ds = p[j] * (dp[j] - weighted) * scale;
              const T* kj = kv.row(j).data() + c0;
              T* gkj = gk.row(j).data() + c0;
              for (std::size_t c = 0; c < dh; ++c) {
                gqi[c] += ds * kj[c];
                gkj[c] += ds * qi[c];
              }
            }
          }
        }
      };
    }
    return v;
  }

  // Sum over rows of weight_i * -log softmax(logits_i)[target_i], as a 1x1.
  Var cross_entropy(Var logits, std::span<const int> targets, std::span<const T> weights) {
    const Matrix<T>& lv = nodes_[logits].value;
    const std::size_t n = lv.cols();
    std::vector<T> logp(n);
    double total = 0;
    for (std::size_t i = 0; i < lv.rows(); ++i) {
      if (weights[i] == T(0)) continue;
      kernels::log_softmax_row(lv.row(i).data(), n, logp.data());
      total -= static_cast<double>(weights[i]) *
               static_cast<double>(logp[static_cast<std::size_t>(targets[i])]);
    }
    Matrix<T> out(1, 1, static_cast<T>(total));
    const Var v = push(std::move(out));
    if (record_) {
      std::vector<int> t(targets.begin(), targets.end());
      std::vector<T> w(weights.begin(), weights.end());
      nodes_[v].back = [this, v, logits, t = std::move(t), w = std::move(w)] {
        const T seed = nodes_[v].grad(0, 0);
        const Matrix<T>& lv = nodes_[logits].value;
        Matrix<T>& gl = grad(logits);
        const std::size_t n = lv.cols();
        std::vector<T> p(n);
        for (std::size_t i = 0; i < lv.rows(); ++i) {
          if (w[i] == T(0)) continue;
          kernels::softmax_row(lv.row(i).data(), n, p.data());
          p[static_cast<std::size_t>(t[i])] -= T(1);
          for (std::size_t j = 0; j < n; ++j) gl(i, j) += seed * w[i] * p[j];
        }
      };
    }
    return v;
  }

  void backward(Var root, T seed = T(1)) {
    grad(root).fill(seed);
    for (std::size_t i = root + 1; i-- > 0;) {
      Node& node = nodes_[i];
      if (node.back && !node.grad.empty()) node.back();
    }
  }

 private:
  struct Node {
    Matrix<T> value;
    Matrix<T> grad;
    std::function<void()> back;
  };

  Var push(Matrix<T> value) {
    nodes_.push_back(Node{std::move(value), {}, {}});
    return nodes_.size() - 1;
  }

  Matrix<T>& grad(Var v) {
    Node& node = nodes_[v];
    if (node.grad.empty()) node.grad = Matrix<T>(node.value.rows(), node.value.cols());
    return node.grad;
  }

  bool record_;
  std::vector<Node> nodes_;
};

}  // namespace patchforge
