#pragma once

// Define-by-run reverse-mode automatic differentiation over dense tensors.
//
// Every op returns a fresh Var whose node keeps shared references to its
// parents, so a graph lives exactly as long as its root handle. Graphs are
// single-threaded; finished value tensors may be copied out freely.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "dimlab/error.hpp"
#include "dimlab/tensor.hpp"

namespace dimlab::ad {

struct Node {
  Tensor value;
  Tensor grad;
  std::string op;
  std::vector<std::shared_ptr<Node>> parents;
  bool requires_grad = false;
  // Reads this node's grad and accumulates into parents' grads.
  std::function<void(Node&)> backward;
};

/// Handle to a graph node.
class Var {
public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  Tensor& mutable_grad() { return node_->grad; }
  const Shape& shape() const { return node_->value.shape(); }
  const std::string& op() const { return node_->op; }
  bool requires_grad() const { return node_->requires_grad; }
  double item() const { return node_->value.item(); }
  void zero_grad() { node_->grad.fill(0.0); }

  Node& node() const { return *node_; }
  const std::shared_ptr<Node>& ptr() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

private:
  std::shared_ptr<Node> node_;
};

namespace detail {

inline Var make_node(Tensor value, std::string op, std::vector<Var> parents,
                     std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->grad = Tensor(value.shape(), 0.0);
  node->value = std::move(value);
  node->op = std::move(op);
  for (const auto& p : parents) {
    node->requires_grad = node->requires_grad || p.requires_grad();
    node->parents.push_back(p.ptr());
  }
  if (node->requires_grad) node->backward = std::move(backward);
  return Var(std::move(node));
}

inline void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

inline Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

}  // namespace detail

inline Var leaf(Tensor value, bool requires_grad = true) {
  auto node = std::make_shared<Node>();
  node->grad = Tensor(value.shape(), 0.0);
  node->value = std::move(value);
  node->op = "leaf";
  node->requires_grad = requires_grad;
  return Var(std::move(node));
}

inline Var constant(Tensor value) { return leaf(std::move(value), false); }

// ---------------------------------------------------------------------------
// Elementwise arithmetic

inline Var add(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "add");
  Tensor out = a.value();
  const auto bv = b.value().data();
  auto ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] += bv[i];
  return detail::make_node(std::move(out), "add", {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      Node& par = detail::parent(self, p);
      if (!par.requires_grad) continue;
      for (std::size_t i = 0; i < self.grad.size(); ++i) par.grad[i] += self.grad[i];
    }
  });
}

inline Var sub(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "sub");
  Tensor out = a.value();
  const auto bv = b.value().data();
  auto ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] -= bv[i];
  return detail::make_node(std::move(out), "sub", {a, b}, [](Node& self) {
    Node& pa = detail::parent(self, 0);
    Node& pb = detail::parent(self, 1);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (pa.requires_grad) pa.grad[i] += self.grad[i];
      if (pb.requires_grad) pb.grad[i] -= self.grad[i];
    }
  });
}

inline Var mul(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "mul");
  Tensor out = a.value();
  const auto bv = b.value().data();
  auto ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] *= bv[i];
  return detail::make_node(std::move(out), "mul", {a, b}, [](Node& self) {
    Node& pa = detail::parent(self, 0);
    Node& pb = detail::parent(self, 1);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (pa.requires_grad) pa.grad[i] += self.grad[i] * pb.value[i];
      if (pb.requires_grad) pb.grad[i] += self.grad[i] * pa.value[i];
    }
  });
}

inline Var scale(const Var& a, double factor) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= factor;
  return detail::make_node(std::move(out), "scale", {a}, [factor](Node& self) {
    Node& pa = detail::parent(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += factor * self.grad[i];
  });
}

/// Multiplies every entry of `a` by the scalar node `s`.
inline Var scale_by(const Var& a, const Var& s) {
  if (!s.value().is_scalar()) {
    throw DimensionError("scale_by: factor must be scalar, got " + shape_str(s.shape()));
  }
  const double f = s.item();
  Tensor out = a.value();
  for (double& v : out.data()) v *= f;
  return detail::make_node(std::move(out), "scale_by", {a, s}, [](Node& self) {
    Node& pa = detail::parent(self, 0);
    Node& ps = detail::parent(self, 1);
    const double f = ps.value[0];
    double acc = 0.0;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (pa.requires_grad) pa.grad[i] += f * self.grad[i];
      acc += pa.value[i] * self.grad[i];
    }
    if (ps.requires_grad) ps.grad[0] += acc;
  });
}

inline Var square(const Var& a) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= v;
  return detail::make_node(std::move(out), "square", {a}, [](Node& self) {
    Node& pa = detail::parent(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      pa.grad[i] += 2.0 * pa.value[i] * self.grad[i];
    }
  });
}

/// max(0, x); the subgradient at exactly 0 is 0.
inline Var relu(const Var& a) {
  Tensor out = a.value();
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return detail::make_node(std::move(out), "relu", {a}, [](Node& self) {
    Node& pa = detail::parent(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (pa.value[i] > 0.0) pa.grad[i] += self.grad[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions and shape ops

inline Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return detail::make_node(Tensor::scalar(s), "sum", {a}, [](Node& self) {
    Node& pa = detail::parent(self, 0);
    const double g = self.grad[0];
    for (double& pg : pa.grad.data()) pg += g;
  });
}

inline Var mean(const Var& a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw DimensionError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

/// Inner product of two equal-length tensors.
inline Var dot(const Var& a, const Var& b) { return sum(mul(a, b)); }

inline Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return detail::make_node(std::move(out), "reshape", {a}, [](Node& self) {
    Node& pa = detail::parent(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
  });
}

/// out[i] = a[i+1] - a[i] along a 1-D tensor.
inline Var adjacent_diff(const Var& a) {
  const auto& av = a.value();
  if (av.rank() != 1) throw DimensionError("adjacent_diff expects 1-D input, got " + shape_str(av.shape()));
  const std::size_t n = av.size();
  const std::size_t m = n > 0 ? n - 1 : 0;
  Tensor out({m}, 0.0);
  for (std::size_t i = 0; i < m; ++i) out[i] = av[i + 1] - av[i];
  return detail::make_node(std::move(out), "adjacent_diff", {a}, [](Node& self) {
    Node& pa = detail::parent(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      pa.grad[i + 1] += self.grad[i];
      pa.grad[i] -= self.grad[i];
    }
  });
}

/// Throws PermutationError unless `perm` is a bijection on 0..n-1.
inline void validate_permutation(std::span<const std::size_t> perm, std::size_t n) {
  if (perm.size() != n) {
    throw PermutationError("permutation length " + std::to_string(perm.size()) + " != row count " +
                           std::to_string(n));
  }
  std::vector<char> seen(n, 0);
  for (std::size_t p : perm) {
    if (p >= n || seen[p]) throw PermutationError("index list is not a bijection on rows");
    seen[p] = 1;
  }
}

/// Row i of the output is row perm[i] of the input. Backward scatters through
/// the inverse permutation.
inline Var gather_rows(const Var& a, std::vector<std::size_t> perm) {
  const auto& av = a.value();
  if (av.rank() == 0) throw DimensionError("gather_rows on rank-0 tensor");
  const std::size_t n = av.dim(0);
  validate_permutation(perm, n);
  const std::size_t row = n ? av.size() / n : 0;
  Tensor out(av.shape(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(av.data().begin() + perm[i] * row, row, out.data().begin() + i * row);
  }
  return detail::make_node(std::move(out), "gather_rows", {a},
                           [perm = std::move(perm), row](Node& self) {
                             Node& pa = detail::parent(self, 0);
                             for (std::size_t i = 0; i < perm.size(); ++i) {
                               for (std::size_t k = 0; k < row; ++k) {
                                 pa.grad[perm[i] * row + k] += self.grad[i * row + k];
                               }
                             }
                           });
}

// ---------------------------------------------------------------------------
// Layers

inline Var matmul(const Var& a, const Var& b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(av.shape()) + " and " +
                         shape_str(bv.shape()));
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor out({m, n}, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = &out[i * n];
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = &bv[p * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  return detail::make_node(std::move(out), "matmul", {a, b}, [m, k, n](Node& self) {
    Node& pa = detail::parent(self, 0);
    Node& pb = detail::parent(self, 1);
    const Tensor& g = self.grad;
    if (pa.requires_grad) {
      // dA = G * B^T
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = &g[i * n];
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = &pb.value[p * n];
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          pa.grad[i * k + p] += acc;
        }
      }
    }
    if (pb.requires_grad) {
      // dB = A^T * G
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = &g[i * n];
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = pa.value[i * k + p];
          if (aip == 0.0) continue;
          double* dbrow = &pb.grad[p * n];
          for (std::size_t j = 0; j < n; ++j) dbrow[j] += aip * grow[j];
        }
      }
    }
  });
}

/// Adds bias[c] to every row of a (rows x c) tensor (or the last axis of any rank).
inline Var add_bias(const Var& a, const Var& bias) {
  const auto& av = a.value();
  const auto& bv = bias.value();
  if (bv.rank() != 1 || av.rank() == 0 || av.shape().back() != bv.size()) {
    throw DimensionError("add_bias: bias " + shape_str(bv.shape()) + " does not match " +
                         shape_str(av.shape()));
  }
  const std::size_t c = bv.size();
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % c];
  return detail::make_node(std::move(out), "add_bias", {a, bias}, [c](Node& self) {
    Node& pa = detail::parent(self, 0);
    Node& pb = detail::parent(self, 1);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (pa.requires_grad) pa.grad[i] += self.grad[i];
      if (pb.requires_grad) pb.grad[i % c] += self.grad[i];
    }
  });
}

/// Width-3 cross-correlation with one zero at each end, so the output length
/// equals the input length. input [batch, length, in_ch], kernels
/// [out_ch, in_ch, 3], bias [out_ch] -> [batch, length, out_ch].
inline Var conv1d_same(const Var& input, const Var& kernels, const Var& bias) {
  const auto& x = input.value();
  const auto& w = kernels.value();
  const auto& b = bias.value();
  if (x.rank() != 3) throw DimensionError("conv1d_same: input must be [batch, length, channels], got " + shape_str(x.shape()));
  if (w.rank() != 3 || w.dim(2) != 3) throw DimensionError("conv1d_same: kernels must be [out, in, 3], got " + shape_str(w.shape()));
  const std::size_t nb = x.dim(0), len = x.dim(1), cin = x.dim(2), cout = w.dim(0);
  if (w.dim(1) != cin) {
    throw DimensionError("conv1d_same: channel mismatch, input " + shape_str(x.shape()) + " kernels " +
                         shape_str(w.shape()));
  }
  if (b.rank() != 1 || b.size() != cout) {
    throw DimensionError("conv1d_same: bias " + shape_str(b.shape()) + " for " + std::to_string(cout) + " filters");
  }
  Tensor out({nb, len, cout}, 0.0);
  for (std::size_t n = 0; n < nb; ++n) {
    for (std::size_t t = 0; t < len; ++t) {
      double* orow = &out[(n * len + t) * cout];
      for (std::size_t o = 0; o < cout; ++o) orow[o] = b[o];
      for (std::size_t k = 0; k < 3; ++k) {
        if ((t == 0 && k == 0) || t + k - 1 >= len) continue;
        const double* xrow = &x[(n * len + t + k - 1) * cin];
        for (std::size_t o = 0; o < cout; ++o) {
          const double* wo = &w[o * cin * 3];
          double acc = 0.0;
          for (std::size_t c = 0; c < cin; ++c) acc += wo[c * 3 + k] * xrow[c];
          orow[o] += acc;
        }
      }
    }
  }
  return detail::make_node(std::move(out), "conv1d_same", {input, kernels, bias},
                           [nb, len, cin, cout](Node& self) {
    Node& px = detail::parent(self, 0);
    Node& pw = detail::parent(self, 1);
    Node& pb = detail::parent(self, 2);
    const Tensor& g = self.grad;
    for (std::size_t n = 0; n < nb; ++n) {
      for (std::size_t t = 0; t < len; ++t) {
        const double* grow = &g[(n * len + t) * cout];
        if (pb.requires_grad) {
          for (std::size_t o = 0; o < cout; ++o) pb.grad[o] += grow[o];
        }
        for (std::size_t k = 0; k < 3; ++k) {
          if ((t == 0 && k == 0) || t + k - 1 >= len) continue;
          const std::size_t src = (n * len + t + k - 1) * cin;
          for (std::size_t o = 0; o < cout; ++o) {
            const double go = grow[o];
            if (go == 0.0) continue;
            for (std::size_t c = 0; c < cin; ++c) {
              if (px.requires_grad) px.grad[src + c] += go * pw.value[(o * cin + c) * 3 + k];
              if (pw.requires_grad) pw.grad[(o * cin + c) * 3 + k] += go * px.value[src + c];
            }
          }
        }
      }
    }
  });
}

/// Mean over the length axis: [batch, length, ch] -> [batch, ch].
inline Var global_avg_pool(const Var& input) {
  const auto& x = input.value();
  if (x.rank() != 3) throw DimensionError("global_avg_pool: expected rank 3, got " + shape_str(x.shape()));
  const std::size_t nb = x.dim(0), len = x.dim(1), ch = x.dim(2);
  if (len == 0) throw DimensionError("global_avg_pool: zero-length input");
  const double inv = 1.0 / static_cast<double>(len);
  Tensor out({nb, ch}, 0.0);
  for (std::size_t n = 0; n < nb; ++n) {
    for (std::size_t t = 0; t < len; ++t) {
      for (std::size_t c = 0; c < ch; ++c) out[n * ch + c] += x[(n * len + t) * ch + c];
    }
  }
  for (double& v : out.data()) v *= inv;
  return detail::make_node(std::move(out), "global_avg_pool", {input}, [nb, len, ch, inv](Node& self) {
    Node& px = detail::parent(self, 0);
    for (std::size_t n = 0; n < nb; ++n) {
      for (std::size_t t = 0; t < len; ++t) {
        for (std::size_t c = 0; c < ch; ++c) px.grad[(n * len + t) * ch + c] += self.grad[n * ch + c] * inv;
      }
    }
  });
}

/// Inverted dropout. Identity when not training or when rate is 0.
inline Var dropout(const Var& a, double rate, bool training, std::mt19937_64& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ParameterError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return a;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> mask(a.value().size());
  for (double& m : mask) m = u(rng) < rate ? 0.0 : keep_scale;
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return detail::make_node(std::move(out), "dropout", {a}, [mask = std::move(mask)](Node& self) {
    Node& pa = detail::parent(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += mask[i] * self.grad[i];
  });
}

/// Mean squared error against a constant target of the same shape.
inline Var mse(const Var& preds, const Tensor& target) {
  return mean(square(sub(preds, constant(target.reshaped(preds.shape())))));
}

// ---------------------------------------------------------------------------
// Backpropagation

/// Fills grad on every node reachable from `root` that requires it. Gradients
/// accumulate across repeated calls; the root's own grad is reset to 1.
inline void backward_pass(const Var& root) {
  if (!root) throw ContractError("backward_pass on empty handle");
  if (!root.value().is_scalar() || root.value().rank() > 1) {
    throw ContractError("backward_pass requires a scalar root, got " + shape_str(root.shape()));
  }
  // Iterative post-order DFS for a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{&root.node(), 0}};
  visited.insert(&root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root.node().grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->requires_grad && n->backward) n->backward(*n);
  }
}

// ---------------------------------------------------------------------------
// Finite-difference checking

namespace detail {

inline double checked_value(const std::function<double(const Tensor&)>& f, const Tensor& x) {
  const double v = f(x);
  if (!std::isfinite(v)) throw NumericError("non-finite loss at perturbed point");
  return v;
}

}  // namespace detail

/// Central-difference comparison of an analytic gradient against a value
/// function. Returns max_i |g_a - g_fd| / max(1e-8, |g_a| + |g_fd|).
/// `graph_fn` builds the differentiable loss from a leaf; `value_fn` evaluates
/// the reference loss at raw points (it may hold pieces fixed that the graph
/// treats as constants).
inline double gradient_check(const std::function<Var(const Var&)>& graph_fn,
                             const std::function<double(const Tensor&)>& value_fn,
                             const Tensor& point, double step) {
  if (!(step > 0.0)) throw ParameterError("gradient_check step must be positive");
  Var x = leaf(point, true);
  Var loss = graph_fn(x);
  backward_pass(loss);
  const Tensor analytic = x.grad();
  double worst = 0.0;
  Tensor probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    probe[i] = point[i] + step;
    const double up = detail::checked_value(value_fn, probe);
    probe[i] = point[i] - step;
    const double down = detail::checked_value(value_fn, probe);
    probe[i] = point[i];
    const double fd = (up - down) / (2.0 * step);
    const double err = std::abs(analytic[i] - fd) / std::max(1e-8, std::abs(analytic[i]) + std::abs(fd));
    worst = std::max(worst, err);
  }
  return worst;
}

/// Same check where the reference values come from the graph itself.
inline double gradient_check(const std::function<Var(const Var&)>& loss_fn, const Tensor& point,
                             double step) {
  auto value_fn = [&loss_fn](const Tensor& p) { return loss_fn(constant(p)).item(); };
  return gradient_check(loss_fn, value_fn, point, step);
}

}  // namespace dimlab::ad
