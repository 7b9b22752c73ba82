#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "idm/tensor.hpp"

namespace idm {

// ====== dense matmul kernels ======
// Plain ikj loops; at the sizes used here (a few hundred rows, widths < 200)
// these stay within L2 and -O3 vectorizes the inner loop.

// C += A[m,k] * B[k,n]
inline void mm_nn(const double* A, const double* B, double* C, std::size_t m,
                  std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* a = A + i * k;
    double* c = C + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[p];
      if (av == 0.0) continue;
      const double* b = B + p * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

// C += A[m,k] * B[n,k]^T
inline void mm_nt(const double* A, const double* B, double* C, std::size_t m,
                  std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* a = A + i * k;
    double* c = C + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* b = B + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[p] * b[p];
      c[j] += acc;
    }
  }
}

// C += A[k,m]^T * B[k,n]
inline void mm_tn(const double* A, const double* B, double* C, std::size_t m,
                  std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* a = A + p * m;
    const double* b = B + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = a[i];
      if (av == 0.0) continue;
      double* c = C + i * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

// ====== reverse-mode tape ======
//
// A Tape is rebuilt for every forward pass. Ops append nodes holding the
// computed value plus a closure that pushes the node's gradient into its
// inputs. backward() runs the closures in reverse creation order.

using Var = std::size_t;

class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) {}

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  const Tensor& value(Var v) const { return nodes_[v].value; }
  const Tensor& grad(Var v) const { return nodes_[v].grad; }

  Var leaf(Tensor value) {
    check_finite(value, "leaf");
    return push(std::move(value), {});
  }

  // --- elementwise ---

  Var add(Var a, Var b) {
    check_same_shape(value(a), value(b), "add");
    Tensor out(value(a).shape());
    const Tensor &va = value(a), &vb = value(b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] + vb[i];
    check_finite(out, "add");
    return push(std::move(out), [this, a, b](const Node& n) {
      accumulate(a, n.grad, 1.0);
      accumulate(b, n.grad, 1.0);
    });
  }

  Var sub(Var a, Var b) {
    check_same_shape(value(a), value(b), "sub");
    Tensor out(value(a).shape());
    const Tensor &va = value(a), &vb = value(b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] - vb[i];
    check_finite(out, "sub");
    return push(std::move(out), [this, a, b](const Node& n) {
      accumulate(a, n.grad, 1.0);
      accumulate(b, n.grad, -1.0);
    });
  }

  Var mul(Var a, Var b) {
    check_same_shape(value(a), value(b), "mul");
    Tensor out(value(a).shape());
    const Tensor &va = value(a), &vb = value(b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * vb[i];
    check_finite(out, "mul");
    return push(std::move(out), [this, a, b](const Node& n) {
      Tensor& ga = nodes_[a].grad;
      Tensor& gb = nodes_[b].grad;
      const Tensor &va = value(a), &vb = value(b);
      for (std::size_t i = 0; i < n.grad.size(); ++i) {
        ga[i] += n.grad[i] * vb[i];
        gb[i] += n.grad[i] * va[i];
      }
    });
  }

  // alpha*x + beta, elementwise with scalar constants.
  Var affine_const(Var x, double alpha, double beta) {
    Tensor out(value(x).shape());
    const Tensor& vx = value(x);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = alpha * vx[i] + beta;
    check_finite(out, "affine_const");
    return push(std::move(out), [this, x, alpha](const Node& n) {
      accumulate(x, n.grad, alpha);
    });
  }

  Var scale(Var x, double alpha) { return affine_const(x, alpha, 0.0); }

  Var tanh_op(Var x) {
    Tensor out(value(x).shape());
    const Tensor& vx = value(x);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(vx[i]);
    check_finite(out, "tanh");
    return push(std::move(out), [this, x](const Node& n) {
      Tensor& gx = nodes_[x].grad;
      for (std::size_t i = 0; i < n.grad.size(); ++i) {
        gx[i] += n.grad[i] * (1.0 - n.value[i] * n.value[i]);
      }
    });
  }

  Var sigmoid(Var x) {
    Tensor out(value(x).shape());
    const Tensor& vx = value(x);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-vx[i]));
    check_finite(out, "sigmoid");
    return push(std::move(out), [this, x](const Node& n) {
      Tensor& gx = nodes_[x].grad;
      for (std::size_t i = 0; i < n.grad.size(); ++i) {
        gx[i] += n.grad[i] * n.value[i] * (1.0 - n.value[i]);
      }
    });
  }

  // --- matrix ops ---

  // x[B,in] * W[out,in]^T + b[out] broadcast over rows.
  Var affine(Var x, Var W, Var b) {
    const Tensor &vx = value(x), &vW = value(W), &vb = value(b);
    if (vx.rank() != 2 || vW.rank() != 2) {
      throw ShapeError("affine: x and W must be rank-2");
    }
    if (vx.cols() != vW.cols()) {
      throw ShapeError("affine: x cols " + std::to_string(vx.cols()) +
                       " != W cols " + std::to_string(vW.cols()));
    }
    if (vb.size() != vW.rows()) {
      throw ShapeError("affine: bias size " + std::to_string(vb.size()) +
                       " != W rows " + std::to_string(vW.rows()));
    }
    const std::size_t B = vx.rows(), in = vx.cols(), out_dim = vW.rows();
    Tensor out({B, out_dim});
    for (std::size_t i = 0; i < B; ++i) {
      for (std::size_t j = 0; j < out_dim; ++j) out.at(i, j) = vb[j];
    }
    mm_nt(vx.data(), vW.data(), out.data(), B, in, out_dim);
    check_finite(out, "affine");
    return push(std::move(out), [this, x, W, b, B, in, out_dim](const Node& n) {
      // dx += dy * W ; dW += dy^T * x ; db += colsum(dy)
      mm_nn(n.grad.data(), value(W).data(), nodes_[x].grad.data(), B, out_dim, in);
      mm_tn(n.grad.data(), value(x).data(), nodes_[W].grad.data(), out_dim, B, in);
      Tensor& gb = nodes_[b].grad;
      for (std::size_t i = 0; i < B; ++i) {
        const double* g = n.grad.data() + i * out_dim;
        for (std::size_t j = 0; j < out_dim; ++j) gb[j] += g[j];
      }
    });
  }

  Var matmul(Var a, Var b) {
    const Tensor &va = value(a), &vb = value(b);
    if (va.rank() != 2 || vb.rank() != 2 || va.cols() != vb.rows()) {
      throw ShapeError("matmul: incompatible shapes " + shape_str(va.shape()) +
                       " x " + shape_str(vb.shape()));
    }
    const std::size_t m = va.rows(), k = va.cols(), n = vb.cols();
    Tensor out({m, n});
    mm_nn(va.data(), vb.data(), out.data(), m, k, n);
    check_finite(out, "matmul");
    return push(std::move(out), [this, a, b, m, k, n](const Node& nd) {
      mm_nt(nd.grad.data(), value(b).data(), nodes_[a].grad.data(), m, n, k);
      mm_tn(value(a).data(), nd.grad.data(), nodes_[b].grad.data(), k, m, n);
    });
  }

  // --- structural ops ---

  Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const std::size_t B = value(parts[0]).rows();
    std::size_t total = 0;
    for (Var p : parts) {
      if (value(p).rank() != 2 || value(p).rows() != B) {
        throw ShapeError("concat_cols: all inputs must be rank-2 with equal rows");
      }
      total += value(p).cols();
    }
    Tensor out({B, total});
    std::size_t off = 0;
    for (Var p : parts) {
      const Tensor& vp = value(p);
      for (std::size_t i = 0; i < B; ++i) {
        for (std::size_t j = 0; j < vp.cols(); ++j) out.at(i, off + j) = vp.at(i, j);
      }
      off += vp.cols();
    }
    return push(std::move(out), [this, parts, B](const Node& n) {
      std::size_t off = 0;
      for (Var p : parts) {
        Tensor& gp = nodes_[p].grad;
        const std::size_t c = gp.cols();
        for (std::size_t i = 0; i < B; ++i) {
          for (std::size_t j = 0; j < c; ++j) gp.at(i, j) += n.grad.at(i, off + j);
        }
        off += c;
      }
    });
  }

  Var slice_cols(Var x, std::size_t begin, std::size_t end) {
    const Tensor& vx = value(x);
    if (vx.rank() != 2 || begin >= end || end > vx.cols()) {
      throw ShapeError("slice_cols: bad range [" + std::to_string(begin) + "," +
                       std::to_string(end) + ") for " + shape_str(vx.shape()));
    }
    const std::size_t B = vx.rows(), c = end - begin;
    Tensor out({B, c});
    for (std::size_t i = 0; i < B; ++i) {
      for (std::size_t j = 0; j < c; ++j) out.at(i, j) = vx.at(i, begin + j);
    }
    return push(std::move(out), [this, x, begin, B, c](const Node& n) {
      Tensor& gx = nodes_[x].grad;
      for (std::size_t i = 0; i < B; ++i) {
        for (std::size_t j = 0; j < c; ++j) gx.at(i, begin + j) += n.grad.at(i, j);
      }
    });
  }

  // Sum rows of x into buckets: out[segment[i]] += x[i]. Buckets with no rows
  // stay zero (an agent with no neighbours pools to the zero vector).
  Var segment_sum(Var x, std::vector<std::size_t> segment, std::size_t n_segments) {
    const Tensor& vx = value(x);
    if (vx.rank() != 2 || segment.size() != vx.rows()) {
      throw ShapeError("segment_sum: need one segment id per row");
    }
    for (std::size_t s : segment) {
      if (s >= n_segments) throw ShapeError("segment_sum: segment id out of range");
    }
    const std::size_t c = vx.cols();
    Tensor out({n_segments, c});
    for (std::size_t i = 0; i < vx.rows(); ++i) {
      for (std::size_t j = 0; j < c; ++j) out.at(segment[i], j) += vx.at(i, j);
    }
    return push(std::move(out),
                [this, x, segment = std::move(segment), c](const Node& n) {
                  Tensor& gx = nodes_[x].grad;
                  for (std::size_t i = 0; i < segment.size(); ++i) {
                    for (std::size_t j = 0; j < c; ++j) {
                      gx.at(i, j) += n.grad.at(segment[i], j);
                    }
                  }
                });
  }

  // --- reductions ---

  Var sum(Var x) {
    double acc = 0.0;
    const Tensor& vx = value(x);
    for (std::size_t i = 0; i < vx.size(); ++i) acc += vx[i];
    Tensor out = Tensor::scalar(acc);
    check_finite(out, "sum");
    return push(std::move(out), [this, x](const Node& n) {
      accumulate_scalar(x, n.grad[0]);
    });
  }

  // Squared error summed over columns, averaged over rows:
  //   mean_i sum_j (pred[i,j] - target[i,j])^2
  Var mse_sum_mean(Var pred, const Tensor& target) {
    const Tensor& vp = value(pred);
    check_same_shape(vp, target, "mse_sum_mean");
    if (vp.rank() != 2) throw ShapeError("mse_sum_mean: rank-2 input required");
    const std::size_t B = vp.rows();
    double acc = 0.0;
    for (std::size_t i = 0; i < vp.size(); ++i) {
      const double d = vp[i] - target[i];
      acc += d * d;
    }
    Tensor out = Tensor::scalar(acc / static_cast<double>(B));
    check_finite(out, "mse_sum_mean");
    return push(std::move(out), [this, pred, target, B](const Node& n) {
      Tensor& gp = nodes_[pred].grad;
      const Tensor& vp = value(pred);
      const double s = 2.0 * n.grad[0] / static_cast<double>(B);
      for (std::size_t i = 0; i < vp.size(); ++i) gp[i] += s * (vp[i] - target[i]);
    });
  }

  // --- gradients ---

  void backward(Var loss) {
    if (!record_) throw NumericError("backward() on a non-recording tape");
    if (value(loss).size() != 1) {
      throw ShapeError("backward: loss must be a scalar, got " +
                       shape_str(value(loss).shape()));
    }
    for (Node& n : nodes_) {
      if (n.grad.empty()) n.grad = Tensor::zeros(n.value.shape());
    }
    nodes_[loss].grad[0] = 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      if (nodes_[i].back) nodes_[i].back(nodes_[i]);
    }
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(const Node&)> back;
  };

  Var push(Tensor value, std::function<void(const Node&)> back) {
    Node n;
    n.value = std::move(value);
    if (record_) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
  }

  void accumulate(Var v, const Tensor& g, double scale) {
    Tensor& gv = nodes_[v].grad;
    for (std::size_t i = 0; i < g.size(); ++i) gv[i] += scale * g[i];
  }

  void accumulate_scalar(Var v, double g) {
    Tensor& gv = nodes_[v].grad;
    for (std::size_t i = 0; i < gv.size(); ++i) gv[i] += g;
  }

  bool record_;
  std::vector<Node> nodes_;
};

}  // namespace idm
