#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "idm/autodiff.hpp"
#include "idm/tensor.hpp"

namespace idm {

// Named trainable tensor plus its Adam moment estimates.
struct Param {
  std::string name;
  Tensor value;
  Tensor m;  // first moment
  Tensor v;  // second moment
};

// Insertion-ordered parameter store. Order matters: gradient collection,
// clipping and the optimizer all walk the same sequence, which keeps training
// bit-reproducible.
class ParamSet {
 public:
  Tensor& add(const std::string& name, Tensor init) {
    if (index_.count(name)) throw std::runtime_error("duplicate parameter: " + name);
    index_[name] = params_.size();
    params_.push_back({name, std::move(init),
                       Tensor::zeros(Shape{}), Tensor::zeros(Shape{})});
    Param& p = params_.back();
    p.m = Tensor::zeros(p.value.shape());
    p.v = Tensor::zeros(p.value.shape());
    return p.value;
  }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

  std::size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::runtime_error("unknown parameter: " + name);
    return it->second;
  }

  Tensor& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::runtime_error("unknown parameter: " + name);
    return params_[it->second].value;
  }
  const Tensor& at(const std::string& name) const {
    return const_cast<ParamSet*>(this)->at(name);
  }

  std::size_t count() const { return params_.size(); }
  Param& param(std::size_t i) { return params_[i]; }
  const Param& param(std::size_t i) const { return params_[i]; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const Param& p : params_) n += p.value.size();
    return n;
  }

  std::uint64_t adam_step = 0;

 private:
  std::vector<Param> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Per-pass handles: leaf Vars on the current tape, one per parameter, in
// ParamSet order.
struct TapeBinding {
  std::vector<Var> vars;
};

inline TapeBinding bind_params(Tape& tape, const ParamSet& params) {
  TapeBinding b;
  b.vars.reserve(params.count());
  for (std::size_t i = 0; i < params.count(); ++i) {
    b.vars.push_back(tape.leaf(params.param(i).value));
  }
  return b;
}

inline std::vector<Tensor> collect_grads(const Tape& tape, const ParamSet& params,
                                         const TapeBinding& binding) {
  std::vector<Tensor> grads;
  grads.reserve(params.count());
  for (std::size_t i = 0; i < params.count(); ++i) {
    grads.push_back(tape.grad(binding.vars[i]));
  }
  return grads;
}

inline double global_grad_norm(const std::vector<Tensor>& grads) {
  double sq = 0.0;
  for (const Tensor& g : grads) {
    for (std::size_t i = 0; i < g.size(); ++i) sq += g[i] * g[i];
  }
  return std::sqrt(sq);
}

// Scales gradients in place so the global L2 norm is at most max_norm.
// Returns the pre-clip norm.
inline double clip_global_norm(std::vector<Tensor>& grads, double max_norm) {
  const double norm = global_grad_norm(grads);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (Tensor& g : grads) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= s;
    }
  }
  return norm;
}

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

inline void adam_step(ParamSet& params, const std::vector<Tensor>& grads,
                      const AdamConfig& cfg) {
  if (grads.size() != params.count()) {
    throw ShapeError("adam_step: gradient count mismatch");
  }
  params.adam_step += 1;
  const double t = static_cast<double>(params.adam_step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.count(); ++i) {
    Param& p = params.param(i);
    const Tensor& g = grads[i];
    check_same_shape(p.value, g, "adam_step");
    for (std::size_t j = 0; j < g.size(); ++j) {
      p.m[j] = cfg.beta1 * p.m[j] + (1.0 - cfg.beta1) * g[j];
      p.v[j] = cfg.beta2 * p.v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double mhat = p.m[j] / bc1;
      const double vhat = p.v[j] / bc2;
      p.value[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
    check_finite(p.value, "adam_step");
  }
}

}  // namespace idm
