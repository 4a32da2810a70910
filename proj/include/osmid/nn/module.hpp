#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "osmid/ad/ops.hpp"
#include "osmid/ad/tape.hpp"
#include "osmid/core/digest.hpp"
#include "osmid/core/rng.hpp"
#include "osmid/core/tensor.hpp"

namespace osmid::nn {

struct Param {
  std::string name;
  Tensor value;
  bool trainable = true;
  // AdamW state
  Tensor m, v;

  Param(std::string n, Tensor val, bool train)
      : name(std::move(n)), value(std::move(val)), trainable(train) {
    m = Tensor::zeros(value.shape);
    v = Tensor::zeros(value.shape);
  }
};

// Named parameter registry. Owns all learnable and frozen tensors of a
// model; supports stable digests for freeze contracts and binary
// checkpoint serialization.
class ParamStore {
 public:
  Param& create(const std::string& name, Tensor init, bool trainable = true) {
    if (index_.count(name)) throw std::invalid_argument("param exists: " + name);
    params_.push_back(std::make_unique<Param>(name, std::move(init), trainable));
    index_[name] = params_.size() - 1;
    return *params_.back();
  }

  Param& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no param: " + name);
    return *params_[it->second];
  }
  const Param& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no param: " + name);
    return *params_[it->second];
  }
  bool has(const std::string& name) const { return index_.count(name) > 0; }

  std::vector<Param*> all() {
    std::vector<Param*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(p.get());
    return out;
  }
  std::vector<const Param*> all() const {
    std::vector<const Param*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(p.get());
    return out;
  }

  int64_t count(bool trainable_only = false) const {
    int64_t n = 0;
    for (const auto& p : params_)
      if (!trainable_only || p->trainable) n += p->value.numel();
    return n;
  }

  // Digest over values of parameters matching a name prefix ("" = all).
  std::string digest(const std::string& prefix = "") const {
    Digest d;
    for (const auto& p : params_) {
      if (p->name.rfind(prefix, 0) != 0) continue;
      d.update(p->name);
      for (int s : p->value.shape) d.update(s);
      d.update(p->value.data);
    }
    return d.hex();
  }

 private:
  std::vector<std::unique_ptr<Param>> params_;
  std::unordered_map<std::string, size_t> index_;
};

inline ad::Var use(ad::Tape& tape, Param& p) {
  return tape.bind(&p, p.value, p.trainable);
}

// Initializers -------------------------------------------------------

inline Tensor he_init(std::vector<int> shape, int fan_in, uint64_t seed) {
  Tensor t(std::move(shape));
  auto rng = make_rng({seed});
  fill_normal(t, rng, 0.0, std::sqrt(2.0 / fan_in));
  return t;
}

inline Tensor uniform_fan_init(std::vector<int> shape, int fan_in, uint64_t seed) {
  Tensor t(std::move(shape));
  auto rng = make_rng({seed});
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  fill_uniform(t, rng, -bound, bound);
  return t;
}

// Layers --------------------------------------------------------------

struct Conv2d {
  Param* w = nullptr;  // [kh,kw,Cin,Cout]
  Param* b = nullptr;  // [Cout]
  int stride = 1, pad = 0;

  static Conv2d make(ParamStore& ps, const std::string& name, int kh, int kw,
                     int cin, int cout, int stride, int pad, uint64_t seed,
                     bool trainable = true, bool zero_init = false) {
    Conv2d c;
    Tensor wt = zero_init ? Tensor::zeros({kh, kw, cin, cout})
                          : he_init({kh, kw, cin, cout}, kh * kw * cin, seed);
    c.w = &ps.create(name + ".w", std::move(wt), trainable);
    c.b = &ps.create(name + ".b", Tensor::zeros({cout}), trainable);
    c.stride = stride;
    c.pad = pad;
    return c;
  }

  // Dirac kernel: output channel i copies input channel i at the center.
  void init_identity() {
    const auto& s = w->value.shape;
    if (s[2] != s[3]) throw std::logic_error("init_identity: needs Cin == Cout");
    std::fill(w->value.data.begin(), w->value.data.end(), 0.0);
    int kh = s[0], kw = s[1], c = s[2];
    int cy = kh / 2, cx = kw / 2;
    for (int i = 0; i < c; ++i)
      w->value.data[((static_cast<size_t>(cy) * kw + cx) * c + i) * c + i] = 1.0;
    std::fill(b->value.data.begin(), b->value.data.end(), 0.0);
  }

  ad::Var operator()(ad::Tape& t, ad::Var x) const {
    return ad::conv2d(x, use(t, *w), use(t, *b), stride, pad);
  }
};

struct Linear {
  Param* w = nullptr;  // [in,out]
  Param* b = nullptr;  // [out]

  static Linear make(ParamStore& ps, const std::string& name, int in, int out,
                     uint64_t seed, bool trainable = true, bool zero_init = false) {
    Linear l;
    Tensor wt = zero_init ? Tensor::zeros({in, out})
                          : uniform_fan_init({in, out}, in, seed);
    l.w = &ps.create(name + ".w", std::move(wt), trainable);
    l.b = &ps.create(name + ".b", Tensor::zeros({out}), trainable);
    return l;
  }

  ad::Var operator()(ad::Tape& t, ad::Var x) const {
    return ad::linear(x, use(t, *w), use(t, *b));
  }
};

struct GroupNorm {
  Param* gamma = nullptr;
  Param* beta = nullptr;
  int groups = 1;

  static GroupNorm make(ParamStore& ps, const std::string& name, int channels,
                        int groups, bool trainable = true) {
    GroupNorm g;
    g.gamma = &ps.create(name + ".gamma", Tensor::full({channels}, 1.0), trainable);
    g.beta = &ps.create(name + ".beta", Tensor::zeros({channels}), trainable);
    g.groups = groups;
    return g;
  }

  ad::Var operator()(ad::Tape& t, ad::Var x) const {
    return ad::group_norm(x, use(t, *gamma), use(t, *beta), groups);
  }
};

}  // namespace osmid::nn
