#pragma once

#include <cmath>

#include "osmid/nn/module.hpp"

namespace osmid::nn {

// Decoupled weight decay Adam. step() reads gradients off the tape's
// parameter bindings; parameters never touched by the tape are skipped.
struct AdamW {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  int64_t t = 0;

  void step(ParamStore& ps, ad::Tape& tape) { step({&ps}, tape); }

  void step(std::initializer_list<ParamStore*> stores, ad::Tape& tape) {
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (ParamStore* ps : stores) update_store(*ps, tape, bc1, bc2);
  }

 private:
  void update_store(ParamStore& ps, ad::Tape& tape, double bc1, double bc2) {
    for (Param* p : ps.all()) {
      if (!p->trainable) continue;
      if (!tape.bound(p)) continue;
      ad::Var v = tape.binding(p);
      const Tensor& g = tape.grad_buf(v.id);
      for (int64_t i = 0; i < p->value.numel(); ++i) {
        double gi = g[i];
        p->m[i] = beta1 * p->m[i] + (1.0 - beta1) * gi;
        p->v[i] = beta2 * p->v[i] + (1.0 - beta2) * gi * gi;
        double mhat = p->m[i] / bc1;
        double vhat = p->v[i] / bc2;
        p->value[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * p->value[i]);
      }
    }
  }
};

}  // namespace osmid::nn
