#pragma once
// Test-only helpers: random small instances and a central-difference
// gradient oracle that only ever evaluates scalar losses.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "ckd/backbone.hpp"
#include "ckd/data.hpp"

namespace ckd::testing {

struct Instance {
  InteractionData data;
  std::vector<ModalityFeatures> features;
  ModelParams params;
};

// n_users x n_items dataset where every user has items {u % n, u+1 % n, u+2 % n}
// split 1/1/1, plus random features and Xavier parameters.
inline Instance random_instance(std::uint64_t seed, std::size_t n_users = 8,
                                std::size_t n_items = 12, std::size_t dim = 4,
                                std::vector<std::size_t> feature_dims = {6, 6}) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Instance inst;
  inst.data.n_users = n_users;
  inst.data.n_items = n_items;
  for (std::size_t u = 0; u < n_users; ++u) inst.data.users.add("u" + std::to_string(u));
  for (std::size_t i = 0; i < n_items; ++i) inst.data.items.add("i" + std::to_string(i));
  inst.data.train.resize(n_users);
  inst.data.val.resize(n_users);
  inst.data.test.resize(n_users);
  for (std::size_t u = 0; u < n_users; ++u) {
    inst.data.train[u] = {static_cast<Index>(u % n_items)};
    inst.data.val[u] = {static_cast<Index>((u + 1) % n_items)};
    inst.data.test[u] = {static_cast<Index>((u + 2) % n_items)};
  }
  for (std::size_t m = 0; m < feature_dims.size(); ++m) {
    Matrix f(n_items, feature_dims[m]);
    for (double& v : f.data) v = normal(gen);
    inst.features.push_back(make_modality("m" + std::to_string(m), std::move(f)));
  }
  inst.params = init_xavier(ModelShape::of(inst.data, inst.features, dim), seed ^ 0x5eed);
  // Xavier bounds on tall embedding tables are small; widen so margins are O(1).
  for (auto& [name, t] : inst.params.tensors())
    for (double& v : t->data) v *= 3.0;
  return inst;
}

inline TripleBatch random_batch(std::uint64_t seed, std::size_t n, std::size_t n_users,
                                std::size_t n_items) {
  std::mt19937_64 gen(seed);
  TripleBatch b;
  for (std::size_t t = 0; t < n; ++t) {
    const auto u = static_cast<Index>(gen() % n_users);
    const auto a = static_cast<Index>(gen() % n_items);
    auto c = a;
    while (c == a) c = static_cast<Index>(gen() % n_items);
    b.triples.push_back({u, a, c});
  }
  return b;
}

// Central differences of `loss` w.r.t. every parameter entry.
inline ModelParams finite_difference(const ModelParams& at,
                                     const std::function<double(const ModelParams&)>& loss,
                                     double h = 1e-5) {
  ModelParams probe = at;
  ModelParams out = ModelParams::zeros(at.shape());
  auto probe_tensors = probe.tensors();
  auto out_tensors = out.tensors();
  for (std::size_t n = 0; n < probe_tensors.size(); ++n) {
    Matrix& t = *probe_tensors[n].second;
    for (std::size_t k = 0; k < t.size(); ++k) {
      const double orig = t.data[k];
      t.data[k] = orig + h;
      const double up = loss(probe);
      t.data[k] = orig - h;
      const double down = loss(probe);
      t.data[k] = orig;
      out_tensors[n].second->data[k] = (up - down) / (2.0 * h);
    }
  }
  return out;
}

// max over entries of |a - f| / max(|a|, |f|, floor)
inline double max_relative_error(const ModelParams& analytic, const ModelParams& numeric,
                                 double floor = 1e-4) {
  double worst = 0.0;
  const auto a = analytic.tensors();
  const auto f = numeric.tensors();
  for (std::size_t n = 0; n < a.size(); ++n)
    for (std::size_t k = 0; k < a[n].second->size(); ++k) {
      const double x = a[n].second->data[k];
      const double y = f[n].second->data[k];
      const double denom = std::max({std::abs(x), std::abs(y), floor});
      worst = std::max(worst, std::abs(x - y) / denom);
    }
  return worst;
}

}  // namespace ckd::testing
