#include "ckd/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ckd/errors.hpp"
#include "ckd/rng.hpp"

namespace ckd {

void SynthConfig::validate() const {
  if (n_users == 0 || n_items == 0 || latent_dim == 0 || interactions_per_user == 0)
    throw ConfigError("synth: counts must be positive");
  if (interactions_per_user >= n_items)
    throw ConfigError("synth: interactions_per_user must be smaller than n_items");
  if (interactions_per_user < 3)
    throw ConfigError("synth: interactions_per_user must be >= 3 to populate train/val/test");
  if (!(noise_scale >= 0.0)) throw ConfigError("synth: noise_scale must be nonnegative");
  if (modalities.empty()) throw ConfigError("synth: at least one modality is required");
  for (const auto& m : modalities) {
    if (!(m.signal_fraction >= 0.0 && m.signal_fraction <= 1.0))
      throw ConfigError("synth: signal_fraction of " + m.id + " must be within [0, 1]");
    if (m.dim == 0) throw ConfigError("synth: modality " + m.id + " has zero dimension");
  }
}

SynthDataset synth_generate(const SynthConfig& config) {
  config.validate();
  Rng rng(derive_seed(config.seed, "synth"));
  const std::size_t k = config.latent_dim;

  Matrix user_latent(config.n_users, k);
  for (double& v : user_latent.data) v = rng.normal();
  Matrix item_latent(config.n_items, k);
  for (std::size_t i = 0; i < config.n_items; ++i) {
    auto row = item_latent.row(i);
    double norm = 0.0;
    for (double& v : row) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : row) v /= norm;
  }

  std::vector<Interaction> interactions;
  interactions.reserve(config.n_users * config.interactions_per_user);
  std::vector<double> scores(config.n_items);
  std::vector<Index> order(config.n_items);
  for (std::size_t u = 0; u < config.n_users; ++u) {
    for (std::size_t i = 0; i < config.n_items; ++i) {
      double s = 0.0;
      for (std::size_t c = 0; c < k; ++c) s += user_latent(u, c) * item_latent(i, c);
      scores[i] = s;
    }
    std::iota(order.begin(), order.end(), Index{0});
    std::partial_sort(order.begin(), order.begin() + config.interactions_per_user, order.end(),
                      [&](Index a, Index b) {
                        return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
                      });
    for (std::size_t r = 0; r < config.interactions_per_user; ++r)
      interactions.push_back({"u" + std::to_string(u), "i" + std::to_string(order[r])});
  }

  IndexMap catalog;
  for (std::size_t i = 0; i < config.n_items; ++i) catalog.add("i" + std::to_string(i));

  SynthDataset out;
  out.data = split(interactions, SplitRatios{}, derive_seed(config.seed, "split"), &catalog);

  const double inv_sqrt_k = 1.0 / std::sqrt(static_cast<double>(k));
  for (const auto& spec : config.modalities) {
    Matrix map(spec.dim, k);
    for (double& v : map.data) v = rng.normal() * inv_sqrt_k;
    Matrix features(config.n_items, spec.dim);
    for (std::size_t i = 0; i < config.n_items; ++i) {
      for (std::size_t r = 0; r < spec.dim; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < k; ++c) s += map(r, c) * item_latent(i, c);
        features(i, r) = spec.signal_fraction * s + config.noise_scale * rng.normal();
      }
    }
    out.features.push_back(make_modality(spec.id, std::move(features)));
  }
  return out;
}

}  // namespace ckd
