#include "ckd/diagnostics.hpp"

#include <cmath>
#include <sstream>

#include "ckd/errors.hpp"
#include "ckd/format.hpp"
#include "ckd/kernels.hpp"
#include "ckd/math.hpp"
#include "ckd/rng.hpp"

namespace ckd {

const PilotSeries& PilotTrace::find(const std::string& run, const std::string& channel) const {
  for (const auto& s : series)
    if (s.run == run && s.channel == channel) return s;
  throw ConfigError("pilot trace has no series " + run + "/" + channel);
}

std::string PilotTrace::to_csv() const {
  std::string out = "epoch,run,channel,recall\n";
  for (const auto& s : series)
    for (std::size_t e = 0; e < s.recall.size(); ++e)
      out += std::to_string(e) + "," + s.run + "," + s.channel + "," + format_double(s.recall[e]) +
             "\n";
  return out;
}

PilotTrace run_pilot(const InteractionData& data, std::span<const ModalityFeatures> features,
                     const TrainConfig& config) {
  if (features.size() < 2) throw ConfigError("pilot needs at least two modalities");
  PilotTrace trace;

  const TrainResult joint = train_backbone(data, features, config);
  const auto channels = default_channels(features);
  for (std::size_t c = 0; c < channels.size(); ++c) {
    PilotSeries s{"multimodal", channels[c].label, {}, joint.best_epoch};
    for (const auto& t : joint.trace) s.recall.push_back(t.val[c].recall);
    trace.series.push_back(std::move(s));
  }
  for (std::size_t m = 0; m < features.size(); ++m) {
    const TrainResult solo = train_teacher(data, features, m, config);
    PilotSeries s{features[m].id + "-only", features[m].id, {}, solo.best_epoch};
    for (const auto& t : solo.trace) s.recall.push_back(t.val[0].recall);
    trace.series.push_back(std::move(s));
  }
  return trace;
}

// ---------------------------------------------------------------------------

namespace {

struct BridgeProblem {
  std::vector<Matrix> features;  // per modality: n_items x feature_dim
  std::vector<Triple> triples;   // one (u, pos, neg) per user
};

BridgeProblem make_bridge_problem(const BridgeConfig& c) {
  if (c.n_users == 0 || c.n_items < 2 || c.feature_dim == 0)
    throw ConfigError("bridge: need users, >= 2 items and a positive feature dimension");
  Rng rng(derive_seed(c.seed, "bridge"));
  BridgeProblem p;
  for (double scale : {c.strong_scale, 1.0}) {
    Matrix f(c.n_items, c.feature_dim);
    for (double& v : f.data) v = scale * rng.normal();
    p.features.push_back(std::move(f));
  }
  for (std::size_t u = 0; u < c.n_users; ++u) {
    const auto i = static_cast<Index>(rng.index(c.n_items));
    auto j = i;
    while (j == i) j = static_cast<Index>(rng.index(c.n_items));
    p.triples.push_back({static_cast<Index>(u), i, j});
  }
  return p;
}

}  // namespace

BridgeTrace run_bridge_experiment(const BridgeConfig& config, std::vector<bool> active) {
  const BridgeProblem problem = make_bridge_problem(config);
  const std::size_t n_mod = problem.features.size();
  if (active.size() != n_mod) throw ConfigError("bridge: one activity flag per modality");
  const auto& k = kernels::active();
  const std::size_t dm = config.feature_dim;

  // theta[m] row u is p_u^m W_m taken as a single trainable vector.
  std::vector<Matrix> theta(n_mod, Matrix(config.n_users, dm));
  std::vector<Matrix> diffs(n_mod, Matrix(problem.triples.size(), dm));
  for (std::size_t m = 0; m < n_mod; ++m)
    for (std::size_t t = 0; t < problem.triples.size(); ++t) {
      const auto& tr = problem.triples[t];
      k.sub(problem.features[m].row(tr.a).data(), problem.features[m].row(tr.b).data(),
            diffs[m].row(t).data(), dm);
    }

  BridgeTrace trace;
  trace.modalities = {"A", "B"};
  trace.active = active;
  const double n_t = static_cast<double>(problem.triples.size());
  std::vector<Matrix> update(n_mod, Matrix(config.n_users, dm));
  std::vector<double> s(n_mod);

  for (std::size_t step = 0; step <= config.steps; ++step) {
    BridgeStep rec;
    rec.step = step;
    rec.modality_diff.assign(n_mod, 0.0);
    rec.update_norm.assign(n_mod, 0.0);
    for (auto& u : update) u.fill(0.0);

    for (std::size_t t = 0; t < problem.triples.size(); ++t) {
      const Index u = problem.triples[t].u;
      double margin = 0.0;
      for (std::size_t m = 0; m < n_mod; ++m) {
        s[m] = active[m] ? k.dot(theta[m].row(u).data(), diffs[m].row(t).data(), dm) : 0.0;
        margin += s[m];
        rec.modality_diff[m] += s[m] / n_t;
      }
      const double bridge = sigmoid(-margin);  // 1 / (1 + e^{margin})
      rec.margin += margin / n_t;
      rec.bridge += bridge / n_t;
      if (t == 0) {
        rec.first_margin = margin;
        rec.first_bridge = bridge;
        rec.bridge_per_modality.assign(n_mod, bridge);
      }
      // theta <- theta - lr * (dL/dS)(e_i - e_j), dL/dS = -bridge
      for (std::size_t m = 0; m < n_mod; ++m)
        if (active[m])
          k.axpy(config.lr * bridge, diffs[m].row(t).data(), update[m].row(u).data(), dm);
    }
    for (std::size_t m = 0; m < n_mod; ++m) {
      rec.update_norm[m] = std::sqrt(k.sum_squares(update[m].data.data(), update[m].size()));
      if (step < config.steps) k.axpy(1.0, update[m].data.data(), theta[m].data.data(), theta[m].size());
    }
    trace.steps.push_back(std::move(rec));
  }
  return trace;
}

BridgeComparison run_bridge_comparison(const BridgeConfig& config) {
  return {run_bridge_experiment(config, {true, true}), run_bridge_experiment(config, {false, true})};
}

std::string bridge_csv(const BridgeComparison& comparison) {
  std::string out = "step,run,series,value\n";
  auto emit = [&](const BridgeTrace& tr, const std::string& run) {
    for (const auto& st : tr.steps) {
      const std::string prefix = std::to_string(st.step) + "," + run + ",";
      out += prefix + "margin," + format_double(st.margin) + "\n";
      out += prefix + "bridge," + format_double(st.bridge) + "\n";
      for (std::size_t m = 0; m < tr.modalities.size(); ++m) {
        if (!tr.active[m]) continue;
        out += prefix + "S/" + tr.modalities[m] + "," + format_double(st.modality_diff[m]) + "\n";
        out += prefix + "update_norm/" + tr.modalities[m] + "," +
               format_double(st.update_norm[m]) + "\n";
      }
    }
  };
  emit(comparison.joint, "joint");
  emit(comparison.solo, "solo");
  return out;
}

}  // namespace ckd
