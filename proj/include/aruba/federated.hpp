#pragma once
// Discrete-round federated averaging with server-side rate adaptation.  Each
// round the server broadcasts its model and rate, sampled clients run local
// minibatch descent, and the sample-weighted mean of the returned models
// becomes the next global model.  The adaptive variants grow the rate
// accumulators from the server-side model displacement and the clients'
// accumulated squared gradients; a message ledger counts every scalar that
// crosses the wire.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "aruba/engine.hpp"
#include "aruba/environments.hpp"
#include "aruba/losses.hpp"
#include "aruba/meta_scale.hpp"
#include "aruba/rng.hpp"

namespace aruba {

struct Client {
  int id = 0;
  std::vector<LossOracle> train;
  std::vector<LossOracle> test;
  Vec center;  // generation-time optimum, ground truth for diagnostics
};

struct ClientPopulationSpec {
  int num_clients = 100;
  int d = 10;
  int samples = 40;             // per client, before the split
  double train_fraction = 0.8;  // leading share of samples used for training
  double dispersion = 0.5;      // client optima sit on this sphere around the center
  double sample_noise = 0.2;    // per-sample target spread within a client
  Vec center;                   // population center, empty means zero
  LossFamily family = LossFamily::quadratic;
  std::uint64_t seed = 1;
};

inline std::vector<Client> make_clients(const ClientPopulationSpec& spec) {
  require(spec.num_clients >= 1 && spec.d >= 1, "make_clients: need clients and dimensions");
  require(spec.samples >= 2, "make_clients: need at least two samples to split");
  require(spec.train_fraction > 0.0 && spec.train_fraction < 1.0,
          "make_clients: split fraction must lie in (0, 1)");
  require(spec.dispersion >= 0.0 && spec.sample_noise >= 0.0,
          "make_clients: spreads must be >= 0");
  int n_train = static_cast<int>(std::floor(spec.samples * spec.train_fraction));
  n_train = std::clamp(n_train, 1, spec.samples - 1);
  Vec population_center =
      spec.center.size() == 0 ? Vec(Vec::Zero(spec.d)) : spec.center;
  require(population_center.size() == spec.d, "make_clients: center dimension mismatch");

  // Any declared per-loss gradient bound that covers the sampling region.
  double lip = 1.0 + 4.0 * (spec.dispersion + spec.sample_noise + population_center.norm());
  Rng base(spec.seed);
  std::vector<Client> out;
  out.reserve(spec.num_clients);
  for (int i = 0; i < spec.num_clients; ++i) {
    Client c;
    c.id = i;
    Rng opt_rng = base.split2(0x636f7074, i);  // client optimum
    c.center = population_center + spec.dispersion * opt_rng.on_sphere(spec.d);
    Rng loss_rng = base.split2(0x636c6f73, i);  // client samples
    for (int s = 0; s < spec.samples; ++s) {
      LossOracle loss = [&]() {
        if (spec.family == LossFamily::quadratic) {
          Vec target = c.center + spec.sample_noise * loss_rng.on_sphere(spec.d);
          return LossOracle::quadratic(std::move(target), 1.0, lip);
        }
        Vec x = loss_rng.on_sphere(spec.d);
        double cn = std::max(c.center.norm(), 1e-9);
        double p = 1.0 / (1.0 + std::exp(-4.0 * x.dot(c.center) / cn));
        double y = loss_rng.uniform01() < p ? 1.0 : -1.0;
        return LossOracle::logistic(std::move(x), y);
      }();
      if (s < n_train) {
        c.train.push_back(std::move(loss));
      } else {
        c.test.push_back(std::move(loss));
      }
    }
    out.push_back(std::move(c));
  }
  return out;
}

// Leading meta-train share of a population; the rest is held out for
// personalization checks and never participates in training rounds.
inline std::pair<std::vector<Client>, std::vector<Client>> split_clients(
    const std::vector<Client>& pool, double meta_fraction) {
  require(pool.size() >= 2, "split_clients: need at least two clients");
  require(meta_fraction > 0.0 && meta_fraction < 1.0, "split_clients: fraction must lie in (0, 1)");
  int n = static_cast<int>(pool.size());
  int n_meta = std::clamp(static_cast<int>(std::floor(n * meta_fraction)), 1, n - 1);
  std::vector<Client> meta(pool.begin(), pool.begin() + n_meta);
  std::vector<Client> held(pool.begin() + n_meta, pool.end());
  return {std::move(meta), std::move(held)};
}

// One client's contribution to a round.  The isotropic payload compresses the
// squared-gradient vector to its total plus the squared model displacement:
// the accumulator pair the server-side rate update consumes.
struct ClientUpdate {
  Vec delta;                  // returned model minus the broadcast model
  Vec grad_sq_coord;          // per-coordinate payload
  double grad_sq_norm = 0.0;  // isotropic payload, sum over steps of ||grad||^2
  double delta_sq_norm = 0.0;
  int sample_count = 0;       // weighting for the server average
  bool skipped = false;       // no local data
};

namespace detail {

inline void shuffle_indices(std::vector<int>& idx, Rng& rng) {
  for (int i = static_cast<int>(idx.size()) - 1; i > 0; --i) {
    int j = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(i + 1));
    std::swap(idx[i], idx[j]);
  }
}

// First k entries of a shuffled 0..n-1, sorted.
inline std::vector<int> sample_without_replacement(Rng rng, int n, int k) {
  require(n >= 1 && k >= 1, "sample_without_replacement: need positive sizes");
  k = std::min(k, n);
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  shuffle_indices(idx, rng);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace detail

// Local minibatch gradient descent from the broadcast model.  Batches walk a
// shuffled order without replacement, reshuffling when a pass completes.
inline ClientUpdate client_update(const Client& client, const Vec& phi, const Vec& eta,
                                  int local_steps, int batch_size, Rng rng) {
  require(eta.size() == phi.size(), "client_update: rate dimension mismatch");
  require((eta.array() > 0.0).all(), "client_update: rates must be positive");
  require(local_steps >= 1 && batch_size >= 1, "client_update: need positive steps and batch");
  ClientUpdate up;
  if (client.train.empty()) {
    up.skipped = true;
    return up;
  }
  const int d = static_cast<int>(phi.size());
  const int n = static_cast<int>(client.train.size());
  up.grad_sq_coord = Vec::Zero(d);
  up.sample_count = n;

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  detail::shuffle_indices(order, rng);
  int pos = 0;
  Vec x = phi;
  for (int step = 0; step < local_steps; ++step) {
    Vec grad = Vec::Zero(d);
    int take = std::min(batch_size, n);
    for (int b = 0; b < take; ++b) {
      if (pos == n) {
        detail::shuffle_indices(order, rng);
        pos = 0;
      }
      grad += client.train[order[pos++]].subgradient(x);
    }
    grad /= static_cast<double>(take);
    up.grad_sq_coord += grad.cwiseProduct(grad);
    up.grad_sq_norm += grad.squaredNorm();
    x -= eta.cwiseProduct(grad);
  }
  up.delta = x - phi;
  up.delta_sq_norm = up.delta.squaredNorm();
  return up;
}

enum class FedScaleMode { vanilla, isotropic, per_coordinate };

inline const char* to_string(FedScaleMode m) {
  switch (m) {
    case FedScaleMode::vanilla: return "vanilla";
    case FedScaleMode::isotropic: return "isotropic";
    case FedScaleMode::per_coordinate: return "per_coordinate";
  }
  return "?";
}

struct FedConfig {
  FedScaleMode mode = FedScaleMode::per_coordinate;
  int clients_per_round = 10;
  int local_steps = 10;
  int batch_size = 10;
  double epsilon = 0.05;     // adaptive modes
  double zeta = 0.05;
  double p = 1.0;
  double fixed_eta = 0.1;    // vanilla mode rate
  double refine_damping = 1.0;  // share of squared refinement gradients fed back
};

struct RoundRecord {
  int round = 0;    // 1-based
  int clients = 0;  // participants that returned an update
  long long uplink_scalars = 0;
  long long downlink_scalars = 0;
  double eta_min = 0.0;  // rate the clients ran with this round
  double eta_mean = 0.0;
  double eta_max = 0.0;
  double phi_drift = 0.0;     // ||phi_{r+1} - phi_r||
  double client_drift = 0.0;  // weighted mean squared client displacement
};

struct ServerState {
  FedScaleMode mode = FedScaleMode::vanilla;
  Vec phi;
  std::optional<DiagScaleState> diag;
  std::optional<IsotropicScaleState> iso;
  double fixed_eta = 0.1;
  int round = 0;
  std::vector<RoundRecord> ledger;

  Vec eta() const {
    if (diag) return diag->eta();
    if (iso) return Vec::Constant(phi.size(), iso->eta());
    return Vec::Constant(phi.size(), fixed_eta);
  }
};

inline ServerState make_server(int d, const FedConfig& cfg) {
  require(d >= 1, "make_server: need a positive dimension");
  ServerState s;
  s.mode = cfg.mode;
  s.phi = Vec::Zero(d);
  s.fixed_eta = cfg.fixed_eta;
  if (cfg.mode == FedScaleMode::per_coordinate) {
    s.diag = DiagScaleState(d, cfg.epsilon, cfg.zeta, cfg.p);
  } else if (cfg.mode == FedScaleMode::isotropic) {
    s.iso = IsotropicScaleState(cfg.epsilon, cfg.zeta, cfg.p);
  } else {
    require(cfg.fixed_eta > 0.0 && std::isfinite(cfg.fixed_eta),
            "make_server: the fixed rate must be positive");
  }
  return s;
}

namespace detail {

// Per-client uplink scalar count for one round.
inline long long uplink_scalars(FedScaleMode mode, int d) {
  switch (mode) {
    case FedScaleMode::vanilla: return d + 1;         // model, count
    case FedScaleMode::isotropic: return d + 3;       // model, count, accumulator pair
    case FedScaleMode::per_coordinate: return 2LL * d + 1;  // model, count, gradsq vector
  }
  return 0;
}

// Per-client downlink scalar count (broadcast model plus the rate).
inline long long downlink_scalars(FedScaleMode mode, int d) {
  switch (mode) {
    case FedScaleMode::vanilla: return d;
    case FedScaleMode::isotropic: return d + 1;
    case FedScaleMode::per_coordinate: return 2LL * d;
  }
  return 0;
}

}  // namespace detail

// One synchronous round over an already-sampled client batch.  Aggregation
// walks the batch sorted by client id, so the result does not depend on the
// order updates arrive in.
inline RoundRecord server_round(ServerState& state, const std::vector<const Client*>& sampled,
                                const FedConfig& cfg, const Rng& round_rng) {
  require(!sampled.empty(), "server_round: need a non-empty client batch");
  const int d = static_cast<int>(state.phi.size());
  std::vector<const Client*> batch = sampled;
  std::sort(batch.begin(), batch.end(),
            [](const Client* a, const Client* b) { return a->id < b->id; });

  const Vec eta = state.eta();
  const Vec phi = state.phi;
  Vec delta_sum = Vec::Zero(d);
  Vec delta_sq_sum = Vec::Zero(d);
  Vec grad_sq_sum = Vec::Zero(d);
  double grad_sq_norm_sum = 0.0;
  double drift_sum = 0.0;
  double weight_sum = 0.0;
  RoundRecord rec;
  rec.round = state.round + 1;
  for (const Client* client : batch) {
    ClientUpdate up =
        client_update(*client, phi, eta, cfg.local_steps, cfg.batch_size,
                      round_rng.split2(rec.round, client->id));
    if (up.skipped) continue;
    double w = static_cast<double>(up.sample_count);
    delta_sum += w * up.delta;
    delta_sq_sum += w * up.delta.cwiseAbs2();
    grad_sq_sum += w * up.grad_sq_coord;
    grad_sq_norm_sum += w * up.grad_sq_norm;
    drift_sum += w * up.delta_sq_norm;
    weight_sum += w;
    rec.clients += 1;
    rec.uplink_scalars += detail::uplink_scalars(cfg.mode, d);
    rec.downlink_scalars += detail::downlink_scalars(cfg.mode, d);
  }
  if (rec.clients == 0) throw std::runtime_error("server_round: every client was skipped");

  // The distance statistic is the weighted client-level displacement, not the
  // aggregated server step: local models keep sitting a dispersion away from
  // the broadcast model even after the server converges, and it is that
  // spread the learned rate has to match.  The isotropic variant reads it
  // from the uplinked scalar pair; the per-coordinate variant recovers it
  // from the client deltas it already has.
  Vec phi_next = phi + delta_sum / weight_sum;
  if (state.diag) {
    state.diag->accumulate_displacement(delta_sq_sum / weight_sum, grad_sq_sum / weight_sum);
  } else if (state.iso) {
    state.iso->accumulate_displacement(drift_sum / weight_sum, grad_sq_norm_sum / weight_sum);
  }
  state.phi = phi_next;
  state.round += 1;

  rec.eta_min = eta.minCoeff();
  rec.eta_mean = eta.mean();
  rec.eta_max = eta.maxCoeff();
  rec.phi_drift = (phi_next - phi).norm();
  rec.client_drift = drift_sum / weight_sum;
  state.ledger.push_back(rec);
  return rec;
}

struct FedRunResult {
  ServerState server;
  long long uplink_total = 0;
  long long downlink_total = 0;
};

// Full training loop: each round samples clients without replacement and
// runs one synchronous aggregation.
inline FedRunResult run_federated(const std::vector<Client>& pool, const FedConfig& cfg,
                                  int rounds, std::uint64_t seed) {
  require(!pool.empty(), "run_federated: need a client pool");
  require(rounds >= 1, "run_federated: need at least one round");
  require(cfg.clients_per_round >= 1, "run_federated: need clients per round");
  int d = 0;
  for (const Client& c : pool) {
    if (!c.train.empty()) d = static_cast<int>(c.train[0].dim());
    if (d > 0) break;
  }
  require(d > 0, "run_federated: no client has training data");
  FedRunResult out;
  out.server = make_server(d, cfg);
  Rng base(seed);
  Rng sample_rng = base.split(0x73616d70);  // round client sampling
  Rng local_rng = base.split(0x6c6f636c);   // client minibatch orders
  for (int r = 0; r < rounds; ++r) {
    auto idx = detail::sample_without_replacement(sample_rng.split(r),
                                                  static_cast<int>(pool.size()),
                                                  cfg.clients_per_round);
    std::vector<const Client*> batch;
    batch.reserve(idx.size());
    for (int i : idx) batch.push_back(&pool[i]);
    RoundRecord rec = server_round(out.server, batch, cfg, local_rng);
    out.uplink_total += rec.uplink_scalars;
    out.downlink_total += rec.downlink_scalars;
  }
  return out;
}

struct PersonalizeRecord {
  int client_id = 0;
  double pre = 0.0;   // mean test loss of the global model
  double post = 0.0;  // mean test loss after refinement on the train split
};

namespace detail {

inline double mean_loss(const std::vector<LossOracle>& losses, const Vec& x) {
  if (losses.empty()) return 0.0;
  double s = 0.0;
  for (const auto& l : losses) s += l.value(x);
  return s / static_cast<double>(losses.size());
}

}  // namespace detail

// Evaluates the global model on held-out clients before and after k local
// refinement steps.  Adaptive modes refine with the server's learned rate and
// keep shrinking it from the incoming squared gradients; no tuning happens.
inline std::vector<PersonalizeRecord> personalize_eval(const ServerState& state,
                                                       const FedConfig& cfg,
                                                       const std::vector<Client>& heldout,
                                                       int refine_steps) {
  require(refine_steps >= 0, "personalize_eval: steps must be >= 0");
  const int d = static_cast<int>(state.phi.size());
  std::vector<PersonalizeRecord> out;
  out.reserve(heldout.size());
  for (const Client& client : heldout) {
    PersonalizeRecord rec;
    rec.client_id = client.id;
    rec.pre = detail::mean_loss(client.test, state.phi);
    Vec x = state.phi;
    if (refine_steps > 0 && !client.train.empty()) {
      std::optional<RefineState> refine;
      if (state.diag) refine.emplace(state.diag->b(), state.diag->g(), cfg.refine_damping);
      double iso_b = state.iso ? state.iso->b() : 0.0;
      double iso_g = state.iso ? state.iso->g() : 0.0;
      for (int step = 0; step < refine_steps; ++step) {
        Vec eta = refine      ? refine->eta()
                  : state.iso ? Vec::Constant(d, std::sqrt(iso_b / iso_g))
                              : Vec::Constant(d, state.fixed_eta);
        Vec grad = Vec::Zero(d);
        for (const auto& l : client.train) grad += l.subgradient(x);
        grad /= static_cast<double>(client.train.size());
        x -= eta.cwiseProduct(grad);
        if (refine) refine->observe(grad);
        iso_g += cfg.refine_damping * grad.squaredNorm();
      }
    }
    rec.post = detail::mean_loss(client.test, x);
    out.push_back(rec);
  }
  return out;
}

}  // namespace aruba
