// Copyright (c) 2026 BranchForge contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "branchforge/errors.hpp"
#include "branchforge/rng.hpp"
#include "branchforge/state.hpp"

namespace branchforge {

struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
  double* row(int r) { return v.data() + static_cast<std::size_t>(r) * cols; }
  const double* row(int r) const { return v.data() + static_cast<std::size_t>(r) * cols; }
  std::size_t size() const { return v.size(); }

  bool operator==(const Tensor&) const = default;
};

struct ArchConfig {
  int embed_dim = 64;
  int var_in = BipartiteState::kVarFeatures;
  int con_in = BipartiteState::kConFeatures;
  int edge_in = BipartiteState::kEdgeFeatures;
  double dropout_rate = 0.0;  // applied to the final variable embedding in train mode

  bool operator==(const ArchConfig&) const = default;
};

// Named tensors of the policy network, in serialization order.
enum TensorId : int {
  kWv = 0,   // var_in x embed, initial variable embedding
  kBv,       // 1 x embed
  kWc,       // con_in x embed, initial constraint embedding
  kBc,       // 1 x embed
  kUc,       // embed x embed, constraint-side self term
  kMc,       // embed x embed, variable -> constraint message
  kWec,      // edge_in x embed
  kBcc,      // 1 x embed
  kUv,       // embed x embed, variable-side self term
  kMv,       // embed x embed, constraint -> variable message
  kWev,      // edge_in x embed
  kBvv,      // 1 x embed
  kWo,       // embed x 1, final scoring vector
  kBo,       // 1 x 1
  kNumTensors
};

inline constexpr std::array<const char*, kNumTensors> kTensorNames = {
    "W_v", "b_v", "W_c", "b_c", "U_c", "M_c", "W_e_c", "b_cc",
    "U_v", "M_v", "W_e_v", "b_vv", "w_o", "b_o"};

using TensorSet = std::array<Tensor, kNumTensors>;

inline TensorSet make_tensor_set(const ArchConfig& a) {
  const int k = a.embed_dim;
  TensorSet t;
  t[kWv] = Tensor(a.var_in, k);
  t[kBv] = Tensor(1, k);
  t[kWc] = Tensor(a.con_in, k);
  t[kBc] = Tensor(1, k);
  t[kUc] = Tensor(k, k);
  t[kMc] = Tensor(k, k);
  t[kWec] = Tensor(a.edge_in, k);
  t[kBcc] = Tensor(1, k);
  t[kUv] = Tensor(k, k);
  t[kMv] = Tensor(k, k);
  t[kWev] = Tensor(a.edge_in, k);
  t[kBvv] = Tensor(1, k);
  t[kWo] = Tensor(k, 1);
  t[kBo] = Tensor(1, 1);
  return t;
}

struct ModelParams {
  ArchConfig arch;
  std::uint64_t init_seed = 0;
  TensorSet t;

  bool operator==(const ModelParams&) const = default;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 32;
  int epochs = 0;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // 0 disables epoch checkpoint capture
};

/// Glorot-uniform weights, zero biases; deterministic in the seed.
inline ModelParams init_model(const ArchConfig& arch, std::uint64_t seed) {
  if (arch.embed_dim < 1 || arch.dropout_rate < 0.0 || arch.dropout_rate >= 1.0)
    throw Error("init_model: embed_dim must be >= 1 and dropout_rate within [0, 1)");
  ModelParams m;
  m.arch = arch;
  m.init_seed = seed;
  m.t = make_tensor_set(arch);
  Rng rng(derive_seed({seed, 0x917110ULL}));
  for (int id = 0; id < kNumTensors; ++id) {
    if (id == kBv || id == kBc || id == kBcc || id == kBvv || id == kBo) continue;
    Tensor& w = m.t[id];
    const double a = std::sqrt(6.0 / (w.rows + w.cols));
    for (double& x : w.v) x = (2.0 * rng.uniform01() - 1.0) * a;
  }
  return m;
}

namespace detail {

inline void check_state_shape(const ArchConfig& arch, const BipartiteState& s) {
  if (arch.var_in != BipartiteState::kVarFeatures || arch.con_in != BipartiteState::kConFeatures ||
      arch.edge_in != BipartiteState::kEdgeFeatures)
    throw ShapeMismatch("model architecture does not match the state feature layout");
  for (const auto& e : s.edges)
    if (e.con < 0 || e.con >= s.n_cons || e.var < 0 || e.var >= s.n_vars)
      throw ShapeMismatch("edge endpoint outside the state dimensions");
}

// Everything the backward pass needs from one forward evaluation.
struct ForwardTrace {
  Tensor v1_pre, v1, c1_pre, c1, c2_pre, c2, v2_pre, v2, v2_dropped;
  std::vector<std::uint8_t> keep;  // dropout keep mask over v2 entries
  std::vector<double> logits;
  std::vector<double> probs;
};

// out[j,:] += in[j,:] * M  for one row.
inline void row_times_matrix(const double* in, const Tensor& m, double* out) {
  for (int t = 0; t < m.rows; ++t) {
    const double x = in[t];
    if (x == 0.0) continue;
    const double* mr = m.row(t);
    for (int k = 0; k < m.cols; ++k) out[k] += x * mr[k];
  }
}

// out[t] += sum_k d[k] * M[t,k]  (gradient through row_times_matrix).
inline void matrix_times_col(const Tensor& m, const double* d, double* out) {
  for (int t = 0; t < m.rows; ++t) {
    const double* mr = m.row(t);
    double acc = 0.0;
    for (int k = 0; k < m.cols; ++k) acc += d[k] * mr[k];
    out[t] += acc;
  }
}

inline void forward_pass(const ModelParams& model, const BipartiteState& s, bool train_mode,
                         Rng* rng, ForwardTrace& tr) {
  check_state_shape(model.arch, s);
  const int k = model.arch.embed_dim;
  const int n = s.n_vars;
  const int m = s.n_cons;

  tr.v1_pre = Tensor(n, k);
  for (int j = 0; j < n; ++j) {
    double* out = tr.v1_pre.row(j);
    for (int c = 0; c < k; ++c) out[c] = model.t[kBv].v[c];
    row_times_matrix(&s.var_features[static_cast<std::size_t>(j) * model.arch.var_in],
                     model.t[kWv], out);
  }
  tr.v1 = tr.v1_pre;
  for (double& x : tr.v1.v) x = x > 0.0 ? x : 0.0;

  tr.c1_pre = Tensor(m, k);
  for (int i = 0; i < m; ++i) {
    double* out = tr.c1_pre.row(i);
    for (int c = 0; c < k; ++c) out[c] = model.t[kBc].v[c];
    row_times_matrix(&s.con_features[static_cast<std::size_t>(i) * model.arch.con_in],
                     model.t[kWc], out);
  }
  tr.c1 = tr.c1_pre;
  for (double& x : tr.c1.v) x = x > 0.0 ? x : 0.0;

  // Constraint-side convolution: self term plus a sum over incident edges.
  tr.c2_pre = Tensor(m, k);
  for (int i = 0; i < m; ++i) {
    double* out = tr.c2_pre.row(i);
    for (int c = 0; c < k; ++c) out[c] = model.t[kBcc].v[c];
    row_times_matrix(tr.c1.row(i), model.t[kUc], out);
  }
  for (const auto& e : s.edges) {
    double* out = tr.c2_pre.row(e.con);
    row_times_matrix(tr.v1.row(e.var), model.t[kMc], out);
    const double* we = model.t[kWec].row(0);
    for (int c = 0; c < k; ++c) out[c] += e.feat * we[c];
  }
  tr.c2 = tr.c2_pre;
  for (double& x : tr.c2.v) x = x > 0.0 ? x : 0.0;

  // Variable-side convolution.
  tr.v2_pre = Tensor(n, k);
  for (int j = 0; j < n; ++j) {
    double* out = tr.v2_pre.row(j);
    for (int c = 0; c < k; ++c) out[c] = model.t[kBvv].v[c];
    row_times_matrix(tr.v1.row(j), model.t[kUv], out);
  }
  for (const auto& e : s.edges) {
    double* out = tr.v2_pre.row(e.var);
    row_times_matrix(tr.c2.row(e.con), model.t[kMv], out);
    const double* we = model.t[kWev].row(0);
    for (int c = 0; c < k; ++c) out[c] += e.feat * we[c];
  }
  tr.v2 = tr.v2_pre;
  for (double& x : tr.v2.v) x = x > 0.0 ? x : 0.0;

  const double rate = model.arch.dropout_rate;
  tr.v2_dropped = tr.v2;
  tr.keep.clear();
  if (train_mode && rate > 0.0) {
    if (!rng) throw Error("forward: dropout requires an rng in train mode");
    tr.keep.resize(tr.v2.size());
    const double scale = 1.0 / (1.0 - rate);
    for (std::size_t idx = 0; idx < tr.v2.size(); ++idx) {
      tr.keep[idx] = rng->uniform01() >= rate ? 1 : 0;
      tr.v2_dropped.v[idx] = tr.keep[idx] ? tr.v2.v[idx] * scale : 0.0;
    }
  }

  tr.logits.assign(n, 0.0);
  for (int j = 0; j < n; ++j) {
    const double* row = tr.v2_dropped.row(j);
    double z = model.t[kBo].v[0];
    for (int c = 0; c < k; ++c) z += row[c] * model.t[kWo].v[c];
    tr.logits[j] = z;
  }

  // Masked softmax: probabilities are exactly zero off the candidate mask.
  tr.probs.assign(n, 0.0);
  double zmax = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (int j = 0; j < n; ++j)
    if (s.candidate_mask[j]) {
      zmax = std::max(zmax, tr.logits[j]);
      any = true;
    }
  if (!any) throw Error("forward: candidate mask is empty");
  double denom = 0.0;
  for (int j = 0; j < n; ++j)
    if (s.candidate_mask[j]) denom += std::exp(tr.logits[j] - zmax);
  for (int j = 0; j < n; ++j)
    if (s.candidate_mask[j]) tr.probs[j] = std::exp(tr.logits[j] - zmax) / denom;
}

}  // namespace detail

/// Policy distribution over the branching candidates. Inference calls are
/// deterministic and dropout-free.
inline std::vector<double> forward(const ModelParams& model, const BipartiteState& s,
                                   bool train_mode, Rng& rng) {
  detail::ForwardTrace tr;
  detail::forward_pass(model, s, train_mode, &rng, tr);
  return tr.probs;
}

inline std::vector<double> forward(const ModelParams& model, const BipartiteState& s) {
  detail::ForwardTrace tr;
  detail::forward_pass(model, s, /*train_mode=*/false, nullptr, tr);
  return tr.probs;
}

/// Mean cross-entropy of the expert actions over a batch, with analytic
/// gradients in the same named shapes as the parameters. Dropout masks (when
/// the architecture enables dropout) are drawn per sample from `rng`.
inline std::pair<double, TensorSet> loss_and_grad(const ModelParams& model,
                                                  std::span<const BipartiteState> batch,
                                                  Rng& rng) {
  if (batch.empty()) throw EmptyDataset("loss_and_grad: empty batch");
  const int k = model.arch.embed_dim;
  TensorSet grads = make_tensor_set(model.arch);
  double loss_sum = 0.0;

  detail::ForwardTrace tr;
  for (const BipartiteState& s : batch) {
    if (!s.expert_action) throw MissingLabel("loss_and_grad: sample without expert action");
    const int a = *s.expert_action;
    if (a < 0 || a >= s.n_vars || !s.candidate_mask[a])
      throw MissingLabel("loss_and_grad: expert action is not a masked candidate");
    detail::forward_pass(model, s, /*train_mode=*/true, &rng, tr);
    loss_sum += -std::log(tr.probs[a]);

    const int n = s.n_vars;
    const int m = s.n_cons;
    // d loss / d logit = p - onehot(expert) on the candidate set.
    std::vector<double> dz(n, 0.0);
    for (int j = 0; j < n; ++j)
      if (s.candidate_mask[j]) dz[j] = tr.probs[j] - (j == a ? 1.0 : 0.0);

    Tensor d_v2_dropped(n, k);
    for (int j = 0; j < n; ++j) {
      const double g = dz[j];
      grads.at(kBo).v[0] += g;
      if (g == 0.0) continue;
      const double* row = tr.v2_dropped.row(j);
      double* out = d_v2_dropped.row(j);
      for (int c = 0; c < k; ++c) {
        grads.at(kWo).v[c] += g * row[c];
        out[c] = g * model.t[kWo].v[c];
      }
    }

    Tensor d_v2_pre = std::move(d_v2_dropped);
    if (!tr.keep.empty()) {
      const double scale = 1.0 / (1.0 - model.arch.dropout_rate);
      for (std::size_t idx = 0; idx < d_v2_pre.size(); ++idx)
        d_v2_pre.v[idx] = tr.keep[idx] ? d_v2_pre.v[idx] * scale : 0.0;
    }
    for (std::size_t idx = 0; idx < d_v2_pre.size(); ++idx)
      if (tr.v2_pre.v[idx] <= 0.0) d_v2_pre.v[idx] = 0.0;

    Tensor d_v1(n, k);
    Tensor d_c2(m, k);
    for (int j = 0; j < n; ++j) {
      const double* d = d_v2_pre.row(j);
      const double* v1r = tr.v1.row(j);
      for (int c = 0; c < k; ++c) grads.at(kBvv).v[c] += d[c];
      for (int t = 0; t < k; ++t) {
        const double x = v1r[t];
        if (x != 0.0) {
          double* gr = grads.at(kUv).row(t);
          for (int c = 0; c < k; ++c) gr[c] += x * d[c];
        }
      }
      detail::matrix_times_col(model.t[kUv], d, d_v1.row(j));
    }
    for (const auto& e : s.edges) {
      const double* d = d_v2_pre.row(e.var);
      const double* c2r = tr.c2.row(e.con);
      detail::matrix_times_col(model.t[kMv], d, d_c2.row(e.con));
      for (int t = 0; t < k; ++t) {
        const double x = c2r[t];
        if (x != 0.0) {
          double* gr = grads.at(kMv).row(t);
          for (int c = 0; c < k; ++c) gr[c] += x * d[c];
        }
      }
      double* gwe = grads.at(kWev).row(0);
      for (int c = 0; c < k; ++c) gwe[c] += e.feat * d[c];
    }

    Tensor d_c2_pre = std::move(d_c2);
    for (std::size_t idx = 0; idx < d_c2_pre.size(); ++idx)
      if (tr.c2_pre.v[idx] <= 0.0) d_c2_pre.v[idx] = 0.0;

    Tensor d_c1(m, k);
    for (int i = 0; i < m; ++i) {
      const double* d = d_c2_pre.row(i);
      const double* c1r = tr.c1.row(i);
      for (int c = 0; c < k; ++c) grads.at(kBcc).v[c] += d[c];
      for (int t = 0; t < k; ++t) {
        const double x = c1r[t];
        if (x != 0.0) {
          double* gr = grads.at(kUc).row(t);
          for (int c = 0; c < k; ++c) gr[c] += x * d[c];
        }
      }
      detail::matrix_times_col(model.t[kUc], d, d_c1.row(i));
    }
    for (const auto& e : s.edges) {
      const double* d = d_c2_pre.row(e.con);
      const double* v1r = tr.v1.row(e.var);
      detail::matrix_times_col(model.t[kMc], d, d_v1.row(e.var));
      for (int t = 0; t < k; ++t) {
        const double x = v1r[t];
        if (x != 0.0) {
          double* gr = grads.at(kMc).row(t);
          for (int c = 0; c < k; ++c) gr[c] += x * d[c];
        }
      }
      double* gwe = grads.at(kWec).row(0);
      for (int c = 0; c < k; ++c) gwe[c] += e.feat * d[c];
    }

    Tensor d_c1_pre = std::move(d_c1);
    for (std::size_t idx = 0; idx < d_c1_pre.size(); ++idx)
      if (tr.c1_pre.v[idx] <= 0.0) d_c1_pre.v[idx] = 0.0;
    for (int i = 0; i < m; ++i) {
      const double* d = d_c1_pre.row(i);
      const double* feat = &s.con_features[static_cast<std::size_t>(i) * model.arch.con_in];
      for (int c = 0; c < k; ++c) grads.at(kBc).v[c] += d[c];
      for (int t = 0; t < model.arch.con_in; ++t) {
        const double x = feat[t];
        if (x != 0.0) {
          double* gr = grads.at(kWc).row(t);
          for (int c = 0; c < k; ++c) gr[c] += x * d[c];
        }
      }
    }

    Tensor d_v1_pre = std::move(d_v1);
    for (std::size_t idx = 0; idx < d_v1_pre.size(); ++idx)
      if (tr.v1_pre.v[idx] <= 0.0) d_v1_pre.v[idx] = 0.0;
    for (int j = 0; j < n; ++j) {
      const double* d = d_v1_pre.row(j);
      const double* feat = &s.var_features[static_cast<std::size_t>(j) * model.arch.var_in];
      for (int c = 0; c < k; ++c) grads.at(kBv).v[c] += d[c];
      for (int t = 0; t < model.arch.var_in; ++t) {
        const double x = feat[t];
        if (x != 0.0) {
          double* gr = grads.at(kWv).row(t);
          for (int c = 0; c < k; ++c) gr[c] += x * d[c];
        }
      }
    }
  }

  const double inv = 1.0 / static_cast<double>(batch.size());
  for (Tensor& g : grads)
    for (double& x : g.v) x *= inv;
  return {loss_sum * inv, std::move(grads)};
}

struct AdamState {
  TensorSet m1;
  TensorSet m2;
  long step = 0;
};

inline AdamState make_adam_state(const ArchConfig& arch) {
  AdamState s;
  s.m1 = make_tensor_set(arch);
  s.m2 = make_tensor_set(arch);
  return s;
}

/// Standard Adam with bias correction, applied tensor-wise.
inline void adam_step(ModelParams& model, const TensorSet& grads, AdamState& state,
                      const TrainConfig& cfg) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (int id = 0; id < kNumTensors; ++id) {
    Tensor& w = model.t[id];
    const Tensor& g = grads[id];
    if (w.rows != g.rows || w.cols != g.cols)
      throw ShapeMismatch(std::string("adam_step: gradient shape mismatch for ") +
                          kTensorNames[id]);
    Tensor& m1 = state.m1[id];
    Tensor& m2 = state.m2[id];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m1.v[i] = cfg.beta1 * m1.v[i] + (1.0 - cfg.beta1) * g.v[i];
      m2.v[i] = cfg.beta2 * m2.v[i] + (1.0 - cfg.beta2) * g.v[i] * g.v[i];
      const double mhat = m1.v[i] / bc1;
      const double vhat = m2.v[i] / bc2;
      w.v[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    }
  }
}

struct TrainResult {
  ModelParams model;
  std::vector<double> epoch_losses;       // mean sample loss per epoch
  std::vector<ModelParams> checkpoints;   // captured every checkpoint_every epochs
};

/// Full-batch-shuffled minibatch training with Adam. Deterministic in
/// (start model, dataset order, config.seed).
inline TrainResult train(const ModelParams& start, std::span<const BipartiteState> dataset,
                         const TrainConfig& cfg) {
  if (dataset.empty()) throw EmptyDataset("train: empty dataset");
  if (cfg.batch_size < 1 || cfg.learning_rate <= 0.0)
    throw Error("train: batch_size and learning_rate must be positive");
  TrainResult result;
  result.model = start;
  AdamState opt = make_adam_state(start.arch);
  Rng rng(derive_seed({cfg.seed, 0x7ea14ULL}));

  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<BipartiteState> batch;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(begin + cfg.batch_size, order.size());
      batch.clear();
      for (std::size_t i = begin; i < end; ++i) batch.push_back(dataset[order[i]]);
      auto [loss, grads] = loss_and_grad(result.model, batch, rng);
      epoch_loss_sum += loss * static_cast<double>(batch.size());
      adam_step(result.model, grads, opt, cfg);
    }
    result.epoch_losses.push_back(epoch_loss_sum / static_cast<double>(dataset.size()));
    if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0)
      result.checkpoints.push_back(result.model);
  }
  return result;
}

namespace detail {

inline std::uint64_t fnv1a64(const unsigned char* data, std::size_t len) {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= data[i];
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

inline void put_double_le(std::string& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, sizeof(bits));
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

inline double get_double_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  double d;
  std::memcpy(&d, &bits, sizeof(d));
  return d;
}

}  // namespace detail

inline constexpr int kModelSchemaVersion = 1;

/// Model file: one JSON header line (names, shapes, arch, payload length,
/// checksum) followed by the flat little-endian float64 payload. Round-trips
/// bit-exactly.
inline void save_model(const ModelParams& model, const std::string& path) {
  std::string payload;
  for (const Tensor& t : model.t)
    for (double d : t.v) detail::put_double_le(payload, d);

  nlohmann::ordered_json header;
  header["format"] = "branchforge-model";
  header["version"] = kModelSchemaVersion;
  nlohmann::ordered_json arch;
  arch["embed_dim"] = model.arch.embed_dim;
  arch["var_in"] = model.arch.var_in;
  arch["con_in"] = model.arch.con_in;
  arch["edge_in"] = model.arch.edge_in;
  arch["dropout_rate"] = model.arch.dropout_rate;
  arch["activation"] = "relu";
  header["arch"] = std::move(arch);
  header["init_seed"] = model.init_seed;
  nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
  for (int id = 0; id < kNumTensors; ++id)
    tensors.push_back({{"name", kTensorNames[id]},
                       {"shape", {model.t[id].rows, model.t[id].cols}}});
  header["tensors"] = std::move(tensors);
  header["payload_bytes"] = payload.size();
  header["checksum"] = detail::hex64(
      detail::fnv1a64(reinterpret_cast<const unsigned char*>(payload.data()), payload.size()));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << header.dump() << '\n';
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("write to '" + path + "' failed");
}

inline ModelParams load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::string header_line;
  if (!std::getline(in, header_line)) throw ParseError("model file '" + path + "': missing header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("model file header: ") + e.what());
  }

  try {
    if (header.value("format", std::string{}) != "branchforge-model")
      throw ParseError("model file '" + path + "': unknown format");
    if (header.at("version").get<int>() != kModelSchemaVersion)
      throw SchemaVersionMismatch("model file '" + path + "': unsupported version");
    ModelParams m;
    const auto& arch = header.at("arch");
    m.arch.embed_dim = arch.at("embed_dim").get<int>();
    m.arch.var_in = arch.at("var_in").get<int>();
    m.arch.con_in = arch.at("con_in").get<int>();
    m.arch.edge_in = arch.at("edge_in").get<int>();
    m.arch.dropout_rate = arch.at("dropout_rate").get<double>();
    if (arch.value("activation", std::string{}) != "relu")
      throw ParseError("model file '" + path + "': unsupported activation");
    m.init_seed = header.at("init_seed").get<std::uint64_t>();
    m.t = make_tensor_set(m.arch);

    const auto& tensors = header.at("tensors");
    if (tensors.size() != kNumTensors)
      throw ParseError("model file '" + path + "': unexpected tensor count");
    std::size_t expected_payload = 0;
    for (int id = 0; id < kNumTensors; ++id) {
      const auto& spec = tensors.at(id);
      if (spec.at("name").get<std::string>() != kTensorNames[id])
        throw ParseError("model file '" + path + "': tensor order mismatch at index " +
                         std::to_string(id));
      const auto shape = spec.at("shape").get<std::vector<int>>();
      if (shape.size() != 2 || shape[0] != m.t[id].rows || shape[1] != m.t[id].cols)
        throw ParseError("model file '" + path + "': tensor shape does not match architecture");
      expected_payload += m.t[id].size() * sizeof(double);
    }

    const auto payload_bytes = header.at("payload_bytes").get<std::size_t>();
    if (payload_bytes != expected_payload)
      throw ChecksumMismatch("model file '" + path + "': header and payload length disagree");
    std::string payload(payload_bytes, '\0');
    in.read(payload.data(), static_cast<std::streamsize>(payload_bytes));
    if (static_cast<std::size_t>(in.gcount()) != payload_bytes)
      throw ChecksumMismatch("model file '" + path + "': payload truncated");
    char extra;
    if (in.read(&extra, 1), in.gcount() != 0)
      throw ChecksumMismatch("model file '" + path + "': trailing bytes after payload");
    const auto checksum = detail::hex64(
        detail::fnv1a64(reinterpret_cast<const unsigned char*>(payload.data()), payload.size()));
    if (checksum != header.at("checksum").get<std::string>())
      throw ChecksumMismatch("model file '" + path + "': payload checksum mismatch");

    const auto* p = reinterpret_cast<const unsigned char*>(payload.data());
    for (int id = 0; id < kNumTensors; ++id)
      for (double& d : m.t[id].v) {
        d = detail::get_double_le(p);
        p += 8;
      }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model file header: ") + e.what());
  }
}

/// Load with an architecture expectation, as when filling a model pool.
inline ModelParams load_model(const std::string& path, const ArchConfig& expected) {
  ModelParams m = load_model(path);
  if (!(m.arch == expected))
    throw ArchMismatch("model file '" + path + "' does not match the expected architecture");
  return m;
}

}  // namespace branchforge
