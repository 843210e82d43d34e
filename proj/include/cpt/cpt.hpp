#pragma once

// Controllable Pareto trade-off training.
//
// Each step keeps exponential moving averages of the fairness and accuracy
// gradients. While the KL divergence between the (smoothed) loss ratio and
// the reference vector exceeds psi, the step follows whichever single
// objective is over-represented (correction stage). Once inside the band it
// runs three-objective MGDA over fairness, accuracy and the KL constraint,
// with gradients restricted to large-magnitude parameters (MOO stage).

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cpt/data.hpp"
#include "cpt/errors.hpp"
#include "cpt/moosolver.hpp"
#include "cpt/objectives.hpp"
#include "cpt/paramspace.hpp"
#include "cpt/random.hpp"

namespace cpt {

enum class Method { cpt, cpt_no_ga, cpt_no_prune, mgda, scalarization };

inline constexpr std::array<Method, 5> kAllMethods = {Method::cpt, Method::cpt_no_ga, Method::cpt_no_prune,
                                                      Method::mgda, Method::scalarization};

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::cpt: return "cpt";
    case Method::cpt_no_ga: return "cpt_no_ga";
    case Method::cpt_no_prune: return "cpt_no_prune";
    case Method::mgda: return "mgda";
    case Method::scalarization: return "scalarization";
  }
  return "?";
}

inline std::optional<Method> parse_method(std::string_view s) {
  for (auto m : kAllMethods)
    if (to_string(m) == s) return m;
  return std::nullopt;
}

// How the pruning threshold is derived from |theta|_1.
enum class PruneThresholdMode {
  mean,  // gamma * |theta|_1 / d
  l1,    // gamma * |theta|_1
};

inline std::string_view to_string(PruneThresholdMode m) { return m == PruneThresholdMode::mean ? "mean" : "l1"; }

inline std::optional<PruneThresholdMode> parse_prune_mode(std::string_view s) {
  if (s == "mean") return PruneThresholdMode::mean;
  if (s == "l1") return PruneThresholdMode::l1;
  return std::nullopt;
}

// Which scalar losses drive the stage test and the KL coefficients.
enum class LossSmoothing {
  per_objective,  // EMA with beta_fair / beta_acc
  shared,         // EMA with beta_acc for both losses
  raw,            // current mini-batch losses
};

inline std::string_view to_string(LossSmoothing m) {
  switch (m) {
    case LossSmoothing::per_objective: return "per_objective";
    case LossSmoothing::shared: return "shared";
    case LossSmoothing::raw: return "raw";
  }
  return "?";
}

inline std::optional<LossSmoothing> parse_loss_smoothing(std::string_view s) {
  for (auto m : {LossSmoothing::per_objective, LossSmoothing::shared, LossSmoothing::raw})
    if (to_string(m) == s) return m;
  return std::nullopt;
}

struct TrainConfig {
  ReferenceVector reference{1.0, 1.0};
  double psi = 0.002;
  double gamma = 0.1;
  double beta_fair = 0.85;
  double beta_acc = 0.80;
  double beta_kl = 0.80;
  double lr = 0.01;
  double lr_decay = 0.8;
  double momentum = 0.9;
  std::size_t epochs = 40;
  std::size_t batch_size = 128;
  std::size_t hidden_dim = 16;
  std::uint64_t seed = 0;
  Method method = Method::cpt;
  double scalar_weight = 0.5;  // weight on the fairness gradient
  PruneThresholdMode prune_mode = PruneThresholdMode::mean;
  LossSmoothing loss_smoothing = LossSmoothing::shared;

  void validate() const {
    reference.validate();
    if (!(psi > 0.0)) throw Error("psi must be > 0");
    if (!(gamma >= 0.0)) throw Error("gamma must be >= 0");
    for (double b : {beta_fair, beta_acc, beta_kl})
      if (!(b >= 0.0 && b < 1.0)) throw Error("moving average weights must be in [0, 1)");
    if (!(lr > 0.0)) throw Error("lr must be > 0");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw Error("lr_decay must be in (0, 1]");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw Error("momentum must be in [0, 1)");
    if (epochs < 1) throw Error("epochs must be >= 1");
    if (batch_size < 1) throw Error("batch_size must be >= 1");
    if (hidden_dim < 1) throw Error("hidden_dim must be >= 1");
    if (!(scalar_weight >= 0.0 && scalar_weight <= 1.0)) throw Error("scalar_weight must be in [0, 1]");
  }
};

struct EmaState {
  Vector g_fair, g_acc, g_kl;
  double beta_fair = 0.0, beta_acc = 0.0, beta_kl = 0.0;
  double beta_loss_fair = 0.0, beta_loss_acc = 0.0;  // scalar loss smoothing
  double l_fair_smooth = 0.0, l_acc_smooth = 0.0;
  bool has_losses = false;

  EmaState() = default;
  EmaState(std::size_t d, double bf, double ba, double bk)
      : g_fair(d, 0.0),
        g_acc(d, 0.0),
        g_kl(d, 0.0),
        beta_fair(bf),
        beta_acc(ba),
        beta_kl(bk),
        beta_loss_fair(bf),
        beta_loss_acc(ba) {}

  LossVector smoothed() const noexcept { return {l_fair_smooth, l_acc_smooth}; }
};

struct PruneMask {
  std::vector<std::uint8_t> bits;

  std::size_t size() const noexcept { return bits.size(); }
  double density() const noexcept {
    if (bits.empty()) return 0.0;
    std::size_t on = 0;
    for (auto b : bits) on += b;
    return static_cast<double>(on) / static_cast<double>(bits.size());
  }
  static PruneMask ones(std::size_t d) { return {std::vector<std::uint8_t>(d, 1)}; }
};

enum class Stage { correction, moo, single };

inline std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::correction: return "correction";
    case Stage::moo: return "moo";
    case Stage::single: return "single";
  }
  return "?";
}

struct StepRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  Stage stage = Stage::single;
  double l_fair = 0.0;  // raw batch losses
  double l_acc = 0.0;
  double l_fair_smooth = 0.0;
  double l_acc_smooth = 0.0;
  double psi_value = 0.0;
  std::optional<std::array<double, 3>> alpha;  // (fair, acc, kl); unset in correction
  double mask_density = 1.0;
  double lr = 0.0;
};

using TrainTrace = std::vector<StepRecord>;

// beta * state + (1 - beta) * grad, no bias correction.
inline Vector ema_update(std::span<const double> state, std::span<const double> grad, double beta) {
  if (state.size() != grad.size()) throw DimensionError("ema_update: length mismatch");
  Vector out(state.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = beta * state[i] + (1.0 - beta) * grad[i];
  return out;
}

// bit_i = 0 iff |theta_i| <= threshold.
inline PruneMask make_mask(const ParamVector& p, double gamma, PruneThresholdMode mode = PruneThresholdMode::mean) {
  if (!(gamma >= 0.0)) throw Error("gamma must be >= 0");
  double l1 = 0.0;
  for (double v : p.values) l1 += std::abs(v);
  double threshold = gamma * l1;
  if (mode == PruneThresholdMode::mean && !p.values.empty()) threshold /= static_cast<double>(p.size());
  PruneMask m{std::vector<std::uint8_t>(p.size())};
  for (std::size_t i = 0; i < p.size(); ++i) m.bits[i] = std::abs(p.values[i]) <= threshold ? 0 : 1;
  return m;
}

inline Vector prune(std::span<const double> grad, const PruneMask& mask) {
  if (grad.size() != mask.size()) throw DimensionError("prune: length mismatch");
  Vector out(grad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = mask.bits[i] ? grad[i] : 0.0;
  return out;
}

// Mutable state of one training run.
struct TrainerState {
  ParamVector params;
  EmaState ema;
  Vector velocity;  // momentum buffer
  double lr = 0.0;
  std::size_t step = 0;
  std::size_t epoch = 0;
};

inline TrainerState make_trainer_state(ParamVector params, const TrainConfig& cfg) {
  const std::size_t d = params.size();
  const bool no_ga = cfg.method == Method::cpt_no_ga;
  TrainerState s;
  s.ema = EmaState(d, cfg.beta_fair, cfg.beta_acc, cfg.beta_kl);
  if (no_ga) s.ema.beta_fair = s.ema.beta_acc = s.ema.beta_kl = 0.0;
  switch (cfg.loss_smoothing) {
    case LossSmoothing::per_objective: break;
    case LossSmoothing::shared: s.ema.beta_loss_fair = s.ema.beta_loss_acc; break;
    case LossSmoothing::raw: s.ema.beta_loss_fair = s.ema.beta_loss_acc = 0.0; break;
  }
  s.params = std::move(params);
  s.velocity.assign(d, 0.0);
  s.lr = cfg.lr;
  return s;
}

namespace detail {

inline void require_finite(std::span<const double> v, std::size_t step, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw NumericalError(step, what);
}

inline void require_finite(double v, std::size_t step, const char* what) {
  if (!std::isfinite(v)) throw NumericalError(step, what);
}

// u <- momentum * u + g; theta <- theta - lr * u on every coordinate.
inline void apply_update(TrainerState& s, std::span<const double> g, double momentum) {
  for (std::size_t i = 0; i < g.size(); ++i) {
    s.velocity[i] = momentum * s.velocity[i] + g[i];
    s.params.values[i] -= s.lr * s.velocity[i];
  }
}

// Same, restricted to masked-in coordinates; masked-out coordinates keep
// their value and lose their momentum.
inline void apply_masked_update(TrainerState& s, std::span<const double> g, double momentum, const PruneMask& mask) {
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!mask.bits[i]) {
      s.velocity[i] = 0.0;
      continue;
    }
    s.velocity[i] = momentum * s.velocity[i] + g[i];
    s.params.values[i] -= s.lr * s.velocity[i];
  }
}

inline void smooth_losses(EmaState& ema, LossVector raw) {
  if (!ema.has_losses) {
    ema.l_fair_smooth = raw.fair;
    ema.l_acc_smooth = raw.acc;
    ema.has_losses = true;
    return;
  }
  ema.l_fair_smooth = ema.beta_loss_fair * ema.l_fair_smooth + (1.0 - ema.beta_loss_fair) * raw.fair;
  ema.l_acc_smooth = ema.beta_loss_acc * ema.l_acc_smooth + (1.0 - ema.beta_loss_acc) * raw.acc;
}

// l_fair / l_acc > v_fair / v_acc, without dividing.
inline bool fairness_over_represented(LossVector l, const ReferenceVector& v) {
  return std::max(l.fair, kLossFloor) * v.acc > v.fair * std::max(l.acc, kLossFloor);
}

}  // namespace detail

// One optimization step of the configured method on a mini-batch.
inline StepRecord train_step(const Mlp& net, const GroupedBatch& batch, const TrainConfig& cfg, TrainerState& s) {
  StepRecord rec;
  rec.step = s.step;
  rec.epoch = s.epoch;
  rec.lr = s.lr;

  const bool staged = cfg.method == Method::cpt || cfg.method == Method::cpt_no_ga ||
                      cfg.method == Method::cpt_no_prune;
  PruneMask mask = (staged && cfg.method != Method::cpt_no_prune) ? make_mask(s.params, cfg.gamma, cfg.prune_mode)
                                                                   : PruneMask::ones(s.params.size());
  rec.mask_density = mask.density();

  ObjectiveEval eval = evaluate_objectives(net, s.params, batch);
  detail::require_finite(eval.loss.fair, s.step, "fairness loss");
  detail::require_finite(eval.loss.acc, s.step, "classification loss");
  detail::require_finite(eval.grad_fair, s.step, "fairness gradient");
  detail::require_finite(eval.grad_acc, s.step, "classification gradient");
  rec.l_fair = eval.loss.fair;
  rec.l_acc = eval.loss.acc;

  if (!staged) {
    // Baselines use raw batch quantities; losses are still smoothed for the trace.
    detail::smooth_losses(s.ema, eval.loss);
    rec.l_fair_smooth = s.ema.l_fair_smooth;
    rec.l_acc_smooth = s.ema.l_acc_smooth;
    rec.psi_value = kl_constraint(s.ema.smoothed(), cfg.reference);
    rec.stage = Stage::single;
    Vector g;
    if (cfg.method == Method::mgda) {
      const GradientBundle bundle{{eval.grad_fair, eval.grad_acc}, {"fair", "acc"}};
      const SimplexWeights w = min_norm_weights(bundle);
      g = common_descent(bundle, w);
      rec.alpha = std::array<double, 3>{w[0], w[1], 0.0};
    } else {
      const double w = cfg.scalar_weight;
      g.resize(eval.grad_fair.size());
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = w * eval.grad_fair[i] + (1.0 - w) * eval.grad_acc[i];
      rec.alpha = std::array<double, 3>{w, 1.0 - w, 0.0};
    }
    detail::apply_update(s, g, cfg.momentum);
    detail::require_finite(s.params.values, s.step, "parameters");
    ++s.step;
    return rec;
  }

  s.ema.g_fair = ema_update(s.ema.g_fair, eval.grad_fair, s.ema.beta_fair);
  s.ema.g_acc = ema_update(s.ema.g_acc, eval.grad_acc, s.ema.beta_acc);
  detail::smooth_losses(s.ema, eval.loss);
  const LossVector smoothed = s.ema.smoothed();
  rec.l_fair_smooth = smoothed.fair;
  rec.l_acc_smooth = smoothed.acc;
  rec.psi_value = kl_constraint(smoothed, cfg.reference);
  detail::require_finite(rec.psi_value, s.step, "KL constraint");

  if (rec.psi_value > cfg.psi) {
    rec.stage = Stage::correction;
    const Vector& g = detail::fairness_over_represented(smoothed, cfg.reference) ? s.ema.g_fair : s.ema.g_acc;
    detail::apply_update(s, g, cfg.momentum);
  } else {
    rec.stage = Stage::moo;
    const Vector kl_grad = grad_kl(smoothed, cfg.reference, eval.grad_fair, eval.grad_acc);
    s.ema.g_kl = ema_update(s.ema.g_kl, kl_grad, s.ema.beta_kl);
    const GradientBundle bundle{{prune(s.ema.g_fair, mask), prune(s.ema.g_acc, mask), prune(s.ema.g_kl, mask)},
                                {"fair", "acc", "kl"}};
    const SimplexWeights w = min_norm_weights(bundle);
    const Vector g = common_descent(bundle, w);
    rec.alpha = std::array<double, 3>{w[0], w[1], w[2]};
    detail::apply_masked_update(s, g, cfg.momentum, mask);
  }
  detail::require_finite(s.params.values, s.step, "parameters");
  ++s.step;
  return rec;
}

struct TrainResult {
  ModelConfig model;
  ParamVector params;
  TrainTrace trace;
};

inline ModelConfig model_config_for(const GroupedDataset& ds, const TrainConfig& cfg) {
  return ModelConfig{ds.input_dim(), cfg.hidden_dim, std::max<std::size_t>(ds.num_classes(), 2), cfg.seed};
}

// Full training run: seeded init, per-epoch seeded shuffles, lr decay after
// every epoch. The last-epoch parameters are the solution.
inline TrainResult train(const GroupedDataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  if (ds.size() == 0) throw EmptyBatchError("training dataset is empty");
  const ModelConfig model = model_config_for(ds, cfg);
  const Mlp net(model);
  TrainerState s = make_trainer_state(net.init_params(), cfg);
  TrainTrace trace;
  GroupedBatch batch;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    s.epoch = epoch;
    auto it = batches(ds, cfg.batch_size, derive_seed(cfg.seed, {stream::shuffle, epoch}));
    while (it.next(batch)) trace.push_back(train_step(net, batch, cfg, s));
    s.lr *= cfg.lr_decay;
  }
  return {model, std::move(s.params), std::move(trace)};
}

}  // namespace cpt
