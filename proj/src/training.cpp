#include "voxelseg/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include "voxelseg/error.hpp"

namespace voxelseg {

using nn::TensorPtr;

void TrainConfig::validate() const {
  auto check = [](bool ok, const char* what) { require(ok, ErrorCode::ConfigError, std::string("train: ") + what); };
  check(alpha >= 0.0 && beta >= 0.0, "alpha and beta must be non-negative");
  check(initial_lr > 0.0, "initial_lr must be positive");
  check(lr_factor > 0.0 && lr_factor < 1.0, "lr_factor must lie in (0, 1)");
  check(min_lr > 0.0 && min_lr <= initial_lr, "min_lr must lie in (0, initial_lr]");
  check(lr_patience >= 1 && es_patience >= 1, "patience values must be >= 1");
  check(max_epochs >= 0, "max_epochs must be >= 0");
  check(batches_per_epoch >= 1, "batches_per_epoch must be >= 1");
  check(batch_size >= 1, "batch_size must be >= 1");
  check(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0, "Adam betas must lie in [0, 1)");
  check(adam_eps > 0.0, "adam_eps must be positive");
  check(loss_prob_floor > 0.0 && loss_prob_floor < 0.5, "loss_prob_floor must lie in (0, 0.5)");
  check(tversky_smooth >= 0.0, "tversky_smooth must be non-negative");
  check(checkpoint_every >= 1, "checkpoint_every must be >= 1");
}

namespace {
template <typename T>
void check_pair(const TensorPtr<T>& probs, const TensorPtr<T>& onehot) {
  require(probs->shape() == onehot->shape() && probs->rank() >= 2, ErrorCode::ShapeMismatch,
          "loss inputs differ in shape: " + nn::to_string(probs->shape()) + " vs " + nn::to_string(onehot->shape()));
}
}  // namespace

template <typename T>
TensorPtr<T> tversky_loss(nn::Tape<T>* tape, const TensorPtr<T>& probs, const TensorPtr<T>& onehot, double alpha,
                          double beta, double smooth) {
  check_pair(probs, onehot);
  const std::size_t C = probs->shape().back(), n = probs->size() / C;
  std::vector<double> tp(C, 0.0), fn(C, 0.0), fp(C, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < C; ++c) {
      const double p = (*probs)[i * C + c], y = (*onehot)[i * C + c];
      tp[c] += p * y;
      fn[c] += (1.0 - p) * y;
      fp[c] += p * (1.0 - y);
    }
  std::vector<double> num(C), den(C);
  double loss = double(C);
  for (std::size_t c = 0; c < C; ++c) {
    num[c] = tp[c] + smooth;
    den[c] = tp[c] + alpha * fn[c] + beta * fp[c] + smooth;
    loss -= num[c] / den[c];
  }
  const bool tracked = nn::needs_grad(tape, {probs.get()});
  auto out = nn::make_tensor<T>({1}, static_cast<T>(loss), tracked);
  if (tracked) {
    tape->record([probs, onehot, out, num, den, alpha, beta, C, n] {
      if (!out->has_grad()) return;
      const double g = out->grad()[0];
      auto& dp = probs->grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < C; ++c) {
          const double y = (*onehot)[i * C + c];
          const double dnum = y, dden = y * (1.0 - alpha) + beta * (1.0 - y);
          dp[i * C + c] += static_cast<T>(-g * (dnum * den[c] - num[c] * dden) / (den[c] * den[c]));
        }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> cce_loss(nn::Tape<T>* tape, const TensorPtr<T>& probs, const TensorPtr<T>& onehot, double floor) {
  check_pair(probs, onehot);
  const std::size_t C = probs->shape().back(), n = probs->size() / C;
  double total = 0.0;
  for (std::size_t i = 0; i < probs->size(); ++i) {
    const double y = (*onehot)[i];
    if (y != 0.0) total -= y * std::log(std::clamp(double((*probs)[i]), floor, 1.0 - floor));
  }
  const bool tracked = nn::needs_grad(tape, {probs.get()});
  auto out = nn::make_tensor<T>({1}, static_cast<T>(total / double(n)), tracked);
  if (tracked) {
    tape->record([probs, onehot, out, floor, n] {
      if (!out->has_grad()) return;
      const double g = out->grad()[0] / double(n);
      auto& dp = probs->grad();
      for (std::size_t i = 0; i < probs->size(); ++i) {
        const double y = (*onehot)[i], p = (*probs)[i];
        if (y != 0.0 && p > floor && p < 1.0 - floor) dp[i] += static_cast<T>(-g * y / p);
      }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> total_loss(nn::Tape<T>* tape, const TensorPtr<T>& probs, const TensorPtr<T>& onehot,
                        const TrainConfig& cfg) {
  auto tv = tversky_loss(tape, probs, onehot, cfg.alpha, cfg.beta, cfg.tversky_smooth);
  auto ce = cce_loss(tape, probs, onehot, cfg.loss_prob_floor);
  return nn::add(tape, tv, ce);
}

template <typename T>
void adam_step(const std::vector<TensorPtr<T>>& params, OptimizerState<T>& state, const TrainConfig& cfg) {
  for (const auto& p : params) {
    if (!p->has_grad()) continue;
    for (T g : p->grad())
      require(std::isfinite(static_cast<double>(g)), ErrorCode::NonFiniteGradient,
              "non-finite gradient at optimizer step " + std::to_string(state.t + 1));
  }
  if (state.m.size() != params.size()) {
    state.m.clear();
    state.v.clear();
    for (const auto& p : params) {
      state.m.emplace_back(p->size(), T(0));
      state.v.emplace_back(p->size(), T(0));
    }
  }
  ++state.t;
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, double(state.t)), c2 = 1.0 - std::pow(b2, double(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = *params[k];
    require(state.m[k].size() == p.size(), ErrorCode::ShapeMismatch, "optimizer state does not match parameters");
    if (!p.has_grad()) continue;
    const auto& grad = p.grad();
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = grad[i];
      const double mi = b1 * m[i] + (1.0 - b1) * g;
      const double vi = b2 * v[i] + (1.0 - b2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      p[i] = static_cast<T>(p[i] - state.lr * (mi / c1) / (std::sqrt(vi / c2) + cfg.adam_eps));
    }
  }
}

double PlateauScheduler::update(double epoch_loss) {
  if (epoch_loss < best_) {
    best_ = epoch_loss;
    bad_epochs_ = 0;
    return lr_;
  }
  if (++bad_epochs_ >= patience_) {
    lr_ = std::max(lr_ * factor_, min_lr_);
    bad_epochs_ = 0;
  }
  return lr_;
}

bool EarlyStopping::update(double epoch_loss) {
  if (epoch_loss < best_) {
    best_ = epoch_loss;
    bad_epochs_ = 0;
    return false;
  }
  return ++bad_epochs_ >= patience_;
}

double lr_on_plateau(const std::vector<double>& history, const TrainConfig& cfg) {
  PlateauScheduler s(cfg.initial_lr, cfg.lr_factor, cfg.lr_patience, cfg.min_lr);
  for (double l : history) s.update(l);
  return s.lr();
}

bool early_stop(const std::vector<double>& history, int es_patience) {
  EarlyStopping es(es_patience);
  bool stop = false;
  for (double l : history) stop = es.update(l);
  return stop;
}

namespace {
std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}
}  // namespace

std::string FitLog::to_csv() const {
  std::string out = "epoch,train_loss,val_loss,lr,seconds\n";
  for (const auto& r : rows) {
    char secs[32];
    std::snprintf(secs, sizeof secs, "%.3f", r.seconds);
    out += std::to_string(r.epoch) + "," + format_number(r.train_loss) + "," + format_number(r.val_loss) + "," +
           format_number(r.lr) + "," + secs + "\n";
  }
  return out;
}

FitResult fit(Model<float> model, const std::vector<Sample>& train, const std::vector<Sample>& val,
              const TrainConfig& cfg, const PatchGridConfig& patch_cfg, const AugmentConfig& aug, std::uint64_t seed,
              const FitOptions& options) {
  cfg.validate();
  require(!train.empty(), ErrorCode::InvalidArgument, "fit needs at least one training sample");
  PatchGridConfig patch = patch_cfg;
  patch.batch_size = cfg.batch_size;
  patch.validate();

  FitResult result{std::move(model), {}, false};
  OptimizerState<float> state;
  state.lr = cfg.initial_lr;
  PlateauScheduler plateau(cfg.initial_lr, cfg.lr_factor, cfg.lr_patience, cfg.min_lr);
  EarlyStopping stopper(cfg.es_patience);
  const auto params = result.model.trainable();
  const int val_batches = std::max(1, cfg.batches_per_epoch / 10);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    double train_sum = 0.0;
    for (int b = 0; b < cfg.batches_per_epoch; ++b) {
      const Batch batch = training_batch(train, patch, aug, SeededRng::derive(seed, {std::uint64_t(epoch), std::uint64_t(b), 0}));
      nn::Tape<float> tape;
      auto probs = forward(result.model, &tape, batch.images, nn::Mode::Train);
      auto loss = total_loss(&tape, probs, batch.onehot, cfg);
      result.model.zero_grad();
      tape.backward(loss);
      adam_step(params, state, cfg);
      train_sum += (*loss)[0];
    }

    double val_loss = std::numeric_limits<double>::quiet_NaN();
    if (!val.empty()) {
      double sum = 0.0;
      for (int b = 0; b < val_batches; ++b) {
        const Batch batch = training_batch(val, patch, aug, SeededRng::derive(seed, {std::uint64_t(epoch), std::uint64_t(b), 1}));
        auto probs = forward<float>(result.model, nullptr, batch.images, nn::Mode::Infer);
        sum += (*total_loss<float>(nullptr, probs, batch.onehot, cfg))[0];
      }
      val_loss = sum / val_batches;
    }

    FitLog::Row row;
    row.epoch = epoch;
    row.train_loss = train_sum / cfg.batches_per_epoch;
    row.val_loss = val_loss;
    row.lr = state.lr;
    state.lr = plateau.update(row.train_loss);
    const bool stop = stopper.update(row.train_loss);
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.rows.push_back(row);
    if (options.on_epoch) options.on_epoch(row);
    if (!options.checkpoint_dir.empty() && epoch % cfg.checkpoint_every == 0)
      save_checkpoint(result.model, options.checkpoint_dir / ("epoch_" + std::to_string(epoch)));
    if (stop) {
      result.early_stopped = true;
      break;
    }
  }
  return result;
}

#define VOXELSEG_INSTANTIATE(T)                                                                                    \
  template TensorPtr<T> tversky_loss(nn::Tape<T>*, const TensorPtr<T>&, const TensorPtr<T>&, double, double,      \
                                     double);                                                                       \
  template TensorPtr<T> cce_loss(nn::Tape<T>*, const TensorPtr<T>&, const TensorPtr<T>&, double);                  \
  template TensorPtr<T> total_loss(nn::Tape<T>*, const TensorPtr<T>&, const TensorPtr<T>&, const TrainConfig&);    \
  template void adam_step(const std::vector<TensorPtr<T>>&, OptimizerState<T>&, const TrainConfig&);

VOXELSEG_INSTANTIATE(float)
VOXELSEG_INSTANTIATE(double)

}  // namespace voxelseg
