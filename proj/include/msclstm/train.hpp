#pragma once

// Scratch training and fine-tuning. Both run on one thread; per-sample
// gradients are accumulated in batch order, so a (dataset, config, seed)
// triple fixes every checkpoint byte.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "msclstm/checkpoint.hpp"
#include "msclstm/csv.hpp"
#include "msclstm/data.hpp"
#include "msclstm/loss_optim.hpp"
#include "msclstm/metrics.hpp"
#include "msclstm/model.hpp"
#include "msclstm/random.hpp"

namespace msclstm {

struct TrainConfig {
  int epochs = 100;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  double val_fraction = 0.2;
  bool smote_enabled = true;
  bool freeze_features = false;
  double threshold = 0.5;

  static TrainConfig scratch() { return {}; }
  static TrainConfig finetune() {
    TrainConfig c;
    c.epochs = 20;
    c.learning_rate = 1e-4;
    return c;
  }

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be at least 1, got " + std::to_string(epochs));
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
      throw ConfigError("learning rate must be a finite non-negative number");
    if (!(val_fraction > 0.0 && val_fraction < 1.0))
      throw ConfigError("val_fraction must be in (0, 1), got " + csv::number(val_fraction));
    if (!(threshold >= 0.0 && threshold <= 1.0))
      throw ConfigError("threshold must be in [0, 1], got " + csv::number(threshold));
  }

  nlohmann::json to_json() const {
    return {{"epochs", epochs},
            {"batch_size", batch_size},
            {"learning_rate", learning_rate},
            {"seed", seed},
            {"val_fraction", val_fraction},
            {"smote_enabled", smote_enabled},
            {"freeze_features", freeze_features},
            {"threshold", threshold}};
  }
};

struct EpochLog {
  int epoch = 0;  // 1-based
  double train_loss = 0, train_acc = 0, val_loss = 0, val_acc = 0;
  bool operator==(const EpochLog&) const = default;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochLog> log;
  EvalReport val_report;  // after the final epoch, at cfg.threshold
  std::size_t optimizer_steps = 0;
  std::size_t train_rows = 0;  // after SMOTE
  std::size_t val_rows = 0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Rows of a normalized dataset as (F×1) float model inputs.
inline std::vector<Tensor<float>> model_inputs(const Dataset& ds) {
  const std::size_t F = ds.features();
  std::vector<Tensor<float>> out;
  out.reserve(ds.rows());
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    Tensor<float> x({F, 1});
    for (std::size_t c = 0; c < F; ++c) x[c] = static_cast<float>(ds.X.at(r, c));
    out.push_back(std::move(x));
  }
  return out;
}

struct ScoredSet {
  double loss = 0, accuracy = 0;
  std::vector<int> predicted;
};

inline ScoredSet score(const ModelParams<float>& m, const std::vector<Tensor<float>>& xs,
                       const std::vector<int>& y, double threshold) {
  ScoredSet s;
  s.predicted.reserve(xs.size());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double p = forward(m, xs[i]);
    s.loss += bce_loss(p, y[i]).loss;
    s.predicted.push_back(threshold_label(p, threshold));
    correct += s.predicted.back() == y[i];
  }
  s.loss /= static_cast<double>(xs.size());
  s.accuracy = static_cast<double>(correct) / static_cast<double>(xs.size());
  return s;
}

/// Mini-batch Adam over prepared (normalized, possibly oversampled) splits.
inline TrainResult fit(ModelParams<float> model, const Dataset& train, const Dataset& val,
                       const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  const auto xs = model_inputs(train), vs = model_inputs(val);
  OptimizerState<float> opt;
  opt.learning_rate = cfg.learning_rate;
  GradientSet<float> grads = zero_gradients(model);
  ForwardCache<float> cache;
  Rng shuffle_rng(derive_seed(cfg.seed, "shuffle"));
  std::vector<std::size_t> order(xs.size());

  TrainResult res;
  res.train_rows = train.rows();
  res.val_rows = val.rows();
  ScoredSet last_val;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle_rng.shuffle(order);
    double loss_sum = 0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double inv = 1.0 / static_cast<double>(end - start);
      grads.zero();
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        const double p = forward(model, xs[i], &cache);
        const BceResult l = bce_loss(p, train.y[i]);
        loss_sum += l.loss;
        correct += threshold_label(p, cfg.threshold) == train.y[i];
        backward(model, cache, static_cast<float>(l.dloss_dp * inv), grads);
      }
      adam_step(opt, model.layers, grads);
      ++res.optimizer_steps;
    }
    last_val = score(model, vs, val.y, cfg.threshold);
    const EpochLog e{epoch, loss_sum / static_cast<double>(xs.size()),
                     static_cast<double>(correct) / static_cast<double>(xs.size()), last_val.loss,
                     last_val.accuracy};
    res.log.push_back(e);
    if (on_epoch) on_epoch(e);
  }
  res.val_report = report(confusion(val.y, last_val.predicted));
  res.checkpoint.params = std::move(model);
  return res;
}

struct PreparedSplits {
  Dataset train, val;
  NormStats norm;
};

/// split → normalize on the training split → apply to validation → SMOTE.
inline PreparedSplits prepare_splits(const Dataset& ds, const TrainConfig& cfg) {
  Split s = stratified_split(ds, cfg.val_fraction, derive_seed(cfg.seed, "split"));
  PreparedSplits p;
  p.norm = normalize(s.train);
  apply_norm(p.norm, s.val);
  p.train = cfg.smote_enabled ? smote(s.train, kSmoteNeighbors, derive_seed(cfg.seed, "smote"))
                              : std::move(s.train);
  p.val = std::move(s.val);
  return p;
}

inline TrainResult train_scratch(const Dataset& ds, const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  PreparedSplits p = prepare_splits(ds, cfg);
  TrainResult r = fit(build_model<float>(ds.features(), derive_seed(cfg.seed, "model")), p.train, p.val, cfg,
                      on_epoch);
  r.checkpoint.norm = std::move(p.norm);
  r.checkpoint.fingerprint = ds.fingerprint();
  return r;
}

/// Continues training from `source` on the target dataset. Normalization is
/// recomputed on the target training split. With freeze_features both
/// convolution branches stay fixed.
inline TrainResult finetune(const Checkpoint& source, const Dataset& target, const TrainConfig& cfg,
                            const EpochCallback& on_epoch = {}) {
  cfg.validate();
  require_compatible(source, target);
  PreparedSplits p = prepare_splits(target, cfg);
  ModelParams<float> model = source.params;
  for (auto& l : model.layers) l.trainable = true;
  if (cfg.freeze_features) {
    model.layer("conv_a").trainable = false;
    model.layer("conv_b").trainable = false;
  }
  TrainResult r = fit(std::move(model), p.train, p.val, cfg, on_epoch);
  for (auto& l : r.checkpoint.params.layers) l.trainable = true;
  r.checkpoint.norm = std::move(p.norm);
  r.checkpoint.fingerprint = target.fingerprint();
  return r;
}

/// Probabilities for raw (un-normalized) rows using the checkpoint's stats.
inline std::vector<Prediction> predict_dataset(const Checkpoint& c, const Dataset& raw, double threshold) {
  require_compatible(c, raw);
  Dataset ds = raw;
  apply_norm(c.norm, ds);
  std::vector<Prediction> out;
  out.reserve(ds.rows());
  for (const auto& x : model_inputs(ds)) {
    const double p = forward(c.params, x);
    out.push_back({p, threshold_label(p, threshold), threshold});
  }
  return out;
}

inline EvalReport evaluate(const Checkpoint& c, const Dataset& raw, double threshold) {
  const auto preds = predict_dataset(c, raw, threshold);
  std::vector<int> labels;
  labels.reserve(preds.size());
  for (const auto& p : preds) labels.push_back(p.label);
  return report(confusion(raw.y, labels));
}

inline std::string epoch_log_csv(const std::vector<EpochLog>& log) {
  std::ostringstream out;
  out << "epoch,train_loss,train_acc,val_loss,val_acc\n";
  for (const auto& e : log)
    out << e.epoch << ',' << csv::number(e.train_loss) << ',' << csv::number(e.train_acc) << ','
        << csv::number(e.val_loss) << ',' << csv::number(e.val_acc) << '\n';
  return out.str();
}

/// Two stacked panels, accuracy above loss, train and validation curves.
inline std::string curves_svg(const std::vector<EpochLog>& log) {
  const int W = 640, panel = 220, margin = 50, gap = 40;
  const int H = 2 * panel + gap + 2 * margin;
  const double n = static_cast<double>(std::max<std::size_t>(log.size(), 2) - 1);
  double max_loss = 0;
  for (const auto& e : log) max_loss = std::max({max_loss, e.train_loss, e.val_loss});
  if (max_loss <= 0) max_loss = 1;

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  const auto polyline = [&](int top, double lo, double hi, auto value, const char* color) {
    s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < log.size(); ++i) {
      const double x = margin + (W - 2 * margin) * (log.size() > 1 ? static_cast<double>(i) / n : 0.5);
      const double y = top + panel * (1.0 - (value(log[i]) - lo) / (hi - lo));
      s << csv::number(std::round(x * 10) / 10) << ',' << csv::number(std::round(y * 10) / 10) << ' ';
    }
    s << "\"/>\n";
  };
  const auto frame = [&](int top, const char* title, const std::string& lo, const std::string& hi) {
    s << "<path d=\"M" << margin << ' ' << top << " V" << top + panel << " H" << W - margin
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
    s << "<text x=\"" << margin << "\" y=\"" << top - 8 << "\">" << title << "</text>\n";
    s << "<text x=\"" << margin - 6 << "\" y=\"" << top + 4 << "\" text-anchor=\"end\">" << hi << "</text>\n";
    s << "<text x=\"" << margin - 6 << "\" y=\"" << top + panel << "\" text-anchor=\"end\">" << lo << "</text>\n";
  };
  const int top1 = margin, top2 = margin + panel + gap;
  frame(top1, "accuracy", "0", "1");
  polyline(top1, 0.0, 1.0, [](const EpochLog& e) { return e.train_acc; }, "#1f77b4");
  polyline(top1, 0.0, 1.0, [](const EpochLog& e) { return e.val_acc; }, "#ff7f0e");
  frame(top2, "loss", "0", csv::number(std::round(max_loss * 1000) / 1000));
  polyline(top2, 0.0, max_loss, [](const EpochLog& e) { return e.train_loss; }, "#1f77b4");
  polyline(top2, 0.0, max_loss, [](const EpochLog& e) { return e.val_loss; }, "#ff7f0e");
  s << "<text x=\"" << W - margin << "\" y=\"" << top1 - 8
    << "\" text-anchor=\"end\"><tspan fill=\"#1f77b4\">train</tspan> <tspan fill=\"#ff7f0e\">validation</tspan>"
       "</text>\n";
  s << "<text x=\"" << W / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">epoch (1.." << log.size()
    << ")</text>\n";
  s << "</svg>\n";
  return s.str();
}

}  // namespace msclstm
