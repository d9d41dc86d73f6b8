#include "ctrgan/training.hpp"

#include <cmath>

namespace ctrgan::train {

void TrainConfig::validate() const {
  if (epochs < 1) throw DataError("train config: epochs must be >= 1");
  if (warmup_epochs < 0 || warmup_epochs > epochs)
    throw DataError("train config: warmup_epochs must lie in [0, epochs]");
  if (lr <= 0.0) throw DataError("train config: lr must be positive");
  if (augment_scale < 1.0) throw DataError("train config: augment_scale must be >= 1");
}

json TrainConfig::to_json() const {
  json j;
  j["epochs"] = epochs;
  j["warmup_epochs"] = warmup_epochs;
  j["lr"] = lr;
  j["adam_beta1"] = adam_beta1;
  j["adam_beta2"] = adam_beta2;
  j["steps_per_epoch"] = steps_per_epoch;
  j["augment"] = augment;
  j["augment_scale"] = augment_scale;
  j["seed"] = seed;
  j["checkpoint_every_epochs"] = checkpoint_every_epochs;
  j["log_every_steps"] = log_every_steps;
  j["perceptual_embedder"] = perceptual_embedder;
  j["overfit_single_batch"] = overfit_single_batch;
  j["loss_weights"] = {{"lambda_idt", weights.lambda_idt},
                       {"lambda_adv", weights.lambda_adv},
                       {"lambda_cyc", weights.lambda_cyc},
                       {"lambda_per", weights.lambda_per}};
  return j;
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.warmup_epochs = j.value("warmup_epochs", c.warmup_epochs);
  c.lr = j.value("lr", c.lr);
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
  c.steps_per_epoch = j.value("steps_per_epoch", c.steps_per_epoch);
  c.augment = j.value("augment", c.augment);
  c.augment_scale = j.value("augment_scale", c.augment_scale);
  c.seed = j.value("seed", c.seed);
  c.checkpoint_every_epochs = j.value("checkpoint_every_epochs", c.checkpoint_every_epochs);
  c.log_every_steps = j.value("log_every_steps", c.log_every_steps);
  c.perceptual_embedder = j.value("perceptual_embedder", c.perceptual_embedder);
  c.overfit_single_batch = j.value("overfit_single_batch", c.overfit_single_batch);
  if (j.contains("loss_weights")) {
    const auto& w = j.at("loss_weights");
    c.weights.lambda_idt = w.value("lambda_idt", c.weights.lambda_idt);
    c.weights.lambda_adv = w.value("lambda_adv", c.weights.lambda_adv);
    c.weights.lambda_cyc = w.value("lambda_cyc", c.weights.lambda_cyc);
    c.weights.lambda_per = w.value("lambda_per", c.weights.lambda_per);
  }
  c.validate();
  return c;
}

double learning_rate_at(const TrainConfig& cfg, double epoch) {
  if (epoch <= cfg.warmup_epochs) return cfg.lr;
  if (epoch >= cfg.epochs) return 0.0;
  return cfg.lr * (cfg.epochs - epoch) / double(cfg.epochs - cfg.warmup_epochs);
}

AugmentedWindow augment_window(const std::vector<gait::IuvaFrame>& window,
                               double scale, Rng& rng) {
  if (window.empty()) throw DataError("augment_window: empty window");
  const int canvas = window.front().height();
  const int enlarged = std::max(canvas + 1, int(std::lround(canvas * scale)));
  const int span = enlarged - canvas;

  AugmentedWindow out;
  out.offset_x = rng.uniform_int(span + 1);
  out.offset_y = rng.uniform_int(span + 1);
  for (const auto& f : window) {
    gait::IuvaFrame big = gait::resample_frame(f, enlarged, enlarged);
    gait::IuvaFrame crop;
    crop.I = big.I.block(out.offset_y, out.offset_x, canvas, canvas);
    crop.U = big.U.block(out.offset_y, out.offset_x, canvas, canvas);
    crop.V = big.V.block(out.offset_y, out.offset_x, canvas, canvas);
    crop.A = big.A.block(out.offset_y, out.offset_x, canvas, canvas);
    out.frames.push_back(std::move(crop));
  }
  return out;
}

void write_loss_curve(const std::vector<LossRow>& rows,
                      const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write loss curve: " + path.string());
  out << "epoch,step,lr,idt,adv,cyc,per,total,d_loss\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%.8g,%.8g,%.8g,%.8g,%.8g,%.8g,%.8g\n",
                  r.epoch, r.step, r.lr, r.parts.idt, r.parts.adv, r.parts.cyc,
                  r.parts.per, r.total, r.d_loss);
    out << buf;
  }
}

}  // namespace ctrgan::train
