// SPDX-License-Identifier: Apache-2.0

#include "phredgan/training.hpp"

#include <cmath>
#include <cstdio>
#include <iostream>
#include <limits>
#include <stdexcept>

namespace phredgan {

void TrainConfig::validate() const {
  if (!(acc_g_th > 0.0 && acc_g_th <= acc_d_th && acc_d_th <= 1.0))
    throw std::invalid_argument("train: thresholds must satisfy 0 < acc_g_th <= acc_d_th <= 1");
  if (learning_rate < 0.0) throw std::invalid_argument("train: learning rate must be nonnegative");
  if (clip_norm <= 0.0) throw std::invalid_argument("train: clip norm must be positive");
  if (noise_alpha <= 0.0) throw std::invalid_argument("train: noise variance must be positive");
  if (epochs < 1 || batch_size < 1) throw std::invalid_argument("train: epochs and batch size must be >= 1");
}

std::string step_report_header() {
  return "step\tmle\tg_adv\td_loss\td_acc\td_updated\tg_adv_updated";
}

std::string to_tsv(const StepReport& r) {
  char buf[192];
  std::snprintf(buf, sizeof(buf), "%lld\t%.10g\t%.10g\t%.10g\t%.10g\t%d\t%d", r.step, r.mle, r.g_adv,
                r.d_loss, r.d_acc, r.d_updated ? 1 : 0, r.g_adv_updated ? 1 : 0);
  return buf;
}

UpdateDecision decide_updates(double d_acc, const TrainConfig& cfg) {
  return {d_acc < cfg.acc_d_th, d_acc >= cfg.acc_g_th};
}

Tensor mle_loss(Tape& tape, const std::vector<Tensor>& word_losses) {
  if (word_losses.empty()) throw std::invalid_argument("mle_loss: no word losses");
  return mean(tape, concat(tape, word_losses, 0));
}

std::pair<Tensor, Tensor> adversarial_losses(Tape& tape, const std::vector<Tensor>& real,
                                             const std::vector<Tensor>& fake) {
  if (real.empty() || fake.empty()) throw std::invalid_argument("adversarial_losses: empty inputs");
  Tensor real_probs = concat(tape, real, 0);
  Tensor fake_probs = concat(tape, fake, 0);
  Tensor d_real_term = affine(tape, mean(tape, log_op(tape, real_probs)), -1.0, 0.0);
  Tensor d_fake_term =
      affine(tape, mean(tape, log_op(tape, affine(tape, fake_probs, -1.0, 1.0))), -1.0, 0.0);
  Tensor d_loss = add(tape, d_real_term, d_fake_term);
  Tensor g_adv = affine(tape, mean(tape, log_op(tape, fake_probs)), -1.0, 0.0);
  return {d_loss, g_adv};
}

AdvLossValues adversarial_losses(std::span<const double> real, std::span<const double> fake) {
  if (real.empty() || fake.empty()) throw std::invalid_argument("adversarial_losses: empty inputs");
  auto clamped_log = [](double p) { return std::log(p < kLogFloor ? kLogFloor : p); };
  double lr = 0.0, lf = 0.0, lg = 0.0;
  for (double p : real) lr += clamped_log(p);
  for (double p : fake) {
    lf += clamped_log(1.0 - p);
    lg += clamped_log(p);
  }
  AdvLossValues out;
  out.d_loss = -lr / static_cast<double>(real.size()) - lf / static_cast<double>(fake.size());
  out.g_adv = -lg / static_cast<double>(fake.size());
  return out;
}

double discriminator_accuracy(std::span<const double> real, std::span<const double> fake) {
  if (real.empty() && fake.empty())
    throw std::invalid_argument("discriminator_accuracy: no word probabilities");
  long long correct = 0, total = 0;
  for (double p : real) {
    if (p > 0.5) ++correct;
    ++total;
  }
  for (double p : fake) {
    if (p < 0.5) ++correct;
    ++total;
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

double clip_global_norm(std::vector<Tensor>& grads, double max_norm) {
  double sq = 0.0;
  for (const Tensor& g : grads)
    for (double v : g.values()) sq += v * v;
  double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    double scale = max_norm / norm;
    for (Tensor& g : grads)
      for (double& v : g.mutable_values()) v *= scale;
  }
  return norm;
}

Trainer::Trainer(PhredModel& model, TrainConfig cfg) : model_(model), cfg_(cfg) {
  cfg_.validate();
}

namespace {

struct SideLeaves {
  std::vector<ParamEntry> entries;
  std::vector<Tensor> leaves;
};

void apply_sgd(Tape& tape, SideLeaves& side, double lr, double clip) {
  std::vector<Tensor> grads;
  grads.reserve(side.leaves.size());
  for (const Tensor& l : side.leaves) grads.push_back(tape.grad(l));
  clip_global_norm(grads, clip);
  for (std::size_t i = 0; i < side.entries.size(); ++i) {
    auto p = side.entries[i].tensor.mutable_values();
    auto g = grads[i].values();
    for (std::size_t j = 0; j < p.size(); ++j) p[j] -= lr * g[j];
  }
}

}  // namespace

StepReport Trainer::train_step(const Batch& batch, int epoch, int step_in_epoch) {
  Rng rng(Rng::derive(cfg_.seed, 0x57e9, static_cast<std::uint64_t>(epoch),
                      static_cast<std::uint64_t>(step_in_epoch)));
  const NoiseSpec noise_spec{model_.config().noise_mode, cfg_.noise_alpha,
                             model_.config().effective_noise_dim()};
  const SoftmaxMode loss_mode = model_.train_loss_mode();
  const bool adversarial = cfg_.adversarial();

  Tape tape;
  // register every parameter once; ops resolve them to these leaves
  SideLeaves gen_side, disc_side;
  for (const auto& e : model_.params()) {
    Tensor leaf = tape.leaf(e.tensor, /*trainable=*/true);
    if (e.group != ParamGroup::kDiscriminator) {
      gen_side.entries.push_back(e);
      gen_side.leaves.push_back(leaf);
    }
    if (e.group != ParamGroup::kGenerator) {
      disc_side.entries.push_back(e);
      disc_side.leaves.push_back(leaf);
    }
  }

  std::vector<Tensor> word_losses;
  std::vector<Tensor> real_tensors, fake_soft_tensors, fake_sampled_tensors;
  int usable = 0;
  for (const Dialogue& d : batch.dialogues) {
    if (d.turns.size() < 2) {
      std::cerr << "warning: skipping dialogue with " << d.turns.size() << " turn(s)\n";
      continue;
    }
    ++usable;
    Tensor context = model_.zero_context();
    for (std::size_t i = 0; i + 1 < d.turns.size(); ++i) {
      EncoderState enc = model_.encode_turn(tape, context, d.turns[i].tokens, d.turns[i].attribute);
      context = enc.context_state;
      const Turn& next = d.turns[i + 1];
      auto noise = sample_noise(noise_spec, static_cast<int>(next.tokens.size()), rng);
      GeneratorResult gen =
          model_.generator_forward(tape, enc, next.attribute, next.tokens, noise, rng, loss_mode);
      for (auto& l : gen.step_losses) word_losses.push_back(l);
      if (!adversarial) continue;

      // Y_i ~ P(. | context): sampled from the teacher-forced distributions
      std::vector<int> sampled;
      sampled.reserve(gen.step_probs.size());
      for (const Tensor& p : gen.step_probs) sampled.push_back(rng.categorical(p.values()));

      real_tensors.push_back(model_.discriminator_score(tape, enc, next.attribute, next.tokens));
      fake_sampled_tensors.push_back(model_.discriminator_score(tape, enc, next.attribute, sampled));
      // the soft pass keeps d(g_adv)/d(theta_G) alive through the
      // generator's output distributions
      fake_soft_tensors.push_back(
          model_.discriminator_score_soft(tape, enc, next.attribute, gen.step_probs));
    }
  }
  if (usable == 0) throw std::invalid_argument("train: batch contains no dialogue with >= 2 turns");

  StepReport report;
  report.step = global_step;
  Tensor mle = mle_loss(tape, word_losses);
  report.mle = mle.item();
  if (!std::isfinite(report.mle))
    throw std::runtime_error("train: MLE loss is not finite at epoch " + std::to_string(epoch) +
                             " step " + std::to_string(step_in_epoch));

  if (!adversarial) {
    report.g_adv = std::numeric_limits<double>::quiet_NaN();
    report.d_loss = std::numeric_limits<double>::quiet_NaN();
    report.d_acc = std::numeric_limits<double>::quiet_NaN();
    tape.backward(mle);
    apply_sgd(tape, gen_side, cfg_.learning_rate, cfg_.clip_norm);
    ++global_step;
    return report;
  }

  // d_loss scores the sampled utterances, matching what the discriminator
  // sees at inference; the generator's adversarial term runs on the soft
  // pass where its gradient is defined
  Tensor d_loss = adversarial_losses(tape, real_tensors, fake_sampled_tensors).first;
  Tensor g_adv = affine(tape, mean(tape, log_op(tape, concat(tape, fake_soft_tensors, 0))), -1.0, 0.0);
  report.d_loss = d_loss.item();
  report.g_adv = g_adv.item();

  std::vector<double> real_vals, fake_vals;
  for (const Tensor& t : real_tensors)
    real_vals.insert(real_vals.end(), t.values().begin(), t.values().end());
  for (const Tensor& t : fake_sampled_tensors)
    fake_vals.insert(fake_vals.end(), t.values().begin(), t.values().end());
  report.d_acc = discriminator_accuracy(real_vals, fake_vals);

  UpdateDecision gate = decide_updates(report.d_acc, cfg_);
  report.d_updated = gate.update_d;
  report.g_adv_updated = gate.g_uses_adv;

  if (!std::isfinite(report.d_loss) || !std::isfinite(report.g_adv))
    throw std::runtime_error("train: adversarial loss is not finite at epoch " +
                             std::to_string(epoch) + " step " + std::to_string(step_in_epoch));

  // both gradients are taken at the pre-update parameters
  Tensor g_obj = gate.g_uses_adv
                     ? add(tape, affine(tape, g_adv, cfg_.lambda_g, 0.0),
                           affine(tape, mle, cfg_.lambda_m, 0.0))
                     : mle;
  tape.backward(g_obj);
  std::vector<Tensor> g_grads;
  for (const Tensor& l : gen_side.leaves) g_grads.push_back(tape.grad(l));
  clip_global_norm(g_grads, cfg_.clip_norm);

  std::vector<Tensor> d_grads;
  if (gate.update_d) {
    tape.backward(d_loss);
    for (const Tensor& l : disc_side.leaves) d_grads.push_back(tape.grad(l));
    clip_global_norm(d_grads, cfg_.clip_norm);
  }

  for (std::size_t i = 0; i < gen_side.entries.size(); ++i) {
    auto p = gen_side.entries[i].tensor.mutable_values();
    auto g = g_grads[i].values();
    for (std::size_t j = 0; j < p.size(); ++j) p[j] -= cfg_.learning_rate * g[j];
  }
  if (gate.update_d) {
    for (std::size_t i = 0; i < disc_side.entries.size(); ++i) {
      auto p = disc_side.entries[i].tensor.mutable_values();
      auto g = d_grads[i].values();
      for (std::size_t j = 0; j < p.size(); ++j) p[j] -= cfg_.learning_rate * g[j];
    }
  }
  ++global_step;
  return report;
}

std::vector<StepReport> Trainer::train(const std::vector<Dialogue>& corpus) {
  if (corpus.empty()) throw std::invalid_argument("train: empty corpus");
  std::vector<StepReport> reports;
  for (int epoch = start_epoch; epoch < cfg_.epochs; ++epoch) {
    std::vector<Dialogue> order = corpus;
    Rng shuffle_rng(Rng::derive(cfg_.seed, 0x0e0c, static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);
    auto batches = batch_and_pad(order, cfg_.batch_size);
    for (std::size_t s = 0; s < batches.size(); ++s) {
      StepReport r = train_step(batches[s], epoch, static_cast<int>(s));
      if (sink_) sink_(r);
      reports.push_back(r);
    }
    bool periodic = cfg_.checkpoint_every > 0 && (epoch + 1) % cfg_.checkpoint_every == 0;
    bool last = epoch + 1 == cfg_.epochs;
    if (epoch_hook_ && (periodic || last)) epoch_hook_(model_, epoch + 1, global_step);
  }
  return reports;
}

}  // namespace phredgan
