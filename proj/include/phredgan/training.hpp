// SPDX-License-Identifier: Apache-2.0
//
// Losses, word-level discriminator accuracy, and the gated adversarial
// update loop. Per step: the discriminator trains only while its accuracy
// is below acc_d_th, and the generator receives the adversarial term only
// once the accuracy reaches acc_g_th; the MLE term always flows.

#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "phredgan/model.hpp"

namespace phredgan {

struct TrainConfig {
  double lambda_g = 1.0;
  double lambda_m = 1.0;
  double acc_d_th = 0.99;
  double acc_g_th = 0.75;
  double learning_rate = 0.5;
  double clip_norm = 5.0;
  double noise_alpha = 1.0;
  int epochs = 50;
  int batch_size = 16;
  int checkpoint_every = 0;  // epochs; 0 disables periodic checkpoints
  std::uint64_t seed = 1;

  bool adversarial() const { return lambda_g != 0.0; }
  void validate() const;
};

struct StepReport {
  long long step = 0;
  double mle = 0.0;
  double g_adv = 0.0;
  double d_loss = 0.0;
  double d_acc = 0.0;
  bool d_updated = false;
  bool g_adv_updated = false;
};

std::string step_report_header();
std::string to_tsv(const StepReport& r);

// Algorithm gating on thresholds: the discriminator updates strictly below
// acc_d_th; the generator's adversarial term switches on at acc_g_th.
struct UpdateDecision {
  bool update_d = false;
  bool g_uses_adv = false;
};
UpdateDecision decide_updates(double d_acc, const TrainConfig& cfg);

// mean NLL per word over the given (already mask-filtered) word losses
Tensor mle_loss(Tape& tape, const std::vector<Tensor>& word_losses);

// d_loss = -mean log(real) - mean log(1-fake); g_adv = -mean log(fake).
// Probabilities are clamped at 1e-12 before the logs.
std::pair<Tensor, Tensor> adversarial_losses(Tape& tape, const std::vector<Tensor>& real,
                                             const std::vector<Tensor>& fake);
struct AdvLossValues {
  double d_loss = 0.0;
  double g_adv = 0.0;
};
AdvLossValues adversarial_losses(std::span<const double> real, std::span<const double> fake);

// Fraction of word decisions correct at threshold 0.5: real words count
// when prob > 0.5, fake words when prob < 0.5; a tie at exactly 0.5 counts
// as an error. Every word carries equal weight.
double discriminator_accuracy(std::span<const double> real, std::span<const double> fake);

// scale factor applied, returns the pre-clip global norm
double clip_global_norm(std::vector<Tensor>& grads, double max_norm);

class Trainer {
 public:
  Trainer(PhredModel& model, TrainConfig cfg);

  StepReport train_step(const Batch& batch, int epoch, int step_in_epoch);

  // full run over the corpus; deterministic given the config seed
  std::vector<StepReport> train(const std::vector<Dialogue>& corpus);

  using ReportSink = std::function<void(const StepReport&)>;
  using EpochHook = std::function<void(const PhredModel&, int epoch, long long global_step)>;
  void set_report_sink(ReportSink sink) { sink_ = std::move(sink); }
  void set_epoch_hook(EpochHook hook) { epoch_hook_ = std::move(hook); }

  // resume point (from a checkpoint): training continues at this epoch
  int start_epoch = 0;
  long long global_step = 0;

 private:
  PhredModel& model_;
  TrainConfig cfg_;
  ReportSink sink_;
  EpochHook epoch_hook_;
};

}  // namespace phredgan
