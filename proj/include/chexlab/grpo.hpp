#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "chexlab/policy.hpp"
#include "chexlab/rewards.hpp"

namespace chexlab {

enum class Normalization { kPerToken, kDrGrpo };
enum class RewardKind { kHard, kNuanced };

struct GrpoConfig {
  int group_size = 4;
  double temperature = 0.8;
  double top_p = 0.95;
  double kl_coef = 0.15;     // beta
  double clip_low = 0.15;    // epsilon-, ratio floor 1 - clip_low
  double clip_high = 0.22;   // epsilon+, ratio ceiling 1 + clip_high
  Normalization normalization = Normalization::kDrGrpo;
  double advantage_std_floor = 1e-6;
  double learning_rate = 1.0;
  int steps = 500;
  RewardKind reward = RewardKind::kHard;
  uint64_t seed = 0;
  int max_len = 40;
  int batch_observations = 8;
  int checkpoint_interval = 50;
};

struct GroupRollout {
  Observation obs;
  std::vector<Completion> completions;  // carry the old-policy log-probs
  std::vector<double> rewards;
  std::vector<double> advantages;
};

struct SftExample {
  Observation obs;
  std::vector<int> tokens;
  std::vector<uint8_t> mask;  // 1 on assistant-response tokens
};

// Teacher token sequence for a label set: think block listing the labels,
// then a solution block listing them again, comma separated, ending in EOS.
std::vector<int> oracle_tokens(LabelSet y);

SftExample make_sft_example(Observation obs, LabelSet y);

// Mean masked negative log-likelihood and its exact gradient. Throws when the
// batch mask is all zero.
std::pair<double, std::vector<double>> sft_loss(const PolicyParams& params,
                                                std::span<const SftExample> batch);

struct SftConfig {
  int max_epochs = 6;
  int patience = 2;
  int batch_size = 8;
  double learning_rate = 0.05;
  double weight_decay = 0.01;
  double grad_clip = 5.0;
  double warmup_frac = 0.05;
  double val_fraction = 0.10;
  uint64_t seed = 0;
};

struct SftEpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

struct SftResult {
  PolicyParams params;  // best-validation checkpoint
  std::vector<SftEpochLog> log;
  int best_epoch = 0;
  double best_val_loss = 0.0;
};

// AdamW with linear warmup into cosine annealing, early-stopped on validation
// loss with the configured patience. A val_fraction split is held out up
// front; the best-epoch checkpoint is returned.
SftResult train_sft(const SftConfig& cfg, std::span<const SftExample> traces);

// Early-stopping bookkeeping on a validation-loss sequence. Returns 1-based
// (stop_epoch, best_epoch): training stops once the loss has failed to improve
// for `patience` consecutive epochs.
std::pair<int, int> early_stop_schedule(std::span<const double> val_losses, int patience);

// Group-relative advantages: reward centering, with std scaling only in
// per-token mode (floored to avoid zero-variance blowups).
std::vector<double> compute_advantages(std::span<const double> rewards,
                                       Normalization mode, double std_floor);

// exp(log pi_new - log pi_old) per token of each completion.
std::vector<std::vector<double>> importance_ratios(const PolicyParams& params_new,
                                                   const GroupRollout& rollout);

// Exact categorical KL(p || q) with q clamped at 1e-12.
double kl_categorical(std::span<const double> p, std::span<const double> q);

// Sequence aggregation of per-token terms: mean over the sequence's own
// length in per-token mode, sum / l_max in Dr.GRPO mode.
double sequence_aggregate(std::span<const double> per_token_terms,
                          Normalization mode, int l_max);

struct ObjectiveParts {
  double objective = 0.0;  // surrogate - beta * kl
  double surrogate = 0.0;
  double kl = 0.0;
  std::vector<double> grad;
};

ObjectiveParts grpo_objective_parts(const PolicyParams& params,
                                    const PolicyParams& ref_params,
                                    std::span<const GroupRollout> rollouts,
                                    const GrpoConfig& cfg);

// The clipped-surrogate objective with KL regularization, and its gradient.
std::pair<double, std::vector<double>> grpo_objective(const PolicyParams& params,
                                                      const PolicyParams& ref_params,
                                                      std::span<const GroupRollout> rollouts,
                                                      const GrpoConfig& cfg);

// KL term alone, averaged exactly as the objective aggregates it.
double kl_divergence(const PolicyParams& params, const PolicyParams& ref_params,
                     std::span<const GroupRollout> rollouts, const GrpoConfig& cfg);

// Reward hook: receives the parsed completion (token_length already set to
// the true sequence length), the raw completion, and the gold labels.
using RewardFn = std::function<RewardBreakdown(const ParsedOutput&, const Completion&, LabelSet)>;

struct RewardSetup {
  RewardKind kind = RewardKind::kHard;
  HardRewardConfig hard;
  NuancedRewardConfig nuanced;
  LabelStats stats;      // prevalence for the nuanced FP weighting
  RewardFn custom;       // overrides `kind` when set
};

struct GrpoStepLog {
  int step = 0;
  double reward_mean = 0.0;
  RewardBreakdown component_means;
  double completion_length_mean = 0.0;
  double entropy = 0.0;
  double kl = 0.0;
  double objective = 0.0;
};

struct GrpoHooks {
  std::function<void(int step, const PolicyParams&)> on_checkpoint;
};

struct GrpoResult {
  PolicyParams params;
  std::vector<GrpoStepLog> log;
};

// Full training loop: per step, snapshot the old policy, roll out G
// completions per observation, score them in generation order, compute
// group-relative advantages, and take one gradient-ascent step on the
// objective with the SFT checkpoint as the frozen KL reference.
GrpoResult train_grpo(const PolicyParams& sft_checkpoint,
                      std::span<const std::pair<Observation, LabelSet>> data,
                      const GrpoConfig& cfg, const RewardSetup& reward,
                      const GrpoHooks& hooks = {});

}  // namespace chexlab
