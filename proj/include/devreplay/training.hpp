#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "devreplay/device.hpp"
#include "devreplay/dueling_dqn.hpp"
#include "devreplay/env_sim.hpp"
#include "devreplay/replay.hpp"

namespace devreplay {

struct TrainingConfig {
  std::uint64_t seed = 7;
  std::uint64_t total_frames = 100'000;
  ReplayMode mode = ReplayMode::kDevice;
  ReplayConfig replay{};
  NetworkShape network{};
  TrainerConfig trainer{};
  CostModel cost{};
  ComputeModel compute{};
  // Linear epsilon decay from epsilon_start to epsilon_end over epsilon_decay_frames.
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  std::uint64_t epsilon_decay_frames = 30'000;
  std::uint64_t train_every = 1;       // frames per train step once burn-in is over
  std::uint64_t progress_every = 10'000;
  env::Dynamics dynamics{};

  void validate() const;
};

struct LossRecord {
  std::uint64_t step = 0;
  std::uint64_t frame = 0;
  float loss = 0.0f;
  bool target_synced = false;
};

struct TrainingSummary {
  std::uint64_t frames = 0;
  std::uint64_t train_steps = 0;
  std::vector<float> episode_rewards;
  std::vector<int> episode_lengths;
  std::vector<LossRecord> losses;
  std::vector<std::uint64_t> sync_steps;
  DuelingParams<float> final_params;
  TransferStats transfers;

  // Mean episode reward over consecutive windows of `window` episodes.
  std::vector<double> reward_curve(std::size_t window) const;
};

double epsilon_at(const TrainingConfig& cfg, std::uint64_t frame);

// Plays the synthetic environment with an epsilon-greedy policy, feeding every
// transition to the replay and training once burn-in completes. Deterministic
// given cfg.seed. Progress lines go to `progress` when it is non-null.
TrainingSummary run_training(const TrainingConfig& cfg, std::ostream* progress = nullptr);

// Writes loss_log.csv and checkpoint.{bin,manifest} into dir.
void write_training_outputs(const TrainingSummary& summary, const std::string& dir);

// Mean episode length of the greedy policy over seeds [first_seed, first_seed + episodes).
double evaluate_greedy(const DuelingParams<float>& params, std::uint64_t first_seed, int episodes,
                       const env::Dynamics& dyn = {});

}  // namespace devreplay
