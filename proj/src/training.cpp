#include "devreplay/training.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "devreplay/checkpoint.hpp"

namespace devreplay {
namespace {

constexpr std::uint64_t kActStream = 0xAC7;
constexpr std::uint64_t kSampleStream = 0x5A3;
constexpr std::uint64_t kEnvStream = 0xE4F;
constexpr std::uint64_t kEpisodeSeedBase = 0x10000;

}  // namespace

void TrainingConfig::validate() const {
  replay.validate();
  network.validate();
  trainer.validate();
  cost.validate();
  compute.validate();
  if (replay.layout.state_dim != network.state_dim || network.state_dim != env::kStateDim) {
    throw std::invalid_argument("replay, network and environment state dims must agree");
  }
  if (network.num_actions != static_cast<std::size_t>(env::kNumActions) ||
      trainer.num_actions != network.num_actions) {
    throw std::invalid_argument("num_actions must match the environment's 8 moves");
  }
  if (!(epsilon_start >= 0.0 && epsilon_start <= 1.0 && epsilon_end >= 0.0 &&
        epsilon_end <= 1.0)) {
    throw std::invalid_argument("epsilon schedule must lie in [0, 1]");
  }
  if (train_every < 1) {
    throw std::invalid_argument("train_every must be at least 1");
  }
}

double epsilon_at(const TrainingConfig& cfg, std::uint64_t frame) {
  if (frame >= cfg.epsilon_decay_frames) {
    return cfg.epsilon_end;
  }
  const double frac = static_cast<double>(frame) / static_cast<double>(cfg.epsilon_decay_frames);
  return cfg.epsilon_start + frac * (cfg.epsilon_end - cfg.epsilon_start);
}

std::vector<double> TrainingSummary::reward_curve(std::size_t window) const {
  std::vector<double> curve;
  if (window == 0) {
    return curve;
  }
  for (std::size_t begin = 0; begin + window <= episode_rewards.size(); begin += window) {
    double total = 0.0;
    for (std::size_t i = begin; i < begin + window; ++i) {
      total += episode_rewards[i];
    }
    curve.push_back(total / static_cast<double>(window));
  }
  return curve;
}

TrainingSummary run_training(const TrainingConfig& cfg, std::ostream* progress) {
  cfg.validate();
  Device device(cfg.cost, cfg.compute);
  auto replay = make_replay(cfg.mode, cfg.replay, device);
  DuelingTrainer trainer(cfg.network, cfg.trainer, cfg.seed, device);

  Rng act_rng = make_rng(cfg.seed, kActStream);
  Rng sample_rng = make_rng(cfg.seed, kSampleStream);
  Rng env_rng = make_rng(cfg.seed, kEnvStream);

  TrainingSummary summary;
  std::uint64_t episode = 0;
  env::EnvState state = env::reset(cfg.seed * kEpisodeSeedBase + episode, cfg.dynamics);
  float episode_reward = 0.0f;
  int episode_length = 0;

  Experience exp;
  exp.old_state.resize(env::kStateDim);
  exp.new_state.resize(env::kStateDim);

  for (std::uint64_t frame = 0; frame < cfg.total_frames; ++frame) {
    const std::int32_t action =
        trainer.act_epsilon_greedy(state, epsilon_at(cfg, frame), act_rng);
    const env::StepResult result = env::step(state, action, env_rng, cfg.dynamics);

    std::copy(state.begin(), state.end(), exp.old_state.begin());
    std::copy(result.next_state.begin(), result.next_state.end(), exp.new_state.begin());
    exp.action = action;
    exp.reward = result.reward;
    exp.terminal = result.terminal;
    replay->add(exp);

    episode_reward += result.reward;
    ++episode_length;
    if (result.terminal) {
      summary.episode_rewards.push_back(episode_reward);
      summary.episode_lengths.push_back(episode_length);
      episode_reward = 0.0f;
      episode_length = 0;
      ++episode;
      state = env::reset(cfg.seed * kEpisodeSeedBase + episode, cfg.dynamics);
    } else {
      state = result.next_state;
    }

    if (replay->ready() && frame % cfg.train_every == 0) {
      const ExperienceBatch batch = replay->sample(cfg.trainer.batch_size, sample_rng);
      const float loss = trainer.train_step(batch);
      const std::uint64_t step = trainer.state().step_count;
      summary.losses.push_back({step, frame + 1, loss, trainer.synced_last_step()});
      if (trainer.synced_last_step()) {
        summary.sync_steps.push_back(step);
      }
    }

    if (progress != nullptr && cfg.progress_every != 0 && (frame + 1) % cfg.progress_every == 0) {
      const std::size_t n = summary.episode_lengths.size();
      const std::size_t recent = std::min<std::size_t>(n, 20);
      double mean_len = 0.0;
      for (std::size_t i = n - recent; i < n; ++i) {
        mean_len += summary.episode_lengths[i];
      }
      mean_len = recent ? mean_len / static_cast<double>(recent) : 0.0;
      char line[256];
      std::snprintf(line, sizeof line,
                    "frame=%llu episodes=%zu recent_mean_length=%.2f train_steps=%llu "
                    "last_loss=%.6g epsilon=%.3f",
                    static_cast<unsigned long long>(frame + 1), n, mean_len,
                    static_cast<unsigned long long>(trainer.state().step_count),
                    summary.losses.empty() ? 0.0 : static_cast<double>(summary.losses.back().loss),
                    epsilon_at(cfg, frame));
      *progress << line << '\n';
    }
  }

  summary.frames = cfg.total_frames;
  summary.train_steps = trainer.state().step_count;
  summary.final_params = trainer.state().online;
  summary.transfers = device.stats();
  return summary;
}

void write_training_outputs(const TrainingSummary& summary, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::string log_path = dir + "/loss_log.csv";
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) {
    throw std::runtime_error("cannot write " + log_path);
  }
  log << "step,frame,loss,target_synced\n";
  char buf[96];
  for (const LossRecord& r : summary.losses) {
    std::snprintf(buf, sizeof buf, "%llu,%llu,%.9g,%d\n", static_cast<unsigned long long>(r.step),
                  static_cast<unsigned long long>(r.frame), static_cast<double>(r.loss),
                  r.target_synced ? 1 : 0);
    log << buf;
  }
  save_checkpoint(summary.final_params, dir + "/checkpoint");
}

double evaluate_greedy(const DuelingParams<float>& params, std::uint64_t first_seed, int episodes,
                       const env::Dynamics& dyn) {
  const env::Policy greedy = [&params](const env::EnvState& s, Rng&) {
    const Mat<float> q = forward(params, states_matrix<float>(s));
    return greedy_action(std::span<const float>(q.data(), static_cast<std::size_t>(q.cols())));
  };
  return env::mean_episode_length(greedy, first_seed, episodes, dyn);
}

}  // namespace devreplay
