#include "devreplay/env_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace devreplay::env {
namespace {

constexpr std::uint64_t kResetStream = 0xE5E7;
constexpr std::uint64_t kEpisodeStream = 0xE915;

constexpr double kDiag = std::numbers::sqrt2 / 2.0;
constexpr std::array<std::array<double, 2>, kNumActions> kDirections{{
    {1.0, 0.0}, {kDiag, kDiag}, {0.0, 1.0}, {-kDiag, kDiag},
    {-1.0, 0.0}, {-kDiag, -kDiag}, {0.0, -1.0}, {kDiag, -kDiag},
}};

double clamp_to_arena(double v, const Dynamics& dyn) {
  return std::clamp(v, -static_cast<double>(dyn.arena), static_cast<double>(dyn.arena));
}

EnvState observe(double ax, double ay, double avx, double avy, double ox, double oy, double ovx,
                 double ovy, int t, Rng& rng, const Dynamics& dyn) {
  EnvState s{};
  const double dx = ox - ax;
  const double dy = oy - ay;
  const double dist = std::hypot(dx, dy);
  s[kAgentX] = static_cast<float>(ax);
  s[kAgentY] = static_cast<float>(ay);
  s[kAgentVx] = static_cast<float>(avx / dyn.agent_speed);
  s[kAgentVy] = static_cast<float>(avy / dyn.agent_speed);
  s[kOpponentX] = static_cast<float>(ox);
  s[kOpponentY] = static_cast<float>(oy);
  s[kOpponentVx] = static_cast<float>(ovx / dyn.opponent_speed);
  s[kOpponentVy] = static_cast<float>(ovy / dyn.opponent_speed);
  s[kOffsetX] = static_cast<float>(dx);
  s[kOffsetY] = static_cast<float>(dy);
  s[kDistance] = static_cast<float>(dist);
  s[kTime] = static_cast<float>(static_cast<double>(t) / dyn.max_steps);
  s[kWallLeft] = static_cast<float>(ax + dyn.arena);
  s[kWallRight] = static_cast<float>(dyn.arena - ax);
  s[kWallBottom] = static_cast<float>(ay + dyn.arena);
  s[kWallTop] = static_cast<float>(dyn.arena - ay);
  s[kHeadingX] = dist > 0.0 ? static_cast<float>(dx / dist) : 0.0f;
  s[kHeadingY] = dist > 0.0 ? static_cast<float>(dy / dist) : 0.0f;
  std::uniform_real_distribution<float> noise(-1.0f, 1.0f);
  for (std::size_t i = kNoiseBegin; i < kStateDim; ++i) {
    s[i] = noise(rng);
  }
  return s;
}

}  // namespace

EnvState reset(std::uint64_t seed, const Dynamics& dyn) {
  Rng rng = make_rng(seed, kResetStream);
  std::uniform_real_distribution<double> agent_pos(-dyn.agent_spawn_half_width,
                                                   dyn.agent_spawn_half_width);
  std::uniform_real_distribution<double> opp_pos(-dyn.opponent_spawn_half_width,
                                                 dyn.opponent_spawn_half_width);
  const double ax = agent_pos(rng);
  const double ay = agent_pos(rng);
  double ox = 0.0;
  double oy = 0.0;
  do {
    ox = opp_pos(rng);
    oy = opp_pos(rng);
  } while (std::hypot(ox - ax, oy - ay) < dyn.min_spawn_separation);
  return observe(ax, ay, 0.0, 0.0, ox, oy, 0.0, 0.0, 0, rng, dyn);
}

int elapsed_steps(const EnvState& state, const Dynamics& dyn) {
  return static_cast<int>(std::lround(static_cast<double>(state[kTime]) * dyn.max_steps));
}

StepResult step(const EnvState& state, std::int32_t action, Rng& rng, const Dynamics& dyn) {
  if (action < 0 || action >= kNumActions) {
    throw std::invalid_argument("action " + std::to_string(action) + " outside [0, " +
                                std::to_string(kNumActions) + ")");
  }
  const double ax0 = state[kAgentX];
  const double ay0 = state[kAgentY];
  const double ox0 = state[kOpponentX];
  const double oy0 = state[kOpponentY];

  const auto& dir = kDirections[static_cast<std::size_t>(action)];
  const double ax = clamp_to_arena(ax0 + dyn.agent_speed * dir[0], dyn);
  const double ay = clamp_to_arena(ay0 + dyn.agent_speed * dir[1], dyn);

  // The opponent heads for the agent's new position, with bounded jitter.
  std::uniform_real_distribution<double> jitter(-dyn.opponent_heading_noise,
                                                dyn.opponent_heading_noise);
  const double heading = std::atan2(ay - oy0, ax - ox0) + jitter(rng);
  const double ox = clamp_to_arena(ox0 + dyn.opponent_speed * std::cos(heading), dyn);
  const double oy = clamp_to_arena(oy0 + dyn.opponent_speed * std::sin(heading), dyn);

  const int t = elapsed_steps(state, dyn) + 1;
  StepResult result;
  result.next_state = observe(ax, ay, ax - ax0, ay - ay0, ox, oy, ox - ox0, oy - oy0, t, rng, dyn);
  if (std::hypot(ox - ax, oy - ay) < dyn.capture_radius) {
    result.reward = dyn.capture_reward;
    result.terminal = true;
  } else {
    result.reward = dyn.step_reward;
    result.terminal = t >= dyn.max_steps;
  }
  return result;
}

std::int32_t evade_action(const EnvState& state, const Dynamics& dyn) {
  std::int32_t best = 0;
  double best_dist = -1.0;
  for (std::int32_t a = 0; a < kNumActions; ++a) {
    const auto& dir = kDirections[static_cast<std::size_t>(a)];
    const double ax = clamp_to_arena(state[kAgentX] + dyn.agent_speed * dir[0], dyn);
    const double ay = clamp_to_arena(state[kAgentY] + dyn.agent_speed * dir[1], dyn);
    const double d = std::hypot(state[kOpponentX] - ax, state[kOpponentY] - ay);
    if (d > best_dist) {
      best_dist = d;
      best = a;
    }
  }
  return best;
}

int run_episode(const Policy& policy, std::uint64_t seed, const Dynamics& dyn) {
  Rng rng = make_rng(seed, kEpisodeStream);
  EnvState s = reset(seed, dyn);
  int length = 0;
  while (true) {
    const StepResult r = step(s, policy(s, rng), rng, dyn);
    ++length;
    if (r.terminal) {
      return length;
    }
    s = r.next_state;
  }
}

double mean_episode_length(const Policy& policy, std::uint64_t first_seed, int episodes,
                           const Dynamics& dyn) {
  double total = 0.0;
  for (int i = 0; i < episodes; ++i) {
    total += run_episode(policy, first_seed + static_cast<std::uint64_t>(i), dyn);
  }
  return total / episodes;
}

Policy random_policy() {
  return [](const EnvState&, Rng& rng) {
    std::uniform_int_distribution<std::int32_t> pick(0, kNumActions - 1);
    return pick(rng);
  };
}

Policy evade_policy(const Dynamics& dyn) {
  return [dyn](const EnvState& s, Rng&) { return evade_action(s, dyn); };
}

}  // namespace devreplay::env
