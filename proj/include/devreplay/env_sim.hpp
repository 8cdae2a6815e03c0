#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>

#include "devreplay/random.hpp"

namespace devreplay::env {

inline constexpr std::size_t kStateDim = 27;
inline constexpr std::int32_t kNumActions = 8;

using EnvState = std::array<float, kStateDim>;

// Feature slots of EnvState.
enum Slot : std::size_t {
  kAgentX = 0, kAgentY, kAgentVx, kAgentVy,
  kOpponentX, kOpponentY, kOpponentVx, kOpponentVy,
  kOffsetX, kOffsetY,        // opponent - agent
  kDistance,
  kTime,                     // elapsed steps / max_steps
  kWallLeft, kWallRight, kWallBottom, kWallTop,
  kHeadingX, kHeadingY,      // unit vector towards the opponent
  kNoiseBegin,               // bounded noise channels up to kStateDim
};

// Dynamics constants. The arena is the square [-arena, arena]^2.
struct Dynamics {
  float arena = 1.0f;
  float agent_speed = 0.05f;
  float opponent_speed = 0.04f;
  float opponent_heading_noise = 0.3f;  // radians, uniform +-
  float capture_radius = 0.1f;
  int max_steps = 600;
  float step_reward = 1.0f;
  float capture_reward = -10.0f;
  float min_spawn_separation = 0.6f;
  float agent_spawn_half_width = 0.5f;
  float opponent_spawn_half_width = 0.9f;
};

struct StepResult {
  EnvState next_state{};
  float reward = 0.0f;
  bool terminal = false;
};

EnvState reset(std::uint64_t seed, const Dynamics& dyn = {});

// Action a moves the agent along angle a * pi/4. Throws std::invalid_argument
// for actions outside [0, 8).
StepResult step(const EnvState& state, std::int32_t action, Rng& rng, const Dynamics& dyn = {});

int elapsed_steps(const EnvState& state, const Dynamics& dyn = {});

// Picks the move that maximises distance from the opponent's current position.
std::int32_t evade_action(const EnvState& state, const Dynamics& dyn = {});

using Policy = std::function<std::int32_t(const EnvState&, Rng&)>;

// Runs one episode from reset(seed) and returns its length in steps.
int run_episode(const Policy& policy, std::uint64_t seed, const Dynamics& dyn = {});

double mean_episode_length(const Policy& policy, std::uint64_t first_seed, int episodes,
                           const Dynamics& dyn = {});

Policy random_policy();
Policy evade_policy(const Dynamics& dyn = {});

}  // namespace devreplay::env
