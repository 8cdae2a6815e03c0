#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "devreplay/device.hpp"
#include "devreplay/experience.hpp"
#include "devreplay/random.hpp"

namespace devreplay {

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NetworkShape {
  std::size_t state_dim = 27;
  std::size_t shared_units = 128;
  std::size_t stream_units = 512;
  std::size_t num_actions = 8;

  std::size_t parameter_count() const;
  // Multiply-adds of one forward pass over one state, counted as 2 flops each.
  double forward_flops_per_state() const;
  void validate() const;
  bool operator==(const NetworkShape&) const = default;
};

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// Weights of the dueling network. Activations are batch-major, so each
/// layer computes relu(X * W + b) with W stored fan_in x fan_out.
template <typename Scalar>
struct DuelingParams {
  NetworkShape shape;
  Mat<Scalar> shared_w;      // D x shared
  RowVec<Scalar> shared_b;
  Mat<Scalar> value_w;       // shared x stream
  RowVec<Scalar> value_b;
  Mat<Scalar> value_head_w;  // stream x 1
  RowVec<Scalar> value_head_b;
  Mat<Scalar> adv_w;         // shared x stream
  RowVec<Scalar> adv_b;
  Mat<Scalar> adv_head_w;    // stream x num_actions
  RowVec<Scalar> adv_head_b;

  static DuelingParams zeros(const NetworkShape& shape);
  // Glorot-uniform weights, zero biases.
  static DuelingParams glorot(const NetworkShape& shape, Rng& rng);

  template <typename F>
  void for_each_block(F&& f) {
    f("shared_w", shared_w); f("shared_b", shared_b);
    f("value_w", value_w); f("value_b", value_b);
    f("value_head_w", value_head_w); f("value_head_b", value_head_b);
    f("adv_w", adv_w); f("adv_b", adv_b);
    f("adv_head_w", adv_head_w); f("adv_head_b", adv_head_b);
  }
  template <typename F>
  void for_each_block(F&& f) const {
    const_cast<DuelingParams*>(this)->for_each_block(
        [&](const char* name, const auto& block) { f(name, block); });
  }

  template <typename Other>
  DuelingParams<Other> cast() const;

  bool all_finite() const;
  // Bitwise equality of every weight.
  bool bit_equal(const DuelingParams& other) const;
  // FNV-1a over the raw bits of every weight, in block order.
  std::uint64_t digest() const;
};

template <typename Scalar>
struct ForwardCache {
  Mat<Scalar> input;
  Mat<Scalar> shared;      // B x shared, post-relu
  Mat<Scalar> value_hidden;
  Mat<Scalar> adv_hidden;
  Mat<Scalar> value;       // B x 1
  Mat<Scalar> advantage;   // B x A
  Mat<Scalar> q;           // B x A
};

// Q(s,a) = V(s) + A(s,a) - mean_a' A(s,a'), rectified hidden layers, linear
// heads. Throws NumericError naming the first layer with non-finite output.
template <typename Scalar>
ForwardCache<Scalar> forward_cached(const DuelingParams<Scalar>& params,
                                    const Mat<Scalar>& states);

template <typename Scalar>
Mat<Scalar> forward(const DuelingParams<Scalar>& params, const Mat<Scalar>& states) {
  return forward_cached(params, states).q;
}

// Gradient of a loss with respect to every weight, given dLoss/dQ.
template <typename Scalar>
DuelingParams<Scalar> backward(const DuelingParams<Scalar>& params,
                               const ForwardCache<Scalar>& cache, const Mat<Scalar>& grad_q);

// result[i] = q[i, actions[i]], read from the row-major flattening of q at
// enumerate_mask[i] + actions[i], where enumerate_mask = {0, A, 2A, ...}.
template <typename Scalar>
std::vector<Scalar> select_q(const Mat<Scalar>& q, std::span<const std::int32_t> actions);

// target[i] = r[i] + gamma * (1 - terminal[i]) * max_a next_q[i, a]
template <typename Scalar>
std::vector<Scalar> td_targets(std::span<const float> rewards,
                               std::span<const std::uint8_t> terminals,
                               const Mat<Scalar>& next_q, double gamma);

template <typename Scalar>
struct TdLoss {
  Scalar loss = 0;        // 0.5 * mean squared TD error
  Mat<Scalar> grad_q;     // dLoss/dQ
  Scalar mean_sq_error = 0;
};

// Loss of the online network's selected Q-values against fixed targets.
template <typename Scalar>
TdLoss<Scalar> td_loss(const Mat<Scalar>& q, std::span<const std::int32_t> actions,
                       std::span<const Scalar> targets);

// Copies the batch's old or new states into a B x D matrix.
template <typename Scalar>
Mat<Scalar> states_matrix(const ExperienceBatch& batch, bool new_states);

template <typename Scalar>
Mat<Scalar> states_matrix(std::span<const float> state);

struct TrainerConfig {
  double alpha = 1e-4;
  double gamma = 0.99;
  std::uint64_t target_sync_period = 10'000;
  std::size_t batch_size = 32;
  std::size_t num_actions = 8;

  void validate() const;
};

struct TrainerState {
  DuelingParams<float> online;
  DuelingParams<float> target;
  std::uint64_t step_count = 0;
};

/// Dueling DQN learner with a frozen target copy.
class DuelingTrainer {
 public:
  // device, when given, is charged for each step's compute and loss export.
  DuelingTrainer(const NetworkShape& shape, const TrainerConfig& config, std::uint64_t seed,
                 std::optional<Device> device = std::nullopt);

  // One gradient-descent step on 0.5 * mean((target - Q(s,a))^2), target held
  // constant. Returns the mean squared TD error. Syncs the target network when
  // the step count reaches a multiple of target_sync_period. On a non-finite
  // loss, throws NumericError and leaves all state untouched.
  float train_step(const ExperienceBatch& batch);

  void sync_target();

  std::int32_t act_epsilon_greedy(std::span<const float> state, double epsilon, Rng& rng) const;

  const TrainerState& state() const { return state_; }
  TrainerState& mutable_state() { return state_; }
  const TrainerConfig& config() const { return config_; }
  const NetworkShape& shape() const { return shape_; }
  bool synced_last_step() const { return synced_last_step_; }

 private:
  NetworkShape shape_;
  TrainerConfig config_;
  TrainerState state_;
  std::optional<Device> device_;
  bool synced_last_step_ = false;
};

std::int32_t greedy_action(std::span<const float> q_row);

std::int32_t act_epsilon_greedy(const DuelingParams<float>& params, std::span<const float> state,
                                double epsilon, Rng& rng);

}  // namespace devreplay
