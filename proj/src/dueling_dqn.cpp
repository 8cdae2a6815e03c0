#include "devreplay/dueling_dqn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

namespace devreplay {

std::size_t NetworkShape::parameter_count() const {
  const std::size_t s = shared_units;
  const std::size_t h = stream_units;
  return (state_dim + 1) * s + 2 * (s + 1) * h + (h + 1) + (h + 1) * num_actions;
}

double NetworkShape::forward_flops_per_state() const {
  const double s = static_cast<double>(shared_units);
  const double h = static_cast<double>(stream_units);
  return 2.0 * (static_cast<double>(state_dim) * s + 2.0 * s * h +
                h * (1.0 + static_cast<double>(num_actions)));
}

void NetworkShape::validate() const {
  if (state_dim == 0 || shared_units == 0 || stream_units == 0 || num_actions == 0) {
    throw std::invalid_argument("network dimensions must all be at least 1");
  }
}

void TrainerConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
    throw std::invalid_argument("alpha must be a finite non-negative learning rate");
  }
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw std::invalid_argument("gamma must lie in [0, 1]");
  }
  if (target_sync_period < 1) {
    throw std::invalid_argument("target_sync_period must be at least 1");
  }
  if (batch_size < 1 || num_actions < 1) {
    throw std::invalid_argument("batch_size and num_actions must be at least 1");
  }
}

// ---------------------------------------------------------------------------
// DuelingParams

template <typename Scalar>
DuelingParams<Scalar> DuelingParams<Scalar>::zeros(const NetworkShape& shape) {
  shape.validate();
  const auto d = static_cast<Eigen::Index>(shape.state_dim);
  const auto s = static_cast<Eigen::Index>(shape.shared_units);
  const auto h = static_cast<Eigen::Index>(shape.stream_units);
  const auto a = static_cast<Eigen::Index>(shape.num_actions);
  DuelingParams p;
  p.shape = shape;
  p.shared_w = Mat<Scalar>::Zero(d, s);
  p.shared_b = RowVec<Scalar>::Zero(s);
  p.value_w = Mat<Scalar>::Zero(s, h);
  p.value_b = RowVec<Scalar>::Zero(h);
  p.value_head_w = Mat<Scalar>::Zero(h, 1);
  p.value_head_b = RowVec<Scalar>::Zero(1);
  p.adv_w = Mat<Scalar>::Zero(s, h);
  p.adv_b = RowVec<Scalar>::Zero(h);
  p.adv_head_w = Mat<Scalar>::Zero(h, a);
  p.adv_head_b = RowVec<Scalar>::Zero(a);
  return p;
}

template <typename Scalar>
DuelingParams<Scalar> DuelingParams<Scalar>::glorot(const NetworkShape& shape, Rng& rng) {
  DuelingParams p = zeros(shape);
  auto fill = [&rng](Mat<Scalar>& w) {
    const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      w.data()[i] = static_cast<Scalar>(dist(rng));
    }
  };
  fill(p.shared_w);
  fill(p.value_w);
  fill(p.value_head_w);
  fill(p.adv_w);
  fill(p.adv_head_w);
  return p;
}

template <typename Scalar>
template <typename Other>
DuelingParams<Other> DuelingParams<Scalar>::cast() const {
  DuelingParams<Other> out;
  out.shape = shape;
  out.shared_w = shared_w.template cast<Other>();
  out.shared_b = shared_b.template cast<Other>();
  out.value_w = value_w.template cast<Other>();
  out.value_b = value_b.template cast<Other>();
  out.value_head_w = value_head_w.template cast<Other>();
  out.value_head_b = value_head_b.template cast<Other>();
  out.adv_w = adv_w.template cast<Other>();
  out.adv_b = adv_b.template cast<Other>();
  out.adv_head_w = adv_head_w.template cast<Other>();
  out.adv_head_b = adv_head_b.template cast<Other>();
  return out;
}

template <typename Scalar>
bool DuelingParams<Scalar>::all_finite() const {
  bool finite = true;
  for_each_block([&](const char*, const auto& block) { finite = finite && block.allFinite(); });
  return finite;
}

template <typename Scalar>
bool DuelingParams<Scalar>::bit_equal(const DuelingParams& other) const {
  if (!(shape == other.shape)) {
    return false;
  }
  std::vector<const Scalar*> mine;
  std::vector<const Scalar*> theirs;
  std::vector<Eigen::Index> sizes;
  for_each_block([&](const char*, const auto& block) {
    mine.push_back(block.data());
    sizes.push_back(block.size());
  });
  other.for_each_block([&](const char*, const auto& block) { theirs.push_back(block.data()); });
  for (std::size_t i = 0; i < mine.size(); ++i) {
    if (std::memcmp(mine[i], theirs[i], static_cast<std::size_t>(sizes[i]) * sizeof(Scalar)) !=
        0) {
      return false;
    }
  }
  return true;
}

template <typename Scalar>
std::uint64_t DuelingParams<Scalar>::digest() const {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for_each_block([&](const char*, const auto& block) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(block.data());
    const std::size_t n = static_cast<std::size_t>(block.size()) * sizeof(Scalar);
    for (std::size_t i = 0; i < n; ++i) {
      hash = (hash ^ bytes[i]) * 0x100000001b3ULL;
    }
  });
  return hash;
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace {

template <typename Scalar>
void check_finite(const Mat<Scalar>& m, const char* layer) {
  if (!m.allFinite()) {
    throw NumericError(std::string("non-finite activations in layer ") + layer);
  }
}

template <typename Scalar>
Mat<Scalar> dense(const Mat<Scalar>& x, const Mat<Scalar>& w, const RowVec<Scalar>& b) {
  Mat<Scalar> out = x * w;
  out.rowwise() += b;
  return out;
}

template <typename Scalar>
Mat<Scalar> relu_mask(const Mat<Scalar>& activated) {
  return (activated.array() > Scalar(0)).template cast<Scalar>().matrix();
}

}  // namespace

template <typename Scalar>
ForwardCache<Scalar> forward_cached(const DuelingParams<Scalar>& params,
                                    const Mat<Scalar>& states) {
  const auto& shape = params.shape;
  if (static_cast<std::size_t>(states.cols()) != shape.state_dim) {
    throw std::invalid_argument("states have width " + std::to_string(states.cols()) +
                                ", network expects " + std::to_string(shape.state_dim));
  }
  check_finite(states, "input");
  ForwardCache<Scalar> c;
  c.input = states;
  c.shared = dense(states, params.shared_w, params.shared_b).cwiseMax(Scalar(0));
  check_finite(c.shared, "shared");
  c.value_hidden = dense(c.shared, params.value_w, params.value_b).cwiseMax(Scalar(0));
  check_finite(c.value_hidden, "value_hidden");
  c.adv_hidden = dense(c.shared, params.adv_w, params.adv_b).cwiseMax(Scalar(0));
  check_finite(c.adv_hidden, "advantage_hidden");
  c.value = dense(c.value_hidden, params.value_head_w, params.value_head_b);
  check_finite(c.value, "value_head");
  c.advantage = dense(c.adv_hidden, params.adv_head_w, params.adv_head_b);
  check_finite(c.advantage, "advantage_head");

  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> adv_mean = c.advantage.rowwise().mean();
  c.q = c.advantage;
  c.q.colwise() += c.value.col(0) - adv_mean;
  check_finite(c.q, "q_combine");
  return c;
}

template <typename Scalar>
DuelingParams<Scalar> backward(const DuelingParams<Scalar>& params,
                               const ForwardCache<Scalar>& c, const Mat<Scalar>& grad_q) {
  const auto num_actions = static_cast<Scalar>(params.shape.num_actions);
  DuelingParams<Scalar> g;
  g.shape = params.shape;

  // Combine: dV = sum_a dQ, dA = dQ - mean_a dQ.
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> row_sum = grad_q.rowwise().sum();
  Mat<Scalar> grad_value = row_sum;
  Mat<Scalar> grad_adv = grad_q;
  grad_adv.colwise() -= row_sum / num_actions;

  g.adv_head_w = c.adv_hidden.transpose() * grad_adv;
  g.adv_head_b = grad_adv.colwise().sum();
  const Mat<Scalar> grad_adv_hidden =
      ((grad_adv * params.adv_head_w.transpose()).array() * relu_mask(c.adv_hidden).array())
          .matrix();

  g.value_head_w = c.value_hidden.transpose() * grad_value;
  g.value_head_b = grad_value.colwise().sum();
  const Mat<Scalar> grad_value_hidden =
      ((grad_value * params.value_head_w.transpose()).array() *
       relu_mask(c.value_hidden).array())
          .matrix();

  g.adv_w = c.shared.transpose() * grad_adv_hidden;
  g.adv_b = grad_adv_hidden.colwise().sum();
  g.value_w = c.shared.transpose() * grad_value_hidden;
  g.value_b = grad_value_hidden.colwise().sum();

  const Mat<Scalar> grad_shared =
      ((grad_adv_hidden * params.adv_w.transpose() + grad_value_hidden * params.value_w.transpose())
           .array() *
       relu_mask(c.shared).array())
          .matrix();
  g.shared_w = c.input.transpose() * grad_shared;
  g.shared_b = grad_shared.colwise().sum();
  return g;
}

template <typename Scalar>
std::vector<Scalar> select_q(const Mat<Scalar>& q, std::span<const std::int32_t> actions) {
  const auto rows = static_cast<std::size_t>(q.rows());
  const auto num_actions = static_cast<std::size_t>(q.cols());
  if (actions.size() != rows) {
    throw std::invalid_argument("select_q: " + std::to_string(actions.size()) +
                                " actions for " + std::to_string(rows) + " rows");
  }
  const Scalar* flat = q.data();  // row-major
  std::vector<Scalar> out(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    if (actions[i] < 0 || static_cast<std::size_t>(actions[i]) >= num_actions) {
      throw std::invalid_argument("select_q: action " + std::to_string(actions[i]) +
                                  " out of range [0, " + std::to_string(num_actions) + ")");
    }
    const std::size_t enumerate_mask = i * num_actions;
    out[i] = flat[enumerate_mask + static_cast<std::size_t>(actions[i])];
  }
  return out;
}

template <typename Scalar>
std::vector<Scalar> td_targets(std::span<const float> rewards,
                               std::span<const std::uint8_t> terminals,
                               const Mat<Scalar>& next_q, double gamma) {
  const auto rows = static_cast<std::size_t>(next_q.rows());
  if (rewards.size() != rows || terminals.size() != rows) {
    throw std::invalid_argument("td_targets: batch sizes disagree");
  }
  std::vector<Scalar> out(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const Scalar bootstrap = terminals[i] ? Scalar(0) : next_q.row(static_cast<Eigen::Index>(i)).maxCoeff();
    out[i] = static_cast<Scalar>(rewards[i]) + static_cast<Scalar>(gamma) * bootstrap;
  }
  return out;
}

template <typename Scalar>
TdLoss<Scalar> td_loss(const Mat<Scalar>& q, std::span<const std::int32_t> actions,
                       std::span<const Scalar> targets) {
  const std::vector<Scalar> selected = select_q(q, actions);
  const auto rows = selected.size();
  if (targets.size() != rows || rows == 0) {
    throw std::invalid_argument("td_loss: need one target per row of a non-empty batch");
  }
  TdLoss<Scalar> out;
  out.grad_q = Mat<Scalar>::Zero(q.rows(), q.cols());
  Scalar sum_sq = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    const Scalar err = selected[i] - targets[i];
    sum_sq += err * err;
    out.grad_q(static_cast<Eigen::Index>(i), actions[i]) = err / static_cast<Scalar>(rows);
  }
  out.mean_sq_error = sum_sq / static_cast<Scalar>(rows);
  out.loss = Scalar(0.5) * out.mean_sq_error;
  return out;
}

template <typename Scalar>
Mat<Scalar> states_matrix(const ExperienceBatch& batch, bool new_states) {
  const auto& src = new_states ? batch.new_states : batch.old_states;
  Mat<Scalar> m(static_cast<Eigen::Index>(batch.size()),
                static_cast<Eigen::Index>(batch.state_dim));
  for (std::size_t i = 0; i < src.size(); ++i) {
    m.data()[i] = static_cast<Scalar>(src[i]);
  }
  return m;
}

template <typename Scalar>
Mat<Scalar> states_matrix(std::span<const float> state) {
  Mat<Scalar> m(1, static_cast<Eigen::Index>(state.size()));
  for (std::size_t i = 0; i < state.size(); ++i) {
    m.data()[i] = static_cast<Scalar>(state[i]);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Trainer

DuelingTrainer::DuelingTrainer(const NetworkShape& shape, const TrainerConfig& config,
                               std::uint64_t seed, std::optional<Device> device)
    : shape_(shape), config_(config), device_(std::move(device)) {
  shape_.validate();
  config_.validate();
  if (config_.num_actions != shape_.num_actions) {
    throw std::invalid_argument("trainer num_actions does not match network shape");
  }
  Rng rng = make_rng(seed, 0x1417);
  state_.online = DuelingParams<float>::glorot(shape_, rng);
  state_.target = state_.online;
}

float DuelingTrainer::train_step(const ExperienceBatch& batch) {
  if (batch.size() == 0) {
    throw std::invalid_argument("train_step: empty batch");
  }
  if (batch.state_dim != shape_.state_dim) {
    throw std::invalid_argument("train_step: batch state_dim does not match network");
  }
  const Mat<float> next_q = forward(state_.target, states_matrix<float>(batch, true));
  const std::vector<float> targets =
      td_targets(std::span<const float>(batch.rewards), batch.terminals, next_q, config_.gamma);

  const ForwardCache<float> cache = forward_cached(state_.online, states_matrix<float>(batch, false));
  const TdLoss<float> loss = td_loss<float>(cache.q, batch.actions, targets);
  if (!std::isfinite(loss.mean_sq_error)) {
    throw NumericError("non-finite TD loss");
  }

  if (device_) {
    // Target forward, online forward and a backward pass about twice its cost.
    device_->charge_compute(4.0 * shape_.forward_flops_per_state() *
                            static_cast<double>(batch.size()));
    device_->record_download(sizeof(float));
  }

  if (config_.alpha != 0.0) {
    DuelingParams<float> grads = backward(state_.online, cache, loss.grad_q);
    const auto alpha = static_cast<float>(config_.alpha);
    std::vector<float*> dst;
    state_.online.for_each_block([&](const char*, auto& block) { dst.push_back(block.data()); });
    std::size_t k = 0;
    grads.for_each_block([&](const char*, auto& block) {
      float* w = dst[k++];
      for (Eigen::Index i = 0; i < block.size(); ++i) {
        w[i] -= alpha * block.data()[i];
      }
    });
  }

  ++state_.step_count;
  synced_last_step_ = state_.step_count % config_.target_sync_period == 0;
  if (synced_last_step_) {
    sync_target();
  }
  return loss.mean_sq_error;
}

void DuelingTrainer::sync_target() { state_.target = state_.online; }

std::int32_t DuelingTrainer::act_epsilon_greedy(std::span<const float> state, double epsilon,
                                                Rng& rng) const {
  return devreplay::act_epsilon_greedy(state_.online, state, epsilon, rng);
}

std::int32_t greedy_action(std::span<const float> q_row) {
  if (q_row.empty()) {
    throw std::invalid_argument("greedy_action: empty Q row");
  }
  // max_element returns the first maximum, so ties go to the lowest index.
  return static_cast<std::int32_t>(std::max_element(q_row.begin(), q_row.end()) - q_row.begin());
}

std::int32_t act_epsilon_greedy(const DuelingParams<float>& params, std::span<const float> state,
                                double epsilon, Rng& rng) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
    throw std::invalid_argument("epsilon must lie in [0, 1]");
  }
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (coin(rng) < epsilon) {
    std::uniform_int_distribution<std::int32_t> pick(
        0, static_cast<std::int32_t>(params.shape.num_actions) - 1);
    return pick(rng);
  }
  const Mat<float> q = forward(params, states_matrix<float>(state));
  return greedy_action(std::span<const float>(q.data(), static_cast<std::size_t>(q.cols())));
}

// ---------------------------------------------------------------------------

#define DEVREPLAY_INSTANTIATE(S)                                                              \
  template struct DuelingParams<S>;                                                           \
  template ForwardCache<S> forward_cached(const DuelingParams<S>&, const Mat<S>&);            \
  template DuelingParams<S> backward(const DuelingParams<S>&, const ForwardCache<S>&,         \
                                     const Mat<S>&);                                          \
  template std::vector<S> select_q(const Mat<S>&, std::span<const std::int32_t>);             \
  template std::vector<S> td_targets(std::span<const float>, std::span<const std::uint8_t>,   \
                                     const Mat<S>&, double);                                  \
  template TdLoss<S> td_loss(const Mat<S>&, std::span<const std::int32_t>,                    \
                             std::span<const S>);                                             \
  template Mat<S> states_matrix(const ExperienceBatch&, bool);                                \
  template Mat<S> states_matrix(std::span<const float>);

DEVREPLAY_INSTANTIATE(float)
DEVREPLAY_INSTANTIATE(double)
#undef DEVREPLAY_INSTANTIATE

template DuelingParams<double> DuelingParams<float>::cast<double>() const;
template DuelingParams<float> DuelingParams<double>::cast<float>() const;

}  // namespace devreplay
