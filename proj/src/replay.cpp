#include "devreplay/replay.hpp"

#include <algorithm>
#include <numeric>
#include <string>
#include <unordered_set>

namespace devreplay {

void ReplayConfig::validate() const {
  if (layout.state_dim == 0) {
    throw std::invalid_argument("state_dim must be at least 1");
  }
  if (update_size == 0 || capacity == 0 || capacity % update_size != 0) {
    throw std::invalid_argument("capacity " + std::to_string(capacity) +
                                " must be a positive multiple of update_size " +
                                std::to_string(update_size));
  }
  if (min_sample_size < 1 || min_sample_size > capacity) {
    throw std::invalid_argument("min_sample_size " + std::to_string(min_sample_size) +
                                " must lie in [1, capacity]");
  }
}

std::vector<std::size_t> sample_indices(std::size_t population, std::size_t batch_size, Rng& rng,
                                        bool distinct) {
  if (population == 0) {
    throw std::invalid_argument("cannot sample from an empty population");
  }
  if (distinct && batch_size > population) {
    throw std::invalid_argument("distinct sampling of " + std::to_string(batch_size) +
                                " from a population of " + std::to_string(population));
  }
  std::uniform_int_distribution<std::size_t> dist(0, population - 1);
  std::vector<std::size_t> indices(batch_size);
  if (!distinct) {
    for (auto& idx : indices) {
      idx = dist(rng);
    }
    return indices;
  }
  std::unordered_set<std::size_t> seen;
  seen.reserve(batch_size * 2);
  for (auto& idx : indices) {
    do {
      idx = dist(rng);
    } while (!seen.insert(idx).second);
  }
  return indices;
}

std::string_view to_string(ReplayMode mode) {
  return mode == ReplayMode::kHost ? "host-replay" : "device-replay";
}

// ---------------------------------------------------------------------------

DeviceReplayBuffer::DeviceReplayBuffer(ReplayConfig config, Device device)
    : config_((config.validate(), config)),
      device_(std::move(device)),
      storage_(device_.allocate(config_.capacity, config_.layout.row_width())),
      staging_(config_.update_size, config_.layout.row_width()) {
  scatter_indices_.reserve(config_.update_size);
}

void DeviceReplayBuffer::add(const Experience& exp) {
  pack_into(exp, config_.layout, staging_.row(staged_));
  ++staged_;
  if (block_fill_ + staged_ == config_.update_size) {
    write_staged();
  }
}

std::size_t DeviceReplayBuffer::flush() {
  const std::size_t k = staged_;
  if (k != 0) {
    write_staged();
  }
  return k;
}

void DeviceReplayBuffer::write_staged() {
  const std::size_t k = staged_;
  const std::size_t base = next_block_ * config_.update_size + block_fill_;
  scatter_indices_.resize(k);
  std::iota(scatter_indices_.begin(), scatter_indices_.end(), base);

  if (k == staging_.rows()) {
    storage_.scatter_rows(scatter_indices_, staging_);
  } else {
    HostMatrix partial(k, staging_.cols(),
                       std::vector<float>(staging_.data().begin(),
                                          staging_.data().begin() +
                                              static_cast<std::ptrdiff_t>(k * staging_.cols())));
    storage_.scatter_rows(scatter_indices_, partial);
  }

  staged_ = 0;
  block_fill_ += k;
  visible_size_ = std::min(visible_size_ + k, config_.capacity);
  if (block_fill_ == config_.update_size) {
    block_fill_ = 0;
    next_block_ = (next_block_ + 1) % (config_.capacity / config_.update_size);
  }
}

ExperienceBatch DeviceReplayBuffer::sample(std::size_t batch_size, Rng& rng) {
  if (!ready()) {
    throw NotReadyError("replay holds " + std::to_string(visible_size_) + " experiences, " +
                        std::to_string(config_.min_sample_size) + " needed before sampling");
  }
  // Until the ring wraps, rows [0, visible_size) are exactly the written ones;
  // afterwards every slot holds a live experience.
  const auto indices = sample_indices(visible_size_, batch_size, rng, config_.distinct_sampling);
  const DeviceMatrix rows = storage_.gather_rows(indices);
  return unpack_batch(rows.device_data(), rows.rows(), config_.layout);
}

std::vector<Experience> DeviceReplayBuffer::snapshot() {
  std::vector<std::size_t> all(visible_size_);
  std::iota(all.begin(), all.end(), std::size_t{0});
  const HostMatrix rows = device_.download(storage_.gather_rows(all));
  std::vector<Experience> out;
  out.reserve(rows.rows());
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    out.push_back(unpack_experience(rows.row(i), config_.layout));
  }
  return out;
}

// ---------------------------------------------------------------------------

HostReplayBuffer::HostReplayBuffer(ReplayConfig config, Device device)
    : config_((config.validate(), config)),
      device_(std::move(device)),
      rows_(config_.capacity, config_.layout.row_width()) {}

void HostReplayBuffer::add(const Experience& exp) {
  pack_into(exp, config_.layout, rows_.row(cursor_));
  cursor_ = (cursor_ + 1) % config_.capacity;
  size_ = std::min(size_ + 1, config_.capacity);
}

ExperienceBatch HostReplayBuffer::sample(std::size_t batch_size, Rng& rng) {
  if (!ready()) {
    throw NotReadyError("replay holds " + std::to_string(size_) + " experiences, " +
                        std::to_string(config_.min_sample_size) + " needed before sampling");
  }
  const auto indices = sample_indices(size_, batch_size, rng, config_.distinct_sampling);
  HostMatrix batch(batch_size, rows_.cols());
  for (std::size_t i = 0; i < batch_size; ++i) {
    std::copy_n(rows_.row(indices[i]).begin(), rows_.cols(), batch.row(i).begin());
  }
  const DeviceMatrix on_device = device_.upload(batch);
  return unpack_batch(on_device.device_data(), on_device.rows(), config_.layout);
}

std::vector<Experience> HostReplayBuffer::snapshot() {
  std::vector<Experience> out;
  out.reserve(size_);
  for (std::size_t i = 0; i < size_; ++i) {
    out.push_back(unpack_experience(rows_.row(i), config_.layout));
  }
  return out;
}

std::unique_ptr<Replay> make_replay(ReplayMode mode, const ReplayConfig& config, Device device) {
  if (mode == ReplayMode::kHost) {
    return std::make_unique<HostReplayBuffer>(config, std::move(device));
  }
  return std::make_unique<DeviceReplayBuffer>(config, std::move(device));
}

}  // namespace devreplay
