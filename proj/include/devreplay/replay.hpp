#pragma once

#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "devreplay/device.hpp"
#include "devreplay/experience.hpp"
#include "devreplay/random.hpp"

namespace devreplay {

class NotReadyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ReplayConfig {
  std::size_t capacity = 100'000;
  std::size_t update_size = 2'000;
  std::size_t min_sample_size = 2'000;  // burn-in threshold
  RowLayout layout{};
  bool distinct_sampling = false;

  // Throws std::invalid_argument when capacity is not a positive multiple of
  // update_size or min_sample_size is outside [1, capacity].
  void validate() const;
};

// Draws batch_size indices uniformly from [0, population). With distinct set,
// duplicates are redrawn until all indices differ.
std::vector<std::size_t> sample_indices(std::size_t population, std::size_t batch_size, Rng& rng,
                                        bool distinct = false);

enum class ReplayMode { kHost, kDevice };

std::string_view to_string(ReplayMode mode);

/// Common surface of the in-RAM and device-resident replays.
class Replay {
 public:
  virtual ~Replay() = default;

  virtual void add(const Experience& exp) = 0;
  virtual std::size_t flush() = 0;
  virtual std::size_t size() const = 0;

  // Batch is unpacked on the device. Throws NotReadyError during burn-in.
  virtual ExperienceBatch sample(std::size_t batch_size, Rng& rng) = 0;

  // Exports every sampleable experience to the host (accounted), in slot order.
  virtual std::vector<Experience> snapshot() = 0;

  virtual ReplayMode mode() const = 0;
  virtual const ReplayConfig& config() const = 0;

  bool ready() const { return size() >= config().min_sample_size; }
};

// Ring of packed rows in device memory. Adds are staged on the host and
// written one update-size block per scatter, so each experience crosses to
// the device once no matter how often it is sampled.
class DeviceReplayBuffer final : public Replay {
 public:
  DeviceReplayBuffer(ReplayConfig config, Device device);

  void add(const Experience& exp) override;
  // Writes a partial block of staged rows; the block is completed by later adds.
  std::size_t flush() override;
  std::size_t size() const override { return visible_size_; }
  ExperienceBatch sample(std::size_t batch_size, Rng& rng) override;
  std::vector<Experience> snapshot() override;
  ReplayMode mode() const override { return ReplayMode::kDevice; }
  const ReplayConfig& config() const override { return config_; }

  std::size_t staged() const { return staged_; }
  std::size_t next_block() const { return next_block_; }

 private:
  void write_staged();

  ReplayConfig config_;
  Device device_;
  DeviceBuffer2D storage_;
  HostMatrix staging_;  // update_size x row_width
  std::size_t staged_ = 0;
  std::size_t next_block_ = 0;
  std::size_t block_fill_ = 0;  // rows of next_block_ already written by a partial flush
  std::size_t visible_size_ = 0;
  std::vector<std::size_t> scatter_indices_;
};

// Conventional replay held in host RAM: adds are free of transfers, but every
// sampled batch is copied to the device.
class HostReplayBuffer final : public Replay {
 public:
  HostReplayBuffer(ReplayConfig config, Device device);

  void add(const Experience& exp) override;
  std::size_t flush() override { return 0; }
  std::size_t size() const override { return size_; }
  ExperienceBatch sample(std::size_t batch_size, Rng& rng) override;
  std::vector<Experience> snapshot() override;
  ReplayMode mode() const override { return ReplayMode::kHost; }
  const ReplayConfig& config() const override { return config_; }

 private:
  ReplayConfig config_;
  Device device_;
  HostMatrix rows_;
  std::size_t cursor_ = 0;
  std::size_t size_ = 0;
};

std::unique_ptr<Replay> make_replay(ReplayMode mode, const ReplayConfig& config, Device device);

}  // namespace devreplay
