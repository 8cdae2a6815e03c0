#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>

#include "devreplay/matrix.hpp"

namespace devreplay {

/// Per-transfer cost: fixed_overhead + bytes / bandwidth seconds.
struct CostModel {
  double fixed_overhead = 20e-6;  // seconds per transfer
  double bandwidth = 6e9;         // bytes per second

  double transfer_seconds(std::uint64_t bytes) const {
    return fixed_overhead + static_cast<double>(bytes) / bandwidth;
  }
  void validate() const;
};

/// Simulated cost of an on-device train step: launch overhead plus
/// arithmetic at a fixed throughput. Kept apart from the transfer clock.
struct ComputeModel {
  double step_overhead = 50e-6;  // seconds per train step
  double flops_per_second = 10e12;

  double step_seconds(double flops) const { return step_overhead + flops / flops_per_second; }
  void validate() const;
};

struct TransferStats {
  std::uint64_t bytes_to_device = 0;
  std::uint64_t bytes_from_device = 0;
  std::uint64_t transfers_to_device = 0;
  std::uint64_t transfers_from_device = 0;
  double simulated_time = 0.0;  // seconds spent in transfers under the cost model
  double compute_time = 0.0;    // seconds charged by on-device compute

  double total_time() const { return simulated_time + compute_time; }
  bool operator==(const TransferStats&) const = default;
};

class AllocationError : public std::runtime_error {
 public:
  AllocationError(std::uint64_t requested, std::uint64_t available);
  std::uint64_t requested() const { return requested_; }
  std::uint64_t available() const { return available_; }

 private:
  std::uint64_t requested_;
  std::uint64_t available_;
};

namespace detail {
struct DeviceState;
struct FreeDeleter {
  void operator()(float* p) const;
};
}  // namespace detail

class Device;

// Result of an on-device gather or an explicit upload. Its contents are only
// reachable by on-device consumers (unpacking, the train step) or through
// Device::download, which is accounted.
class DeviceMatrix {
 public:
  DeviceMatrix() = default;
  std::size_t rows() const { return data_.rows(); }
  std::size_t cols() const { return data_.cols(); }
  std::span<const float> device_data() const { return data_.data(); }

 private:
  friend class Device;
  friend class DeviceBuffer2D;
  explicit DeviceMatrix(HostMatrix m) : data_(std::move(m)) {}

  HostMatrix data_;
};

/// Zero-initialized rows x cols float storage owned by a Device.
class DeviceBuffer2D {
 public:
  DeviceBuffer2D() = default;
  DeviceBuffer2D(DeviceBuffer2D&&) noexcept = default;
  DeviceBuffer2D& operator=(DeviceBuffer2D&&) noexcept;
  DeviceBuffer2D(const DeviceBuffer2D&) = delete;
  DeviceBuffer2D& operator=(const DeviceBuffer2D&) = delete;
  ~DeviceBuffer2D();

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::uint64_t bytes() const { return std::uint64_t{rows_} * cols_ * sizeof(float); }

  // Replaces rows indices[i] with data.row(i) in one host->device transfer.
  // All indices are validated before anything is written. k == 0 is a no-op.
  void scatter_rows(std::span<const std::size_t> indices, const HostMatrix& data);

  // Row i of the result is buffer row indices[i]; duplicates are allowed.
  // The result stays on the device: no transfer is counted.
  DeviceMatrix gather_rows(std::span<const std::size_t> indices) const;

 private:
  friend class Device;
  DeviceBuffer2D(std::shared_ptr<detail::DeviceState> state, std::size_t rows, std::size_t cols);
  void release();

  std::shared_ptr<detail::DeviceState> state_;
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::unique_ptr<float, detail::FreeDeleter> storage_;
};

// Host reference backend: storage lives in RAM, while every host<->device
// crossing is counted and charged to a deterministic clock. Copies of a
// Device are handles onto the same device.
class Device {
 public:
  static constexpr std::uint64_t kDefaultMemoryLimit = 12'000'000'000ULL;

  explicit Device(CostModel cost = {}, ComputeModel compute = {},
                  std::uint64_t memory_limit = kDefaultMemoryLimit);

  DeviceBuffer2D allocate(std::size_t rows, std::size_t cols);

  // Explicit host->device copy of a whole matrix (one transfer).
  DeviceMatrix upload(const HostMatrix& m);
  // Explicit device->host export (one transfer).
  HostMatrix download(const DeviceMatrix& m);
  // Scalar export, e.g. the loss of a train step.
  void record_download(std::uint64_t bytes);

  void charge_compute(double flops);

  TransferStats stats() const;
  const CostModel& cost_model() const;
  const ComputeModel& compute_model() const;
  std::uint64_t memory_limit() const;
  std::uint64_t memory_in_use() const;

 private:
  std::shared_ptr<detail::DeviceState> state_;
};

}  // namespace devreplay
