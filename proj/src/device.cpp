#include "devreplay/device.hpp"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <new>
#include <utility>

namespace devreplay {

namespace detail {

struct DeviceState {
  CostModel cost;
  ComputeModel compute;
  std::uint64_t memory_limit = 0;
  std::uint64_t memory_in_use = 0;
  TransferStats stats;

  void count_to_device(std::uint64_t bytes) {
    stats.bytes_to_device += bytes;
    stats.transfers_to_device += 1;
    stats.simulated_time += cost.transfer_seconds(bytes);
  }
  void count_from_device(std::uint64_t bytes) {
    stats.bytes_from_device += bytes;
    stats.transfers_from_device += 1;
    stats.simulated_time += cost.transfer_seconds(bytes);
  }
};

void FreeDeleter::operator()(float* p) const { std::free(p); }

}  // namespace detail

void CostModel::validate() const {
  if (!(fixed_overhead > 0.0) || !(bandwidth > 0.0)) {
    throw std::invalid_argument("cost model requires fixed_overhead > 0 and bandwidth > 0");
  }
}

void ComputeModel::validate() const {
  if (!(step_overhead >= 0.0) || !(flops_per_second > 0.0)) {
    throw std::invalid_argument("compute model requires step_overhead >= 0 and throughput > 0");
  }
}

AllocationError::AllocationError(std::uint64_t requested, std::uint64_t available)
    : std::runtime_error("device allocation of " + std::to_string(requested) +
                         " bytes exceeds the " + std::to_string(available) +
                         " bytes available"),
      requested_(requested),
      available_(available) {}

// ---------------------------------------------------------------------------

DeviceBuffer2D::DeviceBuffer2D(std::shared_ptr<detail::DeviceState> state, std::size_t rows,
                               std::size_t cols)
    : state_(std::move(state)), rows_(rows), cols_(cols) {
  // calloc keeps large zero-filled buffers lazily committed.
  storage_.reset(static_cast<float*>(std::calloc(rows * cols, sizeof(float))));
  if (!storage_) {
    throw std::bad_alloc();
  }
  state_->memory_in_use += bytes();
}

DeviceBuffer2D& DeviceBuffer2D::operator=(DeviceBuffer2D&& other) noexcept {
  if (this != &other) {
    release();
    state_ = std::move(other.state_);
    rows_ = std::exchange(other.rows_, 0);
    cols_ = std::exchange(other.cols_, 0);
    storage_ = std::move(other.storage_);
  }
  return *this;
}

DeviceBuffer2D::~DeviceBuffer2D() { release(); }

void DeviceBuffer2D::release() {
  if (state_ && storage_) {
    state_->memory_in_use -= bytes();
  }
  storage_.reset();
  state_.reset();
}

void DeviceBuffer2D::scatter_rows(std::span<const std::size_t> indices, const HostMatrix& data) {
  if (data.rows() != indices.size()) {
    throw std::invalid_argument("scatter_rows: " + std::to_string(indices.size()) +
                                " indices but " + std::to_string(data.rows()) + " data rows");
  }
  if (indices.empty()) {
    return;
  }
  if (data.cols() != cols_) {
    throw std::invalid_argument("scatter_rows: data width " + std::to_string(data.cols()) +
                                " does not match buffer width " + std::to_string(cols_));
  }
  for (std::size_t idx : indices) {
    if (idx >= rows_) {
      throw std::invalid_argument("scatter_rows: index " + std::to_string(idx) +
                                  " out of range [0, " + std::to_string(rows_) + ")");
    }
  }
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::memcpy(storage_.get() + indices[i] * cols_, data.row(i).data(), cols_ * sizeof(float));
  }
  state_->count_to_device(std::uint64_t{indices.size()} * cols_ * sizeof(float));
}

DeviceMatrix DeviceBuffer2D::gather_rows(std::span<const std::size_t> indices) const {
  HostMatrix out(indices.size(), cols_);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows_) {
      throw std::invalid_argument("gather_rows: index " + std::to_string(indices[i]) +
                                  " out of range [0, " + std::to_string(rows_) + ")");
    }
    std::memcpy(out.row(i).data(), storage_.get() + indices[i] * cols_, cols_ * sizeof(float));
  }
  return DeviceMatrix(std::move(out));
}

// ---------------------------------------------------------------------------

Device::Device(CostModel cost, ComputeModel compute, std::uint64_t memory_limit)
    : state_(std::make_shared<detail::DeviceState>()) {
  cost.validate();
  compute.validate();
  state_->cost = cost;
  state_->compute = compute;
  state_->memory_limit = memory_limit;
}

DeviceBuffer2D Device::allocate(std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) {
    throw std::invalid_argument("allocate: rows and cols must be at least 1");
  }
  const std::uint64_t requested = std::uint64_t{rows} * cols * sizeof(float);
  const std::uint64_t available = state_->memory_limit - state_->memory_in_use;
  if (requested > available) {
    throw AllocationError(requested, available);
  }
  return DeviceBuffer2D(state_, rows, cols);
}

DeviceMatrix Device::upload(const HostMatrix& m) {
  if (!m.empty()) {
    state_->count_to_device(std::uint64_t{m.size()} * sizeof(float));
  }
  return DeviceMatrix(m);
}

HostMatrix Device::download(const DeviceMatrix& m) {
  if (m.rows() * m.cols() != 0) {
    state_->count_from_device(std::uint64_t{m.rows()} * m.cols() * sizeof(float));
  }
  return m.data_;
}

void Device::record_download(std::uint64_t bytes) {
  if (bytes != 0) {
    state_->count_from_device(bytes);
  }
}

void Device::charge_compute(double flops) {
  state_->stats.compute_time += state_->compute.step_seconds(flops);
}

TransferStats Device::stats() const { return state_->stats; }
const CostModel& Device::cost_model() const { return state_->cost; }
const ComputeModel& Device::compute_model() const { return state_->compute; }
std::uint64_t Device::memory_limit() const { return state_->memory_limit; }
std::uint64_t Device::memory_in_use() const { return state_->memory_in_use; }

}  // namespace devreplay
