#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "devreplay/matrix.hpp"

namespace devreplay {

// Largest action id that survives a round trip through a 32-bit float.
inline constexpr std::int64_t kMaxExactAction = (std::int64_t{1} << 24) - 1;

class CorruptRowError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One environment transition (s, a, r, s', terminal).
struct Experience {
  std::vector<float> old_state;
  std::int32_t action = 0;
  float reward = 0.0f;
  std::vector<float> new_state;
  bool terminal = false;

  bool operator==(const Experience&) const = default;
};

/// Packed row layout: [old_state | new_state | action | reward | terminal].
struct RowLayout {
  std::size_t state_dim = 27;

  constexpr std::size_t row_width() const { return 2 * state_dim + 3; }
  constexpr std::size_t row_bytes() const { return row_width() * sizeof(float); }
  constexpr std::size_t old_state_offset() const { return 0; }
  constexpr std::size_t new_state_offset() const { return state_dim; }
  constexpr std::size_t action_offset() const { return 2 * state_dim; }
  constexpr std::size_t reward_offset() const { return 2 * state_dim + 1; }
  constexpr std::size_t terminal_offset() const { return 2 * state_dim + 2; }

  bool operator==(const RowLayout&) const = default;
};

struct PackedRow {
  std::vector<float> values;

  bool operator==(const PackedRow&) const = default;
};

/// Column-sliced view of a block of packed rows.
struct ExperienceBatch {
  std::size_t state_dim = 0;
  std::vector<float> old_states;  // size() x state_dim, row-major
  std::vector<float> new_states;  // size() x state_dim, row-major
  std::vector<std::int32_t> actions;
  std::vector<float> rewards;
  std::vector<std::uint8_t> terminals;

  std::size_t size() const { return actions.size(); }
  std::span<const float> old_state(std::size_t i) const {
    return {old_states.data() + i * state_dim, state_dim};
  }
  std::span<const float> new_state(std::size_t i) const {
    return {new_states.data() + i * state_dim, state_dim};
  }
};

// Throws std::invalid_argument on a dimension mismatch or an action that is
// negative or not exactly representable as a float.
void validate_experience(const Experience& exp, const RowLayout& layout);

PackedRow pack_experience(const Experience& exp, const RowLayout& layout);

// Writes the packed row into out, which must be exactly row_width long.
void pack_into(const Experience& exp, const RowLayout& layout, std::span<float> out);

Experience unpack_experience(std::span<const float> row, const RowLayout& layout);
inline Experience unpack_experience(const PackedRow& row, const RowLayout& layout) {
  return unpack_experience(std::span<const float>(row.values), layout);
}

ExperienceBatch unpack_batch(const HostMatrix& rows, const RowLayout& layout);
ExperienceBatch unpack_batch(std::span<const float> rows, std::size_t num_rows,
                             const RowLayout& layout);

// Binary experience dump: little-endian float32 rows, concatenated, no header.
void write_experience_dump(const std::string& path, std::span<const Experience> experiences,
                           const RowLayout& layout);
std::vector<Experience> read_experience_dump(const std::string& path, const RowLayout& layout);

}  // namespace devreplay
