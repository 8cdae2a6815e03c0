#include "devreplay/experience.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

namespace devreplay {
namespace {

std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
  }
  return v;
}

void unpack_row_into(std::span<const float> row, const RowLayout& layout,
                     std::span<float> old_state, std::span<float> new_state,
                     std::int32_t& action, float& reward, bool& terminal) {
  const std::size_t d = layout.state_dim;
  std::copy_n(row.begin() + layout.old_state_offset(), d, old_state.begin());
  std::copy_n(row.begin() + layout.new_state_offset(), d, new_state.begin());

  const float action_slot = row[layout.action_offset()];
  if (!(action_slot >= 0.0f) || action_slot > static_cast<float>(kMaxExactAction) ||
      action_slot != static_cast<float>(static_cast<std::int32_t>(action_slot))) {
    throw CorruptRowError("action slot " + std::to_string(action_slot) +
                          " is not a non-negative integer");
  }
  action = static_cast<std::int32_t>(action_slot);
  reward = row[layout.reward_offset()];

  const float terminal_slot = row[layout.terminal_offset()];
  if (terminal_slot != 0.0f && terminal_slot != 1.0f) {
    throw CorruptRowError("terminal slot " + std::to_string(terminal_slot) +
                          " is not 0 or 1");
  }
  terminal = terminal_slot == 1.0f;
}

}  // namespace

void validate_experience(const Experience& exp, const RowLayout& layout) {
  if (layout.state_dim == 0) {
    throw std::invalid_argument("state_dim must be at least 1");
  }
  if (exp.old_state.size() != layout.state_dim || exp.new_state.size() != layout.state_dim) {
    throw std::invalid_argument("experience state dims (" + std::to_string(exp.old_state.size()) +
                                ", " + std::to_string(exp.new_state.size()) +
                                ") do not match layout state_dim " +
                                std::to_string(layout.state_dim));
  }
  if (exp.action < 0 || exp.action > kMaxExactAction) {
    throw std::invalid_argument("action " + std::to_string(exp.action) +
                                " is not representable in a packed row");
  }
}

void pack_into(const Experience& exp, const RowLayout& layout, std::span<float> out) {
  validate_experience(exp, layout);
  if (out.size() != layout.row_width()) {
    throw std::invalid_argument("output row has width " + std::to_string(out.size()) +
                                ", expected " + std::to_string(layout.row_width()));
  }
  std::copy(exp.old_state.begin(), exp.old_state.end(), out.begin() + layout.old_state_offset());
  std::copy(exp.new_state.begin(), exp.new_state.end(), out.begin() + layout.new_state_offset());
  out[layout.action_offset()] = static_cast<float>(exp.action);
  out[layout.reward_offset()] = exp.reward;
  out[layout.terminal_offset()] = exp.terminal ? 1.0f : 0.0f;
}

PackedRow pack_experience(const Experience& exp, const RowLayout& layout) {
  PackedRow row;
  row.values.resize(layout.row_width());
  pack_into(exp, layout, row.values);
  return row;
}

Experience unpack_experience(std::span<const float> row, const RowLayout& layout) {
  if (row.size() != layout.row_width()) {
    throw std::invalid_argument("row has width " + std::to_string(row.size()) + ", expected " +
                                std::to_string(layout.row_width()));
  }
  Experience exp;
  exp.old_state.resize(layout.state_dim);
  exp.new_state.resize(layout.state_dim);
  unpack_row_into(row, layout, exp.old_state, exp.new_state, exp.action, exp.reward,
                  exp.terminal);
  return exp;
}

ExperienceBatch unpack_batch(std::span<const float> rows, std::size_t num_rows,
                             const RowLayout& layout) {
  const std::size_t width = layout.row_width();
  if (rows.size() != num_rows * width) {
    throw std::invalid_argument("batch of " + std::to_string(rows.size()) +
                                " floats is not " + std::to_string(num_rows) + " rows of width " +
                                std::to_string(width));
  }
  const std::size_t d = layout.state_dim;
  ExperienceBatch batch;
  batch.state_dim = d;
  batch.old_states.resize(num_rows * d);
  batch.new_states.resize(num_rows * d);
  batch.actions.resize(num_rows);
  batch.rewards.resize(num_rows);
  batch.terminals.resize(num_rows);
  for (std::size_t i = 0; i < num_rows; ++i) {
    bool terminal = false;
    unpack_row_into(rows.subspan(i * width, width), layout,
                    std::span<float>(batch.old_states).subspan(i * d, d),
                    std::span<float>(batch.new_states).subspan(i * d, d), batch.actions[i],
                    batch.rewards[i], terminal);
    batch.terminals[i] = terminal ? 1 : 0;
  }
  return batch;
}

ExperienceBatch unpack_batch(const HostMatrix& rows, const RowLayout& layout) {
  if (rows.cols() != layout.row_width()) {
    throw std::invalid_argument("matrix has " + std::to_string(rows.cols()) +
                                " columns, expected row width " +
                                std::to_string(layout.row_width()));
  }
  return unpack_batch(rows.data(), rows.rows(), layout);
}

void write_experience_dump(const std::string& path, std::span<const Experience> experiences,
                           const RowLayout& layout) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot open " + path + " for writing");
  }
  std::vector<float> row(layout.row_width());
  std::vector<std::uint32_t> words(layout.row_width());
  for (const Experience& exp : experiences) {
    pack_into(exp, layout, row);
    for (std::size_t i = 0; i < row.size(); ++i) {
      words[i] = to_little_endian(std::bit_cast<std::uint32_t>(row[i]));
    }
    out.write(reinterpret_cast<const char*>(words.data()),
              static_cast<std::streamsize>(words.size() * sizeof(std::uint32_t)));
  }
  if (!out) {
    throw std::runtime_error("write to " + path + " failed");
  }
}

std::vector<Experience> read_experience_dump(const std::string& path, const RowLayout& layout) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) {
    throw std::runtime_error("cannot open " + path + " for reading");
  }
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes % layout.row_bytes() != 0) {
    throw std::invalid_argument(path + ": size " + std::to_string(bytes) +
                                " is not a multiple of the row size " +
                                std::to_string(layout.row_bytes()));
  }
  in.seekg(0);
  const std::size_t num_rows = bytes / layout.row_bytes();
  std::vector<std::uint32_t> words(layout.row_width());
  std::vector<float> row(layout.row_width());
  std::vector<Experience> experiences;
  experiences.reserve(num_rows);
  for (std::size_t r = 0; r < num_rows; ++r) {
    in.read(reinterpret_cast<char*>(words.data()),
            static_cast<std::streamsize>(words.size() * sizeof(std::uint32_t)));
    if (!in) {
      throw std::runtime_error(path + ": short read at row " + std::to_string(r));
    }
    for (std::size_t i = 0; i < row.size(); ++i) {
      row[i] = std::bit_cast<float>(to_little_endian(words[i]));
    }
    experiences.push_back(unpack_experience(std::span<const float>(row), layout));
  }
  return experiences;
}

}  // namespace devreplay
