#include "devreplay/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <sstream>

namespace devreplay {
namespace {

constexpr const char* kMagic = "devreplay-checkpoint";
constexpr int kVersion = 1;

std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
  }
  return v;
}

}  // namespace

void save_checkpoint(const DuelingParams<float>& params, const std::string& prefix) {
  std::ofstream bin(prefix + ".bin", std::ios::binary | std::ios::trunc);
  std::ofstream manifest(prefix + ".manifest", std::ios::trunc);
  if (!bin || !manifest) {
    throw std::runtime_error("cannot open checkpoint files at " + prefix);
  }
  const auto& s = params.shape;
  manifest << kMagic << ' ' << kVersion << '\n'
           << "shape " << s.state_dim << ' ' << s.shared_units << ' ' << s.stream_units << ' '
           << s.num_actions << '\n';
  std::size_t offset = 0;
  params.for_each_block([&](const char* name, const auto& block) {
    manifest << name << ' ' << block.rows() << ' ' << block.cols() << ' ' << offset << '\n';
    for (Eigen::Index i = 0; i < block.size(); ++i) {
      const std::uint32_t word = to_little_endian(std::bit_cast<std::uint32_t>(block.data()[i]));
      bin.write(reinterpret_cast<const char*>(&word), sizeof(word));
    }
    offset += static_cast<std::size_t>(block.size());
  });
  if (!bin || !manifest) {
    throw std::runtime_error("write to checkpoint " + prefix + " failed");
  }
}

DuelingParams<float> load_checkpoint(const std::string& prefix) {
  std::ifstream manifest(prefix + ".manifest");
  std::ifstream bin(prefix + ".bin", std::ios::binary);
  if (!manifest || !bin) {
    throw std::runtime_error("cannot open checkpoint files at " + prefix);
  }
  std::string magic;
  int version = 0;
  manifest >> magic >> version;
  if (magic != kMagic || version != kVersion) {
    throw std::runtime_error(prefix + ".manifest: unrecognised header");
  }
  std::string tag;
  NetworkShape shape;
  manifest >> tag >> shape.state_dim >> shape.shared_units >> shape.stream_units >>
      shape.num_actions;
  if (tag != "shape" || !manifest) {
    throw std::runtime_error(prefix + ".manifest: missing shape line");
  }
  DuelingParams<float> params = DuelingParams<float>::zeros(shape);
  std::size_t expected_offset = 0;
  params.for_each_block([&](const char* name, auto& block) {
    std::string got_name;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    std::size_t offset = 0;
    manifest >> got_name >> rows >> cols >> offset;
    if (!manifest || got_name != name || rows != block.rows() || cols != block.cols() ||
        offset != expected_offset) {
      throw std::runtime_error(prefix + ".manifest: block " + name + " does not match shape");
    }
    for (Eigen::Index i = 0; i < block.size(); ++i) {
      std::uint32_t word = 0;
      bin.read(reinterpret_cast<char*>(&word), sizeof(word));
      block.data()[i] = std::bit_cast<float>(to_little_endian(word));
    }
    if (!bin) {
      throw std::runtime_error(prefix + ".bin: truncated at block " + name);
    }
    expected_offset += static_cast<std::size_t>(block.size());
  });
  if (bin.peek() != std::char_traits<char>::eof()) {
    throw std::runtime_error(prefix + ".bin: trailing data");
  }
  return params;
}

}  // namespace devreplay
