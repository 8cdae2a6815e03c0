#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "devreplay/checkpoint.hpp"

using namespace devreplay;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("devreplay_ckpt_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("checkpoint roundtrip is bit-exact") {
  Rng rng = make_rng(9);
  const auto params = DuelingParams<float>::glorot(NetworkShape{}, rng);
  const std::string prefix = (scratch_dir("roundtrip") / "ckpt").string();
  save_checkpoint(params, prefix);
  const auto loaded = load_checkpoint(prefix);
  CHECK(loaded.bit_equal(params));
  CHECK(loaded.digest() == params.digest());
  CHECK(fs::file_size(prefix + ".bin") == NetworkShape{}.parameter_count() * sizeof(float));
}

TEST_CASE("manifest lists every block with float offsets") {
  Rng rng = make_rng(2);
  const NetworkShape shape{3, 4, 5, 2};
  const auto params = DuelingParams<float>::glorot(shape, rng);
  const std::string prefix = (scratch_dir("manifest") / "ckpt").string();
  save_checkpoint(params, prefix);

  std::istringstream in(slurp(prefix + ".manifest"));
  std::string line;
  std::getline(in, line);
  CHECK(line == "devreplay-checkpoint 1");
  std::getline(in, line);
  CHECK(line == "shape 3 4 5 2");
  std::size_t expected_offset = 0;
  std::size_t blocks = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string name;
    std::size_t rows = 0, cols = 0, offset = 0;
    fields >> name >> rows >> cols >> offset;
    CHECK(offset == expected_offset);
    expected_offset += rows * cols;
    ++blocks;
  }
  CHECK(blocks == 10);
  CHECK(expected_offset == shape.parameter_count());

  // The first block is the shared weight matrix, row-major.
  const std::string bin = slurp(prefix + ".bin");
  float first = 0.0f;
  float second = 0.0f;
  std::memcpy(&first, bin.data(), 4);
  std::memcpy(&second, bin.data() + 4, 4);
  CHECK(first == params.shared_w(0, 0));
  CHECK(second == params.shared_w(0, 1));
}

TEST_CASE("damaged checkpoints are rejected") {
  Rng rng = make_rng(4);
  const auto params = DuelingParams<float>::glorot(NetworkShape{3, 4, 5, 2}, rng);
  const fs::path dir = scratch_dir("damaged");
  const std::string prefix = (dir / "ckpt").string();
  save_checkpoint(params, prefix);
  const std::string bin = slurp(prefix + ".bin");
  const std::string manifest = slurp(prefix + ".manifest");

  auto write = [](const std::string& path, const std::string& data) {
    std::ofstream(path, std::ios::binary | std::ios::trunc) << data;
  };

  write(prefix + ".bin", bin.substr(0, bin.size() - 4));
  CHECK_THROWS(load_checkpoint(prefix));

  write(prefix + ".bin", bin + "xxxx");
  CHECK_THROWS(load_checkpoint(prefix));

  write(prefix + ".bin", bin);
  write(prefix + ".manifest", "devreplay-checkpoint 2\n" + manifest.substr(manifest.find('\n') + 1));
  CHECK_THROWS(load_checkpoint(prefix));

  std::string wrong_shape = manifest;
  wrong_shape.replace(wrong_shape.find("shape 3"), 7, "shape 4");
  write(prefix + ".manifest", wrong_shape);
  CHECK_THROWS(load_checkpoint(prefix));

  write(prefix + ".manifest", manifest);
  CHECK(load_checkpoint(prefix).bit_equal(params));

  CHECK_THROWS(load_checkpoint((dir / "missing").string()));
}
