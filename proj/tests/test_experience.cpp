#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "devreplay/experience.hpp"

using namespace devreplay;

namespace {

Experience random_experience(std::size_t d, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> value(-100.0f, 100.0f);
  std::uniform_int_distribution<std::int32_t> action(0, (1 << 24) - 1);
  Experience e;
  for (std::size_t i = 0; i < d; ++i) e.old_state.push_back(value(rng));
  for (std::size_t i = 0; i < d; ++i) e.new_state.push_back(value(rng));
  e.action = action(rng);
  e.reward = value(rng);
  e.terminal = rng() % 2 == 0;
  return e;
}

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("row layout widths") {
  CHECK(RowLayout{27}.row_width() == 57);
  CHECK(RowLayout{27}.row_bytes() == 228);
  for (std::size_t d = 1; d <= 64; ++d) {
    const RowLayout layout{d};
    CHECK(layout.row_width() == 2 * d + 3);
    // Offsets tile the row without gaps.
    CHECK(layout.new_state_offset() == layout.old_state_offset() + d);
    CHECK(layout.action_offset() == layout.new_state_offset() + d);
    CHECK(layout.reward_offset() == layout.action_offset() + 1);
    CHECK(layout.terminal_offset() == layout.reward_offset() + 1);
    CHECK(layout.terminal_offset() + 1 == layout.row_width());
  }
}

TEST_CASE("pack examples") {
  const RowLayout two{2};
  const Experience e{{1, 2}, 3, 0.5f, {4, 5}, true};
  CHECK(pack_experience(e, two).values == std::vector<float>{1, 2, 4, 5, 3, 0.5f, 1});

  const RowLayout one{1};
  const Experience zero{{0}, 0, 0.0f, {0}, false};
  CHECK(pack_experience(zero, one).values == std::vector<float>{0, 0, 0, 0, 0});
}

TEST_CASE("unpack examples") {
  const RowLayout two{2};
  const PackedRow row{{1, 2, 4, 5, 3, 0.5f, 1}};
  const Experience e = unpack_experience(row, two);
  CHECK(e.old_state == std::vector<float>{1, 2});
  CHECK(e.new_state == std::vector<float>{4, 5});
  CHECK(e.action == 3);
  CHECK(e.reward == 0.5f);
  CHECK(e.terminal);

  const PackedRow half_terminal{{1, 2, 4, 5, 3, 0.5f, 0.5f}};
  CHECK_THROWS_AS(unpack_experience(half_terminal, two), CorruptRowError);
  const PackedRow fractional_action{{1, 2, 4, 5, 2.5f, 0.5f, 0}};
  CHECK_THROWS_AS(unpack_experience(fractional_action, two), CorruptRowError);
  const PackedRow short_row{{1, 2, 4, 5, 3, 0.5f}};
  CHECK_THROWS_AS(unpack_experience(short_row, two), std::invalid_argument);
}

TEST_CASE("pack rejects invalid experiences") {
  const RowLayout two{2};
  CHECK_THROWS_AS(pack_experience(Experience{{1, 2, 3}, 0, 0, {1, 2}, false}, two),
                  std::invalid_argument);
  CHECK_THROWS_AS(pack_experience(Experience{{1, 2}, 0, 0, {1}, false}, two),
                  std::invalid_argument);
  CHECK_THROWS_AS(pack_experience(Experience{{1, 2}, -1, 0, {1, 2}, false}, two),
                  std::invalid_argument);
  CHECK_THROWS_AS(pack_experience(Experience{{1, 2}, 1 << 24, 0, {1, 2}, false}, two),
                  std::invalid_argument);
  CHECK_NOTHROW(pack_experience(Experience{{1, 2}, (1 << 24) - 1, 0, {1, 2}, false}, two));
}

TEST_CASE("pack/unpack roundtrip is the identity") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> dim(1, 64);
  for (int i = 0; i < 2000; ++i) {
    const RowLayout layout{dim(rng)};
    const Experience e = random_experience(layout.state_dim, rng);
    const Experience back = unpack_experience(pack_experience(e, layout), layout);
    REQUIRE(back == e);
  }
}

TEST_CASE("unpack_batch equals per-row unpack") {
  std::mt19937_64 rng(5);
  const RowLayout two{2};

  SUBCASE("single row") {
    HostMatrix rows(1, two.row_width(), {1, 2, 4, 5, 3, 0.5f, 1});
    const ExperienceBatch b = unpack_batch(rows, two);
    REQUIRE(b.size() == 1);
    CHECK(b.old_states == std::vector<float>{1, 2});
    CHECK(b.new_states == std::vector<float>{4, 5});
    CHECK(b.actions[0] == 3);
    CHECK(b.rewards[0] == 0.5f);
    CHECK(b.terminals[0] == 1);
  }

  SUBCASE("two stacked rows keep their order") {
    HostMatrix rows(2, two.row_width(), {1, 2, 4, 5, 3, 0.5f, 1, 0, 0, 0, 0, 0, 0, 0});
    const ExperienceBatch b = unpack_batch(rows, two);
    CHECK(b.actions == std::vector<std::int32_t>{3, 0});
    CHECK(b.rewards == std::vector<float>{0.5f, 0.0f});
    CHECK(b.terminals == std::vector<std::uint8_t>{1, 0});
    CHECK(b.old_states == std::vector<float>{1, 2, 0, 0});
  }

  SUBCASE("random B=16, D=3 batch") {
    const RowLayout three{3};
    HostMatrix rows(16, three.row_width());
    for (std::size_t i = 0; i < 16; ++i) {
      pack_into(random_experience(3, rng), three, rows.row(i));
    }
    const ExperienceBatch b = unpack_batch(rows, three);
    for (std::size_t i = 0; i < 16; ++i) {
      const Experience e = unpack_experience(rows.row(i), three);
      CHECK(std::equal(e.old_state.begin(), e.old_state.end(), b.old_state(i).begin()));
      CHECK(std::equal(e.new_state.begin(), e.new_state.end(), b.new_state(i).begin()));
      CHECK(b.actions[i] == e.action);
      CHECK(b.rewards[i] == e.reward);
      CHECK((b.terminals[i] == 1) == e.terminal);
    }
  }

  SUBCASE("width mismatch") {
    HostMatrix rows(2, 6);
    CHECK_THROWS_AS(unpack_batch(rows, two), std::invalid_argument);
  }
}

TEST_CASE("experience dump is headerless little-endian float32") {
  const RowLayout two{2};
  const std::vector<Experience> exps{{{1, 2}, 3, 0.5f, {4, 5}, true},
                                     {{-1, 0}, 7, -2.0f, {0.25f, 8}, false}};
  const std::string path = temp_path("devreplay_dump_test.bin");
  write_experience_dump(path, exps, two);

  CHECK(std::filesystem::file_size(path) == 2 * two.row_bytes());
  std::ifstream in(path, std::ios::binary);
  unsigned char first[4];
  in.read(reinterpret_cast<char*>(first), 4);
  // 1.0f == 0x3F800000
  CHECK(first[0] == 0x00);
  CHECK(first[1] == 0x00);
  CHECK(first[2] == 0x80);
  CHECK(first[3] == 0x3F);

  CHECK(read_experience_dump(path, two) == exps);
  CHECK_THROWS_AS(read_experience_dump(path, RowLayout{3}), std::invalid_argument);
  std::filesystem::remove(path);
}
