#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "devreplay/dueling_dqn.hpp"
#include "devreplay/replay.hpp"

using namespace devreplay;

namespace {

// Plain-loop dense network evaluation, written against the block layout only.
std::vector<std::vector<double>> oracle_forward(const DuelingParams<double>& p,
                                                const std::vector<std::vector<double>>& states) {
  auto layer = [](const std::vector<double>& x, const Mat<double>& w, const RowVec<double>& b,
                  bool relu) {
    std::vector<double> out(static_cast<std::size_t>(w.cols()));
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      double acc = b(j);
      for (Eigen::Index i = 0; i < w.rows(); ++i) acc += x[static_cast<std::size_t>(i)] * w(i, j);
      out[static_cast<std::size_t>(j)] = relu ? std::max(acc, 0.0) : acc;
    }
    return out;
  };
  std::vector<std::vector<double>> q;
  for (const auto& s : states) {
    const auto h = layer(s, p.shared_w, p.shared_b, true);
    const auto v = layer(layer(h, p.value_w, p.value_b, true), p.value_head_w, p.value_head_b, false);
    const auto a = layer(layer(h, p.adv_w, p.adv_b, true), p.adv_head_w, p.adv_head_b, false);
    double mean = 0.0;
    for (double x : a) mean += x;
    mean /= static_cast<double>(a.size());
    std::vector<double> row;
    for (double x : a) row.push_back(v[0] + x - mean);
    q.push_back(row);
  }
  return q;
}

// Network whose heads ignore the input: V = value, A = advantages.
DuelingParams<float> constant_heads(std::size_t d, float value, std::vector<float> advantages) {
  NetworkShape shape{d, 4, 4, advantages.size()};
  Rng rng = make_rng(1);
  auto p = DuelingParams<float>::glorot(shape, rng);
  p.value_head_w.setZero();
  p.adv_head_w.setZero();
  p.value_head_b(0) = value;
  for (std::size_t a = 0; a < advantages.size(); ++a) {
    p.adv_head_b(static_cast<Eigen::Index>(a)) = advantages[a];
  }
  return p;
}

ExperienceBatch one_sample_batch(std::size_t d, std::int32_t action, float reward, bool terminal,
                                 std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n;
  ExperienceBatch b;
  b.state_dim = d;
  for (std::size_t i = 0; i < d; ++i) b.old_states.push_back(n(rng));
  for (std::size_t i = 0; i < d; ++i) b.new_states.push_back(n(rng));
  b.actions = {action};
  b.rewards = {reward};
  b.terminals = {static_cast<std::uint8_t>(terminal)};
  return b;
}

ExperienceBatch random_batch(std::size_t b, std::size_t d, std::int32_t num_actions,
                             std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n;
  std::uniform_int_distribution<std::int32_t> act(0, num_actions - 1);
  ExperienceBatch batch;
  batch.state_dim = d;
  for (std::size_t i = 0; i < b * d; ++i) batch.old_states.push_back(n(rng));
  for (std::size_t i = 0; i < b * d; ++i) batch.new_states.push_back(n(rng));
  for (std::size_t i = 0; i < b; ++i) {
    batch.actions.push_back(act(rng));
    batch.rewards.push_back(n(rng));
    batch.terminals.push_back(static_cast<std::uint8_t>(rng() % 4 == 0));
  }
  return batch;
}

}  // namespace

TEST_CASE("shape bookkeeping") {
  const NetworkShape shape{};
  CHECK(shape.state_dim == 27);
  CHECK(shape.shared_units == 128);
  CHECK(shape.stream_units == 512);
  Rng rng = make_rng(0);
  const auto p = DuelingParams<float>::glorot(shape, rng);
  std::size_t total = 0;
  p.for_each_block([&](const char*, const auto& b) { total += static_cast<std::size_t>(b.size()); });
  CHECK(total == shape.parameter_count());
  CHECK(p.value_w.rows() == 128);
  CHECK(p.value_w.cols() == 512);
  CHECK(p.adv_head_w.cols() == 8);
}

TEST_CASE("combine equation on forced heads") {
  const auto p = constant_heads(3, 1.0f, {1.0f, 2.0f, 3.0f});
  Mat<float> s = Mat<float>::Random(2, 3);
  const Mat<float> q = forward(p, s);
  for (Eigen::Index i = 0; i < 2; ++i) {
    CHECK(q(i, 0) == doctest::Approx(0.0));
    CHECK(q(i, 1) == doctest::Approx(1.0));
    CHECK(q(i, 2) == doctest::Approx(2.0));
  }
}

TEST_CASE("mean over actions of Q equals V") {
  Rng rng = make_rng(3);
  const auto p = DuelingParams<float>::glorot(NetworkShape{27, 128, 512, 8}, rng);
  Mat<float> s(200, 27);
  std::normal_distribution<float> n;
  for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = n(rng);
  const auto c = forward_cached(p, s);
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double scale = std::max(1.0, static_cast<double>(c.q.row(i).cwiseAbs().maxCoeff()));
    CHECK(std::abs(c.q.row(i).mean() - c.value(i, 0)) / scale < 1e-5);
  }
}

TEST_CASE("forward matches a loop-based oracle") {
  Rng rng = make_rng(17);
  const NetworkShape shape{3, 6, 10, 2};
  auto p = DuelingParams<double>::glorot(shape, rng);
  std::normal_distribution<double> n;
  p.for_each_block([&](const char*, auto& b) {
    if (b.rows() == 1) for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = 0.2 * n(rng);
  });
  std::vector<std::vector<double>> states(8, std::vector<double>(3));
  Mat<double> m(8, 3);
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 3; ++j) m(i, j) = states[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = n(rng);
  }
  const auto expected = oracle_forward(p, states);
  const Mat<double> got = forward(p, m);
  for (int i = 0; i < 8; ++i) {
    for (int a = 0; a < 2; ++a) {
      CHECK(got(i, a) == doctest::Approx(expected[static_cast<std::size_t>(i)][static_cast<std::size_t>(a)]).epsilon(1e-12));
    }
  }
}

TEST_CASE("non-finite activations name the layer") {
  Rng rng = make_rng(5);
  auto p = DuelingParams<float>::glorot(NetworkShape{3, 4, 4, 2}, rng);
  Mat<float> s = Mat<float>::Zero(1, 3);
  s(0, 1) = std::numeric_limits<float>::quiet_NaN();
  try {
    (void)forward(p, s);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("input") != std::string::npos);
  }
  s(0, 1) = 1.0f;
  p.adv_head_b(0) = std::numeric_limits<float>::infinity();
  try {
    (void)forward(p, s);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("advantage_head") != std::string::npos);
  }
  CHECK_THROWS_AS(forward(p, Mat<float>(Mat<float>::Zero(1, 4))), std::invalid_argument);
}

TEST_CASE("select_q via the enumerate mask") {
  Mat<float> q(2, 3);
  q << 1, 2, 3, 4, 5, 6;  // [[a,b,c],[d,e,f]]
  const std::vector<std::int32_t> actions{2, 0};
  CHECK(select_q(q, actions) == std::vector<float>{3, 4});

  const std::vector<std::int32_t> zeros{0, 0};
  CHECK(select_q(q, zeros) == std::vector<float>{1, 4});

  const std::vector<std::int32_t> bad{3, 0};
  CHECK_THROWS_AS(select_q(q, bad), std::invalid_argument);
  const std::vector<std::int32_t> negative{0, -1};
  CHECK_THROWS_AS(select_q(q, negative), std::invalid_argument);

  std::mt19937_64 rng(1);
  for (int t = 0; t < 100; ++t) {
    const Eigen::Index b = 1 + static_cast<Eigen::Index>(rng() % 64);
    const Eigen::Index a = 1 + static_cast<Eigen::Index>(rng() % 12);
    Mat<float> m = Mat<float>::Random(b, a);
    std::vector<std::int32_t> act(static_cast<std::size_t>(b));
    for (auto& x : act) x = static_cast<std::int32_t>(rng() % static_cast<std::uint64_t>(a));
    const auto got = select_q(m, act);
    for (Eigen::Index i = 0; i < b; ++i) REQUIRE(got[static_cast<std::size_t>(i)] == m(i, act[static_cast<std::size_t>(i)]));
  }
}

TEST_CASE("td targets") {
  Mat<float> next(1, 2);
  next << 0.5f, 1.5f;
  const std::vector<float> r1{1.0f};
  const std::vector<std::uint8_t> live{0};
  CHECK(td_targets(r1, live, next, 0.99)[0] == doctest::Approx(2.485));

  const std::vector<float> r2{2.0f};
  const std::vector<std::uint8_t> dead{1};
  Mat<float> huge(1, 2);
  huge << 1e6f, -1e6f;
  CHECK(td_targets(r2, dead, huge, 0.99)[0] == 2.0f);

  const std::vector<float> r3{0.25f, -3.0f};
  const std::vector<std::uint8_t> mixed{0, 1};
  CHECK(td_targets(r3, mixed, Mat<float>(Mat<float>::Constant(2, 3, 7.0f)), 0.0) == r3);
}

TEST_CASE("analytic gradient matches central differences (float64)") {
  Rng rng = make_rng(23);
  const NetworkShape shape{3, 16, 32, 2};
  auto p = DuelingParams<double>::glorot(shape, rng);
  std::normal_distribution<double> n;
  p.for_each_block([&](const char*, auto& b) {
    if (b.rows() == 1) for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = 0.1 * n(rng);
  });
  Mat<double> s(5, 3);
  for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = n(rng);
  const std::vector<std::int32_t> actions{1, 0, 1, 1, 0};
  const std::vector<double> targets{1.0, -0.5, 0.3, 2.0, 0.0};

  const auto cache = forward_cached(p, s);
  const auto grads = backward(p, cache, td_loss<double>(cache.q, actions, targets).grad_q);
  std::vector<Mat<double>> analytic;
  grads.for_each_block([&](const char*, const auto& b) { analytic.emplace_back(b); });

  std::size_t k = 0;
  p.for_each_block([&](const char* name, auto& block) {
    const Mat<double>& g = analytic[k++];
    double diff = 0.0;
    double norm = 0.0;
    for (Eigen::Index i = 0; i < block.size(); ++i) {
      const double saved = block.data()[i];
      const double h = 1e-6;
      block.data()[i] = saved + h;
      const double up = td_loss<double>(forward(p, s), actions, targets).loss;
      block.data()[i] = saved - h;
      const double down = td_loss<double>(forward(p, s), actions, targets).loss;
      block.data()[i] = saved;
      const double fd = (up - down) / (2 * h);
      diff += (fd - g.data()[i]) * (fd - g.data()[i]);
      norm += fd * fd + g.data()[i] * g.data()[i];
    }
    INFO("block " << name);
    if (norm > 1e-20) CHECK(std::sqrt(diff) / std::sqrt(norm) < 1e-4);
  });
}

TEST_CASE("a small step reduces the TD error of its sample") {
  TrainerConfig cfg;
  cfg.alpha = 1e-3;
  cfg.num_actions = 4;
  DuelingTrainer trainer(NetworkShape{5, 16, 32, 4}, cfg, 3);
  const ExperienceBatch b = one_sample_batch(5, 2, 1.5f, false, 8);

  auto td_error = [&] {
    const auto next = forward(trainer.state().target, states_matrix<float>(b, true));
    const auto target = td_targets(std::span<const float>(b.rewards), b.terminals, next, cfg.gamma);
    const auto q = forward(trainer.state().online, states_matrix<float>(b, false));
    return std::abs(select_q(q, b.actions)[0] - target[0]);
  };
  const float before = td_error();
  const float loss = trainer.train_step(b);
  CHECK(loss == doctest::Approx(before * before).epsilon(1e-4));
  CHECK(td_error() < before);
}

TEST_CASE("zero learning rate leaves weights untouched") {
  TrainerConfig cfg;
  cfg.alpha = 0.0;
  cfg.num_actions = 3;
  DuelingTrainer trainer(NetworkShape{4, 8, 8, 3}, cfg, 1);
  const auto before = trainer.state().online.digest();
  const float loss = trainer.train_step(random_batch(16, 4, 3, 2));
  CHECK(std::isfinite(loss));
  CHECK(loss > 0.0f);
  CHECK(trainer.state().online.digest() == before);
}

TEST_CASE("non-finite loss leaves the trainer unchanged") {
  TrainerConfig cfg;
  cfg.num_actions = 3;
  DuelingTrainer trainer(NetworkShape{4, 8, 8, 3}, cfg, 1);
  ExperienceBatch b = random_batch(4, 4, 3, 2);
  b.rewards[1] = std::numeric_limits<float>::infinity();
  const auto digest = trainer.state().online.digest();
  CHECK_THROWS_AS(trainer.train_step(b), NumericError);
  CHECK(trainer.state().online.digest() == digest);
  CHECK(trainer.state().step_count == 0);
}

TEST_CASE("target network is frozen between syncs") {
  TrainerConfig cfg;
  cfg.alpha = 1e-2;
  cfg.num_actions = 2;
  cfg.target_sync_period = 5;
  DuelingTrainer trainer(NetworkShape{3, 8, 8, 2}, cfg, 4);
  CHECK(trainer.state().target.bit_equal(trainer.state().online));
  const auto frozen = trainer.state().target.digest();
  for (int step = 1; step <= 12; ++step) {
    trainer.train_step(random_batch(8, 3, 2, static_cast<std::uint64_t>(step)));
    if (step % 5 == 0) {
      CHECK(trainer.synced_last_step());
      CHECK(trainer.state().target.bit_equal(trainer.state().online));
    } else {
      CHECK_FALSE(trainer.synced_last_step());
      CHECK_FALSE(trainer.state().target.bit_equal(trainer.state().online));
      if (step < 5) CHECK(trainer.state().target.digest() == frozen);
    }
  }
  // Equal weights give equal outputs.
  trainer.sync_target();
  const Mat<float> s = Mat<float>::Random(6, 3);
  CHECK(forward(trainer.state().online, s) == forward(trainer.state().target, s));
}

TEST_CASE("default sync period is 10,000 steps") {
  TrainerConfig cfg;
  cfg.num_actions = 2;
  CHECK(cfg.target_sync_period == 10'000);
  DuelingTrainer trainer(NetworkShape{2, 2, 2, 2}, cfg, 1);
  const ExperienceBatch b = random_batch(1, 2, 2, 1);
  std::vector<std::uint64_t> syncs;
  for (int i = 0; i < 20'001; ++i) {
    trainer.train_step(b);
    if (trainer.synced_last_step()) syncs.push_back(trainer.state().step_count);
  }
  CHECK(syncs == std::vector<std::uint64_t>{10'000, 20'000});
}

TEST_CASE("epsilon-greedy action choice") {
  Rng rng = make_rng(12);
  const auto p = constant_heads(3, 0.0f, {1.0f, 3.0f, 2.0f});
  const std::vector<float> s{0.1f, 0.2f, 0.3f};
  CHECK(act_epsilon_greedy(p, s, 0.0, rng) == 1);

  const auto tie = constant_heads(3, 0.0f, {5.0f, 5.0f});
  CHECK(act_epsilon_greedy(tie, s, 0.0, rng) == 0);

  std::vector<int> counts(3, 0);
  for (int i = 0; i < 10'000; ++i) counts[static_cast<std::size_t>(act_epsilon_greedy(p, s, 1.0, rng))]++;
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - 10'000 / 3.0) * (c - 10'000 / 3.0) / (10'000 / 3.0);
  CHECK(chi2 < 9.21);  // df = 2, 99%

  CHECK_THROWS_AS(act_epsilon_greedy(p, s, 1.5, rng), std::invalid_argument);
}

TEST_CASE("shifting every advantage leaves the greedy action unchanged") {
  Rng rng = make_rng(31);
  auto p = DuelingParams<float>::glorot(NetworkShape{6, 16, 16, 5}, rng);
  auto shifted = p;
  shifted.adv_head_b.array() += 3.75f;
  Mat<float> s = Mat<float>::Random(300, 6);
  const Mat<float> q1 = forward(p, s);
  const Mat<float> q2 = forward(shifted, s);
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    Eigen::Index a1 = 0;
    Eigen::Index a2 = 0;
    q1.row(i).maxCoeff(&a1);
    q2.row(i).maxCoeff(&a2);
    CHECK(a1 == a2);
  }
}

TEST_CASE("train step on device-resident samples moves no experience bytes") {
  Device device;
  ReplayConfig rc;
  rc.capacity = 1000;
  rc.update_size = 100;
  rc.min_sample_size = 100;
  rc.layout = RowLayout{4};
  DeviceReplayBuffer replay(rc, device);
  std::mt19937_64 gen(1);
  for (int i = 0; i < 200; ++i) {
    Experience e{{1, 2, 3, 4}, static_cast<std::int32_t>(gen() % 3), 1.0f, {4, 3, 2, 1}, false};
    replay.add(e);
  }
  TrainerConfig cfg;
  cfg.num_actions = 3;
  DuelingTrainer trainer(NetworkShape{4, 8, 8, 3}, cfg, 1, device);
  Rng rng = make_rng(2);
  const auto before = device.stats();
  for (int i = 0; i < 10; ++i) trainer.train_step(replay.sample(32, rng));
  const auto after = device.stats();
  CHECK(after.bytes_to_device == before.bytes_to_device);
  CHECK(after.transfers_to_device == before.transfers_to_device);
  CHECK(after.bytes_from_device - before.bytes_from_device == 10 * sizeof(float));  // losses
  CHECK(after.compute_time > before.compute_time);
}

TEST_CASE("config validation") {
  TrainerConfig cfg;
  cfg.gamma = 1.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.target_sync_period = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.num_actions = 4;
  CHECK_THROWS_AS(DuelingTrainer(NetworkShape{}, cfg, 1), std::invalid_argument);
}
