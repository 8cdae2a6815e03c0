#include "devreplay/checks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <exception>

#include "devreplay/device.hpp"
#include "devreplay/dueling_dqn.hpp"
#include "devreplay/experience.hpp"
#include "devreplay/replay.hpp"

namespace devreplay {
namespace {

std::string format(const char* fmt, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, fmt, a, b);
  return buf;
}

Experience random_experience(std::size_t d, std::int32_t num_actions, Rng& rng) {
  std::normal_distribution<float> value(0.0f, 3.0f);
  std::uniform_int_distribution<std::int32_t> action(0, num_actions - 1);
  Experience e;
  e.old_state.resize(d);
  e.new_state.resize(d);
  for (auto& v : e.old_state) v = value(rng);
  for (auto& v : e.new_state) v = value(rng);
  e.action = action(rng);
  e.reward = value(rng);
  e.terminal = (rng() & 1) != 0;
  return e;
}

CheckResult check_roundtrip(Rng& rng) {
  std::uniform_int_distribution<std::size_t> dim(1, 64);
  for (int i = 0; i < 1000; ++i) {
    const RowLayout layout{dim(rng)};
    const Experience e = random_experience(layout.state_dim, 1 << 20, rng);
    if (!(unpack_experience(pack_experience(e, layout), layout) == e)) {
      return {"pack_roundtrip", false, "mismatch at case " + std::to_string(i)};
    }
  }
  return {"pack_roundtrip", true, "1000 random experiences, D in [1,64]"};
}

CheckResult check_batch_unpack(Rng& rng) {
  const RowLayout layout{3};
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t b = 1 + static_cast<std::size_t>(trial % 16);
    HostMatrix rows(b, layout.row_width());
    std::vector<Experience> expected;
    for (std::size_t i = 0; i < b; ++i) {
      expected.push_back(random_experience(layout.state_dim, 8, rng));
      pack_into(expected.back(), layout, rows.row(i));
    }
    const ExperienceBatch batch = unpack_batch(rows, layout);
    for (std::size_t i = 0; i < b; ++i) {
      const Experience& e = expected[i];
      const bool same = std::equal(e.old_state.begin(), e.old_state.end(),
                                   batch.old_state(i).begin()) &&
                        std::equal(e.new_state.begin(), e.new_state.end(),
                                   batch.new_state(i).begin()) &&
                        batch.actions[i] == e.action && batch.rewards[i] == e.reward &&
                        (batch.terminals[i] != 0) == e.terminal;
      if (!same) {
        return {"batch_unpack", false, "row " + std::to_string(i) + " differs"};
      }
    }
  }
  return {"batch_unpack", true, "50 batches match per-row unpack"};
}

CheckResult check_device_oracle(Rng& rng) {
  const std::size_t rows = 37;
  const std::size_t cols = 5;
  Device device;
  DeviceBuffer2D buf = device.allocate(rows, cols);
  std::vector<float> plain(rows * cols, 0.0f);
  std::uniform_int_distribution<std::size_t> pick_row(0, rows - 1);
  std::uniform_int_distribution<std::size_t> pick_k(0, 8);
  std::normal_distribution<float> value;
  std::uint64_t expected_bytes = 0;
  for (int op = 0; op < 1000; ++op) {
    const std::size_t k = pick_k(rng);
    std::vector<std::size_t> idx(k);
    for (auto& i : idx) i = pick_row(rng);
    if (op % 2 == 0) {
      // Distinct indices keep the expected final contents unambiguous.
      std::sort(idx.begin(), idx.end());
      idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
      HostMatrix data(idx.size(), cols);
      for (auto& v : data.data()) v = value(rng);
      buf.scatter_rows(idx, data);
      for (std::size_t r = 0; r < idx.size(); ++r) {
        std::copy_n(data.row(r).begin(), cols, plain.begin() + idx[r] * cols);
      }
      expected_bytes += idx.size() * cols * sizeof(float);
    } else {
      const HostMatrix got = device.download(buf.gather_rows(idx));
      for (std::size_t r = 0; r < idx.size(); ++r) {
        if (!std::equal(got.row(r).begin(), got.row(r).end(), plain.begin() + idx[r] * cols)) {
          return {"device_oracle", false, "gather mismatch at op " + std::to_string(op)};
        }
      }
    }
  }
  if (device.stats().bytes_to_device != expected_bytes) {
    return {"device_oracle", false, "byte accounting drifted"};
  }
  return {"device_oracle", true, "1000 scatter/gather ops match a plain array"};
}

CheckResult check_fifo(int programs, Rng& rng) {
  const RowLayout layout{2};
  std::uniform_int_distribution<std::size_t> pick_u(1, 10);
  std::uniform_int_distribution<std::size_t> pick_blocks(1, 10);
  std::uniform_int_distribution<int> pick_op(0, 9);
  for (int p = 0; p < programs; ++p) {
    ReplayConfig cfg;
    cfg.update_size = pick_u(rng);
    cfg.capacity = cfg.update_size * pick_blocks(rng);
    cfg.min_sample_size = 1;
    cfg.layout = layout;
    Device device;
    DeviceReplayBuffer replay(cfg, device);

    std::deque<float> visible;  // ids of device-resident experiences, oldest first
    std::vector<float> staged;
    std::uint64_t written = 0;
    float next_id = 0.0f;
    auto publish = [&] {
      for (float id : staged) {
        visible.push_back(id);
        if (visible.size() > cfg.capacity) visible.pop_front();
      }
      written += staged.size();
      staged.clear();
    };

    for (int op = 0; op < 200; ++op) {
      const int kind = pick_op(rng);
      if (kind < 7) {
        Experience e = random_experience(layout.state_dim, 4, rng);
        e.reward = next_id++;
        replay.add(e);
        staged.push_back(e.reward);
        if ((written + staged.size()) % cfg.update_size == 0) publish();
      } else if (kind == 7) {
        if (replay.flush() != staged.size()) {
          return {"fifo_oracle", false, "flush count mismatch"};
        }
        publish();
      } else if (!visible.empty()) {
        Rng sample_rng = make_rng(static_cast<std::uint64_t>(p), static_cast<std::uint64_t>(op));
        const ExperienceBatch b = replay.sample(4, sample_rng);
        for (float id : b.rewards) {
          if (std::find(visible.begin(), visible.end(), id) == visible.end()) {
            return {"fifo_oracle", false, "sampled an experience the oracle does not hold"};
          }
        }
      }
      if (replay.size() != visible.size()) {
        return {"fifo_oracle", false, "size mismatch in program " + std::to_string(p)};
      }
    }
    std::vector<float> got;
    for (const Experience& e : replay.snapshot()) got.push_back(e.reward);
    std::vector<float> want(visible.begin(), visible.end());
    std::sort(got.begin(), got.end());
    std::sort(want.begin(), want.end());
    if (got != want) {
      return {"fifo_oracle", false, "contents mismatch in program " + std::to_string(p)};
    }
  }
  return {"fifo_oracle", true, std::to_string(programs) + " programs match the bounded list"};
}

CheckResult check_select_q(Rng& rng) {
  std::normal_distribution<float> value;
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index b = 1 + trial % 32;
    const Eigen::Index a = 1 + trial % 9;
    Mat<float> q(b, a);
    for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] = value(rng);
    std::vector<std::int32_t> actions(static_cast<std::size_t>(b));
    std::uniform_int_distribution<std::int32_t> pick(0, static_cast<std::int32_t>(a) - 1);
    for (auto& x : actions) x = pick(rng);
    const auto got = select_q(q, actions);
    for (Eigen::Index i = 0; i < b; ++i) {
      if (got[static_cast<std::size_t>(i)] != q(i, actions[static_cast<std::size_t>(i)])) {
        return {"select_q_gather", false, "mismatch in trial " + std::to_string(trial)};
      }
    }
  }
  return {"select_q_gather", true, "200 random batches match per-row indexing"};
}

CheckResult check_combine_identity(Rng& rng) {
  const NetworkShape shape{27, 128, 512, 8};
  const auto params = DuelingParams<float>::glorot(shape, rng);
  Mat<float> states(1000, 27);
  std::normal_distribution<float> value;
  for (Eigen::Index i = 0; i < states.size(); ++i) states.data()[i] = value(rng);
  const auto c = forward_cached(params, states);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < states.rows(); ++i) {
    const double v = c.value(i, 0);
    double sum = 0.0;
    double scale = std::abs(v);
    for (Eigen::Index a = 0; a < c.q.cols(); ++a) {
      sum += c.q(i, a) - v;
      scale = std::max(scale, static_cast<double>(std::abs(c.q(i, a))));
    }
    worst = std::max(worst, std::abs(sum) / std::max(scale, 1e-12));
  }
  return {"combine_identity", worst <= 1e-5,
          format("max |sum_a(Q-V)| / max|Q| = %.3g over 1000 states", worst)};
}

CheckResult check_gradient(Rng& rng) {
  const NetworkShape shape{3, 8, 16, 2};
  auto params = DuelingParams<double>::glorot(shape, rng);
  std::normal_distribution<double> value;
  params.for_each_block([&](const char*, auto& block) {
    if (block.rows() == 1) {
      for (Eigen::Index i = 0; i < block.size(); ++i) block.data()[i] = 0.1 * value(rng);
    }
  });
  const Eigen::Index batch = 4;
  Mat<double> states(batch, 3);
  for (Eigen::Index i = 0; i < states.size(); ++i) states.data()[i] = value(rng);
  const std::vector<std::int32_t> actions{0, 1, 1, 0};
  const std::vector<double> targets{0.5, -1.0, 2.0, 0.25};

  auto loss_of = [&](const DuelingParams<double>& p) {
    return td_loss<double>(forward(p, states), actions, targets).loss;
  };
  const auto cache = forward_cached(params, states);
  const auto analytic =
      backward(params, cache, td_loss<double>(cache.q, actions, targets).grad_q);

  std::vector<const double*> analytic_blocks;
  analytic.for_each_block([&](const char*, const auto& b) { analytic_blocks.push_back(b.data()); });

  double worst = 0.0;
  std::size_t k = 0;
  const double eps = 1e-6;
  params.for_each_block([&](const char*, auto& block) {
    const double* g = analytic_blocks[k++];
    double diff_sq = 0.0;
    double a_sq = 0.0;
    double n_sq = 0.0;
    for (Eigen::Index i = 0; i < block.size(); ++i) {
      const double saved = block.data()[i];
      block.data()[i] = saved + eps;
      const double up = loss_of(params);
      block.data()[i] = saved - eps;
      const double down = loss_of(params);
      block.data()[i] = saved;
      const double numeric = (up - down) / (2 * eps);
      diff_sq += (numeric - g[i]) * (numeric - g[i]);
      a_sq += g[i] * g[i];
      n_sq += numeric * numeric;
    }
    const double denom = std::sqrt(a_sq) + std::sqrt(n_sq);
    if (denom > 1e-12) worst = std::max(worst, std::sqrt(diff_sq) / denom);
  });
  return {"gradient_check", worst < 1e-4,
          format("worst per-block relative error %.3g (D=3, |A|=2, float64)", worst)};
}

CheckResult check_duplicates(std::uint64_t trials, std::uint64_t seed) {
  const double analytic = duplicate_probability(1'000'000, 32);
  const double mc = duplicate_rate_monte_carlo(1'000'000, 32, trials, seed);
  const bool ok = mc >= 3.5e-4 && mc <= 6.5e-4 && std::abs(analytic - 4.96e-4) < 5e-6;
  return {"duplicate_probability", ok,
          format("analytic %.4g, Monte Carlo %.4g (k=32, N=1e6)", analytic, mc)};
}

}  // namespace

double duplicate_probability(std::uint64_t population, std::uint64_t draws) {
  double all_distinct = 1.0;
  for (std::uint64_t i = 0; i < draws; ++i) {
    all_distinct *= 1.0 - static_cast<double>(i) / static_cast<double>(population);
  }
  return 1.0 - all_distinct;
}

double duplicate_rate_monte_carlo(std::uint64_t population, std::uint64_t draws,
                                  std::uint64_t trials, std::uint64_t seed) {
  Rng rng = make_rng(seed, 0xD0B);
  std::uint64_t hits = 0;
  for (std::uint64_t t = 0; t < trials; ++t) {
    auto idx = sample_indices(population, draws, rng);
    std::sort(idx.begin(), idx.end());
    if (std::adjacent_find(idx.begin(), idx.end()) != idx.end()) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(trials);
}

std::vector<CheckResult> run_verification(const VerifyOptions& options) {
  Rng rng = make_rng(options.seed, 0xC4EC);
  std::vector<CheckResult> results;
  auto guarded = [&](auto&& fn, const char* name) {
    try {
      results.push_back(fn());
    } catch (const std::exception& e) {
      results.push_back({name, false, std::string("threw: ") + e.what()});
    }
  };
  guarded([&] { return check_roundtrip(rng); }, "pack_roundtrip");
  guarded([&] { return check_batch_unpack(rng); }, "batch_unpack");
  guarded([&] { return check_device_oracle(rng); }, "device_oracle");
  guarded([&] { return check_fifo(options.fifo_programs, rng); }, "fifo_oracle");
  guarded([&] { return check_select_q(rng); }, "select_q_gather");
  guarded([&] { return check_combine_identity(rng); }, "combine_identity");
  guarded([&] { return check_gradient(rng); }, "gradient_check");
  guarded([&] { return check_duplicates(options.duplicate_trials, options.seed); },
          "duplicate_probability");
  return results;
}

}  // namespace devreplay
