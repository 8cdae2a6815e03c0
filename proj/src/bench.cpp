#include "devreplay/bench.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>

#include "devreplay/env_sim.hpp"

namespace devreplay {

void write_csv(std::ostream& out, const std::vector<BenchResultRow>& rows) {
  out << kCsvHeader << '\n';
  char value[64];
  for (const BenchResultRow& r : rows) {
    std::snprintf(value, sizeof value, "%.10g", r.value);
    out << r.experiment << ',' << r.mode << ',' << r.param << ',' << value << ',' << r.units << ','
        << r.n << ',' << r.seed << '\n';
  }
}

std::vector<Experience> synthetic_experiences(std::uint64_t count, std::uint64_t seed) {
  std::vector<Experience> out;
  out.reserve(count);
  Rng rng = make_rng(seed, 0xDA7A);
  const env::Policy policy = env::random_policy();
  std::uint64_t episode = 0;
  env::EnvState state = env::reset(seed * 0x10000 + episode);
  while (out.size() < count) {
    const std::int32_t action = policy(state, rng);
    const env::StepResult r = env::step(state, action, rng);
    out.push_back(Experience{{state.begin(), state.end()},
                             action,
                             r.reward,
                             {r.next_state.begin(), r.next_state.end()},
                             r.terminal});
    if (r.terminal) {
      state = env::reset(seed * 0x10000 + ++episode);
    } else {
      state = r.next_state;
    }
  }
  return out;
}

std::vector<BenchResultRow> bench_add(const std::vector<std::uint64_t>& update_sizes,
                                      std::uint64_t n_experiences, const BenchSettings& settings) {
  return bench_add(update_sizes, synthetic_experiences(n_experiences, settings.seed), settings);
}

std::vector<BenchResultRow> bench_add(const std::vector<std::uint64_t>& update_sizes,
                                      const std::vector<Experience>& experiences,
                                      const BenchSettings& settings) {
  if (experiences.empty()) {
    throw ConfigError("bench-add needs at least one experience");
  }
  const std::uint64_t n = experiences.size();
  std::vector<BenchResultRow> rows;
  for (std::uint64_t u : update_sizes) {
    ReplayConfig cfg = settings.replay;
    cfg.update_size = u;
    cfg.min_sample_size = std::min<std::size_t>(u, cfg.capacity);
    if (u == 0 || cfg.capacity % u != 0) {
      throw ConfigError("update size " + std::to_string(u) + " does not divide capacity " +
                        std::to_string(cfg.capacity));
    }
    Device device(settings.cost, settings.compute);
    DeviceReplayBuffer replay(cfg, device);
    for (const Experience& e : experiences) {
      replay.add(e);
    }
    replay.flush();
    const TransferStats s = device.stats();
    const std::string mode(to_string(ReplayMode::kDevice));
    rows.push_back({"add_cost", mode, u, s.simulated_time / static_cast<double>(n) * 1e6,
                    kUnitsPerAdd, n, settings.seed});
    rows.push_back({"add_bytes_to_device", mode, u, static_cast<double>(s.bytes_to_device),
                    kUnitsBytes, n, settings.seed});
  }

  // The in-RAM replay never crosses to the device on add.
  {
    Device device(settings.cost, settings.compute);
    ReplayConfig cfg = settings.replay;
    // Block size is irrelevant to the in-RAM replay; keep the config valid.
    cfg.update_size = update_sizes.empty() ? cfg.capacity : update_sizes.front();
    cfg.min_sample_size = std::min<std::size_t>(cfg.update_size, cfg.capacity);
    HostReplayBuffer replay(cfg, device);
    for (const Experience& e : experiences) {
      replay.add(e);
    }
    const TransferStats s = device.stats();
    const std::string mode(to_string(ReplayMode::kHost));
    rows.push_back({"add_cost", mode, 0, s.simulated_time / static_cast<double>(n) * 1e6,
                    kUnitsPerAdd, n, settings.seed});
    rows.push_back({"add_bytes_to_device", mode, 0, static_cast<double>(s.bytes_to_device),
                    kUnitsBytes, n, settings.seed});
  }

  rows.push_back({"add_cost_reference", std::string(to_string(ReplayMode::kDevice)),
                  kReferenceUpdateSize, kReferenceDeviceAddMicros, kUnitsPerAdd, 1, 0});
  rows.push_back({"add_cost_reference", std::string(to_string(ReplayMode::kHost)), 0,
                  kReferenceHostAddMicros, kUnitsPerAdd, 1, 0});
  return rows;
}

std::vector<TrainMeasurement> measure_train(const std::vector<std::uint64_t>& batch_sizes,
                                            const std::vector<ReplayMode>& modes,
                                            const TrainWindow& window,
                                            const BenchSettings& settings) {
  ReplayConfig cfg = settings.replay;
  cfg.validate();
  std::vector<TrainMeasurement> out;
  for (std::uint64_t batch : batch_sizes) {
    if (batch == 0) {
      throw ConfigError("batch size must be at least 1");
    }
    // Prefill past burn-in with whole blocks so the window starts with an
    // empty staging queue.
    std::uint64_t prefill = std::max<std::uint64_t>(cfg.min_sample_size, batch);
    prefill = (prefill + cfg.update_size - 1) / cfg.update_size * cfg.update_size;
    if (prefill > cfg.capacity) {
      throw ConfigError("burn-in of " + std::to_string(prefill) + " exceeds capacity");
    }
    const std::uint64_t window_adds = window.steps * window.adds_per_step;
    const std::vector<Experience> data =
        synthetic_experiences(prefill + window_adds, settings.seed);

    for (ReplayMode mode : modes) {
      Device device(settings.cost, settings.compute);
      auto replay = make_replay(mode, cfg, device);
      TrainerConfig tcfg = settings.trainer;
      tcfg.batch_size = batch;
      DuelingTrainer trainer(settings.network, tcfg, settings.seed, device);
      Rng rng = make_rng(settings.seed, 0xBE7C);

      std::size_t next = 0;
      for (; next < prefill; ++next) {
        replay->add(data[next]);
      }
      const TransferStats before = device.stats();
      double step_time = 0.0;
      for (std::uint64_t step = 0; step < window.steps; ++step) {
        for (std::uint64_t k = 0; k < window.adds_per_step; ++k) {
          replay->add(data[next++]);
        }
        const double t0 = device.stats().total_time();
        trainer.train_step(replay->sample(batch, rng));
        step_time += device.stats().total_time() - t0;
      }
      const TransferStats after = device.stats();

      TrainMeasurement m;
      m.mode = mode;
      m.batch_size = batch;
      m.steps = window.steps;
      m.step_seconds = window.steps ? step_time / static_cast<double>(window.steps) : 0.0;
      m.window.bytes_to_device = after.bytes_to_device - before.bytes_to_device;
      m.window.bytes_from_device = after.bytes_from_device - before.bytes_from_device;
      m.window.transfers_to_device = after.transfers_to_device - before.transfers_to_device;
      m.window.transfers_from_device = after.transfers_from_device - before.transfers_from_device;
      m.window.simulated_time = after.simulated_time - before.simulated_time;
      m.window.compute_time = after.compute_time - before.compute_time;
      out.push_back(m);
    }
  }
  return out;
}

std::vector<BenchResultRow> train_rows(const std::vector<TrainMeasurement>& measurements,
                                       std::uint64_t seed) {
  std::vector<BenchResultRow> rows;
  for (const TrainMeasurement& m : measurements) {
    const std::string mode(to_string(m.mode));
    const double micros = m.step_seconds * 1e6;
    const double bytes = static_cast<double>(m.window.bytes_to_device);
    rows.push_back({"train_step", mode, m.batch_size, micros, kUnitsPerStep, m.steps, seed});
    rows.push_back({"train_throughput", mode, m.batch_size, micros > 0 ? 1e6 / micros : 0.0,
                    kUnitsStepsPerSecond, m.steps, seed});
    rows.push_back({"experience_bytes_to_device", mode, m.batch_size, bytes, kUnitsBytes, m.steps,
                    seed});
    rows.push_back({"experience_bytes_per_step", mode, m.batch_size,
                    m.steps ? bytes / static_cast<double>(m.steps) : 0.0, kUnitsBytes, m.steps,
                    seed});
  }
  return rows;
}

std::vector<BenchResultRow> bench_train(const std::vector<std::uint64_t>& batch_sizes,
                                        const std::vector<ReplayMode>& modes,
                                        const TrainWindow& window, const BenchSettings& settings) {
  return train_rows(measure_train(batch_sizes, modes, window, settings), settings.seed);
}

std::map<std::uint64_t, double> percent_speedups(const std::vector<TrainMeasurement>& results) {
  std::map<std::uint64_t, double> host;
  std::map<std::uint64_t, double> device;
  for (const TrainMeasurement& m : results) {
    (m.mode == ReplayMode::kHost ? host : device)[m.batch_size] = m.step_seconds;
  }
  std::map<std::uint64_t, double> out;
  for (const auto& [batch, t_host] : host) {
    if (auto it = device.find(batch); it != device.end() && it->second > 0.0) {
      out[batch] = (t_host / it->second - 1.0) * 100.0;
    }
  }
  return out;
}

}  // namespace devreplay
