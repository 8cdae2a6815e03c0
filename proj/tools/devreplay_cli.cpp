// devreplay: benchmarks and training runs for the device-resident replay.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "devreplay/bench.hpp"
#include "devreplay/checks.hpp"
#include "devreplay/env_sim.hpp"
#include "devreplay/experience.hpp"
#include "devreplay/training.hpp"

namespace {

using namespace devreplay;

constexpr int kExitOk = 0;
constexpr int kExitCheckFailure = 1;
constexpr int kExitConfigError = 2;

struct Options {
  std::uint64_t capacity = 100'000;
  std::uint64_t update_size = 2'000;
  std::optional<std::uint64_t> min_sample_size;
  std::uint64_t batch_size = 32;
  double alpha = 1e-4;
  double gamma = 0.99;
  std::uint64_t sync_period = 10'000;
  std::uint64_t seed = 7;
  std::string mode = "both";
  std::string backend = "simulated";
  double overhead_us = 20.0;
  double bandwidth_gbps = 6.0;
  double step_overhead_us = 50.0;
  double compute_tflops = 10.0;
  std::uint64_t memory_limit = Device::kDefaultMemoryLimit;
  bool distinct_sampling = false;
  std::string out;

  // Subcommand specific.
  std::vector<std::uint64_t> update_sizes;
  std::vector<std::uint64_t> batch_sizes;
  std::optional<std::uint64_t> frames;
  std::uint64_t steps = 100;
  std::uint64_t adds_per_step = 2;
  std::uint64_t train_every = 1;
  int eval_episodes = 100;
  std::string out_dir = "train_out";
  std::string load;
  int fifo_programs = 1000;
};

void add_common_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--capacity", o.capacity, "Replay capacity in experiences")
      ->capture_default_str();
  cmd->add_option("--update-size", o.update_size, "Experiences per device block write")
      ->capture_default_str();
  cmd->add_option("--min-sample-size", o.min_sample_size,
                  "Burn-in threshold (defaults to the update size)");
  cmd->add_option("--batch-size", o.batch_size, "Train batch size")->capture_default_str();
  cmd->add_option("--alpha", o.alpha, "Learning rate")->capture_default_str();
  cmd->add_option("--gamma", o.gamma, "Discount")->capture_default_str();
  cmd->add_option("--sync-period", o.sync_period, "Train steps between target syncs")
      ->capture_default_str();
  cmd->add_option("--seed", o.seed, "Master seed")->capture_default_str();
  cmd->add_option("--mode", o.mode, "Replay placement")
      ->check(CLI::IsMember({"host", "device", "both"}))
      ->capture_default_str();
  cmd->add_option("--backend", o.backend, "Device backend")
      ->check(CLI::IsMember({"simulated", "accelerator"}))
      ->capture_default_str();
  cmd->add_option("--overhead-us", o.overhead_us, "Fixed cost per transfer, microseconds")
      ->capture_default_str();
  cmd->add_option("--bandwidth-gbps", o.bandwidth_gbps, "Transfer bandwidth, GB/s")
      ->capture_default_str();
  cmd->add_option("--step-overhead-us", o.step_overhead_us,
                  "Simulated launch overhead per train step, microseconds")
      ->capture_default_str();
  cmd->add_option("--compute-tflops", o.compute_tflops, "Simulated device throughput, TFLOP/s")
      ->capture_default_str();
  cmd->add_option("--memory-limit", o.memory_limit, "Device memory limit, bytes")
      ->capture_default_str();
  cmd->add_flag("--distinct-sampling", o.distinct_sampling,
                "Redraw duplicate indices within a batch");
  cmd->add_option("--out", o.out, "CSV output path (stdout when omitted)");
}

ReplayMode parse_single_mode(const std::string& mode) {
  if (mode == "host") return ReplayMode::kHost;
  if (mode == "device") return ReplayMode::kDevice;
  throw ConfigError("--mode must be host or device for this command");
}

std::vector<ReplayMode> parse_modes(const std::string& mode) {
  if (mode == "both") return {ReplayMode::kHost, ReplayMode::kDevice};
  return {parse_single_mode(mode)};
}

BenchSettings make_settings(const Options& o) {
  if (o.backend == "accelerator") {
    throw ConfigError("the accelerator backend is not available in this build; use --backend simulated");
  }
  BenchSettings s;
  s.seed = o.seed;
  s.replay.capacity = o.capacity;
  s.replay.update_size = o.update_size;
  s.replay.min_sample_size = o.min_sample_size.value_or(o.update_size);
  s.replay.distinct_sampling = o.distinct_sampling;
  s.replay.layout = RowLayout{env::kStateDim};
  s.trainer.alpha = o.alpha;
  s.trainer.gamma = o.gamma;
  s.trainer.target_sync_period = o.sync_period;
  s.trainer.batch_size = o.batch_size;
  s.trainer.num_actions = static_cast<std::size_t>(env::kNumActions);
  s.network.state_dim = env::kStateDim;
  s.network.num_actions = static_cast<std::size_t>(env::kNumActions);
  s.cost.fixed_overhead = o.overhead_us * 1e-6;
  s.cost.bandwidth = o.bandwidth_gbps * 1e9;
  s.compute.step_overhead = o.step_overhead_us * 1e-6;
  s.compute.flops_per_second = o.compute_tflops * 1e12;
  s.cost.validate();
  s.compute.validate();
  s.trainer.validate();
  // Catch over-sized buffers before any work starts.
  if (s.replay.capacity * s.replay.layout.row_bytes() > o.memory_limit) {
    throw AllocationError(s.replay.capacity * s.replay.layout.row_bytes(), o.memory_limit);
  }
  return s;
}

TrainingConfig make_training_config(const Options& o) {
  const BenchSettings s = make_settings(o);
  TrainingConfig cfg;
  cfg.seed = o.seed;
  cfg.total_frames = o.frames.value_or(100'000);
  cfg.mode = parse_single_mode(o.mode == "both" ? "device" : o.mode);
  cfg.replay = s.replay;
  cfg.network = s.network;
  cfg.trainer = s.trainer;
  cfg.cost = s.cost;
  cfg.compute = s.compute;
  cfg.train_every = o.train_every;
  cfg.validate();
  return cfg;
}

void emit_rows(const Options& o, const std::vector<BenchResultRow>& rows) {
  if (o.out.empty()) {
    write_csv(std::cout, rows);
    return;
  }
  std::ofstream f(o.out, std::ios::trunc);
  if (!f) {
    throw std::runtime_error("cannot write " + o.out);
  }
  write_csv(f, rows);
}

std::ostream& report_stream(const Options& o) { return o.out.empty() ? std::cerr : std::cout; }

int cmd_bench_add(const Options& o, bool update_size_given) {
  BenchSettings s = make_settings(o);
  std::vector<std::uint64_t> sizes = o.update_sizes;
  if (sizes.empty()) {
    sizes = update_size_given ? std::vector<std::uint64_t>{o.update_size}
                              : std::vector<std::uint64_t>{10, 100, 500, 2000, 10000};
  }
  std::vector<BenchResultRow> rows;
  if (!o.load.empty()) {
    rows = bench_add(sizes, read_experience_dump(o.load, s.replay.layout), s);
  } else {
    rows = bench_add(sizes, o.frames.value_or(o.capacity), s);
  }
  emit_rows(o, rows);
  std::ostream& rep = report_stream(o);
  rep << "simulated per-add cost (device replay):\n";
  for (const auto& r : rows) {
    if (r.experiment == "add_cost" && r.mode == "device-replay") {
      char line[128];
      std::snprintf(line, sizeof line, "  update_size=%-6llu %.6f us/add\n",
                    static_cast<unsigned long long>(r.param), r.value);
      rep << line;
    }
  }
  rep << "reference hardware: " << kReferenceDeviceAddMicros << " us/add at update size "
      << kReferenceUpdateSize << ", in-RAM " << kReferenceHostAddMicros << " us/add\n";
  return kExitOk;
}

int cmd_bench_train(const Options& o) {
  BenchSettings s = make_settings(o);
  std::vector<std::uint64_t> sizes = o.batch_sizes;
  if (sizes.empty()) sizes = {16, 32, 64, 128, 256};
  const TrainWindow window{o.steps, o.adds_per_step};
  const auto modes = parse_modes(o.mode);
  const auto measurements = measure_train(sizes, modes, window, s);

  const auto rows = train_rows(measurements, o.seed);
  emit_rows(o, rows);

  const auto speedups = percent_speedups(measurements);
  if (!speedups.empty()) {
    std::ostream& rep = report_stream(o);
    rep << "percent speedup of device replay over host replay (simulated):\n";
    for (const auto& [batch, pct] : speedups) {
      char line[160];
      const auto ref = kReferenceSpeedupPercent.find(batch);
      if (ref != kReferenceSpeedupPercent.end()) {
        std::snprintf(line, sizeof line, "  batch=%-4llu %8.2f%%   (reference hardware %.2f%%)\n",
                      static_cast<unsigned long long>(batch), pct, ref->second);
      } else {
        std::snprintf(line, sizeof line, "  batch=%-4llu %8.2f%%\n",
                      static_cast<unsigned long long>(batch), pct);
      }
      rep << line;
    }
  }
  return kExitOk;
}

int cmd_train(const Options& o) {
  const TrainingConfig cfg = make_training_config(o);
  const TrainingSummary summary = run_training(cfg, &std::cout);
  write_training_outputs(summary, o.out_dir);

  nlohmann::ordered_json j;
  j["seed"] = cfg.seed;
  j["frames"] = summary.frames;
  j["mode"] = std::string(to_string(cfg.mode));
  j["episodes"] = summary.episode_rewards.size();
  j["train_steps"] = summary.train_steps;
  j["target_sync_steps"] = summary.sync_steps;
  j["mean_reward_curve"] = summary.reward_curve(100);
  j["bytes_to_device"] = summary.transfers.bytes_to_device;
  j["transfers_to_device"] = summary.transfers.transfers_to_device;
  if (o.eval_episodes > 0) {
    constexpr std::uint64_t kEvalSeedBase = 1'000'000'000ULL;
    j["eval_episodes"] = o.eval_episodes;
    j["eval_mean_length_greedy"] =
        evaluate_greedy(summary.final_params, kEvalSeedBase, o.eval_episodes);
    j["eval_mean_length_random"] =
        env::mean_episode_length(env::random_policy(), kEvalSeedBase, o.eval_episodes);
  }
  j["checkpoint"] = o.out_dir + "/checkpoint";
  std::ofstream(o.out_dir + "/summary.json", std::ios::trunc) << j.dump(2) << '\n';
  std::cout << j.dump(2) << '\n';
  return kExitOk;
}

int cmd_verify(const Options& o) {
  VerifyOptions v;
  v.seed = o.seed;
  v.fifo_programs = o.fifo_programs;
  bool all = true;
  for (const CheckResult& r : run_verification(v)) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
    all = all && r.passed;
  }
  return all ? kExitOk : kExitCheckFailure;
}

int cmd_dump_config(const Options& o) {
  const BenchSettings s = make_settings(o);
  nlohmann::ordered_json j;
  j["seed"] = s.seed;
  j["replay"] = {{"capacity", s.replay.capacity},
                 {"update_size", s.replay.update_size},
                 {"min_sample_size", s.replay.min_sample_size},
                 {"distinct_sampling", s.replay.distinct_sampling},
                 {"state_dim", s.replay.layout.state_dim},
                 {"row_width", s.replay.layout.row_width()}};
  j["network"] = {{"state_dim", s.network.state_dim},
                  {"shared_units", s.network.shared_units},
                  {"stream_units", s.network.stream_units},
                  {"num_actions", s.network.num_actions},
                  {"parameters", s.network.parameter_count()}};
  j["trainer"] = {{"alpha", s.trainer.alpha},
                  {"gamma", s.trainer.gamma},
                  {"target_sync_period", s.trainer.target_sync_period},
                  {"batch_size", s.trainer.batch_size}};
  j["cost_model"] = {{"fixed_overhead_s", s.cost.fixed_overhead},
                     {"bandwidth_bytes_per_s", s.cost.bandwidth},
                     {"memory_limit_bytes", o.memory_limit}};
  j["compute_model"] = {{"step_overhead_s", s.compute.step_overhead},
                        {"flops_per_s", s.compute.flops_per_second}};
  j["mode"] = o.mode;
  j["backend"] = o.backend;
  std::cout << j.dump(2) << '\n';
  return kExitOk;
}

int cmd_dump_experiences(const Options& o) {
  if (o.out.empty()) {
    throw ConfigError("dump-experiences needs --out <path>");
  }
  const auto experiences = synthetic_experiences(o.frames.value_or(10'000), o.seed);
  write_experience_dump(o.out, experiences, RowLayout{env::kStateDim});
  std::cout << "wrote " << experiences.size() << " experiences ("
            << experiences.size() * RowLayout{env::kStateDim}.row_bytes() << " bytes) to "
            << o.out << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Device-resident experience replay: benchmarks, training and self-checks"};
  app.set_config("--config", "", "TOML/INI file with option values");
  app.require_subcommand(1);
  Options o;

  auto* bench_add_cmd = app.add_subcommand("bench-add", "Per-add cost against update size");
  add_common_options(bench_add_cmd, o);
  bench_add_cmd->add_option("--update-sizes", o.update_sizes, "Update sizes to sweep")
      ->delimiter(',');
  bench_add_cmd->add_option("--frames", o.frames, "Experiences to add (default: capacity)");
  bench_add_cmd->add_option("--load", o.load, "Binary experience dump to ingest");

  auto* bench_train_cmd =
      app.add_subcommand("bench-train", "Train-step cost of host vs device replay");
  add_common_options(bench_train_cmd, o);
  bench_train_cmd->add_option("--batch-sizes", o.batch_sizes, "Batch sizes to sweep")
      ->delimiter(',');
  bench_train_cmd->add_option("--steps", o.steps, "Timed train steps per configuration")
      ->capture_default_str();
  bench_train_cmd->add_option("--adds-per-step", o.adds_per_step,
                              "Fresh experiences added per train step")
      ->capture_default_str();

  auto* train_cmd = app.add_subcommand("train", "Train the dueling agent on the synthetic env");
  add_common_options(train_cmd, o);
  train_cmd->add_option("--frames", o.frames, "Environment frames (default 100000)");
  train_cmd->add_option("--train-every", o.train_every, "Frames per train step")
      ->capture_default_str();
  train_cmd->add_option("--eval-episodes", o.eval_episodes, "Greedy evaluation episodes")
      ->capture_default_str();
  train_cmd->add_option("--out-dir", o.out_dir, "Directory for logs and checkpoint")
      ->capture_default_str();

  auto* verify_cmd = app.add_subcommand("verify", "Run the invariant self-checks");
  add_common_options(verify_cmd, o);
  verify_cmd->add_option("--fifo-programs", o.fifo_programs, "Randomised FIFO programs")
      ->capture_default_str();

  auto* dump_config_cmd = app.add_subcommand("dump-config", "Print the effective configuration");
  add_common_options(dump_config_cmd, o);

  auto* dump_exp_cmd =
      app.add_subcommand("dump-experiences", "Write random-policy transitions as a binary dump");
  add_common_options(dump_exp_cmd, o);
  dump_exp_cmd->add_option("--frames", o.frames, "Transitions to write (default 10000)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfigError;
  }

  try {
    if (*bench_add_cmd) {
      return cmd_bench_add(o, bench_add_cmd->count("--update-size") > 0);
    }
    if (*bench_train_cmd) return cmd_bench_train(o);
    if (*train_cmd) return cmd_train(o);
    if (*verify_cmd) return cmd_verify(o);
    if (*dump_config_cmd) return cmd_dump_config(o);
    if (*dump_exp_cmd) return cmd_dump_experiences(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const AllocationError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitCheckFailure;
  }
  return kExitConfigError;
}
