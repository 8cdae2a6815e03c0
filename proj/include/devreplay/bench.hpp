#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "devreplay/device.hpp"
#include "devreplay/dueling_dqn.hpp"
#include "devreplay/replay.hpp"

namespace devreplay {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One CSV row: experiment,mode,param,value,units,n,seed
struct BenchResultRow {
  std::string experiment;
  std::string mode;
  std::uint64_t param = 0;
  double value = 0.0;
  std::string units;
  std::uint64_t n = 1;
  std::uint64_t seed = 0;
};

inline constexpr const char* kCsvHeader = "experiment,mode,param,value,units,n,seed";
inline constexpr const char* kUnitsPerAdd = "\xC2\xB5s/add";    // µs/add
inline constexpr const char* kUnitsPerStep = "\xC2\xB5s/step";  // µs/step
inline constexpr const char* kUnitsBytes = "bytes";
inline constexpr const char* kUnitsStepsPerSecond = "steps/s";

// Reference measurements on the original accelerator; reported, never asserted.
inline constexpr double kReferenceDeviceAddMicros = 37.5;  // update size 2000
inline constexpr double kReferenceHostAddMicros = 1.4;
inline constexpr std::uint64_t kReferenceUpdateSize = 2000;
inline const std::map<std::uint64_t, double> kReferenceSpeedupPercent = {
    {16, 30.54}, {32, 54.87}, {64, 67.08}, {128, 114.41}, {256, 114.35}};

struct BenchSettings {
  std::uint64_t seed = 7;
  ReplayConfig replay{};  // update_size is overridden by bench_add's sweep
  NetworkShape network{};
  TrainerConfig trainer{};
  CostModel cost{};
  ComputeModel compute{};
};

void write_csv(std::ostream& out, const std::vector<BenchResultRow>& rows);

// Per-add transfer cost of the device replay for each update size, plus the
// host-replay baseline and the reference annotations.
std::vector<BenchResultRow> bench_add(const std::vector<std::uint64_t>& update_sizes,
                                      std::uint64_t n_experiences, const BenchSettings& settings);

// Same sweep over caller-supplied experiences (e.g. a loaded dump).
std::vector<BenchResultRow> bench_add(const std::vector<std::uint64_t>& update_sizes,
                                      const std::vector<Experience>& experiences,
                                      const BenchSettings& settings);

struct TrainWindow {
  std::uint64_t steps = 100;
  std::uint64_t adds_per_step = 2;
};

struct TrainMeasurement {
  ReplayMode mode = ReplayMode::kDevice;
  std::uint64_t batch_size = 0;
  std::uint64_t steps = 0;
  double step_seconds = 0.0;  // simulated sample + train time per step
  TransferStats window;       // stats delta over the whole window, adds included
};

// Fills each replay past burn-in, then times `window.steps` train steps while
// adding `window.adds_per_step` fresh experiences per step.
std::vector<TrainMeasurement> measure_train(const std::vector<std::uint64_t>& batch_sizes,
                                            const std::vector<ReplayMode>& modes,
                                            const TrainWindow& window,
                                            const BenchSettings& settings);

std::vector<BenchResultRow> train_rows(const std::vector<TrainMeasurement>& measurements,
                                       std::uint64_t seed);

std::vector<BenchResultRow> bench_train(const std::vector<std::uint64_t>& batch_sizes,
                                        const std::vector<ReplayMode>& modes,
                                        const TrainWindow& window, const BenchSettings& settings);

// (t_host / t_device - 1) * 100 per batch size, from paired measurements.
std::map<std::uint64_t, double> percent_speedups(const std::vector<TrainMeasurement>& results);

// Random-policy transitions from the synthetic environment.
std::vector<Experience> synthetic_experiences(std::uint64_t count, std::uint64_t seed);

}  // namespace devreplay
