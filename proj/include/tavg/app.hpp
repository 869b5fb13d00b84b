#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>

#include "tavg/metrics.hpp"
#include "tavg/trainer.hpp"

namespace tavg::app {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataFailure = 2, kNumericFailure = 3 };

/// Parses and runs one `tavg` command. Never throws; errors are printed to
/// `err` and mapped to an exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// TAVG_SEED from the environment, if set. Malformed values raise ConfigError.
std::optional<std::uint64_t> seed_from_env();

struct GenerateSummary {
  std::size_t segments = 0;
  std::size_t frames = 0;
};

/// Consumes 16 kHz audio in hops of the encoder input length and writes
/// `frame_00000.png`, ... into `out_dir`, `frames()` per full hop.
GenerateSummary generate_frames(train::TrainState& state, const media::AudioTrack& audio,
                                const std::filesystem::path& out_dir, std::uint64_t seed);

struct AblationOptions {
  train::TrainConfig config;  // mode is overridden per condition
  std::filesystem::path out_dir;
  metrics::EvalOptions eval;
  std::ostream* log = nullptr;
};

/// Trains with_gru and no_gru on `triplets` (and baseline when a baseline
/// dataset is given) from the same config, then scores every condition.
/// Writes checkpoints, loss logs, report.tsv, report_details.tsv and
/// ablation.log under `out_dir`.
metrics::Report run_ablation(const AblationOptions& options, const data::Dataset& triplets,
                             const data::Dataset* baseline = nullptr);

}  // namespace tavg::app
