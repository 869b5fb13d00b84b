#include "tavg/app.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <ostream>

#include "tavg/errors.hpp"
#include "tavg/resample.hpp"
#include "tavg/synth.hpp"

namespace tavg::app {
namespace {

namespace fs = std::filesystem;

std::string frame_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%05zu.png", i);
  return buf;
}

std::uint64_t parse_seed(const std::string& text, const std::string& what) {
  std::uint64_t v = 0;
  const auto* end = text.data() + text.size();
  const auto [p, ec] = std::from_chars(text.data(), end, v);
  if (text.empty() || ec != std::errc() || p != end) throw ConfigError(what + ": not a seed: '" + text + "'");
  return v;
}

// "with_gru=a.ckpt,no_gru=b.ckpt" -> ordered (name, path) pairs.
std::vector<std::pair<std::string, fs::path>> parse_checkpoint_list(const std::string& text) {
  std::vector<std::pair<std::string, fs::path>> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == item.size()) {
      throw ConfigError("--ckpts: expected name=path, got '" + item + "'");
    }
    const auto name = item.substr(0, eq);
    for (const auto& [n, _] : out) {
      if (n == name) throw ConfigError("--ckpts: condition '" + name + "' given twice");
    }
    out.emplace_back(name, item.substr(eq + 1));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

void print_report(const metrics::Report& report, std::ostream& out) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-14s %10s %10s %10s\n", "condition", "MSE", "SSIM", "LPIPS");
  out << buf;
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%-14s %10.4f %10.4f %10.4f\n", r.condition.c_str(), r.mse, r.ssim, r.lpips);
    out << buf;
  }
}

fs::path details_path(const fs::path& report) {
  auto p = report;
  p.replace_filename(report.stem().string() + "_details.tsv");
  return p;
}

std::unique_ptr<data::FaceDetector> make_detector(const std::string& kind, const std::string& annotations,
                                                  const std::string& cascade) {
  if (kind == "sidecar") {
    if (annotations.empty()) throw ConfigError("--annotations is required with the sidecar face detector");
    return std::make_unique<data::SidecarDetector>(data::SidecarDetector::load(annotations));
  }
  if (kind == "haar") {
    if (cascade.empty()) throw ConfigError("--cascade is required with the haar face detector");
    return std::make_unique<data::HaarCascadeDetector>(cascade);
  }
  throw ConfigError("--detector: expected sidecar or haar, got '" + kind + "'");
}

train::TrainHooks progress_hooks(long iterations, std::ostream& err) {
  train::TrainHooks hooks;
  const long every = std::max(1L, iterations / 10);
  hooks.on_step = [every, iterations, &err](const train::LossRecord& r) {
    if (r.iteration % every != 0 && r.iteration != iterations) return;
    char buf[128];
    std::snprintf(buf, sizeof buf, "iteration %ld/%ld  d_loss %.4f  g_loss %.4f\n", r.iteration, iterations,
                  r.d_loss, r.g_loss);
    err << buf;
  };
  return hooks;
}

}  // namespace

std::optional<std::uint64_t> seed_from_env() {
  const char* v = std::getenv("TAVG_SEED");
  if (!v) return std::nullopt;
  return parse_seed(v, "TAVG_SEED");
}

GenerateSummary generate_frames(train::TrainState& state, const media::AudioTrack& audio, const fs::path& out_dir,
                                std::uint64_t seed) {
  if (audio.sample_rate != data::kTargetSampleRate) {
    throw ConfigError("generate: audio must be resampled to " + std::to_string(data::kTargetSampleRate) + " Hz");
  }
  const auto hop = static_cast<std::size_t>(state.model.encoder.config.input_length);
  GenerateSummary summary;
  summary.segments = audio.samples.size() / hop;
  fs::create_directories(out_dir);
  for (std::size_t s = 0; s < summary.segments; ++s) {
    const auto segment = data::peak_normalize(
        {audio.samples.begin() + static_cast<std::ptrdiff_t>(s * hop),
         audio.samples.begin() + static_cast<std::ptrdiff_t>((s + 1) * hop)});
    const auto y = audio::encode(segment, state.model.encoder);
    const auto z = metrics::evaluation_noise(seed, static_cast<int>(s), state.model.generator.config.noise_dim);
    for (const auto& frame : gen::generate(z.values(), y, state.model.generator)) {
      for (Real v : frame.values()) {
        if (!std::isfinite(v)) throw NumericError("generate: non-finite pixel in segment " + std::to_string(s));
      }
      media::write_png(out_dir / frame_name(summary.frames++), data::FaceImage::from_tensor(frame).to_rgb());
    }
  }
  return summary;
}

metrics::Report run_ablation(const AblationOptions& options, const data::Dataset& triplets,
                             const data::Dataset* baseline) {
  fs::create_directories(options.out_dir);
  std::ofstream log_file(options.out_dir / "ablation.log", std::ios::trunc);
  auto log = [&](const std::string& line) {
    log_file << line << "\n";
    log_file.flush();
    if (options.log) *options.log << line << std::endl;
  };

  std::vector<train::ModelMode> modes = {train::ModelMode::with_gru, train::ModelMode::no_gru};
  if (baseline) modes.push_back(train::ModelMode::baseline);

  metrics::Report report;
  for (auto mode : modes) {
    auto cfg = options.config;
    cfg.mode = mode;
    cfg.validate();
    const auto name = train::to_string(mode);
    const auto& ds = mode == train::ModelMode::baseline ? *baseline : triplets;
    log("training " + name + ": " + std::to_string(cfg.iterations) + " iterations on " +
        std::to_string(ds.samples.size()) + " samples");
    train::TrainHooks hooks;
    hooks.checkpoint = options.out_dir / (name + ".ckpt");
    hooks.losses = options.out_dir / (name + "_losses.tsv");
    auto state = train::train(cfg, ds, hooks);
    auto row = metrics::evaluate_condition(name, state, ds, options.eval);
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "%s: MSE %.6f SSIM %.6f LPIPS %.6f temporal_mse %.6f reference_temporal_mse %.6f", name.c_str(),
                  row.mse, row.ssim, row.lpips, row.temporal_mse, row.reference_temporal_mse);
    log(buf);
    report.rows.push_back(std::move(row));
  }
  const auto& g = report.rows[0];
  const auto& n = report.rows[1];
  log(std::string("ssim direction: with_gru ") + (g.ssim >= n.ssim ? ">=" : "<") + " no_gru (" +
      std::to_string(g.ssim) + " vs " + std::to_string(n.ssim) + ")");
  report.write(options.out_dir / "report.tsv");
  report.write_details(options.out_dir / "report_details.tsv");
  return report;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Audio-driven talking face video generation", "tavg"};
  app.require_subcommand(1);

  // build-dataset
  std::string video, out_dir, mode = "triplet", annotations, detector = "sidecar", cascade;
  auto* build = app.add_subcommand("build-dataset", "Decode a video and write a paired dataset directory");
  build->add_option("--video", video, "Input AVI file")->required();
  build->add_option("--out", out_dir, "Output dataset directory")->required();
  build->add_option("--mode", mode, "triplet or baseline")->capture_default_str();
  build->add_option("--annotations", annotations, "Face box sidecar file (frame x y w h per line)");
  build->add_option("--detector", detector, "sidecar or haar")->capture_default_str();
  build->add_option("--cascade", cascade, "Haar cascade model file for --detector haar");

  // train
  std::string data_dir, config_path, ckpt_out, losses_path, mode_override;
  bool no_gru = false;
  auto* trn = app.add_subcommand("train", "Train a model on a dataset directory");
  trn->add_option("--data", data_dir, "Dataset directory")->required();
  trn->add_option("--config", config_path, "Config file (key = value)")->required();
  trn->add_option("--out", ckpt_out, "Checkpoint path")->required();
  trn->add_flag("--no-gru", no_gru, "Train the ablation without the ConvGRU head");
  trn->add_option("--mode", mode_override, "Override the config mode (with_gru, no_gru, baseline)");
  trn->add_option("--losses", losses_path, "Loss log path (default: losses.tsv next to the checkpoint)");

  // generate
  std::string gen_ckpt, wav, frames_dir, seed_text;
  auto* gen = app.add_subcommand("generate", "Generate face frames for a WAV file");
  gen->add_option("--ckpt", gen_ckpt, "Checkpoint")->required();
  gen->add_option("--audio", wav, "16-bit PCM WAV input")->required();
  gen->add_option("--out", frames_dir, "Output directory for PNG frames")->required();
  gen->add_option("--seed", seed_text, "Noise seed");

  // evaluate
  std::string ckpts, baseline_dir, report_path, grid_dir, lpips_weights, eval_seed;
  auto* eval = app.add_subcommand("evaluate", "Score checkpoints with MSE, SSIM and LPIPS");
  eval->add_option("--ckpts", ckpts, "Comma-separated name=checkpoint list")->required();
  eval->add_option("--data", data_dir, "Triplet dataset directory")->required();
  eval->add_option("--baseline-data", baseline_dir, "Baseline dataset directory for baseline checkpoints");
  eval->add_option("--report", report_path, "Report TSV path")->required();
  eval->add_option("--grid", grid_dir, "Write an image grid per condition into this directory");
  eval->add_option("--lpips-weights", lpips_weights, "LPW1 feature extractor weights");
  eval->add_option("--seed", eval_seed, "Noise seed");

  // ablate
  std::string ablate_out;
  auto* abl = app.add_subcommand("ablate", "Train and score with_gru, no_gru and optionally baseline");
  abl->add_option("--data", data_dir, "Triplet dataset directory")->required();
  abl->add_option("--baseline-data", baseline_dir, "Baseline dataset directory");
  abl->add_option("--config", config_path, "Config file (key = value)")->required();
  abl->add_option("--out", ablate_out, "Output directory")->required();

  // synth-clip
  std::string synth_video, synth_faces;
  double seconds = 3.0;
  std::uint64_t synth_seed = 1;
  auto* syn = app.add_subcommand("synth-clip", "Write a synthetic talking-face clip and its face annotations");
  syn->add_option("--out", synth_video, "Output AVI path")->required();
  syn->add_option("--faces", synth_faces, "Annotation sidecar path (default: <out>.faces)");
  syn->add_option("--seconds", seconds, "Duration")->capture_default_str();
  syn->add_option("--seed", synth_seed, "Seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*build) {
      const auto m = data::parse_dataset_mode(mode);
      const auto det = make_detector(detector, annotations, cascade);
      const auto [frames, audio] = data::ingest_video(video);
      data::BuildReport report;
      const auto ds = data::build_dataset(frames, audio, *det, m, fs::path(video).filename().string(), &report);
      data::write_dataset(ds, out_dir);
      out << report.retained << " samples written, " << report.excluded() << " excluded\n";
    } else if (*trn) {
      auto cfg = train::TrainConfig::load(config_path);
      if (no_gru && !mode_override.empty()) throw ConfigError("--no-gru and --mode are mutually exclusive");
      if (no_gru) cfg.mode = train::ModelMode::no_gru;
      if (!mode_override.empty()) cfg.mode = train::parse_model_mode(mode_override);
      if (auto s = seed_from_env()) cfg.seed = *s;
      cfg.validate();
      const auto ds = data::load_dataset(data_dir);
      auto hooks = progress_hooks(cfg.iterations, err);
      hooks.checkpoint = fs::path(ckpt_out);
      hooks.losses = losses_path.empty() ? fs::path(ckpt_out).parent_path() / "losses.tsv" : fs::path(losses_path);
      const auto state = train::train(cfg, ds, hooks);
      out << "trained " << train::to_string(cfg.mode) << " for " << state.iteration << " iterations; checkpoint "
          << ckpt_out << "\n";
    } else if (*gen) {
      auto state = train::load_checkpoint(gen_ckpt);
      std::uint64_t seed = state.seed;
      if (auto s = seed_from_env()) seed = *s;
      if (!seed_text.empty()) seed = parse_seed(seed_text, "--seed");
      const auto audio = data::resample_audio(media::to_mono(media::read_wav(wav)));
      const auto summary = generate_frames(state, audio, frames_dir, seed);
      if (summary.frames == 0) {
        err << "warning: audio is shorter than one "
            << static_cast<double>(state.model.encoder.config.input_length) / data::kTargetSampleRate
            << " s segment; no frames written\n";
      }
      out << summary.frames << " frames written to " << frames_dir << "\n";
    } else if (*eval) {
      if (ckpts.empty()) {
        err << "--ckpts must name at least one condition\n" << eval->help();
        return kUsage;
      }
      const auto list = parse_checkpoint_list(ckpts);
      const auto triplets = data::load_dataset(data_dir);
      std::optional<data::Dataset> baseline;
      if (!baseline_dir.empty()) baseline = data::load_dataset(baseline_dir);
      std::optional<metrics::ConvFeatureExtractor> fx;
      if (!lpips_weights.empty()) fx = metrics::ConvFeatureExtractor::load(lpips_weights);
      metrics::EvalOptions opts;
      if (auto s = seed_from_env()) opts.seed = *s;
      if (!eval_seed.empty()) opts.seed = parse_seed(eval_seed, "--seed");
      if (fx) opts.extractor = &*fx;
      if (!grid_dir.empty()) opts.grid_dir = fs::path(grid_dir);
      const auto report = metrics::evaluate(list, triplets, baseline ? &*baseline : nullptr, opts);
      report.write(report_path);
      report.write_details(details_path(report_path));
      print_report(report, out);
    } else if (*abl) {
      AblationOptions opts;
      opts.config = train::TrainConfig::load(config_path);
      if (auto s = seed_from_env()) opts.config.seed = *s;
      opts.out_dir = ablate_out;
      opts.log = &err;
      const auto triplets = data::load_dataset(data_dir);
      std::optional<data::Dataset> baseline;
      if (!baseline_dir.empty()) baseline = data::load_dataset(baseline_dir);
      const auto report = run_ablation(opts, triplets, baseline ? &*baseline : nullptr);
      print_report(report, out);
    } else if (*syn) {
      data::SynthClipOptions o;
      o.seconds = seconds;
      o.seed = synth_seed;
      const auto clip = data::make_synth_clip(o);
      const fs::path faces = synth_faces.empty() ? fs::path(synth_video + ".faces") : fs::path(synth_faces);
      data::write_synth_clip(clip, synth_video, faces);
      out << clip.video.frames.size() << " frames written to " << synth_video << ", annotations in " << faces.string()
          << "\n";
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kNumericFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kDataFailure;
  }
  return kOk;
}

}  // namespace tavg::app
