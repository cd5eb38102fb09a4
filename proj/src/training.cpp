// Copyright (c) the videojscc authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0; see the LICENSE file.

#include "videojscc/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <random>

#include "videojscc/checkpoint.hpp"
#include "videojscc/image_io.hpp"
#include "videojscc/rng.hpp"

namespace fs = std::filesystem;

namespace videojscc {

void TrainConfig::validate() const {
  if (lambda_rd < 0 || beta_rate < 0) throw ConfigError("lambda_rd and beta_rate must be non-negative");
  if (lr_init <= 0) throw ConfigError("lr_init must be positive");
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (steps <= 0 && epochs <= 0) throw ConfigError("either steps or epochs must be positive");
  if (crop <= 0 || crop % kSpatialFactor != 0)
    throw ConfigError("crop must be a positive multiple of " + std::to_string(kSpatialFactor));
  if (gop_size < 1) throw ConfigError("gop_size must be at least 1");
  if (cbr_grid.empty()) throw ConfigError("cbr_grid must not be empty");
  for (std::size_t i = 0; i < cbr_grid.size(); ++i) {
    if (cbr_grid[i] <= 0) throw ConfigError("cbr_grid entries must be positive");
    if (i > 0 && cbr_grid[i] <= cbr_grid[i - 1]) throw ConfigError("cbr_grid must be strictly increasing");
  }
}

int TrainConfig::total_steps(int usable_clips) const {
  if (steps > 0) return steps;
  const int per_epoch = std::max(1, usable_clips / std::max(1, batch_size));
  return epochs * per_epoch;
}

double lr_schedule(std::int64_t step, std::int64_t total_steps, double lr_init) {
  if (step < 0 || step > total_steps || total_steps <= 0) throw RangeError("lr_schedule: step outside [0, total]");
  return lr_init * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps)));
}

ClipManifest ClipManifest::load(const std::string& manifest_path, int min_frames,
                                std::vector<std::string>* warnings) {
  std::ifstream in(manifest_path);
  if (!in) throw ConfigError("cannot open manifest: " + manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();
  std::vector<std::string> dirs;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    fs::path p(line);
    dirs.push_back(p.is_absolute() ? p.string() : (base / p).string());
  }
  return from_dirs(dirs, min_frames, warnings);
}

ClipManifest ClipManifest::from_dirs(const std::vector<std::string>& clip_dirs, int min_frames,
                                     std::vector<std::string>* warnings) {
  ClipManifest m;
  for (const auto& dir : clip_dirs) {
    const auto files = list_frame_files(dir);
    if (static_cast<int>(files.size()) < min_frames) {
      const std::string w = "skipping clip " + dir + ": " + std::to_string(files.size()) + " frames < " +
                            std::to_string(min_frames);
      if (warnings != nullptr)
        warnings->push_back(w);
      else
        std::cerr << "warning: " << w << "\n";
      continue;
    }
    Tensor<float> first = read_ppm(files[0]);
    m.clips_.push_back({dir, static_cast<int>(files.size()), first.dim(1), first.dim(2)});
  }
  if (m.clips_.empty()) throw ConfigError("manifest contains no usable clips");
  m.cache_.resize(m.clips_.size());
  return m;
}

const Tensor<float>& ClipManifest::clip_frames(std::size_t i) const {
  if (cache_[i].empty()) cache_[i] = read_clip_frames(clips_[i].dir, 0, clips_[i].frame_count);
  return cache_[i];
}

Tensor<float> sample_batch(const ClipManifest& manifest, const TrainConfig& cfg, std::uint64_t seed,
                           int usable_clips) {
  if (usable_clips <= 0) throw ConfigError("sample_batch: no clips to sample from");
  std::mt19937_64 rng = make_rng(seed);
  const int b = cfg.batch_size, n = cfg.gop_size, crop = cfg.crop;
  Tensor<float> batch({b, n, 3, crop, crop});
  for (int s = 0; s < b; ++s) {
    const int ci = static_cast<int>(rng() % static_cast<std::uint64_t>(usable_clips));
    const ClipInfo& info = manifest.clips()[static_cast<std::size_t>(ci)];
    if (info.height < crop || info.width < crop)
      throw ConfigError("clip " + info.dir + " (" + std::to_string(info.height) + "x" +
                        std::to_string(info.width) + ") is smaller than the crop " + std::to_string(crop));
    std::uniform_int_distribution<int> start_dist(0, info.frame_count - n);
    std::uniform_int_distribution<int> ydist(0, info.height - crop);
    std::uniform_int_distribution<int> xdist(0, info.width - crop);
    const int start = start_dist(rng);
    const int y0 = ydist(rng);  // one crop window shared by all frames of the GOP
    const int x0 = xdist(rng);
    const Tensor<float>& frames = manifest.clip_frames(static_cast<std::size_t>(ci));
    for (int f = 0; f < n; ++f)
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < crop; ++y)
          for (int x = 0; x < crop; ++x)
            batch[(((static_cast<std::int64_t>(s) * n + f) * 3 + c) * crop + y) * crop + x] =
                frames.at(start + f, c, y0 + y, x0 + x);
  }
  return batch;
}

double evaluate_holdout_psnr(Model<float>& model, const ClipManifest& manifest, const TrainConfig& cfg,
                             double cbr, double snr_db, std::uint64_t seed) {
  const int first_holdout = std::max(0, static_cast<int>(manifest.clips().size()) - cfg.holdout_clips);
  double acc = 0.0;
  int count = 0;
  for (std::size_t i = static_cast<std::size_t>(first_holdout); i < manifest.clips().size(); ++i) {
    const ClipInfo& info = manifest.clips()[i];
    const Tensor<float> frames = manifest.clip_frames(i).slice0(0, cfg.gop_size);
    VideoGop<float> gop{frames};
    const GopDims dims{cfg.gop_size, info.height, info.width};
    const BandwidthBudget budget = BandwidthBudget::from_cbr(cbr, dims);
    ChannelConfig cc{ChannelKind::awgn, snr_db, derive_seed(seed, 0xe4a1ull, i)};
    const auto result = model.run(gop, budget, cc);
    acc += result.report.quality.psnr_db;
    ++count;
  }
  return count > 0 ? acc / count : 0.0;
}

namespace {

void append_log_row(const std::string& path, const TrainLogRow& row, bool header) {
  std::ofstream out(path, std::ios::app);
  if (header) out << "step,lr,loss,mse,rate_bits\n";
  out << row.step << ',' << row.lr << ',' << row.loss << ',' << row.mse << ',' << row.rate_bits << "\n";
}

}  // namespace

TrainResult train(const ClipManifest& manifest, const TrainConfig& cfg,
                  const std::optional<std::string>& resume_from) {
  cfg.validate();
  fs::create_directories(cfg.out_dir);

  const int usable_clips = std::max(1, static_cast<int>(manifest.clips().size()) - cfg.holdout_clips);
  const int total_steps = cfg.total_steps(usable_clips);
  if (total_steps <= 0) throw ConfigError("resolved step count is zero");

  auto model = std::make_unique<Model<float>>(cfg.model);

  // Budget feasibility on the training crop, checked up front.
  const GopDims crop_dims{cfg.gop_size, cfg.crop, cfg.crop};
  const double min_cbr = model->min_feasible_cbr(crop_dims);
  const double max_cbr = model->full_rate_cbr(crop_dims);
  std::vector<std::int64_t> grid_budgets;
  for (double cbr : cfg.cbr_grid) {
    if (cbr < min_cbr || cbr > max_cbr) {
      std::ostringstream os;
      os << "cbr_grid entry " << cbr << " infeasible for " << cfg.gop_size << "x" << cfg.crop << "x" << cfg.crop
         << " training GOPs; feasible range is [" << min_cbr << ", " << max_cbr << "]";
      throw ConfigError(os.str());
    }
    grid_budgets.push_back(BandwidthBudget::from_cbr(cbr, crop_dims).total_symbols);
  }

  Adam<float> adam;
  std::int64_t start_step = 0;
  if (resume_from.has_value()) {
    TrainState state;
    std::map<std::string, Tensor<float>> extras;
    load_model(*resume_from, *model, &state, &extras);
    adam.attach(model->params());
    // Restore moments by name.
    ParamList<float> adam_refs;
    adam.register_state(model->params(), adam_refs);
    for (auto& ref : adam_refs) {
      auto it = extras.find(ref.name);
      if (it == extras.end()) throw ConfigError("resume checkpoint lacks optimizer tensor " + ref.name);
      *ref.value = std::move(it->second);
    }
    adam.set_step_count(state.adam_steps);
    start_step = state.step;
  } else {
    model->init(derive_seed(cfg.seed, 0x171ull));
    adam.attach(model->params());
  }

  const std::string log_path = (fs::path(cfg.out_dir) / "train_log.csv").string();
  const std::string eval_path = (fs::path(cfg.out_dir) / "eval.csv").string();
  bool log_header = !fs::exists(log_path) || start_step == 0;
  if (start_step == 0) {
    std::ofstream(log_path, std::ios::trunc);
    std::ofstream(eval_path, std::ios::trunc) << "step,holdout_psnr_db\n";
  }

  const double eval_cbr = cfg.cbr_grid[cfg.cbr_grid.size() / 2];

  TrainResult result;
  result.log.reserve(static_cast<std::size_t>(total_steps - start_step));
  for (std::int64_t step = start_step; step < total_steps; ++step) {
    const double lr = lr_schedule(step, total_steps, cfg.lr_init);
    const Tensor<float> batch = sample_batch(manifest, cfg, derive_seed(cfg.seed, 0xba7c4ull, step), usable_clips);

    std::mt19937_64 budget_rng = make_rng(derive_seed(cfg.seed, 0xb4d6e7ull, step));
    std::vector<std::int64_t> budgets(static_cast<std::size_t>(cfg.batch_size));
    for (auto& b : budgets) b = grid_budgets[budget_rng() % grid_budgets.size()];

    const auto& params = model->params();
    zero_grads(params);
    const TrainStepStats stats = model->train_step(batch, budgets, cfg.snr_train_db, ChannelKind::awgn,
                                                   derive_seed(cfg.seed, 0x57e9ull, step), cfg.lambda_rd,
                                                   cfg.beta_rate);
    if (!std::isfinite(stats.loss)) {
      const std::string diag = (fs::path(cfg.out_dir) / "diverged.ckpt").string();
      TrainState st{step, adam.step_count(), cfg.seed};
      save_model(diag, *model, &st);
      throw DivergenceError("loss became non-finite at step " + std::to_string(step) +
                            "; diagnostic checkpoint written to " + diag);
    }
    adam.step(params, lr);

    TrainLogRow row{step, lr, stats.loss, stats.mse, stats.rate_bits};
    result.log.push_back(row);
    append_log_row(log_path, row, log_header);
    log_header = false;

    if (cfg.eval_every > 0 && ((step + 1) % cfg.eval_every == 0 || step + 1 == total_steps)) {
      const double psnr = evaluate_holdout_psnr(*model, manifest, cfg, eval_cbr, cfg.snr_train_db,
                                                derive_seed(cfg.seed, 0xe7a1ull, step));
      std::ofstream(eval_path, std::ios::app) << (step + 1) << ',' << psnr << "\n";
      result.final_holdout_psnr_db = psnr;
    }

    if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 && step + 1 < total_steps) {
      TrainState st{step + 1, adam.step_count(), cfg.seed};
      ParamList<float> adam_refs;
      adam.register_state(model->params(), adam_refs);
      std::vector<std::pair<std::string, Tensor<float>>> extras;
      for (const auto& ref : adam_refs) extras.emplace_back(ref.name, *ref.value);
      save_model((fs::path(cfg.out_dir) / ("step_" + std::to_string(step + 1) + ".ckpt")).string(), *model, &st,
                 &extras);
    }
  }

  TrainState final_state{total_steps, adam.step_count(), cfg.seed};
  ParamList<float> adam_refs;
  adam.register_state(model->params(), adam_refs);
  std::vector<std::pair<std::string, Tensor<float>>> extras;
  for (const auto& ref : adam_refs) extras.emplace_back(ref.name, *ref.value);
  result.checkpoint_path = (fs::path(cfg.out_dir) / "final.ckpt").string();
  save_model(result.checkpoint_path, *model, &final_state, &extras);
  result.model = std::move(model);
  return result;
}

}  // namespace videojscc
