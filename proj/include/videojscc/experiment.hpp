// Copyright (c) the videojscc authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0; see the LICENSE file.
//
// Evaluation harness: CBR x SNR x seed sweeps over a clip manifest, the
// results CSV, baseline-curve ingestion and plot/report emission.

#ifndef VIDEOJSCC_EXPERIMENT_HPP
#define VIDEOJSCC_EXPERIMENT_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "videojscc/channel.hpp"
#include "videojscc/errors.hpp"
#include "videojscc/model.hpp"
#include "videojscc/training.hpp"

namespace videojscc {

struct ExperimentSpec {
  std::string checkpoint;
  std::string manifest;
  std::string out_dir = "sweep_out";
  std::vector<double> cbr_grid = {0.005, 0.010, 0.015, 0.020, 0.025};
  std::vector<double> snr_grid = {0, 5, 10, 15, 20};
  std::vector<std::uint64_t> seeds = {1};
  ChannelKind channel = ChannelKind::awgn;
  int gop_size = 0;           // 0 = checkpoint's configured GOP size
  int gops_per_clip = 1;      // leading GOPs evaluated per clip
  std::vector<std::string> baseline_csvs;

  void validate() const;
};

/// One evaluated sweep cell; matches the results CSV column order.
struct SweepRow {
  std::string clip_id;
  int gop_index = 0;
  double cbr = 0.0;
  double snr_db = 0.0;
  std::uint64_t seed = 0;
  double psnr_db = 0.0;
  double ms_ssim = 0.0;
  double ms_ssim_db = 0.0;
};

struct SweepFailure {
  std::string clip_id;
  int gop_index = 0;
  double cbr = 0.0;
  double snr_db = 0.0;
  std::uint64_t seed = 0;
  std::string message;
};

struct SweepResult {
  std::vector<SweepRow> rows;        // sorted by (cbr, snr, seed, clip, gop)
  std::vector<SweepFailure> failures;
  std::string results_csv;
};

/// One point of an externally produced reference curve.
struct BaselinePoint {
  std::string label;
  double cbr = 0.0;
  double snr_db = 0.0;
  double psnr_db = 0.0;
  double ms_ssim = 0.0;
};

/// Full grid evaluation. Failures are recorded per cell and the sweep
/// continues; results, plots and errors land under spec.out_dir.
SweepResult run_sweep(const ExperimentSpec& spec);

void write_results_csv(const std::string& path, const std::vector<SweepRow>& rows);
std::vector<SweepRow> read_results_csv(const std::string& path);

/// Validates a baseline CSV (schema: label,cbr,snr_db,psnr_db,ms_ssim).
/// Throws SchemaError naming offending columns or rows.
std::vector<BaselinePoint> ingest_baseline(const std::string& csv_path);

/// Validates and stores a baseline under out_dir/baselines for later overlay.
std::string store_baseline(const std::string& csv_path, const std::string& out_dir);

/// Renders metric-vs-CBR and metric-vs-SNR plots (plus summary.txt) from
/// sweep rows, overlaying any baseline curves with matching fixed values.
void write_report(const std::string& out_dir, const std::vector<SweepRow>& rows,
                  const std::vector<BaselinePoint>& baselines);

}  // namespace videojscc

#endif  // VIDEOJSCC_EXPERIMENT_HPP
