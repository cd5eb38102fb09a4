// Copyright (c) the videojscc authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0; see the LICENSE file.

#include "videojscc/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "videojscc/checkpoint.hpp"
#include "videojscc/svg_plot.hpp"

namespace fs = std::filesystem;

namespace videojscc {

namespace {

std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

double parse_num(const std::string& s, const std::string& what, int row) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  try {
    std::size_t pos = 0;
    const double d = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return d;
  } catch (const std::exception&) {
    throw SchemaError("row " + std::to_string(row) + ": column '" + what + "' is not numeric: '" + s + "'");
  }
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

void sort_rows(std::vector<SweepRow>& rows) {
  std::sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    if (a.cbr != b.cbr) return a.cbr < b.cbr;
    if (a.snr_db != b.snr_db) return a.snr_db < b.snr_db;
    if (a.seed != b.seed) return a.seed < b.seed;
    if (a.clip_id != b.clip_id) return a.clip_id < b.clip_id;
    return a.gop_index < b.gop_index;
  });
}

}  // namespace

void ExperimentSpec::validate() const {
  if (checkpoint.empty()) throw ConfigError("missing required config field 'checkpoint'");
  if (manifest.empty()) throw ConfigError("missing required config field 'manifest'");
  auto check_grid = [](const std::vector<double>& g, const std::string& name) {
    if (g.empty()) throw ConfigError("grid '" + name + "' must not be empty");
    for (std::size_t i = 1; i < g.size(); ++i)
      if (g[i] <= g[i - 1]) throw ConfigError("grid '" + name + "' must be strictly increasing");
  };
  check_grid(cbr_grid, "cbr_grid");
  check_grid(snr_grid, "snr_grid");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (gops_per_clip < 1) throw ConfigError("gops_per_clip must be at least 1");
}

void write_results_csv(const std::string& path, const std::vector<SweepRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot open results file for writing: " + path);
  out << "clip_id,gop_index,cbr,snr_db,seed,psnr_db,ms_ssim,ms_ssim_db\n";
  for (const auto& r : rows) {
    out << r.clip_id << ',' << r.gop_index << ',' << num(r.cbr) << ',' << num(r.snr_db) << ',' << r.seed << ','
        << num(r.psnr_db) << ',' << num(r.ms_ssim) << ',' << num(r.ms_ssim_db) << "\n";
  }
}

std::vector<SweepRow> read_results_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open results file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("empty results file: " + path);
  if (split_csv_line(line) !=
      std::vector<std::string>{"clip_id", "gop_index", "cbr", "snr_db", "seed", "psnr_db", "ms_ssim", "ms_ssim_db"})
    throw SchemaError("unexpected results header: " + line);
  std::vector<SweepRow> rows;
  int row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 8) throw SchemaError("row " + std::to_string(row_no) + ": expected 8 columns");
    SweepRow r;
    r.clip_id = f[0];
    r.gop_index = static_cast<int>(parse_num(f[1], "gop_index", row_no));
    r.cbr = parse_num(f[2], "cbr", row_no);
    r.snr_db = parse_num(f[3], "snr_db", row_no);
    r.seed = static_cast<std::uint64_t>(parse_num(f[4], "seed", row_no));
    r.psnr_db = parse_num(f[5], "psnr_db", row_no);
    r.ms_ssim = parse_num(f[6], "ms_ssim", row_no);
    r.ms_ssim_db = parse_num(f[7], "ms_ssim_db", row_no);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<BaselinePoint> ingest_baseline(const std::string& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw ConfigError("cannot open baseline file: " + csv_path);
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("empty baseline file: " + csv_path);
  const std::vector<std::string> expected = {"label", "cbr", "snr_db", "psnr_db", "ms_ssim"};
  const auto header = split_csv_line(line);
  std::vector<int> column_of(expected.size(), -1);
  std::vector<std::string> unexpected;
  for (std::size_t i = 0; i < header.size(); ++i) {
    auto it = std::find(expected.begin(), expected.end(), header[i]);
    if (it == expected.end())
      unexpected.push_back(header[i]);
    else
      column_of[static_cast<std::size_t>(it - expected.begin())] = static_cast<int>(i);
  }
  std::vector<std::string> missing;
  for (std::size_t i = 0; i < expected.size(); ++i)
    if (column_of[i] < 0) missing.push_back(expected[i]);
  if (!missing.empty() || !unexpected.empty()) {
    std::ostringstream os;
    os << "baseline schema mismatch in " << csv_path << ":";
    if (!missing.empty()) {
      os << " missing columns:";
      for (const auto& c : missing) os << " " << c;
      os << ";";
    }
    if (!unexpected.empty()) {
      os << " unexpected columns:";
      for (const auto& c : unexpected) os << " " << c;
    }
    throw SchemaError(os.str());
  }

  std::vector<BaselinePoint> points;
  int row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size())
      throw SchemaError("row " + std::to_string(row_no) + ": expected " + std::to_string(header.size()) +
                        " columns, got " + std::to_string(f.size()));
    BaselinePoint p;
    p.label = f[static_cast<std::size_t>(column_of[0])];
    p.cbr = parse_num(f[static_cast<std::size_t>(column_of[1])], "cbr", row_no);
    p.snr_db = parse_num(f[static_cast<std::size_t>(column_of[2])], "snr_db", row_no);
    p.psnr_db = parse_num(f[static_cast<std::size_t>(column_of[3])], "psnr_db", row_no);
    p.ms_ssim = parse_num(f[static_cast<std::size_t>(column_of[4])], "ms_ssim", row_no);
    if (p.label.empty()) throw SchemaError("row " + std::to_string(row_no) + ": empty label");
    if (!(p.cbr > 0)) throw SchemaError("row " + std::to_string(row_no) + ": cbr must be positive");
    if (!(p.ms_ssim >= 0.0 && p.ms_ssim <= 1.0))
      throw SchemaError("row " + std::to_string(row_no) + ": ms_ssim outside [0,1]");
    points.push_back(std::move(p));
  }
  return points;
}

std::string store_baseline(const std::string& csv_path, const std::string& out_dir) {
  const auto points = ingest_baseline(csv_path);
  const fs::path dir = fs::path(out_dir) / "baselines";
  fs::create_directories(dir);
  const fs::path dest = dir / fs::path(csv_path).filename();
  std::ofstream out(dest, std::ios::trunc);
  out << "label,cbr,snr_db,psnr_db,ms_ssim\n";
  for (const auto& p : points) {
    out << p.label << ',' << num(p.cbr) << ',' << num(p.snr_db) << ',' << num(p.psnr_db) << ',' << num(p.ms_ssim)
        << "\n";
  }
  return dest.string();
}

namespace {

/// Mean of finite values; +inf rows (lossless cells) are kept as +inf only if
/// all values are +inf.
double mean_metric(const std::vector<double>& v) {
  double acc = 0.0;
  int finite = 0;
  for (double x : v) {
    if (std::isfinite(x)) {
      acc += x;
      ++finite;
    }
  }
  if (finite == 0) return v.empty() ? std::numeric_limits<double>::quiet_NaN() : v.front();
  return acc / finite;
}

struct CellKey {
  double cbr, snr;
  bool operator<(const CellKey& o) const { return cbr != o.cbr ? cbr < o.cbr : snr < o.snr; }
};

}  // namespace

void write_report(const std::string& out_dir, const std::vector<SweepRow>& rows,
                  const std::vector<BaselinePoint>& baselines) {
  fs::create_directories(fs::path(out_dir) / "plots");

  std::map<CellKey, std::vector<double>> psnr_cells, ssimdb_cells;
  std::set<double> cbrs, snrs;
  for (const auto& r : rows) {
    psnr_cells[{r.cbr, r.snr_db}].push_back(r.psnr_db);
    ssimdb_cells[{r.cbr, r.snr_db}].push_back(r.ms_ssim_db);
    cbrs.insert(r.cbr);
    snrs.insert(r.snr_db);
  }

  std::map<std::string, std::vector<BaselinePoint>> baselines_by_label;
  for (const auto& p : baselines) baselines_by_label[p.label].push_back(p);

  auto plot_file = [&](const std::string& stem) { return (fs::path(out_dir) / "plots" / (stem + ".svg")).string(); };

  auto render = [&](bool vs_cbr, bool psnr_metric, double fixed) {
    const auto& cells = psnr_metric ? psnr_cells : ssimdb_cells;
    PlotSeries main;
    main.label = "videojscc";
    for (const auto& [key, vals] : cells) {
      const double x = vs_cbr ? key.cbr : key.snr;
      const double fixed_val = vs_cbr ? key.snr : key.cbr;
      if (fixed_val != fixed) continue;
      main.points.emplace_back(x, mean_metric(vals));
    }
    std::vector<PlotSeries> series{main};
    for (const auto& [label, pts] : baselines_by_label) {
      PlotSeries s;
      s.label = label;
      for (const auto& p : pts) {
        const double fixed_val = vs_cbr ? p.snr_db : p.cbr;
        if (fixed_val != fixed) continue;
        const double y = psnr_metric ? p.psnr_db : ms_ssim_db(p.ms_ssim);
        s.points.emplace_back(vs_cbr ? p.cbr : p.snr_db, y);
      }
      std::sort(s.points.begin(), s.points.end());
      if (!s.points.empty()) series.push_back(std::move(s));
    }
    std::ostringstream stem, title;
    const std::string metric = psnr_metric ? "psnr" : "msssim_db";
    const std::string metric_label = psnr_metric ? "PSNR (dB)" : "MS-SSIM (dB)";
    if (vs_cbr) {
      stem << metric << "_vs_cbr_snr" << fixed;
      title << metric_label << " vs CBR at SNR " << fixed << " dB";
      write_svg_line_plot(plot_file(stem.str()), title.str(), "CBR", metric_label, series);
    } else {
      stem << metric << "_vs_snr_cbr" << fixed;
      title << metric_label << " vs SNR at CBR " << fixed;
      write_svg_line_plot(plot_file(stem.str()), title.str(), "SNR (dB)", metric_label, series);
    }
  };

  for (double snr : snrs) {
    render(true, true, snr);
    render(true, false, snr);
  }
  for (double cbr : cbrs) {
    render(false, true, cbr);
    render(false, false, cbr);
  }

  std::ofstream summary(fs::path(out_dir) / "summary.txt", std::ios::trunc);
  summary << "cbr        snr_db    mean_psnr_db  mean_ms_ssim_db  cells\n";
  for (const auto& [key, vals] : psnr_cells) {
    summary << std::left << std::setw(11) << key.cbr << std::setw(10) << key.snr << std::setw(14)
            << mean_metric(vals) << std::setw(17) << mean_metric(ssimdb_cells[key]) << vals.size() << "\n";
  }
}

SweepResult run_sweep(const ExperimentSpec& spec) {
  spec.validate();
  fs::create_directories(spec.out_dir);

  const ModelConfig mc = read_checkpoint_config(spec.checkpoint);
  Model<float> model(mc);
  load_model(spec.checkpoint, model);
  const int gop_size = spec.gop_size > 0 ? spec.gop_size : mc.gop_size;

  ClipManifest manifest = ClipManifest::load(spec.manifest, gop_size);

  SweepResult result;
  for (std::size_t ci = 0; ci < manifest.clips().size(); ++ci) {
    const ClipInfo& clip = manifest.clips()[ci];
    const std::string clip_id = fs::path(clip.dir).filename().string();
    const int n_gops = std::min(spec.gops_per_clip, clip.frame_count / gop_size);
    for (int g = 0; g < n_gops; ++g) {
      const Tensor<float> frames = manifest.clip_frames(ci).slice0(g * gop_size, (g + 1) * gop_size);
      const VideoGop<float> gop{frames};
      const GopDims dims = gop.dims();
      for (double cbr : spec.cbr_grid) {
        for (double snr : spec.snr_grid) {
          for (std::uint64_t seed : spec.seeds) {
            try {
              const BandwidthBudget budget = BandwidthBudget::from_cbr(cbr, dims);
              ChannelConfig cc{spec.channel, snr, derive_seed(seed, 0x5beeull, ci, static_cast<std::uint64_t>(g))};
              const auto run = model.run(gop, budget, cc);
              SweepRow row;
              row.clip_id = clip_id;
              row.gop_index = g;
              row.cbr = cbr;
              row.snr_db = snr;
              row.seed = seed;
              row.psnr_db = run.report.quality.psnr_db;
              row.ms_ssim = run.report.quality.ms_ssim;
              row.ms_ssim_db = run.report.quality.ms_ssim_db;
              result.rows.push_back(std::move(row));
            } catch (const std::exception& e) {
              result.failures.push_back({clip_id, g, cbr, snr, seed, e.what()});
            }
          }
        }
      }
    }
  }
  sort_rows(result.rows);

  result.results_csv = (fs::path(spec.out_dir) / "results.csv").string();
  write_results_csv(result.results_csv, result.rows);
  if (!result.failures.empty()) {
    std::ofstream err(fs::path(spec.out_dir) / "errors.csv", std::ios::trunc);
    err << "clip_id,gop_index,cbr,snr_db,seed,message\n";
    for (const auto& f : result.failures) {
      std::string msg = f.message;
      std::replace(msg.begin(), msg.end(), ',', ';');
      err << f.clip_id << ',' << f.gop_index << ',' << num(f.cbr) << ',' << num(f.snr_db) << ',' << f.seed << ','
          << msg << "\n";
    }
  }

  std::vector<BaselinePoint> baselines;
  for (const auto& b : spec.baseline_csvs) {
    const auto pts = ingest_baseline(b);
    baselines.insert(baselines.end(), pts.begin(), pts.end());
  }
  write_report(spec.out_dir, result.rows, baselines);
  return result;
}

}  // namespace videojscc
