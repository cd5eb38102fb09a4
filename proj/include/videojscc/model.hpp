// Copyright (c) the videojscc authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0; see the LICENSE file.
//
// The neural transform pipeline: latent transform, feature encoder, common
// feature extraction, entropy-ranked variable-length coding, channel, and the
// receiver-side inverses. Forward inference is const and side-effect free;
// train_step runs the same pipeline with caching and hand-chained backward.

#ifndef VIDEOJSCC_MODEL_HPP
#define VIDEOJSCC_MODEL_HPP

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "videojscc/channel.hpp"
#include "videojscc/core_types.hpp"
#include "videojscc/entropy_vlc.hpp"
#include "videojscc/errors.hpp"
#include "videojscc/metrics.hpp"
#include "videojscc/nn.hpp"
#include "videojscc/rng.hpp"

namespace videojscc {

struct ModelConfig {
  int channel_dim = 128;    // latent / codeword channels
  int gop_size = 6;         // frames per transmitted group
  int resblock_depth = 3;   // residual blocks per stage
  double snr_train_db = 10.0;
  int hyper_dim = 0;        // entropy-model bottleneck channels; 0 = channel_dim

  int effective_hyper_dim() const { return hyper_dim > 0 ? hyper_dim : channel_dim; }

  bool operator==(const ModelConfig&) const = default;
};

/// Accounting and quality record for one transmitted GOP.
struct ChannelReport {
  double target_cbr = 0.0;
  double achieved_cbr = 0.0;
  double snr_db = 0.0;
  ChannelKind channel = ChannelKind::awgn;
  std::vector<std::int64_t> lengths;  // k_1..k_{N+1}
  std::int64_t side_symbols = 0;
  std::int64_t kept_symbols = 0;
  bool zero_vector_transmitted = false;
  // One channel use = one real-valued symbol; halve counts for complex uses.
  std::string symbol_unit = "real";
  QualityReport quality;
};

namespace detail {

/// One encoder stage: stride-2 downsampling convolution then residual blocks.
template <typename T>
struct DownStage {
  Conv2d<T> conv;
  std::vector<ResBlock<T>> blocks;

  DownStage() = default;
  DownStage(int in_ch, int out_ch, int k, int depth) : conv(in_ch, out_ch, k, 2, k / 2) {
    for (int i = 0; i < depth; ++i) blocks.emplace_back(out_ch);
  }
  void init(std::mt19937_64& rng) {
    conv.init(rng);
    for (auto& b : blocks) b.init(rng);
  }
  Tensor<T> forward(const Tensor<T>& x, bool train) {
    Tensor<T> y = conv.forward(x, train);
    for (auto& b : blocks) y = b.forward(y, train);
    return y;
  }
  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> g = gy;
    for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) g = it->backward(g);
    return conv.backward(g);
  }
  void register_params(ParamList<T>& out, const std::string& prefix) {
    conv.register_params(out, prefix + ".conv");
    for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].register_params(out, prefix + ".res" + std::to_string(i));
  }
  std::int64_t param_count() const {
    std::int64_t n = conv.param_count();
    for (const auto& b : blocks) n += b.param_count();
    return n;
  }
};

/// Mirror of DownStage: residual blocks at the low resolution, then a
/// stride-2 transposed convolution that exactly doubles the spatial size.
template <typename T>
struct UpStage {
  std::vector<ResBlock<T>> blocks;
  ConvTranspose2d<T> deconv;

  UpStage() = default;
  UpStage(int in_ch, int out_ch, int k, int depth) : deconv(in_ch, out_ch, k, 2, k / 2, 1) {
    for (int i = 0; i < depth; ++i) blocks.emplace_back(in_ch);
  }
  void init(std::mt19937_64& rng) {
    for (auto& b : blocks) b.init(rng);
    deconv.init(rng);
  }
  Tensor<T> forward(const Tensor<T>& x, bool train) {
    Tensor<T> y = x;
    for (auto& b : blocks) y = b.forward(y, train);
    return deconv.forward(y, train);
  }
  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> g = deconv.backward(gy);
    for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) g = it->backward(g);
    return g;
  }
  void register_params(ParamList<T>& out, const std::string& prefix) {
    for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].register_params(out, prefix + ".res" + std::to_string(i));
    deconv.register_params(out, prefix + ".deconv");
  }
  std::int64_t param_count() const {
    std::int64_t n = deconv.param_count();
    for (const auto& b : blocks) n += b.param_count();
    return n;
  }
};

}  // namespace detail

/// Per-step training statistics.
struct TrainStepStats {
  double loss = 0.0;       // lambda * (cbr + beta * rate/(N*m)) + mse
  double mse = 0.0;
  double rate_bits = 0.0;  // mean per GOP
  double cbr = 0.0;        // mean achieved over the batch
};

template <typename T>
class Model {
 public:
  explicit Model(const ModelConfig& cfg = {}) : cfg_(cfg) {
    const int c = cfg.channel_dim;
    const int d = cfg.resblock_depth;
    latent_ = detail::DownStage<T>(3, c, 5, d);
    for (int i = 0; i < 3; ++i) encoder_[i] = detail::DownStage<T>(c, c, 3, d);
    extract1_ = Conv2d<T>(c, c, 3, 1, 1);
    extract2_ = Conv2d<T>(c, c, 3, 1, 1);
    codec_ = EntropyCodec<T>(c, cfg.effective_hyper_dim());
    for (int i = 0; i < 3; ++i) decoder_[i] = detail::UpStage<T>(c, c, 3, d);
    inversion_ = detail::UpStage<T>(c, 3, 5, d);
  }

  void init(std::uint64_t seed) {
    std::mt19937_64 rng = make_rng(seed);
    latent_.init(rng);
    for (auto& s : encoder_) s.init(rng);
    extract1_.init(rng);
    extract2_.init(rng);
    codec_.init(rng);
    for (auto& s : decoder_) s.init(rng);
    inversion_.init(rng);
  }

  const ModelConfig& config() const { return cfg_; }

  /// Parameter views are rebuilt on every call so they stay valid after the
  /// model object is copied or moved.
  const ParamList<T>& params() {
    rebuild_param_list();
    return params_;
  }

  // --- individual pipeline operations (inference mode, side-effect free) ---

  /// One stride-2 convolution and resblock_depth residual blocks; [N,3,H,W]
  /// to [N,C,H/2,W/2].
  Tensor<T> latent_transform(const Tensor<T>& gop_frames) const {
    return const_cast<Model*>(this)->latent_.forward(gop_frames, false);
  }

  /// Three downsampling stages; latent [N,C,H/2,W/2] to features
  /// [N,C,H/16,W/16].
  Tensor<T> jscc_encode(const Tensor<T>& latent) const {
    Tensor<T> y = latent;
    for (auto& s : const_cast<Model*>(this)->encoder_) y = s.forward(y, false);
    return y;
  }

  /// Splits features into one common map (a learned transform of the frame
  /// mean) and per-frame residuals. common + individual[n] == features[n]
  /// holds by construction.
  FeatureDecomposition<T> extract_common(const Tensor<T>& features) const {
    const int n = features.dim(0);
    Tensor<T> mean({1, features.dim(1), features.dim(2), features.dim(3)});
    const std::int64_t per = mean.numel();
    for (int f = 0; f < n; ++f)
      for (std::int64_t i = 0; i < per; ++i) mean[i] += features[f * per + i];
    mean *= T(1) / static_cast<T>(n);
    Tensor<T> common = const_cast<Model*>(this)->extractor_forward(mean, false);
    FeatureDecomposition<T> d;
    d.common = common;
    d.individual = Tensor<T>(features.shape());
    for (int f = 0; f < n; ++f)
      for (std::int64_t i = 0; i < per; ++i) d.individual[f * per + i] = features[f * per + i] - common[i];
    return d;
  }

  /// Receiver-side inverse of the split: broadcast-add the common map back
  /// onto every individual map.
  static Tensor<T> recombine(const FeatureDecomposition<T>& d) {
    if (d.common.dim(1) != d.individual.dim(1) || d.common.dim(2) != d.individual.dim(2) ||
        d.common.dim(3) != d.individual.dim(3))
      throw ShapeError("recombine: common/individual shape mismatch");
    Tensor<T> y(d.individual.shape());
    const std::int64_t per = d.common.numel();
    for (int f = 0; f < d.individual.dim(0); ++f)
      for (std::int64_t i = 0; i < per; ++i) y[f * per + i] = d.common[i] + d.individual[f * per + i];
    return y;
  }

  /// Mirror of jscc_encode; features back to latent scale (x8 spatially).
  Tensor<T> jscc_decode(const Tensor<T>& features_hat) const {
    Tensor<T> y = features_hat;
    for (auto& s : const_cast<Model*>(this)->decoder_) y = s.forward(y, false);
    return y;
  }

  /// Mirror of latent_transform; latent back to intensities, clamped to
  /// [0,1] (inference only; training leaves the output unclamped).
  Tensor<T> latent_invert(const Tensor<T>& latent_hat) const {
    Tensor<T> y = const_cast<Model*>(this)->inversion_.forward(latent_hat, false);
    for (std::int64_t i = 0; i < y.numel(); ++i) y[i] = std::clamp(y[i], T(0), T(1));
    return y;
  }

  /// Quantized side info and per-element Gaussian scale for a decomposition.
  std::pair<SideInfo, Tensor<T>> entropy_analyze(const FeatureDecomposition<T>& decomp) const {
    Model* self = const_cast<Model*>(this);
    const Tensor<T> stack = stack_decomposition(decomp);
    const Tensor<T> z = self->codec_.encode(stack, false);
    SideInfo side{quantize_code(z)};
    Tensor<T> sigma =
        self->codec_.decode_sigma(side.hyper_code.template cast<T>(), stack.dim(2), stack.dim(3), false);
    return {std::move(side), std::move(sigma)};
  }

  /// The keep-mask is a pure function of (side info, feature dims, budget):
  /// transmitter and receiver both call this and obtain identical masks.
  KeepMask mask_from_side_info(const SideInfo& side, int feat_h, int feat_w, std::int64_t kept_budget) const {
    Model* self = const_cast<Model*>(this);
    Tensor<T> sigma = self->codec_.decode_sigma(side.hyper_code.template cast<T>(), feat_h, feat_w, false);
    const std::int64_t common_numel = static_cast<std::int64_t>(cfg_.channel_dim) * feat_h * feat_w;
    return build_mask(mask_scores(sigma, common_numel), kept_budget);
  }

  // --- end-to-end paths ---

  struct PipelineResult {
    VideoGop<T> gop_hat;
    ChannelReport report;
    SymbolStream<T> stream;
    SideInfo side;
    KeepMask mask;
  };

  /// Full transmit-receive pass for one GOP at a fixed symbol budget.
  PipelineResult run(const VideoGop<T>& gop, const BandwidthBudget& budget, const ChannelConfig& channel) const {
    Model* self = const_cast<Model*>(this);
    const GopDims dims = gop.dims();
    const Tensor<T> features = jscc_encode(latent_transform(gop.frames));
    FeatureDecomposition<T> decomp = extract_common(features);
    auto [side, sigma] = entropy_analyze(decomp);

    const std::int64_t total_elements = decomp.element_count();
    const std::int64_t side_cost = side.cost_symbols();
    if (budget.total_symbols < side_cost) {
      const double min_cbr = static_cast<double>(side_cost) / static_cast<double>(dims.total_dim());
      std::ostringstream os;
      os << "budget of " << budget.total_symbols << " symbols cannot cover " << side_cost
         << " side-info symbols; minimum feasible CBR is " << min_cbr;
      throw InfeasibleBudgetError(os.str(), min_cbr);
    }
    const std::int64_t kept = budget.total_symbols - side_cost;
    if (kept > total_elements) {
      std::ostringstream os;
      os << "budget keeps " << kept << " elements but only " << total_elements << " exist; maximum CBR is "
         << static_cast<double>(total_elements + side_cost) / static_cast<double>(dims.total_dim());
      throw RangeError(os.str());
    }

    const KeepMask mask = mask_from_side_info(side, features.dim(2), features.dim(3), kept);
    SymbolStream<T> stream = assemble_stream(pack(decomp, mask), side);

    // Channel: per-vector power normalization and noise on the feature
    // payload; side info is delivered error-free by construction.
    bool zero_flag = false;
    SymbolStream<T> received = stream;
    for (std::size_t v = 0; v < stream.vectors.size(); ++v) {
      const bool is_tail = (v + 1 == stream.vectors.size());
      const std::size_t skip = is_tail ? static_cast<std::size_t>(side_cost) : 0;
      std::vector<T> payload(stream.vectors[v].begin() + skip, stream.vectors[v].end());
      if (payload.empty()) continue;
      bool degenerate = false;
      std::vector<T> norm = power_normalize(payload, /*strict=*/false, &degenerate);
      zero_flag = zero_flag || degenerate;
      ChannelConfig cc = channel;
      cc.seed = derive_seed(channel.seed, 0x7e1eC0DEull, v);
      std::vector<T> out = degenerate ? norm : transmit(norm, cc);
      std::copy(out.begin(), out.end(), received.vectors[v].begin() + skip);
    }

    const KeepMask rx_mask = mask_from_side_info(side, features.dim(2), features.dim(3), kept);
    FeatureDecomposition<T> decomp_hat =
        unpack(received, rx_mask, decomp.common.shape(), decomp.individual.shape());
    const Tensor<T> gop_hat_frames = latent_invert(self->jscc_decode(recombine(decomp_hat)));

    PipelineResult r;
    r.gop_hat = VideoGop<T>{gop_hat_frames};
    r.stream = std::move(stream);
    r.side = std::move(side);
    r.mask = mask;
    r.report.target_cbr = budget.target_cbr;
    r.report.achieved_cbr = compute_cbr(r.stream, dims);
    r.report.snr_db = channel.snr_db;
    r.report.channel = channel.kind;
    r.report.lengths = r.stream.lengths;
    r.report.side_symbols = side_cost;
    r.report.kept_symbols = kept;
    r.report.zero_vector_transmitted = zero_flag;
    r.report.quality = measure_quality(gop.frames, gop_hat_frames, r.report.achieved_cbr, channel.snr_db);
    return r;
  }

  /// One training forward+backward over a batch [B,N,3,H,W]. Parameter
  /// gradients are accumulated into the model; the caller owns the optimizer
  /// step. budgets[b] is the total symbol budget for GOP b.
  TrainStepStats train_step(const Tensor<T>& batch, const std::vector<std::int64_t>& budgets, double snr_db,
                            ChannelKind channel_kind, std::uint64_t step_seed, double lambda, double beta);

  void register_all_params() { rebuild_param_list(); }

  std::int64_t transmitter_param_count() const {
    std::int64_t n = latent_.param_count();
    for (const auto& s : encoder_) n += s.param_count();
    n += extract1_.param_count() + extract2_.param_count();
    n += codec_.param_count();
    return n;
  }
  std::int64_t receiver_param_count() const {
    std::int64_t n = inversion_.param_count();
    for (const auto& s : decoder_) n += s.param_count();
    return n;
  }

  /// Side-info element count for a GOP of the given dims (used for
  /// feasibility checks without running the encoder).
  std::int64_t side_cost_for(const GopDims& dims) const {
    const int h = dims.height / kSpatialFactor;
    const int w = dims.width / kSpatialFactor;
    auto ceil3 = [](int v) {
      for (int i = 0; i < 3; ++i) v = (v + 1) / 2;
      return v;
    };
    return static_cast<std::int64_t>(dims.frames + 1) * cfg_.effective_hyper_dim() * ceil3(h) * ceil3(w);
  }

  std::int64_t feature_elements_for(const GopDims& dims) const {
    const int h = dims.height / kSpatialFactor;
    const int w = dims.width / kSpatialFactor;
    return static_cast<std::int64_t>(dims.frames + 1) * cfg_.channel_dim * h * w;
  }

  /// Largest representable CBR for the given dims (all elements + side info).
  double full_rate_cbr(const GopDims& dims) const {
    return static_cast<double>(feature_elements_for(dims) + side_cost_for(dims)) /
           static_cast<double>(dims.total_dim());
  }
  double min_feasible_cbr(const GopDims& dims) const {
    return static_cast<double>(side_cost_for(dims)) / static_cast<double>(dims.total_dim());
  }

 private:
  Tensor<T> extractor_forward(const Tensor<T>& x, bool train) {
    Tensor<T> y = erelu1_.forward(extract1_.forward(x, train), train);
    return erelu2_.forward(extract2_.forward(y, train), train);
  }
  Tensor<T> extractor_backward(const Tensor<T>& gy) {
    return extract1_.backward(erelu1_.backward(extract2_.backward(erelu2_.backward(gy))));
  }

  /// Stacks a decomposition as [1+N, C, h, w]: common map first.
  static Tensor<T> stack_decomposition(const FeatureDecomposition<T>& d) {
    Tensor<T> s({1 + d.individual.dim(0), d.individual.dim(1), d.individual.dim(2), d.individual.dim(3)});
    s.set_slice0(0, d.common);
    s.set_slice0(1, d.individual);
    return s;
  }

  void rebuild_param_list() {
    params_.clear();
    latent_.register_params(params_, "latent");
    for (int i = 0; i < 3; ++i) encoder_[i].register_params(params_, "encoder.stage" + std::to_string(i));
    extract1_.register_params(params_, "extractor.conv1");
    extract2_.register_params(params_, "extractor.conv2");
    codec_.register_params(params_, "entropy");
    for (int i = 0; i < 3; ++i) decoder_[i].register_params(params_, "decoder.stage" + std::to_string(i));
    inversion_.register_params(params_, "inversion");
  }

  ModelConfig cfg_;
  detail::DownStage<T> latent_;
  detail::DownStage<T> encoder_[3];
  Conv2d<T> extract1_, extract2_;
  ReLU<T> erelu1_, erelu2_;
  EntropyCodec<T> codec_;
  detail::UpStage<T> decoder_[3];
  detail::UpStage<T> inversion_;
  ParamList<T> params_;
};

// ---------------------------------------------------------------------------
// Training pass
// ---------------------------------------------------------------------------

template <typename T>
TrainStepStats Model<T>::train_step(const Tensor<T>& batch, const std::vector<std::int64_t>& budgets,
                                    double snr_db, ChannelKind channel_kind, std::uint64_t step_seed,
                                    double lambda, double beta) {
  const int B = batch.dim(0), N = batch.dim(1);
  const int H = batch.dim(3), W = batch.dim(4);
  const GopDims dims{N, H, W};

  // ---- forward ----
  const Tensor<T> frames = batch.reshaped({B * N, 3, H, W});
  Tensor<T> latent = latent_.forward(frames, true);
  Tensor<T> features = latent;
  for (auto& s : encoder_) features = s.forward(features, true);
  const int C = features.dim(1), fh = features.dim(2), fw = features.dim(3);
  const std::int64_t per_map = static_cast<std::int64_t>(C) * fh * fw;

  // Per-GOP frame means -> extractor -> common maps.
  Tensor<T> means({B, C, fh, fw});
  for (int b = 0; b < B; ++b)
    for (int n = 0; n < N; ++n)
      for (std::int64_t i = 0; i < per_map; ++i) means[b * per_map + i] += features[(b * N + n) * per_map + i];
  means *= T(1) / static_cast<T>(N);
  Tensor<T> commons = extractor_forward(means, true);

  std::vector<FeatureDecomposition<T>> decomp(static_cast<std::size_t>(B));
  for (int b = 0; b < B; ++b) {
    decomp[b].common = commons.slice0(b, b + 1);
    decomp[b].individual = Tensor<T>({N, C, fh, fw});
    for (int n = 0; n < N; ++n)
      for (std::int64_t i = 0; i < per_map; ++i)
        decomp[b].individual[n * per_map + i] = features[(b * N + n) * per_map + i] - commons[b * per_map + i];
  }

  // Entropy model over stacked maps, with additive-uniform quantization noise.
  const int M = N + 1;
  Tensor<T> stack({B * M, C, fh, fw});
  for (int b = 0; b < B; ++b) {
    stack.set_slice0(b * M, decomp[b].common);
    stack.set_slice0(b * M + 1, decomp[b].individual);
  }
  Tensor<T> z = codec_.encode(stack, true);
  {
    std::mt19937_64 qrng = make_rng(derive_seed(step_seed, 0x9a1154e1ull));
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (std::int64_t i = 0; i < z.numel(); ++i) z[i] += static_cast<T>(u(qrng));
  }
  Tensor<T> sigma = codec_.decode_sigma(z, fh, fw, true);

  // Rate surrogate (value + raw gradients, scaled later).
  std::vector<FeatureDecomposition<T>> rate_gw(static_cast<std::size_t>(B));
  std::vector<Tensor<T>> rate_gsigma(static_cast<std::size_t>(B));
  std::vector<Tensor<T>> sigma_gop(static_cast<std::size_t>(B));
  double rate_bits_total = 0.0;
  for (int b = 0; b < B; ++b) {
    sigma_gop[b] = sigma.slice0(b * M, (b + 1) * M);
    rate_gw[b].common = Tensor<T>(decomp[b].common.shape());
    rate_gw[b].individual = Tensor<T>(decomp[b].individual.shape());
    rate_gsigma[b] = Tensor<T>(sigma_gop[b].shape());
    std::mt19937_64 rrng = make_rng(derive_seed(step_seed, 0x4a7eb175ull, static_cast<std::uint64_t>(b)));
    rate_bits_total += rate_loss(decomp[b], sigma_gop[b], &rrng, &rate_gw[b], &rate_gsigma[b]);
  }

  // Masking, packing, channel. Per GOP bookkeeping for backward.
  struct VectorTrace {
    std::vector<T> pre_norm;
    double inv_norm = 0.0;   // sqrt(k)/||x||
    bool degenerate = false;
  };
  std::vector<KeepMask> masks(static_cast<std::size_t>(B));
  std::vector<std::vector<VectorTrace>> traces(static_cast<std::size_t>(B));
  std::vector<FeatureDecomposition<T>> decomp_hat(static_cast<std::size_t>(B));
  double cbr_total = 0.0;
  const std::int64_t side_per_gop = z.numel() / B;  // M maps of Ch*hh*wh side symbols each
  const double sigma_noise = std::sqrt(noise_variance(snr_db));
  for (int b = 0; b < B; ++b) {
    const std::int64_t budget = budgets[static_cast<std::size_t>(b)];
    if (budget < side_per_gop || budget - side_per_gop > decomp[b].element_count())
      throw InfeasibleBudgetError("train_step: infeasible budget " + std::to_string(budget),
                                  static_cast<double>(side_per_gop) / static_cast<double>(dims.total_dim()));
    const std::int64_t kept = budget - side_per_gop;
    masks[b] = build_mask(mask_scores(sigma_gop[b], per_map), kept);
    PackedFeatures<T> packed = pack(decomp[b], masks[b]);

    // Normalize + AWGN per vector (individual payloads and the common one).
    std::mt19937_64 crng = make_rng(derive_seed(step_seed, 0xc9a22e11ull, static_cast<std::uint64_t>(b)));
    std::normal_distribution<double> noise(0.0, sigma_noise);
    auto through_channel = [&](std::vector<T>& vec, VectorTrace& tr) {
      tr.pre_norm = vec;
      if (vec.empty()) return;
      long double sq = 0.0L;
      for (const T& v : vec) sq += static_cast<long double>(v) * v;
      if (sq == 0.0L) {
        tr.degenerate = true;
        return;  // transmit silence
      }
      tr.inv_norm = static_cast<double>(std::sqrt(static_cast<long double>(vec.size()) / sq));
      for (auto& v : vec) {
        v = static_cast<T>(v * tr.inv_norm);
        if (channel_kind == ChannelKind::awgn) v += static_cast<T>(noise(crng));
      }
    };
    traces[b].resize(static_cast<std::size_t>(N) + 1);
    for (int n = 0; n < N; ++n) through_channel(packed.individual[static_cast<std::size_t>(n)], traces[b][n]);
    through_channel(packed.common, traces[b][static_cast<std::size_t>(N)]);

    // Receiver: scatter back to full dimension.
    decomp_hat[b].common = Tensor<T>(decomp[b].common.shape());
    decomp_hat[b].individual = Tensor<T>(decomp[b].individual.shape());
    for (std::int64_t i = 0, cc = 0; i < per_map; ++i)
      if (masks[b].keep[static_cast<std::size_t>(i)]) decomp_hat[b].common[i] = packed.common[cc++];
    for (int n = 0; n < N; ++n) {
      std::size_t cursor = 0;
      for (std::int64_t j = 0; j < per_map; ++j) {
        const std::int64_t flat = per_map + n * per_map + j;
        if (masks[b].keep[static_cast<std::size_t>(flat)])
          decomp_hat[b].individual[n * per_map + j] = packed.individual[static_cast<std::size_t>(n)][cursor++];
      }
    }
    cbr_total += static_cast<double>(budget) / static_cast<double>(dims.total_dim());
  }

  // Recombine and decode.
  Tensor<T> features_hat({B * N, C, fh, fw});
  for (int b = 0; b < B; ++b)
    for (int n = 0; n < N; ++n)
      for (std::int64_t i = 0; i < per_map; ++i)
        features_hat[(b * N + n) * per_map + i] = decomp_hat[b].common[i] + decomp_hat[b].individual[n * per_map + i];
  Tensor<T> latent_hat = features_hat;
  for (auto& s : decoder_) latent_hat = s.forward(latent_hat, true);
  Tensor<T> out = inversion_.forward(latent_hat, true);  // unclamped during training

  double mse_total = 0.0;
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    const double d = static_cast<double>(out[i]) - static_cast<double>(frames[i]);
    mse_total += d * d;
  }
  const double mse_mean = mse_total / static_cast<double>(out.numel());

  // ---- backward ----
  const double rate_scale = lambda * beta / (static_cast<double>(dims.total_dim()) * B);
  Tensor<T> gout(out.shape());
  const double mse_coeff = 2.0 / static_cast<double>(out.numel());
  for (std::int64_t i = 0; i < out.numel(); ++i)
    gout[i] = static_cast<T>(mse_coeff * (static_cast<double>(out[i]) - static_cast<double>(frames[i])));

  Tensor<T> gfeat_hat = inversion_.backward(gout);
  for (auto it = std::rbegin(decoder_); it != std::rend(decoder_); ++it) gfeat_hat = it->backward(gfeat_hat);

  // Through recombine / scatter / channel / gather back onto the decomposition.
  std::vector<FeatureDecomposition<T>> gdecomp(static_cast<std::size_t>(B));
  Tensor<T> gsigma_stack(sigma.shape());
  for (int b = 0; b < B; ++b) {
    gdecomp[b].common = Tensor<T>(decomp[b].common.shape());
    gdecomp[b].individual = Tensor<T>(decomp[b].individual.shape());

    FeatureDecomposition<T> ghat;
    ghat.common = Tensor<T>(decomp[b].common.shape());
    ghat.individual = Tensor<T>({N, C, fh, fw});
    for (int n = 0; n < N; ++n)
      for (std::int64_t i = 0; i < per_map; ++i) {
        const T g = gfeat_hat[(b * N + n) * per_map + i];
        ghat.individual[n * per_map + i] = g;
        ghat.common[i] += g;
      }

    // Gather vector gradients in the same order unpack scattered them, then
    // push each through the power-normalization Jacobian.
    auto backward_vector = [&](const std::vector<T>& gvec, const VectorTrace& tr, std::vector<T>& gpre) {
      gpre.assign(tr.pre_norm.size(), T(0));
      if (tr.pre_norm.empty() || tr.degenerate) return;
      long double dot = 0.0L, sq = 0.0L;
      for (std::size_t i = 0; i < gvec.size(); ++i) {
        dot += static_cast<long double>(gvec[i]) * tr.pre_norm[i];
        sq += static_cast<long double>(tr.pre_norm[i]) * tr.pre_norm[i];
      }
      const double proj = static_cast<double>(dot / sq);
      for (std::size_t i = 0; i < gvec.size(); ++i)
        gpre[i] = static_cast<T>(tr.inv_norm * (static_cast<double>(gvec[i]) - proj * tr.pre_norm[i]));
    };

    std::vector<T> gvec, gpre;
    for (int n = 0; n < N; ++n) {
      gvec.clear();
      for (std::int64_t j = 0; j < per_map; ++j) {
        const std::int64_t flat = per_map + n * per_map + j;
        if (masks[b].keep[static_cast<std::size_t>(flat)]) gvec.push_back(ghat.individual[n * per_map + j]);
      }
      backward_vector(gvec, traces[b][n], gpre);
      std::size_t cursor = 0;
      for (std::int64_t j = 0; j < per_map; ++j) {
        const std::int64_t flat = per_map + n * per_map + j;
        if (masks[b].keep[static_cast<std::size_t>(flat)]) gdecomp[b].individual[n * per_map + j] += gpre[cursor++];
      }
    }
    gvec.clear();
    for (std::int64_t i = 0; i < per_map; ++i)
      if (masks[b].keep[static_cast<std::size_t>(i)]) gvec.push_back(ghat.common[i]);
    backward_vector(gvec, traces[b][static_cast<std::size_t>(N)], gpre);
    {
      std::size_t cursor = 0;
      for (std::int64_t i = 0; i < per_map; ++i)
        if (masks[b].keep[static_cast<std::size_t>(i)]) gdecomp[b].common[i] += gpre[cursor++];
    }

    // Rate-loss contributions.
    const T rs = static_cast<T>(rate_scale);
    for (std::int64_t i = 0; i < per_map; ++i) gdecomp[b].common[i] += rs * rate_gw[b].common[i];
    for (std::int64_t i = 0; i < gdecomp[b].individual.numel(); ++i)
      gdecomp[b].individual[i] += rs * rate_gw[b].individual[i];
    for (std::int64_t i = 0; i < rate_gsigma[b].numel(); ++i)
      gsigma_stack[b * M * per_map + i] = rs * rate_gsigma[b][i];
  }

  // Sigma path through the hyper codec back to the stacked decomposition.
  Tensor<T> gstack = codec_.backward(gsigma_stack);
  for (int b = 0; b < B; ++b) {
    for (std::int64_t i = 0; i < per_map; ++i) gdecomp[b].common[i] += gstack[(b * M) * per_map + i];
    for (int n = 0; n < N; ++n)
      for (std::int64_t i = 0; i < per_map; ++i)
        gdecomp[b].individual[n * per_map + i] += gstack[(b * M + 1 + n) * per_map + i];
  }

  // Decomposition backward: individual[n] = features[n] - common,
  // common = extractor(mean(features)).
  Tensor<T> gfeatures({B * N, C, fh, fw});
  Tensor<T> gcommons({B, C, fh, fw});
  for (int b = 0; b < B; ++b) {
    for (std::int64_t i = 0; i < per_map; ++i) gcommons[b * per_map + i] = gdecomp[b].common[i];
    for (int n = 0; n < N; ++n)
      for (std::int64_t i = 0; i < per_map; ++i) {
        const T g = gdecomp[b].individual[n * per_map + i];
        gfeatures[(b * N + n) * per_map + i] += g;
        gcommons[b * per_map + i] -= g;
      }
  }
  Tensor<T> gmeans = extractor_backward(gcommons);
  const T inv_n = T(1) / static_cast<T>(N);
  for (int b = 0; b < B; ++b)
    for (int n = 0; n < N; ++n)
      for (std::int64_t i = 0; i < per_map; ++i) gfeatures[(b * N + n) * per_map + i] += inv_n * gmeans[b * per_map + i];

  Tensor<T> g = gfeatures;
  for (auto it = std::rbegin(encoder_); it != std::rend(encoder_); ++it) g = it->backward(g);
  latent_.backward(g);

  TrainStepStats stats;
  stats.mse = mse_mean;
  stats.rate_bits = rate_bits_total / B;
  stats.cbr = cbr_total / B;
  stats.loss = lambda * (stats.cbr + beta * stats.rate_bits / static_cast<double>(dims.total_dim())) + stats.mse;
  return stats;
}

}  // namespace videojscc

#endif  // VIDEOJSCC_MODEL_HPP
