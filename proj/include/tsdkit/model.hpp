/* Copyright 2026 The tsdkit Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// The detection model: a ConvNeXt-style temporal encoder applied to both the
// mixture and the reference clip, a fusion stage that conditions mixture
// frames on the reference, a BiGRU, and two output heads:
//
//   * detect: per-frame logit for "the reference's sound is active here"
//   * tag: clip-level class logits for the reference embedding (auxiliary)
//
// With share_encoder = true (the default, "unified") the same encoder weights
// process both inputs and gradients from both paths accumulate into one set
// of parameters. share_encoder = false keeps a separate reference branch.

#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "tsdkit/nn.hpp"
#include "tsdkit/rng.hpp"

namespace tsd {

// ---------------------------------------------------------------------------
// Configs
// ---------------------------------------------------------------------------

struct EncoderConfig {
  int n_mels = 224;
  std::vector<int> dims = {96, 192, 384, 768};
  std::vector<int> depths = {3, 3, 9, 3};
  std::vector<int> strides = {4, 2, 2, 2};
  int dw_kernel = 7;

  int feature_dim() const { return dims.back(); }
  int downsample() const {
    return std::accumulate(strides.begin(), strides.end(), 1, std::multiplies<int>());
  }

  void validate() const {
    if (dims.empty() || dims.size() != depths.size() || dims.size() != strides.size())
      throw std::invalid_argument("EncoderConfig: dims/depths/strides must be same nonzero size");
    for (std::size_t i = 0; i < dims.size(); ++i)
      if (dims[i] <= 0 || depths[i] <= 0 || strides[i] <= 0)
        throw std::invalid_argument("EncoderConfig: dims/depths/strides must be positive");
    if (n_mels <= 0) throw std::invalid_argument("EncoderConfig: n_mels must be positive");
    if (dw_kernel <= 0 || dw_kernel % 2 == 0)
      throw std::invalid_argument("EncoderConfig: dw_kernel must be odd and positive");
  }

  // Small config used throughout the tests: two stages of two blocks at
  // width 96, total temporal downsample 4.
  static EncoderConfig tiny(int n_mels) {
    EncoderConfig c;
    c.n_mels = n_mels;
    c.dims = {96, 96};
    c.depths = {2, 2};
    c.strides = {2, 2};
    return c;
  }

  static EncoderConfig base(int n_mels = 224) {
    EncoderConfig c;
    c.n_mels = n_mels;
    return c;
  }
};

enum class FusionKind { kMultiply, kFilm, kCrossAttention };

inline std::string to_string(FusionKind k) {
  switch (k) {
    case FusionKind::kMultiply: return "multiply";
    case FusionKind::kFilm: return "film";
    case FusionKind::kCrossAttention: return "cross_attention";
  }
  throw std::logic_error("unreachable");
}

inline FusionKind fusion_kind_from_string(const std::string& s) {
  if (s == "multiply") return FusionKind::kMultiply;
  if (s == "film") return FusionKind::kFilm;
  if (s == "cross_attention") return FusionKind::kCrossAttention;
  throw std::invalid_argument("unknown fusion kind: " + s);
}

struct FusionConfig {
  FusionKind kind = FusionKind::kMultiply;
  // Width of the projected space the two streams meet in. Must be a multiple
  // of the encoder feature dim; the ratio is the feature-pool factor that
  // brings the fused stream back down to the encoder width.
  int projected_dim = 3072;
  int heads = 4;  // cross-attention only
};

struct ModelConfig {
  EncoderConfig encoder;
  FusionConfig fusion;
  int n_classes = 10;
  bool share_encoder = true;

  void validate() const {
    encoder.validate();
    const int f = encoder.feature_dim();
    if (n_classes <= 0) throw std::invalid_argument("ModelConfig: n_classes must be positive");
    if (f % 2 != 0)
      throw std::invalid_argument("ModelConfig: feature dim must be even for the BiGRU");
    if (fusion.projected_dim <= 0 || fusion.projected_dim % f != 0)
      throw std::invalid_argument(
          "ModelConfig: projected_dim must be a positive multiple of the encoder feature dim");
    if (fusion.kind == FusionKind::kCrossAttention &&
        (fusion.heads <= 0 || fusion.projected_dim % fusion.heads != 0))
      throw std::invalid_argument("ModelConfig: projected_dim must be divisible by heads");
  }

  static ModelConfig tiny(int n_mels, FusionKind kind = FusionKind::kMultiply,
                          int n_classes = 10) {
    ModelConfig c;
    c.encoder = EncoderConfig::tiny(n_mels);
    c.fusion.kind = kind;
    c.fusion.projected_dim = 384;
    c.fusion.heads = 4;
    c.n_classes = n_classes;
    return c;
  }
};

inline void to_json(nlohmann::json& j, const EncoderConfig& c) {
  j = nlohmann::json{{"n_mels", c.n_mels}, {"dims", c.dims},       {"depths", c.depths},
                     {"strides", c.strides}, {"dw_kernel", c.dw_kernel}};
}

inline void from_json(const nlohmann::json& j, EncoderConfig& c) {
  j.at("n_mels").get_to(c.n_mels);
  j.at("dims").get_to(c.dims);
  j.at("depths").get_to(c.depths);
  j.at("strides").get_to(c.strides);
  j.at("dw_kernel").get_to(c.dw_kernel);
}

inline void to_json(nlohmann::json& j, const FusionConfig& c) {
  j = nlohmann::json{
      {"kind", to_string(c.kind)}, {"projected_dim", c.projected_dim}, {"heads", c.heads}};
}

inline void from_json(const nlohmann::json& j, FusionConfig& c) {
  c.kind = fusion_kind_from_string(j.at("kind").get<std::string>());
  j.at("projected_dim").get_to(c.projected_dim);
  j.at("heads").get_to(c.heads);
}

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"encoder", c.encoder},
                     {"fusion", c.fusion},
                     {"n_classes", c.n_classes},
                     {"share_encoder", c.share_encoder}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  j.at("encoder").get_to(c.encoder);
  j.at("fusion").get_to(c.fusion);
  j.at("n_classes").get_to(c.n_classes);
  j.at("share_encoder").get_to(c.share_encoder);
}

// ---------------------------------------------------------------------------
// ConvNeXt-style block: depthwise temporal conv, LayerNorm, pointwise MLP
// with 4x expansion and GELU, plus a residual connection.
// ---------------------------------------------------------------------------

class ConvNeXtBlock {
 public:
  ConvNeXtBlock() = default;
  ConvNeXtBlock(const std::string& name, int dim, int dw_kernel)
      : dw_(name + ".dw", dim, dw_kernel), ln_(name + ".ln", dim),
        pw1_(name + ".pw1", dim, 4 * dim), pw2_(name + ".pw2", 4 * dim, dim) {}

  void init(Rng& rng) {
    dw_.init(rng);
    ln_.init(rng);
    pw1_.init(rng);
    pw2_.init(rng);
  }

  struct Cache {
    DepthwiseConv1d::Cache dw;
    LayerNorm::Cache ln;
    Linear::Cache pw1, pw2;
    Eigen::MatrixXd gelu_in;
  };

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Cache& c) const {
    Eigen::MatrixXd h = dw_.forward(x, c.dw);
    h = ln_.forward(h, c.ln);
    h = pw1_.forward(h, c.pw1);
    c.gelu_in = h;
    h = gelu(h);
    h = pw2_.forward(h, c.pw2);
    return x + h;
  }

  Eigen::MatrixXd backward(const Eigen::MatrixXd& dy, Cache& c) {
    Eigen::MatrixXd dh = pw2_.backward(dy, c.pw2);
    dh = gelu_backward(dh, c.gelu_in);
    dh = pw1_.backward(dh, c.pw1);
    dh = ln_.backward(dh, c.ln);
    dh = dw_.backward(dh, c.dw);
    return dy + dh;
  }

  void collect(ParamRegistry& r) {
    dw_.collect(r);
    ln_.collect(r);
    pw1_.collect(r);
    pw2_.collect(r);
  }

 private:
  DepthwiseConv1d dw_;
  LayerNorm ln_;
  Linear pw1_, pw2_;
};

// ---------------------------------------------------------------------------
// Encoder: alternating patch downsamplers and ConvNeXt blocks, then a final
// LayerNorm. Input is the log-mel matrix (T_spec x n_mels); output is
// T x feature_dim with T = ceil(T_spec / downsample()).
// ---------------------------------------------------------------------------

class Encoder {
 public:
  Encoder() = default;
  Encoder(const std::string& name, const EncoderConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    int prev = cfg.n_mels;
    for (std::size_t s = 0; s < cfg.dims.size(); ++s) {
      const std::string stage = name + ".stage" + std::to_string(s);
      downs_.emplace_back(stage + ".down", prev, cfg.dims[s], cfg.strides[s]);
      std::vector<ConvNeXtBlock> blocks;
      for (int b = 0; b < cfg.depths[s]; ++b)
        blocks.emplace_back(stage + ".block" + std::to_string(b), cfg.dims[s], cfg.dw_kernel);
      stages_.push_back(std::move(blocks));
      prev = cfg.dims[s];
    }
    final_ln_ = LayerNorm(name + ".final_ln", prev);
  }

  void init(Rng& rng) {
    for (std::size_t s = 0; s < stages_.size(); ++s) {
      downs_[s].init(rng);
      for (auto& b : stages_[s]) b.init(rng);
    }
    final_ln_.init(rng);
  }

  struct Cache {
    std::vector<PatchDownsample1d::Cache> downs;
    std::vector<std::vector<ConvNeXtBlock::Cache>> blocks;
    LayerNorm::Cache final_ln;
  };

  Eigen::MatrixXd forward(const Eigen::MatrixXd& logmel, Cache& c) const {
    if (logmel.cols() != cfg_.n_mels)
      throw std::invalid_argument("Encoder: input has wrong mel dimension");
    if (logmel.rows() < cfg_.downsample())
      throw std::invalid_argument("clip too short for encoder");
    c.downs.resize(downs_.size());
    c.blocks.resize(stages_.size());
    Eigen::MatrixXd h = logmel;
    for (std::size_t s = 0; s < stages_.size(); ++s) {
      h = downs_[s].forward(h, c.downs[s]);
      c.blocks[s].resize(stages_[s].size());
      for (std::size_t b = 0; b < stages_[s].size(); ++b)
        h = stages_[s][b].forward(h, c.blocks[s][b]);
    }
    return final_ln_.forward(h, c.final_ln);
  }

  Eigen::MatrixXd backward(const Eigen::MatrixXd& dy, Cache& c) {
    Eigen::MatrixXd dh = final_ln_.backward(dy, c.final_ln);
    for (std::size_t s = stages_.size(); s-- > 0;) {
      for (std::size_t b = stages_[s].size(); b-- > 0;)
        dh = stages_[s][b].backward(dh, c.blocks[s][b]);
      dh = downs_[s].backward(dh, c.downs[s]);
    }
    return dh;
  }

  void collect(ParamRegistry& r) {
    for (std::size_t s = 0; s < stages_.size(); ++s) {
      downs_[s].collect(r);
      for (auto& b : stages_[s]) b.collect(r);
    }
    final_ln_.collect(r);
  }

  const EncoderConfig& config() const { return cfg_; }

 private:
  EncoderConfig cfg_;
  std::vector<PatchDownsample1d> downs_;
  std::vector<std::vector<ConvNeXtBlock>> stages_;
  LayerNorm final_ln_;
};

// ---------------------------------------------------------------------------
// Fusion: conditions the mixture frame sequence (T x F) on the reference.
// All variants project into projected_dim and average-pool groups of
// projected_dim / F adjacent FEATURES back down to width F, preserving T.
//
//   multiply:        pool(proj_mix(mix) (.) tile(proj_ref(h_ref)))
//   film:            pool(gamma (.) proj_mix(mix) + beta),
//                    gamma/beta linear in h_ref, initialized to 1 / 0
//   cross_attention: queries from mixture frames, keys and values from
//                    reference FRAMES, plus a residual on the queries
// ---------------------------------------------------------------------------

struct FusionGrads {
  Eigen::MatrixXd d_mix;        // T x F
  Eigen::MatrixXd d_ref_frames; // T_ref x F (zero matrix unless cross-attention)
  Eigen::MatrixXd d_h_ref;      // 1 x F (zero for cross-attention)
};

class FusionModule {
 public:
  FusionModule() = default;
  FusionModule(const std::string& name, const FusionConfig& cfg, int feature_dim)
      : cfg_(cfg), feat_dim_(feature_dim), pool_(cfg.projected_dim / feature_dim) {
    const int fp = cfg.projected_dim;
    switch (cfg.kind) {
      case FusionKind::kMultiply:
        proj_mix_ = Linear(name + ".proj_mix", feature_dim, fp);
        proj_ref_ = Linear(name + ".proj_ref", feature_dim, fp);
        break;
      case FusionKind::kFilm:
        proj_mix_ = Linear(name + ".proj_mix", feature_dim, fp);
        gamma_head_ = Linear(name + ".gamma", feature_dim, fp);
        beta_head_ = Linear(name + ".beta", feature_dim, fp);
        break;
      case FusionKind::kCrossAttention:
        proj_mix_ = Linear(name + ".proj_mix", feature_dim, fp);
        proj_ref_ = Linear(name + ".proj_ref", feature_dim, fp);
        mha_ = MultiHeadAttention(name + ".attn", fp, cfg.heads);
        break;
    }
  }

  void init(Rng& rng) {
    proj_mix_.init(rng);
    switch (cfg_.kind) {
      case FusionKind::kMultiply:
        proj_ref_.init(rng);
        break;
      case FusionKind::kFilm:
        // Identity start: gamma == 1 and beta == 0 regardless of the
        // reference, so the fused stream begins as a plain projection of the
        // mixture and modulation is learned.
        gamma_head_.w.value.setZero();
        gamma_head_.b.value.setOnes();
        beta_head_.w.value.setZero();
        beta_head_.b.value.setZero();
        break;
      case FusionKind::kCrossAttention:
        proj_ref_.init(rng);
        mha_.init(rng);
        break;
    }
  }

  struct Cache {
    Linear::Cache mix, ref, gamma, beta;
    MultiHeadAttention::Cache mha;
    Eigen::MatrixXd proj_m;          // T x F'
    Eigen::MatrixXd cond;            // multiply: proj_ref(h_ref); film: gamma (1 x F')
    Eigen::MatrixXd beta_v;          // film only
    Eigen::Index t_ref = 0;
  };

  Eigen::MatrixXd forward(const Eigen::MatrixXd& mix, const Eigen::MatrixXd& ref_frames,
                          const Eigen::MatrixXd& h_ref, Cache& c) const {
    c.t_ref = ref_frames.rows();
    c.proj_m = proj_mix_.forward(mix, c.mix);
    switch (cfg_.kind) {
      case FusionKind::kMultiply: {
        c.cond = proj_ref_.forward(h_ref, c.ref);  // 1 x F'
        const Eigen::MatrixXd fused =
            c.proj_m.cwiseProduct(c.cond.replicate(c.proj_m.rows(), 1));
        return pool_.forward(fused);
      }
      case FusionKind::kFilm: {
        c.cond = gamma_head_.forward(h_ref, c.gamma);  // 1 x F'
        c.beta_v = beta_head_.forward(h_ref, c.beta);  // 1 x F'
        const Eigen::MatrixXd fused =
            c.proj_m.cwiseProduct(c.cond.replicate(c.proj_m.rows(), 1)) +
            c.beta_v.replicate(c.proj_m.rows(), 1);
        return pool_.forward(fused);
      }
      case FusionKind::kCrossAttention: {
        c.cond = proj_ref_.forward(ref_frames, c.ref);  // T_ref x F'
        const Eigen::MatrixXd attended = mha_.forward(c.proj_m, c.cond, c.mha);
        return pool_.forward(attended + c.proj_m);
      }
    }
    throw std::logic_error("unreachable");
  }

  FusionGrads backward(const Eigen::MatrixXd& dy, Cache& c) {
    FusionGrads g;
    g.d_ref_frames = Eigen::MatrixXd::Zero(c.t_ref, feat_dim_);
    g.d_h_ref = Eigen::MatrixXd::Zero(1, feat_dim_);
    const Eigen::MatrixXd dfused = pool_.backward(dy);
    switch (cfg_.kind) {
      case FusionKind::kMultiply: {
        const Eigen::MatrixXd dm = dfused.cwiseProduct(c.cond.replicate(dfused.rows(), 1));
        const Eigen::MatrixXd dcond = dfused.cwiseProduct(c.proj_m).colwise().sum();
        g.d_mix = proj_mix_.backward(dm, c.mix);
        g.d_h_ref = proj_ref_.backward(dcond, c.ref);
        return g;
      }
      case FusionKind::kFilm: {
        const Eigen::MatrixXd dm = dfused.cwiseProduct(c.cond.replicate(dfused.rows(), 1));
        const Eigen::MatrixXd dgamma = dfused.cwiseProduct(c.proj_m).colwise().sum();
        const Eigen::MatrixXd dbeta = dfused.colwise().sum();
        g.d_mix = proj_mix_.backward(dm, c.mix);
        g.d_h_ref = gamma_head_.backward(dgamma, c.gamma);
        g.d_h_ref += beta_head_.backward(dbeta, c.beta);
        return g;
      }
      case FusionKind::kCrossAttention: {
        auto [dq_attn, dkv] = mha_.backward(dfused, c.mha);
        const Eigen::MatrixXd dq = dq_attn + dfused;  // residual
        g.d_mix = proj_mix_.backward(dq, c.mix);
        g.d_ref_frames = proj_ref_.backward(dkv, c.ref);
        return g;
      }
    }
    throw std::logic_error("unreachable");
  }

  void collect(ParamRegistry& r) {
    proj_mix_.collect(r);
    switch (cfg_.kind) {
      case FusionKind::kMultiply:
        proj_ref_.collect(r);
        break;
      case FusionKind::kFilm:
        gamma_head_.collect(r);
        beta_head_.collect(r);
        break;
      case FusionKind::kCrossAttention:
        proj_ref_.collect(r);
        mha_.collect(r);
        break;
    }
  }

  const FusionConfig& config() const { return cfg_; }

 private:
  FusionConfig cfg_;
  int feat_dim_ = 0;
  Linear proj_mix_, proj_ref_, gamma_head_, beta_head_;
  MultiHeadAttention mha_;
  AvgPoolFeatures pool_;
};

// ---------------------------------------------------------------------------
// Full model
// ---------------------------------------------------------------------------

struct ModelOutput {
  Eigen::VectorXd detect_logits;  // T
  Eigen::VectorXd detect_probs;   // T, sigmoid of the logits
  Eigen::RowVectorXd tag_logits;  // n_classes
};

class TsdModel {
 public:
  TsdModel() = default;
  explicit TsdModel(const ModelConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    const int f = cfg.encoder.feature_dim();
    encoder_ = Encoder("enc", cfg.encoder);
    if (!cfg.share_encoder) ref_encoder_ = Encoder("ref_enc", cfg.encoder);
    fusion_ = FusionModule("fusion", cfg.fusion, f);
    gru_ = BiGru("gru", f, f / 2);
    detect_head_ = Linear("detect", f, 1);
    tag_fc1_ = Linear("tag.fc1", f, f);
    tag_fc2_ = Linear("tag.fc2", f, cfg.n_classes);
  }

  // Deterministic initialization: the same seed always produces the same
  // parameters, independent of call order elsewhere.
  void init(std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x10DE1));
    encoder_.init(rng);
    if (!cfg_.share_encoder) ref_encoder_.init(rng);
    fusion_.init(rng);
    gru_.init(rng);
    detect_head_.init(rng);
    tag_fc1_.init(rng);
    tag_fc2_.init(rng);
  }

  struct Cache {
    Encoder::Cache enc_mix, enc_ref;
    FusionModule::Cache fusion;
    BiGru::Cache gru;
    Linear::Cache detect, tag1, tag2;
    Eigen::MatrixXd tag_gelu_in;
    Eigen::Index t_ref = 0;
  };

  ModelOutput forward(const Eigen::MatrixXd& mix_logmel, const Eigen::MatrixXd& ref_logmel,
                      Cache& c) const {
    const Eigen::MatrixXd mix_enc = encoder_.forward(mix_logmel, c.enc_mix);
    const Encoder& ref_enc = cfg_.share_encoder ? encoder_ : ref_encoder_;
    const Eigen::MatrixXd ref_frames = ref_enc.forward(ref_logmel, c.enc_ref);
    c.t_ref = ref_frames.rows();
    const Eigen::MatrixXd h_ref = ref_frames.colwise().mean();  // 1 x F

    const Eigen::MatrixXd fused = fusion_.forward(mix_enc, ref_frames, h_ref, c.fusion);
    const Eigen::MatrixXd gru_out = gru_.forward(fused, c.gru);
    const Eigen::MatrixXd det = detect_head_.forward(gru_out, c.detect);  // T x 1

    Eigen::MatrixXd tag_h = tag_fc1_.forward(h_ref, c.tag1);
    c.tag_gelu_in = tag_h;
    tag_h = gelu(tag_h);
    const Eigen::MatrixXd tag = tag_fc2_.forward(tag_h, c.tag2);  // 1 x C

    ModelOutput out;
    out.detect_logits = det.col(0);
    out.detect_probs = det.col(0).unaryExpr([](double v) { return sigmoid(v); });
    out.tag_logits = tag.row(0);
    return out;
  }

  // Accumulates parameter gradients; callers zero them between steps.
  void backward(const Eigen::VectorXd& d_detect_logits, const Eigen::RowVectorXd& d_tag_logits,
                Cache& c) {
    Eigen::MatrixXd d_tag = tag_fc2_.backward(d_tag_logits, c.tag2);
    d_tag = gelu_backward(d_tag, c.tag_gelu_in);
    Eigen::MatrixXd d_h_ref = tag_fc1_.backward(d_tag, c.tag1);  // 1 x F

    const Eigen::MatrixXd d_gru = detect_head_.backward(d_detect_logits, c.detect);
    const Eigen::MatrixXd d_fused = gru_.backward(d_gru, c.gru);
    FusionGrads fg = fusion_.backward(d_fused, c.fusion);
    d_h_ref += fg.d_h_ref;

    // h_ref is the temporal mean of the reference frames.
    Eigen::MatrixXd d_ref_frames = fg.d_ref_frames;
    d_ref_frames.rowwise() += d_h_ref.row(0) / static_cast<double>(c.t_ref);

    Encoder& ref_enc = cfg_.share_encoder ? encoder_ : ref_encoder_;
    ref_enc.backward(d_ref_frames, c.enc_ref);
    encoder_.backward(fg.d_mix, c.enc_mix);
  }

  ParamRegistry params() {
    ParamRegistry r;
    encoder_.collect(r);
    if (!cfg_.share_encoder) ref_encoder_.collect(r);
    fusion_.collect(r);
    gru_.collect(r);
    detect_head_.collect(r);
    tag_fc1_.collect(r);
    tag_fc2_.collect(r);
    return r;
  }

  const ModelConfig& config() const { return cfg_; }
  int downsample() const { return cfg_.encoder.downsample(); }
  BiGru& gru() { return gru_; }
  Encoder& encoder() { return encoder_; }

 private:
  ModelConfig cfg_;
  Encoder encoder_, ref_encoder_;
  FusionModule fusion_;
  BiGru gru_;
  Linear detect_head_;
  Linear tag_fc1_, tag_fc2_;
};

// ---------------------------------------------------------------------------
// Checkpointing. Layout: magic, format version, JSON header (model config,
// class names, tensor manifest, free-form metadata), then the raw parameter
// doubles in registration order. Host is assumed little-endian.
// ---------------------------------------------------------------------------

struct Checkpoint {
  ModelConfig config;
  std::vector<std::string> class_names;
  nlohmann::json metadata;  // epoch, val score, anything the trainer wants
  TsdModel model;
};

namespace detail {
constexpr char kCheckpointMagic[8] = {'T', 'S', 'D', 'K', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;
}  // namespace detail

inline void save_checkpoint(TsdModel& model, const std::vector<std::string>& class_names,
                            const nlohmann::json& metadata, const std::string& path) {
  ParamRegistry reg = model.params();
  nlohmann::json header;
  header["config"] = model.config();
  header["class_names"] = class_names;
  header["metadata"] = metadata;
  nlohmann::json tensors = nlohmann::json::array();
  for (const Param* p : reg.params())
    tensors.push_back({{"name", p->name},
                       {"rows", p->value.rows()},
                       {"cols", p->value.cols()}});
  header["tensors"] = std::move(tensors);
  const std::string header_str = header.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write checkpoint: " + tmp);
    os.write(detail::kCheckpointMagic, sizeof(detail::kCheckpointMagic));
    const std::uint32_t version = detail::kCheckpointVersion;
    os.write(reinterpret_cast<const char*>(&version), sizeof(version));
    const std::uint64_t hlen = header_str.size();
    os.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    os.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    for (const Param* p : reg.params())
      os.write(reinterpret_cast<const char*>(p->value.data()),
               static_cast<std::streamsize>(sizeof(double) * p->value.size()));
    if (!os) throw std::runtime_error("short write while saving checkpoint: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, detail::kCheckpointMagic, sizeof(magic)) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  std::uint32_t version = 0;
  is.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (version != detail::kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version in " + path);
  std::uint64_t hlen = 0;
  is.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string header_str(hlen, '\0');
  is.read(header_str.data(), static_cast<std::streamsize>(hlen));
  if (!is) throw std::runtime_error("truncated checkpoint header: " + path);
  const nlohmann::json header = nlohmann::json::parse(header_str);

  Checkpoint ckpt;
  ckpt.config = header.at("config").get<ModelConfig>();
  header.at("class_names").get_to(ckpt.class_names);
  ckpt.metadata = header.value("metadata", nlohmann::json::object());
  ckpt.model = TsdModel(ckpt.config);

  ParamRegistry reg = ckpt.model.params();
  const nlohmann::json& tensors = header.at("tensors");
  if (tensors.size() != reg.params().size())
    throw std::runtime_error("checkpoint tensor count mismatch in " + path);
  for (std::size_t i = 0; i < reg.params().size(); ++i) {
    Param* p = reg.params()[i];
    const nlohmann::json& t = tensors.at(i);
    if (t.at("name").get<std::string>() != p->name ||
        t.at("rows").get<Eigen::Index>() != p->value.rows() ||
        t.at("cols").get<Eigen::Index>() != p->value.cols())
      throw std::runtime_error("checkpoint tensor mismatch at " + p->name + " in " + path);
    is.read(reinterpret_cast<char*>(p->value.data()),
            static_cast<std::streamsize>(sizeof(double) * p->value.size()));
  }
  if (!is) throw std::runtime_error("truncated checkpoint payload: " + path);
  return ckpt;
}

}  // namespace tsd
