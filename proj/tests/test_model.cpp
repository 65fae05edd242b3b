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

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>

#include "tsdkit/model.hpp"

using Catch::Approx;
namespace fs = std::filesystem;

namespace {

Eigen::MatrixXd randm(Eigen::Index rows, Eigen::Index cols, tsd::Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  return m;
}

// Miniature config for exhaustive finite-difference runs: 6 mels, feature
// width 8, projected width 16, two stages of one block, downsample 4.
tsd::ModelConfig fd_config(tsd::FusionKind kind, bool share) {
  tsd::ModelConfig c;
  c.encoder.n_mels = 6;
  c.encoder.dims = {8, 8};
  c.encoder.depths = {1, 1};
  c.encoder.strides = {2, 2};
  c.encoder.dw_kernel = 3;
  c.fusion.kind = kind;
  c.fusion.projected_dim = 16;
  c.fusion.heads = 2;
  c.n_classes = 3;
  c.share_encoder = share;
  return c;
}

// Finite-difference check of every parameter of the full model against the
// analytic backward pass, with the scalar loss a fixed random weighting of
// both output heads.
void check_model_gradients(tsd::FusionKind kind, bool share) {
  const tsd::ModelConfig cfg = fd_config(kind, share);
  tsd::TsdModel model(cfg);
  model.init(404);
  tsd::ParamRegistry reg = model.params();

  tsd::Rng rng(88);
  const Eigen::MatrixXd mix = randm(20, 6, rng);
  const Eigen::MatrixXd ref = randm(8, 6, rng);
  const Eigen::VectorXd p_det = randm(5, 1, rng).col(0);
  const Eigen::RowVectorXd p_tag = randm(1, 3, rng).row(0);

  const auto loss = [&]() {
    tsd::TsdModel::Cache c;
    const tsd::ModelOutput out = model.forward(mix, ref, c);
    return out.detect_logits.dot(p_det) + out.tag_logits.dot(p_tag);
  };

  reg.zero_grads();
  tsd::TsdModel::Cache c;
  const tsd::ModelOutput out = model.forward(mix, ref, c);
  REQUIRE(out.detect_logits.size() == 5);
  REQUIRE(out.tag_logits.size() == 3);
  model.backward(p_det, p_tag, c);
  const Eigen::VectorXd analytic = reg.grads();

  const double h = 1e-5;
  const Eigen::VectorXd theta = reg.values();
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    Eigen::VectorXd t = theta;
    t(i) = theta(i) + h;
    reg.set_values(t);
    const double up = loss();
    t(i) = theta(i) - h;
    reg.set_values(t);
    const double down = loss();
    const double fd = (up - down) / (2.0 * h);
    const bool ok =
        std::abs(fd - analytic(i)) <= 1e-6 + 1e-4 * std::max(std::abs(fd), std::abs(analytic(i)));
    if (!ok) {
      CAPTURE(i, fd, analytic(i), tsd::to_string(kind), share);
      REQUIRE(ok);
    }
  }
  reg.set_values(theta);
}

}  // namespace

// ---------------------------------------------------------------------------
// Configs
// ---------------------------------------------------------------------------

TEST_CASE("encoder config arithmetic and validation", "[model]") {
  const tsd::EncoderConfig tiny = tsd::EncoderConfig::tiny(64);
  CHECK(tiny.feature_dim() == 96);
  CHECK(tiny.downsample() == 4);

  const tsd::EncoderConfig base = tsd::EncoderConfig::base();
  CHECK(base.n_mels == 224);
  CHECK(base.feature_dim() == 768);
  CHECK(base.downsample() == 32);

  tsd::EncoderConfig bad = tiny;
  bad.depths = {2};
  CHECK_THROWS(bad.validate());
  bad = tiny;
  bad.dw_kernel = 4;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("model config validation", "[model]") {
  tsd::ModelConfig cfg = tsd::ModelConfig::tiny(64);
  CHECK_NOTHROW(cfg.validate());

  tsd::ModelConfig odd = cfg;
  odd.encoder.dims = {96, 95};
  CHECK_THROWS(odd.validate());

  tsd::ModelConfig mult = cfg;
  mult.fusion.projected_dim = 100;  // not a multiple of 96
  CHECK_THROWS(mult.validate());

  tsd::ModelConfig heads = cfg;
  heads.fusion.kind = tsd::FusionKind::kCrossAttention;
  heads.fusion.heads = 5;  // 384 % 5 != 0
  CHECK_THROWS(heads.validate());

  CHECK(tsd::fusion_kind_from_string("film") == tsd::FusionKind::kFilm);
  CHECK(tsd::to_string(tsd::FusionKind::kCrossAttention) == "cross_attention");
  CHECK_THROWS(tsd::fusion_kind_from_string("concat"));
}

TEST_CASE("model config json round-trip", "[model]") {
  tsd::ModelConfig cfg = tsd::ModelConfig::tiny(64, tsd::FusionKind::kCrossAttention, 7);
  cfg.share_encoder = false;
  const nlohmann::json j = cfg;
  const tsd::ModelConfig back = j.get<tsd::ModelConfig>();
  CHECK(back.encoder.n_mels == 64);
  CHECK(back.encoder.dims == cfg.encoder.dims);
  CHECK(back.fusion.kind == tsd::FusionKind::kCrossAttention);
  CHECK(back.fusion.projected_dim == 384);
  CHECK(back.n_classes == 7);
  CHECK(back.share_encoder == false);
}

// ---------------------------------------------------------------------------
// Encoder
// ---------------------------------------------------------------------------

TEST_CASE("encoder output grid is ceil(T_spec / downsample)", "[model]") {
  const tsd::EncoderConfig cfg = tsd::EncoderConfig::tiny(12);
  tsd::Encoder enc("enc", cfg);
  tsd::Rng init_rng(6);
  enc.init(init_rng);

  tsd::Rng rng(7);
  for (const int t_spec : {4, 5, 20, 21, 101}) {
    const Eigen::MatrixXd x = randm(t_spec, 12, rng);
    tsd::Encoder::Cache c;
    const Eigen::MatrixXd y = enc.forward(x, c);
    CHECK(y.rows() == (t_spec + 3) / 4);
    CHECK(y.cols() == 96);
  }
}

TEST_CASE("encoder rejects bad input shapes", "[model]") {
  const tsd::EncoderConfig cfg = tsd::EncoderConfig::tiny(12);
  tsd::Encoder enc("enc", cfg);
  tsd::Rng rng(8);
  enc.init(rng);

  tsd::Encoder::Cache c;
  const Eigen::MatrixXd wrong_mels = randm(20, 13, rng);
  CHECK_THROWS_WITH(enc.forward(wrong_mels, c), "Encoder: input has wrong mel dimension");
  const Eigen::MatrixXd too_short = randm(3, 12, rng);
  CHECK_THROWS_WITH(enc.forward(too_short, c), "clip too short for encoder");
}

TEST_CASE("encoder forward is deterministic and repeatable", "[model]") {
  const tsd::EncoderConfig cfg = tsd::EncoderConfig::tiny(12);
  tsd::Encoder enc("enc", cfg);
  tsd::Rng rng(9);
  enc.init(rng);
  const Eigen::MatrixXd x = randm(16, 12, rng);
  tsd::Encoder::Cache c1, c2;
  const Eigen::MatrixXd y1 = enc.forward(x, c1);
  const Eigen::MatrixXd y2 = enc.forward(x, c2);
  CHECK((y1 - y2).cwiseAbs().maxCoeff() == 0.0);
}

// ---------------------------------------------------------------------------
// Fusion
// ---------------------------------------------------------------------------

TEST_CASE("film starts as the identity on the projected mixture", "[model]") {
  tsd::FusionConfig fcfg;
  fcfg.kind = tsd::FusionKind::kFilm;
  fcfg.projected_dim = 16;
  tsd::FusionModule fusion("f", fcfg, 8);
  tsd::Rng rng(10);
  fusion.init(rng);

  // Reach the mixture projection through the registry to compute the
  // reference-free path by hand.
  tsd::ParamRegistry reg;
  fusion.collect(reg);
  const tsd::Param* w = nullptr;
  const tsd::Param* b = nullptr;
  for (const tsd::Param* p : reg.params()) {
    if (p->name == "f.proj_mix.weight") w = p;
    if (p->name == "f.proj_mix.bias") b = p;
  }
  REQUIRE(w != nullptr);
  REQUIRE(b != nullptr);

  const Eigen::MatrixXd mix = randm(5, 8, rng);
  const Eigen::MatrixXd ref_frames = randm(3, 8, rng);
  const Eigen::MatrixXd h_ref = ref_frames.colwise().mean();

  tsd::FusionModule::Cache c;
  const Eigen::MatrixXd fused = fusion.forward(mix, ref_frames, h_ref, c);
  REQUIRE(fused.rows() == 5);
  REQUIRE(fused.cols() == 8);

  const Eigen::MatrixXd proj =
      (mix * w->value).rowwise() + b->value.col(0).transpose();
  Eigen::MatrixXd pooled(5, 8);
  for (int j = 0; j < 8; ++j) pooled.col(j) = (proj.col(2 * j) + proj.col(2 * j + 1)) / 2.0;
  CHECK((fused - pooled).cwiseAbs().maxCoeff() < 1e-12);

  // At init the FiLM output must not depend on the reference at all.
  const Eigen::MatrixXd other_h = randm(1, 8, rng);
  tsd::FusionModule::Cache c2;
  const Eigen::MatrixXd fused2 = fusion.forward(mix, ref_frames, other_h, c2);
  CHECK((fused - fused2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("multiply fusion responds to the reference at init", "[model]") {
  tsd::FusionConfig fcfg;
  fcfg.kind = tsd::FusionKind::kMultiply;
  fcfg.projected_dim = 16;
  tsd::FusionModule fusion("f", fcfg, 8);
  tsd::Rng rng(11);
  fusion.init(rng);

  const Eigen::MatrixXd mix = randm(5, 8, rng);
  const Eigen::MatrixXd ref_frames = randm(3, 8, rng);
  const Eigen::MatrixXd h1 = ref_frames.colwise().mean();
  const Eigen::MatrixXd h2 = h1 * 2.0;

  tsd::FusionModule::Cache c1, c2;
  const Eigen::MatrixXd f1 = fusion.forward(mix, ref_frames, h1, c1);
  const Eigen::MatrixXd f2 = fusion.forward(mix, ref_frames, h2, c2);
  CHECK((f1 - f2).cwiseAbs().maxCoeff() > 1e-6);
}

// ---------------------------------------------------------------------------
// Full model
// ---------------------------------------------------------------------------

TEST_CASE("model output shapes and prob range", "[model]") {
  const tsd::ModelConfig cfg = fd_config(tsd::FusionKind::kMultiply, true);
  tsd::TsdModel model(cfg);
  model.init(1);
  tsd::Rng rng(2);
  const Eigen::MatrixXd mix = randm(21, 6, rng);  // T = ceil(ceil(21/2)/2) = 6
  const Eigen::MatrixXd ref = randm(8, 6, rng);

  tsd::TsdModel::Cache c;
  const tsd::ModelOutput out = model.forward(mix, ref, c);
  REQUIRE(out.detect_logits.size() == 6);
  REQUIRE(out.detect_probs.size() == 6);
  REQUIRE(out.tag_logits.size() == 3);
  for (Eigen::Index t = 0; t < out.detect_probs.size(); ++t) {
    CHECK(out.detect_probs(t) > 0.0);
    CHECK(out.detect_probs(t) < 1.0);
    CHECK(out.detect_probs(t) ==
          Approx(1.0 / (1.0 + std::exp(-out.detect_logits(t)))).epsilon(1e-12));
  }
}

TEST_CASE("model init is seed-deterministic", "[model]") {
  const tsd::ModelConfig cfg = fd_config(tsd::FusionKind::kFilm, true);
  tsd::TsdModel a(cfg), b(cfg), c(cfg);
  a.init(5);
  b.init(5);
  c.init(6);
  CHECK((a.params().values() - b.params().values()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.params().values() - c.params().values()).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("dual-branch model carries an extra encoder's parameters", "[model]") {
  tsd::TsdModel shared(fd_config(tsd::FusionKind::kMultiply, true));
  tsd::TsdModel dual(fd_config(tsd::FusionKind::kMultiply, false));
  tsd::Encoder enc("e", fd_config(tsd::FusionKind::kMultiply, true).encoder);
  tsd::ParamRegistry enc_reg;
  enc.collect(enc_reg);
  CHECK(dual.params().size() == shared.params().size() + enc_reg.size());
}

TEST_CASE("full model gradients: multiply fusion", "[model][grad]") {
  check_model_gradients(tsd::FusionKind::kMultiply, true);
}

TEST_CASE("full model gradients: film fusion", "[model][grad]") {
  check_model_gradients(tsd::FusionKind::kFilm, true);
}

TEST_CASE("full model gradients: cross-attention fusion", "[model][grad]") {
  check_model_gradients(tsd::FusionKind::kCrossAttention, true);
}

TEST_CASE("full model gradients: dual-branch encoder", "[model][grad]") {
  check_model_gradients(tsd::FusionKind::kMultiply, false);
}

// ---------------------------------------------------------------------------
// Checkpointing
// ---------------------------------------------------------------------------

TEST_CASE("checkpoint round-trips parameters bit-exactly", "[model]") {
  const auto dir = fs::temp_directory_path() / "tsdkit_test_model";
  fs::create_directories(dir);
  const auto path = (dir / "roundtrip.ckpt").string();

  const tsd::ModelConfig cfg = fd_config(tsd::FusionKind::kCrossAttention, false);
  tsd::TsdModel model(cfg);
  model.init(31);
  const nlohmann::json meta = {{"epoch", 7}, {"val_f1", 0.625}};
  tsd::save_checkpoint(model, {"a", "b", "c"}, meta, path);

  tsd::Checkpoint loaded = tsd::load_checkpoint(path);
  CHECK(loaded.class_names == std::vector<std::string>{"a", "b", "c"});
  CHECK(loaded.metadata.at("epoch").get<int>() == 7);
  CHECK(loaded.metadata.at("val_f1").get<double>() == 0.625);
  CHECK(loaded.config.fusion.kind == tsd::FusionKind::kCrossAttention);
  CHECK(loaded.config.share_encoder == false);

  const Eigen::VectorXd want = model.params().values();
  const Eigen::VectorXd got = loaded.model.params().values();
  REQUIRE(want.size() == got.size());
  CHECK((want - got).cwiseAbs().maxCoeff() == 0.0);

  // The restored model must produce identical outputs.
  tsd::Rng rng(3);
  const Eigen::MatrixXd mix = randm(20, 6, rng);
  const Eigen::MatrixXd ref = randm(8, 6, rng);
  tsd::TsdModel::Cache c1, c2;
  const auto o1 = model.forward(mix, ref, c1);
  const auto o2 = loaded.model.forward(mix, ref, c2);
  CHECK((o1.detect_logits - o2.detect_logits).cwiseAbs().maxCoeff() == 0.0);
  CHECK((o1.tag_logits - o2.tag_logits).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("checkpoint loader rejects foreign and truncated files", "[model]") {
  const auto dir = fs::temp_directory_path() / "tsdkit_test_model";
  fs::create_directories(dir);

  const auto foreign = (dir / "foreign.ckpt").string();
  {
    std::ofstream os(foreign, std::ios::binary | std::ios::trunc);
    os << "definitely not a checkpoint";
  }
  CHECK_THROWS_WITH(tsd::load_checkpoint(foreign),
                    Catch::Matchers::ContainsSubstring("not a checkpoint file"));

  const auto valid = (dir / "valid.ckpt").string();
  tsd::TsdModel model(fd_config(tsd::FusionKind::kMultiply, true));
  model.init(1);
  tsd::save_checkpoint(model, {"x"}, nlohmann::json::object(), valid);

  // Cut the payload short.
  const auto truncated = (dir / "truncated.ckpt").string();
  {
    std::ifstream in(valid, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream os(truncated, std::ios::binary | std::ios::trunc);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 64));
  }
  CHECK_THROWS_WITH(tsd::load_checkpoint(truncated),
                    Catch::Matchers::ContainsSubstring("truncated checkpoint"));

  CHECK_THROWS(tsd::load_checkpoint((dir / "missing.ckpt").string()));
}
