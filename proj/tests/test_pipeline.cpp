#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "favs/fded.hpp"
#include "favs/fixtures.hpp"
#include "favs/ops.hpp"
#include "favs/pipeline.hpp"
#include "favs/scmc.hpp"
#include "favs/tensor.hpp"

using namespace favs;

namespace {

RealTensor random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0) {
  return InitSpec{seed, InitScheme::UniformScaled, scale}.make(std::move(shape));
}

pipeline::ModelConfig small_config(std::size_t stages, std::size_t size) {
  pipeline::ModelConfig cfg;
  cfg.stages = stages;
  cfg.channels = 4;
  cfg.experts = 2;
  cfg.queries = 2;
  cfg.classes = 2;
  cfg.groups = 2;
  cfg.reduction = 2;
  cfg.size = size;
  cfg.seed = 7;
  return cfg;
}

RealTensor manual_fuse(const RealTensor& carried, const RealTensor& level,
                       const RealTensor& fuse) {
  const std::size_t T = level.shape[0], C = level.shape[1];
  const std::size_t hw = level.shape[2] * level.shape[3];
  RealTensor out(level.shape);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t k = 0; k < C; ++k) {
        const double w0 = fuse.data[c * 2 * C + k];
        const double w1 = fuse.data[c * 2 * C + C + k];
        for (std::size_t p = 0; p < hw; ++p) {
          out.data[(t * C + c) * hw + p] += w0 * carried.data[(t * C + k) * hw + p] +
                                            w1 * level.data[(t * C + k) * hw + p];
        }
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("config parsing") {
  SUBCASE("empty text keeps the defaults") {
    pipeline::ModelConfig cfg = pipeline::parse_config("");
    CHECK(cfg.stages == 3);
    CHECK(cfg.channels == 32);
    CHECK(cfg.experts == 4);
    CHECK(cfg.queries == 8);
    CHECK(cfg.size == 64);
    CHECK(cfg.seed == 42);
    CHECK_FALSE(cfg.force_dense);
  }

  SUBCASE("keys, comments and whitespace") {
    const char* text =
        "# cascade setup\n"
        "stages = 2\n"
        "channels=8\n"
        "\n"
        "experts=2\n"
        "queries=4\n"
        "classes=3\n"
        "groups=2\n"
        "reduction=4\n"
        "size=32\n"
        "seed=99\n"
        "force_dense=true\n"
        "tau = 1.0, 0.5, 0.25, 0.05\n";
    pipeline::ModelConfig cfg = pipeline::parse_config(text);
    CHECK(cfg.stages == 2);
    CHECK(cfg.channels == 8);
    CHECK(cfg.experts == 2);
    CHECK(cfg.queries == 4);
    CHECK(cfg.classes == 3);
    CHECK(cfg.groups == 2);
    CHECK(cfg.reduction == 4);
    CHECK(cfg.size == 32);
    CHECK(cfg.seed == 99);
    CHECK(cfg.force_dense);
    CHECK(cfg.ladder.taus == std::array<double, 4>{1.0, 0.5, 0.25, 0.05});
  }

  SUBCASE("malformed lines are rejected") {
    CHECK_THROWS_AS(pipeline::parse_config("stages"), std::invalid_argument);
    CHECK_THROWS_AS(pipeline::parse_config("=3"), std::invalid_argument);
    CHECK_THROWS_AS(pipeline::parse_config("stages=two"), std::invalid_argument);
    CHECK_THROWS_AS(pipeline::parse_config("bogus=1"), std::invalid_argument);
    CHECK_THROWS_AS(pipeline::parse_config("seed=1\nseed=2"), std::invalid_argument);
    CHECK_THROWS_AS(pipeline::parse_config("force_dense=maybe"), std::invalid_argument);
    CHECK_THROWS_AS(pipeline::parse_config("tau=1.0,0.6,0.3"), std::invalid_argument);
    CHECK_THROWS_AS(pipeline::parse_config("tau=1.0,0.6,0.3,0.1,0.05"), std::invalid_argument);
    CHECK_THROWS_AS(pipeline::parse_config("tau=1.0,0.6,abc,0.1"), std::invalid_argument);
  }

  SUBCASE("validation runs after parsing") {
    CHECK_THROWS_AS(pipeline::parse_config("channels=7"), std::invalid_argument);
    CHECK_THROWS_AS(pipeline::parse_config("groups=5"), std::invalid_argument);
    CHECK_THROWS_AS(pipeline::parse_config("size=48"), std::invalid_argument);
    CHECK_THROWS_AS(pipeline::parse_config("stages=0"), std::invalid_argument);
    CHECK_THROWS_AS(pipeline::parse_config("size=8"), std::invalid_argument);
    CHECK_THROWS_AS(pipeline::parse_config("tau=0.9,0.6,0.3,0.1"), std::invalid_argument);
  }
}

TEST_CASE("config validation") {
  pipeline::ModelConfig cfg = small_config(1, 16);
  CHECK_NOTHROW(cfg.validate());

  pipeline::ModelConfig bad = cfg;
  bad.channels = 6;
  bad.groups = 4;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = cfg;
  bad.reduction = 3;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = cfg;
  bad.size = 2;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = cfg;
  bad.stages = 4;
  bad.size = 16;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("parameter initialization") {
  pipeline::ModelConfig cfg = small_config(2, 32);
  pipeline::ModelParams p = pipeline::init_params(cfg);

  SUBCASE("shapes follow the config") {
    REQUIRE(p.stages.size() == 2);
    CHECK(p.stages[0].fded_visual.dwc_kernels.shape == Shape{4, 3, 3});
    CHECK(p.stages[0].fded_visual.conv3d_kernel.shape == Shape{4, 3, 3, 3});
    CHECK(p.stages[0].fded_audio.ca_w1.shape == Shape{4, 2});
    CHECK(p.stages[0].fded_audio.ca_w2.shape == Shape{2, 4});
    CHECK(p.stages[0].cross.experts.size() == 2);
    CHECK(p.stages[0].cross.router.mlp_a_w2.shape == Shape{2, 2});
    CHECK(p.stages[0].fuse.size() == 0);
    CHECK(p.stages[1].fuse.shape == Shape{4, 8});
    CHECK(p.queries.embed.shape == Shape{2, 4});
    CHECK(p.decoder.cls.shape == Shape{4, 2});
  }

  SUBCASE("the seed pins every tensor") {
    pipeline::ModelParams again = pipeline::init_params(cfg);
    CHECK(fixtures::encode_ften(pipeline::params_to_container(p)) ==
          fixtures::encode_ften(pipeline::params_to_container(again)));

    pipeline::ModelConfig other = cfg;
    other.seed = 8;
    pipeline::ModelParams moved = pipeline::init_params(other);
    CHECK(fixtures::encode_ften(pipeline::params_to_container(p)) !=
          fixtures::encode_ften(pipeline::params_to_container(moved)));
  }
}

TEST_CASE("parameter container round trip") {
  pipeline::ModelConfig cfg = small_config(2, 32);
  pipeline::ModelParams p = pipeline::init_params(cfg);
  fixtures::FtenContainer c = pipeline::params_to_container(p);

  SUBCASE("rebuild preserves every byte") {
    pipeline::ModelParams back = pipeline::params_from_container(c, cfg);
    CHECK(fixtures::encode_ften(pipeline::params_to_container(back)) ==
          fixtures::encode_ften(c));
  }

  SUBCASE("missing entry is rejected") {
    fixtures::FtenContainer broken = c;
    std::erase_if(broken, [](const fixtures::FtenEntry& e) { return e.name == "decoder.pix"; });
    CHECK_THROWS_AS(pipeline::params_from_container(broken, cfg), std::invalid_argument);
  }

  SUBCASE("unexpected entry is rejected") {
    fixtures::FtenContainer extra = c;
    extra.push_back({"leftover", RealTensor({1}, 1.0)});
    CHECK_THROWS_AS(pipeline::params_from_container(extra, cfg), std::invalid_argument);
  }

  SUBCASE("wrong shape is rejected") {
    fixtures::FtenContainer wrong = c;
    for (auto& e : wrong) {
      if (e.name == "decoder.pix") e.value = RealTensor({2, 2});
    }
    CHECK_THROWS_AS(pipeline::params_from_container(wrong, cfg), std::invalid_argument);
  }

  SUBCASE("config mismatch is caught by shape checks") {
    pipeline::ModelConfig wider = cfg;
    wider.channels = 8;
    wider.groups = 2;
    wider.reduction = 2;
    CHECK_THROWS_AS(pipeline::params_from_container(c, wider), std::invalid_argument);
  }
}

TEST_CASE("stage cascade") {
  SUBCASE("one stage equals the blocks composed directly") {
    pipeline::ModelConfig cfg = small_config(1, 16);
    pipeline::ModelParams p = pipeline::init_params(cfg);
    RealTensor level = random_tensor({2, 4, 4, 4}, 400);
    RealTensor audio = random_tensor({2, 4, 4, 4}, 401);

    pipeline::StageOutput out = pipeline::run_stages({level}, audio, cfg, p);

    fded::FdedOutput fv = fded::fded_forward(level, fded::Modality::Visual,
                                             p.stages[0].fded_visual);
    fded::FdedOutput fa = fded::fded_forward(audio, fded::Modality::Audio,
                                             p.stages[0].fded_audio);
    scmc::ScmcOutput sc = scmc::scmc_forward(fv.features, fa.features, p.stages[0].cross,
                                             cfg.force_dense);
    CHECK(out.visual.data == sc.visual.data);
    CHECK(out.audio.data == sc.audio.data);
    REQUIRE(out.routing.size() == 1);
    CHECK(out.routing[0].visual.weights.data == sc.visual_routing.weights.data);
  }

  SUBCASE("two stages thread the carried features through the fusion") {
    pipeline::ModelConfig cfg = small_config(2, 32);
    pipeline::ModelParams p = pipeline::init_params(cfg);
    RealTensor level0 = random_tensor({2, 4, 8, 8}, 402);
    RealTensor level1 = random_tensor({2, 4, 4, 4}, 403);
    RealTensor audio = random_tensor({2, 4, 4, 4}, 404);

    pipeline::StageOutput out = pipeline::run_stages({level0, level1}, audio, cfg, p);

    fded::FdedOutput fv0 = fded::fded_forward(level0, fded::Modality::Visual,
                                              p.stages[0].fded_visual);
    fded::FdedOutput fa0 = fded::fded_forward(audio, fded::Modality::Audio,
                                              p.stages[0].fded_audio);
    scmc::ScmcOutput s0 = scmc::scmc_forward(fv0.features, fa0.features, p.stages[0].cross,
                                             false);

    RealTensor fused = manual_fuse(ops::bilinear_resize(s0.visual, 4, 4), level1,
                                   p.stages[1].fuse);
    fded::FdedOutput fv1 = fded::fded_forward(fused, fded::Modality::Visual,
                                              p.stages[1].fded_visual);
    fded::FdedOutput fa1 = fded::fded_forward(s0.audio, fded::Modality::Audio,
                                              p.stages[1].fded_audio);
    scmc::ScmcOutput s1 = scmc::scmc_forward(fv1.features, fa1.features, p.stages[1].cross,
                                             false);

    CHECK(out.visual.data == s1.visual.data);
    CHECK(out.audio.data == s1.audio.data);
    REQUIRE(out.routing.size() == 2);
    CHECK(out.routing[1].audio.weights.data == s1.audio_routing.weights.data);
  }

  SUBCASE("output shapes track the last stage") {
    pipeline::ModelConfig cfg = small_config(2, 32);
    pipeline::ModelParams p = pipeline::init_params(cfg);
    pipeline::StageOutput out = pipeline::run_stages(
        {random_tensor({2, 4, 8, 8}, 405), random_tensor({2, 4, 4, 4}, 406)},
        random_tensor({2, 4, 4, 4}, 407), cfg, p);
    CHECK(out.visual.shape == Shape{2, 4, 4, 4});
    CHECK(out.audio.shape == Shape{2, 4, 4, 4});
  }

  SUBCASE("repeat runs are bit-identical") {
    pipeline::ModelConfig cfg = small_config(1, 16);
    pipeline::ModelParams p = pipeline::init_params(cfg);
    RealTensor level = random_tensor({2, 4, 4, 4}, 408);
    RealTensor audio = random_tensor({2, 4, 4, 4}, 409);
    pipeline::StageOutput a = pipeline::run_stages({level}, audio, cfg, p);
    pipeline::StageOutput b = pipeline::run_stages({level}, audio, cfg, p);
    CHECK(a.visual.data == b.visual.data);
    CHECK(a.audio.data == b.audio.data);
  }

  SUBCASE("forcing the dense path keeps every expert") {
    pipeline::ModelConfig cfg = small_config(1, 16);
    cfg.force_dense = true;
    pipeline::ModelParams p = pipeline::init_params(cfg);
    pipeline::StageOutput out = pipeline::run_stages({random_tensor({2, 4, 4, 4}, 410)},
                                                     random_tensor({2, 4, 4, 4}, 411), cfg, p);
    for (int k : out.routing[0].visual.k_eff) CHECK(k == 2);
    for (int k : out.routing[0].audio.k_eff) CHECK(k == 2);
  }

  SUBCASE("inputs are validated before any stage runs") {
    pipeline::ModelConfig cfg = small_config(1, 16);
    pipeline::ModelParams p = pipeline::init_params(cfg);
    RealTensor good = random_tensor({2, 4, 4, 4}, 412);

    CHECK_THROWS_AS(pipeline::run_stages({}, good, cfg, p), std::invalid_argument);
    CHECK_THROWS_AS(pipeline::run_stages({random_tensor({2, 4, 8, 8}, 413)}, good, cfg, p),
                    std::invalid_argument);
    CHECK_THROWS_AS(pipeline::run_stages({good}, random_tensor({2, 8, 4, 4}, 414), cfg, p),
                    std::invalid_argument);
    CHECK_THROWS_AS(pipeline::run_stages({good}, random_tensor({2, 4, 4}, 415), cfg, p),
                    std::invalid_argument);

    pipeline::ModelConfig two = small_config(2, 32);
    CHECK_THROWS_AS(pipeline::run_stages({good, good}, good, two, p), std::invalid_argument);
  }
}

TEST_CASE("query derivation") {
  pipeline::QueryParams qp;
  qp.embed = random_tensor({3, 4}, 420);
  qp.mlp_w1 = random_tensor({4, 4}, 421);
  qp.mlp_w2 = random_tensor({4, 4}, 422);

  SUBCASE("silent audio leaves the learned table") {
    RealTensor out = pipeline::derive_queries(RealTensor({2, 4, 2, 2}), qp);
    REQUIRE(out.shape == Shape{2, 3, 4});
    for (std::size_t t = 0; t < 2; ++t) {
      for (std::size_t n = 0; n < 3; ++n) {
        for (std::size_t c = 0; c < 4; ++c) CHECK(out(t, n, c) == qp.embed(n, c));
      }
    }
  }

  SUBCASE("frame-constant audio gives frame-constant queries") {
    RealTensor audio({2, 4, 2, 2});
    for (std::size_t c = 0; c < 4; ++c) {
      for (std::size_t i = 0; i < 4; ++i) {
        audio.data[c * 4 + i] = 0.3 * static_cast<double>(c) - 0.2;
        audio.data[16 + c * 4 + i] = 0.3 * static_cast<double>(c) - 0.2;
      }
    }
    RealTensor out = pipeline::derive_queries(audio, qp);
    for (std::size_t i = 0; i < 12; ++i) CHECK(out.data[i] == out.data[12 + i]);
  }

  SUBCASE("matches the conditioning applied by hand") {
    RealTensor audio = random_tensor({2, 4, 2, 2}, 423);
    RealTensor cond = ops::two_layer_mlp(ops::global_avg_pool(audio), qp.mlp_w1, qp.mlp_w2);
    RealTensor out = pipeline::derive_queries(audio, qp);
    for (std::size_t t = 0; t < 2; ++t) {
      for (std::size_t n = 0; n < 3; ++n) {
        for (std::size_t c = 0; c < 4; ++c) {
          CHECK(out(t, n, c) == cond(t, c) + qp.embed(n, c));
        }
      }
    }
  }

  SUBCASE("shape validation") {
    CHECK_THROWS_AS(pipeline::derive_queries(RealTensor({2, 4, 2}), qp),
                    std::invalid_argument);
    pipeline::QueryParams narrow = qp;
    narrow.embed = random_tensor({3, 2}, 424);
    CHECK_THROWS_AS(pipeline::derive_queries(RealTensor({2, 4, 2, 2}), narrow),
                    std::invalid_argument);
  }
}

TEST_CASE("mask decoding") {
  SUBCASE("shapes") {
    RealTensor queries = random_tensor({2, 3, 4}, 430);
    RealTensor visual = random_tensor({2, 4, 4, 4}, 431);
    pipeline::DecoderParams head;
    head.attn.q = random_tensor({4, 4}, 432);
    head.attn.k = random_tensor({4, 4}, 433);
    head.attn.v = random_tensor({4, 4}, 434);
    head.attn.out = random_tensor({4, 4}, 435);
    head.pix = random_tensor({4, 4}, 436);
    head.cls = random_tensor({4, 2}, 437);
    pipeline::Prediction pred = pipeline::decode_masks(queries, visual, head, 16, 16);
    CHECK(pred.mask_logits.shape == Shape{2, 3, 16, 16});
    CHECK(pred.class_logits.shape == Shape{2, 3, 2});
    CHECK(pred.binary_mask.shape == Shape{2, 16, 16});
    for (double v : pred.binary_mask.data) CHECK((v == 0.0 || v == 1.0));
  }

  SUBCASE("zero pixel projection keeps the binary map empty") {
    RealTensor queries = random_tensor({1, 2, 4}, 438);
    RealTensor visual = random_tensor({1, 4, 2, 2}, 439);
    pipeline::DecoderParams head;
    head.attn.q = random_tensor({4, 4}, 440);
    head.attn.k = random_tensor({4, 4}, 441);
    head.attn.v = random_tensor({4, 4}, 442);
    head.attn.out = random_tensor({4, 4}, 443);
    head.pix = RealTensor({4, 4});
    head.cls = random_tensor({4, 2}, 444);
    pipeline::Prediction pred = pipeline::decode_masks(queries, visual, head, 4, 4);
    for (double v : pred.mask_logits.data) CHECK(v == 0.0);
    for (double v : pred.binary_mask.data) CHECK(v == 0.0);
  }

  SUBCASE("single-channel head computed by hand") {
    RealTensor queries = RealTensor::from({1, 1, 1}, {3.0});
    RealTensor visual({1, 1, 2, 2}, 1.0);
    pipeline::DecoderParams head;
    head.attn.q = RealTensor({1, 1});
    head.attn.k = RealTensor({1, 1});
    head.attn.v = RealTensor({1, 1});
    head.attn.out = RealTensor({1, 1});
    head.pix = RealTensor({1, 1}, 1.0);
    head.cls = RealTensor::from({1, 2}, {2.0, -1.0});
    pipeline::Prediction pred = pipeline::decode_masks(queries, visual, head, 2, 2);
    for (double v : pred.mask_logits.data) CHECK(v == 3.0);
    CHECK(pred.class_logits.data == std::vector<double>{6.0, -3.0});
    for (double v : pred.binary_mask.data) CHECK(v == 1.0);
  }

  SUBCASE("queries act independently and the mask takes their max") {
    RealTensor queries = random_tensor({1, 3, 4}, 445);
    RealTensor visual = random_tensor({1, 4, 2, 2}, 446);
    pipeline::DecoderParams head;
    head.attn.q = random_tensor({4, 4}, 447);
    head.attn.k = random_tensor({4, 4}, 448);
    head.attn.v = random_tensor({4, 4}, 449);
    head.attn.out = random_tensor({4, 4}, 450);
    head.pix = random_tensor({4, 4}, 451);
    head.cls = random_tensor({4, 2}, 452);
    pipeline::Prediction base = pipeline::decode_masks(queries, visual, head, 2, 2);

    RealTensor shuffled(queries.shape);
    const std::size_t perm[3] = {2, 0, 1};
    for (std::size_t n = 0; n < 3; ++n) {
      for (std::size_t c = 0; c < 4; ++c) shuffled(0, n, c) = queries(0, perm[n], c);
    }
    pipeline::Prediction moved = pipeline::decode_masks(shuffled, visual, head, 2, 2);
    CHECK(moved.binary_mask.data == base.binary_mask.data);
    for (std::size_t n = 0; n < 3; ++n) {
      for (std::size_t p = 0; p < 4; ++p) {
        CHECK(moved.mask_logits.data[n * 4 + p] == base.mask_logits.data[perm[n] * 4 + p]);
      }
      for (std::size_t cl = 0; cl < 2; ++cl) {
        CHECK(moved.class_logits(0, n, cl) == base.class_logits(0, perm[n], cl));
      }
    }
  }

  SUBCASE("stream validation") {
    pipeline::DecoderParams head;
    head.attn.q = RealTensor({4, 4});
    head.attn.k = RealTensor({4, 4});
    head.attn.v = RealTensor({4, 4});
    head.attn.out = RealTensor({4, 4});
    head.pix = RealTensor({4, 4});
    head.cls = RealTensor({4, 2});
    CHECK_THROWS_AS(pipeline::decode_masks(RealTensor({1, 2}), RealTensor({1, 4, 2, 2}),
                                           head, 2, 2),
                    std::invalid_argument);
    CHECK_THROWS_AS(pipeline::decode_masks(RealTensor({1, 2, 4}), RealTensor({2, 4, 2, 2}),
                                           head, 2, 2),
                    std::invalid_argument);
    pipeline::DecoderParams bad = head;
    bad.cls = RealTensor({2, 2});
    CHECK_THROWS_AS(pipeline::decode_masks(RealTensor({1, 2, 4}), RealTensor({1, 4, 2, 2}),
                                           bad, 2, 2),
                    std::invalid_argument);
  }
}

TEST_CASE("overlap metrics") {
  SUBCASE("identical masks score perfectly") {
    RealTensor mask({2, 4, 4});
    SplitMix64 rng(460);
    for (double& v : mask.data) v = rng.next_double() < 0.4 ? 1.0 : 0.0;
    mask.data[0] = 1.0;
    mask.data[16] = 1.0;
    CHECK(pipeline::metric_jaccard(mask, mask) == 1.0);
    CHECK(pipeline::metric_fscore(mask, mask) == 1.0);
  }

  SUBCASE("disjoint masks score zero") {
    RealTensor pred({1, 2, 2});
    RealTensor gt({1, 2, 2});
    pred.data[0] = 1.0;
    gt.data[3] = 1.0;
    CHECK(pipeline::metric_jaccard(pred, gt) == 0.0);
    CHECK(pipeline::metric_fscore(pred, gt) == 0.0);
  }

  SUBCASE("half-covering prediction") {
    RealTensor pred = RealTensor::from({1, 1, 4}, {1.0, 1.0, 1.0, 1.0});
    RealTensor gt = RealTensor::from({1, 1, 4}, {1.0, 1.0, 0.0, 0.0});
    CHECK(pipeline::metric_jaccard(pred, gt) == 0.5);
    // precision 1/2, recall 1, beta^2 = 0.3
    CHECK(pipeline::metric_fscore(pred, gt) ==
          doctest::Approx(0.5652173913043479).epsilon(1e-15));
  }

  SUBCASE("empty prediction against a real mask") {
    RealTensor pred({1, 2, 2});
    RealTensor gt({1, 2, 2}, 1.0);
    CHECK(pipeline::metric_jaccard(pred, gt) == 0.0);
    CHECK(pipeline::metric_fscore(pred, gt) == 0.0);
  }

  SUBCASE("two empty masks") {
    RealTensor empty({1, 2, 2});
    CHECK(pipeline::metric_jaccard(empty, empty) == 1.0);
    CHECK(pipeline::metric_fscore(empty, empty) == 0.0);
  }

  SUBCASE("any nonzero value counts as foreground") {
    RealTensor pred = RealTensor::from({1, 1, 4}, {2.0, -0.5, 0.0, 0.0});
    RealTensor ones = RealTensor::from({1, 1, 4}, {1.0, 1.0, 0.0, 0.0});
    RealTensor gt = RealTensor::from({1, 1, 4}, {1.0, 0.0, 1.0, 0.0});
    CHECK(pipeline::metric_jaccard(pred, gt) == pipeline::metric_jaccard(ones, gt));
    CHECK(pipeline::metric_fscore(pred, gt) == pipeline::metric_fscore(ones, gt));
  }

  SUBCASE("per-frame scores average into the metric") {
    RealTensor pred({2, 1, 2});
    RealTensor gt({2, 1, 2});
    pred.data = {1.0, 0.0, 1.0, 1.0};
    gt.data = {1.0, 0.0, 0.0, 0.0};
    std::vector<double> j = pipeline::jaccard_per_frame(pred, gt);
    REQUIRE(j.size() == 2);
    CHECK(j[0] == 1.0);
    CHECK(j[1] == 0.0);
    CHECK(pipeline::metric_jaccard(pred, gt) == 0.5);
  }

  SUBCASE("random masks match counts taken by hand") {
    SplitMix64 rng(461);
    for (int trial = 0; trial < 20; ++trial) {
      RealTensor pred({2, 3, 5});
      RealTensor gt({2, 3, 5});
      for (double& v : pred.data) v = rng.next_double() < 0.5 ? 1.0 : 0.0;
      for (double& v : gt.data) v = rng.next_double() < 0.5 ? 1.0 : 0.0;
      std::vector<double> j = pipeline::jaccard_per_frame(pred, gt);
      std::vector<double> f = pipeline::fscore_per_frame(pred, gt);
      for (std::size_t t = 0; t < 2; ++t) {
        std::size_t tp = 0, fp = 0, fn = 0, uni = 0;
        for (std::size_t p = 0; p < 15; ++p) {
          const bool a = pred.data[t * 15 + p] != 0.0;
          const bool b = gt.data[t * 15 + p] != 0.0;
          if (a && b) ++tp;
          if (a && !b) ++fp;
          if (!a && b) ++fn;
          if (a || b) ++uni;
        }
        const double want_j =
            uni == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(uni);
        CHECK(j[t] == want_j);
        const double prec =
            tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
        const double rec =
            tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
        const double denom = 0.3 * prec + rec;
        const double want_f = denom > 0.0 ? 1.3 * prec * rec / denom : 0.0;
        CHECK(f[t] == doctest::Approx(want_f).epsilon(1e-12));
      }
    }
  }

  SUBCASE("mask shapes must agree") {
    CHECK_THROWS_AS(pipeline::metric_jaccard(RealTensor({1, 2, 2}), RealTensor({1, 2, 3})),
                    std::invalid_argument);
    CHECK_THROWS_AS(pipeline::metric_fscore(RealTensor({2, 2}), RealTensor({2, 2})),
                    std::invalid_argument);
  }
}
