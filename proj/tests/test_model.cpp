#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "sofuse/data.hpp"
#include "sofuse/errors.hpp"
#include "sofuse/model.hpp"
#include "support/grad_suite.hpp"

using namespace sofuse;
using sofuse::testing::random_record;
using sofuse::testing::random_tensor;
using sofuse::testing::tiny_config;

TEST_CASE("config defaults per task") {
  CHECK(ModelConfig::for_task(Task::Ctr).frames == 8);
  CHECK(ModelConfig::for_task(Task::Play3s).frames == 3);
  CHECK(ModelConfig{}.category_count == 19);
  ModelConfig c = tiny_config(FusionKind::AllConnected, HeadKind::Classification5);
  CHECK(ModelConfig::from_json(c.to_json()).to_json() == c.to_json());
  c.conv_kernel = 4;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("category encoder selects weight rows") {
  ModelConfig c = tiny_config(FusionKind::Baseline, HeadKind::Regression);
  AdModel m(c);
  std::mt19937_64 rng(1);
  m.category_encoder.b.value = random_tensor({c.embed_dim}, rng);
  Tape t(false);
  for (int id = 0; id < 19; ++id) {
    const Tensor e = m.encode_category(t, id).value();
    for (std::size_t j = 0; j < c.embed_dim; ++j) {
      CHECK(e[j] == m.category_encoder.w.value.at(id, j) + m.category_encoder.b.value[j]);
    }
  }
  CHECK(m.encode_category(t, 0).value() != m.encode_category(t, 1).value());
  CHECK_THROWS_AS(m.encode_category(t, 19), LabelError);
  CHECK_THROWS_AS(m.encode_category(t, -1), LabelError);
}

TEST_CASE("frame matrix assembly") {
  ModelConfig c;
  AdModel m(c);
  std::mt19937_64 rng(2);
  Tape t(false);
  const Tensor v = random_tensor({8, 128}, rng), a = random_tensor({128}, rng), k = random_tensor({128}, rng);
  const Tensor x = m.assemble_frame_matrix(t.constant(v), t.constant(a), t.constant(k)).value();
  CHECK(x.shape() == Shape{8, 384});
  for (std::size_t r = 0; r < 8; ++r) {
    for (std::size_t j = 0; j < 128; ++j) {
      CHECK(x.at(r, j) == v.at(r, j));
      CHECK(x.at(r, 128 + j) == a[j]);
      CHECK(x.at(r, 256 + j) == k[j]);
    }
  }
  const Tensor one = m.assemble_frame_matrix(t.constant(random_tensor({1, 128}, rng)), t.constant(a), t.constant(k))
                         .value();
  CHECK(one.shape() == Shape{1, 384});
  CHECK_THROWS_AS(m.assemble_frame_matrix(t.constant(v), t.constant(Tensor({127})), t.constant(k)), DimensionError);
}

TEST_CASE("fusion parameter counts at default widths") {
  ModelConfig c;
  c.fusion = FusionKind::AllConnected;
  std::mt19937_64 rng(0);
  FusionBlock f(c, rng);
  CHECK(f.conv1.parameter_count() == 147584);
  CHECK(f.conv2.parameter_count() == 196736);
  CHECK(f.head.parameter_count() == 641);
  CHECK(f.parameter_count() == fusion_parameter_count(c, FusionKind::AllConnected, 128, 128));
  CHECK(fusion_parameter_count(c, FusionKind::Baseline, 128, 128) == 147584 + 49280 + 129);
  CHECK(fusion_parameter_count(c, FusionKind::AllConnected, 128, 128) >
        fusion_parameter_count(c, FusionKind::Baseline, 128, 128));
  CHECK(prunable_weight_count(c, FusionKind::Baseline, 128, 128) == 196608);
  std::size_t prunable = 0;
  for (const WeightSlice& s : f.slices()) prunable += s.prunable ? s.size() : 0;
  CHECK(prunable == prunable_weight_count(c, FusionKind::AllConnected, 128, 128));
}

TEST_CASE("weight slices tile each fusion weight exactly once") {
  for (FusionKind kind : {FusionKind::Baseline, FusionKind::AllConnected}) {
    ModelConfig c = tiny_config(kind, HeadKind::Classification5);
    std::mt19937_64 rng(0);
    FusionBlock f(c, rng);
    for (const Parameter* p : {&f.conv1.w, &f.conv2.w, &f.head.w}) {
      std::vector<int> hits(p->size(), 0);
      for (const WeightSlice& s : f.slices()) {
        if (s.param != p) continue;
        for (auto [b, e] : s.ranges) {
          for (std::size_t i = b; i < e; ++i) ++hits[i];
        }
      }
      CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
    }
  }
}

TEST_CASE("fusion forward") {
  std::mt19937_64 rng(3);
  Tape t(false);
  SUBCASE("zero weights") {
    for (HeadKind head : {HeadKind::Regression, HeadKind::Classification5}) {
      ModelConfig c = tiny_config(FusionKind::AllConnected, head);
      AdModel m(c);
      for (Parameter* p : m.parameters()) p->value.fill(0.0);
      const AdRecord r = random_record(c, 3, rng);
      const Tensor p = m.predict(r);
      for (double v : p.data()) CHECK(v == (head == HeadKind::Regression ? 0.0 : 0.2));
    }
  }
  SUBCASE("baseline equals chained layer calls") {
    ModelConfig c = tiny_config(FusionKind::Baseline, HeadKind::Regression);
    FusionBlock f(c, rng);
    const Tensor x = random_tensor({4, 9}, rng);
    Var chained = f.head.forward(t, max_pool_time(f.conv2.forward(t, f.conv1.forward(t, t.constant(x)))));
    CHECK(f.forward(t, t.constant(x)).value() == chained.value());
  }
  SUBCASE("time is pooled away") {
    ModelConfig c = tiny_config(FusionKind::AllConnected, HeadKind::Classification5);
    FusionBlock f(c, rng);
    CHECK(f.forward(t, t.constant(random_tensor({3, 9}, rng))).shape() == Shape{5});
    CHECK(f.forward(t, t.constant(random_tensor({8, 9}, rng))).shape() == Shape{5});
  }
  SUBCASE("frame permutation with width-1 kernels") {
    for (FusionKind kind : {FusionKind::Baseline, FusionKind::AllConnected}) {
      ModelConfig c = tiny_config(kind, HeadKind::Regression);
      c.conv_kernel = 1;
      FusionBlock f(c, rng);
      Tensor x = random_tensor({6, 9}, rng);
      const Tensor y0 = f.forward(t, t.constant(x)).value();
      std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
      Tensor px({6, 9});
      for (std::size_t r = 0; r < 6; ++r) {
        for (std::size_t j = 0; j < 9; ++j) px.at(r, j) = x.at(perm[r], j);
      }
      CHECK(f.forward(t, t.constant(px)).value() == y0);
    }
  }
}

TEST_CASE("full forward") {
  std::mt19937_64 rng(4);
  ModelConfig c = tiny_config(FusionKind::AllConnected, HeadKind::Classification5);
  AdModel m(c);
  const AdRecord r = random_record(c, 4, rng);
  const Tensor p = m.predict(r);
  CHECK(p == m.predict(r));
  double s = 0;
  for (double v : p.data()) s += v;
  CHECK(std::abs(s - 1.0) < 1e-9);

  ModelConfig cr = tiny_config(FusionKind::Baseline, HeadKind::Regression);
  const Tensor y = AdModel(cr).predict(random_record(cr, 2, rng));
  CHECK(y.size() == 1);
  CHECK(std::isfinite(y[0]));

  AdRecord bad = r;
  bad.audio_frames = Tensor({2, 4});
  try {
    m.predict(bad);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    CHECK(std::string(e.what()).find("audio") != std::string::npos);
  }
}

TEST_CASE("same seed builds identical models") {
  ModelConfig c = tiny_config(FusionKind::AllConnected, HeadKind::Regression);
  c.seed = 77;
  AdModel a(c), b(c);
  auto pa = a.parameters();
  auto pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value == pb[i]->value);
}

TEST_CASE("trim_to_budget") {
  SUBCASE("full budget keeps full width") {
    ModelConfig c;
    const std::size_t full = fusion_parameter_count(c, FusionKind::AllConnected, 128, 128);
    const TrimResult r = trim_to_budget(c, full);
    CHECK(r.retention == 1.0);
    CHECK(r.config.conv_channels == std::array<std::size_t, 2>{128, 128});
  }
  SUBCASE("default widths against the baseline budget") {
    ModelConfig c;
    const std::size_t budget = fusion_parameter_count(c, FusionKind::Baseline, 128, 128);
    const TrimResult r = trim_to_budget(c, budget);
    MESSAGE("retention " << r.retention << " widths " << r.config.conv_channels[0] << "/"
                         << r.config.conv_channels[1] << " count " << r.parameter_count);
    CHECK(r.parameter_count <= budget);
    CHECK(r.parameter_count == fusion_parameter_count(c, FusionKind::AllConnected, r.config.conv_channels[0],
                                                      r.config.conv_channels[1]));
    // No uniform width grid point with a larger retention fits.
    for (std::size_t w = 1; w <= 128; ++w) {
      const bool fits = fusion_parameter_count(c, FusionKind::AllConnected, w, w) <= budget;
      CHECK(fits == (w <= r.config.conv_channels[0]));
    }
    CHECK(r.retention > 0.5);
    CHECK(r.retention < 0.7);
  }
  SUBCASE("unequal widths, exhaustive over retention breakpoints") {
    ModelConfig c = tiny_config(FusionKind::Baseline, HeadKind::Regression);
    c.conv_channels = {12, 7};
    const std::size_t budget = fusion_parameter_count(c, FusionKind::Baseline, 12, 7);
    const TrimResult r = trim_to_budget(c, budget);
    CHECK(r.parameter_count <= budget);
    std::size_t b1 = 0, b2 = 0;
    for (std::size_t num = 1; num <= 84; ++num) {
      const std::size_t w1 = 12 * num / 84, w2 = 7 * num / 84;
      if (w1 == 0 || w2 == 0) continue;
      if (fusion_parameter_count(c, FusionKind::AllConnected, w1, w2) <= budget) b1 = w1, b2 = w2;
    }
    CHECK(r.config.conv_channels[0] == b1);
    CHECK(r.config.conv_channels[1] == b2);
  }
  SUBCASE("infeasible") {
    ModelConfig c;
    CHECK_THROWS_AS(trim_to_budget(c, 100), InfeasibleError);
  }
}
