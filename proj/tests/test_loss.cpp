#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include <doctest.h>

#include "decloss/loss.hpp"
#include "decloss/patching.hpp"
#include "decloss/rng.hpp"
#include "oracles.hpp"

using namespace decloss;

namespace {

std::vector<double> random_values(std::uint64_t seed, Index n) {
  Rng rng(seed);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (double& x : v) x = rng.next_double();
  return v;
}

oracle::ContrastParams oracle_params(const ContrastConfig& cfg) {
  oracle::ContrastParams p;
  p.eta = cfg.eta;
  p.t_pos = cfg.t_pos;
  p.t_neg = cfg.t_neg;
  p.max_value = cfg.max_value;
  p.mask_clamp = cfg.mask_clamp;
  p.cos_epsilon = cfg.cos_epsilon;
  p.divide_outside = cfg.temp_mode == TempMode::outside_exp;
  return p;
}

// Full reference pipeline: enhance both inputs, patchify, contrastive loss.
double oracle_decloss(const Tensor& sr, const Tensor& hr, const EnhanceConfig& ecfg,
                      const ContrastConfig& ccfg) {
  const Index b = sr.extent(0), c = sr.extent(1), h = sr.extent(2), w = sr.extent(3);
  const bool rm = ecfg.inverse == InverseMode::real_matrix;
  std::vector<double> es = oracle::enhance(sr.values(), b, c, h, w, ecfg.alpha, ecfg.mu_for(h),
                                           ecfg.mu_for(w), rm);
  std::vector<double> eh = oracle::enhance(hr.values(), b, c, h, w, ecfg.alpha, ecfg.mu_for(h),
                                           ecfg.mu_for(w), rm);
  const Index p = ccfg.patch_size;
  std::vector<double> ps = oracle::patchify(es, b, c, h, w, p);
  std::vector<double> ph = oracle::patchify(eh, b, c, h, w, p);
  const Index rows = b * (h / p) * (w / p);
  return oracle::spatial_loss(ps, ph, rows, c * p * p, oracle_params(ccfg));
}

}  // namespace

TEST_CASE("cosine similarity: identical, orthogonal, and zero rows") {
  Tensor a = Tensor::from({2, 2}, {1.0, 0.0, 0.0, 1.0});
  Tensor s = cosine_similarity_matrix(a, a, 1e-12);
  CHECK(s.at({0, 0}) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(s.at({1, 1}) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(s.at({0, 1}) == 0.0);
  CHECK(s.at({1, 0}) == 0.0);

  Tensor z = Tensor::from({2, 2}, {0.0, 0.0, 3.0, 4.0});
  Tensor sz = cosine_similarity_matrix(z, z, 1e-12);
  CHECK(sz.at({0, 0}) == 0.0);
  CHECK(sz.at({0, 1}) == 0.0);
  CHECK(sz.at({1, 1}) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("cosine similarity entries stay within [-1, 1] on random rows") {
  Tensor a = Tensor::from({5, 7}, random_values(11, 35));
  Tensor b = Tensor::from({5, 7}, random_values(12, 35));
  Tensor s = cosine_similarity_matrix(a, b, 1e-12);
  for (double v : s.values()) {
    CHECK(v <= 1.0 + 1e-12);
    CHECK(v >= -1.0 - 1e-12);
  }
  CHECK_THROWS_AS(cosine_similarity_matrix(a, Tensor::from({4, 7}, random_values(13, 28)), 1e-12),
                  ShapeError);
}

TEST_CASE("psnr mask: reference values, symmetry, clamp, and no tape") {
  ContrastConfig cfg;
  // two 2x2 single-channel patches differing in one pixel by 0.5
  Tensor rows = Tensor::from({2, 4}, {0.1, 0.2, 0.3, 0.4, 0.6, 0.2, 0.3, 0.4});
  Tensor m = psnr_mask(rows, cfg);
  const double ref = -20.0 * std::log10(0.5);
  CHECK(m.at({0, 1}) == doctest::Approx(ref).epsilon(1e-14));
  CHECK(m.at({0, 1}) == doctest::Approx(6.020599913279624).epsilon(1e-12));
  CHECK(m.at({1, 0}) == m.at({0, 1}));
  CHECK(m.at({0, 0}) == 100.0);
  CHECK(m.at({1, 1}) == 100.0);

  // differing by 1.0 everywhere: distance 2, mask negative
  Tensor far = Tensor::from({2, 4}, {0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0});
  Tensor mf = psnr_mask(far, cfg);
  CHECK(mf.at({0, 1}) == doctest::Approx(-6.020599913279624).epsilon(1e-12));

  // identical rows clamp instead of diverging
  Tensor same = Tensor::from({2, 3}, {0.5, 0.5, 0.5, 0.5, 0.5, 0.5});
  CHECK(psnr_mask(same, cfg).at({0, 1}) == 100.0);

  // the mask never joins a tape, even when the input is a recorded variable
  Tape tape;
  Tensor taped = tape.variable({2, 4}, {0.1, 0.2, 0.3, 0.4, 0.6, 0.2, 0.3, 0.4});
  CHECK_FALSE(psnr_mask(taped, cfg).requires_grad());
}

TEST_CASE("similarity bundle partitions every pair") {
  ContrastConfig cfg;
  Tensor sr = Tensor::from({4, 6}, random_values(21, 24));
  Tensor hr = Tensor::from({4, 6}, random_values(22, 24));
  SimilarityBundle b = similarity_bundle(sr, hr, cfg);
  REQUIRE(b.pos.size() == 16);
  for (Index i = 0; i < 4; ++i) {
    CHECK(b.pos[i * 4 + i] == 1);  // self pair always positive
    for (Index j = 0; j < 4; ++j) {
      CHECK((b.pos[i * 4 + j] == 0 || b.pos[i * 4 + j] == 1));
      CHECK(b.mask.at({i, j}) == b.mask.at({j, i}));
      CHECK(b.pos[i * 4 + j] == (b.mask.at({i, j}) >= cfg.eta ? 1 : 0));
    }
  }
}

TEST_CASE("orthonormal two-patch construction hits the closed forms") {
  Tensor rows = Tensor::from({2, 2}, {1.0, 0.0, 0.0, 1.0});
  ContrastConfig cfg;  // eta 5, t = (0.5, 1.5), inside_exp
  Tensor inside = spatial_contrastive_loss(rows, rows, cfg);
  CHECK(std::fabs(inside.value() - (-2.0)) < 1e-12);

  cfg.temp_mode = TempMode::outside_exp;
  Tensor outside = spatial_contrastive_loss(rows, rows, cfg);
  CHECK(std::fabs(outside.value() - (-(1.0 + std::log(3.0)))) < 1e-12);
}

TEST_CASE("contrastive loss matches the straight-line reference on random rows") {
  for (std::uint64_t seed : {101, 202, 303}) {
    Tensor sr = Tensor::from({6, 10}, random_values(seed, 60));
    Tensor hr = Tensor::from({6, 10}, random_values(seed + 7, 60));
    for (TempMode mode : {TempMode::inside_exp, TempMode::outside_exp}) {
      ContrastConfig cfg;
      cfg.temp_mode = mode;
      Tensor ld = spatial_contrastive_loss(sr, hr, cfg);
      const double ref = oracle::spatial_loss(sr.values(), hr.values(), 6, 10,
                                              oracle_params(cfg));
      CHECK(std::fabs(ld.value() - ref) < 1e-10);
    }
  }
}

TEST_CASE("degenerate partition is rejected with the offending row named") {
  std::vector<double> same = {0.3, 0.7, 0.1, 0.5};
  std::vector<double> rows;
  for (int i = 0; i < 3; ++i) rows.insert(rows.end(), same.begin(), same.end());
  Tensor flat = Tensor::from({3, 4}, std::move(rows));
  ContrastConfig cfg;
  try {
    spatial_contrastive_loss(flat, flat, cfg);
    FAIL("expected a degenerate-partition error");
  } catch (const ValueError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("row 0") != std::string::npos);
    CHECK(msg.find("negative") != std::string::npos);
  }
}

TEST_CASE("decloss pipeline matches the reference pipeline") {
  for (std::uint64_t seed : {5, 6}) {
    Tensor sr = Tensor::from({2, 3, 8, 8}, random_values(seed, 2 * 3 * 8 * 8));
    Tensor hr = Tensor::from({2, 3, 8, 8}, random_values(seed + 50, 2 * 3 * 8 * 8));
    ContrastConfig ccfg;
    ccfg.patch_size = 4;
    for (InverseMode inv : {InverseMode::exact, InverseMode::real_matrix}) {
      EnhanceConfig ecfg;
      ecfg.inverse = inv;
      for (TempMode mode : {TempMode::inside_exp, TempMode::outside_exp}) {
        ccfg.temp_mode = mode;
        Tensor got = decloss::decloss(sr, hr, ecfg, ccfg);
        CHECK(std::fabs(got.value() - oracle_decloss(sr, hr, ecfg, ccfg)) < 1e-10);
      }
    }
  }
}

TEST_CASE("sr equal to hr puts ones on the cross-similarity diagonal") {
  Tensor img = Tensor::from({1, 3, 8, 8}, random_values(40, 3 * 8 * 8));
  EnhanceConfig ecfg;
  ContrastConfig ccfg;
  ccfg.patch_size = 4;
  Tensor rows = patchify(enhance(img, ecfg), ccfg.patch_size).flattened();
  SimilarityBundle b = similarity_bundle(rows, rows, ccfg);
  const Index n = rows.extent(0);
  for (Index i = 0; i < n; ++i) CHECK(b.s_sr_hr.at({i, i}) == doctest::Approx(1.0).epsilon(1e-12));

  Tensor ld = decloss::decloss(img, img, ecfg, ccfg);
  CHECK(std::fabs(ld.value() - oracle_decloss(img, img, ecfg, ccfg)) < 1e-10);
}

TEST_CASE("decloss is invariant to rescaling the sr input") {
  Tensor sr = Tensor::from({2, 3, 8, 8}, random_values(61, 2 * 3 * 8 * 8));
  Tensor hr = Tensor::from({2, 3, 8, 8}, random_values(62, 2 * 3 * 8 * 8));
  EnhanceConfig ecfg;
  ContrastConfig ccfg;
  ccfg.patch_size = 4;
  const double base = decloss::decloss(sr, hr, ecfg, ccfg).value();
  for (double c : {0.5, 2.0, 10.0}) {
    const double scaled = decloss::decloss(scale(sr, c), hr, ecfg, ccfg).value();
    CHECK(std::fabs(scaled - base) < 1e-8);
  }
  // powers of two rescale every intermediate exactly, so 2x is bit-identical
  const double two = decloss::decloss(scale(sr, 2.0), hr, ecfg, ccfg).value();
  CHECK(std::memcmp(&two, &base, sizeof(double)) == 0);
}

TEST_CASE("decloss is invariant to a joint batch permutation") {
  const Index b = 3, c = 2, h = 8, w = 8;
  Tensor sr = Tensor::from({b, c, h, w}, random_values(71, b * c * h * w));
  Tensor hr = Tensor::from({b, c, h, w}, random_values(72, b * c * h * w));
  const std::vector<Index> perm = {2, 0, 1};
  auto permute = [&](const Tensor& t) {
    std::vector<double> out(t.values().size());
    const Index item = c * h * w;
    for (Index i = 0; i < b; ++i)
      for (Index k = 0; k < item; ++k) out[i * item + k] = t.values()[perm[i] * item + k];
    return Tensor::from({b, c, h, w}, std::move(out));
  };
  EnhanceConfig ecfg;
  ContrastConfig ccfg;
  ccfg.patch_size = 4;
  const double base = decloss::decloss(sr, hr, ecfg, ccfg).value();
  const double shuffled = decloss::decloss(permute(sr), permute(hr), ecfg, ccfg).value();
  CHECK(std::fabs(shuffled - base) < 1e-12);
}

TEST_CASE("outside-mode temperatures shift the value by a constant and leave gradients alone") {
  const Index b = 1, c = 2, h = 8, w = 8;
  std::vector<double> sr_vals = random_values(81, b * c * h * w);
  Tensor hr = Tensor::from({b, c, h, w}, random_values(82, b * c * h * w));
  EnhanceConfig ecfg;
  ContrastConfig cfg;
  cfg.patch_size = 4;
  cfg.temp_mode = TempMode::outside_exp;

  auto run = [&](double t_pos, double t_neg, std::vector<double>& grad_out) {
    Tape tape;
    Tensor sr = tape.variable({b, c, h, w}, sr_vals);
    ContrastConfig local = cfg;
    local.t_pos = t_pos;
    local.t_neg = t_neg;
    Tensor ld = decloss::decloss(sr, hr, ecfg, local);
    tape.backward(ld);
    grad_out.assign(sr.grad().begin(), sr.grad().end());
    return ld.value();
  };

  std::vector<double> g_ref;
  const double v_ref = run(1.0, 1.0, g_ref);
  for (double t_pos : {0.5, 1.5, 2.0, 4.0, 8.0}) {
    std::vector<double> g;
    const double v = run(t_pos, 1.5, g);
    const double expected = v_ref - std::log(1.5 / t_pos);
    CHECK(std::fabs(v - expected) < 1e-10);
    REQUIRE(g.size() == g_ref.size());
    CHECK(std::memcmp(g.data(), g_ref.data(), g.size() * sizeof(double)) == 0);
  }
}

TEST_CASE("gradients reach sr but never hr") {
  Tape tape;
  Tensor sr = tape.variable({1, 1, 8, 8}, random_values(91, 64));
  Tensor hr = tape.variable({1, 1, 8, 8}, random_values(92, 64));
  EnhanceConfig ecfg;
  ContrastConfig ccfg;
  ccfg.patch_size = 4;
  Tensor ld = decloss::decloss(sr, hr, ecfg, ccfg);
  tape.backward(ld);
  REQUIRE(sr.has_grad());
  CHECK_FALSE(hr.has_grad());
  bool any_nonzero = false;
  for (double g : sr.grad()) any_nonzero |= g != 0.0;
  CHECK(any_nonzero);
}

TEST_CASE("decloss gradient agrees with central differences") {
  Tensor hr = Tensor::from({2, 3, 8, 8}, random_values(123, 2 * 3 * 8 * 8));
  EnhanceConfig ecfg;
  ContrastConfig ccfg;
  ccfg.patch_size = 4;
  ScalarFn f = [&](Tape&, const Tensor& x) { return decloss::decloss(x, hr, ecfg, ccfg); };
  Tensor sr = Tensor::from({2, 3, 8, 8}, random_values(124, 2 * 3 * 8 * 8));
  CHECK(finite_diff_check(f, sr) < 1e-4);
}

TEST_CASE("l1 loss values, gradient, and mean reduction") {
  Tensor a = Tensor::from({1, 1, 2, 2}, {0.1, 0.2, 0.3, 0.4});
  CHECK(l1_loss(a, a).value() == 0.0);

  Tensor b = Tensor::from({1, 1, 2, 2}, {0.6, 0.7, 0.8, 0.9});
  CHECK(l1_loss(b, a).value() == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(l1_loss(b, a, true).value() == doctest::Approx(0.5).epsilon(1e-14));

  Tape tape;
  Tensor x = tape.variable({1, 1, 2, 2}, {0.5, 0.1, 0.9, 0.3});
  Tensor target = Tensor::from({1, 1, 2, 2}, {0.2, 0.4, 0.9, 0.0});
  tape.backward(l1_loss(x, target));
  const std::vector<double> want = {1.0, -1.0, 0.0, 1.0};  // sign(x - target), 0 at ties
  for (std::size_t i = 0; i < want.size(); ++i) CHECK(x.grad()[i] == want[i]);

  CHECK_THROWS_AS(l1_loss(a, Tensor::from({1, 1, 1, 4}, {0., 0., 0., 0.})), ShapeError);
}

TEST_CASE("total loss composition and weight handling") {
  Tensor sr = Tensor::from({1, 3, 8, 8}, random_values(131, 3 * 8 * 8));
  Tensor hr = Tensor::from({1, 3, 8, 8}, random_values(132, 3 * 8 * 8));
  EnhanceConfig ecfg;
  ContrastConfig ccfg;
  ccfg.patch_size = 4;

  // single-term weights reproduce the bare terms bit for bit
  const double only_l1 = total_loss(sr, hr, {1.0, 0.0, 0.0}, ecfg, ccfg).value();
  const double bare_l1 = l1_loss(sr, hr).value();
  CHECK(std::memcmp(&only_l1, &bare_l1, sizeof(double)) == 0);

  const double only_ld = total_loss(sr, hr, {0.0, 0.0, 1.0}, ecfg, ccfg).value();
  const double bare_ld = decloss::decloss(sr, hr, ecfg, ccfg).value();
  CHECK(std::memcmp(&only_ld, &bare_ld, sizeof(double)) == 0);

  // hook supplies the middle term
  PerceptualHook hook = [](const Tensor& s, const Tensor& h) { return l1_loss(s, h, true); };
  const double mixed = total_loss(sr, hr, {1e-2, 1.0, 3e-5}, ecfg, ccfg, hook).value();
  const double want = 1e-2 * bare_l1 + l1_loss(sr, hr, true).value() + 3e-5 * bare_ld;
  CHECK(mixed == doctest::Approx(want).epsilon(1e-12));

  CHECK_THROWS_AS(total_loss(sr, hr, {1.0, 0.5, 0.0}, ecfg, ccfg), ConfigError);
  CHECK_THROWS_AS(total_loss(sr, hr, {-1.0, 0.0, 0.0}, ecfg, ccfg), ConfigError);
  CHECK(total_loss(sr, hr, {0.0, 0.0, 0.0}, ecfg, ccfg).value() == 0.0);
}

TEST_CASE("contrast config invariants are enforced") {
  ContrastConfig cfg;
  cfg.t_pos = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = ContrastConfig{};
  cfg.t_neg = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = ContrastConfig{};
  cfg.patch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = ContrastConfig{};
  cfg.max_value = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = ContrastConfig{};
  cfg.mask_clamp = 4.0;  // below eta
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
