#include <cmath>
#include <numbers>

#include "doctest.h"
#include "vetta/geom/fourier.hpp"
#include "vetta/geom/vessel.hpp"
#include "vetta/nn/rng.hpp"

using namespace vetta::geom;
using vetta::nn::Rng;

TEST_CASE("lift_fourier layout") {
  FourierConfig cfg;
  auto z = lift_fourier(std::vector<double>{0.0}, cfg);
  REQUIRE(z.size() == 12);
  for (std::size_t i = 0; i < z.size(); ++i) CHECK(z[i] == (i % 2 == 0 ? 1.0 : 0.0));

  FourierConfig one{{1.0}};
  auto h = lift_fourier(std::vector<double>{0.5}, one);
  CHECK(h[0] == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(std::abs(h[1]) < 1e-15);

  CHECK(lift_fourier(std::vector<double>{0.1, 0.2, 0.3}, cfg).size() == 36);
  CHECK_THROWS(FourierConfig{{2.0, 1.0}}.validate());
  CHECK_THROWS(FourierConfig{{0.0, 1.0}}.validate());
}

TEST_CASE("invert_fourier recovers coordinates") {
  FourierConfig cfg;
  const FourierInverter wide(cfg, {-0.5, 1.5});
  CHECK(wide.spacing() == doctest::Approx(0.002));
  const double x = 0.37;
  CHECK(std::abs(wide.invert(lift_fourier(std::vector<double>{x}, cfg))[0] - x) <= 0.001 + 1e-12);

  const FourierInverter unit(cfg, {-0.5, 0.5});
  CHECK(std::abs(unit.invert(lift_fourier(std::vector<double>{0.0}, cfg))[0]) <= 0.0005);

  // Integer octaves make x and x + 1 indistinguishable; the smaller one wins.
  auto a = lift_fourier(std::vector<double>{0.25}, cfg);
  auto b = lift_fourier(std::vector<double>{1.25}, cfg);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-12);
  CHECK(wide.invert(b)[0] == doctest::Approx(0.25).epsilon(1e-9));

  Rng rng(3);
  std::size_t bad = 0;
  for (int i = 0; i < 2000; ++i) {
    const std::vector<double> p{rng.uniform(-0.499, 0.499), rng.uniform(-0.499, 0.499)};
    const auto q = unit.invert(lift_fourier(p, cfg));
    for (int k = 0; k < 2; ++k) bad += std::abs(q[k] - p[k]) > 0.5 * unit.spacing() + 1e-12;
  }
  CHECK(bad == 0);
}

TEST_CASE("gaussian kernel and reflected filtering") {
  auto k = gaussian_kernel(2.0);
  CHECK(k.size() == 17);
  double s = 0;
  for (double v : k) s += v;
  CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(gaussian_kernel(0.0).size() == 1);

  // Constant signals survive reflected filtering unchanged.
  std::vector<double> c(5, 2.5);
  for (double v : gaussian_filter_reflect(c, 3.0)) CHECK(v == doctest::Approx(2.5).epsilon(1e-14));

  // sigma 1 truncate 1: kernel of radius 1; reflected edge "b a | a b".
  auto k1 = gaussian_kernel(1.0, 1.0);
  std::vector<double> x{1.0, 2.0, 4.0};
  auto y = gaussian_filter_reflect(x, 1.0, 1.0);
  CHECK(y[0] == doctest::Approx(k1[0] * 1.0 + k1[1] * 1.0 + k1[2] * 2.0));
  CHECK(y[2] == doctest::Approx(k1[0] * 2.0 + k1[1] * 4.0 + k1[2] * 4.0));
}

TEST_CASE("smoothed curvature") {
  std::vector<Point4> line;
  for (int i = 0; i < 20; ++i) line.push_back({0.5 * i, -0.25 * i, 2.0 * i, 1.0});
  for (double c : gaussian_smoothed_curvature(line)) CHECK(std::abs(c) < 1e-12);
  CHECK(gaussian_smoothed_curvature(line).size() == 18);
  CHECK_THROWS(gaussian_smoothed_curvature(std::vector<Point4>(3, Point4{0, 0, 0, 1})));

  // sigma -> 0 reduces to raw second differences.
  Rng rng(11);
  std::vector<Point4> wiggle;
  for (int i = 0; i < 12; ++i) wiggle.push_back({rng.normal(), rng.normal(), rng.normal(), 1.0});
  auto raw = gaussian_smoothed_curvature(wiggle, 0.0);
  for (std::size_t i = 0; i + 2 < wiggle.size(); ++i) {
    double s = 0;
    for (int a = 0; a < 4; ++a) {
      const double d = wiggle[i + 2][a] - 2 * wiggle[i + 1][a] + wiggle[i][a];
      s += d * d;
    }
    CHECK(raw[i] == doctest::Approx(std::sqrt(s)).epsilon(1e-12));
  }

  // A circle's smoothed second difference has a constant magnitude away from
  // the ends; sample a longer arc so the reflected edges fall outside the
  // 64 central points.
  const int n = 64, pad = 12;
  std::vector<Point4> arc;
  for (int i = -pad; i < n + pad; ++i) {
    const double th = 2 * std::numbers::pi * i / n;
    arc.push_back({std::cos(th), std::sin(th), 0.0, 1.0});
  }
  auto curv = gaussian_smoothed_curvature(arc);
  double mean = 0, var = 0;
  for (int i = pad - 1; i < pad - 1 + n; ++i) mean += curv[i];
  mean /= n;
  for (int i = pad - 1; i < pad - 1 + n; ++i) var += (curv[i] - mean) * (curv[i] - mean);
  CHECK(std::sqrt(var / n) / mean < 0.05);
}

TEST_CASE("compute_segments") {
  const std::vector<double> c{0, 1, 0, 1};
  auto segs = compute_segments(c, 2, 1.0);
  REQUIRE(segs.size() == 2);
  CHECK(segs[0] == Segment{0, 1});
  CHECK(segs[1] == Segment{1, 4});
  CHECK(compute_segments_raw(c, 2, 1.0) == segs);

  std::vector<double> flat(64, 0.3);
  auto unit = compute_segments(flat, 64);
  REQUIRE(unit.size() == 64);
  for (std::size_t i = 0; i < 64; ++i) CHECK(unit[i] == Segment{i, i + 1});

  // The unrepaired loop leaves the tail uncovered here.
  const std::vector<double> spike{1, 0, 0, 0};
  CHECK(compute_segments_raw(spike, 2, 1.0).back().second != 4);
  CHECK(compute_segments(spike, 2, 1.0).back().second == 4);

  Rng rng(5);
  std::size_t violations = 0, repaired = 0;
  for (int trial = 0; trial < 3000; ++trial) {
    const std::size_t n = 1 + rng.index(80);
    const std::size_t k = 1 + rng.index(n);
    std::vector<double> cv(n);
    const bool sparse = rng.uniform() < 0.3;
    for (auto& v : cv) v = sparse ? (rng.uniform() < 0.1 ? rng.uniform() * 5 : 0.0) : rng.uniform();
    auto raw = compute_segments_raw(cv, k, 0.75);
    auto out = compute_segments(cv, k);
    bool raw_ok = raw.size() == k && raw.back().second == n;
    for (std::size_t i = 0; i < raw.size() && raw_ok; ++i)
      raw_ok = raw[i].first < raw[i].second && (i == 0 ? raw[i].first == 0 : raw[i].first == raw[i - 1].second);
    if (raw_ok) {
      CHECK(raw == out);
    } else {
      ++repaired;
    }
    bool ok = out.size() == k && out.front().first == 0 && out.back().second == n;
    for (std::size_t i = 0; i < out.size() && ok; ++i)
      ok = out[i].first < out[i].second && (i == 0 || out[i].first == out[i - 1].second);
    violations += !ok;
  }
  CHECK(violations == 0);
  CHECK(repaired > 0);
}

TEST_CASE("vessel normalization") {
  PolylineVessel v{{{1, 1, 1, 2}, {1.5, 1, 2, 1.5}, {1, 1, 3, 1}}};
  auto nv = normalize_vessel(v);
  CHECK(nv.points.front() == Point4{0, 0, 0, 1});
  CHECK(nv.points.back()[2] == doctest::Approx(1.0));
  CHECK(nv.points.back()[3] == doctest::Approx(0.5));
  auto back = denormalize_vessel(nv);
  for (std::size_t i = 0; i < v.points.size(); ++i)
    for (int c = 0; c < 4; ++c) CHECK(std::abs(back.points[i][c] - v.points[i][c]) < 1e-9);

  auto again = normalize_vessel(PolylineVessel{nv.points});
  for (std::size_t i = 0; i < nv.points.size(); ++i)
    for (int c = 0; c < 4; ++c) CHECK(again.points[i][c] == doctest::Approx(nv.points[i][c]).epsilon(1e-15));

  CHECK_THROWS(normalize_vessel(PolylineVessel{{{0, 0, 0, 1}, {1, 0, 0, 1}, {0, 0, 0, 1}}}));
  CHECK_THROWS(normalize_vessel(PolylineVessel{{{0, 0, 0, 1}}}));
  CHECK(v.arc_length() >= v.endpoint_distance());
}

TEST_CASE("resample by arc length") {
  std::vector<Point4> pts{{0, 0, 0, 1}, {1, 0, 0, 2}, {1, 3, 0, 2}};
  auto r = resample_by_arc_length(pts, 5);
  REQUIRE(r.size() == 5);
  CHECK(r[0] == pts[0]);
  CHECK(r[4] == pts[2]);
  CHECK(r[1][0] == doctest::Approx(1.0));
  CHECK(r[1][1] == doctest::Approx(0.0));
  CHECK(r[2][1] == doctest::Approx(1.0));
}

TEST_CASE("endpoint mask and curve decoding") {
  CHECK(eval_mask(0.0, MaskMode::eval) == 0.0);
  CHECK(eval_mask(1.0, MaskMode::eval) == 0.0);
  CHECK(eval_mask(0.5, MaskMode::eval) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(eval_mask(0.3, MaskMode::train) == 1.0);
  CHECK_THROWS(eval_mask(-0.1, MaskMode::eval));
  CHECK_THROWS(eval_mask(1.5, MaskMode::train));

  const Point4 a{0.1, -2, 3, 1}, b{1.7, 0.3, -1, 0.4};
  auto mid = decode_curve_point(a, b, {0, 0, 0, 0}, 0.5, MaskMode::eval);
  for (int c = 0; c < 4; ++c) CHECK(mid[c] == doctest::Approx(0.5 * (a[c] + b[c])));
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    const Point4 f{rng.normal(0, 10), rng.normal(0, 10), rng.normal(0, 10), rng.normal(0, 10)};
    CHECK(decode_curve_point(a, b, f, 0.0, MaskMode::eval) == a);
    CHECK(decode_curve_point(a, b, f, 1.0, MaskMode::eval) == b);
  }
  const Point4 k{0.5, 0.5, 0.5, 0.5};
  auto tr = decode_curve_point(a, b, k, 0.25, MaskMode::train);
  for (int c = 0; c < 4; ++c) CHECK(tr[c] == doctest::Approx(a[c] + 0.25 * (b[c] - a[c]) + 0.5));
}
