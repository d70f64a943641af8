#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "aoi/core.hpp"
#include "aoi/rng.hpp"

using namespace aoi;

TEST_CASE("bbox_iou basic cases") {
  const BoundingBox a{0, 0, 10, 10};
  CHECK(bbox_iou(a, a) == doctest::Approx(1.0));
  CHECK(bbox_iou(a, {20, 20, 30, 30}) == 0.0);
  // overlap 10x5 = 50, union 100 + 100 - 50 = 150
  CHECK(bbox_iou(a, {0, 5, 10, 15}) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("bbox_iou is symmetric on random boxes") {
  Rng rng(123);
  for (int i = 0; i < 200; ++i) {
    BoundingBox a{}, b{};
    a.xmin = static_cast<int>(rng.uniform_int(0, 50));
    a.ymin = static_cast<int>(rng.uniform_int(0, 50));
    a.xmax = a.xmin + static_cast<int>(rng.uniform_int(1, 30));
    a.ymax = a.ymin + static_cast<int>(rng.uniform_int(1, 30));
    b.xmin = static_cast<int>(rng.uniform_int(0, 50));
    b.ymin = static_cast<int>(rng.uniform_int(0, 50));
    b.xmax = b.xmin + static_cast<int>(rng.uniform_int(1, 30));
    b.ymax = b.ymin + static_cast<int>(rng.uniform_int(1, 30));
    CHECK(bbox_iou(a, b) == bbox_iou(b, a));
    CHECK(bbox_iou(a, b) >= 0.0);
    CHECK(bbox_iou(a, b) <= 1.0);
  }
}

TEST_CASE("transform_apply") {
  const Similarity2D identity;
  const Vec2 p = transform_apply(identity, {3, 4});
  CHECK(p.x == doctest::Approx(3.0));
  CHECK(p.y == doctest::Approx(4.0));

  Similarity2D quarter;
  quarter.angle = M_PI / 2.0;
  const Vec2 q = transform_apply(quarter, {1, 0});
  CHECK(q.x == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(q.y == doctest::Approx(1.0));

  Similarity2D st{2.0, 0.0, 1.0, 1.0};
  const Vec2 r = transform_apply(st, {3, 4});
  CHECK(r.x == doctest::Approx(7.0));
  CHECK(r.y == doctest::Approx(9.0));
}

TEST_CASE("compose with inverse is the identity") {
  Rng rng(7);
  for (int i = 0; i < 100; ++i) {
    Similarity2D t;
    t.scale = rng.uniform(0.5, 2.0);
    t.angle = rng.uniform(-3.0, 3.0);
    t.tx = rng.uniform(-100.0, 100.0);
    t.ty = rng.uniform(-100.0, 100.0);
    const Similarity2D id = compose(t, inverse(t));
    const Vec2 p{rng.uniform(-50.0, 50.0), rng.uniform(-50.0, 50.0)};
    const Vec2 q = transform_apply(id, p);
    CHECK(std::abs(q.x - p.x) < 1e-9);
    CHECK(std::abs(q.y - p.y) < 1e-9);
  }
}

TEST_CASE("defect class names round-trip") {
  for (int i = 0; i < kNumDefectClasses; ++i) {
    const auto cls = static_cast<DefectClass>(i);
    const auto back = defect_class_from_name(defect_class_name(cls));
    REQUIRE(back.has_value());
    CHECK(static_cast<int>(*back) == i);
  }
  CHECK(defect_class_name(DefectClass::short_circuit) == "short");
  CHECK(defect_class_folder(DefectClass::missing_hole) == "Missing_hole");
  CHECK(!defect_class_from_name("bogus").has_value());
}

TEST_CASE("image invariants") {
  const ColorImage c(4, 3, 10, 20, 30);
  CHECK(c.data.size() == 4u * 3u * 3u);
  CHECK(c.at(2, 1, 1) == 20);
  const GrayImage g(5, 2, 7);
  CHECK(g.data.size() == 10u);
  CHECK_THROWS_AS(GrayImage(0, 4), std::invalid_argument);
}

TEST_CASE("rotation_about_center pins the raster center") {
  const Similarity2D t = rotation_about_center(M_PI / 2.0, 11, 11);
  const Vec2 c = transform_apply(t, {5, 5});
  CHECK(c.x == doctest::Approx(5.0));
  CHECK(c.y == doctest::Approx(5.0));
  // 90 degrees maps (x,y) -> (N-1-y, x)
  const Vec2 p = transform_apply(t, {7, 2});
  CHECK(p.x == doctest::Approx(10.0 - 2.0));
  CHECK(p.y == doctest::Approx(7.0));
}
