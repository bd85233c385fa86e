#include <doctest.h>

#include <cmath>
#include <set>

#include "oodmark/model.hpp"
#include "oodmark/trigger.hpp"

using namespace oodmark;

TEST_CASE("all known patterns construct with valid masks") {
  const auto patterns = list_patterns();
  REQUIRE(patterns.size() == 6);
  std::set<std::string> names;
  for (const auto& info : patterns) {
    names.insert(info.name);
    const TriggerSpec t = make_trigger(info.name, 32, 32, 2);
    CHECK(t.name == info.name);
    CHECK(t.height == 32);
    CHECK(t.width == 32);
    CHECK(t.target_label == 2);
    CHECK(t.mask.size() == 32 * 32);
    CHECK(t.pattern.size() == 32 * 32 * 3);
    bool any = false;
    for (float m : t.mask) {
      CHECK(m >= 0.0f);
      CHECK(m <= 1.0f);
      if (m > 0.0f) any = true;
    }
    CHECK(any);
  }
  CHECK(names.size() == 6);
  CHECK(names.count("badnet_grid") == 1);
  CHECK(names.count("trojan_wm") == 1);
}

TEST_CASE("unknown pattern names list the alternatives") {
  try {
    make_trigger("no_such_pattern", 32, 32, 0);
    FAIL("expected an exception");
  } catch (const std::exception& e) {
    const std::string msg = e.what();
    CHECK(msg.find("no_such_pattern") != std::string::npos);
    CHECK(msg.find("badnet_grid") != std::string::npos);
  }
}

TEST_CASE("apply_trigger matches the per-pixel blend formula") {
  Image img(32, 32);
  Rng rng(44);
  for (auto& p : img.pixels) p = static_cast<float>(rng.uniform());

  for (const auto& info : list_patterns()) {
    const TriggerSpec t = make_trigger(info.name, 32, 32, 0);
    const Image out = apply_trigger(img, t);
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x)
        for (int c = 0; c < 3; ++c) {
          const float m = t.mask_at(y, x);
          const float p = t.pattern_at(y, x, c);
          const float v = img.at(y, x, c);
          const float expect = t.blend == BlendMode::replace
                                   ? (1.0f - m) * v + m * p
                                   : std::min(1.0f, std::max(0.0f, v + m * p));
          CHECK(out.at(y, x, c) == doctest::Approx(expect).epsilon(1e-6));
        }
  }
}

TEST_CASE("masked-out pixels are untouched by replace triggers") {
  Image img(32, 32);
  img.pixels.assign(img.pixels.size(), 0.25f);
  const TriggerSpec t = make_trigger("trojan_3x3", 32, 32, 0);
  const Image out = apply_trigger(img, t);
  size_t changed = 0;
  for (size_t i = 0; i < img.pixels.size(); ++i)
    if (out.pixels[i] != img.pixels[i]) ++changed;
  CHECK(changed == 3 * 3 * 3);  // the solid square only
}

TEST_CASE("l0 trigger touches exactly the configured pixel count") {
  TriggerParams params;
  params.l0_pixels = 12;
  const TriggerSpec t = make_trigger("l0_inv", 32, 32, 0, params);
  size_t on = 0;
  for (float m : t.mask)
    if (m > 0.0f) ++on;
  CHECK(on == 12);
}

TEST_CASE("batch application equals per-image application") {
  const TriggerSpec t = make_trigger("smooth", 32, 32, 1);
  Rng rng(70);
  std::vector<Image> imgs(3, Image(32, 32));
  for (auto& img : imgs)
    for (auto& p : img.pixels) p = static_cast<float>(rng.uniform());
  std::vector<const Image*> ptrs = {&imgs[0], &imgs[1], &imgs[2]};
  Tensor batch = images_to_batch(ptrs);
  apply_trigger_batch(batch, t);
  for (size_t i = 0; i < 3; ++i) {
    const Image single = apply_trigger(imgs[i], t);
    const Tensor one = image_to_batch(single);
    for (int64_t j = 0; j < one.numel(); ++j)
      CHECK(batch[static_cast<int64_t>(i) * one.numel() + j] ==
            doctest::Approx(one[j]).epsilon(1e-6));
  }
}

TEST_CASE("trigger json roundtrip is exact") {
  const TriggerSpec t = make_trigger("trojan_wm", 32, 32, 7);
  const TriggerSpec back = TriggerSpec::from_json(t.to_json());
  CHECK(back.name == t.name);
  CHECK(back.height == t.height);
  CHECK(back.mask == t.mask);
  CHECK(back.pattern == t.pattern);
  CHECK(back.blend == t.blend);
  CHECK(back.target_label == 7);
}

TEST_CASE("triggers are deterministic per seed") {
  TriggerParams a, b;
  a.seed = 5;
  b.seed = 6;
  CHECK(make_trigger("l0_inv", 32, 32, 0, a).mask == make_trigger("l0_inv", 32, 32, 0, a).mask);
  CHECK(make_trigger("l0_inv", 32, 32, 0, a).mask != make_trigger("l0_inv", 32, 32, 0, b).mask);
}

TEST_CASE("triggered outputs stay in range") {
  Image img(32, 32);
  Rng rng(81);
  for (auto& p : img.pixels) p = static_cast<float>(rng.uniform());
  for (const auto& info : list_patterns()) {
    const Image out = apply_trigger(img, make_trigger(info.name, 32, 32, 0));
    for (float p : out.pixels) {
      CHECK(p >= 0.0f);
      CHECK(p <= 1.0f);
    }
  }
}
