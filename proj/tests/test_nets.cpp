#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "mscmt/gradcheck.hpp"
#include "mscmt/image.hpp"
#include "mscmt/losses.hpp"
#include "mscmt/network.hpp"

using namespace mscmt;

namespace {

template <typename T>
TensorPtr<T> random_plane(Rng& rng, int size, T lo, T hi) {
  auto t = make_tensor<T>({1, size, size});
  for (auto& v : t->values) v = lo + (hi - lo) * static_cast<T>(rng.uniform());
  return t;
}

// Closed-form parameter counts, computed from the layer plan arithmetic only.
long long conv_count(int out, int in, int k) {
  return static_cast<long long>(out) * in * k * k + out;
}

long long region_count(const NetworkConfig& c) {
  const auto& b = c.base_channels;
  long long n = 0;
  int in = 1;
  for (int i = 0; i < 4; ++i) {
    n += conv_count(b[i], in, 3);    // down
    n += conv_count(b[i], b[i], 3);  // conv1
    n += conv_count(b[i], in, 1);    // proj
    in = b[i];
  }
  const int dec_in[4] = {b[3], b[2], b[1], b[0]};
  const int dec_out[4] = {b[2], b[1], b[0], b[0]};
  for (int j = 0; j < 4; ++j) {
    n += conv_count(dec_out[j], dec_in[j], 1);
    n += conv_count(dec_out[j], dec_out[j], 3);
  }
  n += conv_count(1, b[0], 1);
  return n;
}

long long mscmt_count(const NetworkConfig& c) {
  const auto& b = c.base_channels;
  long long n = 0;
  for (int i = 1; i <= 4; ++i) {
    int in = i == 1 ? 1 + (c.cascade != CascadeLevel::none ? 1 : 0)
                    : b[i - 2] + (c.multiscale ? 1 : 0);
    n += conv_count(b[i - 1], in, 3);
    n += 2 * conv_count(b[i - 1], b[i - 1], 3);
  }
  const int extra = c.cascade == CascadeLevel::full ? 1 : 0;
  const int dec_in[4] = {b[3], b[2] + extra, b[1] + extra, b[0] + extra};
  const int dec_out[4] = {b[2], b[1], b[0], b[0]};
  for (int j = 0; j < 4; ++j) {
    n += conv_count(dec_out[j], dec_in[j], 1);
    n += conv_count(dec_out[j], dec_out[j], 3);
  }
  n += conv_count(1, b[0] + extra, 1);
  if (c.multitask) {
    int width = b[3];
    if (c.aggregation) width += b[0] + b[1] + b[2] + b[3];
    n += static_cast<long long>(c.fc_hidden) * width + c.fc_hidden;
    n += static_cast<long long>(c.num_classes) * c.fc_hidden + c.num_classes;
  }
  return n;
}

template <typename T>
std::set<std::string> name_set(const Network<T>& net) {
  std::set<std::string> names;
  for (const auto& p : net.params.all()) names.insert(p->name);
  return names;
}

NetworkConfig small_cfg() {
  NetworkConfig c;
  c.input_size = 64;
  c.base_channels = {4, 8, 16, 32};
  c.fc_hidden = 16;
  return c;
}

NetworkConfig full_cfg(int size) {
  NetworkConfig c;
  c.input_size = size;
  c.base_channels = {2, 3, 4, 5};
  c.multiscale = true;
  c.cascade = CascadeLevel::full;
  c.multitask = true;
  c.aggregation = true;
  c.fc_hidden = 6;
  return c;
}

Mask ring_mask(int size) {
  Mask m(size, size);
  for (int r = size / 4; r < 3 * size / 4; ++r)
    for (int c = size / 4; c < 3 * size / 4; ++c) m.at(r, c) = 1;
  return m;
}

template <typename T>
std::vector<T> grad_of(const Network<T>& net, const std::string& name) {
  return net.params.at(name)->tensor->grad;
}

template <typename T>
double norm(const std::vector<T>& v) {
  double s = 0;
  for (T x : v) s += double(x) * double(x);
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("config validation rejects inconsistent settings") {
  NetworkConfig c = small_cfg();
  c.input_size = 100;
  CHECK_THROWS_AS(validate(c), UsageError);
  c = small_cfg();
  c.aggregation = true;  // without multitask
  CHECK_THROWS_AS(validate(c), UsageError);
  c = small_cfg();
  c.base_channels[2] = 0;
  CHECK_THROWS_AS(validate(c), UsageError);
  c = small_cfg();
  c.num_classes = 1;
  CHECK_THROWS_AS(validate(c), UsageError);
  CHECK_NOTHROW(validate(small_cfg()));
  CHECK(cascade_from_string("full") == CascadeLevel::full);
  CHECK_THROWS_AS(cascade_from_string("half"), UsageError);
}

TEST_CASE("region net: output contract and determinism") {
  auto cfg = small_cfg();
  auto net = build_region_net<float>(cfg, 99);
  Rng rng(5);
  auto img = random_plane<float>(rng, cfg.input_size, 0.0f, 1.0f);
  NoGradGuard guard;
  auto map = forward_region(net, img);
  REQUIRE(map->shape == std::vector<int>{1, 64, 64});
  CHECK_FALSE(map->requires_grad);
  for (float v : map->values) {
    CHECK(v > 0.0f);
    CHECK(v < 1.0f);
  }

  auto net2 = build_region_net<float>(cfg, 99);
  auto all1 = net.params.all();
  auto all2 = net2.params.all();
  REQUIRE(all1.size() == all2.size());
  for (size_t i = 0; i < all1.size(); ++i) {
    CHECK(all1[i]->name == all2[i]->name);
    CHECK(all1[i]->tensor->values == all2[i]->tensor->values);
  }
  auto map2 = forward_region(net2, img);
  CHECK(map->values == map2->values);

  auto net3 = build_region_net<float>(cfg, 100);
  CHECK(net3.params.at("enc1.down.w")->tensor->values !=
        net.params.at("enc1.down.w")->tensor->values);
}

TEST_CASE("region net: parameter count matches the layer plan arithmetic") {
  auto cfg = small_cfg();
  auto net = build_region_net<float>(cfg, 1);
  CHECK(net.params.value_count() == region_count(cfg));
  cfg.base_channels = {3, 5, 7, 11};
  auto odd = build_region_net<float>(cfg, 1);
  CHECK(odd.params.value_count() == region_count(cfg));
}

TEST_CASE("main net: parameter count matches the layer plan across all flags") {
  for (bool ms : {false, true})
    for (auto lv : {CascadeLevel::none, CascadeLevel::common, CascadeLevel::full})
      for (bool mt : {false, true})
        for (bool agg : {false, true}) {
          if (agg && !mt) continue;
          auto cfg = small_cfg();
          cfg.multiscale = ms;
          cfg.cascade = lv;
          cfg.multitask = mt;
          cfg.aggregation = agg;
          auto net = build_mscmt_net<float>(cfg, 3);
          CAPTURE(ms);
          CAPTURE(static_cast<int>(lv));
          CAPTURE(mt);
          CAPTURE(agg);
          CHECK(net.params.value_count() == mscmt_count(cfg));
        }
}

TEST_CASE("main net: parameter name sets differ exactly by the head layers") {
  auto base = small_cfg();
  auto plain = build_mscmt_net<float>(base, 1);

  auto cfg = base;
  cfg.multitask = true;
  auto with_head = build_mscmt_net<float>(cfg, 1);
  auto a = name_set(plain);
  auto b = name_set(with_head);
  std::set<std::string> added;
  for (const auto& n : b)
    if (!a.count(n)) added.insert(n);
  CHECK(added == std::set<std::string>{"cls.fc1.w", "cls.fc1.b", "cls.fc2.w", "cls.fc2.b"});
  for (const auto& n : a) CHECK(b.count(n) == 1);

  // Multiscale and cascade change layer widths, never the name set.
  cfg = base;
  cfg.multiscale = true;
  CHECK(name_set(build_mscmt_net<float>(cfg, 1)) == a);
  cfg = base;
  cfg.cascade = CascadeLevel::full;
  CHECK(name_set(build_mscmt_net<float>(cfg, 1)) == a);

  // Aggregation widens the first dense layer by the sum of the encoder widths.
  cfg = base;
  cfg.multitask = true;
  cfg.aggregation = true;
  auto agg = build_mscmt_net<float>(cfg, 1);
  CHECK(name_set(agg) == b);
  int sum_b = 0;
  for (int x : base.base_channels) sum_b += x;
  auto w_agg = agg.params.at("cls.fc1.w")->tensor->shape;
  auto w_plain = with_head.params.at("cls.fc1.w")->tensor->shape;
  CHECK(w_agg[1] - w_plain[1] == sum_b);
}

TEST_CASE("main net: forward contract for segmentation and classification") {
  auto cfg = full_cfg(32);
  auto net = build_mscmt_net<float>(cfg, 21);
  Rng rng(6);
  auto img = random_plane<float>(rng, 32, 0.0f, 1.0f);
  auto map = random_plane<float>(rng, 32, 0.0f, 1.0f);
  NoGradGuard guard;
  auto out = forward_mscmt(net, img, map);
  REQUIRE(out.seg_map->shape == std::vector<int>{1, 32, 32});
  for (float v : out.seg_map->values) {
    CHECK(v > 0.0f);
    CHECK(v < 1.0f);
  }
  REQUIRE(out.class_probs != nullptr);
  REQUIRE(out.class_probs->shape == std::vector<int>{3});
  float sum = 0;
  for (float v : out.class_probs->values) {
    CHECK(v > 0.0f);
    sum += v;
  }
  CHECK(std::abs(sum - 1.0f) < 1e-6f);

  // Without the head there is no probability vector.
  auto cfg2 = small_cfg();
  auto net2 = build_mscmt_net<float>(cfg2, 21);
  auto img2 = random_plane<float>(rng, 64, 0.0f, 1.0f);
  auto out2 = forward_mscmt(net2, img2);
  CHECK(out2.class_probs == nullptr);
  REQUIRE(out2.seg_map->shape == std::vector<int>{1, 64, 64});
}

TEST_CASE("main net: cascade level controls map sensitivity") {
  Rng rng(7);
  auto img = random_plane<float>(rng, 64, 0.0f, 1.0f);
  auto map_a = random_plane<float>(rng, 64, 0.0f, 1.0f);
  auto map_b = random_plane<float>(rng, 64, 0.0f, 1.0f);
  NoGradGuard guard;

  auto cfg = small_cfg();
  cfg.multitask = true;
  auto net = build_mscmt_net<float>(cfg, 40);
  auto out_a = forward_mscmt(net, img, map_a);
  auto out_b = forward_mscmt(net, img, map_b);
  auto out_n = forward_mscmt(net, img);
  CHECK(out_a.seg_map->values == out_b.seg_map->values);
  CHECK(out_a.seg_map->values == out_n.seg_map->values);
  CHECK(out_a.class_probs->values == out_b.class_probs->values);

  for (auto lv : {CascadeLevel::common, CascadeLevel::full}) {
    auto c2 = cfg;
    c2.cascade = lv;
    auto net2 = build_mscmt_net<float>(c2, 40);
    auto a = forward_mscmt(net2, img, map_a);
    auto b = forward_mscmt(net2, img, map_b);
    CHECK(a.seg_map->values != b.seg_map->values);
    CHECK_THROWS_AS(forward_mscmt(net2, img), UsageError);
  }
}

TEST_CASE("forward rejects wrong kinds and sizes") {
  auto cfg = small_cfg();
  auto region = build_region_net<float>(cfg, 1);
  auto main_net = build_mscmt_net<float>(cfg, 1);
  Rng rng(9);
  auto img = random_plane<float>(rng, 64, 0.0f, 1.0f);
  auto small = random_plane<float>(rng, 32, 0.0f, 1.0f);
  CHECK_THROWS_AS(forward_region(main_net, img), UsageError);
  CHECK_THROWS_AS((void)forward_mscmt(region, img), UsageError);
  CHECK_THROWS_AS(forward_region(region, small), ShapeError);
  CHECK_THROWS_AS((void)forward_mscmt(main_net, small), ShapeError);
}

TEST_CASE("multitask backward: both heads feed the shared encoder additively") {
  auto cfg = full_cfg(32);
  auto net = build_mscmt_net<double>(cfg, 77);
  Rng rng(11);
  auto img = random_plane<double>(rng, 32, 0.0, 1.0);
  auto map = random_plane<double>(rng, 32, 0.0, 1.0);
  Mask gt = ring_mask(32);
  LossWeights w;

  auto run = [&](bool seg, bool cls) {
    net.params.zero_grad();
    auto out = forward_mscmt(net, img, map);
    TensorPtr<double> loss;
    if (seg && cls)
      loss = combined_loss(region_loss(out.seg_map, gt),
                           classification_loss(1, out.class_logits), w);
    else if (seg)
      loss = scale(region_loss(out.seg_map, gt), w.alpha_seg);
    else
      loss = scale(classification_loss(1, out.class_logits), w.alpha_cls);
    backward(loss);
  };

  const std::string probe = "enc1.down.w";
  run(true, false);
  auto g_seg = grad_of(net, probe);
  run(false, true);
  auto g_cls = grad_of(net, probe);
  run(true, true);
  auto g_both = grad_of(net, probe);

  CHECK(norm(g_seg) > 0.0);
  CHECK(norm(g_cls) > 0.0);
  double max_diff = 0;
  for (size_t i = 0; i < g_both.size(); ++i)
    max_diff = std::max(max_diff, std::abs(g_both[i] - (g_seg[i] + g_cls[i])));
  CHECK(max_diff < 1e-9);

  // The combined objective reaches every branch of the network.
  run(true, true);
  CHECK(norm(grad_of(net, "head.w")) > 0.0);
  CHECK(norm(grad_of(net, "cls.fc2.w")) > 0.0);
  CHECK(norm(grad_of(net, "dec1.reduce.w")) > 0.0);
  CHECK(norm(grad_of(net, "enc4.conv2.w")) > 0.0);
}

TEST_CASE("finite differences validate full-network gradients") {
  Mask gt = ring_mask(16);
  LossWeights w;

  SUBCASE("main network, all features enabled") {
    auto cfg = full_cfg(16);
    auto net = build_mscmt_net<double>(cfg, 13);
    Rng rng(14);
    auto img = random_plane<double>(rng, 16, 0.05, 0.95);
    auto map = random_plane<double>(rng, 16, 0.05, 0.95);
    auto fn = [&] {
      auto out = forward_mscmt(net, img, map);
      return combined_loss(region_loss(out.seg_map, gt),
                           classification_loss(2, out.class_logits), w);
    };
    std::vector<TensorPtr<double>> inputs;
    for (const auto& p : net.params.all()) inputs.push_back(p->tensor);
    auto res = finite_difference_check(fn, inputs, 1e-5, 3, 2);
    CAPTURE(res.worst);
    CHECK(res.checked > 50);
    CHECK(res.max_rel_err < 1e-4);
  }

  SUBCASE("region network") {
    NetworkConfig cfg;
    cfg.input_size = 16;
    cfg.base_channels = {2, 3, 4, 5};
    auto net = build_region_net<double>(cfg, 13);
    Rng rng(15);
    auto img = random_plane<double>(rng, 16, 0.05, 0.95);
    auto fn = [&] { return region_loss(forward_region(net, img), gt); };
    std::vector<TensorPtr<double>> inputs;
    for (const auto& p : net.params.all()) inputs.push_back(p->tensor);
    auto res = finite_difference_check(fn, inputs, 1e-5, 3, 4);
    CAPTURE(res.worst);
    CHECK(res.max_rel_err < 1e-4);
  }
}
