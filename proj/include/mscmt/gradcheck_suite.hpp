#pragma once

#include <string>
#include <vector>

#include "mscmt/gradcheck.hpp"
#include "mscmt/losses.hpp"
#include "mscmt/network.hpp"
#include "mscmt/ops.hpp"
#include "mscmt/rng.hpp"
#include "mscmt/tensor.hpp"

namespace mscmt {

struct GradSuiteRow {
  std::string name;
  GradCheckResult result;
};

namespace detail {

inline TensorPtr<double> rand_tensor(std::vector<int> shape, Rng& rng, bool gaussian = false) {
  auto t = make_tensor<double>(std::move(shape));
  for (auto& v : t->values) v = gaussian ? rng.gaussian() : rng.uniform(-1.0, 1.0);
  t->requires_grad = true;
  return t;
}

inline Mask block_mask(int size, int lo, int hi) {
  Mask m(size, size);
  for (int r = lo; r <= hi; ++r)
    for (int c = lo; c <= hi; ++c) m.at(r, c) = 1;
  return m;
}

}  // namespace detail

// Finite-difference ladder over each graph operation and both full network
// chains, in double precision with central differences. Every row probes at
// least ten coordinates; the caller applies the 1e-4 gate.
inline std::vector<GradSuiteRow> run_gradcheck_suite() {
  using detail::block_mask;
  using detail::rand_tensor;
  std::vector<GradSuiteRow> rows;
  auto push = [&rows](std::string name, GradCheckResult r) {
    rows.push_back({std::move(name), std::move(r)});
  };

  {
    Rng rng(701);
    auto x = rand_tensor({2, 6, 6}, rng);
    auto w = rand_tensor({3, 2, 3, 3}, rng);
    auto b = rand_tensor({3}, rng);
    push("conv2d 3x3 pad 1", finite_difference_check(
                                 [&] { return sum_all(conv2d(x, w, b, 1, 1)); }, {x, w, b}));
  }
  {
    Rng rng(702);
    auto x = rand_tensor({2, 6, 6}, rng);
    auto w = rand_tensor({3, 2, 2, 2}, rng);
    auto b = rand_tensor({3}, rng);
    push("conv2d 2x2 stride 2", finite_difference_check(
                                    [&] { return sum_all(conv2d(x, w, b, 2, 1)); }, {x, w, b}));
  }
  {
    Rng rng(703);
    auto x = rand_tensor({3, 8, 8}, rng, true);  // gaussian values keep pool argmaxes unique
    push("maxpool2d 2x2",
         finite_difference_check([&] { return sum_all(maxpool2d(x, 2)); }, {x}));
  }
  {
    Rng rng(704);
    auto x = rand_tensor({2, 4, 4}, rng);
    push("upsample2x / downscale2x_mean",
         finite_difference_check([&] { return sum_all(downscale2x_mean(upsample2x(x))); },
                                 {x}));
  }
  {
    Rng rng(705);
    auto x = rand_tensor({1, 6, 6}, rng);
    Mask gt = block_mask(6, 1, 4);
    push("sigmoid + soft dice", finite_difference_check(
                                    [&] { return region_loss(sigmoid(x), gt); }, {x}));
  }
  {
    Rng rng(706);
    auto x = rand_tensor({2, 3, 3}, rng);
    auto w = rand_tensor({4, 18}, rng);
    auto b = rand_tensor({4}, rng);
    push("flatten + dense + softmax + cross-entropy",
         finite_difference_check(
             [&] { return cross_entropy_from_probs(softmax(dense(flatten(x), w, b)), 2); },
             {x, w, b}));
  }
  {
    Rng rng(708);
    auto x = rand_tensor({2, 3, 3}, rng);
    auto w = rand_tensor({4, 18}, rng);
    auto b = rand_tensor({4}, rng);
    push("dense + fused softmax cross-entropy",
         finite_difference_check(
             [&] { return cross_entropy_from_logits(dense(flatten(x), w, b), 1); },
             {x, w, b}));
  }
  {
    Rng rng(707);
    auto a = rand_tensor({2, 4, 4}, rng);
    auto b = rand_tensor({2, 4, 4}, rng);
    push("add / mul / scale / concat / relu",
         finite_difference_check(
             [&] {
               auto both = concat_channels(relu(add(a, b)), mul(a, scale(b, 0.5)));
               return sum_all(both);
             },
             {a, b}));
  }

  {
    NetworkConfig cfg;
    cfg.input_size = 16;
    cfg.base_channels = {2, 3, 4, 5};
    auto net = build_region_net<double>(cfg, 13);
    Rng rng(15);
    auto img = rand_tensor({1, 16, 16}, rng);
    img->requires_grad = false;
    Mask gt = block_mask(16, 5, 10);
    std::vector<TensorPtr<double>> params;
    for (const auto& p : net.params.all()) params.push_back(p->tensor);
    push("region network chain",
         finite_difference_check([&] { return region_loss(forward_region(net, img), gt); },
                                 params, 1e-5, 3, 4));
  }
  {
    NetworkConfig cfg;
    cfg.input_size = 16;
    cfg.base_channels = {2, 3, 4, 5};
    cfg.multiscale = true;
    cfg.cascade = CascadeLevel::full;
    cfg.multitask = true;
    cfg.aggregation = true;
    cfg.fc_hidden = 6;
    auto net = build_mscmt_net<double>(cfg, 13);
    Rng rng(14);
    auto img = rand_tensor({1, 16, 16}, rng);
    img->requires_grad = false;
    auto map = rand_tensor({1, 16, 16}, rng);
    map->requires_grad = false;
    Mask gt = block_mask(16, 4, 11);
    LossWeights lw;
    std::vector<TensorPtr<double>> params;
    for (const auto& p : net.params.all()) params.push_back(p->tensor);
    push("multiscale multitask network chain",
         finite_difference_check(
             [&] {
               auto out = forward_mscmt(net, img, map);
               return combined_loss(weighted_dice_loss(out.seg_map, gt, lw),
                                    classification_loss(2, out.class_logits), lw);
             },
             params, 1e-5, 3, 2));
  }
  return rows;
}

}  // namespace mscmt
