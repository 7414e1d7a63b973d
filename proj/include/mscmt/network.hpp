#pragma once

#include <string>
#include <vector>

#include "mscmt/net_config.hpp"
#include "mscmt/ops.hpp"
#include "mscmt/rng.hpp"
#include "mscmt/tensor.hpp"

namespace mscmt {

enum class NetKind { region, mscmt };

// A network is a config plus a named parameter store; the forward functions
// rebuild the graph from those parameters on every call.
template <typename T>
struct Network {
  NetworkConfig cfg;
  NetKind kind = NetKind::region;
  ParamStore<T> params;

  const std::vector<ParameterPtr<T>>& parameters() const { return params.all(); }
};

template <typename T>
struct PredictionPair {
  TensorPtr<T> seg_map;       // {1,S,S} probabilities
  TensorPtr<T> class_logits;  // {num_classes}, null when the head is disabled
  TensorPtr<T> class_probs;   // softmax of the logits; the loss trains on the
                              // logits so a saturated softmax cannot zero it out
};

namespace detail {

template <typename T>
void add_conv(ParamStore<T>& store, Rng& rng, const std::string& name,
              int out_ch, int in_ch, int k) {
  auto w = store.create(name + ".w", {out_ch, in_ch, k, k});
  init_he(*w, in_ch * k * k, rng);
  auto b = store.create(name + ".b", {out_ch});
  init_bias(*b, in_ch * k * k, rng);
}

template <typename T>
void add_dense(ParamStore<T>& store, Rng& rng, const std::string& name,
               int out_width, int in_width) {
  auto w = store.create(name + ".w", {out_width, in_width});
  init_he(*w, in_width, rng);
  auto b = store.create(name + ".b", {out_width});
  init_bias(*b, in_width, rng);
}

// Channel count entering encoder block i (1-based) for the main network.
inline int mscmt_enc_in(const NetworkConfig& cfg, int i) {
  if (i == 1) return 1 + (cfg.cascade != CascadeLevel::none ? 1 : 0);
  return cfg.base_channels[i - 2] + (cfg.multiscale ? 1 : 0);
}

inline int cascade_extra(const NetworkConfig& cfg) {
  return cfg.cascade == CascadeLevel::full ? 1 : 0;
}

template <typename T>
TensorPtr<T> conv_named(const ParamStore<T>& store, const std::string& name,
                        const TensorPtr<T>& x, int stride, int padding) {
  return conv2d(x, store.at(name + ".w")->tensor, store.at(name + ".b")->tensor,
                stride, padding);
}

template <typename T>
TensorPtr<T> dense_named(const ParamStore<T>& store, const std::string& name,
                         const TensorPtr<T>& x) {
  return dense(x, store.at(name + ".w")->tensor, store.at(name + ".b")->tensor);
}

// Decoder block shared by both networks: 1x1 channel-reducing conv,
// 2x upsample, 3x3 conv.
template <typename T>
TensorPtr<T> decoder_block(const ParamStore<T>& store, const std::string& pre,
                           const TensorPtr<T>& x) {
  auto d = relu(conv_named(store, pre + ".reduce", x, 1, 0));
  d = upsample2x(d);
  return relu(conv_named(store, pre + ".conv", d, 1, 1));
}

// Global max pool to a flat {C} vector.
template <typename T>
TensorPtr<T> global_pool(const TensorPtr<T>& x) {
  return flatten(maxpool2d(x, x->height()));
}

template <typename T>
void check_input(const Network<T>& net, const TensorPtr<T>& x, const char* what) {
  const int S = net.cfg.input_size;
  if (x->shape != std::vector<int>{1, S, S})
    throw ShapeError(std::string(what) + ": expected {1," + std::to_string(S) + "," +
                     std::to_string(S) + "}, got a tensor with " +
                     std::to_string(x->numel()) + " values");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Region network: a compact encoder-decoder that turns the enhanced image
// into a coarse tumor-region probability map.
//
// Encoder block i: stride-2 3x3 conv, 3x3 conv, plus a stride-2 1x1
// projection of the block input added back in (the channel count changes at
// every block, so the shortcut is always a projection).
// Decoder blocks upsample back to full resolution; encoder output i is added
// into the input of the decoder block that mirrors it.
// ---------------------------------------------------------------------------
template <typename T>
Network<T> build_region_net(const NetworkConfig& cfg, uint64_t seed) {
  validate(cfg);
  Network<T> net;
  net.cfg = cfg;
  net.kind = NetKind::region;
  Rng rng(seed);
  const auto& b = cfg.base_channels;
  int in_ch = 1;
  for (int i = 1; i <= 4; ++i) {
    const std::string pre = "enc" + std::to_string(i);
    detail::add_conv(net.params, rng, pre + ".down", b[i - 1], in_ch, 3);
    detail::add_conv(net.params, rng, pre + ".conv1", b[i - 1], b[i - 1], 3);
    detail::add_conv(net.params, rng, pre + ".proj", b[i - 1], in_ch, 1);
    in_ch = b[i - 1];
  }
  const int dec_in[4] = {b[3], b[2], b[1], b[0]};
  const int dec_out[4] = {b[2], b[1], b[0], b[0]};
  for (int j = 4; j >= 1; --j) {
    const std::string pre = "dec" + std::to_string(j);
    detail::add_conv(net.params, rng, pre + ".reduce", dec_out[4 - j], dec_in[4 - j], 1);
    detail::add_conv(net.params, rng, pre + ".conv", dec_out[4 - j], dec_out[4 - j], 3);
  }
  detail::add_conv(net.params, rng, "head", 1, b[0], 1);
  return net;
}

template <typename T>
TensorPtr<T> forward_region(const Network<T>& net, const TensorPtr<T>& image) {
  if (net.kind != NetKind::region)
    throw UsageError("forward_region called on a network of a different kind");
  detail::check_input(net, image, "forward_region");
  const auto& P = net.params;
  auto block = [&P](const std::string& pre, const TensorPtr<T>& x) {
    auto h = relu(detail::conv_named(P, pre + ".down", x, 2, 1));
    auto r = detail::conv_named(P, pre + ".conv1", h, 1, 1);
    auto p = detail::conv_named(P, pre + ".proj", x, 2, 0);
    return relu(add(r, p));
  };
  auto e1 = block("enc1", image);
  auto e2 = block("enc2", e1);
  auto e3 = block("enc3", e2);
  auto e4 = block("enc4", e3);
  auto d = detail::decoder_block(P, "dec4", e4);
  d = detail::decoder_block(P, "dec3", add(d, e3));
  d = detail::decoder_block(P, "dec2", add(d, e2));
  d = detail::decoder_block(P, "dec1", add(d, e1));
  return sigmoid(detail::conv_named(P, "head", d, 1, 0));
}

// ---------------------------------------------------------------------------
// Main multiscale cascaded multitask network.
//
// Encoder block i: stride-2 3x3 conv, then two residual stages
// r = relu(conv(r) + r). There is no input-reduction stage; block 1 consumes
// the full-resolution input (concatenated with the preliminary map when the
// cascade is enabled).
//
// multiscale:   the input image, mean-downscaled by 2/4/8, is concatenated
//               onto the outputs of encoder blocks 1..3 before the next
//               block. Skip connections and pooling use the block outputs
//               before this concatenation, so their widths are unchanged.
// cascade full: the preliminary map, mean-downscaled to each decoder output
//               resolution, is concatenated after the corresponding skip add,
//               and at full resolution before the output head.
// multitask:    global max pool of the bottleneck, dense + relu, dense +
//               softmax over the tumor classes.
// aggregation:  pooled encoder outputs 1..4 are concatenated onto the pooled
//               bottleneck vector before the first dense layer.
// ---------------------------------------------------------------------------
template <typename T>
Network<T> build_mscmt_net(const NetworkConfig& cfg, uint64_t seed) {
  validate(cfg);
  Network<T> net;
  net.cfg = cfg;
  net.kind = NetKind::mscmt;
  Rng rng(seed);
  const auto& b = cfg.base_channels;
  for (int i = 1; i <= 4; ++i) {
    const std::string pre = "enc" + std::to_string(i);
    detail::add_conv(net.params, rng, pre + ".down", b[i - 1],
                     detail::mscmt_enc_in(cfg, i), 3);
    detail::add_conv(net.params, rng, pre + ".conv1", b[i - 1], b[i - 1], 3);
    detail::add_conv(net.params, rng, pre + ".conv2", b[i - 1], b[i - 1], 3);
  }
  const int extra = detail::cascade_extra(cfg);
  const int dec_in[4] = {b[3], b[2] + extra, b[1] + extra, b[0] + extra};
  const int dec_out[4] = {b[2], b[1], b[0], b[0]};
  for (int j = 4; j >= 1; --j) {
    const std::string pre = "dec" + std::to_string(j);
    detail::add_conv(net.params, rng, pre + ".reduce", dec_out[4 - j], dec_in[4 - j], 1);
    detail::add_conv(net.params, rng, pre + ".conv", dec_out[4 - j], dec_out[4 - j], 3);
  }
  detail::add_conv(net.params, rng, "head", 1, b[0] + extra, 1);
  if (cfg.multitask) {
    int width = b[3];
    if (cfg.aggregation) width += b[0] + b[1] + b[2] + b[3];
    detail::add_dense(net.params, rng, "cls.fc1", cfg.fc_hidden, width);
    detail::add_dense(net.params, rng, "cls.fc2", cfg.num_classes, cfg.fc_hidden);
  }
  return net;
}

template <typename T>
PredictionPair<T> forward_mscmt(const Network<T>& net, const TensorPtr<T>& image,
                                const TensorPtr<T>& init_map) {
  if (net.kind != NetKind::mscmt)
    throw UsageError("forward_mscmt called on a network of a different kind");
  detail::check_input(net, image, "forward_mscmt image");
  const bool cascaded = net.cfg.cascade != CascadeLevel::none;
  const bool full = net.cfg.cascade == CascadeLevel::full;
  if (cascaded) {
    if (!init_map) throw UsageError("forward_mscmt: cascade is enabled but no map was given");
    detail::check_input(net, init_map, "forward_mscmt map");
  }
  const auto& P = net.params;
  auto block = [&P](const std::string& pre, const TensorPtr<T>& x) {
    auto h = relu(detail::conv_named(P, pre + ".down", x, 2, 1));
    auto r1 = relu(add(detail::conv_named(P, pre + ".conv1", h, 1, 1), h));
    return relu(add(detail::conv_named(P, pre + ".conv2", r1, 1, 1), r1));
  };

  auto x0 = cascaded ? concat_channels(image, init_map) : image;
  auto e1 = block("enc1", x0);
  TensorPtr<T> img2, img4, img8;
  if (net.cfg.multiscale) {
    img2 = downscale2x_mean(image);
    img4 = downscale2x_mean(img2);
    img8 = downscale2x_mean(img4);
  }
  auto e2 = block("enc2", net.cfg.multiscale ? concat_channels(e1, img2) : e1);
  auto e3 = block("enc3", net.cfg.multiscale ? concat_channels(e2, img4) : e2);
  auto e4 = block("enc4", net.cfg.multiscale ? concat_channels(e3, img8) : e3);

  TensorPtr<T> map2, map4, map8;
  if (full) {
    map2 = downscale2x_mean(init_map);
    map4 = downscale2x_mean(map2);
    map8 = downscale2x_mean(map4);
  }
  auto d = detail::decoder_block(P, "dec4", e4);
  auto d3_in = add(d, e3);
  d = detail::decoder_block(P, "dec3", full ? concat_channels(d3_in, map8) : d3_in);
  auto d2_in = add(d, e2);
  d = detail::decoder_block(P, "dec2", full ? concat_channels(d2_in, map4) : d2_in);
  auto d1_in = add(d, e1);
  d = detail::decoder_block(P, "dec1", full ? concat_channels(d1_in, map2) : d1_in);
  auto head_in = full ? concat_channels(d, init_map) : d;

  PredictionPair<T> out;
  out.seg_map = sigmoid(detail::conv_named(P, "head", head_in, 1, 0));
  if (net.cfg.multitask) {
    auto vec = detail::global_pool(e4);
    if (net.cfg.aggregation) {
      vec = concat_channels(vec, detail::global_pool(e1));
      vec = concat_channels(vec, detail::global_pool(e2));
      vec = concat_channels(vec, detail::global_pool(e3));
      vec = concat_channels(vec, detail::global_pool(e4));
    }
    auto h = relu(detail::dense_named(P, "cls.fc1", vec));
    out.class_logits = detail::dense_named(P, "cls.fc2", h);
    out.class_probs = softmax(out.class_logits);
  }
  return out;
}

template <typename T>
PredictionPair<T> forward_mscmt(const Network<T>& net, const TensorPtr<T>& image) {
  return forward_mscmt(net, image, TensorPtr<T>{});
}

}  // namespace mscmt
