#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mscmt/errors.hpp"
#include "mscmt/image.hpp"
#include "mscmt/morphology.hpp"
#include "mscmt/network.hpp"
#include "mscmt/sample.hpp"

namespace mscmt {

struct RoiOptions {
  int half_window = 32;
  CropMode crop_mode = CropMode::clamp;
  bool fallback_center = true;  // empty prediction: center crop instead of dropping
};

struct RoiOutcome {
  std::optional<Sample> cropped;     // nullopt when the sample was dropped
  bool empty_prediction = false;     // center fallback was used
  std::string drop_reason;           // set when cropped is nullopt
};

// Geometric half of the ROI stage: threshold the probability map at 0.5,
// keep the largest component, fill its convex hull, center a 2h x 2h window
// on the hull's center of gravity, and crop the image, the ground-truth mask
// and the map together. The map travels with the crop as the next stage's
// preliminary segmentation.
inline RoiOutcome roi_from_map(const Image& prob, const Sample& s, const RoiOptions& opt) {
  if (prob.height != s.image.height || prob.width != s.image.width)
    throw ShapeError("roi_from_map: map and image extents differ");
  std::pair<int, int> center;
  RoiOutcome out;
  if (auto blob = largest_component(binarize(prob, 0.5f))) {
    center = center_of_gravity_pixel(convex_hull_fill(*blob));
  } else if (opt.fallback_center) {
    center = {s.image.height / 2, s.image.width / 2};
    out.empty_prediction = true;
  } else {
    out.drop_reason = "empty prediction";
    return out;
  }
  auto box = compute_crop_box(center, opt.half_window, s.image.height, s.image.width,
                              opt.crop_mode);
  if (!box) {
    out.drop_reason = "window at (" + std::to_string(center.first) + "," +
                      std::to_string(center.second) + ") crosses the border";
    return out;
  }
  Sample c = s;
  c.image = crop(s.image, *box);
  c.mask = crop(s.mask, *box);
  c.init_map = crop(prob, *box);
  out.cropped = std::move(c);
  return out;
}

// One sample through the detector and the geometric stage above.
inline RoiOutcome extract_roi(Network<float>& net, const Sample& s, const RoiOptions& opt) {
  NoGradGuard ng;
  return roi_from_map(tensor_to_image(*forward_region(net, image_to_tensor<float>(s.image))),
                      s, opt);
}

struct RoiBatchResult {
  std::vector<Sample> kept;
  std::vector<std::string> dropped;  // "id: reason" lines
  std::vector<std::string> flagged;  // ids that fell back to the center crop
};

inline RoiBatchResult extract_roi_all(Network<float>& net, const std::vector<Sample>& samples,
                                      const RoiOptions& opt) {
  RoiBatchResult result;
  for (const Sample& s : samples) {
    RoiOutcome one = extract_roi(net, s, opt);
    if (one.empty_prediction) result.flagged.push_back(s.id);
    if (one.cropped) result.kept.push_back(std::move(*one.cropped));
    else result.dropped.push_back(s.id + ": " + one.drop_reason);
  }
  return result;
}

}  // namespace mscmt
