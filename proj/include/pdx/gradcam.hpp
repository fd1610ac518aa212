#pragma once
#include <string>
#include <utility>
#include <vector>

#include "pdx/nn.hpp"

namespace pdx {

// Heatmap over the feature maps feeding GAP, channel-weighted by the spatial
// mean of the class-logit gradient, rectified, then upsampled to the input
// resolution.  `raw` keeps the map at feature resolution.
struct AttributionMap {
  std::vector<double> values;  // upsampled, non-negative, row-major for 2d
  std::vector<size_t> shape;   // (L) or (H, W) at input resolution
  std::vector<double> raw;
  std::vector<size_t> raw_shape;
  int class_index = 0;
};

AttributionMap gradcam(Net<float>& net, const Tensor<float>& x_single, int class_index);
AttributionMap gradcam(const NetworkState& state, const Tensor<float>& x_single, int class_index);

// fraction of total map mass inside the union of [begin, end) index intervals
double attention_alignment_score(const AttributionMap& map,
                                 const std::vector<std::pair<size_t, size_t>>& regions);

// align-corners interpolation, exposed for direct verification
std::vector<double> upsample_linear(const std::vector<double>& src, size_t target);
std::vector<double> upsample_bilinear(const std::vector<double>& src, size_t src_h, size_t src_w,
                                      size_t target_h, size_t target_w);

// exports write the max-normalized heatmap; the struct keeps the raw scale
void write_attribution_csv(const std::string& path, const AttributionMap& map);    // 1d
void write_attribution_image(const std::string& path, const AttributionMap& map);  // 2d, 256x256

}  // namespace pdx
