#include "pdx/gradcam.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "pdx/errors.hpp"
#include "pdx/tfr.hpp"

namespace pdx {

std::vector<double> upsample_linear(const std::vector<double>& src, size_t target) {
  if (src.empty() || target == 0) throw ArgumentError("upsample_linear: empty extent");
  std::vector<double> out(target);
  size_t m = src.size();
  for (size_t i = 0; i < target; ++i) {
    double u = (m == 1 || target == 1)
                   ? 0.0
                   : static_cast<double>(i) * static_cast<double>(m - 1) /
                         static_cast<double>(target - 1);
    size_t lo = std::min(static_cast<size_t>(u), m - 1);
    size_t hi = std::min(lo + 1, m - 1);
    double frac = u - static_cast<double>(lo);
    out[i] = src[lo] * (1.0 - frac) + src[hi] * frac;
  }
  return out;
}

std::vector<double> upsample_bilinear(const std::vector<double>& src, size_t src_h, size_t src_w,
                                      size_t target_h, size_t target_w) {
  if (src.size() != src_h * src_w || src.empty())
    throw ArgumentError("upsample_bilinear: source size disagrees with its shape");
  if (target_h == 0 || target_w == 0) throw ArgumentError("upsample_bilinear: empty target");
  auto coord = [](size_t i, size_t n_src, size_t n_dst) {
    return (n_src == 1 || n_dst == 1) ? 0.0
                                      : static_cast<double>(i) * static_cast<double>(n_src - 1) /
                                            static_cast<double>(n_dst - 1);
  };
  std::vector<double> out(target_h * target_w);
  for (size_t r = 0; r < target_h; ++r) {
    double v = coord(r, src_h, target_h);
    size_t r0 = std::min(static_cast<size_t>(v), src_h - 1);
    size_t r1 = std::min(r0 + 1, src_h - 1);
    double fv = v - static_cast<double>(r0);
    for (size_t c = 0; c < target_w; ++c) {
      double u = coord(c, src_w, target_w);
      size_t c0 = std::min(static_cast<size_t>(u), src_w - 1);
      size_t c1 = std::min(c0 + 1, src_w - 1);
      double fu = u - static_cast<double>(c0);
      double top = src[r0 * src_w + c0] * (1.0 - fu) + src[r0 * src_w + c1] * fu;
      double bot = src[r1 * src_w + c0] * (1.0 - fu) + src[r1 * src_w + c1] * fu;
      out[r * target_w + c] = top * (1.0 - fv) + bot * fv;
    }
  }
  return out;
}

AttributionMap gradcam(Net<float>& net, const Tensor<float>& x_single, int class_index) {
  const auto& spec = net.spec();
  size_t gap_idx = spec.layers.size();
  for (size_t i = 0; i < spec.layers.size(); ++i)
    if (spec.layers[i].kind == LayerKind::gap) gap_idx = i;
  bool has_conv = false;
  for (size_t i = 0; i < std::min(gap_idx, spec.layers.size()); ++i) {
    auto k = spec.layers[i].kind;
    has_conv = has_conv || k == LayerKind::conv1d || k == LayerKind::conv2d ||
               k == LayerKind::residual_block;
  }
  if (gap_idx == spec.layers.size() || !has_conv)
    throw UnsupportedArchitectureError(
        "gradcam: needs a convolutional feature extractor in front of GAP");

  auto cam = net.cam_maps(x_single, class_index);
  size_t C = cam.activation.shape[0];
  size_t sp = 1;
  for (size_t d : cam.map_shape) sp *= d;

  AttributionMap out;
  out.class_index = class_index;
  out.raw_shape = cam.map_shape;
  out.raw.assign(sp, 0.0);
  for (size_t k = 0; k < C; ++k) {
    double alpha = 0.0;
    for (size_t p = 0; p < sp; ++p) alpha += cam.gradient.data[k * sp + p];
    alpha /= static_cast<double>(sp);
    for (size_t p = 0; p < sp; ++p)
      out.raw[p] += alpha * static_cast<double>(cam.activation.data[k * sp + p]);
  }
  for (double& v : out.raw) v = std::max(0.0, v);

  if (spec.is_2d()) {
    size_t th = spec.input_shape[1], tw = spec.input_shape[2];
    out.values = upsample_bilinear(out.raw, cam.map_shape[0], cam.map_shape[1], th, tw);
    out.shape = {th, tw};
  } else {
    size_t tl = spec.input_shape[1];
    out.values = upsample_linear(out.raw, tl);
    out.shape = {tl};
  }
  return out;
}

AttributionMap gradcam(const NetworkState& state, const Tensor<float>& x_single, int class_index) {
  auto net = restore(state);
  return gradcam(net, x_single, class_index);
}

double attention_alignment_score(const AttributionMap& map,
                                 const std::vector<std::pair<size_t, size_t>>& regions) {
  size_t n = map.values.size();
  for (const auto& [b, e] : regions)
    if (b >= e || e > n) throw ArgumentError("attention_alignment_score: malformed interval");
  if (regions.empty()) return 0.0;
  std::vector<char> mask(n, 0);
  for (const auto& [b, e] : regions) std::fill(mask.begin() + b, mask.begin() + e, 1);
  double total = 0.0, inside = 0.0;
  for (size_t i = 0; i < n; ++i) {
    total += map.values[i];
    if (mask[i]) inside += map.values[i];
  }
  if (total <= 0.0) return 0.0;
  return inside / total;
}

namespace {

std::vector<double> normalized(const std::vector<double>& v) {
  double mx = 0.0;
  for (double x : v) mx = std::max(mx, x);
  std::vector<double> out = v;
  if (mx > 0.0)
    for (double& x : out) x /= mx;
  return out;
}

}  // namespace

void write_attribution_csv(const std::string& path, const AttributionMap& map) {
  if (map.shape.size() != 1) throw ArgumentError("write_attribution_csv: expects a 1d map");
  auto vals = normalized(map.values);
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw IoError("cannot open for writing: " + path);
  std::fprintf(f, "index,value\n");
  for (size_t i = 0; i < vals.size(); ++i) std::fprintf(f, "%zu,%.9g\n", i, vals[i]);
  if (std::fclose(f) != 0) throw IoError("write failed: " + path);
}

void write_attribution_image(const std::string& path, const AttributionMap& map) {
  if (map.shape.size() != 2 || map.shape[0] != 256 || map.shape[1] != 256)
    throw ArgumentError("write_attribution_image: expects a 256x256 map");
  auto vals = normalized(map.values);
  SpectroImage img;
  img.channels = 1;
  img.pixels.resize(256 * 256);
  for (size_t i = 0; i < vals.size(); ++i) img.pixels[i] = static_cast<float>(vals[i]);
  write_spectro_image(path, img);
}

}  // namespace pdx
