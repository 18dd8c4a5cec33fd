#include "rxl/features/target.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace rxl::features {

Tensor encode_location(const Box& box, double width, double height) {
  if (!(box.w > 0.0) || !(box.h > 0.0)) throw FeatureError("encode_location: degenerate box");
  if (!(width > 0.0) || !(height > 0.0)) throw FeatureError("encode_location: degenerate image");
  return Tensor::vector({box.x / width, box.y / height, box.x_br() / width, box.y_br() / height,
                         box.area() / (width * height)});
}

Tensor encode_location_diff(const Box& target, const std::vector<Box>& others, std::size_t K) {
  if (K == 0) throw FeatureError("encode_location_diff: K must be >= 1");
  if (!(target.w > 0.0) || !(target.h > 0.0)) throw FeatureError("encode_location_diff: degenerate target");
  std::vector<std::size_t> order(others.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> dist(others.size());
  for (std::size_t j = 0; j < others.size(); ++j) {
    const double dx = others[j].cx() - target.cx();
    const double dy = others[j].cy() - target.cy();
    dist[j] = dx * dx + dy * dy;
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
  Tensor out(Shape{kLocationWidth * K});
  for (std::size_t slot = 0; slot < std::min(K, order.size()); ++slot) {
    const Box& o = others[order[slot]];
    double* p = out.data() + slot * kLocationWidth;
    p[0] = (o.x - target.x) / target.w;
    p[1] = (o.y - target.y) / target.h;
    p[2] = (o.x_br() - target.x_br()) / target.w;
    p[3] = (o.y_br() - target.y_br()) / target.h;
    p[4] = o.area() / target.area();
  }
  return out;
}

Tensor encode_visual_diff(const Tensor& o_i, const std::vector<Tensor>& others) {
  Tensor out(o_i.shape());
  std::size_t n = 0;
  for (const Tensor& o_j : others) {
    if (o_j.shape() != o_i.shape()) throw FeatureError("encode_visual_diff: feature widths differ");
    double norm2 = 0.0;
    for (std::size_t f = 0; f < o_i.size(); ++f) norm2 += (o_i[f] - o_j[f]) * (o_i[f] - o_j[f]);
    const double norm = std::sqrt(norm2);
    if (!(norm > kVisualDiffEps)) continue;
    for (std::size_t f = 0; f < o_i.size(); ++f) out[f] += (o_i[f] - o_j[f]) / norm;
    ++n;
  }
  if (n > 0) {
    for (std::size_t f = 0; f < out.size(); ++f) out[f] /= static_cast<double>(n);
  }
  return out;
}

std::vector<double> cell_sq_distances(const GridGeometry& grid, std::pair<double, double> center) {
  std::vector<double> out(grid.cells());
  for (std::size_t s = 0; s < out.size(); ++s) {
    const auto [x, y] = grid.center(s);
    out[s] = (x - center.first) * (x - center.first) + (y - center.second) * (y - center.second);
  }
  return out;
}

namespace {

void check_sigma(double sigma, const char* op) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw FeatureError(std::string(op) + ": sigma must be positive");
}

}  // namespace

Tensor gaussian_weights(const GridGeometry& grid, std::pair<double, double> center, double sigma) {
  check_sigma(sigma, "gaussian_global");
  const std::vector<double> d2 = cell_sq_distances(grid, center);
  // Shift by the smallest distance so the nearest cell has weight exp(0) before normalizing.
  const double lo = *std::min_element(d2.begin(), d2.end());
  Tensor w(Shape{d2.size()});
  double total = 0.0;
  for (std::size_t s = 0; s < d2.size(); ++s) {
    w[s] = std::exp(-(d2[s] - lo) / (2.0 * sigma * sigma));
    total += w[s];
  }
  for (std::size_t s = 0; s < d2.size(); ++s) w[s] /= total;
  return w;
}

Tensor gaussian_global(const Tensor& v_global, const GridGeometry& grid, std::pair<double, double> center,
                       double sigma) {
  if (v_global.shape().rank() != 2 || v_global.cols() != grid.cells()) {
    throw FeatureError("gaussian_global: feature grid " + v_global.shape().str() + " does not match " +
                       std::to_string(grid.cells()) + " cells");
  }
  const Tensor w = gaussian_weights(grid, center, sigma);
  const std::size_t d = v_global.rows(), k = v_global.cols();
  Tensor out(Shape{d});
  for (std::size_t f = 0; f < d; ++f) {
    double acc = 0.0;
    for (std::size_t s = 0; s < k; ++s) acc += v_global.at(f, s) * w[s];
    out[f] = acc;
  }
  return out;
}

SpatialBias spatial_bias(const GridGeometry& grid, std::pair<double, double> center, double sigma_b) {
  check_sigma(sigma_b, "spatial_bias");
  const std::vector<double> d2 = cell_sq_distances(grid, center);
  SpatialBias out;
  out.sigma_b = sigma_b;
  out.g = Tensor(Shape{d2.size()});
  out.log_g = Tensor(Shape{d2.size()});
  for (std::size_t s = 0; s < d2.size(); ++s) {
    out.log_g[s] = -d2[s] / (2.0 * sigma_b * sigma_b);
    out.g[s] = std::exp(out.log_g[s]);
  }
  return out;
}

Var gaussian_logits(Var log_sigma, const std::vector<double>& sq_dist) {
  if (log_sigma.shape().numel() != 1) throw grad::ShapeError("gaussian_logits: log sigma must be a scalar");
  if (sq_dist.empty()) throw grad::ShapeError("gaussian_logits: no cells");
  const double inv = std::exp(-2.0 * log_sigma.item());
  Tensor y(Shape{sq_dist.size()});
  for (std::size_t s = 0; s < sq_dist.size(); ++s) y[s] = -0.5 * sq_dist[s] * inv;
  const std::uint32_t is = log_sigma.id();
  const std::uint32_t iy = static_cast<std::uint32_t>(log_sigma.tape()->size());
  return log_sigma.tape()->record(
      std::move(y), {log_sigma},
      [is, iy](grad::Tape& t, const Tensor& g) {
        // d/d(log sigma) of -d2/2 * exp(-2 log sigma) is -2 times the logit.
        const Tensor& y = t.value(iy);
        double acc = 0.0;
        for (std::size_t s = 0; s < y.size(); ++s) acc += g[s] * (-2.0 * y[s]);
        t.grad_buffer(is)[0] += acc;
      },
      "gaussian_logits");
}

Var gaussian_global(Var v_global, Var log_sigma, const std::vector<double>& sq_dist) {
  return grad::matmul(v_global, grad::softmax(gaussian_logits(log_sigma, sq_dist)));
}

TargetStatic prepare_target(const data::Scene& scene, const data::ObjectRef& target, std::size_t K) {
  TargetStatic ts;
  ts.scene_id = scene.scene_id;
  ts.object_id = target.object_id;
  ts.o = target.feature;
  ts.l = encode_location(target.box, scene.width, scene.height);
  std::vector<Box> boxes;
  std::vector<Tensor> feats;
  for (const data::ObjectRef& o : scene.objects) {
    if (o.object_id == target.object_id) continue;
    boxes.push_back(o.box);
    feats.push_back(o.feature);
  }
  ts.delta_l = encode_location_diff(target.box, boxes, K);
  ts.delta_o = encode_visual_diff(target.feature, feats);
  ts.center = {target.box.cx() / scene.width, target.box.cy() / scene.height};
  ts.sq_dist = cell_sq_distances(scene.grid, ts.center);
  return ts;
}

Var assemble(Var w_m, Var o, Var g_prime, Var l, Var delta_o, Var delta_l) {
  const Var x = grad::concat({o, g_prime, l, delta_o, delta_l});
  if (w_m.shape().rank() != 2 || w_m.shape()[1] != x.shape()[0]) {
    throw grad::ShapeError("assemble: W_m " + w_m.shape().str() + " does not match fused input " +
                           x.shape().str());
  }
  return grad::matmul(w_m, x);
}

TargetEncoding encode_target(const data::Scene& scene, const data::ObjectRef& target, const Tensor& w_m,
                             double sigma_g, double sigma_b, std::size_t K) {
  const TargetStatic ts = prepare_target(scene, target, K);
  TargetEncoding enc;
  enc.scene_id = ts.scene_id;
  enc.object_id = ts.object_id;
  enc.l = ts.l;
  enc.delta_o = ts.delta_o;
  enc.delta_l = ts.delta_l;
  enc.g_prime = gaussian_global(scene.global_features, scene.grid, ts.center, sigma_g);
  enc.bias = spatial_bias(scene.grid, ts.center, sigma_b);
  std::vector<double> x;
  for (const Tensor* part : std::initializer_list<const Tensor*>{&ts.o, &enc.g_prime, &enc.l, &enc.delta_o, &enc.delta_l}) {
    x.insert(x.end(), part->storage().begin(), part->storage().end());
  }
  if (w_m.shape().rank() != 2 || w_m.cols() != x.size()) {
    throw grad::ShapeError("assemble: W_m " + w_m.shape().str() + " does not match fused input [" +
                           std::to_string(x.size()) + "]");
  }
  enc.v = Tensor(Shape{w_m.rows()});
  for (std::size_t r = 0; r < w_m.rows(); ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < x.size(); ++c) acc += w_m.at(r, c) * x[c];
    enc.v[r] = acc;
  }
  return enc;
}

}  // namespace rxl::features
