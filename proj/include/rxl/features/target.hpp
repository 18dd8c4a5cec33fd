#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "rxl/data/scene.hpp"
#include "rxl/grad/ops.hpp"

namespace rxl::features {

using data::Box;
using data::GridGeometry;
using grad::Shape;
using grad::Tensor;
using grad::Var;

inline constexpr std::size_t kLocationWidth = 5;
inline constexpr std::size_t kDefaultNeighbors = 5;
inline constexpr double kVisualDiffEps = 1e-9;
inline constexpr double kDefaultSigma = 0.25;

class FeatureError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// [x_tl/W, y_tl/H, x_br/W, y_br/H, w*h/(W*H)]
Tensor encode_location(const Box& box, double width, double height);

// K slots of [dx_tl/w, dy_tl/h, dx_br/w, dy_br/h, w_j*h_j/(w*h)] for the K others nearest by
// center distance (ties keep input order); absent slots stay zero.
Tensor encode_location_diff(const Box& target, const std::vector<Box>& others, std::size_t K = kDefaultNeighbors);

// Mean of (o_i - o_j)/|o_i - o_j| over others farther than kVisualDiffEps.
Tensor encode_visual_diff(const Tensor& o_i, const std::vector<Tensor>& others);

// Squared distances from each cell center to `center`, normalized coordinates.
std::vector<double> cell_sq_distances(const GridGeometry& grid, std::pair<double, double> center);

// Normalized Gaussian weights over cells.
Tensor gaussian_weights(const GridGeometry& grid, std::pair<double, double> center, double sigma);
// V_global [d,k] times the normalized Gaussian weights.
Tensor gaussian_global(const Tensor& v_global, const GridGeometry& grid, std::pair<double, double> center,
                       double sigma);

struct SpatialBias {
  Tensor g;      // G_i per global cell, peak normalized
  Tensor log_g;  // log G_i, computed directly so it stays finite when G underflows
  double sigma_b = kDefaultSigma;
};
SpatialBias spatial_bias(const GridGeometry& grid, std::pair<double, double> center, double sigma_b);

// Differentiable log-Gaussian logits -sq_dist/(2 sigma^2) with sigma = exp(log_sigma).
Var gaussian_logits(Var log_sigma, const std::vector<double>& sq_dist);
// g'_i on the tape; weights are softmax(gaussian_logits).
Var gaussian_global(Var v_global, Var log_sigma, const std::vector<double>& sq_dist);

// The parts of a target encoding that do not depend on trainable parameters.
struct TargetStatic {
  std::string scene_id;
  std::string object_id;
  Tensor o;         // [d]
  Tensor l;         // [5]
  Tensor delta_o;   // [d]
  Tensor delta_l;   // [5K]
  std::pair<double, double> center;  // normalized target center
  std::vector<double> sq_dist;       // per global cell
  std::size_t fused_width() const { return 2 * o.size() + l.size() + delta_o.size() + delta_l.size(); }
};

TargetStatic prepare_target(const data::Scene& scene, const data::ObjectRef& target,
                            std::size_t K = kDefaultNeighbors);

// Input width of W_m for feature width d and K neighbor slots.
inline std::size_t fused_width(std::size_t d, std::size_t K = kDefaultNeighbors) {
  return 3 * d + kLocationWidth + kLocationWidth * K;
}

// v_i = W_m [o_i; g'_i; l_i; delta_o_i; delta_l_i]
Var assemble(Var w_m, Var o, Var g_prime, Var l, Var delta_o, Var delta_l);

struct TargetEncoding {
  std::string scene_id;
  std::string object_id;
  Tensor l;
  Tensor delta_o;
  Tensor delta_l;
  Tensor g_prime;
  Tensor v;
  SpatialBias bias;
};

// Plain evaluation of the full encoding at given parameter values.
TargetEncoding encode_target(const data::Scene& scene, const data::ObjectRef& target, const Tensor& w_m,
                             double sigma_g, double sigma_b, std::size_t K = kDefaultNeighbors);

}  // namespace rxl::features
