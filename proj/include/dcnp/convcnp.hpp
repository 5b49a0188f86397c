#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcnp/distributions.hpp"
#include "dcnp/grid.hpp"
#include "dcnp/ops.hpp"
#include "dcnp/rng.hpp"
#include "dcnp/tensor.hpp"

namespace dcnp {

enum class TopoMode { kAll, kElevation, kMtpi, kNone };

std::string topo_mode_name(TopoMode m);
TopoMode topo_mode_from_name(const std::string& s);

struct ModelConfig {
  dist::Head head = dist::Head::kGaussian;
  int n_resnet_blocks = 6;
  int hidden_channels = 128;
  std::vector<int> mlp_layers = {128};     // per-cell head MLP hidden widths
  std::vector<int> topo_layers = {64, 64};  // topography MLP hidden widths
  TopoMode topo_mode = TopoMode::kAll;
  Padding padding = Padding::kZero;
  int block_kernel = 3;    // depthwise kernel in residual blocks
  int encoder_kernel = 5;  // shared non-negative encoder kernel
  bool normalized_readout = true;

  int n_p() const { return dist::n_params(head); }

  nlohmann::ordered_json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

// Grid-to-site downscaling model: normalized-convolution encoder over the
// masked context grid, residual CNN decoder to per-cell distribution
// parameters, EQ-kernel readout at arbitrary coordinates, and a residual
// topography MLP, finished by the head's link functions.
class ConvCnp {
 public:
  ConvCnp(ModelConfig cfg, std::vector<std::string> channel_names, std::uint64_t seed);

  // Stage 1: per input channel, a normalized data channel and a density
  // channel; output [H, W, 2C].
  Var encode(const PredictorGrid& grid) const;
  // Stage 2: encoded grid -> unconstrained parameter grid [H, W, n_p].
  Var decode(const Var& encoded) const;
  // Stage 3: EQ-weighted translation of the parameter grid to sites,
  // [n_sites, n_p]. Sites must lie inside the grid bounding box.
  Var readout(const Var& param_grid, const PredictorGrid& grid,
              std::span<const TargetSite> sites) const;
  // Stage 4: residual topography adjustment (identity when mode is none).
  Var topo_adjust(const Var& raw, std::span<const TargetSite> sites) const;

  // encode -> decode -> readout -> topo_adjust, still unconstrained.
  Var raw_site_params(const PredictorGrid& grid, std::span<const TargetSite> sites) const;
  // As above plus the head link functions; columns satisfy the head's range
  // constraints.
  Var site_params(const PredictorGrid& grid, std::span<const TargetSite> sites) const;

  std::vector<dist::PredictiveParams> forward(const PredictorGrid& grid,
                                              std::span<const TargetSite> sites) const;

  const ModelConfig& config() const { return cfg_; }
  const std::vector<std::string>& channel_names() const { return channels_; }
  std::uint64_t seed() const { return seed_; }

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  Parameter* find_parameter(const std::string& name);

  // Deep copy / restore of all parameter values (early-stopping snapshots).
  std::vector<Tensor> snapshot_values() const;
  void restore_values(const std::vector<Tensor>& snap);

  // Checkpoint directory: manifest.json plus one tensor file per parameter.
  // `extra` is merged into the manifest as-is.
  void save(const std::filesystem::path& dir,
            const nlohmann::ordered_json& extra = nlohmann::ordered_json::object()) const;
  static ConvCnp load(const std::filesystem::path& dir,
                      nlohmann::ordered_json* manifest_out = nullptr);

  // Readout lengthscales in grid-index units (exp of the stored logs).
  std::pair<double, double> lengthscales() const;

 private:
  struct Block {
    Parameter dw1, pw1, b1, dw2, pw2, b2;
  };
  struct DenseLayer {
    Parameter w, b;
  };

  Var apply_head_mlp(const Var& h) const;
  int topo_dim() const;
  std::vector<double> topo_features(const TargetSite& s) const;

  ModelConfig cfg_;
  std::vector<std::string> channels_;
  std::uint64_t seed_;

  Parameter enc_kernel_;  // softplus-reparameterized, [ke, ke]
  Parameter lift_w_, lift_b_;
  std::vector<Block> blocks_;
  std::vector<DenseLayer> head_mlp_;  // 1x1 convolutions
  Parameter log_l1_, log_l2_;
  std::vector<DenseLayer> topo_mlp_;
};

}  // namespace dcnp
