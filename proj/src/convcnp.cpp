#include "dcnp/convcnp.hpp"

#include <cmath>
#include <fstream>

#include "dcnp/tensor_io.hpp"

namespace dcnp {

std::string topo_mode_name(TopoMode m) {
  switch (m) {
    case TopoMode::kAll: return "all";
    case TopoMode::kElevation: return "elevation";
    case TopoMode::kMtpi: return "mtpi";
    case TopoMode::kNone: return "none";
  }
  return "all";
}

TopoMode topo_mode_from_name(const std::string& s) {
  if (s == "all") return TopoMode::kAll;
  if (s == "elevation") return TopoMode::kElevation;
  if (s == "mtpi") return TopoMode::kMtpi;
  if (s == "none") return TopoMode::kNone;
  throw std::invalid_argument("unknown topo mode: " + s);
}

void PredictorGrid::validate() const {
  if (values.rank() != 3 || values.extent(0) != n_lat() || values.extent(1) != n_lon() ||
      values.extent(2) != n_channels()) {
    throw std::invalid_argument("PredictorGrid: values shape " + shape_string(values.shape()) +
                                " does not match axes/channels");
  }
  if (!mask.same_shape(values)) throw std::invalid_argument("PredictorGrid: mask shape mismatch");
  auto check_axis = [](const std::vector<double>& ax, const char* name) {
    if (ax.size() < 2) throw std::invalid_argument(std::string("PredictorGrid: axis too short: ") + name);
    const double d0 = ax[1] - ax[0];
    if (d0 <= 0) throw std::invalid_argument(std::string("PredictorGrid: axis not ascending: ") + name);
    for (std::size_t i = 1; i + 1 < ax.size(); ++i) {
      const double d = ax[i + 1] - ax[i];
      if (std::fabs(d - d0) > 1e-9 * std::fabs(d0)) {
        throw std::invalid_argument(std::string("PredictorGrid: non-uniform axis: ") + name);
      }
    }
  };
  check_axis(lons, "lon");
  check_axis(lats, "lat");
  for (int i = 0; i < mask.size(); ++i) {
    if (mask[i] != 0.0 && mask[i] != 1.0) {
      throw std::invalid_argument("PredictorGrid: mask entries must be 0 or 1");
    }
  }
}

nlohmann::ordered_json ModelConfig::to_json() const {
  nlohmann::ordered_json j;
  j["head"] = head == dist::Head::kGaussian ? "gaussian" : "bernoulli_gamma";
  j["n_resnet_blocks"] = n_resnet_blocks;
  j["hidden_channels"] = hidden_channels;
  j["mlp_layers"] = mlp_layers;
  j["topo_layers"] = topo_layers;
  j["topo_mode"] = topo_mode_name(topo_mode);
  j["padding"] = padding == Padding::kZero ? "zero" : "circular";
  j["block_kernel"] = block_kernel;
  j["encoder_kernel"] = encoder_kernel;
  j["normalized_readout"] = normalized_readout;
  return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  const std::string head = j.value("head", "gaussian");
  if (head == "gaussian") {
    c.head = dist::Head::kGaussian;
  } else if (head == "bernoulli_gamma" || head == "bg") {
    c.head = dist::Head::kBernoulliGamma;
  } else {
    throw std::invalid_argument("unknown head: " + head);
  }
  c.n_resnet_blocks = j.value("n_resnet_blocks", c.n_resnet_blocks);
  c.hidden_channels = j.value("hidden_channels", c.hidden_channels);
  c.mlp_layers = j.value("mlp_layers", c.mlp_layers);
  c.topo_layers = j.value("topo_layers", c.topo_layers);
  c.topo_mode = topo_mode_from_name(j.value("topo_mode", "all"));
  const std::string pad = j.value("padding", "zero");
  if (pad == "zero") {
    c.padding = Padding::kZero;
  } else if (pad == "circular") {
    c.padding = Padding::kCircular;
  } else {
    throw std::invalid_argument("unknown padding: " + pad);
  }
  c.block_kernel = j.value("block_kernel", c.block_kernel);
  c.encoder_kernel = j.value("encoder_kernel", c.encoder_kernel);
  c.normalized_readout = j.value("normalized_readout", c.normalized_readout);
  return c;
}

namespace {

// Topography inputs are brought to order-one scale before the MLP.
constexpr double kElevScale = 1000.0;  // m

Parameter dense_param(const std::string& name, int din, int dout, Rng& rng) {
  return make_parameter(name, glorot_uniform({din, dout}, din, dout, rng));
}

Parameter conv1x1_param(const std::string& name, int cin, int cout, Rng& rng) {
  return make_parameter(name, glorot_uniform({1, 1, cin, cout}, cin, cout, rng));
}

}  // namespace

ConvCnp::ConvCnp(ModelConfig cfg, std::vector<std::string> channel_names, std::uint64_t seed)
    : cfg_(std::move(cfg)), channels_(std::move(channel_names)), seed_(seed) {
  if (channels_.empty()) throw std::invalid_argument("ConvCnp: no channels");
  if (cfg_.hidden_channels <= 0 || cfg_.n_resnet_blocks < 0) {
    throw std::invalid_argument("ConvCnp: bad architecture config");
  }
  if (cfg_.block_kernel % 2 == 0 || cfg_.encoder_kernel % 2 == 0) {
    throw std::invalid_argument("ConvCnp: kernel sizes must be odd");
  }
  Rng rng(seed);
  const int C = static_cast<int>(channels_.size());
  const int hid = cfg_.hidden_channels;
  const int ke = cfg_.encoder_kernel;
  const int kb = cfg_.block_kernel;

  // Raw encoder kernel; softplus keeps the effective kernel positive.
  {
    Tensor k({ke, ke});
    for (int i = 0; i < k.size(); ++i) k[i] = rng.uniform(-2.5, -2.0);
    enc_kernel_ = make_parameter("enc.kernel", std::move(k));
  }

  lift_w_ = conv1x1_param("lift.w", 2 * C, hid, rng);
  lift_b_ = make_parameter("lift.b", Tensor({hid}));

  for (int bi = 0; bi < cfg_.n_resnet_blocks; ++bi) {
    const std::string p = "block" + std::to_string(bi) + ".";
    Block b;
    b.dw1 = make_parameter(p + "dw1", glorot_uniform({kb, kb, hid}, kb * kb, kb * kb, rng));
    b.pw1 = conv1x1_param(p + "pw1", hid, hid, rng);
    b.b1 = make_parameter(p + "b1", Tensor({hid}));
    b.dw2 = make_parameter(p + "dw2", glorot_uniform({kb, kb, hid}, kb * kb, kb * kb, rng));
    b.pw2 = conv1x1_param(p + "pw2", hid, hid, rng);
    b.b2 = make_parameter(p + "b2", Tensor({hid}));
    blocks_.push_back(std::move(b));
  }

  // Per-cell MLP down to the head's parameter count.
  {
    std::vector<int> widths;
    widths.push_back(hid);
    for (int w : cfg_.mlp_layers) widths.push_back(w);
    widths.push_back(cfg_.n_p());
    for (std::size_t li = 0; li + 1 < widths.size(); ++li) {
      const std::string p = "head" + std::to_string(li) + ".";
      DenseLayer l;
      l.w = conv1x1_param(p + "w", widths[li], widths[li + 1], rng);
      l.b = make_parameter(p + "b", Tensor({widths[li + 1]}));
      head_mlp_.push_back(std::move(l));
    }
  }

  // Lengthscales start at twice the grid spacing (index units).
  log_l1_ = make_parameter("readout.log_l1", Tensor::scalar(std::log(2.0)));
  log_l2_ = make_parameter("readout.log_l2", Tensor::scalar(std::log(2.0)));

  if (cfg_.topo_mode != TopoMode::kNone) {
    std::vector<int> widths;
    widths.push_back(cfg_.n_p() + topo_dim());
    for (int w : cfg_.topo_layers) widths.push_back(w);
    widths.push_back(cfg_.n_p());
    for (std::size_t li = 0; li + 1 < widths.size(); ++li) {
      const std::string p = "topo" + std::to_string(li) + ".";
      DenseLayer l;
      const bool last = li + 2 == widths.size();
      // Zero-initialized output layer: the adjustment starts as the identity.
      l.w = last ? make_parameter(p + "w", Tensor({widths[li], widths[li + 1]}))
                 : dense_param(p + "w", widths[li], widths[li + 1], rng);
      l.b = make_parameter(p + "b", Tensor({widths[li + 1]}));
      topo_mlp_.push_back(std::move(l));
    }
  }
}

int ConvCnp::topo_dim() const {
  switch (cfg_.topo_mode) {
    case TopoMode::kAll: return 3;
    case TopoMode::kElevation: return 2;
    case TopoMode::kMtpi: return 1;
    case TopoMode::kNone: return 0;
  }
  return 0;
}

std::vector<double> ConvCnp::topo_features(const TargetSite& s) const {
  switch (cfg_.topo_mode) {
    case TopoMode::kAll: return {s.elev / kElevScale, s.elev_diff / kElevScale, s.mtpi};
    case TopoMode::kElevation: return {s.elev / kElevScale, s.elev_diff / kElevScale};
    case TopoMode::kMtpi: return {s.mtpi};
    case TopoMode::kNone: return {};
  }
  return {};
}

Var ConvCnp::encode(const PredictorGrid& grid) const {
  grid.validate();
  if (grid.channels != channels_) {
    throw std::invalid_argument("encode: grid channels do not match the model schema");
  }
  Tensor masked(grid.values.shape());
  for (int i = 0; i < masked.size(); ++i) masked[i] = grid.values[i] * grid.mask[i];
  Var kernel = softplus_op(enc_kernel_.var);
  Var num = conv2d_shared(Var::constant(std::move(masked)), kernel, cfg_.padding);
  Var den = conv2d_shared(Var::constant(grid.mask), kernel, cfg_.padding);
  Var data = guarded_div(num, den);
  return concat_channels(data, den);
}

Var ConvCnp::apply_head_mlp(const Var& h) const {
  Var x = h;
  for (std::size_t li = 0; li < head_mlp_.size(); ++li) {
    x = add_channel_bias(conv2d(x, head_mlp_[li].w.var, cfg_.padding), head_mlp_[li].b.var);
    if (li + 1 < head_mlp_.size()) x = relu_op(x);
  }
  return x;
}

Var ConvCnp::decode(const Var& encoded) const {
  const int C = static_cast<int>(channels_.size());
  if (encoded.value().rank() != 3 || encoded.value().extent(2) != 2 * C) {
    throw std::invalid_argument("decode: expected [H,W," + std::to_string(2 * C) + "] encoding");
  }
  Var h = add_channel_bias(conv2d(encoded, lift_w_.var, cfg_.padding), lift_b_.var);
  for (const Block& b : blocks_) {
    Var branch = add_channel_bias(
        depthwise_separable_conv(h, b.dw1.var, b.pw1.var, cfg_.padding), b.b1.var);
    branch = relu_op(branch);
    branch = add_channel_bias(
        depthwise_separable_conv(branch, b.dw2.var, b.pw2.var, cfg_.padding), b.b2.var);
    h = add(h, branch);
  }
  return apply_head_mlp(h);
}

Var ConvCnp::readout(const Var& param_grid, const PredictorGrid& grid,
                     std::span<const TargetSite> sites) const {
  const Tensor& pg = param_grid.value();
  if (pg.rank() != 3) throw std::invalid_argument("readout: parameter grid must be [H,W,P]");
  const int H = pg.extent(0), W = pg.extent(1), P = pg.extent(2);
  const int S = static_cast<int>(sites.size());
  std::vector<double> gx(sites.size()), gy(sites.size());
  for (int s = 0; s < S; ++s) {
    if (!grid.contains(sites[s].lon, sites[s].lat)) {
      throw std::invalid_argument("readout: site outside grid bounding box (lon=" +
                                  std::to_string(sites[s].lon) + ", lat=" +
                                  std::to_string(sites[s].lat) + ")");
    }
    gx[s] = grid.frac_x(sites[s].lon);
    gy[s] = grid.frac_y(sites[s].lat);
  }
  const bool normalized = cfg_.normalized_readout;
  const bool periodic = cfg_.padding == Padding::kCircular;

  const double l1 = std::exp(log_l1_.var.value()(0));
  const double l2 = std::exp(log_l2_.var.value()(0));

  auto displacement = [periodic](double delta, int extent) {
    if (!periodic) return delta;
    const double e = static_cast<double>(extent);
    return delta - e * std::round(delta / e);
  };

  Tensor out({S, P});
  for (int s = 0; s < S; ++s) {
    double emax = -1e300;
    if (normalized) {
      for (int r = 0; r < H; ++r) {
        const double dy = displacement(gy[s] - r, H);
        for (int c = 0; c < W; ++c) {
          const double dx = displacement(gx[s] - c, W);
          const double e = -0.5 * dx * dx / (l1 * l1) - 0.5 * dy * dy / (l2 * l2);
          if (e > emax) emax = e;
        }
      }
    } else {
      emax = 0.0;
    }
    double wsum = 0.0;
    std::vector<double> acc(static_cast<std::size_t>(P), 0.0);
    for (int r = 0; r < H; ++r) {
      const double dy = displacement(gy[s] - r, H);
      for (int c = 0; c < W; ++c) {
        const double dx = displacement(gx[s] - c, W);
        const double w =
            std::exp(-0.5 * dx * dx / (l1 * l1) - 0.5 * dy * dy / (l2 * l2) - emax);
        wsum += w;
        const double* hrow = pg.data() + (r * W + c) * P;
        for (int p = 0; p < P; ++p) acc[p] += w * hrow[p];
      }
    }
    for (int p = 0; p < P; ++p) out(s, p) = normalized ? acc[p] / wsum : acc[p];
  }

  std::vector<Var> parents = {param_grid, log_l1_.var, log_l2_.var};
  return make_op(
      std::move(out), std::move(parents),
      [H, W, P, S, gx, gy, normalized, periodic, displacement](Node& node) {
        Node* ph = node.parents[0].node();
        Node* p1 = node.parents[1].node();
        Node* p2 = node.parents[2].node();
        const bool gh = ph->requires_grad;
        const bool gl = p1->requires_grad || p2->requires_grad;
        if (gh) ph->ensure_grad();
        if (p1->requires_grad) p1->ensure_grad();
        if (p2->requires_grad) p2->ensure_grad();
        const double l1 = std::exp(p1->value(0));
        const double l2 = std::exp(p2->value(0));
        for (int s = 0; s < S; ++s) {
          // Recompute the weight field for this site.
          double emax = -1e300;
          if (normalized) {
            for (int r = 0; r < H; ++r) {
              const double dy = displacement(gy[s] - r, H);
              for (int c = 0; c < W; ++c) {
                const double dx = displacement(gx[s] - c, W);
                const double e = -0.5 * dx * dx / (l1 * l1) - 0.5 * dy * dy / (l2 * l2);
                if (e > emax) emax = e;
              }
            }
          } else {
            emax = 0.0;
          }
          double wsum = 0.0;
          // Accumulators for the lengthscale derivatives: t = dw/dlog_l1.
          double tsum = 0.0, usum = 0.0;
          std::vector<double> th(static_cast<std::size_t>(P), 0.0);
          std::vector<double> uh(static_cast<std::size_t>(P), 0.0);
          std::vector<double> wh(static_cast<std::size_t>(P), 0.0);
          for (int r = 0; r < H; ++r) {
            const double dy = displacement(gy[s] - r, H);
            for (int c = 0; c < W; ++c) {
              const double dx = displacement(gx[s] - c, W);
              const double w =
                  std::exp(-0.5 * dx * dx / (l1 * l1) - 0.5 * dy * dy / (l2 * l2) - emax);
              wsum += w;
              const double t = w * dx * dx / (l1 * l1);
              const double u = w * dy * dy / (l2 * l2);
              tsum += t;
              usum += u;
              const double* hrow = ph->value.data() + (r * W + c) * P;
              for (int p = 0; p < P; ++p) {
                th[p] += t * hrow[p];
                uh[p] += u * hrow[p];
                wh[p] += w * hrow[p];
              }
            }
          }
          const double* grow = node.grad.data() + s * P;
          if (gh) {
            const double scale = normalized ? 1.0 / wsum : 1.0;
            for (int r = 0; r < H; ++r) {
              const double dy = displacement(gy[s] - r, H);
              for (int c = 0; c < W; ++c) {
                const double dx = displacement(gx[s] - c, W);
                const double w =
                    std::exp(-0.5 * dx * dx / (l1 * l1) - 0.5 * dy * dy / (l2 * l2) - emax);
                double* hg = ph->grad.data() + (r * W + c) * P;
                for (int p = 0; p < P; ++p) hg[p] += grow[p] * w * scale;
              }
            }
          }
          if (gl) {
            for (int p = 0; p < P; ++p) {
              double d1, d2;
              if (normalized) {
                const double outp = wh[p] / wsum;
                d1 = (th[p] - outp * tsum) / wsum;
                d2 = (uh[p] - outp * usum) / wsum;
              } else {
                d1 = th[p];
                d2 = uh[p];
              }
              if (p1->requires_grad) p1->grad(0) += grow[p] * d1;
              if (p2->requires_grad) p2->grad(0) += grow[p] * d2;
            }
          }
        }
      });
}

Var ConvCnp::topo_adjust(const Var& raw, std::span<const TargetSite> sites) const {
  const int np = cfg_.n_p();
  if (raw.value().rank() != 2 || raw.value().extent(1) != np) {
    throw std::invalid_argument("topo_adjust: expected [N," + std::to_string(np) + "]");
  }
  if (raw.value().extent(0) != static_cast<int>(sites.size())) {
    throw std::invalid_argument("topo_adjust: row/site count mismatch");
  }
  if (cfg_.topo_mode == TopoMode::kNone) return raw;
  const int nt = topo_dim();
  Tensor topo({static_cast<int>(sites.size()), nt});
  for (std::size_t s = 0; s < sites.size(); ++s) {
    const std::vector<double> f = topo_features(sites[s]);
    for (int k = 0; k < nt; ++k) {
      if (!std::isfinite(f[k])) throw std::invalid_argument("topo_adjust: non-finite topography");
      topo(static_cast<int>(s), k) = f[k];
    }
  }
  Var x = concat_cols({raw, Var::constant(std::move(topo))});
  for (std::size_t li = 0; li < topo_mlp_.size(); ++li) {
    x = dense(x, topo_mlp_[li].w.var, topo_mlp_[li].b.var);
    if (li + 1 < topo_mlp_.size()) x = relu_op(x);
  }
  return add(raw, x);
}

Var ConvCnp::raw_site_params(const PredictorGrid& grid, std::span<const TargetSite> sites) const {
  Var encoded = encode(grid);
  Var pgrid = decode(encoded);
  Var raw = readout(pgrid, grid, sites);
  return topo_adjust(raw, sites);
}

Var ConvCnp::site_params(const PredictorGrid& grid, std::span<const TargetSite> sites) const {
  return dist::apply_link(raw_site_params(grid, sites), cfg_.head);
}

std::vector<dist::PredictiveParams> ConvCnp::forward(const PredictorGrid& grid,
                                                     std::span<const TargetSite> sites) const {
  const Var linked = site_params(grid, sites);
  std::vector<dist::PredictiveParams> out;
  out.reserve(sites.size());
  for (int s = 0; s < static_cast<int>(sites.size()); ++s) {
    out.push_back(dist::params_from_row(linked.value(), s, cfg_.head));
  }
  return out;
}

std::vector<Parameter*> ConvCnp::parameters() {
  std::vector<Parameter*> ps;
  ps.push_back(&enc_kernel_);
  ps.push_back(&lift_w_);
  ps.push_back(&lift_b_);
  for (Block& b : blocks_) {
    ps.push_back(&b.dw1);
    ps.push_back(&b.pw1);
    ps.push_back(&b.b1);
    ps.push_back(&b.dw2);
    ps.push_back(&b.pw2);
    ps.push_back(&b.b2);
  }
  for (DenseLayer& l : head_mlp_) {
    ps.push_back(&l.w);
    ps.push_back(&l.b);
  }
  ps.push_back(&log_l1_);
  ps.push_back(&log_l2_);
  for (DenseLayer& l : topo_mlp_) {
    ps.push_back(&l.w);
    ps.push_back(&l.b);
  }
  return ps;
}

std::vector<const Parameter*> ConvCnp::parameters() const {
  auto ps = const_cast<ConvCnp*>(this)->parameters();
  return {ps.begin(), ps.end()};
}

Parameter* ConvCnp::find_parameter(const std::string& name) {
  for (Parameter* p : parameters()) {
    if (p->name == name) return p;
  }
  return nullptr;
}

std::vector<Tensor> ConvCnp::snapshot_values() const {
  std::vector<Tensor> snap;
  for (const Parameter* p : parameters()) snap.push_back(p->value());
  return snap;
}

void ConvCnp::restore_values(const std::vector<Tensor>& snap) {
  auto ps = parameters();
  if (snap.size() != ps.size()) throw std::invalid_argument("restore_values: size mismatch");
  for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->value() = snap[i];
}

std::pair<double, double> ConvCnp::lengthscales() const {
  return {std::exp(log_l1_.value()(0)), std::exp(log_l2_.value()(0))};
}

void ConvCnp::save(const std::filesystem::path& dir, const nlohmann::ordered_json& extra) const {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json manifest;
  manifest["format"] = 1;
  manifest["config"] = cfg_.to_json();
  manifest["channels"] = channels_;
  manifest["seed"] = seed_;
  for (auto it = extra.begin(); it != extra.end(); ++it) manifest[it.key()] = it.value();
  nlohmann::ordered_json names = nlohmann::ordered_json::array();
  for (const Parameter* p : parameters()) names.push_back(p->name);
  manifest["params"] = names;
  std::ofstream os(dir / "manifest.json");
  if (!os) throw std::runtime_error("cannot write manifest: " + (dir / "manifest.json").string());
  os << manifest.dump(2) << "\n";
  for (const Parameter* p : parameters()) save_tensor(dir / (p->name + ".dcnp"), p->value());
}

ConvCnp ConvCnp::load(const std::filesystem::path& dir, nlohmann::ordered_json* manifest_out) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw std::runtime_error("cannot open manifest: " + (dir / "manifest.json").string());
  nlohmann::ordered_json manifest = nlohmann::ordered_json::parse(is);
  ModelConfig cfg = ModelConfig::from_json(manifest.at("config"));
  std::vector<std::string> channels = manifest.at("channels").get<std::vector<std::string>>();
  const std::uint64_t seed = manifest.at("seed").get<std::uint64_t>();
  ConvCnp model(cfg, channels, seed);
  for (Parameter* p : model.parameters()) {
    Tensor t = load_tensor(dir / (p->name + ".dcnp"));
    if (!t.same_shape(p->value())) {
      throw std::runtime_error("checkpoint tensor " + p->name + " has shape " +
                               shape_string(t.shape()) + ", expected " +
                               shape_string(p->value().shape()));
    }
    p->value() = std::move(t);
  }
  if (manifest_out) *manifest_out = std::move(manifest);
  return model;
}

}  // namespace dcnp
