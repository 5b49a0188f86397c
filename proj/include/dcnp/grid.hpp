#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dcnp/tensor.hpp"

namespace dcnp {

// Off-grid prediction location with its sub-grid topography.
struct TargetSite {
  double lon = 0.0;
  double lat = 0.0;
  double elev = 0.0;       // m
  double elev_diff = 0.0;  // true minus grid-scale elevation, m
  double mtpi = 0.0;       // topographic position index, dimensionless
};

// One day of gridded multi-channel predictors with an observation mask.
// values and mask are [n_lat, n_lon, n_channels]; mask entries are 0 or 1
// and masked-out values are ignored downstream.
struct PredictorGrid {
  std::vector<double> lons;  // ascending, uniform
  std::vector<double> lats;  // ascending, uniform
  std::vector<std::string> channels;
  Tensor values;
  Tensor mask;

  int n_lat() const { return static_cast<int>(lats.size()); }
  int n_lon() const { return static_cast<int>(lons.size()); }
  int n_channels() const { return static_cast<int>(channels.size()); }

  double dlon() const { return lons.size() > 1 ? lons[1] - lons[0] : 1.0; }
  double dlat() const { return lats.size() > 1 ? lats[1] - lats[0] : 1.0; }

  bool contains(double lon, double lat) const {
    return lon >= lons.front() && lon <= lons.back() && lat >= lats.front() && lat <= lats.back();
  }
  // Fractional grid indices; grid spacing is 1 in index units.
  double frac_x(double lon) const { return (lon - lons.front()) / dlon(); }
  double frac_y(double lat) const { return (lat - lats.front()) / dlat(); }

  void validate() const;
};

}  // namespace dcnp
