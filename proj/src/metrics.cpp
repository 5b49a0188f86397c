#include "dcnp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace dcnp::metrics {

void SiteSeries::validate() const {
  if (observed.size() != dates.size() || predicted.size() != dates.size()) {
    throw std::invalid_argument("SiteSeries: length mismatch");
  }
  for (std::size_t i = 1; i < dates.size(); ++i) {
    if (!(dates[i - 1] < dates[i])) {
      throw std::invalid_argument("SiteSeries: dates must be strictly increasing");
    }
  }
  if (variable == data::Variable::kPrecip) {
    for (std::size_t i = 0; i < dates.size(); ++i) {
      if (observed[i] < 0.0 || predicted[i] < 0.0) {
        throw std::invalid_argument("SiteSeries: negative precipitation");
      }
    }
  }
}

std::optional<double> mae(const SiteSeries& s) {
  if (s.size() == 0) return std::nullopt;
  double acc = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) acc += std::fabs(s.observed[i] - s.predicted[i]);
  return acc / static_cast<double>(s.size());
}

std::optional<double> mean_bias(const SiteSeries& s) {
  if (s.size() == 0) return std::nullopt;
  double acc = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) acc += s.predicted[i] - s.observed[i];
  return acc / static_cast<double>(s.size());
}

namespace {

// Average ranks, ties sharing the mean rank of their run.
std::vector<double> average_ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&v](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return std::nullopt;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

std::optional<double> spearman(const SiteSeries& s) {
  if (s.size() < 3) return std::nullopt;
  return pearson(average_ranks(s.observed), average_ranks(s.predicted));
}

std::optional<double> r01(const SiteSeries& s, double threshold) {
  long obs_wet = 0, pred_wet = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    obs_wet += s.observed[i] > threshold ? 1 : 0;
    pred_wet += s.predicted[i] > threshold ? 1 : 0;
  }
  if (obs_wet == 0) return std::nullopt;
  return static_cast<double>(pred_wet) / static_cast<double>(obs_wet);
}

SdiiResult sdii(const SiteSeries& s, double threshold) {
  double po = 0.0, pp = 0.0;
  long no = 0, np = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s.observed[i] > threshold) {
      po += s.observed[i];
      ++no;
    }
    if (s.predicted[i] > threshold) {
      pp += s.predicted[i];
      ++np;
    }
  }
  SdiiResult r;
  if (no > 0) r.observed = po / static_cast<double>(no);
  if (np > 0) r.predicted = pp / static_cast<double>(np);
  return r;
}

double quantile_type7(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile_type7: empty sample");
  if (q < 0.0 || q > 1.0) throw std::invalid_argument("quantile_type7: q outside [0,1]");
  std::sort(values.begin(), values.end());
  const double h = q * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double f = h - static_cast<double>(lo);
  return values[lo] * (1.0 - f) + values[hi] * f;
}

std::optional<double> p98_bias(const SiteSeries& s, bool wet_days_only, double threshold) {
  std::vector<double> obs, pred;
  if (s.variable == data::Variable::kPrecip && wet_days_only) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s.observed[i] > threshold) obs.push_back(s.observed[i]);
      if (s.predicted[i] > threshold) pred.push_back(s.predicted[i]);
    }
  } else {
    obs = s.observed;
    pred = s.predicted;
  }
  if (obs.empty() || pred.empty()) return std::nullopt;
  return quantile_type7(std::move(pred), 0.98) - quantile_type7(std::move(obs), 0.98);
}

std::optional<double> r10(const SiteSeries& s) {
  long obs10 = 0, pred10 = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    obs10 += s.observed[i] > 10.0 ? 1 : 0;
    pred10 += s.predicted[i] > 10.0 ? 1 : 0;
  }
  if (obs10 == 0) return std::nullopt;
  return static_cast<double>(pred10) / static_cast<double>(obs10);
}

double ks_uniform(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  double ks = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double u = values[i];
    const double hi = (static_cast<double>(i) + 1.0) / n - u;
    const double lo = u - static_cast<double>(i) / n;
    ks = std::max(ks, std::max(hi, lo));
  }
  return ks;
}

PitSummary pit_summary(const std::vector<double>& pits) {
  PitSummary out;
  out.n = static_cast<int>(pits.size());
  for (double p : pits) {
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("pit_summary: value outside [0,1]");
    int bin = static_cast<int>(p * 20.0);
    if (bin == 20) bin = 19;
    out.histogram[static_cast<std::size_t>(bin)] += 1;
  }
  out.ks = ks_uniform(pits);
  return out;
}

std::vector<std::string> metric_names_for(data::Variable v) {
  if (v == data::Variable::kTmax) return {"mae", "mean_bias", "spearman", "p98_bias"};
  return {"mae", "mean_bias", "spearman", "r01", "sdii_pred", "sdii_obs", "p98_bias", "r10"};
}

std::map<std::string, double> station_metrics(const SiteSeries& s, double wet_threshold) {
  s.validate();
  std::map<std::string, double> out;
  auto put = [&out](const std::string& name, const std::optional<double>& v) {
    if (v.has_value()) out[name] = *v;
  };
  put("mae", mae(s));
  put("mean_bias", mean_bias(s));
  put("spearman", spearman(s));
  put("p98_bias", p98_bias(s, true, wet_threshold));
  if (s.variable == data::Variable::kPrecip) {
    put("r01", r01(s, wet_threshold));
    const SdiiResult sd = sdii(s, wet_threshold);
    put("sdii_pred", sd.predicted);
    put("sdii_obs", sd.observed);
    put("r10", r10(s));
  }
  return out;
}

std::map<std::string, MetricReport::Quartiles> MetricReport::summary() const {
  std::map<std::string, Quartiles> out;
  for (const std::string& m : metric_names) {
    std::vector<double> vals;
    for (const auto& [station, metrics] : rows) {
      const auto it = metrics.find(m);
      if (it != metrics.end()) vals.push_back(it->second);
    }
    if (vals.empty()) continue;
    Quartiles q;
    q.count = static_cast<int>(vals.size());
    q.q1 = quantile_type7(vals, 0.25);
    q.median = quantile_type7(vals, 0.5);
    q.q3 = quantile_type7(vals, 0.75);
    out[m] = q;
  }
  return out;
}

std::string MetricReport::to_csv() const {
  std::ostringstream os;
  os << "station,metric,value\n";
  for (const auto& [station, metrics] : rows) {
    for (const std::string& m : metric_names) {
      const auto it = metrics.find(m);
      os << station << "," << m << ",";
      if (it != metrics.end()) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", it->second);
        os << buf;
      } else {
        os << "missing";
      }
      os << "\n";
    }
  }
  return os.str();
}

nlohmann::ordered_json MetricReport::to_json() const {
  nlohmann::ordered_json j;
  nlohmann::ordered_json metrics_j;
  for (const auto& [name, q] : summary()) {
    nlohmann::ordered_json e;
    e["q1"] = q.q1;
    e["median"] = q.median;
    e["q3"] = q.q3;
    e["count"] = q.count;
    metrics_j[name] = std::move(e);
  }
  j["metrics"] = std::move(metrics_j);
  if (pit.has_value()) {
    nlohmann::ordered_json p;
    p["n"] = pit->n;
    p["ks"] = pit->ks;
    p["histogram"] = pit->histogram;
    j["pit"] = std::move(p);
  }
  return j;
}

}  // namespace dcnp::metrics
