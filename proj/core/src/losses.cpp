#include "scfusion/losses.hpp"

#include <algorithm>
#include <cmath>

#include "scfusion/errors.hpp"

namespace scf::losses {

namespace {
constexpr double kClampLo = 1e-7;
constexpr double kClampHi = 1.0 - 1e-7;
}  // namespace

void LossConfig::validate() const {
  if (!(alpha > 0.0)) throw ValidationError("loss alpha must be positive");
  if (!(gamma >= 0.0)) throw ValidationError("loss gamma must be non-negative");
  if (!(beta >= 0.0)) throw ValidationError("loss beta must be non-negative");
}

CellLoss focal_cell(double p, bool positive, const LossConfig& cfg) {
  const double q = std::clamp(p, kClampLo, kClampHi);
  // Modulator m(q): (1-q)^gamma in the default form for both classes; the
  // variant uses q^gamma on negatives so easy negatives vanish.
  const double base = positive ? 1.0 - q : (cfg.centernet_variant ? q : 1.0 - q);
  const double m = cfg.gamma == 0.0 ? 1.0 : std::pow(base, cfg.gamma);
  const double ce = positive ? std::log(q) : std::log(1.0 - q);  // <= 0
  CellLoss out;
  out.loss = -cfg.alpha * m * ce;

  if (p <= kClampLo || p >= kClampHi) return out;  // clamp region: flat
  // d/dq of -alpha * m(q) * ce(q), with dm/dq = +-gamma*base^(gamma-1).
  const double dm = cfg.gamma == 0.0
                        ? 0.0
                        : cfg.gamma * std::pow(base, cfg.gamma - 1.0) *
                              (positive ? -1.0 : (cfg.centernet_variant ? 1.0 : -1.0));
  const double dce = positive ? 1.0 / q : -1.0 / (1.0 - q);
  out.d_p = -cfg.alpha * (dm * ce + m * dce);
  return out;
}

FocalResult focal_loss_map(const ProbMap& p, const GtHeatmap& y, const LossConfig& cfg,
                           const Mask* valid) {
  cfg.validate();
  if (p.h != y.h || p.w != y.w) throw ValidationError("probability and target shapes differ");
  if (valid && (valid->h != p.h || valid->w != p.w))
    throw ValidationError("validity mask shape differs from probabilities");

  FocalResult res;
  res.d_p.assign(p.p.size(), 0.0);
  for (size_t i = 0; i < p.p.size(); ++i) {
    if (valid && !valid->v[i]) continue;
    const double pi = p.p[i];
    if (!(pi > 0.0 && pi < 1.0)) throw ValidationError("probabilities must lie strictly in (0,1)");
    const CellLoss cell = focal_cell(pi, y.y[i] != 0, cfg);
    res.loss += cell.loss;
    res.d_p[i] = cell.d_p;
  }
  return res;
}

double single_view_loss(const std::vector<ProbMap>& probs, const std::vector<GtHeatmap>& gts,
                        const std::vector<Mask>& masks, const LossConfig& cfg,
                        std::vector<double>* per_camera) {
  if (probs.empty()) throw ValidationError("at least one camera is required");
  if (gts.size() != probs.size() || masks.size() != probs.size())
    throw ValidationError("per-camera input counts do not match");
  double total = 0.0;
  if (per_camera) per_camera->clear();
  for (size_t s = 0; s < probs.size(); ++s) {
    const double l = focal_loss_map(probs[s], gts[s], cfg, &masks[s]).loss;
    total += l;
    if (per_camera) per_camera->push_back(l);
  }
  return total;
}

double combined_loss(double l_single, double l_multi, const LossConfig& cfg) {
  if (!std::isfinite(l_single) || !std::isfinite(l_multi) || l_single < 0.0 || l_multi < 0.0)
    throw ValidationError("component losses must be finite and non-negative");
  return cfg.beta * l_single + l_multi;
}

}  // namespace scf::losses
