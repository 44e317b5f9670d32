#include "upmnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "upmnet/association.hpp"
#include "upmnet/aware.hpp"

namespace upmnet {

namespace {

struct Problem {
  AwareBatch input;
  GlobalAwareParams params;
  AnchorBank bank;
  std::vector<std::size_t> sources;
  std::vector<Matrix> probe;  // random upstream weights for the linear objective
  LossConfig loss;
};

Vector random_unit(std::mt19937_64& rng, int dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(dim);
  for (auto& x : v) x = normal(rng);
  return normalize(v);
}

Problem draw_problem(std::mt19937_64& rng) {
  auto pick = [&](std::initializer_list<int> options) {
    std::uniform_int_distribution<std::size_t> idx(0, options.size() - 1);
    return *(options.begin() + static_cast<std::ptrdiff_t>(idx(rng)));
  };
  const int c = pick({8, 16}), c_red = pick({4, 8}), k = pick({1, 2, 4}), batch = pick({4, 8});
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  Problem p;
  p.input.global.resize(batch, c);
  p.input.parts.assign(static_cast<std::size_t>(k), Matrix(batch, c));
  for (int b = 0; b < batch; ++b) {
    p.input.global.row(b) = random_unit(rng, c).transpose();
    for (auto& part : p.input.parts) part.row(b) = random_unit(rng, c).transpose();
  }

  p.params = init_params(c, c_red, k, rng(), unit(rng) > 0.0);
  for (auto& g : p.params.global_proj) for (auto& v : g.bias) v = 0.1 * unit(rng);
  for (int i = 0; i < k; ++i) {
    for (auto& v : p.params.part_proj[i].bias) v = 0.1 * unit(rng);
    for (auto& v : p.params.fuse[i].bias) v = 0.1 * unit(rng);
    for (auto& v : p.params.norm[i].gamma) v = 1.0 + 0.5 * unit(rng);
    for (auto& v : p.params.norm[i].beta) v = 0.5 * unit(rng);
  }

  std::vector<TrackletId> slots;
  for (std::uint32_t cam = 0; cam < 2; ++cam)
    for (std::uint32_t t = 0; t < 3; ++t) slots.push_back(TrackletId{t, CameraId{cam}});
  p.bank = AnchorBank(slots, k, c_red, 0.5);
  for (int i = 0; i < k; ++i) {
    for (Eigen::Index s = 0; s < static_cast<Eigen::Index>(slots.size()); ++s) {
      p.bank.intra[i].row(s) = random_unit(rng, c_red).transpose();
      p.bank.cross[i].row(s) = random_unit(rng, c_red).transpose();
    }
  }
  std::uniform_int_distribution<std::size_t> slot(0, slots.size() - 1);
  for (int b = 0; b < batch; ++b) p.sources.push_back(slot(rng));
  for (int i = 0; i < k; ++i) {
    Matrix g(batch, c_red);
    for (auto& v : g.reshaped()) v = unit(rng);
    p.probe.push_back(std::move(g));
  }
  return p;
}

std::vector<Matrix> normalized_outputs(const AwareBatch& input, const GlobalAwareParams& params) {
  auto fwd = global_aware_forward(input, params, Mode::Train);
  std::vector<Matrix> out;
  for (const auto& m : fwd.features) out.push_back(normalize_rows(m));
  return out;
}

// Association loss with the thresholds (d_min, d_bar) and the branch frozen at
// their base-point values, written out directly from the hinge definitions.
double frozen_loss(const std::vector<Matrix>& features, const Problem& p, const BatchDistances& base) {
  const double k = static_cast<double>(features.size());
  double total = 0.0;
  for (std::size_t b = 0; b < p.sources.size(); ++b) {
    const auto row = static_cast<Eigen::Index>(b);
    const auto src = static_cast<Eigen::Index>(p.sources[b]);
    for (std::size_t i = 0; i < features.size(); ++i) {
      const PartDistances& d = base.parts[i];
      const double threshold = d.d_intra[row] == d.d_min[row] ? d.d_bar[row] : d.d_min[row];
      const double d_intra = (features[i].row(row) - p.bank.intra[i].row(src)).norm();
      const double d_cross = (features[i].row(row) - p.bank.cross[i].row(src)).norm();
      total += (std::max(0.0, d_intra - threshold + p.loss.margin) +
                p.loss.lambda * std::max(0.0, d_cross - threshold + p.loss.margin)) / k;
    }
  }
  return total / static_cast<double>(p.sources.size());
}

double linear_probe(const std::vector<Matrix>& raw, const Problem& p) {
  double total = 0.0;
  for (std::size_t i = 0; i < raw.size(); ++i) total += raw[i].cwiseProduct(p.probe[i]).sum();
  return total;
}

bool near_kink(const Problem& p, const BatchDistances& base, double margin) {
  auto fwd = global_aware_forward(p.input, p.params, Mode::Train);
  for (const auto& pre : fwd.cache.pre_relu)
    if (pre.cwiseAbs().minCoeff() < margin) return true;
  std::vector<Matrix> features;
  for (const auto& m : fwd.features) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      if (m.row(r).norm() < margin) return true;
    features.push_back(normalize_rows(m));
  }
  for (std::size_t i = 0; i < base.parts.size(); ++i) {
    const PartDistances& d = base.parts[i];
    for (Eigen::Index b = 0; b < d.d_min.size(); ++b) {
      const double threshold = d.d_intra[b] == d.d_min[b] ? d.d_bar[b] : d.d_min[b];
      if (d.d_intra[b] < margin || d.d_cross[b] < margin) return true;
      if (std::abs(d.d_intra[b] - threshold + p.loss.margin) < margin) return true;
      if (std::abs(d.d_cross[b] - threshold + p.loss.margin) < margin) return true;
    }
  }
  return false;
}

double rel_err(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Five-point central differences of `objective` w.r.t. every element of `values`.
double check_tensor(double* values, std::size_t size, const double* analytic, const std::function<double()>& objective,
                    const GradcheckOptions& opt, std::size_t& checked) {
  double worst = 0.0;
  for (std::size_t j = 0; j < size; ++j) {
    const double saved = values[j];
    auto at = [&](double offset) {
      values[j] = saved + offset;
      return objective();
    };
    const double h = opt.step;
    const double numeric = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
    values[j] = saved;
    worst = std::max(worst, rel_err(analytic[j], numeric, opt.abs_floor));
    ++checked;
  }
  return worst;
}

GradcheckCase check_problem(Problem& p, const GradcheckOptions& opt) {
  GradcheckCase result;
  result.in_dim = p.params.in_dim;
  result.reduced_dim = p.params.reduced_dim;
  result.k = p.params.num_parts();
  result.batch = static_cast<int>(p.input.batch_size());

  const auto fwd = global_aware_forward(p.input, p.params, Mode::Train);
  std::vector<Matrix> features;
  for (const auto& m : fwd.features) features.push_back(normalize_rows(m));
  const BatchDistances base = compute_distances(features, p.sources, p.bank);
  const LossResult loss = association_loss(features, p.bank, base, p.loss);

  // association loss w.r.t. its own input features
  {
    std::vector<Matrix> x = features;
    for (std::size_t i = 0; i < x.size(); ++i) {
      result.max_rel_err_features = std::max(
          result.max_rel_err_features,
          check_tensor(x[i].data(), static_cast<std::size_t>(x[i].size()), loss.grad[i].data(),
                       [&] { return frozen_loss(x, p, base); }, opt, result.checked));
    }
  }

  // full chain: params/inputs -> global-aware -> normalize -> loss, and a linear probe of the raw outputs
  std::vector<Matrix> d_raw;
  for (std::size_t i = 0; i < features.size(); ++i) d_raw.push_back(normalize_rows_backward(fwd.features[i], loss.grad[i]));
  GlobalAwareGrads chain = global_aware_backward(fwd.cache, p.params, d_raw);
  GlobalAwareGrads linear = global_aware_backward(fwd.cache, p.params, p.probe);

  const std::function<double()> loss_objective = [&] { return frozen_loss(normalized_outputs(p.input, p.params), p, base); };
  const std::function<double()> probe_objective = [&] {
    return linear_probe(global_aware_forward(p.input, p.params, Mode::Train).features, p);
  };

  for (auto* grads : {&chain, &linear}) {
    const auto& objective = grads == &chain ? loss_objective : probe_objective;
    const auto params = trainable_views(p.params);
    const auto analytic = trainable_views(grads->params);
    for (std::size_t t = 0; t < params.size(); ++t) {
      result.max_rel_err_params = std::max(
          result.max_rel_err_params, check_tensor(params[t].data, params[t].size, analytic[t].data, objective, opt, result.checked));
    }
    result.max_rel_err_inputs = std::max(
        result.max_rel_err_inputs, check_tensor(p.input.global.data(), static_cast<std::size_t>(p.input.global.size()),
                                                grads->d_global.data(), objective, opt, result.checked));
    for (std::size_t i = 0; i < p.input.parts.size(); ++i) {
      result.max_rel_err_inputs = std::max(
          result.max_rel_err_inputs,
          check_tensor(p.input.parts[i].data(), static_cast<std::size_t>(p.input.parts[i].size()), grads->d_parts[i].data(),
                       objective, opt, result.checked));
    }
  }
  return result;
}

}  // namespace

GradcheckReport run_gradcheck(const GradcheckOptions& opt) {
  std::mt19937_64 rng(opt.seed);
  GradcheckReport report;
  for (int n = 0; n < opt.num_configs; ++n) {
    int redraws = 0;
    Problem p = draw_problem(rng);
    for (;;) {
      const auto fwd = global_aware_forward(p.input, p.params, Mode::Train);
      std::vector<Matrix> features;
      for (const auto& m : fwd.features) features.push_back(normalize_rows(m));
      if (!near_kink(p, compute_distances(features, p.sources, p.bank), opt.kink_margin)) break;
      ++redraws;
      p = draw_problem(rng);
    }
    GradcheckCase c = check_problem(p, opt);
    c.redraws = redraws;
    report.max_rel_err = std::max({report.max_rel_err, c.max_rel_err_params, c.max_rel_err_inputs, c.max_rel_err_features});
    report.checked += c.checked;
    report.cases.push_back(c);
  }
  return report;
}

}  // namespace upmnet
