#include "cfms/encompass.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "cfms/diagnostics.hpp"
#include "cfms/errors.hpp"
#include "cfms/parallel.hpp"

namespace cfms::encompass {

namespace {

struct RowSampler {
  std::vector<int> free_cols;
  std::vector<int> anchor_positions;  // indices into free_cols
  std::vector<int> fixed_cols;
  std::vector<double> fixed_values;
};

std::vector<RowSampler> make_row_samplers(const PatternMatrix& pattern) {
  std::vector<RowSampler> rows(pattern.p());
  for (int i = 0; i < pattern.p(); ++i) {
    RowSampler& r = rows[i];
    for (int j = 0; j < pattern.m(); ++j) {
      const Cell& c = pattern.at(i, j);
      if (c.kind == CellKind::Free || c.kind == CellKind::PositiveAnchor) {
        if (c.kind == CellKind::PositiveAnchor) {
          r.anchor_positions.push_back(static_cast<int>(r.free_cols.size()));
        }
        r.free_cols.push_back(j);
      } else if (c.kind == CellKind::FixedValue && c.value != 0.0) {
        r.fixed_cols.push_back(j);
        r.fixed_values.push_back(c.value);
      }
    }
  }
  return rows;
}

// Uniform draw of one row on the communality ball section, anchors positive.
void sample_row(const RowSampler& row, const Matrix& phi, Rng& rng, Matrix& lambda, int i) {
  const int q = static_cast<int>(row.free_cols.size());
  for (size_t f = 0; f < row.fixed_cols.size(); ++f) lambda(i, row.fixed_cols[f]) = row.fixed_values[f];
  if (q == 0) return;
  Matrix phi_jj(q, q);
  for (int a = 0; a < q; ++a)
    for (int c = 0; c < q; ++c) phi_jj(a, c) = phi(row.free_cols[a], row.free_cols[c]);
  Vector v = Vector::Zero(q);
  double c0 = 0.0;
  for (size_t f = 0; f < row.fixed_cols.size(); ++f) {
    for (int a = 0; a < q; ++a) v[a] += phi(row.free_cols[a], row.fixed_cols[f]) * row.fixed_values[f];
    for (size_t g = 0; g < row.fixed_cols.size(); ++g) {
      c0 += row.fixed_values[f] * row.fixed_values[g] * phi(row.fixed_cols[f], row.fixed_cols[g]);
    }
  }
  const auto llt = chol_spd(phi_jj, "prior mass row");
  const Vector center = -llt.solve(v);
  const double radius_sq = 1.0 - c0 + center.dot(phi_jj * center);
  if (radius_sq <= 0.0) {
    throw model_error("fixed loading cells leave no room inside the communality ball");
  }
  const Matrix upper = Matrix(llt.matrixL()).transpose();
  for (int attempt = 0; attempt < 100000; ++attempt) {
    const Vector u = std::sqrt(radius_sq) * rng.unit_ball(q);
    const Vector beta = center + upper.triangularView<Eigen::Upper>().solve(u);
    bool anchors_ok = true;
    for (int a : row.anchor_positions)
      if (!(beta[a] > 0.0)) anchors_ok = false;
    if (!anchors_ok) continue;  // uniform on the positive-anchor part of the ball
    for (int a = 0; a < q; ++a) lambda(i, row.free_cols[a]) = beta[a];
    return;
  }
  throw numeric_error("anchor-positive region of the ball has vanishing probability");
}

Matrix phi_for_draw(PhiMode mode, int m, Rng& rng) {
  if (mode == PhiMode::Identity || m < 2) return Matrix::Identity(m, m);
  const Matrix sigma = rng.inv_wishart(m + 2.0, Matrix::Identity(m, m));
  return correlation_from_covariance(sigma);
}

double indicator_se_binomial(double p, double n_eff) {
  if (n_eff <= 0.0) return 0.0;
  return std::sqrt(std::max(p * (1.0 - p), 0.0) / n_eff);
}

// Evaluates many systems against one shared prior stream; index 0 counts all
// draws, so proportions stay exactly comparable (and nested systems monotone).
std::vector<MassEstimate> prior_masses_shared(const std::vector<const constraints::BoundSystem*>& bounds,
                                              const PatternMatrix& pattern, PhiMode phi_mode,
                                              long n_draws, uint64_t seed) {
  for (const auto* b : bounds) {
    if (b->p != pattern.p() || b->m != pattern.m()) {
      throw model_error("constraint system '" + b->name + "' does not match the pattern dimensions");
    }
  }
  const auto rows = make_row_samplers(pattern);
  const long block_size = 4096;
  const long n_blocks = (n_draws + block_size - 1) / block_size;
  std::vector<std::vector<long>> block_hits(static_cast<size_t>(n_blocks),
                                            std::vector<long>(bounds.size(), 0));
  std::vector<long> block_draws(static_cast<size_t>(n_blocks), 0);
  parallel_for(static_cast<int>(n_blocks), [&](int blk) {
    Rng rng(mix_seed(seed, 0xB10C + static_cast<uint64_t>(blk)));
    const long count = std::min<long>(block_size, n_draws - static_cast<long>(blk) * block_size);
    Matrix lambda = Matrix::Zero(pattern.p(), pattern.m());
    for (long d = 0; d < count; ++d) {
      const Matrix phi = phi_for_draw(phi_mode, pattern.m(), rng);
      for (int i = 0; i < pattern.p(); ++i) sample_row(rows[i], phi, rng, lambda, i);
      for (size_t s = 0; s < bounds.size(); ++s) {
        if (constraints::evaluate(*bounds[s], lambda)) ++block_hits[blk][s];
      }
    }
    block_draws[blk] = count;
  });
  std::vector<MassEstimate> out(bounds.size());
  for (size_t s = 0; s < bounds.size(); ++s) {
    long hits = 0, total = 0;
    for (long blk = 0; blk < n_blocks; ++blk) {
      hits += block_hits[blk][s];
      total += block_draws[blk];
    }
    MassEstimate& m = out[s];
    m.n_draws = total;
    m.proportion = total ? static_cast<double>(hits) / total : 0.0;
    m.standard_error = indicator_se_binomial(m.proportion, static_cast<double>(total));
    if (hits == 0 && !bounds[s]->mass_relations.empty()) {
      m.below_resolution = true;
      m.warnings.push_back("prior mass below resolution; increase n_draws");
    }
  }
  return out;
}

}  // namespace

MassEstimate prior_mass(const constraints::BoundSystem& bound, const PatternMatrix& pattern,
                        PhiMode phi_mode, long n_draws, uint64_t seed) {
  MassEstimate out;
  if (bound.mass_relations.empty()) {
    // empty conjunction: exactly 1 with no sampling
    out.proportion = 1.0;
    out.n_draws = n_draws;
    return out;
  }
  if (n_draws < 10000) {
    out.warnings.push_back("fewer than 10^4 prior draws; the mass estimate may be coarse");
  }
  std::vector<const constraints::BoundSystem*> one{&bound};
  MassEstimate est = prior_masses_shared(one, pattern, phi_mode, n_draws, seed)[0];
  est.warnings.insert(est.warnings.end(), out.warnings.begin(), out.warnings.end());
  return est;
}

MassEstimate posterior_mass_draws(const constraints::BoundSystem& bound,
                                  const std::vector<Matrix>& loadings) {
  if (loadings.empty()) throw model_error("posterior mass needs at least one draw");
  if (loadings[0].rows() != bound.p || loadings[0].cols() != bound.m) {
    throw model_error("draws do not match the constraint system dimensions");
  }
  MassEstimate out;
  out.n_draws = static_cast<long>(loadings.size());
  if (bound.mass_relations.empty()) {
    out.proportion = 1.0;
    out.ess = static_cast<double>(out.n_draws);
    return out;
  }
  std::vector<double> indicator(loadings.size());
  long hits = 0;
  for (size_t g = 0; g < loadings.size(); ++g) {
    const bool ok = constraints::evaluate(bound, loadings[g]);
    indicator[g] = ok ? 1.0 : 0.0;
    if (ok) ++hits;
  }
  out.proportion = static_cast<double>(hits) / static_cast<double>(loadings.size());
  if (hits == 0 || hits == static_cast<long>(loadings.size())) {
    out.ess = static_cast<double>(loadings.size());
    out.standard_error = 0.0;
    if (hits == 0) out.warnings.push_back("no posterior draws satisfy the system");
    return out;
  }
  const double ess = sampler::ess_of_series(indicator);
  out.ess = std::isfinite(ess) ? ess : static_cast<double>(loadings.size());
  out.standard_error = indicator_se_binomial(out.proportion, out.ess);
  return out;
}

MassEstimate posterior_mass(const constraints::BoundSystem& bound, const sampler::Chain& chain) {
  if (chain.prior.kind != sampler::PriorKind::EncompassingBall) {
    throw model_error("posterior mass requires a chain run under the encompassing ball prior");
  }
  if (chain.p() != bound.p || chain.m() != bound.m) {
    throw model_error("chain and constraint system dimensions do not match");
  }
  std::vector<Matrix> loadings;
  loadings.reserve(chain.draws.size());
  for (const auto& d : chain.draws) loadings.push_back(d.loadings);
  MassEstimate est = posterior_mass_draws(bound, loadings);
  if (chain.draws.size() < 1000) {
    est.warnings.push_back("fewer than 1000 retained draws behind the posterior mass");
  }
  return est;
}

namespace {

Type2Report build_report(const std::vector<constraints::BoundSystem>& bounds,
                         const std::vector<MassEstimate>& priors,
                         const std::vector<MassEstimate>& posteriors, const Type2Options& options) {
  Type2Report report;
  report.prior_draws = options.prior_draws;
  report.seed = options.seed;
  report.phi_mode = options.phi_mode == PhiMode::Identity ? "identity" : "from_prior";
  const size_t k = bounds.size();
  report.models.resize(k);
  for (size_t s = 0; s < k; ++s) {
    ModelRow& row = report.models[s];
    row.name = bounds[s].name;
    row.prior = priors[s];
    row.posterior = posteriors[s];
    if (row.prior.proportion <= 0.0) {
      row.excluded = true;
      row.flag = "prior mass below resolution; excluded from probabilities";
      row.log_bf_vs_unconstrained = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    const double bf = row.posterior.proportion / row.prior.proportion;
    row.log_bf_vs_unconstrained = std::log(bf);  // -inf when the posterior mass is zero
    const double rel_post = row.posterior.proportion > 0.0
                                ? row.posterior.standard_error / row.posterior.proportion
                                : 0.0;
    const double rel_prior = row.prior.standard_error / row.prior.proportion;
    row.se_log_bf = std::sqrt(rel_post * rel_post + rel_prior * rel_prior);
    if (row.posterior.proportion <= 0.0) {
      row.flag = "no posterior mass in the constrained region";
    }
  }

  report.pairwise_log_bf = Matrix::Zero(static_cast<int>(k), static_cast<int>(k));
  for (size_t a = 0; a < k; ++a) {
    for (size_t b = 0; b < k; ++b) {
      if (report.models[a].excluded || report.models[b].excluded) {
        report.pairwise_log_bf(static_cast<int>(a), static_cast<int>(b)) =
            std::numeric_limits<double>::quiet_NaN();
      } else {
        report.pairwise_log_bf(static_cast<int>(a), static_cast<int>(b)) =
            report.models[a].log_bf_vs_unconstrained - report.models[b].log_bf_vs_unconstrained;
      }
    }
  }
  // exact zero on the diagonal regardless of +-inf rows
  for (size_t a = 0; a < k; ++a) report.pairwise_log_bf(static_cast<int>(a), static_cast<int>(a)) = 0.0;

  // posterior model probabilities under equal prior odds, unconstrained
  // included with BF identically 1
  double total = 1.0;
  for (const ModelRow& row : report.models) {
    if (!row.excluded) total += row.posterior.proportion / row.prior.proportion;
  }
  report.posterior_probabilities.resize(k, 0.0);
  for (size_t s = 0; s < k; ++s) {
    if (!report.models[s].excluded) {
      report.posterior_probabilities[s] =
          (report.models[s].posterior.proportion / report.models[s].prior.proportion) / total;
    }
  }
  report.unconstrained_probability = 1.0 / total;

  // nested systems must be exactly monotone under the shared streams
  for (size_t a = 0; a < k; ++a) {
    std::set<std::string> ra;
    for (const auto& rel : bounds[a].mass_relations) ra.insert(constraints::print(rel));
    for (size_t b = 0; b < k; ++b) {
      if (a == b) continue;
      std::set<std::string> rb;
      for (const auto& rel : bounds[b].mass_relations) rb.insert(constraints::print(rel));
      if (std::includes(rb.begin(), rb.end(), ra.begin(), ra.end()) &&
          (posteriors[b].proportion > posteriors[a].proportion ||
           priors[b].proportion > priors[a].proportion)) {
        report.warnings.push_back("internal monotonicity violation between '" + bounds[a].name +
                                  "' and '" + bounds[b].name + "'");
      }
    }
  }
  return report;
}

}  // namespace

Type2Report type2_bayes_factors(const std::vector<constraints::BoundSystem>& bounds,
                                const sampler::Chain& chain, const Type2Options& options) {
  std::vector<const constraints::BoundSystem*> ptrs;
  for (const auto& b : bounds) ptrs.push_back(&b);
  std::vector<MassEstimate> priors =
      ptrs.empty() ? std::vector<MassEstimate>{}
                   : prior_masses_shared(ptrs, chain.pattern, options.phi_mode, options.prior_draws,
                                         mix_seed(options.seed, 0x9a55));
  for (size_t s = 0; s < bounds.size(); ++s) {
    if (bounds[s].mass_relations.empty()) {
      priors[s].proportion = 1.0;
      priors[s].standard_error = 0.0;
      priors[s].below_resolution = false;
    }
  }
  std::vector<MassEstimate> posteriors;
  posteriors.reserve(bounds.size());
  for (const auto& b : bounds) posteriors.push_back(posterior_mass(b, chain));
  return build_report(bounds, priors, posteriors, options);
}

Type2Report type2_bayes_factors_draws(const std::vector<constraints::BoundSystem>& bounds,
                                      const std::vector<Matrix>& loadings,
                                      const PatternMatrix& pattern, const Type2Options& options) {
  std::vector<const constraints::BoundSystem*> ptrs;
  for (const auto& b : bounds) ptrs.push_back(&b);
  std::vector<MassEstimate> priors =
      ptrs.empty() ? std::vector<MassEstimate>{}
                   : prior_masses_shared(ptrs, pattern, options.phi_mode, options.prior_draws,
                                         mix_seed(options.seed, 0x9a55));
  for (size_t s = 0; s < bounds.size(); ++s) {
    if (bounds[s].mass_relations.empty()) {
      priors[s].proportion = 1.0;
      priors[s].standard_error = 0.0;
      priors[s].below_resolution = false;
    }
  }
  std::vector<MassEstimate> posteriors;
  posteriors.reserve(bounds.size());
  for (const auto& b : bounds) posteriors.push_back(posterior_mass_draws(b, loadings));
  return build_report(bounds, priors, posteriors, options);
}

}  // namespace cfms::encompass
