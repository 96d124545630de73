#include "cfms/marglik.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/SVD>

#include "cfms/densities.hpp"
#include "cfms/errors.hpp"
#include "cfms/kernels.hpp"
#include "cfms/parallel.hpp"

namespace cfms::marglik {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr uint64_t kReducedPsiSalt = 0x7ed0ced5a17ull;
constexpr uint64_t kReducedPhiSalt = 0x7ed0ced5a18ull;
constexpr uint64_t kSubsampleSalt = 0x5ab5a3e1eull;

struct LogMeanExp {
  double value = kNegInf;
  double se = 0.0;  // on the log scale, by batch means
};

// log of the average of exp(vals), with a batch-means standard error that
// absorbs the serial correlation of chain-derived sequences.
LogMeanExp log_mean_exp_se(const std::vector<double>& vals, int n_batches = 20) {
  LogMeanExp out;
  if (vals.empty()) return out;
  const double m = *std::max_element(vals.begin(), vals.end());
  if (!std::isfinite(m)) {
    out.value = m;
    return out;
  }
  double total = 0.0;
  for (double v : vals) total += std::exp(v - m);
  const double mean = total / static_cast<double>(vals.size());
  out.value = m + std::log(mean);

  const int nb = std::min<int>(n_batches, static_cast<int>(vals.size()));
  if (nb >= 2) {
    std::vector<double> batch_means;
    const size_t len = vals.size() / nb;
    for (int b = 0; b < nb; ++b) {
      double s = 0.0;
      for (size_t i = b * len; i < (b + 1) * len; ++i) s += std::exp(vals[i] - m);
      batch_means.push_back(s / static_cast<double>(len));
    }
    double bm = std::accumulate(batch_means.begin(), batch_means.end(), 0.0) / nb;
    double var = 0.0;
    for (double v : batch_means) var += (v - bm) * (v - bm);
    var /= (nb - 1);
    const double se_linear = std::sqrt(var / nb);
    if (mean > 0.0) out.se = se_linear / mean;
  }
  return out;
}

// log((1/L) sum exp(x_l)) over finite entries plus a delta-method variance
// combining the per-entry standard errors with the between-entry spread.
LogMeanExp log_mean_exp_propagated(const std::vector<double>& xs, const std::vector<double>& ses) {
  LogMeanExp out;
  if (xs.empty()) return out;
  const double m = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(m)) {
    out.value = m;
    return out;
  }
  const size_t L = xs.size();
  double total = 0.0;
  for (double x : xs) total += std::exp(x - m);
  const double mean = total / static_cast<double>(L);
  out.value = m + std::log(mean);
  double var_between = 0.0;
  double var_within = 0.0;
  for (size_t l = 0; l < L; ++l) {
    const double w = std::exp(xs[l] - m);
    var_between += (w - mean) * (w - mean);
    var_within += w * w * ses[l] * ses[l];
  }
  if (L > 1) var_between /= static_cast<double>(L - 1) * static_cast<double>(L);
  else var_between = 0.0;
  var_within /= static_cast<double>(L) * static_cast<double>(L);
  out.se = std::sqrt(var_between + var_within) / mean;
  return out;
}

struct RowFreeCells {
  std::vector<int> cols;
};

std::vector<RowFreeCells> free_cells(const PatternMatrix& pattern) {
  std::vector<RowFreeCells> rows(pattern.p());
  for (int i = 0; i < pattern.p(); ++i)
    for (int j = 0; j < pattern.m(); ++j)
      if (pattern.is_free(i, j)) rows[i].cols.push_back(j);
  return rows;
}

}  // namespace

std::vector<sampler::SignedPerm> pattern_preserving_group(const PatternMatrix& pattern) {
  const int m = pattern.m();
  std::vector<sampler::SignedPerm> group;
  if (m == 0) {
    return group;
  }
  if (m > 8) throw model_error("symmetry enumeration not supported beyond m = 8");
  std::vector<int> perm(m);
  std::iota(perm.begin(), perm.end(), 0);
  do {
    for (uint32_t mask = 0; mask < (1u << m); ++mask) {
      sampler::SignedPerm q;
      q.perm = perm;
      q.sign.resize(m);
      for (int j = 0; j < m; ++j) q.sign[j] = (mask >> j) & 1u ? -1.0 : 1.0;
      // image column j is sign_j * source column perm[j]; the pattern is
      // preserved when cell kinds match and fixed values map exactly
      bool ok = true;
      for (int i = 0; i < pattern.p() && ok; ++i) {
        for (int j = 0; j < m && ok; ++j) {
          const Cell& target = pattern.at(i, j);
          const Cell& source = pattern.at(i, q.perm[j]);
          const bool target_free = target.kind == CellKind::Free || target.kind == CellKind::PositiveAnchor;
          const bool source_free = source.kind == CellKind::Free || source.kind == CellKind::PositiveAnchor;
          if (target_free != source_free) {
            ok = false;
          } else if (!target_free) {
            const double tv = target.kind == CellKind::FixedZero ? 0.0 : target.value;
            const double sv = source.kind == CellKind::FixedZero ? 0.0 : source.value;
            if (tv != q.sign[j] * sv) ok = false;
          }
        }
      }
      if (ok) group.push_back(std::move(q));
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return group;
}

namespace {

// Log density of the loading block at one image, given scores and psi of one
// draw: a product of per-row normal conditionals over the free cells.
struct RowConditionalCache {
  Matrix A;                      // X'X over the row's free columns
  Eigen::LLT<Matrix> llt;        // of A (improper) or the posterior precision (conjugate)
  Vector mean;
  double half_logdet_cov = 0.0;  // 0.5 log|Sigma|
  double psi = 1.0;
  bool conjugate = false;
};

double log_row_density(const RowConditionalCache& cache, const Vector& beta) {
  const int q = static_cast<int>(beta.size());
  if (q == 0) return 0.0;
  if (cache.conjugate) {
    // precision P: quad = (b - mu)' P (b - mu) = |L' (b - mu)|^2
    const Vector u = Matrix(cache.llt.matrixL()).transpose().triangularView<Eigen::Upper>() *
                     (beta - cache.mean);
    return -0.5 * q * std::log(2.0 * M_PI) - cache.half_logdet_cov - 0.5 * u.squaredNorm();
  }
  // covariance psi * A^{-1}: quad = (b - mu)' A (b - mu) / psi
  const Vector d = beta - cache.mean;
  const double quad = d.dot(cache.A * d) / cache.psi;
  return -0.5 * q * std::log(2.0 * M_PI) - cache.half_logdet_cov - 0.5 * quad;
}

struct CandidateInternals {
  const Dataset& data;
  const PatternMatrix& pattern;
  const sampler::PriorSpec& prior;
  Matrix YtY;
  std::vector<RowFreeCells> rows;
  bool oblique = false;
};

// Loading-block ordinate: averages the symmetrized full conditional over the
// main run, normalized by the group order so the estimate targets the
// unrestricted posterior density at Lambda*.
struct LoadingOrdinate {
  LogMeanExp exact;        // log pi_hat(Lambda* | y), ExactSum
  LogMeanExp single_mode;  // identity image only, same -log|G| normalization
};

LoadingOrdinate loading_ordinate(const CandidateInternals& ctx, const sampler::Chain& chain,
                                 const Matrix& lambda_star,
                                 const std::vector<sampler::SignedPerm>& group, bool exact_sum) {
  const int p = ctx.pattern.p();
  const int n = ctx.data.n();
  const double log_group = std::log(static_cast<double>(group.size()));

  // images of Lambda* and their per-row free-cell vectors, draw-independent
  std::vector<std::vector<Vector>> image_betas;
  image_betas.reserve(group.size());
  size_t identity_index = 0;
  for (size_t gi = 0; gi < group.size(); ++gi) {
    const auto& q = group[gi];
    bool is_identity = true;
    for (int j = 0; j < ctx.pattern.m(); ++j) {
      if (q.perm[j] != j || q.sign[j] != 1.0) is_identity = false;
    }
    if (is_identity) identity_index = gi;
    const Matrix img = sampler::apply_signed_perm(lambda_star, q);
    std::vector<Vector> betas(p);
    for (int i = 0; i < p; ++i) {
      const auto& cols = ctx.rows[i].cols;
      Vector b(cols.size());
      for (size_t a = 0; a < cols.size(); ++a) b[static_cast<int>(a)] = img(i, cols[a]);
      betas[i] = std::move(b);
    }
    image_betas.push_back(std::move(betas));
  }

  const size_t G = chain.draws.size();
  if (chain.score_draws.size() != G) {
    throw model_error("loading ordinate needs retained factor scores on the main run");
  }
  std::vector<double> exact_vals(G), single_vals(G);
  for (size_t g = 0; g < G; ++g) {
    const Matrix& F = chain.score_draws[g];
    const Vector& psi = chain.draws[g].psi;
    // per-row conditionals for this draw
    std::vector<RowConditionalCache> caches(p);
    for (int i = 0; i < p; ++i) {
      const auto& cols = ctx.rows[i].cols;
      const int q = static_cast<int>(cols.size());
      if (q == 0) continue;
      RowConditionalCache& cache = caches[i];
      cache.A.resize(q, q);
      Vector b(q);
      Vector d = ctx.data.values.col(i);
      for (int j = 0; j < ctx.pattern.m(); ++j) {
        const Cell& cell = ctx.pattern.at(i, j);
        if (cell.kind == CellKind::FixedValue && cell.value != 0.0) {
          kernels::axpy(-cell.value, F.col(j).data(), d.data(), static_cast<size_t>(n));
        }
      }
      for (int a = 0; a < q; ++a) {
        for (int c = 0; c <= a; ++c) {
          cache.A(a, c) = cache.A(c, a) = kernels::dot(F.col(cols[a]).data(), F.col(cols[c]).data(), n);
        }
        b[a] = kernels::dot(F.col(cols[a]).data(), d.data(), n);
      }
      cache.psi = psi[i];
      if (ctx.prior.kind == sampler::PriorKind::ConjugateVague) {
        cache.conjugate = true;
        Matrix precision = cache.A / psi[i];
        precision.diagonal().array() += 1.0 / ctx.prior.loading_prior_variance;
        cache.llt.compute(precision);
        if (cache.llt.info() != Eigen::Success) {
          throw numeric_error("ordinate degenerate - run regularity assessment");
        }
        cache.mean = cache.llt.solve(b / psi[i]);
        cache.half_logdet_cov = -0.5 * logdet_from_llt(cache.llt);
      } else {
        cache.llt.compute(cache.A);
        if (cache.llt.info() != Eigen::Success) {
          throw numeric_error("ordinate degenerate - run regularity assessment");
        }
        cache.mean = cache.llt.solve(b);
        cache.half_logdet_cov = 0.5 * (q * std::log(psi[i]) - logdet_from_llt(cache.llt));
      }
    }
    auto image_logdens = [&](size_t gi) {
      double s = 0.0;
      for (int i = 0; i < p; ++i) {
        if (ctx.rows[i].cols.empty()) continue;
        s += log_row_density(caches[i], image_betas[gi][i]);
      }
      return s;
    };
    const double identity_val = image_logdens(identity_index);
    single_vals[g] = identity_val;
    if (exact_sum) {
      double max_val = identity_val;
      std::vector<double> vals(group.size());
      vals[identity_index] = identity_val;
      for (size_t gi = 0; gi < group.size(); ++gi) {
        if (gi == identity_index) continue;
        vals[gi] = image_logdens(gi);
        max_val = std::max(max_val, vals[gi]);
      }
      double total = 0.0;
      for (double v : vals) total += std::exp(v - max_val);
      exact_vals[g] = max_val + std::log(total);
    } else {
      exact_vals[g] = identity_val;
    }
  }

  LoadingOrdinate out;
  out.exact = log_mean_exp_se(exact_vals);
  out.exact.value -= log_group;
  out.single_mode = log_mean_exp_se(single_vals);
  out.single_mode.value -= log_group;
  return out;
}

// psi-block ordinate from a reduced run with the loadings clamped at
// Lambda*: average of the exact inverse-gamma full conditional at Psi*.
LogMeanExp psi_ordinate(const CandidateInternals& ctx, const sampler::Chain& reduced,
                        const Matrix& lambda_star, const Vector& psi_star) {
  const int p = ctx.pattern.p();
  const int n = ctx.data.n();
  const double shape = 0.5 * n + ctx.prior.psi_prior_shape();
  std::vector<double> vals(reduced.draws.size());
  for (size_t g = 0; g < reduced.draws.size(); ++g) {
    const Matrix& F = reduced.score_draws[g];
    double s = 0.0;
    for (int i = 0; i < p; ++i) {
      Vector resid = ctx.data.values.col(i);
      for (int j = 0; j < ctx.pattern.m(); ++j) {
        if (lambda_star(i, j) != 0.0) {
          kernels::axpy(-lambda_star(i, j), F.col(j).data(), resid.data(), static_cast<size_t>(n));
        }
      }
      const double rss = kernels::ssq(resid.data(), static_cast<size_t>(n));
      s += log_invgamma_pdf(psi_star[i], shape, 0.5 * rss + ctx.prior.psi_prior_rate());
    }
    vals[g] = s;
  }
  return log_mean_exp_se(vals);
}

// phi-block ordinate (oblique, expanded covariance): average of the
// inverse-Wishart full conditional at Sigma_f*.
LogMeanExp phi_ordinate(const CandidateInternals& ctx, const sampler::Chain& reduced,
                        const Matrix& sigma_star) {
  const int n = ctx.data.n();
  const int m = ctx.pattern.m();
  std::vector<double> vals(reduced.draws.size());
  for (size_t g = 0; g < reduced.draws.size(); ++g) {
    const Matrix& F = reduced.score_draws[g];
    const Matrix scale = Matrix::Identity(m, m) + F.transpose() * F;
    vals[g] = log_invwishart_pdf(sigma_star, m + 2.0 + n, scale);
  }
  return log_mean_exp_se(vals);
}

double log_prior_at(const CandidateInternals& ctx, const Matrix& lambda, const Vector& psi,
                    const Matrix& phi) {
  double lp = 0.0;
  switch (ctx.prior.kind) {
    case sampler::PriorKind::ImproperDefault:
      lp = -psi.array().log().sum();
      break;
    case sampler::PriorKind::ConjugateVague: {
      for (int i = 0; i < ctx.pattern.p(); ++i)
        for (int j : ctx.rows[i].cols)
          lp += log_normal_pdf(lambda(i, j), 0.0, ctx.prior.loading_prior_variance);
      for (int i = 0; i < psi.size(); ++i)
        lp += log_invgamma_pdf(psi[i], ctx.prior.ig_shape, ctx.prior.ig_rate);
      break;
    }
    case sampler::PriorKind::EncompassingBall:
      throw model_error("candidate estimator is not defined for the encompassing ball prior");
  }
  if (ctx.oblique) {
    lp += log_invwishart_pdf(phi, phi.rows() + 2.0, Matrix::Identity(phi.rows(), phi.cols()));
  }
  return lp;
}

MarglikEstimate candidate_from_chain(const Dataset& data, const PatternMatrix& pattern,
                                     const sampler::PriorSpec& prior,
                                     const sampler::ChainConfig& config,
                                     const sampler::Chain& main_chain,
                                     const CandidateOptions& options) {
  const int m = pattern.m();
  CandidateInternals ctx{data, pattern, prior, data.values.transpose() * data.values,
                         free_cells(pattern),
                         prior.phi_prior == sampler::PhiPrior::CorrelationPrior && m >= 2};

  MarglikEstimate est;
  if (config.retained_count() < 1000) {
    est.warnings.push_back("fewer than 1000 retained draws; ordinate averages may be unstable");
  }

  // theta*: the highest-kernel retained draw
  size_t star = 0;
  for (size_t g = 1; g < main_chain.draws.size(); ++g) {
    if (main_chain.draws[g].log_kernel > main_chain.draws[star].log_kernel) star = g;
  }
  const Matrix lambda_star = main_chain.draws[star].loadings;
  const Vector psi_star = main_chain.draws[star].psi;
  const Matrix phi_star = main_chain.draws[star].phi;

  // symmetrization mode
  const auto group = pattern_preserving_group(pattern);
  const int group_size = std::max<size_t>(group.size(), 1);
  bool exact = m <= 4;
  if (options.force_symmetrization) {
    exact = *options.force_symmetrization == Symmetrization::ExactSum;
  }
  est.symmetrization = exact ? Symmetrization::ExactSum : Symmetrization::AdditiveApprox;
  est.symmetry_group_size = group_size;

  double se_sq = 0.0;
  const bool has_free = pattern.free_cell_count() > 0;
  if (m > 0 && has_free) {
    const LoadingOrdinate lo = loading_ordinate(ctx, main_chain, lambda_star, group, exact);
    est.ordinates.loading = lo.exact.value;
    est.ordinates.loading_single_mode = lo.single_mode.value;
    se_sq += lo.exact.se * lo.exact.se;
  }

  // reduced run, loadings clamped at Lambda*
  PatternMatrix reduced_pattern(pattern.p(), m);
  for (int i = 0; i < pattern.p(); ++i) {
    for (int j = 0; j < m; ++j) {
      reduced_pattern.at(i, j).kind = CellKind::FixedValue;
      reduced_pattern.at(i, j).value = lambda_star(i, j);
    }
  }
  sampler::ChainConfig reduced_config = config;
  reduced_config.seed = mix_seed(config.seed, kReducedPsiSalt);
  reduced_config.retain_scores = true;
  sampler::SamplerOptions reduced_options;
  reduced_options.expanded_covariance = ctx.oblique;
  const sampler::Chain reduced =
      m > 0 ? sampler::run_chain(data, reduced_pattern, prior, reduced_config, 0, reduced_options)
            : sampler::Chain{};
  {
    LogMeanExp po;
    if (m > 0) {
      po = psi_ordinate(ctx, reduced, lambda_star, psi_star);
    } else {
      // no latent scores: the psi conditional is the exact posterior
      double s = 0.0;
      const int n = data.n();
      for (int i = 0; i < data.p(); ++i) {
        const double rss = ctx.YtY(i, i);
        s += log_invgamma_pdf(psi_star[i], 0.5 * n + prior.psi_prior_shape(),
                              0.5 * rss + prior.psi_prior_rate());
      }
      po.value = s;
      po.se = 0.0;
    }
    est.ordinates.psi = po.value;
    se_sq += po.se * po.se;
  }

  if (ctx.oblique) {
    sampler::ChainConfig phi_config = config;
    phi_config.seed = mix_seed(config.seed, kReducedPhiSalt);
    phi_config.retain_scores = true;
    sampler::SamplerOptions phi_options;
    phi_options.expanded_covariance = true;
    phi_options.fixed_psi = psi_star;
    const sampler::Chain reduced_phi =
        sampler::run_chain(data, reduced_pattern, prior, phi_config, 0, phi_options);
    const LogMeanExp fo = phi_ordinate(ctx, reduced_phi, phi_star);
    est.ordinates.phi = fo.value;
    se_sq += fo.se * fo.se;
  }

  FactorModel star_model;
  star_model.loadings = lambda_star;
  star_model.unique_variances = psi_star;
  star_model.factor_correlations = phi_star;
  est.log_lik_at_star = log_likelihood_scatter(
      ctx.YtY, data.n(),
      symmetrize(lambda_star * phi_star * lambda_star.transpose() + Matrix(psi_star.asDiagonal())));
  est.log_prior_at_star = log_prior_at(ctx, lambda_star, psi_star, phi_star);

  const double ordinate_total = est.ordinates.loading + est.ordinates.psi + est.ordinates.phi;
  if (!std::isfinite(ordinate_total)) {
    throw numeric_error("ordinate degenerate - run regularity assessment");
  }
  est.log_marginal = est.log_lik_at_star + est.log_prior_at_star - ordinate_total;
  est.mc_standard_error = std::sqrt(se_sq);
  if (ctx.oblique) {
    // report theta* in the identified correlation metric
    const Vector d_sqrt = phi_star.diagonal().array().sqrt();
    star_model.loadings = lambda_star * d_sqrt.asDiagonal();
    star_model.factor_correlations = correlation_from_covariance(phi_star);
  }
  est.theta_star = std::move(star_model);
  return est;
}

}  // namespace

MarglikEstimate candidate_log_marginal(const Dataset& data, const PatternMatrix& pattern,
                                       const sampler::PriorSpec& prior,
                                       const sampler::ChainConfig& config,
                                       const CandidateOptions& options) {
  if (prior.kind == sampler::PriorKind::EncompassingBall) {
    throw model_error("candidate estimator is not defined for the encompassing ball prior");
  }
  if (prior.kind == sampler::PriorKind::ImproperDefault && !options.allow_improper) {
    throw model_error(
        "candidate estimator under the improper default prior is only meaningful inside the "
        "intrinsic correction; use intrinsic_type1_bf or pass a proper prior");
  }
  sampler::ChainConfig main_config = config;
  main_config.retain_scores = true;
  sampler::SamplerOptions sampler_options;
  sampler_options.expanded_covariance =
      prior.phi_prior == sampler::PhiPrior::CorrelationPrior && pattern.m() >= 2;
  const sampler::Chain main_chain =
      sampler::run_chain(data, pattern, prior, main_config, 0, sampler_options);
  return candidate_from_chain(data, pattern, prior, main_config, main_chain, options);
}

RegularityReport assess_regularity(const std::vector<sampler::Chain>& chains,
                                   const RegularityThresholds& thresholds) {
  if (chains.size() < 2) throw model_error("regularity assessment needs at least 2 dispersed chains");
  RegularityReport report;
  report.thresholds = thresholds;
  const int m = chains.front().m();

  const auto aligned = sampler::align_chains_to_first(chains);
  if (m == 0) {
    report.singular_value_ratio = 1.0;
    report.near_zero_mass = Vector(0);
    const auto diag = sampler::compute_diagnostics(aligned, thresholds.near_zero_loading);
    report.max_pooled_rhat = diag.max_rhat;
    report.rhat_trip = std::isfinite(diag.max_rhat) && diag.max_rhat > thresholds.max_rhat;
    report.multimodality_flag = report.rhat_trip;
    return report;
  }

  Matrix pooled_mean = Matrix::Zero(chains.front().p(), m);
  long total = 0;
  for (const auto& c : aligned) {
    for (const auto& d : c.draws) {
      pooled_mean += d.loadings;
      ++total;
    }
  }
  pooled_mean /= std::max<long>(total, 1);

  Eigen::JacobiSVD<Matrix> svd(pooled_mean);
  const double s_max = svd.singularValues().maxCoeff();
  const double s_min = svd.singularValues().minCoeff();
  report.singular_value_ratio = s_max > 0.0 ? s_min / s_max : 0.0;

  const auto diag = sampler::compute_diagnostics(aligned, thresholds.near_zero_loading);
  report.near_zero_mass = diag.near_zero_mass;
  report.max_pooled_rhat = diag.max_rhat;

  report.sv_ratio_trip = report.singular_value_ratio < thresholds.singular_value_ratio;
  report.near_zero_trip = (report.near_zero_mass.array() > thresholds.near_zero_mass).any();
  report.rhat_trip = std::isfinite(diag.max_rhat) && diag.max_rhat > thresholds.max_rhat;
  report.multimodality_flag = report.sv_ratio_trip || report.near_zero_trip || report.rhat_trip;
  return report;
}

Dataset subset_rows(const Dataset& data, const std::vector<int>& rows) {
  Dataset out;
  out.item_names = data.item_names;
  out.standardized = false;  // subsets are not re-standardized
  out.values.resize(static_cast<int>(rows.size()), data.p());
  for (size_t r = 0; r < rows.size(); ++r) out.values.row(static_cast<int>(r)) = data.values.row(rows[r]);
  return out;
}

namespace {

uint64_t content_seed(uint64_t base, const PatternMatrix& pattern, const std::string& tag) {
  return mix_seed(base, hash_bytes(pattern.fingerprint() + ":" + tag));
}

struct TrainingRuns {
  std::vector<double> log_marginal;  // NaN when non-finite
  std::vector<double> se;
  int n_nonfinite = 0;
};

TrainingRuns training_marginals(const Dataset& data, const PatternMatrix& pattern,
                                const sampler::PriorSpec& prior, const sampler::ChainConfig& base,
                                const IntrinsicOptions& options,
                                const std::vector<std::vector<int>>& subsamples) {
  const int L = static_cast<int>(subsamples.size());
  TrainingRuns out;
  out.log_marginal.assign(L, std::numeric_limits<double>::quiet_NaN());
  out.se.assign(L, 0.0);
  CandidateOptions copts;
  copts.allow_improper = true;
  parallel_for(L, [&](int l) {
    const Dataset sub = subset_rows(data, subsamples[l]);
    sampler::ChainConfig cfg = base;
    cfg.n_iter = options.train_n_iter;
    cfg.burn_in = options.train_burn_in;
    cfg.thin = 1;
    cfg.n_chains = 1;
    cfg.seed = content_seed(base.seed, pattern, "train:" + std::to_string(l));
    try {
      const MarglikEstimate est = candidate_log_marginal(sub, pattern, prior, cfg, copts);
      if (std::isfinite(est.log_marginal)) {
        out.log_marginal[l] = est.log_marginal;
        out.se[l] = est.mc_standard_error;
      }
    } catch (const Error&) {
      // non-finite / degenerate training marginal: counted below
    }
  });
  for (int l = 0; l < L; ++l)
    if (!std::isfinite(out.log_marginal[l])) ++out.n_nonfinite;
  return out;
}

std::vector<std::vector<int>> draw_subsamples(uint64_t seed, int n, int n_train, int L) {
  std::vector<std::vector<int>> subsamples(L);
  for (int l = 0; l < L; ++l) {
    Rng rng(mix_seed(seed, kSubsampleSalt + static_cast<uint64_t>(l)));
    subsamples[l] = rng.sample_without_replacement(n, n_train);
  }
  return subsamples;
}

}  // namespace

IntrinsicResult intrinsic_type1_bf(const Dataset& data, const PatternMatrix& pattern1,
                                   const PatternMatrix& pattern2,
                                   const sampler::ChainConfig& config,
                                   const IntrinsicOptions& options) {
  sampler::PriorSpec prior;  // improper default, phi = I
  const int m_max = std::max(pattern1.m(), pattern2.m());
  int n_train = options.n_train > 0 ? options.n_train : m_max + 3;
  if (n_train < 2) n_train = 2;
  if (n_train >= data.n()) throw model_error("training sample size must be below n");

  CandidateOptions copts;
  copts.allow_improper = true;

  IntrinsicResult out;
  {
    sampler::ChainConfig cfg = config;
    cfg.seed = content_seed(config.seed, pattern1, "full");
    out.full_1 = candidate_log_marginal(data, pattern1, prior, cfg, copts);
  }
  {
    sampler::ChainConfig cfg = config;
    cfg.seed = content_seed(config.seed, pattern2, "full");
    out.full_2 = candidate_log_marginal(data, pattern2, prior, cfg, copts);
  }

  const auto subsamples = draw_subsamples(config.seed, data.n(), n_train, options.n_subsamples);
  const TrainingRuns t1 = training_marginals(data, pattern1, prior, config, options, subsamples);
  const TrainingRuns t2 = training_marginals(data, pattern2, prior, config, options, subsamples);

  std::vector<double> xs, ses;
  for (int l = 0; l < static_cast<int>(subsamples.size()); ++l) {
    if (std::isfinite(t1.log_marginal[l]) && std::isfinite(t2.log_marginal[l])) {
      xs.push_back(t1.log_marginal[l] - t2.log_marginal[l]);
      ses.push_back(std::sqrt(t1.se[l] * t1.se[l] + t2.se[l] * t2.se[l]));
    }
  }
  out.n_subsamples_used = static_cast<int>(xs.size());
  out.n_nonfinite = static_cast<int>(subsamples.size()) - out.n_subsamples_used;
  if (out.n_nonfinite * 5 >= static_cast<int>(subsamples.size())) {
    throw numeric_error("training size too small");
  }
  const LogMeanExp cf = log_mean_exp_propagated(xs, ses);
  out.log_bf_21 = (out.full_2.log_marginal - out.full_1.log_marginal) + cf.value;
  out.mc_standard_error =
      std::sqrt(out.full_1.mc_standard_error * out.full_1.mc_standard_error +
                out.full_2.mc_standard_error * out.full_2.mc_standard_error + cf.se * cf.se);
  return out;
}

DimensionalitySelection select_dimensionality(const Dataset& data, const DimSelectConfig& config) {
  if (config.k_max < 1) throw model_error("k_max must be at least 1");
  if (config.chain.n_chains < 2) {
    throw model_error("dimensionality selection needs at least 2 chains for the regularity check");
  }
  const int n = data.n();
  const int p = data.p();
  sampler::PriorSpec prior;  // improper default, phi = I

  int n_train = config.intrinsic.n_train > 0 ? config.intrinsic.n_train : config.k_max + 3;
  if (n_train < 2) n_train = 2;
  if (n_train >= n) throw model_error("training sample size must be below n");
  const auto subsamples =
      draw_subsamples(config.chain.seed, n, n_train, config.intrinsic.n_subsamples);

  DimensionalitySelection selection;
  CandidateOptions copts;
  copts.allow_improper = true;

  std::vector<TrainingRuns> training(config.k_max + 1);
  for (int k = 0; k <= config.k_max; ++k) {
    const PatternMatrix pattern = PatternMatrix::efa_echelon(p, k);
    PerDimension per;
    per.k = k;

    // dispersed chains; chain 0 carries the scores for the ordinate work
    std::vector<sampler::Chain> chains(config.chain.n_chains);
    const uint64_t chain_seed_base = content_seed(config.chain.seed, pattern, "chains");
    parallel_for(config.chain.n_chains, [&](int c) {
      sampler::ChainConfig cc = config.chain;
      cc.seed = mix_seed(chain_seed_base, 0xC0A1 + static_cast<uint64_t>(c));
      cc.retain_scores = (c == 0);
      chains[c] = sampler::run_chain(data, pattern, prior, cc, c);
    });
    per.regularity = assess_regularity(chains, config.thresholds);
    per.admissible = !per.regularity.multimodality_flag;
    if (config.chain_sink) config.chain_sink(k, chains);

    sampler::ChainConfig main_cfg = config.chain;
    main_cfg.seed = mix_seed(chain_seed_base, 0xC0A1);
    main_cfg.retain_scores = true;
    per.estimate = candidate_from_chain(data, pattern, prior, main_cfg, chains[0], copts);
    per.full_data_log_marginal = per.estimate.log_marginal;
    per.full_data_se = per.estimate.mc_standard_error;

    training[k] = training_marginals(data, pattern, prior, config.chain, config.intrinsic, subsamples);
    if (training[k].n_nonfinite * 5 >= static_cast<int>(subsamples.size())) {
      throw numeric_error("training size too small");
    }
    per.training_log_marginals = training[k].log_marginal;
    selection.per_k.push_back(std::move(per));
  }

  // intrinsic-corrected score against the k = 0 reference
  for (int k = 0; k <= config.k_max; ++k) {
    std::vector<double> xs, ses;
    for (size_t l = 0; l < subsamples.size(); ++l) {
      if (std::isfinite(training[0].log_marginal[l]) && std::isfinite(training[k].log_marginal[l])) {
        xs.push_back(training[0].log_marginal[l] - training[k].log_marginal[l]);
        ses.push_back(std::sqrt(training[0].se[l] * training[0].se[l] +
                                training[k].se[l] * training[k].se[l]));
      }
    }
    const LogMeanExp cf = log_mean_exp_propagated(xs, ses);
    PerDimension& per = selection.per_k[k];
    per.training_correction = cf.value;
    per.estimate.log_marginal = per.full_data_log_marginal + cf.value;
    per.estimate.mc_standard_error = std::sqrt(
        per.estimate.mc_standard_error * per.estimate.mc_standard_error + cf.se * cf.se);
  }

  for (int k = 1; k <= config.k_max; ++k) {
    std::vector<double> xs, ses;
    for (size_t l = 0; l < subsamples.size(); ++l) {
      if (std::isfinite(training[k - 1].log_marginal[l]) && std::isfinite(training[k].log_marginal[l])) {
        xs.push_back(training[k - 1].log_marginal[l] - training[k].log_marginal[l]);
        ses.push_back(std::sqrt(training[k - 1].se[l] * training[k - 1].se[l] +
                                training[k].se[l] * training[k].se[l]));
      }
    }
    const LogMeanExp cf = log_mean_exp_propagated(xs, ses);
    ConsecutiveBF bf;
    bf.k_from = k - 1;
    bf.k_to = k;
    bf.log_bf = (selection.per_k[k].full_data_log_marginal -
                 selection.per_k[k - 1].full_data_log_marginal) +
                cf.value;
    bf.se = std::sqrt(selection.per_k[k].full_data_se * selection.per_k[k].full_data_se +
                      selection.per_k[k - 1].full_data_se * selection.per_k[k - 1].full_data_se +
                      cf.se * cf.se);
    selection.bf_table.push_back(bf);
  }

  int best = -1;
  for (int k = 0; k <= config.k_max; ++k) {
    if (!selection.per_k[k].admissible) continue;
    if (best < 0 || selection.per_k[k].estimate.log_marginal >
                        selection.per_k[best].estimate.log_marginal) {
      best = k;
    }
  }
  if (best < 0) throw numeric_error("no admissible dimensionality; inspect data");
  selection.selected_k = best;
  return selection;
}

}  // namespace cfms::marglik
