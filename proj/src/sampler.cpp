#include "cfms/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cfms/csv.hpp"
#include "cfms/densities.hpp"
#include "cfms/errors.hpp"
#include "cfms/kernels.hpp"

namespace cfms::sampler {

void PriorSpec::validate() const {
  if (kind == PriorKind::ConjugateVague) {
    if (loading_prior_variance <= 0.0 || ig_shape <= 0.0 || ig_rate <= 0.0) {
      throw model_error("conjugate prior hyperparameters must be strictly positive");
    }
  }
}

std::string PriorSpec::fingerprint() const {
  std::ostringstream os;
  switch (kind) {
    case PriorKind::ImproperDefault: os << "improper"; break;
    case PriorKind::ConjugateVague:
      os << "conjugate(v=" << format_double(loading_prior_variance) << ",a=" << format_double(ig_shape)
         << ",b=" << format_double(ig_rate) << ")";
      break;
    case PriorKind::EncompassingBall: os << "ball(a=1,b=0.5)"; break;
  }
  os << (phi_prior == PhiPrior::FixedIdentity ? ";phi=I" : ";phi=corr");
  return os.str();
}

double PriorSpec::psi_prior_shape() const {
  switch (kind) {
    case PriorKind::ImproperDefault: return 0.0;
    case PriorKind::ConjugateVague: return ig_shape;
    case PriorKind::EncompassingBall: return kBallIgShape;
  }
  return 0.0;
}

double PriorSpec::psi_prior_rate() const {
  switch (kind) {
    case PriorKind::ImproperDefault: return 0.0;
    case PriorKind::ConjugateVague: return ig_rate;
    case PriorKind::EncompassingBall: return kBallIgRate;
  }
  return 0.0;
}

void ChainConfig::validate() const {
  if (n_iter <= 0) throw model_error("n_iter must be positive");
  if (burn_in < 0 || burn_in >= n_iter) throw model_error("burn_in must lie in [0, n_iter)");
  if (thin <= 0) throw model_error("thin must be positive");
  if (n_chains <= 0) throw model_error("n_chains must be positive");
  if (retained_count() < 1) throw model_error("no draws retained; increase n_iter");
}

Matrix Chain::mean_loadings() const {
  Matrix mean = Matrix::Zero(p(), m());
  for (const Draw& d : draws) mean += d.loadings;
  if (!draws.empty()) mean /= static_cast<double>(draws.size());
  return mean;
}

ScoreConditional factor_score_conditional(const FactorModel& model, const Vector& observation) {
  const int m = model.m();
  ScoreConditional out;
  if (m == 0) {
    out.mean = Vector(0);
    out.covariance = Matrix(0, 0);
    return out;
  }
  const Matrix phi_inv =
      model.factor_correlations.llt().solve(Matrix::Identity(m, m));
  const Matrix lam_over_psi = model.unique_variances.cwiseInverse().asDiagonal() * model.loadings;
  const Matrix precision = phi_inv + model.loadings.transpose() * lam_over_psi;
  out.covariance = symmetrize(precision.llt().solve(Matrix::Identity(m, m)));
  out.mean = out.covariance * (lam_over_psi.transpose() * observation);
  return out;
}

namespace {

// Static description of one loading row: which columns are free and which
// carry nonzero fixed offsets.
struct RowPlan {
  std::vector<int> free_cols;
  std::vector<int> fixed_cols;       // nonzero fixed values only
  std::vector<double> fixed_values;
};

std::vector<RowPlan> make_row_plans(const PatternMatrix& pattern) {
  std::vector<RowPlan> plans(pattern.p());
  for (int i = 0; i < pattern.p(); ++i) {
    for (int j = 0; j < pattern.m(); ++j) {
      const Cell& c = pattern.at(i, j);
      if (c.kind == CellKind::Free || c.kind == CellKind::PositiveAnchor) {
        plans[i].free_cols.push_back(j);
      } else if (c.kind == CellKind::FixedValue && c.value != 0.0) {
        plans[i].fixed_cols.push_back(j);
        plans[i].fixed_values.push_back(c.value);
      }
    }
  }
  return plans;
}

// Sufficient statistics of the regression of one data column on the free
// score columns: A = X'X, b = X'd, dtd = d'd, with the nonzero fixed cells
// folded into the response d.
struct RowStats {
  Matrix A;
  Vector b;
  double dtd = 0.0;
};

RowStats row_stats(const RowPlan& plan, int item, const Matrix& FtF, const Matrix& FtY,
                   const Matrix& YtY) {
  const int q = static_cast<int>(plan.free_cols.size());
  RowStats s;
  s.A.resize(q, q);
  s.b.resize(q);
  for (int a = 0; a < q; ++a) {
    for (int c = 0; c <= a; ++c) {
      s.A(a, c) = s.A(c, a) = FtF(plan.free_cols[a], plan.free_cols[c]);
    }
    double bv = FtY(plan.free_cols[a], item);
    for (size_t f = 0; f < plan.fixed_cols.size(); ++f) {
      bv -= plan.fixed_values[f] * FtF(plan.free_cols[a], plan.fixed_cols[f]);
    }
    s.b[a] = bv;
  }
  s.dtd = YtY(item, item);
  for (size_t f = 0; f < plan.fixed_cols.size(); ++f) {
    s.dtd -= 2.0 * plan.fixed_values[f] * FtY(plan.fixed_cols[f], item);
    for (size_t g = 0; g < plan.fixed_cols.size(); ++g) {
      s.dtd += plan.fixed_values[f] * plan.fixed_values[g] * FtF(plan.fixed_cols[f], plan.fixed_cols[g]);
    }
  }
  return s;
}

double rss_value(const RowStats& s, const Vector& beta) {
  if (beta.size() == 0) return std::max(s.dtd, 0.0);
  const double rss = s.dtd - 2.0 * beta.dot(s.b) + beta.dot(s.A * beta);
  return std::max(rss, 1e-12);
}

// Feasible set of one row's free cells under the communality ball
// {r : r' Phi r <= 1} with the fixed cells held at their values: an ellipsoid
// (beta - center)' Phi_JJ (beta - center) <= radius_sq.
struct BallSection {
  Matrix phi_jj;
  Eigen::LLT<Matrix> llt;  // of phi_jj
  Vector center;
  double radius_sq = 1.0;
};

BallSection ball_section(const RowPlan& plan, const Matrix& phi) {
  const int q = static_cast<int>(plan.free_cols.size());
  BallSection s;
  s.phi_jj.resize(q, q);
  for (int a = 0; a < q; ++a)
    for (int c = 0; c < q; ++c) s.phi_jj(a, c) = phi(plan.free_cols[a], plan.free_cols[c]);
  Vector v = Vector::Zero(q);
  double c0 = 0.0;
  for (size_t f = 0; f < plan.fixed_cols.size(); ++f) {
    for (int a = 0; a < q; ++a) v[a] += phi(plan.free_cols[a], plan.fixed_cols[f]) * plan.fixed_values[f];
    for (size_t g = 0; g < plan.fixed_cols.size(); ++g) {
      c0 += plan.fixed_values[f] * plan.fixed_values[g] * phi(plan.fixed_cols[f], plan.fixed_cols[g]);
    }
  }
  s.llt = chol_spd(s.phi_jj, "ball section");
  s.center = -s.llt.solve(v);
  s.radius_sq = 1.0 - c0 + s.center.dot(s.phi_jj * s.center);
  return s;
}

bool row_in_ball(const RowPlan& plan, const Vector& beta, const Matrix& phi) {
  // quadratic form over the full row; q and fixed cells are both tiny
  const int m = static_cast<int>(phi.rows());
  Vector r = Vector::Zero(m);
  for (size_t a = 0; a < plan.free_cols.size(); ++a) r[plan.free_cols[a]] = beta[static_cast<int>(a)];
  for (size_t f = 0; f < plan.fixed_cols.size(); ++f) r[plan.fixed_cols[f]] = plan.fixed_values[f];
  return r.dot(phi * r) <= 1.0;
}

Vector uniform_on_section(const BallSection& s, Rng& rng) {
  const int q = static_cast<int>(s.center.size());
  if (s.radius_sq <= 0.0) {
    throw numeric_error("fixed loading cells leave no room inside the communality ball");
  }
  const Vector u = std::sqrt(s.radius_sq) * rng.unit_ball(q);
  return s.center + Matrix(s.llt.matrixL()).transpose().triangularView<Eigen::Upper>().solve(u);
}

struct KernelContext {
  const Matrix& YtY;
  int n;
  const PriorSpec& prior;
  const std::vector<RowPlan>& plans;
  bool expanded;
};

double log_prior_kernel(const Matrix& lambda, const Vector& psi, const Matrix& phi,
                        const KernelContext& ctx) {
  double lp = 0.0;
  switch (ctx.prior.kind) {
    case PriorKind::ImproperDefault:
      lp -= psi.array().log().sum();
      break;
    case PriorKind::ConjugateVague: {
      const double v = ctx.prior.loading_prior_variance;
      for (size_t i = 0; i < ctx.plans.size(); ++i) {
        for (int j : ctx.plans[i].free_cols) lp += log_normal_pdf(lambda(static_cast<int>(i), j), 0.0, v);
      }
      for (int i = 0; i < psi.size(); ++i) {
        lp += log_invgamma_pdf(psi[i], ctx.prior.ig_shape, ctx.prior.ig_rate);
      }
      break;
    }
    case PriorKind::EncompassingBall:
      // flat on the ball (indicator absorbed by the sampler); IG(1, 1/2) on psi
      for (int i = 0; i < psi.size(); ++i) lp += log_invgamma_pdf(psi[i], kBallIgShape, kBallIgRate);
      break;
  }
  if (ctx.expanded) {
    // expanded-covariance runs carry the inverse-Wishart prior explicitly
    lp += log_invwishart_pdf(phi, phi.rows() + 2.0, Matrix::Identity(phi.rows(), phi.cols()));
  }
  return lp;
}

}  // namespace

RowConditional loading_row_conditional(int row_index, const PatternMatrix& pattern,
                                       const Matrix& factor_scores, double psi_i,
                                       const Vector& data_column, const PriorSpec& prior) {
  const auto plans = make_row_plans(pattern);
  const RowPlan& plan = plans[row_index];
  const int q = static_cast<int>(plan.free_cols.size());
  if (q == 0) throw model_error("loading row has no free cells");
  const int n = static_cast<int>(data_column.size());

  Vector d = data_column;
  for (size_t f = 0; f < plan.fixed_cols.size(); ++f) {
    kernels::axpy(-plan.fixed_values[f], factor_scores.col(plan.fixed_cols[f]).data(), d.data(),
                  static_cast<size_t>(n));
  }
  Matrix A(q, q);
  Vector b(q);
  for (int a = 0; a < q; ++a) {
    const double* xa = factor_scores.col(plan.free_cols[a]).data();
    for (int c = 0; c <= a; ++c) {
      A(a, c) = A(c, a) = kernels::dot(xa, factor_scores.col(plan.free_cols[c]).data(), n);
    }
    b[a] = kernels::dot(xa, d.data(), n);
  }

  RowConditional out;
  if (prior.kind == PriorKind::ConjugateVague) {
    Matrix precision = A / psi_i;
    precision.diagonal().array() += 1.0 / prior.loading_prior_variance;
    Eigen::LLT<Matrix> llt(precision);
    if (llt.info() != Eigen::Success) {
      throw numeric_error("degenerate conditional; check rank diagnostics");
    }
    out.covariance = symmetrize(llt.solve(Matrix::Identity(q, q)));
    out.mean = llt.solve(b / psi_i);
  } else {
    Eigen::LLT<Matrix> llt(A);
    if (llt.info() != Eigen::Success) {
      throw numeric_error("degenerate conditional; check rank diagnostics");
    }
    out.mean = llt.solve(b);
    out.covariance = symmetrize(psi_i * llt.solve(Matrix::Identity(q, q)));
  }
  return out;
}

Chain run_chain(const Dataset& data, const PatternMatrix& pattern, const PriorSpec& prior,
                const ChainConfig& config, int chain_index, const SamplerOptions& options) {
  prior.validate();
  config.validate();
  pattern.validate();
  data.validate();
  const int n = data.n();
  const int p = data.p();
  const int m = pattern.m();
  if (pattern.p() != p) throw model_error("data/pattern dimension mismatch");
  if (prior.kind == PriorKind::EncompassingBall && !data.standardized) {
    throw model_error("the encompassing ball prior requires standardized data");
  }
  const bool oblique = prior.phi_prior == PhiPrior::CorrelationPrior && m >= 2;
  if (oblique && !options.expanded_covariance) {
    // the parameter-expansion rescale multiplies each column; nonzero fixed
    // values would not survive it
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < m; ++j)
        if (pattern.at(i, j).kind == CellKind::FixedValue && pattern.at(i, j).value != 0.0) {
          throw model_error("correlation prior cannot be combined with nonzero fixed loadings");
        }
  }
  // reflection flips whole columns; a nonzero fixed value in an anchored
  // column would flip with it
  for (int j = 0; j < m; ++j) {
    if (pattern.anchor_rows_of_column(j).empty()) continue;
    for (int i = 0; i < p; ++i) {
      if (pattern.at(i, j).kind == CellKind::FixedValue && pattern.at(i, j).value != 0.0) {
        throw model_error("anchored column " + std::to_string(j + 1) + " contains a nonzero fixed cell");
      }
    }
  }

  Rng rng(config.seed);
  const std::vector<RowPlan> plans = make_row_plans(pattern);

  // run-constant caches
  const Matrix YtY = data.values.transpose() * data.values;
  Vector sample_var(p);
  for (int j = 0; j < p; ++j) {
    const double mean = data.values.col(j).mean();
    sample_var[j] = (YtY(j, j) - n * mean * mean) / (n - 1);
  }

  // state
  Matrix lambda = Matrix::Zero(p, m);
  pattern.impose_fixed(lambda);
  Matrix phi = Matrix::Identity(m, m);
  Vector psi = options.fixed_psi ? *options.fixed_psi : Vector(0.5 * sample_var.array()).eval();
  if (psi.size() != p || (psi.array() <= 0.0).any()) {
    throw model_error("unique variance state must be positive with one entry per item");
  }
  if (prior.kind == PriorKind::EncompassingBall) {
    for (int i = 0; i < p; ++i) {
      if (plans[i].free_cols.empty()) continue;
      const BallSection sec = ball_section(plans[i], phi);
      const Vector beta = uniform_on_section(sec, rng);
      for (size_t a = 0; a < plans[i].free_cols.size(); ++a) {
        lambda(i, plans[i].free_cols[a]) = beta[static_cast<int>(a)];
      }
    }
  } else if (config.dispersed_starts) {
    for (int i = 0; i < p; ++i)
      for (int j : plans[i].free_cols) lambda(i, j) = rng.normal();
  }

  Matrix scores = Matrix::Zero(n, m);
  Chain chain;
  chain.prior = prior;
  chain.pattern = pattern;
  chain.config = config;
  chain.chain_index = chain_index;
  chain.draws.reserve(config.retained_count());
  if (config.retain_scores) chain.score_draws.reserve(config.retained_count());

  const KernelContext kernel_ctx{YtY, n, prior, plans, options.expanded_covariance && oblique};
  const double psi_shape_prior = prior.psi_prior_shape();
  const double psi_rate_prior = prior.psi_prior_rate();

  Matrix FtF(m, m), FtY(m, p);

  for (int iter = 1; iter <= config.n_iter; ++iter) {
    // --- factor scores ---------------------------------------------------
    if (m > 0) {
      const Matrix phi_inv = phi.llt().solve(Matrix::Identity(m, m));
      const Matrix lam_over_psi = psi.cwiseInverse().asDiagonal() * lambda;  // p x m
      Matrix precision = phi_inv + lambda.transpose() * lam_over_psi;
      Eigen::LLT<Matrix> llt(symmetrize(precision));
      if (llt.info() != Eigen::Success) {
        throw numeric_error("divergent chain at iteration " + std::to_string(iter) +
                            ": score precision not PD");
      }
      const Matrix V = symmetrize(llt.solve(Matrix::Identity(m, m)));
      scores.noalias() = data.values * lam_over_psi * V;
      const Matrix upper = Matrix(llt.matrixL()).transpose();
      Vector z(m);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < m; ++j) z[j] = rng.normal();
        scores.row(i) += upper.triangularView<Eigen::Upper>().solve(z).transpose();
      }
    }

    // --- factor covariance / correlation ---------------------------------
    if (oblique) {
      const Matrix scale = Matrix::Identity(m, m) + scores.transpose() * scores;
      Matrix sigma_f = rng.inv_wishart(m + 2.0 + n, scale);
      if (options.expanded_covariance) {
        phi = symmetrize(sigma_f);
      } else {
        // parameter expansion: keep the correlation part, push the scale into
        // the loadings and scores
        const Vector d_sqrt = sigma_f.diagonal().array().sqrt();
        phi = correlation_from_covariance(sigma_f);
        for (int j = 0; j < m; ++j) {
          lambda.col(j) *= d_sqrt[j];
          scores.col(j) /= d_sqrt[j];
        }
        pattern.impose_fixed(lambda);  // restore exact zeros against drift
      }
    }

    if (m > 0) {
      for (int a = 0; a < m; ++a) {
        const double* fa = scores.col(a).data();
        for (int c = 0; c <= a; ++c) {
          FtF(a, c) = FtF(c, a) = kernels::dot(fa, scores.col(c).data(), n);
        }
        for (int i = 0; i < p; ++i) FtY(a, i) = kernels::dot(fa, data.values.col(i).data(), n);
      }
    }

    // --- loading rows -----------------------------------------------------
    Vector rss(p);
    for (int i = 0; i < p; ++i) {
      const RowPlan& plan = plans[i];
      const int q = static_cast<int>(plan.free_cols.size());
      if (q == 0) {
        RowStats s = row_stats(plan, i, FtF, FtY, YtY);
        rss[i] = rss_value(s, Vector(0));
        continue;
      }
      const RowStats s = row_stats(plan, i, FtF, FtY, YtY);
      Eigen::LLT<Matrix> llt_A(s.A);
      if (llt_A.info() != Eigen::Success) {
        throw numeric_error("degenerate conditional; check rank diagnostics (row " +
                            std::to_string(i + 1) + ", iteration " + std::to_string(iter) + ")");
      }
      Vector beta;
      auto draw_flat = [&]() {
        Vector mu = llt_A.solve(s.b);
        Vector z(q);
        for (int a = 0; a < q; ++a) z[a] = rng.normal();
        const Matrix upper = Matrix(llt_A.matrixL()).transpose();
        return Vector(mu + std::sqrt(psi[i]) *
                               upper.triangularView<Eigen::Upper>().solve(z));
      };
      if (prior.kind == PriorKind::ConjugateVague) {
        Matrix precision = s.A / psi[i];
        precision.diagonal().array() += 1.0 / prior.loading_prior_variance;
        Eigen::LLT<Matrix> llt_P(precision);
        if (llt_P.info() != Eigen::Success) {
          throw numeric_error("degenerate conditional; check rank diagnostics");
        }
        Vector mu = llt_P.solve(s.b / psi[i]);
        Vector z(q);
        for (int a = 0; a < q; ++a) z[a] = rng.normal();
        const Matrix upper = Matrix(llt_P.matrixL()).transpose();
        beta = mu + upper.triangularView<Eigen::Upper>().solve(z);
      } else if (prior.kind == PriorKind::EncompassingBall) {
        bool accepted = false;
        for (int attempt = 0; attempt < 1000; ++attempt) {
          Vector cand = draw_flat();
          if (row_in_ball(plan, cand, phi)) {
            beta = cand;
            accepted = true;
            break;
          }
        }
        if (!accepted) {
          // independence Metropolis with a uniform proposal on the feasible
          // section; the flat prior makes the ratio a pure likelihood ratio
          const BallSection sec = ball_section(plan, phi);
          Vector current(q);
          for (int a = 0; a < q; ++a) current[a] = lambda(i, plan.free_cols[a]);
          const Vector cand = uniform_on_section(sec, rng);
          const double log_ratio =
              (-rss_value(s, cand) + rss_value(s, current)) / (2.0 * psi[i]);
          beta = (std::log(rng.uniform()) < log_ratio) ? cand : current;
        }
      } else {
        beta = draw_flat();
      }
      for (int a = 0; a < q; ++a) lambda(i, plan.free_cols[a]) = beta[a];
      rss[i] = rss_value(s, beta);
    }

    // --- unique variances -------------------------------------------------
    if (!options.fixed_psi) {
      for (int i = 0; i < p; ++i) {
        psi[i] = rng.inv_gamma(0.5 * n + psi_shape_prior, 0.5 * rss[i] + psi_rate_prior);
      }
    }

    // --- anchor reflection (posterior-invariant column relabeling) --------
    for (int j = 0; j < m; ++j) {
      const auto anchors = pattern.anchor_rows_of_column(j);
      if (anchors.empty()) continue;
      if (lambda(anchors[0], j) < 0.0) {
        lambda.col(j) = -lambda.col(j);
        scores.col(j) = -scores.col(j);
        for (int k = 0; k < m; ++k) {
          if (k == j) continue;
          phi(j, k) = -phi(j, k);
          phi(k, j) = -phi(k, j);
        }
      }
    }

    // --- retention ---------------------------------------------------------
    if (iter > config.burn_in && (iter - config.burn_in) % config.thin == 0) {
      Draw draw;
      draw.loadings = lambda;
      draw.psi = psi;
      draw.phi = phi;
      double loglik;
      try {
        Matrix sigma = lambda * phi * lambda.transpose();
        sigma += Matrix(psi.asDiagonal());
        loglik = log_likelihood_scatter(YtY, n, symmetrize(sigma));
      } catch (const Error&) {
        throw numeric_error("divergent chain at iteration " + std::to_string(iter) +
                            ": implied covariance not PD");
      }
      draw.log_kernel = loglik + log_prior_kernel(lambda, psi, phi, kernel_ctx);
      if (!std::isfinite(draw.log_kernel)) {
        throw numeric_error("divergent chain at iteration " + std::to_string(iter) +
                            ": non-finite posterior kernel");
      }
      if (!pattern.admits(draw.loadings, 1e-12)) {
        throw numeric_error("internal error: retained draw violates the pattern at iteration " +
                            std::to_string(iter));
      }
      chain.draws.push_back(std::move(draw));
      if (config.retain_scores) chain.score_draws.push_back(scores);
    }
  }
  return chain;
}

std::vector<Chain> run_chains(const Dataset& data, const PatternMatrix& pattern,
                              const PriorSpec& prior, const ChainConfig& config,
                              const SamplerOptions& options) {
  std::vector<Chain> chains;
  chains.reserve(config.n_chains);
  for (int c = 0; c < config.n_chains; ++c) {
    ChainConfig cc = config;
    cc.seed = mix_seed(config.seed, 0xC0A1 + static_cast<uint64_t>(c));
    chains.push_back(run_chain(data, pattern, prior, cc, c, options));
  }
  return chains;
}

void export_chain_csv(const Chain& chain, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw usage_error("cannot write draw export: " + path);
  const int p = chain.p();
  const int m = chain.m();
  bool first = true;
  auto emit = [&](const std::string& s) {
    if (!first) out << ',';
    out << s;
    first = false;
  };
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < m; ++j) emit("L[" + std::to_string(i + 1) + "," + std::to_string(j + 1) + "]");
  for (int i = 0; i < p; ++i) emit("psi[" + std::to_string(i + 1) + "]");
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j)
      emit("phi[" + std::to_string(i + 1) + "," + std::to_string(j + 1) + "]");
  emit("logkernel");
  out << '\n';
  for (const Draw& d : chain.draws) {
    first = true;
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < m; ++j) emit(format_double(d.loadings(i, j)));
    for (int i = 0; i < p; ++i) emit(format_double(d.psi[i]));
    for (int i = 0; i < m; ++i)
      for (int j = i + 1; j < m; ++j) emit(format_double(d.phi(i, j)));
    emit(format_double(d.log_kernel));
    out << '\n';
  }
  if (!out) throw usage_error("write failed: " + path);
}

ImportedDraws import_draws_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw usage_error("cannot open draw file: " + path);
  std::string header;
  if (!std::getline(in, header)) throw usage_error(path + ": empty draw file");
  std::istringstream hs(header);
  std::string col;
  std::vector<std::pair<int, int>> loading_cols;  // (item, factor), 1-based
  int col_index = 0;
  std::vector<int> loading_col_indices;
  int max_i = 0, max_j = 0;
  while (std::getline(hs, col, ',')) {
    if (col.rfind("L[", 0) == 0) {
      int i = 0, j = 0;
      if (std::sscanf(col.c_str(), "L[%d,%d]", &i, &j) != 2) {
        throw usage_error(path + ": bad loading column name " + col);
      }
      loading_cols.emplace_back(i, j);
      loading_col_indices.push_back(col_index);
      max_i = std::max(max_i, i);
      max_j = std::max(max_j, j);
    }
    ++col_index;
  }
  if (loading_cols.empty()) throw usage_error(path + ": no loading columns found");
  ImportedDraws out;
  out.p = max_i;
  out.m = max_j;
  std::string line;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::vector<double> fields;
    std::string f;
    while (std::getline(ls, f, ',')) fields.push_back(std::stod(f));
    Matrix lam = Matrix::Zero(out.p, out.m);
    for (size_t k = 0; k < loading_cols.size(); ++k) {
      const int idx = loading_col_indices[k];
      if (idx >= static_cast<int>(fields.size())) {
        throw usage_error(path + ":" + std::to_string(line_no) + ": short row");
      }
      lam(loading_cols[k].first - 1, loading_cols[k].second - 1) = fields[idx];
    }
    out.loadings.push_back(std::move(lam));
  }
  if (out.loadings.empty()) throw usage_error(path + ": no draws in file");
  return out;
}

}  // namespace cfms::sampler
