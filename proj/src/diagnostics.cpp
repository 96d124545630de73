#include "cfms/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cfms/errors.hpp"

namespace cfms::sampler {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double series_mean(const std::vector<double>& x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double series_var(const std::vector<double>& x, double mean) {
  if (x.size() < 2) return 0.0;
  double s = 0.0;
  for (double v : x) s += (v - mean) * (v - mean);
  return s / static_cast<double>(x.size() - 1);
}

}  // namespace

double ess_of_series(const std::vector<double>& x) {
  const int n = static_cast<int>(x.size());
  if (n < 4) return kNaN;
  const double mean = series_mean(x);
  std::vector<double> centered(x);
  for (double& v : centered) v -= mean;
  const double gamma0 = std::inner_product(centered.begin(), centered.end(), centered.begin(), 0.0) / n;
  if (gamma0 <= 0.0) return kNaN;
  auto gamma = [&](int t) {
    double s = 0.0;
    for (int i = 0; i + t < n; ++i) s += centered[i] * centered[i + t];
    return s / n;
  };
  // Geyer initial positive sequence: accumulate paired autocovariances while
  // the pair sums stay positive.
  double tau = gamma0;
  for (int t = 1; t + 1 < n; t += 2) {
    const double pair = gamma(t) + gamma(t + 1);
    if (pair <= 0.0) break;
    tau += 2.0 * pair;
  }
  const double ess = n * gamma0 / tau;
  return std::min(ess, static_cast<double>(n));
}

double split_rhat(const std::vector<std::vector<double>>& chain_series) {
  std::vector<std::vector<double>> segments;
  for (const auto& series : chain_series) {
    const size_t half = series.size() / 2;
    if (half < 2) return kNaN;
    segments.emplace_back(series.begin(), series.begin() + half);
    segments.emplace_back(series.begin() + half, series.begin() + 2 * half);
  }
  const size_t m = segments.size();
  const size_t len = segments[0].size();
  std::vector<double> means(m), vars(m);
  for (size_t j = 0; j < m; ++j) {
    means[j] = series_mean(segments[j]);
    vars[j] = series_var(segments[j], means[j]);
  }
  const double w = series_mean(vars);
  if (w <= 0.0) return kNaN;
  const double grand = series_mean(means);
  double b = 0.0;
  for (double mj : means) b += (mj - grand) * (mj - grand);
  b *= static_cast<double>(len) / std::max<double>(1.0, static_cast<double>(m - 1));
  const double var_plus = (static_cast<double>(len - 1) / len) * w + b / len;
  return std::sqrt(var_plus / w);
}

namespace {

struct ParameterView {
  std::string name;
  // extracts the scalar from one draw
  double (*get)(const Draw&, int, int);
  int a = 0, b = 0;
};

std::vector<ParameterView> parameter_views(const Chain& chain) {
  std::vector<ParameterView> views;
  const PatternMatrix& pat = chain.pattern;
  for (int i = 0; i < pat.p(); ++i) {
    for (int j = 0; j < pat.m(); ++j) {
      if (!pat.is_free(i, j)) continue;
      views.push_back({"L[" + std::to_string(i + 1) + "," + std::to_string(j + 1) + "]",
                       [](const Draw& d, int a, int b) { return d.loadings(a, b); }, i, j});
    }
  }
  for (int i = 0; i < pat.p(); ++i) {
    views.push_back({"psi[" + std::to_string(i + 1) + "]",
                     [](const Draw& d, int a, int) { return d.psi[a]; }, i, 0});
  }
  if (chain.prior.phi_prior == PhiPrior::CorrelationPrior) {
    for (int i = 0; i < pat.m(); ++i) {
      for (int j = i + 1; j < pat.m(); ++j) {
        views.push_back({"phi[" + std::to_string(i + 1) + "," + std::to_string(j + 1) + "]",
                         [](const Draw& d, int a, int b) { return d.phi(a, b); }, i, j});
      }
    }
  }
  return views;
}

}  // namespace

Diagnostics compute_diagnostics(const std::vector<Chain>& chains, double near_zero_threshold) {
  if (chains.empty()) throw model_error("diagnostics need at least one chain");
  const Chain& first = chains.front();
  const int p = first.p();
  const int m = first.m();
  for (const Chain& c : chains) {
    if (c.p() != p || c.m() != m) throw model_error("diagnostics: chain dimension mismatch");
  }

  Diagnostics out;
  const auto views = parameter_views(first);
  out.parameter_names.reserve(views.size());
  out.split_rhat.reserve(views.size());
  out.ess.reserve(views.size());

  double max_rhat = 0.0;
  double min_ess = std::numeric_limits<double>::infinity();
  bool any_defined_rhat = false;
  for (const auto& view : views) {
    std::vector<std::vector<double>> series(chains.size());
    for (size_t c = 0; c < chains.size(); ++c) {
      series[c].reserve(chains[c].draws.size());
      for (const Draw& d : chains[c].draws) series[c].push_back(view.get(d, view.a, view.b));
    }
    const double rhat = split_rhat(series);
    double ess_total = 0.0;
    bool degenerate = false;
    for (const auto& s : series) {
      const double e = ess_of_series(s);
      if (std::isnan(e)) {
        degenerate = true;
      } else {
        ess_total += e;
      }
    }
    out.parameter_names.push_back(view.name);
    out.split_rhat.push_back(rhat);
    out.ess.push_back(degenerate ? kNaN : ess_total);
    out.degenerate.push_back(degenerate);
    if (!std::isnan(rhat)) {
      max_rhat = std::max(max_rhat, rhat);
      any_defined_rhat = true;
    }
    if (!degenerate) min_ess = std::min(min_ess, ess_total);
    out.any_degenerate = out.any_degenerate || degenerate;
  }
  out.max_rhat = any_defined_rhat ? max_rhat : kNaN;
  out.min_ess = std::isfinite(min_ess) ? min_ess : kNaN;

  out.sign_switch_rate = Matrix::Zero(p, m);
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < m; ++j) {
      if (!first.pattern.is_free(i, j)) continue;
      double rate = 0.0;
      int used_chains = 0;
      for (const Chain& c : chains) {
        if (c.draws.size() < 2) continue;
        int switches = 0;
        for (size_t g = 1; g < c.draws.size(); ++g) {
          const bool s0 = c.draws[g - 1].loadings(i, j) >= 0.0;
          const bool s1 = c.draws[g].loadings(i, j) >= 0.0;
          if (s0 != s1) ++switches;
        }
        rate += static_cast<double>(switches) / static_cast<double>(c.draws.size() - 1);
        ++used_chains;
      }
      out.sign_switch_rate(i, j) = used_chains ? rate / used_chains : 0.0;
    }
  }

  out.near_zero_mass = Vector::Zero(m);
  long total = 0;
  for (const Chain& c : chains) total += static_cast<long>(c.draws.size());
  for (int j = 0; j < m; ++j) {
    long hits = 0;
    for (const Chain& c : chains) {
      for (const Draw& d : c.draws) {
        if (d.loadings.col(j).cwiseAbs().maxCoeff() < near_zero_threshold) ++hits;
      }
    }
    out.near_zero_mass[j] = total ? static_cast<double>(hits) / total : 0.0;
  }
  return out;
}

Matrix apply_signed_perm(const Matrix& loadings, const SignedPerm& q) {
  Matrix out(loadings.rows(), loadings.cols());
  for (int j = 0; j < loadings.cols(); ++j) out.col(j) = q.sign[j] * loadings.col(q.perm[j]);
  return out;
}

Matrix apply_signed_perm_to_phi(const Matrix& phi, const SignedPerm& q) {
  const int m = static_cast<int>(phi.rows());
  Matrix out(m, m);
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b) out(a, b) = q.sign[a] * q.sign[b] * phi(q.perm[a], q.perm[b]);
  return out;
}

SignedPerm best_alignment(const Matrix& loadings, const Matrix& reference) {
  const int m = static_cast<int>(loadings.cols());
  SignedPerm best;
  best.perm.resize(m);
  best.sign.assign(m, 1.0);
  std::iota(best.perm.begin(), best.perm.end(), 0);
  if (m == 0) return best;
  std::vector<int> perm(best.perm);
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    // optimal signs given the permutation are componentwise
    std::vector<double> sign(m, 1.0);
    double cost = 0.0;
    for (int j = 0; j < m; ++j) {
      const double dot = reference.col(j).dot(loadings.col(perm[j]));
      sign[j] = dot >= 0.0 ? 1.0 : -1.0;
      cost += (reference.col(j) - sign[j] * loadings.col(perm[j])).squaredNorm();
    }
    if (cost < best_cost) {
      best_cost = cost;
      best.perm = perm;
      best.sign = sign;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

std::vector<Chain> align_chains_to_first(const std::vector<Chain>& chains) {
  if (chains.empty()) return {};
  std::vector<Chain> aligned;
  aligned.reserve(chains.size());
  aligned.push_back(chains.front());
  const Matrix reference = chains.front().mean_loadings();
  for (size_t c = 1; c < chains.size(); ++c) {
    const SignedPerm q = best_alignment(chains[c].mean_loadings(), reference);
    Chain copy = chains[c];
    for (Draw& d : copy.draws) {
      d.loadings = apply_signed_perm(d.loadings, q);
      d.phi = apply_signed_perm_to_phi(d.phi, q);
    }
    aligned.push_back(std::move(copy));
  }
  return aligned;
}

}  // namespace cfms::sampler
