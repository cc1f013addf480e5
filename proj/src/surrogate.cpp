#include "credsurr/surrogate.hpp"

#include "credsurr/error.hpp"
#include "credsurr/json_io.hpp"
#include "credsurr/util.hpp"

#include <Eigen/Cholesky>
#include <boost/math/tools/minima.hpp>
#include <boost/random/uniform_01.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace credsurr {

std::string_view gform_name(GForm f) {
  return f == GForm::Unstructured ? "Unstructured" : "RatingFactorAdditive";
}

GForm parse_gform(std::string_view s) {
  if (s == "RatingFactorAdditive" || s == "additive") return GForm::RatingFactorAdditive;
  if (s == "Unstructured" || s == "unstructured") return GForm::Unstructured;
  throw ConfigError("unknown surrogate form '" + std::string(s) + "'");
}

Vector g_inputs(const IndexValue& idx, Scalar manual) {
  const Index D = idx.per_dim.size();
  Vector x(2 * D + 1);
  x.head(D) = idx.per_dim;
  x.segment(D, D) = idx.n_per_dim.cast<Scalar>();
  x[2 * D] = std::log(manual);
  return x;
}

std::vector<std::string> g_input_names(int D) {
  std::vector<std::string> v;
  for (int d = 1; d <= D; ++d) v.push_back("index_" + std::to_string(d));
  for (int d = 1; d <= D; ++d) v.push_back("n_" + std::to_string(d));
  v.push_back("log_manual");
  return v;
}

bool g_design_row(const GComponent& g, ConstRef<Vector> x, Eigen::Ref<Vector> row) {
  if (x.size() != g.n_inputs) throw ConfigError("g input vector has the wrong length");
  bool clamped = false;
  if (g.form == GForm::RatingFactorAdditive) {
    Index off = 0;
    for (std::size_t j = 0; j < g.used.size(); ++j) {
      const int k = g.bases[j].size();
      clamped |= eval_basis(g.bases[j], x[g.used[j]], row.segment(off, k));
      off += k;
    }
    return clamped;
  }
  // tensor product, first input varies slowest
  Vector acc = Vector::Ones(1), b, next;
  for (std::size_t j = 0; j < g.used.size(); ++j) {
    b.resize(g.bases[j].size());
    clamped |= eval_basis(g.bases[j], x[g.used[j]], b);
    next.resize(acc.size() * b.size());
    for (Index a = 0; a < acc.size(); ++a) next.segment(a * b.size(), b.size()) = acc[a] * b;
    acc.swap(next);
  }
  if (g.used.empty()) return false;
  row = acc;
  return clamped;
}

Scalar eval_g(const GComponent& g, ConstRef<Vector> x, bool* clamped) {
  if (g.coef.size() == 0) {
    if (clamped) *clamped = false;
    return 0.0;
  }
  Vector row(g.coef.size());
  bool c = g_design_row(g, x, row);
  Scalar v = row.dot(g.coef);
  // no factor beyond what the training rows produced
  if (v < g.range_lo || v > g.range_hi) {
    v = std::clamp(v, g.range_lo, g.range_hi);
    c = true;
  }
  if (clamped) *clamped = c;
  return v;
}

namespace {

// Second divided differences over the Greville abscissae of one basis,
// scaled by the squared range.
Matrix divided_diff2(const BSplineBasis& b) {
  const int n = b.size();
  if (n < 3) return Matrix::Zero(0, n);
  Vector gr(n);
  for (int j = 0; j < n; ++j) {
    Scalar s = 0.0;
    for (int k = 1; k <= b.degree; ++k) s += b.knots[static_cast<std::size_t>(j + k)];
    gr[j] = s / b.degree;
  }
  const Scalar range2 = (b.hi - b.lo) * (b.hi - b.lo);
  Matrix D = Matrix::Zero(n - 2, n);
  for (int j = 0; j + 2 < n; ++j) {
    const Scalar h0 = gr[j + 1] - gr[j], h1 = gr[j + 2] - gr[j + 1], h = gr[j + 2] - gr[j];
    if (!(h0 > 0.0 && h1 > 0.0)) continue;
    D(j, j) = range2 / (h0 * h);
    D(j, j + 1) = -range2 / (h0 * h1);
    D(j, j + 2) = range2 / (h1 * h);
  }
  return D;
}

Matrix divided_diff1(const BSplineBasis& b) {
  const int n = b.size();
  if (n < 2) return Matrix::Zero(0, n);
  Vector gr(n);
  for (int j = 0; j < n; ++j) {
    Scalar s = 0.0;
    for (int k = 1; k <= b.degree; ++k) s += b.knots[static_cast<std::size_t>(j + k)];
    gr[j] = s / b.degree;
  }
  Matrix D = Matrix::Zero(n - 1, n);
  for (int j = 0; j + 1 < n; ++j) {
    const Scalar h = gr[j + 1] - gr[j];
    if (!(h > 0.0)) continue;
    D(j, j) = -(b.hi - b.lo) / h;
    D(j, j + 1) = (b.hi - b.lo) / h;
  }
  return D;
}

Matrix kron(const Matrix& A, const Matrix& B) {
  Matrix out(A.rows() * B.rows(), A.cols() * B.cols());
  for (Index i = 0; i < A.rows(); ++i) {
    for (Index j = 0; j < A.cols(); ++j) out.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
  }
  return out;
}

struct Penalties {
  Matrix main;         // second differences along each axis
  Matrix interaction;  // mixed first differences; zero for additive forms
};

Penalties curvature_penalties(const GComponent& g) {
  const Index P = g.coef.size();
  Penalties out{Matrix::Zero(P, P), Matrix::Zero(P, P)};
  if (g.form == GForm::RatingFactorAdditive) {
    Index off = 0;
    for (const auto& b : g.bases) {
      const Matrix D = divided_diff2(b);
      out.main.block(off, off, b.size(), b.size()) = D.transpose() * D;
      off += b.size();
    }
    return out;
  }
  // tensor: pure second differences along each axis, plus the cross terms
  // that catch twisting in corners the data never reach
  const std::size_t q = g.bases.size();
  std::vector<Matrix> d2(q), d1(q);
  for (std::size_t a = 0; a < q; ++a) {
    const Matrix D2 = divided_diff2(g.bases[a]);
    const Matrix D1 = divided_diff1(g.bases[a]);
    d2[a] = D2.transpose() * D2;
    d1[a] = D1.transpose() * D1;
  }
  auto term = [&](std::size_t a, std::size_t b) {
    Matrix K = Matrix::Identity(1, 1);
    for (std::size_t c = 0; c < q; ++c) {
      const Index n = g.bases[c].size();
      if (a == b && c == a) K = kron(K, d2[c]);
      else if (a != b && (c == a || c == b)) K = kron(K, d1[c]);
      else K = kron(K, Matrix::Identity(n, n));
    }
    return K;
  };
  for (std::size_t a = 0; a < q; ++a) {
    out.main += term(a, a);
    for (std::size_t b = a + 1; b < q; ++b) out.interaction += 2.0 * term(a, b);
  }
  return out;
}

}  // namespace

GComponent fit_g(ConstRef<Vector> y, const Matrix& X, GForm form, Scalar lambda, const GFitOptions& opt) {
  const Index M = X.rows();
  if (y.size() != M) throw ConfigError("g response and inputs differ in length");
  if (!(lambda >= 0.0)) throw ConfigError("ridge lambda must be non-negative");
  if (!y.allFinite() || !X.allFinite()) throw NumericError("g inputs must be finite");
  GComponent g;
  g.form = form;
  g.lambda = lambda;
  g.n_inputs = static_cast<int>(X.cols());
  const int candidates = form == GForm::RatingFactorAdditive ? static_cast<int>(X.cols()) - 1 : static_cast<int>(X.cols());
  for (int j = 0; j < candidates; ++j) {
    if (distinct_count(X.col(j)) >= 2) g.used.push_back(j);
  }
  if (form == GForm::RatingFactorAdditive) {
    for (int j : g.used) g.bases.push_back(make_basis(X.col(j), opt.interior_knots, opt.degree));
  } else if (!g.used.empty()) {
    // keep the tensor basis at about a quarter of the sample size
    const Scalar budget = std::max<Scalar>(16.0, static_cast<Scalar>(M) / 4.0);
    const int per = std::max(2, static_cast<int>(std::floor(std::pow(budget, 1.0 / static_cast<Scalar>(g.used.size())) + 1e-9)));
    for (int j : g.used) {
      const int distinct = distinct_count(X.col(j));
      const int deg = std::min(opt.degree, distinct - 1);
      const int interior = std::clamp(per - deg - 1, 0, opt.interior_knots);
      g.bases.push_back(make_basis(X.col(j), interior, opt.degree));
    }
  }
  Index P = 0;
  if (!g.bases.empty()) {
    P = form == GForm::RatingFactorAdditive ? 0 : 1;
    for (const auto& b : g.bases) P = form == GForm::RatingFactorAdditive ? P + b.size() : P * b.size();
  }
  g.coef = Vector::Zero(P);
  if (P == 0) return g;
  Matrix B(M, P);
  Vector row(P);
  for (Index i = 0; i < M; ++i) {
    g_design_row(g, X.row(i).transpose(), row);
    B.row(i) = row.transpose();
  }
  const Matrix BtB = B.transpose() * B;
  const Vector Bty = B.transpose() * y;
  const Penalties pen = curvature_penalties(g);
  auto solve = [&](Scalar sm, Scalar si, Vector& coef, Scalar* edf) {
    Matrix A = BtB + sm * pen.main + si * pen.interaction;
    A.diagonal().array() += lambda;
    Eigen::LDLT<Matrix> ldlt(A);
    if (ldlt.info() != Eigen::Success || (lambda == 0.0 && sm == 0.0 && si == 0.0 && !ldlt.isPositive())) return false;
    coef = ldlt.solve(Bty);
    if (!coef.allFinite()) return false;
    if (edf) *edf = ldlt.solve(BtB).trace();
    return true;
  };
  auto unit_of = [&](const Matrix& m) {
    const Scalar tr = m.trace();
    return tr > 0.0 ? BtB.trace() / tr : 0.0;
  };
  const Scalar unit_m = unit_of(pen.main), unit_i = unit_of(pen.interaction);
  Vector coef;
  if (opt.smoothing >= 0.0 || (unit_m == 0.0 && unit_i == 0.0)) {
    g.smoothing = std::max<Scalar>(0.0, opt.smoothing) * unit_m;
    g.smoothing_interaction = std::max<Scalar>(0.0, opt.smoothing) * unit_i;
    if (!solve(g.smoothing, g.smoothing_interaction, coef, nullptr)) throw NumericError("g normal equations are singular");
  } else {
    // GCV over a grid of decades. The data are close to noise-free, so the
    // score is flat over a wide range; among fits within gcv_tolerance of
    // the best, take the one with the heaviest interaction penalty, then the
    // heaviest main penalty. That choice decides how the surface behaves in
    // corners without data.
    struct Cand {
      Scalar sm, si, gcv;
      Vector c;
    };
    std::vector<Cand> cands;
    const std::vector<int> ie = unit_i > 0.0 ? std::vector<int>{-8, -7, -6, -5, -4, -3, -2, -1, 0, 1, 2, 3, 4, 5, 6, 7, 8}
                                             : std::vector<int>{0};
    Scalar best = std::numeric_limits<Scalar>::infinity();
    for (int e = -8; e <= 8; ++e) {
      for (int f : ie) {
        const Scalar sm = unit_m * std::pow(10.0, e), si = unit_i * std::pow(10.0, f);
        Vector c;
        Scalar edf = 0.0;
        if (!solve(sm, si, c, &edf)) continue;
        const Scalar rss = (y - B * c).squaredNorm();
        const Scalar denom = static_cast<Scalar>(M) - edf;
        if (!(denom > 0.0)) continue;
        const Scalar gcv = static_cast<Scalar>(M) * rss / (denom * denom);
        best = std::min(best, gcv);
        cands.push_back({sm, si, gcv, std::move(c)});
      }
    }
    const Cand* pick = nullptr;
    for (const auto& c : cands) {
      if (!(c.gcv <= best * (1.0 + opt.gcv_tolerance))) continue;
      if (!pick || c.si > pick->si || (c.si == pick->si && c.sm > pick->sm)) pick = &c;
    }
    if (!pick) throw NumericError("g normal equations are singular");
    g.smoothing = pick->sm;
    g.smoothing_interaction = pick->si;
    coef = pick->c;
  }
  g.coef = std::move(coef);
  // 0 stays inside so a zeroed surface still prices at the manual premium
  const Vector fit = B * g.coef;
  g.range_lo = std::min<Scalar>(0.0, fit.minCoeff());
  g.range_hi = std::max<Scalar>(0.0, fit.maxCoeff());
  return g;
}

std::vector<std::string> default_h_features(int D) {
  std::vector<std::string> v;
  for (int d = 1; d <= D; ++d) v.push_back("log_mu_" + std::to_string(d));
  return v;
}

Vector h_features(const Policyholder& ph, const std::vector<std::string>& names,
                  const std::vector<std::string>& attr_names) {
  Vector f(static_cast<Index>(names.size()));
  for (std::size_t k = 0; k < names.size(); ++k) {
    const std::string& n = names[k];
    Scalar v = std::numeric_limits<Scalar>::quiet_NaN();
    if (n.rfind("log_mu_", 0) == 0) {
      int d = 0;
      try {
        d = std::stoi(n.substr(7));
      } catch (...) {
        throw ConfigError("unknown feature '" + n + "'");
      }
      if (d < 1 || d > ph.D()) throw ConfigError("feature '" + n + "' refers to a missing dimension");
      v = std::log(ph.mu[d - 1]);
    } else if (n.rfind("attr_", 0) == 0) {
      const auto it = std::find(attr_names.begin(), attr_names.end(), n.substr(5));
      if (it == attr_names.end()) throw ConfigError("unknown feature '" + n + "'");
      const std::string& raw = ph.attrs[static_cast<std::size_t>(it - attr_names.begin())];
      try {
        v = parse_double(raw);
      } catch (const ParseError&) {
        throw DomainError("feature '" + n + "' is not numeric for '" + ph.id + "'");
      }
    } else {
      throw ConfigError("unknown feature '" + n + "'");
    }
    f[static_cast<Index>(k)] = v;
  }
  return f;
}

Metrics compute_metrics(ConstRef<Vector> target, ConstRef<Vector> fitted) {
  if (target.size() != fitted.size()) throw ConfigError("metric inputs differ in length");
  if (target.size() < 2) throw ConfigError("metrics need at least two rows");
  const Scalar n = static_cast<Scalar>(target.size());
  const Vector r = target - fitted;
  Metrics m;
  m.n = target.size();
  m.MSE = r.squaredNorm() / n;
  const Scalar mst = (target.array() - target.mean()).square().sum() / n;
  if (!(mst > 0.0)) throw NumericError("holdout premiums have zero variance (MST = 0)");
  m.R2 = 1.0 - m.MSE / mst;
  m.ME = r.sum() / n;
  m.MAE = r.cwiseAbs().sum() / n;
  m.MAPE = (r.cwiseAbs().array() / target.array()).sum() / n;
  return m;
}

std::pair<Scalar, Scalar> default_theta_bounds(const ModelSpec& model) {
  if (model.link == Link::LogAdditive) return {-3.0, 3.0};
  return {quantile(model.prior.dist, 0.001), quantile(model.prior.dist, 0.999)};
}

Scalar minimize_bounded(const std::function<Scalar(Scalar)>& f, Scalar lo, Scalar hi, int grid_points) {
  if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) throw ConfigError("bounds must be finite with lo < hi");
  const int G = std::max(3, grid_points);
  const Scalar mid = 0.5 * (lo + hi);
  std::vector<Scalar> xs(static_cast<std::size_t>(G)), fs(static_cast<std::size_t>(G));
  for (int i = 0; i < G; ++i) {
    xs[static_cast<std::size_t>(i)] = i == G - 1 ? hi : lo + (hi - lo) * i / (G - 1);
    fs[static_cast<std::size_t>(i)] = f(xs[static_cast<std::size_t>(i)]);
  }
  const auto [mn, mx] = std::minmax_element(fs.begin(), fs.end());
  if (*mn == *mx) return mid;
  std::size_t best = 0;
  for (std::size_t i = 0; i < fs.size(); ++i) {
    if (fs[i] < fs[best] || (fs[i] == fs[best] && std::abs(xs[i] - mid) < std::abs(xs[best] - mid))) best = i;
  }
  const Scalar a = xs[best > 0 ? best - 1 : 0];
  const Scalar b = xs[std::min(best + 1, xs.size() - 1)];
  boost::uintmax_t iters = 200;
  const auto r = boost::math::tools::brent_find_minima(f, a, b, 40, iters);
  return r.second <= fs[best] ? r.first : xs[best];
}

Scalar tune_theta(const TrainingRow& row, const ModelSpec& model, const GComponent& g, std::pair<Scalar, Scalar> bounds,
                  int grid_points) {
  auto obj = [&](Scalar theta) {
    const IndexValue idx = credibility_index(*row.ph, model, theta);
    const Scalar fit = row.manual * std::exp(eval_g(g, g_inputs(idx, row.manual)));
    const Scalar r = row.premium - fit;
    return r * r;
  };
  return minimize_bounded(obj, bounds.first, bounds.second, grid_points);
}

namespace {

Scalar clampv(Scalar v, Scalar lo, Scalar hi) { return std::min(hi, std::max(lo, v)); }

struct Iterate {
  GComponent g;
  Forest h;
  Vector theta;
  Scalar mse = 0.0;
};

}  // namespace

SurrogateModel fit_surrogate(const std::vector<TrainingRow>& all_rows, const ModelSpec& model,
                             const std::vector<std::string>& attr_names, const SurrogateConfig& cfg) {
  validate(model);
  std::vector<TrainingRow> rows;
  for (const auto& r : all_rows) {
    if (!r.ph) throw ConfigError("training row without a policyholder");
    if (!(r.premium > 0.0) || !(r.manual > 0.0) || !std::isfinite(r.premium) || !std::isfinite(r.manual)) {
      throw DomainError("premiums and manual premiums must be positive (policyholder '" + r.ph->id + "')");
    }
    if (r.ph->n_total() > 0) rows.push_back(r);
  }
  const Index M = static_cast<Index>(rows.size());
  if (M < 50) throw ConfigError("surrogate fit needs at least 50 policyholders with experience, got " + std::to_string(M));
  const int D = model.D();

  SurrogateModel out;
  out.model = model;
  out.attr_names = attr_names;
  out.seed = cfg.seed;
  const auto bounds = cfg.theta_bounds.value_or(default_theta_bounds(model));
  if (!(bounds.first < bounds.second)) throw ConfigError("theta bounds must satisfy lo < hi");
  if (model.link == Link::MultiplicativeFrailty && !(bounds.first > 0.0)) {
    throw ConfigError("frailty link needs positive theta bounds");
  }
  out.theta_lo = bounds.first;
  out.theta_hi = bounds.second;
  out.h.features = cfg.features.empty() ? default_h_features(D) : cfg.features;

  Matrix F(M, static_cast<Index>(out.h.features.size()));
  Vector y_log(M), target(M), manual(M);
  for (Index i = 0; i < M; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    F.row(i) = h_features(*r.ph, out.h.features, attr_names).transpose();
    y_log[i] = std::log(r.premium / r.manual);
    target[i] = r.premium;
    manual[i] = r.manual;
  }
  if (!F.allFinite()) throw DomainError("h features must be finite");

  auto inputs_at = [&](const Vector& theta) {
    Matrix X(M, 2 * D + 1);
    parallel_for(static_cast<std::size_t>(M), cfg.threads, [&](std::size_t i) {
      const auto& r = rows[i];
      X.row(static_cast<Index>(i)) =
          g_inputs(credibility_index(*r.ph, model, theta[static_cast<Index>(i)]), r.manual).transpose();
    });
    return X;
  };
  auto premium_mse = [&](const GComponent& g, const Matrix& X) {
    Scalar s = 0.0;
    for (Index i = 0; i < M; ++i) {
      const Scalar fit = manual[i] * std::exp(eval_g(g, X.row(i).transpose()));
      s += (target[i] - fit) * (target[i] - fit);
    }
    return s / static_cast<Scalar>(M);
  };
  auto forest_params = [&](int it) {
    ForestParams p = cfg.forest;
    p.seed = cfg.seed * 7919ULL + static_cast<std::uint64_t>(it) + 1ULL;
    return p;
  };
  auto through_h = [&](const Forest& h) {
    Vector t = h.predict_rows(F);
    for (Index i = 0; i < M; ++i) t[i] = clampv(t[i], bounds.first, bounds.second);
    return t;
  };

  // Several starts: each level is jittered per policyholder, then the
  // alternating loop runs to its stopping rule
  const Scalar center =
      model.link == Link::LogAdditive ? 0.0 : clampv(model.prior.dist.mean, bounds.first, bounds.second);
  std::vector<Scalar> levels{center};
  const int S = std::max(1, cfg.starts);
  for (int k = 0; k + 1 < S; ++k) {
    levels.push_back(S == 2 ? bounds.first : bounds.first + (bounds.second - bounds.first) * k / (S - 2));
  }

  auto run = [&](Scalar level, std::uint64_t seed, std::vector<Scalar>& history, int& used, bool& converged) {
    Rng rng(seed);
    boost::random::uniform_01<Scalar> unif;
    Vector theta0(M);
    for (Index i = 0; i < M; ++i) {
      theta0[i] = clampv(level + 0.01 * (bounds.second - bounds.first) * (unif(rng) - 0.5), bounds.first, bounds.second);
    }
    Iterate best;
    best.h = fit_forest(F, theta0, forest_params(0));
    best.theta = through_h(best.h);
    {
      const Matrix X = inputs_at(best.theta);
      best.g = fit_g(y_log, X, cfg.form, cfg.lambda, cfg.spline);
      best.mse = premium_mse(best.g, X);
    }
    history.assign(1, best.mse);
    used = 0;
    converged = false;
    for (int it = 1; it <= cfg.max_iter; ++it) {
      used = it;
      Vector pseudo(M);
      parallel_for(static_cast<std::size_t>(M), cfg.threads, [&](std::size_t i) {
        pseudo[static_cast<Index>(i)] = tune_theta(rows[i], model, best.g, bounds, cfg.grid_points);
      });
      Iterate next;
      next.h = fit_forest(F, pseudo, forest_params(it));
      next.theta = through_h(next.h);
      const Matrix X = inputs_at(next.theta);
      next.g = fit_g(y_log, X, cfg.form, cfg.lambda, cfg.spline);
      next.mse = premium_mse(next.g, X);
      if (!(next.mse < best.mse)) {
        // the error can no longer be decreased
        converged = true;
        break;
      }
      const Scalar rel = (best.mse - next.mse) / best.mse;
      best = std::move(next);
      history.push_back(best.mse);
      if (rel < cfg.tol) {
        converged = true;
        break;
      }
    }
    return best;
  };

  Iterate best;
  for (std::size_t k = 0; k < levels.size(); ++k) {
    std::vector<Scalar> history;
    int used = 0;
    bool converged = false;
    Iterate cand = run(levels[k], cfg.seed + 0x9e3779b97f4a7c15ULL * k, history, used, converged);
    if (k == 0 || cand.mse < best.mse) {
      best = std::move(cand);
      out.mse_history = std::move(history);
      out.iterations_used = used;
      out.converged = converged;
    }
  }
  if (!out.converged) diagnostic("surrogate fit stopped at max_iter without meeting the tolerance");

  out.g = std::move(best.g);
  out.h.forest = std::move(best.h);
  out.theta_train = best.theta;
  for (const auto& r : rows) out.train_ids.push_back(r.ph->id);
  Vector fitted(M);
  for (Index i = 0; i < M; ++i) fitted[i] = predict_premium(out, *rows[static_cast<std::size_t>(i)].ph, manual[i]);
  try {
    out.train = compute_metrics(target, fitted);
  } catch (const NumericError&) {
    // flat training premiums: report a perfect or a null fit
    out.train.n = M;
    out.train.MSE = (target - fitted).squaredNorm() / static_cast<Scalar>(M);
    out.train.R2 = out.train.MSE == 0.0 ? 1.0 : 0.0;
    out.train.ME = (target - fitted).sum() / static_cast<Scalar>(M);
    out.train.MAE = (target - fitted).cwiseAbs().sum() / static_cast<Scalar>(M);
    out.train.MAPE = ((target - fitted).cwiseAbs().array() / target.array()).sum() / static_cast<Scalar>(M);
  }
  return out;
}

Prediction predict(const SurrogateModel& m, const Policyholder& ph, Scalar manual) {
  if (!(manual > 0.0) || !std::isfinite(manual)) throw DomainError("manual premium must be positive");
  Prediction p;
  if (ph.n_total() == 0) {
    p.theta_tilde = std::numeric_limits<Scalar>::quiet_NaN();
    p.factor = 1.0;
    p.premium = manual;
    return p;
  }
  const Vector f = h_features(ph, m.h.features, m.attr_names);
  Scalar t = m.h.forest.predict(f);
  if (t < m.theta_lo || t > m.theta_hi) {
    p.clamped = true;
    t = clampv(t, m.theta_lo, m.theta_hi);
  }
  p.theta_tilde = t;
  bool clamped = false;
  const Scalar g = eval_g(m.g, g_inputs(credibility_index(ph, m.model, t), manual), &clamped);
  p.clamped = p.clamped || clamped;
  p.factor = std::exp(g);
  p.premium = manual * p.factor;
  return p;
}

Scalar predict_premium(const SurrogateModel& m, const Policyholder& ph, Scalar manual) {
  return predict(m, ph, manual).premium;
}

std::vector<Prediction> predict_all(const SurrogateModel& m, const Portfolio& p, const std::vector<Scalar>& manuals,
                                    int threads) {
  if (manuals.size() != p.size()) throw ConfigError("one manual premium per policyholder is required");
  std::vector<Prediction> out(p.size());
  parallel_for(p.size(), threads, [&](std::size_t i) { out[i] = predict(m, p.members[i], manuals[i]); });
  const auto n = std::count_if(out.begin(), out.end(), [](const Prediction& q) { return q.clamped; });
  if (n > 0) {
    diagnostic(std::to_string(n) + " policyholder(s) fell outside the trained range; inputs or factor clamped");
  }
  return out;
}

Metrics assess(const SurrogateModel& m, const std::vector<TrainingRow>& holdout) {
  if (holdout.size() < 2) throw ConfigError("assessment needs at least two rows");
  Vector target(static_cast<Index>(holdout.size())), fitted(static_cast<Index>(holdout.size()));
  std::size_t clamped = 0;
  for (std::size_t i = 0; i < holdout.size(); ++i) {
    const Prediction p = predict(m, *holdout[i].ph, holdout[i].manual);
    clamped += p.clamped;
    target[static_cast<Index>(i)] = holdout[i].premium;
    fitted[static_cast<Index>(i)] = p.premium;
  }
  if (clamped) diagnostic(std::to_string(clamped) + " holdout row(s) outside the trained range");
  return compute_metrics(target, fitted);
}

// ---- serialization

namespace {

constexpr const char* kFormat = "credsurr-surrogate";
constexpr int kVersion = 1;

// infinite bounds travel as null
Json bound_json(Scalar v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Scalar bound_from_json(const Json& j, Scalar sign) {
  if (j.is_null()) return sign * std::numeric_limits<Scalar>::infinity();
  if (!j.is_number()) throw ConfigError("g range bounds must be numbers or null");
  return j.get<Scalar>();
}

Json metrics_json(const Metrics& m) {
  Json j;
  j["R2"] = m.R2;
  j["ME"] = m.ME;
  j["MAE"] = m.MAE;
  j["MAPE"] = m.MAPE;
  j["MSE"] = m.MSE;
  j["n"] = m.n;
  return j;
}

Metrics metrics_from(const Json& j) {
  Metrics m;
  m.R2 = require<Scalar>(j, "R2");
  m.ME = require<Scalar>(j, "ME");
  m.MAE = require<Scalar>(j, "MAE");
  m.MAPE = require<Scalar>(j, "MAPE");
  m.MSE = require<Scalar>(j, "MSE");
  m.n = require<Index>(j, "n");
  return m;
}

std::vector<Scalar> to_std(const Vector& v) { return std::vector<Scalar>(v.data(), v.data() + v.size()); }
Vector to_eigen(const std::vector<Scalar>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

}  // namespace

std::string surrogate_to_json(const SurrogateModel& m) {
  Json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["seed"] = m.seed;
  j["model"] = to_json(m.model);
  j["attr_names"] = m.attr_names;
  j["theta_bounds"] = {m.theta_lo, m.theta_hi};

  Json g;
  g["form"] = std::string(gform_name(m.g.form));
  g["n_inputs"] = m.g.n_inputs;
  g["input_names"] = g_input_names(m.model.D());
  g["lambda"] = m.g.lambda;
  g["smoothing"] = m.g.smoothing;
  g["smoothing_interaction"] = m.g.smoothing_interaction;
  g["range"] = {bound_json(m.g.range_lo), bound_json(m.g.range_hi)};
  Json bases = Json::array();
  for (std::size_t k = 0; k < m.g.bases.size(); ++k) {
    Json b;
    b["input"] = m.g.used[k];
    b["degree"] = m.g.bases[k].degree;
    b["lo"] = m.g.bases[k].lo;
    b["hi"] = m.g.bases[k].hi;
    b["knots"] = m.g.bases[k].knots;
    bases.push_back(b);
  }
  g["bases"] = bases;
  g["coefficients"] = to_std(m.g.coef);
  j["g"] = g;

  Json h;
  h["features"] = m.h.features;
  const auto& fp = m.h.forest.params;
  h["n_trees"] = fp.n_trees;
  h["max_depth"] = fp.max_depth;
  h["min_leaf"] = fp.min_leaf;
  h["mtry"] = fp.mtry;
  h["seed"] = fp.seed;
  h["n_features"] = m.h.forest.n_features;
  Json trees = Json::array();
  for (const auto& t : m.h.forest.trees) {
    Json tj;
    tj["feature"] = t.feature;
    tj["threshold"] = t.threshold;
    tj["left"] = t.left;
    tj["right"] = t.right;
    tj["value"] = t.value;
    trees.push_back(tj);
  }
  h["trees"] = trees;
  j["h"] = h;

  Json fit;
  fit["iterations_used"] = m.iterations_used;
  fit["converged"] = m.converged;
  fit["mse_history"] = m.mse_history;
  fit["train"] = metrics_json(m.train);
  if (m.test) fit["test"] = metrics_json(*m.test);
  fit["train_ids"] = m.train_ids;
  fit["theta_train"] = to_std(m.theta_train);
  j["fit"] = fit;
  return j.dump(1) + "\n";
}

SurrogateModel surrogate_from_json(std::string_view text) {
  const Json j = parse_json(text, "surrogate model");
  try {
    if (get_or<std::string>(j, "format", "") != kFormat) throw ConfigError("not a surrogate model file");
    if (require<int>(j, "version") != kVersion) throw ConfigError("unsupported surrogate model version");
    SurrogateModel m;
    m.seed = require<std::uint64_t>(j, "seed");
    m.model = model_from_json(j.at("model"));
    m.attr_names = require<std::vector<std::string>>(j, "attr_names");
    const auto tb = require<std::vector<Scalar>>(j, "theta_bounds");
    if (tb.size() != 2) throw ConfigError("theta_bounds needs two values");
    m.theta_lo = tb[0];
    m.theta_hi = tb[1];

    const Json& g = j.at("g");
    m.g.form = parse_gform(require<std::string>(g, "form"));
    m.g.n_inputs = require<int>(g, "n_inputs");
    m.g.lambda = require<Scalar>(g, "lambda");
    m.g.smoothing = require<Scalar>(g, "smoothing");
    m.g.smoothing_interaction = require<Scalar>(g, "smoothing_interaction");
    const Json& range = g.at("range");
    if (!range.is_array() || range.size() != 2) throw ConfigError("g range must hold two bounds");
    m.g.range_lo = bound_from_json(range[0], -1.0);
    m.g.range_hi = bound_from_json(range[1], 1.0);
    for (const auto& b : g.at("bases")) {
      BSplineBasis basis;
      basis.degree = require<int>(b, "degree");
      basis.lo = require<Scalar>(b, "lo");
      basis.hi = require<Scalar>(b, "hi");
      basis.knots = require<std::vector<Scalar>>(b, "knots");
      m.g.used.push_back(require<int>(b, "input"));
      m.g.bases.push_back(std::move(basis));
    }
    m.g.coef = to_eigen(require<std::vector<Scalar>>(g, "coefficients"));

    const Json& h = j.at("h");
    m.h.features = require<std::vector<std::string>>(h, "features");
    auto& fp = m.h.forest.params;
    fp.n_trees = require<int>(h, "n_trees");
    fp.max_depth = require<int>(h, "max_depth");
    fp.min_leaf = require<int>(h, "min_leaf");
    fp.mtry = require<int>(h, "mtry");
    fp.seed = require<std::uint64_t>(h, "seed");
    m.h.forest.n_features = require<int>(h, "n_features");
    for (const auto& tj : h.at("trees")) {
      Tree t;
      t.feature = require<std::vector<int>>(tj, "feature");
      t.threshold = require<std::vector<Scalar>>(tj, "threshold");
      t.left = require<std::vector<int>>(tj, "left");
      t.right = require<std::vector<int>>(tj, "right");
      t.value = require<std::vector<Scalar>>(tj, "value");
      m.h.forest.trees.push_back(std::move(t));
    }

    const Json& fit = j.at("fit");
    m.iterations_used = require<int>(fit, "iterations_used");
    m.converged = require<bool>(fit, "converged");
    m.mse_history = require<std::vector<Scalar>>(fit, "mse_history");
    m.train = metrics_from(fit.at("train"));
    if (fit.contains("test")) m.test = metrics_from(fit.at("test"));
    m.train_ids = require<std::vector<std::string>>(fit, "train_ids");
    m.theta_train = to_eigen(require<std::vector<Scalar>>(fit, "theta_train"));
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed surrogate model: ") + e.what());
  }
}

void save_surrogate(const SurrogateModel& m, const std::string& path) { write_file_atomic(path, surrogate_to_json(m)); }

SurrogateModel load_surrogate(const std::string& path) { return surrogate_from_json(read_file(path)); }

}  // namespace credsurr
