#include "credsurr/balance.hpp"

#include "credsurr/error.hpp"
#include "credsurr/util.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>
#include <boost/random/uniform_01.hpp>

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

namespace credsurr {

namespace {

constexpr Scalar kSnap = 1e-12;

bool fractional(Scalar v) { return v > kSnap && v < 1.0 - kSnap; }

Scalar snap(Scalar v) {
  if (v <= kSnap) return 0.0;
  if (v >= 1.0 - kSnap) return 1.0;
  return v;
}

// HT matrix A = X / pi, conditioned: z-scored when a constant column is
// present (centering stays inside the span then), otherwise scaled only.
// Dependent columns are dropped.
Matrix conditioned_ht_matrix(const Matrix& X, const Vector& pi) {
  Matrix A = X.array().colwise() / pi.array();
  const Index N = A.rows(), p = A.cols();
  if (p == 0) return A;
  bool has_const = false;
  for (Index j = 0; j < p; ++j) {
    const Scalar lo = A.col(j).minCoeff(), hi = A.col(j).maxCoeff();
    if (hi - lo <= 1e-12 * std::max<Scalar>(1.0, std::abs(hi))) has_const = true;
  }
  for (Index j = 0; j < p; ++j) {
    const Scalar mean = A.col(j).mean();
    const Scalar lo = A.col(j).minCoeff(), hi = A.col(j).maxCoeff();
    const bool is_const = hi - lo <= 1e-12 * std::max<Scalar>(1.0, std::abs(hi));
    if (has_const && !is_const) {
      A.col(j).array() -= mean;
      const Scalar sd = std::sqrt(A.col(j).squaredNorm() / static_cast<Scalar>(N));
      if (sd > 0.0) A.col(j) /= sd;
    } else {
      const Scalar rms = std::sqrt(A.col(j).squaredNorm() / static_cast<Scalar>(N));
      if (rms > 0.0) A.col(j) /= rms;
    }
  }
  Eigen::ColPivHouseholderQR<Matrix> qr(A);
  qr.setThreshold(1e-10);
  const Index rank = qr.rank();
  if (rank == p) return A;
  std::vector<Index> keep;
  for (Index r = 0; r < rank; ++r) keep.push_back(qr.colsPermutation().indices()[r]);
  std::sort(keep.begin(), keep.end());
  diagnostic("balancing matrix has rank " + std::to_string(rank) + " < " + std::to_string(p) + "; dropped " +
             std::to_string(p - rank) + " dependent column(s)");
  Matrix B(N, rank);
  for (Index r = 0; r < rank; ++r) B.col(r) = A.col(keep[static_cast<std::size_t>(r)]);
  return B;
}

// Kernel direction of the p x q block, or empty when it has full column rank.
bool kernel_direction(const Matrix& B, Vector& u) {
  const Index q = B.cols();
  if (B.rows() == 0) {
    u = Vector::Zero(q);
    u[0] = 1.0;
    return true;
  }
  Eigen::JacobiSVD<Matrix> svd(B, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const Scalar smax = sv.size() ? sv[0] : 0.0;
  Index rank = 0;
  for (Index i = 0; i < sv.size(); ++i) {
    if (sv[i] > 1e-10 * std::max<Scalar>(smax, 1e-300)) ++rank;
  }
  if (rank >= q) return false;
  u = svd.matrixV().col(q - 1);
  return true;
}

// One flight over the units listed in `order`, mutating pi in place.
void fly(const Matrix& A, Vector& pi, const std::vector<Index>& order, Rng& rng) {
  const Index p = A.cols();
  boost::random::uniform_01<Scalar> unif;
  std::deque<Index> queue;
  for (Index i : order) {
    if (fractional(pi[i])) queue.push_back(i);
  }
  std::vector<Index> active;
  Matrix B;
  Vector u;
  while (true) {
    active.erase(std::remove_if(active.begin(), active.end(), [&](Index i) { return !fractional(pi[i]); }),
                 active.end());
    while (static_cast<Index>(active.size()) < p + 1 && !queue.empty()) {
      active.push_back(queue.front());
      queue.pop_front();
    }
    const Index q = static_cast<Index>(active.size());
    if (q == 0) break;
    B.resize(p, q);
    for (Index c = 0; c < q; ++c) B.col(c) = A.row(active[static_cast<std::size_t>(c)]).transpose();
    if (!kernel_direction(B, u)) break;
    Scalar l1 = std::numeric_limits<Scalar>::infinity(), l2 = l1;
    for (Index c = 0; c < q; ++c) {
      const Scalar v = pi[active[static_cast<std::size_t>(c)]], uc = u[c];
      if (uc > 0.0) {
        l1 = std::min(l1, (1.0 - v) / uc);
        l2 = std::min(l2, v / uc);
      } else if (uc < 0.0) {
        l1 = std::min(l1, -v / uc);
        l2 = std::min(l2, (v - 1.0) / uc);
      }
    }
    const Scalar step = unif(rng) < l2 / (l1 + l2) ? l1 : -l2;
    for (Index c = 0; c < q; ++c) {
      const Index i = active[static_cast<std::size_t>(c)];
      pi[i] = snap(pi[i] + step * u[c]);
    }
  }
}

std::vector<Index> permutation(Index N, Rng& rng) {
  std::vector<Index> order(static_cast<std::size_t>(N));
  std::iota(order.begin(), order.end(), Index{0});
  // Fisher-Yates with our own draws so the order is portable across stdlibs
  for (Index i = N - 1; i > 0; --i) {
    const Index j = static_cast<Index>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  return order;
}

}  // namespace

void validate(const BalanceProblem& problem) {
  const Index N = problem.pi.size();
  if (problem.X.rows() != N) throw ConfigError("balancing matrix and inclusion probabilities differ in length");
  if (!problem.X.allFinite()) throw DomainError("balancing variables must be finite");
  for (Index i = 0; i < N; ++i) {
    if (!(problem.pi[i] > 0.0 && problem.pi[i] <= 1.0)) {
      throw DomainError("inclusion probabilities must lie in (0, 1]");
    }
  }
  if (problem.X.cols() >= N && N > 0) throw ConfigError("need fewer balancing variables than units");
}

Vector flight_phase(const BalanceProblem& problem) {
  validate(problem);
  Vector pi = problem.pi.unaryExpr([](Scalar v) { return snap(v); });
  const Matrix A = conditioned_ht_matrix(problem.X, problem.pi);
  Rng rng(problem.seed);
  fly(A, pi, permutation(pi.size(), rng), rng);
  return pi;
}

SampleResult landing_phase(const BalanceProblem& problem, const Vector& pi_star) {
  validate(problem);
  Vector pi = pi_star.unaryExpr([](Scalar v) { return snap(v); });
  // separate stream from the flight
  Rng rng(problem.seed ^ 0x9e3779b97f4a7c15ULL);
  Matrix A = conditioned_ht_matrix(problem.X, problem.pi);
  boost::random::uniform_01<Scalar> unif;
  while (true) {
    std::vector<Index> rest;
    for (Index i = 0; i < pi.size(); ++i) {
      if (fractional(pi[i])) rest.push_back(i);
    }
    if (rest.empty()) break;
    if (A.cols() == 0) {
      for (Index i : rest) pi[i] = unif(rng) < pi[i] ? 1.0 : 0.0;
      break;
    }
    A.conservativeResize(Eigen::NoChange, A.cols() - 1);
    std::vector<Index> order = rest;
    for (std::size_t k = order.size(); k > 1; --k) std::swap(order[k - 1], order[rng() % k]);
    fly(A, pi, order, rng);
  }
  SampleResult r;
  r.indicator = pi.unaryExpr([](Scalar v) { return v > 0.5 ? 1 : 0; });
  r.achieved_size = r.indicator.sum();
  r.balance_gaps = ht_gaps(problem.X, problem.pi, r.indicator);
  return r;
}

SampleResult cube_sample(const BalanceProblem& problem) { return landing_phase(problem, flight_phase(problem)); }

Vector ht_gaps(const Matrix& X, const Vector& pi, const VectorI& indicator) {
  Vector gaps(X.cols());
  for (Index j = 0; j < X.cols(); ++j) {
    Scalar total = X.col(j).sum(), ht = 0.0;
    for (Index i = 0; i < X.rows(); ++i) {
      if (indicator[i]) ht += X(i, j) / pi[i];
    }
    gaps[j] = total != 0.0 ? (ht - total) / std::abs(total) : ht - total;
  }
  return gaps;
}

std::vector<std::string> default_balance_vars(int D) {
  std::vector<std::string> v;
  for (int d = 1; d <= D; ++d) v.push_back("claims_" + std::to_string(d));
  for (int d = 1; d <= D; ++d) v.push_back("mu_" + std::to_string(d));
  return v;
}

Matrix balance_matrix(const Portfolio& p, const std::vector<std::string>& vars) {
  const Index N = static_cast<Index>(p.size());
  Matrix X(N, static_cast<Index>(vars.size()));
  for (std::size_t j = 0; j < vars.size(); ++j) {
    const std::string& v = vars[j];
    auto dim_of = [&](std::size_t prefix) {
      int d = 0;
      try {
        d = std::stoi(v.substr(prefix));
      } catch (...) {
        throw ConfigError("unknown balancing variable '" + v + "'");
      }
      if (d < 1 || d > p.D) throw ConfigError("balancing variable '" + v + "' refers to a missing dimension");
      return d - 1;
    };
    for (Index i = 0; i < N; ++i) {
      const Policyholder& ph = p.members[static_cast<std::size_t>(i)];
      Scalar x = 0.0;
      if (v.rfind("claims_", 0) == 0) {
        const int d = dim_of(7);
        x = ph.n_per_dim[d] > 0 ? observed_claims(ph)[d] / ph.n_per_dim[d] : 0.0;
      } else if (v.rfind("mu_", 0) == 0) {
        x = ph.mu[dim_of(3)];
      } else if (v.rfind("n_", 0) == 0) {
        x = ph.n_per_dim[dim_of(2)];
      } else if (v.rfind("attr_", 0) == 0) {
        const std::string name = v.substr(5);
        if (std::find(p.attr_names.begin(), p.attr_names.end(), name) == p.attr_names.end()) {
          throw ConfigError("unknown balancing variable '" + v + "'");
        }
        x = numeric_attr(p, ph, name);
        if (!std::isfinite(x)) throw ConfigError("attribute '" + name + "' is not numeric for '" + ph.id + "'");
      } else {
        throw ConfigError("unknown balancing variable '" + v + "'");
      }
      X(i, static_cast<Index>(j)) = x;
    }
  }
  return X;
}

Subportfolio select_subportfolio(const Portfolio& p, Scalar fraction, const std::vector<std::string>& balance_vars,
                                 std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("fraction must lie in (0, 1]");
  const Index N = static_cast<Index>(p.size());
  Subportfolio out;
  out.columns.push_back("pi");
  for (const auto& v : balance_vars) out.columns.push_back(v);
  const Matrix V = balance_matrix(p, balance_vars);
  BalanceProblem prob;
  prob.pi = Vector::Constant(N, fraction);
  prob.X.resize(N, V.cols() + 1);
  prob.X.col(0) = prob.pi;
  prob.X.rightCols(V.cols()) = V;
  prob.seed = seed;
  if (N == 0) return out;
  if (prob.X.cols() >= N) {
    // too few units to balance on every variable; keep only pi
    diagnostic("portfolio too small for the balancing variables; balancing on size only");
    prob.X.conservativeResize(Eigen::NoChange, 1);
  }
  out.result = cube_sample(prob);
  if (prob.X.cols() == V.cols() + 1) {
    out.result.balance_gaps = ht_gaps(prob.X, prob.pi, out.result.indicator);
  }
  for (Index i = 0; i < N; ++i) {
    if (out.result.indicator[i]) {
      out.members.push_back(static_cast<std::size_t>(i));
      out.ids.push_back(p.members[static_cast<std::size_t>(i)].id);
    }
  }
  return out;
}

}  // namespace credsurr
