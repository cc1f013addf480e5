#include "credsurr/portfolio.hpp"

#include "credsurr/error.hpp"
#include "credsurr/util.hpp"

#include <cmath>
#include <limits>
#include <unordered_map>

namespace credsurr {

std::string_view censor_name(Censor c) {
  switch (c) {
    case Censor::Exact:
      return "exact";
    case Censor::RightCensored:
      return "rcens";
    case Censor::Missing:
      return "missing";
  }
  return "missing";
}

Censor parse_censor(std::string_view s) {
  if (s == "exact") return Censor::Exact;
  if (s == "rcens") return Censor::RightCensored;
  if (s == "missing") return Censor::Missing;
  throw ParseError("censor code must be exact, rcens or missing; got '" + std::string(s) + "'");
}

bool operator==(const Policyholder& a, const Policyholder& b) {
  return a.id == b.id && a.mu.size() == b.mu.size() && a.mu == b.mu && a.history == b.history &&
         a.n_per_dim.size() == b.n_per_dim.size() && a.n_per_dim == b.n_per_dim && a.attrs == b.attrs;
}

Policyholder make_policyholder(std::string id, Vector mu, std::vector<std::string> attrs) {
  Policyholder ph;
  ph.id = std::move(id);
  ph.n_per_dim = VectorI::Zero(mu.size());
  ph.mu = std::move(mu);
  ph.attrs = std::move(attrs);
  return ph;
}

void append_observation_inplace(Policyholder& ph, const Observation& obs) {
  const int D = ph.D();
  if (obs.dim < 1 || obs.dim > D) {
    throw DomainError("policyholder '" + ph.id + "': dimension " + std::to_string(obs.dim) + " outside [1, " +
                      std::to_string(D) + "]");
  }
  if (!(obs.exposure > 0.0 && obs.exposure <= 1.0)) {
    throw DomainError("policyholder '" + ph.id + "': exposure must lie in (0, 1]");
  }
  if (obs.censor != Censor::Missing && !std::isfinite(obs.value)) {
    throw DomainError("policyholder '" + ph.id + "': non-finite value");
  }
  const int maxp = ph.max_period();
  if (obs.period == maxp) {
    for (auto it = ph.history.rbegin(); it != ph.history.rend() && it->period == maxp; ++it) {
      if (it->dim == obs.dim) {
        throw SequencingError("policyholder '" + ph.id + "': duplicate observation for period " +
                              std::to_string(obs.period) + ", dimension " + std::to_string(obs.dim));
      }
    }
  } else if (obs.period != maxp + 1) {
    throw SequencingError("policyholder '" + ph.id + "': period " + std::to_string(obs.period) +
                          " does not follow period " + std::to_string(maxp));
  }
  // keep (period, dim) order inside the current period
  auto pos = ph.history.end();
  while (pos != ph.history.begin() && std::prev(pos)->period == obs.period && std::prev(pos)->dim > obs.dim) --pos;
  Observation o = obs;
  if (o.censor == Censor::Missing) o.value = 0.0;
  ph.history.insert(pos, o);
  if (o.censor != Censor::Missing) ph.n_per_dim[obs.dim - 1] += 1;
}

Policyholder append_observation(const Policyholder& ph, const Observation& obs) {
  Policyholder out = ph;
  append_observation_inplace(out, obs);
  return out;
}

VectorI count_observed(const Policyholder& ph) {
  VectorI n = VectorI::Zero(ph.D());
  for (const auto& o : ph.history) {
    if (o.censor != Censor::Missing) n[o.dim - 1] += 1;
  }
  return n;
}

namespace {

void check_value_support(const Policyholder& ph, const Observation& o, const ModelSpec& model) {
  if (o.censor == Censor::Missing) return;
  const Distribution& base = model.dims[static_cast<std::size_t>(o.dim - 1)];
  const Scalar y = o.value;
  bool ok = y >= 0.0;
  if (is_discrete(base.family)) ok = ok && y == std::floor(y);
  if (!is_discrete(base.family) && o.censor == Censor::Exact) ok = ok && y > 0.0;
  if (!ok) {
    throw DomainError("policyholder '" + ph.id + "', period " + std::to_string(o.period) + ", dimension " +
                      std::to_string(o.dim) + ": value " + format_double(y) + " outside the support of " +
                      std::string(family_name(base.family)));
  }
}

}  // namespace

void validate(const Portfolio& p) {
  std::unordered_map<std::string, int> seen;
  for (const auto& ph : p.members) {
    if (!seen.emplace(ph.id, 1).second) throw DomainError("duplicate policyholder id '" + ph.id + "'");
    if (ph.D() != p.D) throw DomainError("policyholder '" + ph.id + "' has the wrong number of means");
    for (Index d = 0; d < ph.mu.size(); ++d) {
      if (!(ph.mu[d] > 0.0) || !std::isfinite(ph.mu[d])) {
        throw DomainError("policyholder '" + ph.id + "': mu must be strictly positive");
      }
    }
    if (ph.attrs.size() != p.attr_names.size()) throw DomainError("policyholder '" + ph.id + "': attribute count");
    if (count_observed(ph) != ph.n_per_dim) throw DomainError("policyholder '" + ph.id + "': stale n_per_dim");
  }
}

void validate(const Portfolio& p, const ModelSpec& model) {
  if (p.D != model.D()) {
    throw DomainError("portfolio has " + std::to_string(p.D) + " dimensions, model has " +
                      std::to_string(model.D()));
  }
  validate(p);
  for (const auto& ph : p.members) {
    for (const auto& o : ph.history) check_value_support(ph, o, model);
  }
}

std::string portfolio_to_csv(const Portfolio& p) {
  std::vector<std::string> header = {"id", "period", "dim", "value", "exposure", "censor"};
  for (int d = 1; d <= p.D; ++d) header.push_back("mu_" + std::to_string(d));
  for (const auto& a : p.attr_names) header.push_back("attr_" + a);
  std::string out = csv_join(header) + "\n";
  std::vector<std::string> row;
  for (const auto& ph : p.members) {
    if (ph.history.empty()) {
      throw DomainError("policyholder '" + ph.id + "' has no rows; record unobserved periods as missing");
    }
    for (const auto& o : ph.history) {
      row.clear();
      row.push_back(ph.id);
      row.push_back(std::to_string(o.period));
      row.push_back(std::to_string(o.dim));
      row.push_back(o.censor == Censor::Missing ? std::string() : format_double(o.value));
      row.push_back(format_double(o.exposure));
      row.emplace_back(censor_name(o.censor));
      for (Index d = 0; d < ph.mu.size(); ++d) row.push_back(format_double(ph.mu[d]));
      for (const auto& a : ph.attrs) row.push_back(a);
      out += csv_join(row);
      out += '\n';
    }
  }
  return out;
}

Portfolio portfolio_from_csv(std::string_view text, const std::string& source, const ModelSpec* model) {
  const CsvTable t = parse_csv(text, source);
  const char* fixed[] = {"id", "period", "dim", "value", "exposure", "censor"};
  for (std::size_t c = 0; c < 6; ++c) {
    if (t.header.size() <= c || t.header[c] != fixed[c]) {
      throw ParseError(source + ": header column " + std::to_string(c + 1) + " must be '" + fixed[c] + "'");
    }
  }
  Portfolio p;
  std::size_t c = 6;
  int D = 0;
  while (c < t.header.size() && t.header[c] == "mu_" + std::to_string(D + 1)) {
    ++D;
    ++c;
  }
  if (D == 0) throw ParseError(source + ": header needs mu_1..mu_D columns");
  for (; c < t.header.size(); ++c) {
    if (t.header[c].rfind("attr_", 0) != 0) {
      throw ParseError(source + ": unexpected header column '" + t.header[c] + "'");
    }
    p.attr_names.push_back(t.header[c].substr(5));
  }
  p.D = D;
  if (model && model->D() != D) {
    throw ParseError(source + ": file has " + std::to_string(D) + " mu columns, model has " +
                     std::to_string(model->D()) + " dimensions");
  }

  std::unordered_map<std::string, std::size_t> index;
  std::vector<std::vector<Observation>> pending;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string where = source + ": line " + std::to_string(t.lines[r]);
    auto num = [&](std::size_t col) {
      try {
        return parse_double(row[col]);
      } catch (const ParseError&) {
        throw ParseError(where + ", column '" + t.header[col] + "': not a number '" + row[col] + "'");
      }
    };
    auto integer = [&](std::size_t col) {
      const double v = num(col);
      if (v != std::floor(v) || std::abs(v) > 1e9) {
        throw ParseError(where + ", column '" + t.header[col] + "': expected an integer");
      }
      return static_cast<int>(v);
    };
    if (row[0].empty()) throw ParseError(where + ", column 'id': empty id");
    Observation o;
    o.period = integer(1);
    o.dim = integer(2);
    try {
      o.censor = parse_censor(row[5]);
    } catch (const ParseError& e) {
      throw ParseError(where + ", column 'censor': " + e.what());
    }
    if (o.censor == Censor::Missing) {
      if (!row[3].empty()) throw ParseError(where + ", column 'value': must be empty for missing");
      o.value = 0.0;
    } else {
      if (row[3].empty()) throw ParseError(where + ", column 'value': empty for a non-missing observation");
      o.value = num(3);
    }
    o.exposure = num(4);
    if (o.period < 1) throw ParseError(where + ", column 'period': must be >= 1");
    if (o.dim < 1 || o.dim > D) throw ParseError(where + ", column 'dim': outside [1, " + std::to_string(D) + "]");
    Vector mu(D);
    for (int d = 0; d < D; ++d) mu[d] = num(6 + static_cast<std::size_t>(d));
    std::vector<std::string> attrs(row.begin() + 6 + D, row.end());

    auto [it, fresh] = index.emplace(row[0], p.members.size());
    if (fresh) {
      p.members.push_back(make_policyholder(row[0], mu, attrs));
      pending.emplace_back();
    } else {
      const Policyholder& ph = p.members[it->second];
      if (ph.mu != mu || ph.attrs != attrs) {
        throw ParseError(where + ": mu/attr values differ from earlier rows of id '" + row[0] + "'");
      }
    }
    pending[it->second].push_back(o);
  }
  for (std::size_t i = 0; i < p.members.size(); ++i) {
    auto& obs = pending[i];
    std::stable_sort(obs.begin(), obs.end(),
                     [](const Observation& a, const Observation& b) { return a.period < b.period; });
    for (const auto& o : obs) append_observation_inplace(p.members[i], o);
  }
  if (model) {
    validate(p, *model);
  } else {
    validate(p);
  }
  return p;
}

Portfolio load_portfolio(const std::string& path, const ModelSpec& model) {
  return portfolio_from_csv(read_file(path), path, &model);
}

Portfolio load_portfolio(const std::string& path) { return portfolio_from_csv(read_file(path), path, nullptr); }

void save_portfolio(const Portfolio& p, const std::string& path) { write_file_atomic(path, portfolio_to_csv(p)); }

Vector observed_claims(const Policyholder& ph) {
  Vector s = Vector::Zero(ph.D());
  for (const auto& o : ph.history) {
    if (o.censor != Censor::Missing) s[o.dim - 1] += o.value;
  }
  return s;
}

Vector expected_claims(const Policyholder& ph) {
  Vector s = Vector::Zero(ph.D());
  for (const auto& o : ph.history) {
    if (o.censor != Censor::Missing) s[o.dim - 1] += o.exposure * ph.mu[o.dim - 1];
  }
  return s;
}

Vector standardized_frequency(const Policyholder& ph) {
  const Vector o = observed_claims(ph), e = expected_claims(ph);
  Vector out(o.size());
  for (Index d = 0; d < o.size(); ++d) out[d] = e[d] > 0.0 ? o[d] / e[d] : std::numeric_limits<Scalar>::quiet_NaN();
  return out;
}

Scalar numeric_attr(const Portfolio& p, const Policyholder& ph, std::string_view name) {
  for (std::size_t a = 0; a < p.attr_names.size(); ++a) {
    if (p.attr_names[a] == name) {
      try {
        return parse_double(ph.attrs[a]);
      } catch (const ParseError&) {
        return std::numeric_limits<Scalar>::quiet_NaN();
      }
    }
  }
  return std::numeric_limits<Scalar>::quiet_NaN();
}

}  // namespace credsurr
