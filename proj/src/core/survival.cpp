#include "atn/survival.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "atn/dataset.hpp"
#include "atn/errors.hpp"
#include "atn/random.hpp"

namespace atn::survival {

namespace fs = std::filesystem;

namespace {

std::optional<double> covariate(const SurvivalRecord& r, const std::string& name) {
  if (name == "age") return r.age;
  if (name == "gender") return r.gender;
  if (name == "smoker") return r.smoker;
  if (name == "fvc") return r.fvc;
  if (name == "dlco") return r.dlco;
  if (name == "biomarker") return r.biomarker;
  throw ConfigError("unknown covariate '" + name + "'");
}

std::string opt_str(const std::optional<double>& v) {
  return v ? io::format_double(*v) : std::string();
}

}  // namespace

std::vector<SurvivalRecord> read_records(const fs::path& csv) {
  const io::CsvTable t = io::read_csv(csv);
  const std::size_t c_id = t.column("patient_id"), c_t = t.column("time_days"),
                    c_e = t.column("event"), c_age = t.column("age"), c_g = t.column("gender"),
                    c_s = t.column("smoker");
  const auto c_fvc = t.find_column("fvc");
  const auto c_dlco = t.find_column("dlco");
  const auto c_bio = t.find_column("biomarker");
  std::vector<SurvivalRecord> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string ctx = csv.string() + " row " + std::to_string(r + 1);
    SurvivalRecord rec;
    rec.patient_id = row[c_id];
    rec.time_days = io::parse_double(row[c_t], ctx);
    if (!(rec.time_days > 0.0)) throw DataError(ctx + ": time_days must be positive");
    rec.event = io::parse_bool(row[c_e], ctx);
    rec.age = io::parse_double(row[c_age], ctx);
    rec.gender = io::parse_double(row[c_g], ctx);
    rec.smoker = io::parse_double(row[c_s], ctx);
    if (c_fvc) rec.fvc = io::parse_optional_double(row[*c_fvc], ctx);
    if (c_dlco) rec.dlco = io::parse_optional_double(row[*c_dlco], ctx);
    if (c_bio) rec.biomarker = io::parse_optional_double(row[*c_bio], ctx);
    out.push_back(rec);
  }
  return out;
}

void write_records(const fs::path& csv, const std::vector<SurvivalRecord>& records) {
  io::CsvTable t;
  t.header = {"patient_id", "time_days", "event", "age", "gender",
              "smoker",     "fvc",       "dlco",  "biomarker"};
  for (const auto& r : records) {
    t.rows.push_back({r.patient_id, io::format_double(r.time_days), r.event ? "1" : "0",
                      io::format_double(r.age), io::format_double(r.gender),
                      io::format_double(r.smoker), opt_str(r.fvc), opt_str(r.dlco),
                      opt_str(r.biomarker)});
  }
  io::write_csv(csv, t);
}

CoxData design(const std::vector<SurvivalRecord>& records, const std::vector<std::string>& names,
               int* dropped) {
  std::vector<const SurvivalRecord*> kept;
  std::vector<std::vector<double>> rows;
  for (const auto& r : records) {
    std::vector<double> row;
    bool ok = true;
    for (const auto& n : names) {
      const auto v = covariate(r, n);
      if (!v || !std::isfinite(*v)) {
        ok = false;
        break;
      }
      row.push_back(*v);
    }
    if (!ok) continue;
    kept.push_back(&r);
    rows.push_back(std::move(row));
  }
  if (dropped) *dropped = static_cast<int>(records.size() - kept.size());
  CoxData d;
  d.names = names;
  d.x.resize(static_cast<Eigen::Index>(kept.size()), static_cast<Eigen::Index>(names.size()));
  for (std::size_t i = 0; i < kept.size(); ++i) {
    d.time.push_back(kept[i]->time_days);
    d.event.push_back(kept[i]->event);
    for (std::size_t j = 0; j < names.size(); ++j)
      d.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return d;
}

PartialLikelihood partial_likelihood(const CoxData& data, const Eigen::VectorXd& beta, Ties ties) {
  const Eigen::Index n = data.x.rows();
  const Eigen::Index p = data.x.cols();
  Eigen::VectorXd eta = data.x * beta;
  const double shift = n > 0 ? eta.maxCoeff() : 0.0;
  Eigen::VectorXd w = (eta.array() - shift).exp();

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return data.time[a] > data.time[b]; });

  PartialLikelihood out;
  out.gradient = Eigen::VectorXd::Zero(p);
  out.information = Eigen::MatrixXd::Zero(p, p);
  double s0 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);

  std::size_t i = 0;
  while (i < order.size()) {
    // All subjects sharing this time enter the risk set together.
    std::size_t j = i;
    const double t = data.time[order[i]];
    double d0 = 0.0;
    Eigen::VectorXd d1 = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd d2 = Eigen::MatrixXd::Zero(p, p);
    int deaths = 0;
    while (j < order.size() && data.time[order[j]] == t) {
      const Eigen::Index k = order[j];
      const Eigen::VectorXd xk = data.x.row(k).transpose();
      s0 += w(k);
      s1 += w(k) * xk;
      s2 += w(k) * xk * xk.transpose();
      if (data.event[k]) {
        ++deaths;
        d0 += w(k);
        d1 += w(k) * xk;
        d2 += w(k) * xk * xk.transpose();
        out.loglik += eta(k) - shift;
        out.gradient += xk;
      }
      ++j;
    }
    for (int l = 0; l < deaths; ++l) {
      const double f = ties == Ties::Efron ? static_cast<double>(l) / deaths : 0.0;
      const double den = s0 - f * d0;
      const Eigen::VectorXd m = (s1 - f * d1) / den;
      out.loglik -= std::log(den);
      out.gradient -= m;
      out.information += (s2 - f * d2) / den - m * m.transpose();
    }
    i = j;
  }
  return out;
}

double wald_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

double concordance_index(std::span<const double> risk, std::span<const double> time,
                         const std::vector<bool>& event) {
  const std::size_t n = risk.size();
  if (time.size() != n || event.size() != n)
    throw DataError("concordance inputs differ in length");
  double concordant = 0.0;
  std::uint64_t comparable = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!event[i]) continue;
    for (std::size_t j = 0; j < n; ++j) {
      if (!(time[i] < time[j])) continue;
      ++comparable;
      if (risk[i] > risk[j]) {
        concordant += 1.0;
      } else if (risk[i] == risk[j]) {
        concordant += 0.5;
      }
    }
  }
  if (comparable == 0) throw DataError("concordance index undefined: no comparable pairs");
  return concordant / static_cast<double>(comparable);
}

CoxFit cox_fit(const CoxData& data, const CoxOptions& options) {
  const Eigen::Index n = data.x.rows();
  const Eigen::Index p = data.x.cols();
  if (static_cast<Eigen::Index>(data.time.size()) != n ||
      static_cast<Eigen::Index>(data.event.size()) != n)
    throw DataError("Cox design: time/event/covariate row counts differ");
  if (static_cast<Eigen::Index>(data.names.size()) != p)
    throw DataError("Cox design: covariate names do not match columns");
  if (p == 0) throw ConfigError("Cox model needs at least one covariate");
  for (double t : data.time)
    if (!(t > 0.0) || !std::isfinite(t)) throw DataError("survival times must be positive");
  const int events = static_cast<int>(std::count(data.event.begin(), data.event.end(), true));
  if (events < 2) throw DataError("Cox model needs at least 2 events, got " + std::to_string(events));
  if (!data.x.allFinite()) throw DataError("Cox design contains non-finite covariates");

  CoxData centred = data;
  Eigen::VectorXd sd(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double mean = data.x.col(j).mean();
    centred.x.col(j).array() -= mean;
    sd(j) = std::sqrt(centred.x.col(j).squaredNorm() / static_cast<double>(n));
    if (!(sd(j) > 0.0))
      throw DataError("covariate '" + data.names[j] + "' is constant across all records");
  }

  CoxFit fit;
  fit.names = data.names;
  fit.n = static_cast<int>(n);
  fit.n_events = events;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  PartialLikelihood pl = partial_likelihood(centred, beta, options.ties);
  fit.loglik_null = pl.loglik;

  auto worst = [&]() {
    Eigen::Index k = 0;
    (beta.array().abs() * sd.array()).maxCoeff(&k);
    return data.names[k];
  };

  for (int it = 0; it < options.max_iter; ++it) {
    if (pl.gradient.lpNorm<Eigen::Infinity>() < options.grad_tol) {
      fit.converged = true;
      break;
    }
    const Eigen::LLT<Eigen::MatrixXd> llt(pl.information);
    if (llt.info() != Eigen::Success)
      throw NumericalError("singular information matrix in Cox fit (check covariate '" + worst() +
                           "')");
    Eigen::VectorXd step = llt.solve(pl.gradient);
    bool improved = false;
    for (int h = 0; h <= options.max_halvings; ++h) {
      const Eigen::VectorXd candidate = beta + step;
      const PartialLikelihood next = partial_likelihood(centred, candidate, options.ties);
      if (std::isfinite(next.loglik) && next.loglik >= pl.loglik - 1e-12 * std::abs(pl.loglik)) {
        beta = candidate;
        pl = next;
        improved = true;
        break;
      }
      step *= 0.5;
    }
    fit.iterations = it + 1;
    if ((beta.array().abs() * sd.array()).maxCoeff() > options.separation_limit) {
      throw NumericalError("monotone likelihood: coefficient of '" + worst() +
                           "' diverges (perfect separation)");
    }
    if (!improved) break;
  }
  if (!fit.converged && pl.gradient.lpNorm<Eigen::Infinity>() < options.grad_tol)
    fit.converged = true;
  if (!fit.converged) {
    throw NumericalError("Cox fit did not converge in " + std::to_string(options.max_iter) +
                         " iterations (largest effect: '" + worst() + "')");
  }

  const Eigen::LLT<Eigen::MatrixXd> llt(pl.information);
  if (llt.info() != Eigen::Success) throw NumericalError("singular information matrix at solution");
  const Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(p, p));
  fit.beta = beta;
  fit.se = cov.diagonal().cwiseSqrt();
  fit.z = beta.cwiseQuotient(fit.se);
  fit.p_value.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) fit.p_value(j) = wald_p(fit.z(j));
  fit.loglik = pl.loglik;

  const Eigen::VectorXd lp = data.x * beta;
  fit.concordance = concordance_index(std::span<const double>(lp.data(), lp.size()), data.time,
                                      data.event);
  return fit;
}

CoxData simulate_exponential(int n, double beta, double censor_fraction, std::uint64_t seed) {
  if (n < 2) throw ConfigError("simulated cohort needs n >= 2");
  if (!(censor_fraction >= 0.0 && censor_fraction < 1.0))
    throw ConfigError("censor_fraction must lie in [0, 1)");
  Rng rng(seed);
  CoxData d;
  d.names = {"x"};
  d.x.resize(n, 1);
  std::vector<double> rate(n);
  for (int i = 0; i < n; ++i) {
    d.x(i, 0) = rng.normal();
    rate[i] = std::exp(beta * d.x(i, 0));
  }
  // Expected censored fraction mean(c / (c + rate_i)) is increasing in c.
  double censor_rate = 0.0;
  if (censor_fraction > 0.0) {
    double lo = 0.0, hi = 1.0;
    auto frac = [&](double c) {
      double acc = 0.0;
      for (double r : rate) acc += c / (c + r);
      return acc / n;
    };
    while (frac(hi) < censor_fraction) hi *= 2.0;
    for (int k = 0; k < 200; ++k) {
      const double mid = 0.5 * (lo + hi);
      (frac(mid) < censor_fraction ? lo : hi) = mid;
    }
    censor_rate = 0.5 * (lo + hi);
  }
  for (int i = 0; i < n; ++i) {
    const double t = std::exponential_distribution<double>(rate[i])(rng.engine());
    double c = std::numeric_limits<double>::infinity();
    if (censor_rate > 0.0) c = std::exponential_distribution<double>(censor_rate)(rng.engine());
    d.time.push_back(std::max(std::min(t, c), 1e-12));
    d.event.push_back(t <= c);
  }
  return d;
}

std::vector<TableRow> analyze(const std::vector<SurvivalRecord>& clinical,
                              const std::vector<biomarkers::PatientBiomarker>& values,
                              biomarkers::Aggregation aggregation, const CoxOptions& options) {
  // (biomarker, method) -> patient -> value, in first-seen order.
  std::vector<std::pair<std::string, std::string>> keys;
  std::map<std::pair<std::string, std::string>, std::map<std::string, double>> table;
  for (const auto& b : values) {
    if (b.aggregation != aggregation) continue;
    const auto key = std::make_pair(b.biomarker, b.method);
    if (!table.count(key)) keys.push_back(key);
    table[key][b.patient_id] = b.value;
  }
  const std::vector<std::string> biomarker_order{"volume", "intertapering", "intratapering"};
  std::stable_sort(keys.begin(), keys.end(), [&](const auto& a, const auto& b) {
    auto rank = [&](const std::string& s) {
      return std::find(biomarker_order.begin(), biomarker_order.end(), s) - biomarker_order.begin();
    };
    return rank(a.first) < rank(b.first);
  });

  const std::vector<std::pair<std::string, std::vector<std::string>>> models{
      {"univariable", {"biomarker"}},
      {"dlco", {"biomarker", "age", "gender", "smoker", "dlco"}},
      {"fvc", {"biomarker", "age", "gender", "smoker", "fvc"}},
  };

  std::vector<TableRow> rows;
  for (const auto& key : keys) {
    std::vector<SurvivalRecord> records = clinical;
    for (auto& r : records) {
      const auto it = table[key].find(r.patient_id);
      r.biomarker = it == table[key].end() ? std::nullopt : std::optional<double>(it->second);
    }
    for (const auto& [model, names] : models) {
      TableRow row;
      row.biomarker = key.first;
      row.method = key.second;
      row.model = model;
      const CoxData d = design(records, names);
      row.n = static_cast<int>(d.time.size());
      try {
        row.fit = cox_fit(d, options);
        row.c_index = row.fit.concordance;
        row.p_value = row.fit.p_value(0);
      } catch (const Error& e) {
        row.c_index = std::numeric_limits<double>::quiet_NaN();
        row.p_value = std::numeric_limits<double>::quiet_NaN();
        row.error = e.what();
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

void write_table(const fs::path& csv, const std::vector<TableRow>& rows) {
  io::CsvTable t;
  t.header = {"biomarker",     "method", "univariable_n", "univariable_c", "univariable_p",
              "dlco_n",        "dlco_c", "dlco_p",        "fvc_n",         "fvc_c",
              "fvc_p"};
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  auto num = [](double v) { return std::isfinite(v) ? io::format_double(v) : std::string("NA"); };
  for (const auto& r : rows) {
    const auto key = std::make_pair(r.biomarker, r.method);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, t.rows.size()).first;
      std::vector<std::string> blank(t.header.size(), "NA");
      blank[0] = r.biomarker;
      blank[1] = r.method;
      t.rows.push_back(blank);
    }
    const std::size_t off = r.model == "univariable" ? 2 : r.model == "dlco" ? 5 : 8;
    auto& out = t.rows[it->second];
    out[off] = std::to_string(r.n);
    out[off + 1] = num(r.c_index);
    out[off + 2] = num(r.p_value);
  }
  io::write_csv(csv, t);
}

void write_coefficients(const fs::path& csv, const std::vector<TableRow>& rows) {
  io::CsvTable t;
  t.header = {"biomarker", "method", "model", "covariate", "beta", "se",
              "z",         "p_value", "significant", "c_index", "n", "events"};
  for (const auto& r : rows) {
    if (!r.error.empty()) continue;
    for (std::size_t j = 0; j < r.fit.names.size(); ++j) {
      const auto k = static_cast<Eigen::Index>(j);
      t.rows.push_back({r.biomarker, r.method, r.model, r.fit.names[j],
                        io::format_double(r.fit.beta(k)), io::format_double(r.fit.se(k)),
                        io::format_double(r.fit.z(k)), io::format_double(r.fit.p_value(k)),
                        r.fit.p_value(k) < kSignificance ? "1" : "0",
                        io::format_double(r.fit.concordance), std::to_string(r.fit.n),
                        std::to_string(r.fit.n_events)});
    }
  }
  io::write_csv(csv, t);
}

}  // namespace atn::survival
