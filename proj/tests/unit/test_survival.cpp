#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "atn/errors.hpp"
#include "atn/survival.hpp"
#include "doctest.h"

namespace fs = std::filesystem;
using namespace atn;
using namespace atn::survival;

namespace {

// Pair loop over unordered pairs; comparable when the earlier time is an event.
double brute_concordance(const std::vector<double>& risk, const std::vector<double>& time,
                         const std::vector<bool>& event) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < risk.size(); ++i)
    for (std::size_t j = i + 1; j < risk.size(); ++j) {
      std::size_t a = i, b = j;  // a dies first
      if (time[j] < time[i]) std::swap(a, b);
      if (time[a] == time[b] || !event[a]) continue;
      den += 1.0;
      num += risk[a] > risk[b] ? 1.0 : risk[a] == risk[b] ? 0.5 : 0.0;
    }
  return num / den;
}

// Partial log-likelihood written out for one covariate and untied times.
double explicit_loglik(const std::vector<double>& x, const std::vector<double>& t,
                       const std::vector<bool>& e, double beta) {
  double ll = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!e[i]) continue;
    double risk = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j)
      if (t[j] >= t[i]) risk += std::exp(beta * x[j]);
    ll += beta * x[i] - std::log(risk);
  }
  return ll;
}

CoxData one_covariate(std::vector<double> x, std::vector<double> t, std::vector<bool> e) {
  CoxData d;
  d.time = std::move(t);
  d.event = std::move(e);
  d.names = {"x"};
  d.x.resize(static_cast<Eigen::Index>(x.size()), 1);
  for (std::size_t i = 0; i < x.size(); ++i) d.x(static_cast<Eigen::Index>(i), 0) = x[i];
  return d;
}

}  // namespace

TEST_CASE("perfect and reversed predictors") {
  std::vector<double> time, risk, neg;
  std::vector<bool> event;
  for (int i = 0; i < 30; ++i) {
    time.push_back(10.0 + i);
    risk.push_back(-i * 0.5);
    neg.push_back(i * 0.5);
    event.push_back(true);
  }
  CHECK(concordance_index(risk, time, event) == 1.0);
  CHECK(concordance_index(neg, time, event) == 0.0);
}

TEST_CASE("concordance agrees with the pair-count oracle") {
  std::mt19937_64 gen(7);
  std::uniform_int_distribution<int> day(1, 40);
  std::uniform_int_distribution<int> level(0, 9);
  std::bernoulli_distribution ev(0.7);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 20 + 9 * trial;
    std::vector<double> risk, time;
    std::vector<bool> event;
    for (int i = 0; i < n; ++i) {
      time.push_back(day(gen));     // many tied times
      risk.push_back(level(gen));   // many tied risks
      event.push_back(ev(gen));
    }
    CHECK(concordance_index(risk, time, event) == brute_concordance(risk, time, event));
  }
}

TEST_CASE("random scores give C near one half") {
  std::mt19937_64 gen(11);
  std::normal_distribution<double> z;
  std::exponential_distribution<double> ex(1.0);
  double sum = 0.0;
  for (int seed = 0; seed < 50; ++seed) {
    std::vector<double> risk, time;
    std::vector<bool> event(200, true);
    for (int i = 0; i < 200; ++i) {
      risk.push_back(z(gen));
      time.push_back(ex(gen));
    }
    const double c = concordance_index(risk, time, event);
    // One draw has sd ~0.024; the bound below is four of them.
    CHECK(std::abs(c - 0.5) <= 0.1);
    sum += c;
  }
  CHECK(std::abs(sum / 50 - 0.5) <= 0.05);
}

TEST_CASE("no comparable pairs is an error") {
  const std::vector<double> r{1, 2, 3}, t{1, 2, 3};
  CHECK_THROWS_AS(concordance_index(r, t, {false, false, false}), DataError);
}

TEST_CASE("coefficient recovery on simulated cohorts") {
  std::vector<double> betas;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const CoxFit fit = cox_fit(simulate_exponential(500, 0.7, 0.2, seed));
    betas.push_back(fit.beta(0));
  }
  std::sort(betas.begin(), betas.end());
  const double median = 0.5 * (betas[9] + betas[10]);
  CHECK(median >= 0.55);
  CHECK(median <= 0.85);
}

TEST_CASE("four records: grid search oracle") {
  const std::vector<double> x{2.5, 2.0, -1.0, 1.2}, t{3.0, 1.0, 4.0, 2.0};
  const std::vector<bool> e{true, true, true, false};
  double best = -10.0, best_ll = -1e300;
  for (double b = -10.0; b <= 10.0; b += 1e-4) {
    const double ll = explicit_loglik(x, t, e, b);
    if (ll > best_ll) {
      best_ll = ll;
      best = b;
    }
  }
  const CoxFit fit = cox_fit(one_covariate(x, t, e));
  CHECK(std::abs(fit.beta(0) - best) < 1e-3);
  CHECK(std::abs(fit.loglik - best_ll) < 1e-6);
}

TEST_CASE("gradient vanishes at the solution") {
  const CoxData d = simulate_exponential(300, 0.5, 0.3, 3);
  const CoxFit fit = cox_fit(d);
  REQUIRE(fit.converged);
  // Centring does not move the maximiser.
  const PartialLikelihood pl = partial_likelihood(d, fit.beta);
  CHECK(pl.gradient.lpNorm<Eigen::Infinity>() < 1e-6);
  const std::vector<double> lp(d.x.col(0).data(), d.x.col(0).data() + d.x.rows());
  std::vector<double> risk;
  for (double v : lp) risk.push_back(v * fit.beta(0));
  CHECK(fit.concordance == concordance_index(risk, d.time, d.event));
}

TEST_CASE("rescaling a covariate rescales its coefficient") {
  const CoxData d = simulate_exponential(200, 0.8, 0.2, 5);
  CoxData s = d;
  s.x *= 2.5;
  s.x.array() += 7.0;
  const CoxFit a = cox_fit(d);
  const CoxFit b = cox_fit(s);
  CHECK(std::abs(b.beta(0) - a.beta(0) / 2.5) < 1e-6);
  CHECK(std::abs(b.concordance - a.concordance) < 1e-6);
  CHECK(std::abs(b.loglik - a.loglik) < 1e-6);
}

TEST_CASE("degenerate designs") {
  CHECK_THROWS_AS(cox_fit(one_covariate({1, 1, 1, 1}, {1, 2, 3, 4}, {true, true, true, true})),
                  DataError);
  // Higher x always dies first: the likelihood has no maximum.
  try {
    cox_fit(one_covariate({4, 3, 2, 1, 0}, {1, 2, 3, 4, 5}, {true, true, true, true, true}));
    FAIL("expected a non-convergence error");
  } catch (const NumericalError& err) {
    CHECK(std::string(err.what()).find("'x'") != std::string::npos);
  }
  CHECK_THROWS_AS(cox_fit(one_covariate({1, 2, 3}, {1, 2, 3}, {true, false, false})), DataError);
}

TEST_CASE("Wald p-values") {
  CHECK(wald_p(0.0) == doctest::Approx(1.0));
  CHECK(wald_p(1.959963984540054) == doctest::Approx(0.05).epsilon(1e-9));
  CHECK(wald_p(-1.959963984540054) == doctest::Approx(0.05).epsilon(1e-9));
}

TEST_CASE("records round trip with missing values") {
  const fs::path p = fs::temp_directory_path() / "atn_test_records.csv";
  std::vector<SurvivalRecord> recs(2);
  recs[0] = {"P000", 300.0, true, 61.5, 1.0, 0.0, 72.0, std::nullopt, 0.12};
  recs[1] = {"P001", 845.0, false, 70.0, 0.0, 1.0, std::nullopt, 40.5, std::nullopt};
  write_records(p, recs);
  const auto back = read_records(p);
  REQUIRE(back.size() == 2);
  CHECK(back[0].event);
  CHECK_FALSE(back[0].dlco.has_value());
  CHECK(*back[1].dlco == 40.5);
  CHECK_FALSE(back[1].biomarker.has_value());
  int dropped = 0;
  const CoxData d = design(back, {"age", "fvc"}, &dropped);
  CHECK(dropped == 1);
  CHECK(d.x.rows() == 1);
  fs::remove(p);
}

TEST_CASE("analysis table has three models per biomarker and method") {
  std::vector<SurvivalRecord> clinical;
  std::vector<biomarkers::PatientBiomarker> values;
  std::mt19937_64 gen(9);
  std::normal_distribution<double> z;
  std::exponential_distribution<double> ex(1.0);
  for (int i = 0; i < 80; ++i) {
    SurvivalRecord r;
    r.patient_id = "P" + std::to_string(i);
    const double b = z(gen);
    r.time_days = 1.0 + 500.0 * ex(gen) / std::exp(0.8 * b);
    r.event = i % 5 != 0;
    r.age = 65 + 8 * z(gen);
    r.gender = i % 2;
    r.smoker = i % 3 == 0;
    r.fvc = 75 + 10 * z(gen);
    r.dlco = 45 + 10 * z(gen);
    clinical.push_back(r);
    for (const char* m : {"fwhm", "cnr"})
      values.push_back({r.patient_id, "volume", m, biomarkers::Aggregation::Mean, b + 0.1 * z(gen), 3});
  }
  const auto rows = analyze(clinical, values, biomarkers::Aggregation::Mean);
  CHECK(rows.size() == 6);
  for (const auto& row : rows) {
    CHECK(row.error.empty());
    CHECK(row.c_index > 0.5);
  }
}
