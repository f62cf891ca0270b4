#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "atn/biomarkers.hpp"

namespace atn::survival {

struct SurvivalRecord {
  std::string patient_id;
  double time_days = 0.0;
  bool event = false;
  double age = 0.0;
  double gender = 0.0;  // 1 = female
  double smoker = 0.0;  // 1 = ever smoked
  std::optional<double> fvc;
  std::optional<double> dlco;
  std::optional<double> biomarker;
};

std::vector<SurvivalRecord> read_records(const std::filesystem::path& csv);
void write_records(const std::filesystem::path& csv, const std::vector<SurvivalRecord>& records);

/// Design for one model fit. Rows are subjects.
struct CoxData {
  std::vector<double> time;
  std::vector<bool> event;
  Eigen::MatrixXd x;
  std::vector<std::string> names;
};

/// Build the design for the named covariates (age, gender, smoker, fvc,
/// dlco, biomarker), dropping records with a missing value.
CoxData design(const std::vector<SurvivalRecord>& records, const std::vector<std::string>& names,
               int* dropped = nullptr);

enum class Ties { Efron, Breslow };

struct CoxOptions {
  int max_iter = 100;
  double grad_tol = 1e-8;
  int max_halvings = 20;
  Ties ties = Ties::Efron;
  /// |beta| * sd(x) beyond this is treated as a monotone likelihood.
  double separation_limit = 25.0;
};

struct CoxFit {
  std::vector<std::string> names;
  Eigen::VectorXd beta;
  Eigen::VectorXd se;
  Eigen::VectorXd z;
  Eigen::VectorXd p_value;
  double concordance = 0.0;
  double loglik = 0.0;
  double loglik_null = 0.0;
  int iterations = 0;
  bool converged = false;
  int n = 0;
  int n_events = 0;
};

struct PartialLikelihood {
  double loglik = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd information;  // negative Hessian
};

/// Cox partial log-likelihood with its derivatives at beta.
PartialLikelihood partial_likelihood(const CoxData& data, const Eigen::VectorXd& beta,
                                     Ties ties = Ties::Efron);

CoxFit cox_fit(const CoxData& data, const CoxOptions& options = {});

/// Harrell's C: over pairs where the shorter time is an event, concordant
/// when that subject has the higher risk; tied risks count one half.
double concordance_index(std::span<const double> risk, std::span<const double> time,
                         const std::vector<bool>& event);

/// Two-sided Wald p-value for a z statistic.
double wald_p(double z);

/// Exponential-baseline cohort with one N(0,1) covariate and independent
/// exponential censoring tuned to `censor_fraction` in expectation.
CoxData simulate_exponential(int n, double beta, double censor_fraction, std::uint64_t seed);

inline constexpr double kSignificance = 0.05;

struct TableRow {
  std::string biomarker;
  std::string method;
  std::string model;  // univariable | dlco | fvc
  int n = 0;
  double c_index = 0.0;
  double p_value = 0.0;  // of the biomarker coefficient
  CoxFit fit;
  std::string error;  // non-empty when the fit failed
};

/// Univariable and the two multivariable models (with DLco or FVC) for every
/// (biomarker, method) pair present in `biomarkers` at the given aggregation.
std::vector<TableRow> analyze(const std::vector<SurvivalRecord>& clinical,
                              const std::vector<biomarkers::PatientBiomarker>& biomarkers,
                              biomarkers::Aggregation aggregation,
                              const CoxOptions& options = {});

/// Wide table: biomarker,method,univariable_c,univariable_p,dlco_c,dlco_p,fvc_c,fvc_p.
void write_table(const std::filesystem::path& csv, const std::vector<TableRow>& rows);
/// Long table with every coefficient of every fit.
void write_coefficients(const std::filesystem::path& csv, const std::vector<TableRow>& rows);

}  // namespace atn::survival
