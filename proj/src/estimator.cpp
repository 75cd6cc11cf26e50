#include "mrtsim/estimator.hpp"

#include <Eigen/Dense>
#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace mrt {

namespace {

std::optional<double> covariate_value(const AnalysisRow& row, const std::string& name) {
  if (name == "day_index") return row.day_index;
  if (name == "slot_index") return row.slot_index;
  if (name == "day_of_week") return row.day_of_week;
  if (name == "is_weekend") return row.is_weekend ? 1.0 : 0.0;
  if (name == "location_home") return row.location == LocationCategory::kHome ? 1.0 : 0.0;
  if (name == "location_work") return row.location == LocationCategory::kWork ? 1.0 : 0.0;
  if (name == "location_other") return row.location == LocationCategory::kOther ? 1.0 : 0.0;
  const auto it = row.daily.find(name);
  if (it != row.daily.end()) {
    if (!it->second) return std::nullopt;
    return *it->second;
  }
  throw EstimationError("unknown covariate '" + name + "'");
}

}  // namespace

int EffectEstimate::effect_index(const std::string& name) const {
  const std::string wanted = name.empty() ? "effect:(A-p)" : "effect:(A-p)x" + name;
  for (size_t i = 0; i < names.size(); ++i) {
    if (names[i] == wanted) return static_cast<int>(i);
  }
  throw EstimationError("no effect term '" + wanted + "'");
}

Json EffectEstimate::to_json() const {
  Json terms = Json::array();
  for (size_t i = 0; i < names.size(); ++i) {
    terms.push_back(Json{{"name", names[i]},
                         {"beta", beta[i]},
                         {"se", se[i]},
                         {"t", t_stat[i]},
                         {"p_value", p_value[i]}});
  }
  Json exc = Json::object();
  for (const auto& [k, v] : excluded) exc[k] = v;
  return Json{{"terms", std::move(terms)},
              {"rows_used", rows_used},
              {"clusters", clusters},
              {"excluded", std::move(exc)}};
}

std::string EffectEstimate::to_text() const {
  std::ostringstream out;
  out << "term                                  beta          se           t      p\n";
  for (size_t i = 0; i < names.size(); ++i) {
    char line[160];
    std::snprintf(line, sizeof(line), "%-34s %10.4f  %10.4f  %8.3f  %6.4f\n", names[i].c_str(), beta[i],
                  se[i], t_stat[i], p_value[i]);
    out << line;
  }
  out << "rows used: " << rows_used << "  clusters: " << clusters << "\n";
  for (const auto& [k, v] : excluded) out << "excluded (" << k << "): " << v << "\n";
  return out.str();
}

EffectEstimate estimate(const std::vector<AnalysisRow>& rows, const AnalysisSpec& spec) {
  std::vector<const AnalysisRow*> used;
  std::map<std::string, int> excluded;
  std::set<int> participants;
  for (const auto& row : rows) {
    if (row.component_id != spec.component_id) continue;
    if (row.codes.contains(MissingnessCode::kTravelExcluded)) {
      ++excluded["travel_excluded"];
      continue;
    }
    if (!row.available || !row.treatment) {
      ++excluded["unavailable"];
      continue;
    }
    if (!row.proximal_outcome) {
      ++excluded["no_outcome"];
      continue;
    }
    bool missing_cov = false;
    for (const auto& lists : {&spec.controls, &spec.moderators}) {
      for (const auto& name : *lists) {
        if (!covariate_value(row, name)) missing_cov = true;
      }
    }
    if (missing_cov) {
      ++excluded["missing_covariate"];
      continue;
    }
    used.push_back(&row);
    participants.insert(row.participant_id);
  }

  if (participants.size() < 2) {
    throw EstimationError("need at least 2 participants with usable rows, have " +
                          std::to_string(participants.size()));
  }

  std::vector<std::string> names;
  names.push_back("intercept");
  for (const auto& c : spec.controls) names.push_back("ctrl:" + c);
  names.push_back("effect:(A-p)");
  for (const auto& m : spec.moderators) names.push_back("effect:(A-p)x" + m);

  const int n = static_cast<int>(used.size());
  const int k = static_cast<int>(names.size());
  Eigen::MatrixXd X(n, k);
  Eigen::VectorXd y(n);
  Eigen::VectorXi cluster(n);
  for (int i = 0; i < n; ++i) {
    const AnalysisRow& row = *used[i];
    const double centered = static_cast<double>(*row.treatment) - row.probability.value();
    int col = 0;
    X(i, col++) = 1.0;
    for (const auto& c : spec.controls) X(i, col++) = *covariate_value(row, c);
    X(i, col++) = centered;
    for (const auto& m : spec.moderators) X(i, col++) = centered * *covariate_value(row, m);
    y(i) = static_cast<double>(*row.proximal_outcome);
    cluster(i) = row.participant_id;
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(1e-10);
  if (qr.rank() < k) {
    // Name the columns the pivoting pushed past the numerical rank.
    const auto perm = qr.colsPermutation().indices();
    std::string collinear;
    for (int i = qr.rank(); i < k; ++i) {
      if (!collinear.empty()) collinear += ", ";
      collinear += names[perm(i)];
    }
    throw EstimationError("design matrix rank deficient; collinear columns: " + collinear);
  }
  const Eigen::VectorXd beta = qr.solve(y);
  const Eigen::VectorXd resid = y - X * beta;

  // Participant-clustered sandwich (CR1 small-sample scaling).
  const Eigen::MatrixXd bread = (X.transpose() * X).inverse();
  std::map<int, Eigen::VectorXd> cluster_scores;
  for (int i = 0; i < n; ++i) {
    auto [it, inserted] = cluster_scores.try_emplace(cluster(i), Eigen::VectorXd::Zero(k));
    it->second += X.row(i).transpose() * resid(i);
  }
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(k, k);
  for (const auto& [cid, s] : cluster_scores) meat += s * s.transpose();
  const double g = static_cast<double>(cluster_scores.size());
  const double c = (g / (g - 1.0)) * ((n - 1.0) / std::max(1.0, static_cast<double>(n - k)));
  const Eigen::MatrixXd vcov = c * bread * meat * bread;

  EffectEstimate est;
  est.names = std::move(names);
  est.rows_used = n;
  est.clusters = static_cast<int>(cluster_scores.size());
  est.excluded = std::move(excluded);
  const boost::math::students_t tdist(g - 1.0);
  for (int i = 0; i < k; ++i) {
    est.beta.push_back(beta(i));
    const double se = std::sqrt(std::max(0.0, vcov(i, i)));
    est.se.push_back(se);
    const double t = se > 0 ? beta(i) / se : 0.0;
    est.t_stat.push_back(t);
    est.p_value.push_back(2.0 * boost::math::cdf(boost::math::complement(tdist, std::abs(t))));
  }
  return est;
}

EffectEstimate moderation_report(const std::vector<AnalysisRow>& rows, const AnalysisSpec& spec) {
  return estimate(rows, spec);
}

Json SensitivityComparison::to_json() const {
  Json deltas = Json::array();
  for (size_t i = 0; i < coefficient_delta.size(); ++i) {
    deltas.push_back(Json{{"name", zero_imputed.names[i]}, {"delta", coefficient_delta[i]}});
  }
  return Json{{"zero_imputed", zero_imputed.to_json()},
              {"redundant_imputed", redundant_imputed.to_json()},
              {"coefficient_delta", std::move(deltas)},
              {"differing_rows", differing_rows}};
}

SensitivityComparison sensitivity_compare(const std::vector<AnalysisRow>& rows_zero,
                                          const std::vector<AnalysisRow>& rows_redundant,
                                          const AnalysisSpec& spec) {
  if (rows_zero.size() != rows_redundant.size()) {
    throw EstimationError("imputation variants must cover the same decision points");
  }
  SensitivityComparison cmp;
  cmp.zero_imputed = estimate(rows_zero, spec);
  cmp.redundant_imputed = estimate(rows_redundant, spec);
  for (size_t i = 0; i < cmp.zero_imputed.beta.size(); ++i) {
    cmp.coefficient_delta.push_back(cmp.redundant_imputed.beta[i] - cmp.zero_imputed.beta[i]);
  }
  for (size_t i = 0; i < rows_zero.size(); ++i) {
    if (rows_zero[i].proximal_outcome != rows_redundant[i].proximal_outcome ||
        rows_zero[i].outcome_source != rows_redundant[i].outcome_source) {
      ++cmp.differing_rows;
    }
  }
  return cmp;
}

std::pair<std::int64_t, std::int64_t> binomial_interval(std::int64_t n, double p, double alpha) {
  const boost::math::binomial_distribution<double> dist(static_cast<double>(n), p);
  const auto smallest_k_with_cdf_at_least = [&](double target) -> std::int64_t {
    std::int64_t lo = 0, hi = n;
    while (lo < hi) {
      const std::int64_t mid = lo + (hi - lo) / 2;
      if (boost::math::cdf(dist, static_cast<double>(mid)) >= target) {
        hi = mid;
      } else {
        lo = mid + 1;
      }
    }
    return lo;
  };
  return {smallest_k_with_cdf_at_least(alpha / 2.0), smallest_k_with_cdf_at_least(1.0 - alpha / 2.0)};
}

}  // namespace mrt
