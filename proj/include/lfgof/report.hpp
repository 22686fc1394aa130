#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lfgof/error.hpp"
#include "lfgof/harness.hpp"
#include "lfgof/io.hpp"
#include "lfgof/prior_gof.hpp"

namespace lfgof {

// Serialization of GoF reports and experiment tables. Numbers are written in
// shortest round-trip form so that reruns produce byte-identical files.

inline nlohmann::ordered_json to_json(const GofReport& r) {
  nlohmann::ordered_json j;
  j["scenario"] = r.scenario;
  j["score"] = r.score_spec.label();
  j["n_ref"] = r.n_ref;
  j["n_calib"] = r.n_calib;
  j["exceedances"] = r.exceedances;
  j["p_hat"] = r.p_hat;
  if (r.ci) {
    j["ci"] = {{"low", r.ci->low},
               {"high", r.ci->high},
               {"method", to_string(r.ci->method)},
               {"level", r.ci->level},
               {"degenerate", r.ci->degenerate}};
    if (r.ci->median) j["ci"]["median"] = *r.ci->median;
  } else {
    j["ci"] = nullptr;
  }
  j["seed"] = r.seed;
  if (r.holdout) {
    j["method"] = to_string(r.holdout->method);
    j["n_post"] = r.holdout->n_post;
    j["epsilon_implied"] = r.holdout->epsilon_implied;
    j["n_ref_total"] = r.holdout->n_ref_total;
  }
  if (r.bh_adjusted) j["bh_adjusted"] = *r.bh_adjusted;
  j["warnings"] = r.warnings;
  return j;
}

/// Problems found in a serialized report; empty when it is well formed.
inline std::vector<std::string> report_schema_errors(const nlohmann::ordered_json& j) {
  std::vector<std::string> errors;
  if (!j.is_object()) return {"report is not an object"};
  auto need = [&](const char* key, auto&& check, const char* what) {
    if (!j.contains(key)) {
      errors.push_back(std::string("missing '") + key + "'");
    } else if (!check(j.at(key))) {
      errors.push_back(std::string("'") + key + "' is not " + what);
    }
  };
  auto is_string = [](const auto& v) { return v.is_string(); };
  auto is_count = [](const auto& v) { return v.is_number_unsigned(); };
  auto is_unit = [](const auto& v) { return v.is_number() && v.template get<double>() >= 0.0 && v.template get<double>() <= 1.0; };
  need("scenario", is_string, "a string");
  need("score", is_string, "a string");
  need("n_ref", is_count, "a count");
  need("n_calib", is_count, "a count");
  need("exceedances", is_count, "a count");
  need("p_hat", is_unit, "a probability");
  need("seed", is_count, "an unsigned integer");
  need("warnings", [](const auto& v) { return v.is_array(); }, "an array");
  if (j.contains("score") && j.at("score").is_string()) {
    try {
      ScoreSpec::parse(j.at("score").template get<std::string>());
    } catch (const Error&) {
      errors.push_back("'score' is not a known score label");
    }
  }
  if (j.contains("ci") && !j.at("ci").is_null()) {
    const auto& ci = j.at("ci");
    if (!ci.is_object() || !ci.contains("low") || !ci.contains("high") || !ci.contains("method") ||
        !ci.contains("level")) {
      errors.push_back("'ci' lacks low/high/method/level");
    } else if (!is_unit(ci.at("low")) || !is_unit(ci.at("high")) ||
               ci.at("low").template get<double>() > ci.at("high").template get<double>()) {
      errors.push_back("'ci' bounds are not an interval inside [0, 1]");
    }
  }
  if (j.contains("method")) {
    need("n_post", is_count, "a count");
    need("epsilon_implied", [](const auto& v) { return v.is_number() && v.template get<double>() >= 0.0; },
         "a non-negative number");
    need("n_ref_total", is_count, "a count");
  }
  if (j.contains("bh_adjusted")) need("bh_adjusted", is_unit, "a probability");
  if (j.contains("n_calib") && j.contains("exceedances") && is_count(j.at("n_calib")) && is_count(j.at("exceedances")) &&
      j.at("exceedances").template get<std::size_t>() > j.at("n_calib").template get<std::size_t>())
    errors.push_back("'exceedances' exceeds 'n_calib'");
  return errors;
}

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string number_text(double v) {
  std::ostringstream os;
  write_double(os, v);
  return os.str();
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

}  // namespace detail

inline const char* report_csv_header() {
  return "scenario,score,n_ref,n_calib,exceedances,p_hat,ci_low,ci_high,ci_method,ci_level,ci_degenerate,ci_median,seed,"
         "method,n_post,epsilon_implied,n_ref_total,bh_adjusted,warnings";
}

inline void write_report_csv_row(std::ostream& out, const GofReport& r) {
  using detail::number_text;
  std::string warnings;
  for (std::size_t i = 0; i < r.warnings.size(); ++i) warnings += (i ? "; " : "") + r.warnings[i];
  out << detail::csv_field(r.scenario) << ',' << detail::csv_field(r.score_spec.label()) << ',' << r.n_ref << ','
      << r.n_calib << ',' << r.exceedances << ',' << number_text(r.p_hat) << ',';
  if (r.ci) {
    out << number_text(r.ci->low) << ',' << number_text(r.ci->high) << ',' << to_string(r.ci->method) << ','
        << number_text(r.ci->level) << ',' << (r.ci->degenerate ? "true" : "false") << ','
        << (r.ci->median ? number_text(*r.ci->median) : std::string());
  } else {
    out << ",,,,,";
  }
  out << ',' << r.seed << ',';
  if (r.holdout) {
    out << to_string(r.holdout->method) << ',' << r.holdout->n_post << ',' << number_text(r.holdout->epsilon_implied)
        << ',' << r.holdout->n_ref_total;
  } else {
    out << ",,,";
  }
  out << ',' << (r.bh_adjusted ? number_text(*r.bh_adjusted) : std::string()) << ',' << detail::csv_field(warnings)
      << '\n';
}

inline void write_reports_csv(const std::filesystem::path& path, const std::vector<GofReport>& reports) {
  auto out = detail::open_output(path);
  out << report_csv_header() << '\n';
  for (const auto& r : reports) write_report_csv_row(out, r);
}

inline void write_reports_json(const std::filesystem::path& path, const std::vector<GofReport>& reports) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : reports) arr.push_back(to_json(r));
  auto out = detail::open_output(path);
  out << arr.dump(2) << '\n';
}

inline void write_power_csv(const std::filesystem::path& path, const std::vector<PowerRow>& rows) {
  using detail::number_text;
  auto out = detail::open_output(path);
  out << "setting,test,budget,n_ref,n_calib,score,method,n_post,alpha,n_test,power,power_counting\n";
  for (const auto& r : rows)
    out << detail::csv_field(r.setting) << ',' << r.test << ',' << r.budget << ',' << r.n_ref << ',' << r.n_calib
        << ',' << detail::csv_field(r.score) << ',' << r.method << ',' << r.n_post << ',' << number_text(r.alpha)
        << ',' << r.n_test << ',' << number_text(r.power) << ',' << number_text(r.power_counting) << '\n';
}

/// Summary (one row per configuration) and long-form p-values with their ECDF.
inline void write_calibration_csv(const std::filesystem::path& summary_path, const std::filesystem::path& pvalue_path,
                                  const std::vector<CalibrationResult>& results) {
  using detail::number_text;
  auto summary = detail::open_output(summary_path);
  summary << "setting,test,budget,score,method,n_post,n_test,ks,max_quantile_deviation\n";
  auto pv = detail::open_output(pvalue_path);
  pv << "setting,test,budget,score,method,n_post,p_value,ecdf\n";
  for (const auto& r : results) {
    const std::string key = detail::csv_field(r.setting) + ',' + r.test + ',' + std::to_string(r.budget) + ',' +
                            detail::csv_field(r.score) + ',' + r.method + ',' + std::to_string(r.n_post);
    summary << key << ',' << r.pvalues.size() << ',' << number_text(r.ks) << ','
            << number_text(r.max_quantile_deviation) << '\n';
    std::vector<double> sorted = r.pvalues;
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      if (i + 1 < sorted.size() && sorted[i + 1] == sorted[i]) continue;  // one row per distinct value
      pv << key << ',' << number_text(sorted[i]) << ',' << number_text(static_cast<double>(i + 1) / n) << '\n';
    }
  }
}

}  // namespace lfgof
