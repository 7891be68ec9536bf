#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>

#include <fmt/core.h>

#include "vf/eval.h"
#include "vf/util.h"

namespace vf {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::vector<MushraRecord> parse_mushra_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  bool header = false;
  std::vector<MushraRecord> out;
  std::set<std::tuple<std::string, std::string, std::string>> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv(line);
    if (!header) {
      if (cells != std::vector<std::string>{"listener_id", "system_id", "utterance_id", "score"})
        throw DataError(fmt::format("line {}: expected header listener_id,system_id,utterance_id,score", line_no));
      header = true;
      continue;
    }
    if (cells.size() != 4) throw DataError(fmt::format("line {}: expected 4 fields, got {}", line_no, cells.size()));
    MushraRecord r{cells[0], cells[1], cells[2], 0.0};
    if (r.listener_id.empty() || r.system_id.empty() || r.utterance_id.empty())
      throw DataError(fmt::format("line {}: empty identifier", line_no));
    std::size_t used = 0;
    try {
      r.score = std::stod(cells[3], &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != cells[3].size()) throw DataError(fmt::format("line {}: invalid score '{}'", line_no, cells[3]));
    if (!(r.score >= 0.0 && r.score <= 100.0))
      throw DataError(fmt::format("line {}: score {} outside [0, 100]", line_no, cells[3]));
    if (!seen.emplace(r.listener_id, r.system_id, r.utterance_id).second)
      throw DataError(fmt::format("line {}: duplicate rating for listener '{}', system '{}', utterance '{}'", line_no,
                                  r.listener_id, r.system_id, r.utterance_id));
    out.push_back(std::move(r));
  }
  if (!header) throw DataError("MUSHRA CSV is empty");
  if (out.empty()) throw DataError("MUSHRA CSV has no ratings");
  return out;
}

std::vector<MushraSystemSummary> mushra_summary(const std::vector<MushraRecord>& records) {
  if (records.empty()) throw DataError("mushra_summary: no ratings");
  std::map<std::string, std::vector<double>> by_system;
  for (const auto& r : records) by_system[r.system_id].push_back(r.score);
  std::vector<MushraSystemSummary> out;
  for (const auto& [id, scores] : by_system) {
    MushraSystemSummary s{id, scores.size(), 0.0, 0.0};
    s.mean = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
    if (scores.size() > 1) {
      double ss = 0.0;
      for (double v : scores) ss += (v - s.mean) * (v - s.mean);
      const double sd = std::sqrt(ss / static_cast<double>(scores.size() - 1));
      s.half_width = 1.96 * sd / std::sqrt(static_cast<double>(scores.size()));
    }
    out.push_back(s);
  }
  return out;
}

std::string format_mean_ci(double mean, double half_width) { return fmt::format("{:.2f} ± {:.2f}", mean, half_width); }

namespace {

// Modified Lentz evaluation of the continued fraction for I_x(a, b).
double beta_continued_fraction(double a, double b, double x) {
  constexpr double kTiny = 1e-300;
  constexpr double kEps = 1e-16;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw NumericalError("incomplete beta: continued fraction did not converge");
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw UsageError("incomplete_beta: parameters must be positive");
  if (!(x >= 0.0 && x <= 1.0)) throw UsageError("incomplete_beta: x outside [0, 1]");
  if (x == 0.0 || x == 1.0) return x;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double dof) {
  if (!(dof > 0.0)) throw UsageError("student_t_two_sided_p: degrees of freedom must be positive");
  if (std::isnan(t)) throw NumericalError("student_t_two_sided_p: t is NaN");
  if (std::isinf(t)) return 0.0;
  return std::clamp(incomplete_beta(0.5 * dof, 0.5, dof / (dof + t * t)), 0.0, 1.0);
}

TTestResult paired_ttest(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw DataError("paired_ttest: samples differ in length");
  if (x.size() < 2) throw DataError("paired_ttest: need at least two pairs");
  const std::size_t n = x.size();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = x[i] - y[i];
  TTestResult r;
  r.pairs = n;
  r.mean_difference = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : d) ss += (v - r.mean_difference) * (v - r.mean_difference);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (sd == 0.0) {
    r.degenerate = true;
    if (r.mean_difference == 0.0) {
      r.t = 0.0;
      r.p = 1.0;
    } else {
      r.t = std::copysign(std::numeric_limits<double>::infinity(), r.mean_difference);
      r.p = 0.0;
    }
    return r;
  }
  r.t = r.mean_difference / (sd / std::sqrt(static_cast<double>(n)));
  r.p = student_t_two_sided_p(r.t, static_cast<double>(n - 1));
  return r;
}

std::vector<bool> holm_bonferroni(const std::vector<double>& pvalues, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw UsageError("holm_bonferroni: alpha must lie in (0, 1)");
  for (double p : pvalues)
    if (!(p >= 0.0 && p <= 1.0)) throw DataError(fmt::format("holm_bonferroni: p-value {} outside [0, 1]", p));
  const std::size_t m = pvalues.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return pvalues[a] < pvalues[b]; });
  std::vector<bool> reject(m, false);
  for (std::size_t i = 0; i < m; ++i) {
    if (!(pvalues[order[i]] <= alpha / static_cast<double>(m - i))) break;
    reject[order[i]] = true;
  }
  return reject;
}

MushraReport mushra_report(const std::vector<MushraRecord>& records, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw UsageError("alpha must lie in (0, 1)");
  MushraReport rep;
  rep.alpha = alpha;
  rep.systems = mushra_summary(records);

  std::map<std::string, std::map<std::pair<std::string, std::string>, double>> keyed;
  for (const auto& r : records) keyed[r.system_id][{r.listener_id, r.utterance_id}] = r.score;
  std::vector<double> pvalues;
  for (std::size_t i = 0; i < rep.systems.size(); ++i) {
    for (std::size_t j = i + 1; j < rep.systems.size(); ++j) {
      const auto& a = keyed[rep.systems[i].system_id];
      const auto& b = keyed[rep.systems[j].system_id];
      std::vector<double> x, y;
      for (const auto& [key, score] : a) {
        const auto it = b.find(key);
        if (it == b.end()) continue;
        x.push_back(score);
        y.push_back(it->second);
      }
      if (x.size() < 2) continue;
      rep.comparisons.push_back({rep.systems[i].system_id, rep.systems[j].system_id, paired_ttest(x, y), false});
      pvalues.push_back(rep.comparisons.back().test.p);
    }
  }
  const auto flags = holm_bonferroni(pvalues, alpha);
  for (std::size_t k = 0; k < flags.size(); ++k) rep.comparisons[k].significant = flags[k];
  return rep;
}

nlohmann::json MushraReport::to_json() const {
  nlohmann::json j;
  j["alpha"] = alpha;
  j["systems"] = nlohmann::json::array();
  for (const auto& s : systems)
    j["systems"].push_back({{"system_id", s.system_id},
                            {"ratings", s.ratings},
                            {"mean", s.mean},
                            {"ci95_half_width", s.half_width},
                            {"display", format_mean_ci(s.mean, s.half_width)}});
  j["comparisons"] = nlohmann::json::array();
  for (const auto& c : comparisons) {
    nlohmann::json t = {{"system_a", c.system_a},
                        {"system_b", c.system_b},
                        {"pairs", c.test.pairs},
                        {"mean_difference", c.test.mean_difference},
                        {"p", c.test.p},
                        {"degenerate", c.test.degenerate},
                        {"significant", c.significant}};
    t["t"] = std::isfinite(c.test.t) ? nlohmann::json(c.test.t) : nlohmann::json(c.test.t > 0 ? "inf" : "-inf");
    j["comparisons"].push_back(std::move(t));
  }
  return j;
}

std::string MushraReport::to_table() const {
  std::size_t width = std::string("System").size();
  for (const auto& s : systems) width = std::max(width, s.system_id.size());
  std::string out = fmt::format("{:<{}}  {:>14}  {:>7}\n", "System", width, "Score", "Ratings");
  for (const auto& s : systems)
    out += fmt::format("{:<{}}  {:>14}  {:>7}\n", s.system_id, width, format_mean_ci(s.mean, s.half_width), s.ratings);
  if (!comparisons.empty()) {
    out += fmt::format("\nPaired t-tests, Holm-Bonferroni at alpha = {}\n", alpha);
    for (const auto& c : comparisons)
      out += fmt::format("{} vs {}: n = {}, mean diff = {:.2f}, p = {:.4g}{}\n", c.system_a, c.system_b, c.test.pairs,
                         c.test.mean_difference, c.test.p, c.significant ? "  *" : "");
  }
  return out;
}

}  // namespace vf
