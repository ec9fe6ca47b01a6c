#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "adgan/common.hpp"
#include "adgan/matrix.hpp"

namespace adgan {

inline constexpr int kSurveyQuestions = 52;
inline constexpr int kFrtClasses = 4;
inline constexpr int kStratumDims = 3;
inline constexpr int kLifeDims = 17;
inline constexpr int kCategoryCount = 20;

// Transaction category vocabulary; the first three drive the stratum
// (expense-structure) features, the remaining seventeen the life
// (purchase-aspect) features.
inline constexpr std::array<std::string_view, kCategoryCount> kCategoryNames = {
    "BASIC",    "SOCIAL", "SELF",  "RESTAURANT", "ENTERTAINMENT",
    "SERVICE",  "TRAVEL", "SHOP",  "HEALTH",     "WORK",
    "CREDIT",   "HOME",   "DAILY", "INVESTMENT", "BILL",
    "GAMBLING", "EDUCATION", "CHARITY", "FASHION", "TAX"};

inline int category_index(std::string_view name) {
  for (int i = 0; i < kCategoryCount; ++i)
    if (kCategoryNames[static_cast<std::size_t>(i)] == name) return i;
  throw ValidationError("unknown transaction category: " + std::string(name));
}

struct TransactionRecord {
  std::string consumer_id;
  int category = 0;  // index into kCategoryNames
  double amount = 0.0;
};

// Assigns each transaction category to either a stratum dimension or a life
// dimension. The paper does not publish this assignment, so it ships as an
// editable key-value config; the default maps each category onto the
// like-named dimension.
class CategoryScheme {
 public:
  enum class Kind { kStratum, kLife };
  struct Target {
    Kind kind = Kind::kLife;
    int dim = 0;
  };

  static CategoryScheme default_scheme() {
    CategoryScheme s;
    for (int c = 0; c < kCategoryCount; ++c) {
      if (c < kStratumDims) {
        s.targets_[static_cast<std::size_t>(c)] = {Kind::kStratum, c};
        s.stratum_labels_[static_cast<std::size_t>(c)] = std::string(kCategoryNames[static_cast<std::size_t>(c)]);
      } else {
        s.targets_[static_cast<std::size_t>(c)] = {Kind::kLife, c - kStratumDims};
        s.life_labels_[static_cast<std::size_t>(c - kStratumDims)] =
            std::string(kCategoryNames[static_cast<std::size_t>(c)]);
      }
    }
    return s;
  }

  // File format: one `CATEGORY = stratum:LABEL` or `CATEGORY = life:LABEL`
  // line per category; '#' starts a comment.
  static CategoryScheme load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open category scheme: " + path);
    return parse(in);
  }

  static CategoryScheme parse(std::istream& in) {
    std::map<std::string, std::pair<Kind, std::string>> raw;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const std::string t = trim(line.substr(0, line.find('#')));
      if (t.empty()) continue;
      const auto eq = t.find('=');
      if (eq == std::string::npos)
        throw ValidationError("category scheme line " + std::to_string(line_no) + ": expected '='");
      const std::string cat = trim(t.substr(0, eq));
      const std::string rhs = trim(t.substr(eq + 1));
      const auto colon = rhs.find(':');
      if (colon == std::string::npos)
        throw ValidationError("category scheme line " + std::to_string(line_no) +
                              ": expected 'stratum:LABEL' or 'life:LABEL'");
      const std::string kind = trim(rhs.substr(0, colon));
      const std::string label = trim(rhs.substr(colon + 1));
      if (kind != "stratum" && kind != "life")
        throw ValidationError("category scheme line " + std::to_string(line_no) +
                              ": unknown kind '" + kind + "'");
      if (raw.count(cat))
        throw ValidationError("category scheme: duplicate assignment for " + cat);
      raw[cat] = {kind == "stratum" ? Kind::kStratum : Kind::kLife, label};
    }

    CategoryScheme s;
    std::vector<std::string> stratum_labels, life_labels;
    for (int c = 0; c < kCategoryCount; ++c) {
      const std::string name(kCategoryNames[static_cast<std::size_t>(c)]);
      auto it = raw.find(name);
      if (it == raw.end())
        throw ValidationError("category scheme: missing assignment for " + name);
      const auto& [kind, label] = it->second;
      auto& labels = kind == Kind::kStratum ? stratum_labels : life_labels;
      int dim = -1;
      for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == label) dim = static_cast<int>(i);
      if (dim < 0) {
        dim = static_cast<int>(labels.size());
        labels.push_back(label);
      } else {
        throw ValidationError("category scheme: label '" + label + "' assigned twice");
      }
      s.targets_[static_cast<std::size_t>(c)] = {kind, dim};
    }
    if (raw.size() != kCategoryCount)
      throw ValidationError("category scheme: unknown extra categories present");
    if (stratum_labels.size() != kStratumDims || life_labels.size() != kLifeDims)
      throw ValidationError("category scheme must define exactly 3 stratum and 17 life labels");
    for (std::size_t i = 0; i < stratum_labels.size(); ++i) s.stratum_labels_[i] = stratum_labels[i];
    for (std::size_t i = 0; i < life_labels.size(); ++i) s.life_labels_[i] = life_labels[i];
    return s;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write category scheme: " + path);
    out << "# transaction category -> stratum or life dimension\n";
    for (int c = 0; c < kCategoryCount; ++c) {
      const Target& t = targets_[static_cast<std::size_t>(c)];
      out << kCategoryNames[static_cast<std::size_t>(c)] << " = "
          << (t.kind == Kind::kStratum ? "stratum:" : "life:") << label_of(t) << "\n";
    }
  }

  Target target(int category) const { return targets_[static_cast<std::size_t>(category)]; }
  const std::string& stratum_label(int dim) const { return stratum_labels_[static_cast<std::size_t>(dim)]; }
  const std::string& life_label(int dim) const { return life_labels_[static_cast<std::size_t>(dim)]; }

 private:
  const std::string& label_of(const Target& t) const {
    return t.kind == Kind::kStratum ? stratum_labels_[static_cast<std::size_t>(t.dim)]
                                    : life_labels_[static_cast<std::size_t>(t.dim)];
  }

  std::array<Target, kCategoryCount> targets_{};
  std::array<std::string, kStratumDims> stratum_labels_{};
  std::array<std::string, kLifeDims> life_labels_{};
};

// ---- feature scores ----

struct StratumScores {
  std::array<double, kStratumDims> scores{};
  bool zero_total = false;  // consumer had no expense in any stratum category
};

// Per-stratum expense as a fraction of the consumer's total stratum expense.
inline StratumScores stratum_scores(const std::array<double, kStratumDims>& expense) {
  StratumScores out;
  double total = 0.0;
  for (double e : expense) {
    if (e < 0.0) throw ValidationError("negative stratum expense");
    total += e;
  }
  if (total <= 0.0) {
    out.zero_total = true;
    return out;
  }
  for (int i = 0; i < kStratumDims; ++i) out.scores[static_cast<std::size_t>(i)] = expense[static_cast<std::size_t>(i)] / total;
  return out;
}

// Per-dimension shopping frequency as a fraction of the population maximum
// in that dimension; dimensions nobody uses score 0 everywhere.
inline std::array<double, kLifeDims> life_scores(const std::array<double, kLifeDims>& freq,
                                                 const std::array<double, kLifeDims>& pop_max) {
  std::array<double, kLifeDims> out{};
  for (int i = 0; i < kLifeDims; ++i) {
    const auto s = static_cast<std::size_t>(i);
    out[s] = pop_max[s] > 0.0 ? freq[s] / pop_max[s] : 0.0;
  }
  return out;
}

struct ConsumerModelVector {
  std::string consumer_id;
  std::array<double, kStratumDims> stratum{};
  std::array<double, kLifeDims> life{};
  bool zero_stratum = false;

  // U layout: stratum scores at 0-2, life scores at 3-19.
  std::array<double, 20> combined() const {
    std::array<double, 20> u{};
    for (int i = 0; i < kStratumDims; ++i) u[static_cast<std::size_t>(i)] = stratum[static_cast<std::size_t>(i)];
    for (int i = 0; i < kLifeDims; ++i) u[static_cast<std::size_t>(kStratumDims + i)] = life[static_cast<std::size_t>(i)];
    return u;
  }
};

struct FeatureExtraction {
  std::vector<ConsumerModelVector> vectors;  // ordered by consumer id
  std::array<double, kLifeDims> life_max{};  // population max frequency per dimension
};

inline FeatureExtraction extract_features(const std::vector<TransactionRecord>& transactions,
                                          const CategoryScheme& scheme) {
  struct Acc {
    std::array<double, kStratumDims> expense{};
    std::array<double, kLifeDims> freq{};
  };
  std::map<std::string, Acc> by_consumer;
  for (const auto& tr : transactions) {
    if (tr.amount < 0.0) throw ValidationError("negative transaction amount for " + tr.consumer_id);
    Acc& acc = by_consumer[tr.consumer_id];
    const auto target = scheme.target(tr.category);
    if (target.kind == CategoryScheme::Kind::kStratum)
      acc.expense[static_cast<std::size_t>(target.dim)] += tr.amount;
    else
      acc.freq[static_cast<std::size_t>(target.dim)] += 1.0;
  }

  FeatureExtraction out;
  for (auto& [id, acc] : by_consumer)
    for (int i = 0; i < kLifeDims; ++i) {
      const auto s = static_cast<std::size_t>(i);
      out.life_max[s] = std::max(out.life_max[s], acc.freq[s]);
    }
  for (auto& [id, acc] : by_consumer) {
    ConsumerModelVector v;
    v.consumer_id = id;
    const StratumScores ss = stratum_scores(acc.expense);
    v.stratum = ss.scores;
    v.zero_stratum = ss.zero_total;
    v.life = life_scores(acc.freq, out.life_max);
    out.vectors.push_back(std::move(v));
  }
  return out;
}

// ---- shopping-scope overlap ----

// Category sets as 20-bit masks.
inline std::uint32_t category_mask(std::initializer_list<int> categories) {
  std::uint32_t m = 0;
  for (int c : categories) m |= 1u << c;
  return m;
}

inline double overlap_rate(std::uint32_t a, std::uint32_t b) {
  const int uni = std::popcount(a | b);
  if (uni == 0) throw ValidationError("overlap_rate: both category sets are empty");
  return static_cast<double>(std::popcount(a & b)) / static_cast<double>(uni);
}

// ---- decile group analysis ----

struct GroupReport {
  std::vector<std::vector<std::string>> groups;  // consumer ids, ascending total expense
  std::vector<double> total_expense;             // per group
  std::vector<std::uint32_t> scopes;             // per-group union of purchase categories
  Matrix overlap;                                // pairwise overlap of group scopes
  std::vector<std::string> excluded_zero_expense;
};

inline GroupReport group_analysis(const std::vector<TransactionRecord>& transactions,
                                  int n_groups = 10) {
  struct Agg {
    double total = 0.0;
    std::uint32_t scope = 0;
  };
  std::map<std::string, Agg> by_consumer;
  for (const auto& tr : transactions) {
    Agg& a = by_consumer[tr.consumer_id];
    a.total += tr.amount;
    a.scope |= 1u << tr.category;
  }

  GroupReport report;
  std::vector<std::pair<std::string, Agg>> ranked;
  for (auto& [id, agg] : by_consumer) {
    if (agg.total <= 0.0)
      report.excluded_zero_expense.push_back(id);
    else
      ranked.emplace_back(id, agg);
  }
  const int n = static_cast<int>(ranked.size());
  if (n < n_groups)
    throw ValidationError("group_analysis needs at least " + std::to_string(n_groups) +
                          " consumers with positive expense");
  // Ascending by expense; ties broken by consumer id for determinism.
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second.total != b.second.total) return a.second.total < b.second.total;
    return a.first < b.first;
  });

  const int base = n / n_groups;
  const int extra = n % n_groups;
  int cursor = 0;
  report.overlap = Matrix(n_groups, n_groups);
  for (int g = 0; g < n_groups; ++g) {
    const int sz = base + (g < extra ? 1 : 0);
    std::vector<std::string> ids;
    double total = 0.0;
    std::uint32_t scope = 0;
    for (int i = 0; i < sz; ++i, ++cursor) {
      ids.push_back(ranked[static_cast<std::size_t>(cursor)].first);
      total += ranked[static_cast<std::size_t>(cursor)].second.total;
      scope |= ranked[static_cast<std::size_t>(cursor)].second.scope;
    }
    report.groups.push_back(std::move(ids));
    report.total_expense.push_back(total);
    report.scopes.push_back(scope);
  }
  for (int a = 0; a < n_groups; ++a)
    for (int b = 0; b < n_groups; ++b)
      report.overlap.at(a, b) = overlap_rate(report.scopes[static_cast<std::size_t>(a)],
                                             report.scopes[static_cast<std::size_t>(b)]);
  return report;
}

// ---- survey compression ----

struct SurveyStats {
  std::array<double, kSurveyQuestions> mu{};
  std::array<double, kSurveyQuestions> sigma{};  // population standard deviation
};

inline SurveyStats fit_survey_stats(const std::vector<std::array<int, kSurveyQuestions>>& answers) {
  if (answers.empty()) throw ValidationError("fit_survey_stats: no survey rows");
  SurveyStats st;
  const double n = static_cast<double>(answers.size());
  for (const auto& row : answers)
    for (int q = 0; q < kSurveyQuestions; ++q) st.mu[static_cast<std::size_t>(q)] += row[static_cast<std::size_t>(q)];
  for (int q = 0; q < kSurveyQuestions; ++q) st.mu[static_cast<std::size_t>(q)] /= n;
  for (const auto& row : answers)
    for (int q = 0; q < kSurveyQuestions; ++q) {
      const double d = row[static_cast<std::size_t>(q)] - st.mu[static_cast<std::size_t>(q)];
      st.sigma[static_cast<std::size_t>(q)] += d * d;
    }
  for (int q = 0; q < kSurveyQuestions; ++q)
    st.sigma[static_cast<std::size_t>(q)] = std::sqrt(st.sigma[static_cast<std::size_t>(q)] / n);
  return st;
}

// Standardize then squash through the logistic function; an answer at the
// question mean maps to 0.5. Questions with zero spread map to 0.5 for
// everyone.
inline std::array<double, kSurveyQuestions> compress_survey(
    const std::array<int, kSurveyQuestions>& raw, const SurveyStats& st) {
  std::array<double, kSurveyQuestions> out{};
  for (int q = 0; q < kSurveyQuestions; ++q) {
    const auto s = static_cast<std::size_t>(q);
    if (raw[s] < 1 || raw[s] > 7) throw ValidationError("survey answer outside the 1-7 scale");
    if (st.sigma[s] <= 0.0) {
      out[s] = 0.5;
      continue;
    }
    const double z = (raw[s] - st.mu[s]) / st.sigma[s];
    out[s] = 1.0 / (1.0 + std::exp(-z));
  }
  return out;
}

// ---- multivalued-phenomenon detection ----

struct LabeledSurvey {
  std::string consumer_id;
  std::array<int, kSurveyQuestions> answers{};
  int label = 0;
};

struct MultivaluedReport {
  int flagged_count = 0;
  std::vector<std::string> flagged_ids;
};

// Counts consumers that have at least one differently-labeled peer agreeing
// with them on at least `threshold` of the questions.
inline MultivaluedReport multivalued_report(const std::vector<LabeledSurvey>& surveys,
                                            double threshold) {
  if (threshold <= 0.0 || threshold > 1.0)
    throw ValidationError("multivalued_report: threshold must be in (0, 1]");
  const int n = static_cast<int>(surveys.size());
  std::vector<bool> flagged(static_cast<std::size_t>(n), false);
  const double needed = threshold * kSurveyQuestions - 1e-9;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const auto si = static_cast<std::size_t>(i);
      const auto sj = static_cast<std::size_t>(j);
      if (surveys[si].label == surveys[sj].label) continue;
      if (flagged[si] && flagged[sj]) continue;
      int matches = 0;
      for (int q = 0; q < kSurveyQuestions; ++q)
        if (surveys[si].answers[static_cast<std::size_t>(q)] ==
            surveys[sj].answers[static_cast<std::size_t>(q)])
          ++matches;
      if (static_cast<double>(matches) >= needed) {
        flagged[si] = true;
        flagged[sj] = true;
      }
    }
  MultivaluedReport out;
  for (int i = 0; i < n; ++i)
    if (flagged[static_cast<std::size_t>(i)]) {
      ++out.flagged_count;
      out.flagged_ids.push_back(surveys[static_cast<std::size_t>(i)].consumer_id);
    }
  return out;
}

// ---- CSV I/O ----

struct SurveyRow {
  std::string consumer_id;
  std::optional<std::array<int, kSurveyQuestions>> answers;  // empty for activity-only consumers
  std::optional<int> label;                                  // FRT class, empty when unknown
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  cells.push_back(cur);
  return cells;
}

inline double parse_double(const std::string& s, int line_no, const char* what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ValidationError(std::string("line ") + std::to_string(line_no) + ": bad " + what +
                          " '" + s + "'");
  }
}

inline int parse_int(const std::string& s, int line_no, const char* what) {
  try {
    std::size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ValidationError(std::string("line ") + std::to_string(line_no) + ": bad " + what +
                          " '" + s + "'");
  }
}

// Skips '#' provenance/comment lines at the top of a CSV.
inline bool next_data_line(std::istream& in, std::string& line, int& line_no) {
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line[0] == '#') continue;
    return true;
  }
  return false;
}

}  // namespace detail

inline std::vector<TransactionRecord> read_transactions_csv(std::istream& in) {
  std::string line;
  int line_no = 0;
  if (!detail::next_data_line(in, line, line_no))
    throw ValidationError("transactions csv: empty file");
  if (trim(line) != "consumer_id,category,amount")
    throw ValidationError("transactions csv: expected header consumer_id,category,amount");
  std::vector<TransactionRecord> out;
  while (detail::next_data_line(in, line, line_no)) {
    if (trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != 3)
      throw ValidationError("transactions csv line " + std::to_string(line_no) +
                            ": expected 3 cells");
    TransactionRecord tr;
    tr.consumer_id = cells[0];
    tr.category = category_index(cells[1]);
    tr.amount = detail::parse_double(cells[2], line_no, "amount");
    if (tr.amount < 0.0)
      throw ValidationError("transactions csv line " + std::to_string(line_no) +
                            ": negative amount");
    out.push_back(std::move(tr));
  }
  return out;
}

inline std::vector<SurveyRow> read_surveys_csv(std::istream& in) {
  std::string line;
  int line_no = 0;
  if (!detail::next_data_line(in, line, line_no)) throw ValidationError("surveys csv: empty file");
  {
    std::string expect = "consumer_id";
    for (int q = 1; q <= kSurveyQuestions; ++q) expect += ",q" + std::to_string(q);
    expect += ",frt_label";
    if (trim(line) != expect)
      throw ValidationError("surveys csv: unexpected header");
  }
  std::vector<SurveyRow> out;
  while (detail::next_data_line(in, line, line_no)) {
    if (trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != kSurveyQuestions + 2)
      throw ValidationError("surveys csv line " + std::to_string(line_no) + ": expected " +
                            std::to_string(kSurveyQuestions + 2) + " cells");
    SurveyRow row;
    row.consumer_id = cells[0];
    const bool any_answer = [&] {
      for (int q = 0; q < kSurveyQuestions; ++q)
        if (!cells[static_cast<std::size_t>(q) + 1].empty()) return true;
      return false;
    }();
    if (any_answer) {
      std::array<int, kSurveyQuestions> ans{};
      for (int q = 0; q < kSurveyQuestions; ++q) {
        const int v = detail::parse_int(cells[static_cast<std::size_t>(q) + 1], line_no, "answer");
        if (v < 1 || v > 7)
          throw ValidationError("surveys csv line " + std::to_string(line_no) +
                                ": answer outside 1-7");
        ans[static_cast<std::size_t>(q)] = v;
      }
      row.answers = ans;
    }
    const std::string& lab = cells[kSurveyQuestions + 1];
    if (!lab.empty()) {
      const int v = detail::parse_int(lab, line_no, "frt_label");
      if (v < 0 || v >= kFrtClasses)
        throw ValidationError("surveys csv line " + std::to_string(line_no) +
                              ": frt_label outside 0-3");
      row.label = v;
    }
    out.push_back(std::move(row));
  }
  return out;
}

inline void write_transactions_csv(std::ostream& out,
                                   const std::vector<TransactionRecord>& records,
                                   const std::string& provenance = "") {
  if (!provenance.empty()) out << provenance;
  out << "consumer_id,category,amount\n";
  char buf[64];
  for (const auto& tr : records) {
    std::snprintf(buf, sizeof buf, "%.17g", tr.amount);
    out << tr.consumer_id << ',' << kCategoryNames[static_cast<std::size_t>(tr.category)] << ','
        << buf << '\n';
  }
}

inline void write_surveys_csv(std::ostream& out, const std::vector<SurveyRow>& rows,
                              const std::string& provenance = "") {
  if (!provenance.empty()) out << provenance;
  out << "consumer_id";
  for (int q = 1; q <= kSurveyQuestions; ++q) out << ",q" << q;
  out << ",frt_label\n";
  for (const auto& row : rows) {
    out << row.consumer_id;
    for (int q = 0; q < kSurveyQuestions; ++q) {
      out << ',';
      if (row.answers) out << (*row.answers)[static_cast<std::size_t>(q)];
    }
    out << ',';
    if (row.label) out << *row.label;
    out << '\n';
  }
}

}  // namespace adgan
