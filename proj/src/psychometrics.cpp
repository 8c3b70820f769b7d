// SPDX-License-Identifier: Apache-2.0
#include "presence/psychometrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "presence/csv.hpp"
#include "presence/errors.hpp"

namespace presence::psychometrics {
namespace {

double factor_percent(const Meq30Response& r, Factor f) {
  const auto items = factor_items(f);
  double sum = 0.0;
  for (int item : items) sum += r[static_cast<std::size_t>(item - 1)];
  return sum / static_cast<double>(items.size()) / 5.0 * 100.0;
}

// Item-sum nearest to a percent score.
long lattice_sum(double percent, std::size_t items) {
  return std::lround(std::clamp(percent, 0.0, 100.0) / 100.0 * 5.0 * static_cast<double>(items));
}

std::optional<double> optional_number(const std::string& cell, const std::string& where) {
  if (cell.empty() || cell == "-") return std::nullopt;
  return parse_number(cell, where);
}

}  // namespace

const char* factor_code(Factor f) {
  switch (f) {
    case Factor::ineffability: return "I";
    case Factor::mystical: return "M";
    case Factor::positive_mood: return "P";
    case Factor::transcendence: return "T";
  }
  return "?";
}

std::span<const int> factor_items(Factor f) {
  switch (f) {
    case Factor::ineffability: return kIneffabilityItems;
    case Factor::mystical: return kMysticalItems;
    case Factor::positive_mood: return kPositiveMoodItems;
    case Factor::transcendence: return kTranscendenceItems;
  }
  return {};
}

double FactorScores::get(Factor f) const {
  switch (f) {
    case Factor::ineffability: return I;
    case Factor::mystical: return M;
    case Factor::positive_mood: return P;
    case Factor::transcendence: return T;
  }
  return 0.0;
}

double& FactorScores::get(Factor f) {
  switch (f) {
    case Factor::ineffability: return I;
    case Factor::mystical: return M;
    case Factor::positive_mood: return P;
    case Factor::transcendence: return T;
  }
  return I;
}

FactorScores score_meq30(const Meq30Response& r) {
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (r[i] < 0 || r[i] > 5) {
      throw ValidationError("MEQ30 item " + std::to_string(i + 1) + " out of range 0..5: " + std::to_string(r[i]));
    }
  }
  FactorScores s;
  for (Factor f : kFactors) s.get(f) = factor_percent(r, f);
  return s;
}

bool complete_mte(const FactorScores& f) { return f.I >= 60.0 && f.M >= 60.0 && f.P >= 60.0 && f.T >= 60.0; }

FactorScores snap_to_instrument(const FactorScores& f) {
  FactorScores out;
  for (Factor k : kFactors) {
    const auto items = static_cast<double>(factor_items(k).size());
    // same operation order as score_meq30 so lattice values compare equal
    out.get(k) = static_cast<double>(lattice_sum(f.get(k), factor_items(k).size())) / items / 5.0 * 100.0;
  }
  return out;
}

Meq30Response synthesize_meq30(const FactorScores& target) {
  Meq30Response r{};
  for (Factor k : kFactors) {
    const auto items = factor_items(k);
    const int sum = static_cast<int>(lattice_sum(target.get(k), items.size()));
    // spread the sum as evenly as possible across the factor's items
    const int base = sum / static_cast<int>(items.size());
    int extra = sum % static_cast<int>(items.size());
    for (int item : items) {
      r[static_cast<std::size_t>(item - 1)] = base + (extra > 0 ? 1 : 0);
      if (extra > 0) --extra;
    }
  }
  return r;
}

EdiScores score_edi(const EdiResponse& r) {
  double dissolution = 0.0;
  double inflation = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (!(r[i] >= 0.0 && r[i] <= 100.0)) {
      throw ValidationError("EDI item " + std::to_string(i + 1) + " out of range 0..100");
    }
    // position i+1: even positions are dissolution statements
    ((i + 1) % 2 == 0 ? dissolution : inflation) += r[i];
  }
  return {dissolution / 8.0, inflation / 8.0};
}

int score_ics(char choice) {
  const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(choice)));
  if (c < 'a' || c > 'f') throw ValidationError(std::string("ICS choice must be a..f, got '") + choice + "'");
  return c - 'a';
}

CommunitasScores communitas_scores(const std::array<int, 10>& items) {
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i] < 1 || items[i] > 7) {
      throw ValidationError("communitas item " + std::to_string(i + 1) + " out of range 1..7");
    }
  }
  CommunitasScores s;
  s.total8 = std::accumulate(items.begin(), items.begin() + 8, 0);
  s.pct_of_max = s.total8 / 56.0 * 100.0;
  s.bond_participant = items[8];
  s.bond_facilitator = items[9];
  return s;
}

std::string StudyComparison::category() const {
  const int total = static_cast<int>(factors.size());
  if (higher == total && total == 4) return "more intense on all 4";
  if (indistinguishable == total) return "indistinguishable on " + std::to_string(total);
  if (indistinguishable >= 3) return "indistinguishable on " + std::to_string(indistinguishable);
  if (higher >= lower) return "more intense on " + std::to_string(higher);
  return "less intense on " + std::to_string(lower);
}

std::vector<StudyComparison> compare_to_reference(const CohortFactors& cohort, std::span<const ReferenceStudy> refs,
                                                  double alpha) {
  std::vector<StudyComparison> out;
  out.reserve(refs.size());
  for (const auto& ref : refs) {
    StudyComparison sc;
    sc.label = ref.label;
    for (Factor f : kFactors) {
      const auto& stat = ref.factors[static_cast<std::size_t>(f)];
      if (!stat) continue;
      const stats::CohortSummary other{ref.n, stat->mean, stat->sd};
      const auto& mine = cohort[static_cast<std::size_t>(f)];
      FactorComparison fc;
      fc.factor = f;
      fc.test = stats::ttest_two_sample_summary(mine, other);
      fc.distinguishable = !(fc.test.p_two_sided > alpha);
      fc.reference_higher = other.mean > mine.mean;
      if (!fc.distinguishable) {
        ++sc.indistinguishable;
      } else if (fc.reference_higher) {
        ++sc.higher;
      } else {
        ++sc.lower;
      }
      sc.factors.push_back(fc);
    }
    out.push_back(std::move(sc));
  }
  return out;
}

ComparisonTally tally(std::span<const StudyComparison> comparisons) {
  ComparisonTally t;
  for (const auto& c : comparisons) {
    const int total = static_cast<int>(c.factors.size());
    if (total == 4 && c.higher == 4) ++t.more_intense_all4;
    if (total == 4 && c.indistinguishable == 4) ++t.indistinguishable_all4;
    if (c.indistinguishable == 3) ++t.indistinguishable_exactly3;
    if (c.higher == 2 && c.indistinguishable < 3) ++t.more_intense_on2;
    if (c.lower == 2 && c.indistinguishable < 3) ++t.less_intense_on2;
    if (c.lower >= 3) ++t.less_intense_3or4;
  }
  return t;
}

CohortFactors summarize_factors(std::span<const FactorScores> scores) {
  CohortFactors out;
  std::vector<double> column(scores.size());
  for (Factor f : kFactors) {
    for (std::size_t i = 0; i < scores.size(); ++i) column[i] = scores[i].get(f);
    out[static_cast<std::size_t>(f)] = stats::cohort_summary(column);
  }
  return out;
}

std::vector<FactorScores> read_factor_scores_csv(std::istream& in) {
  const CsvTable t = read_csv(in);
  const std::array<std::size_t, 4> cols{t.require("I"), t.require("M"), t.require("P"), t.require("T")};
  std::vector<FactorScores> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    FactorScores s;
    for (Factor f : kFactors) {
      const auto c = cols[static_cast<std::size_t>(f)];
      const double v = parse_number(t.rows[r][c], "row " + std::to_string(r + 2) + " column " + t.header[c]);
      if (v < 0.0 || v > 100.0) throw ValidationError("factor score out of range 0..100 in row " + std::to_string(r + 2));
      s.get(f) = v;
    }
    out.push_back(s);
  }
  return out;
}

std::vector<ReferenceStudy> read_reference_csv(std::istream& in) {
  const CsvTable t = read_csv(in);
  const std::size_t label = t.require("label");
  const std::size_t n = t.require("n");
  std::vector<ReferenceStudy> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string where = "row " + std::to_string(r + 2);
    ReferenceStudy s;
    s.label = row[label];
    const double nv = parse_number(row[n], where + " column n");
    if (nv < 1 || nv != std::floor(nv)) throw SchemaError(where + " column n", "must be a positive integer");
    s.n = static_cast<std::size_t>(nv);
    bool any = false;
    for (Factor f : kFactors) {
      const std::string code = factor_code(f);
      const auto mean = optional_number(row[t.require(code + "_mean")], where + " " + code + "_mean");
      const auto sd = optional_number(row[t.require(code + "_sd")], where + " " + code + "_sd");
      if (mean.has_value() != sd.has_value()) throw SchemaError(where, "factor " + code + " needs both mean and sd");
      if (!mean) continue;
      FactorStat st{*mean, *sd, std::nullopt};
      if (auto pc = t.column(code + "_p")) st.printed_p = optional_number(row[*pc], where + " " + code + "_p");
      s.factors[static_cast<std::size_t>(f)] = st;
      any = true;
    }
    if (!any) throw SchemaError(where, "study has no factor data");
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<ParticipantRow> read_item_csv(std::istream& in, std::size_t n_items) {
  const CsvTable t = read_csv(in);
  const std::size_t id = t.require("participant_id");
  std::vector<std::size_t> cols;
  for (std::size_t i = 1; i <= n_items; ++i) cols.push_back(t.require("item" + std::to_string(i)));
  std::vector<ParticipantRow> out;
  for (const auto& row : t.rows) {
    ParticipantRow p{row[id], {}};
    for (auto c : cols) p.fields.push_back(row[c]);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace presence::psychometrics
