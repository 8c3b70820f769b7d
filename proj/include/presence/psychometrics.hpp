// SPDX-License-Identifier: Apache-2.0
//
// Questionnaire scoring (MEQ30, EDI, ICS, Communitas) and the MEQ30
// comparison against published cohorts.
//
#pragma once

#include <array>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "presence/stats.hpp"

namespace presence::psychometrics {

enum class Factor { ineffability = 0, mystical = 1, positive_mood = 2, transcendence = 3 };
inline constexpr std::array<Factor, 4> kFactors{Factor::ineffability, Factor::mystical, Factor::positive_mood,
                                                Factor::transcendence};
const char* factor_code(Factor f);  // "I", "M", "P", "T"

inline constexpr std::array<int, 3> kIneffabilityItems{3, 10, 29};
inline constexpr std::array<int, 15> kMysticalItems{4, 5, 6, 9, 14, 15, 16, 18, 20, 21, 23, 24, 25, 26, 28};
inline constexpr std::array<int, 6> kPositiveMoodItems{2, 8, 12, 17, 27, 30};
inline constexpr std::array<int, 6> kTranscendenceItems{1, 7, 11, 13, 19, 22};

std::span<const int> factor_items(Factor f);

using Meq30Response = std::array<int, 30>;

/// Percent of maximum per factor.
struct FactorScores {
  double I = 0.0;
  double M = 0.0;
  double P = 0.0;
  double T = 0.0;

  double get(Factor f) const;
  double& get(Factor f);
  bool operator==(const FactorScores&) const = default;
};

/// Throws ValidationError naming the 1-based item when outside 0..5.
FactorScores score_meq30(const Meq30Response& r);

/// All four factors >= 60% of maximum.
bool complete_mte(const FactorScores& f);

/// Moves each factor to the nearest value the instrument can produce
/// (item sum / (5 * items) * 100). Recovers unrounded scores from tables
/// printed as whole percentages.
FactorScores snap_to_instrument(const FactorScores& f);

/// Item responses whose factor scores snap to `target`. Used to build item
/// files from published per-participant factor tables.
Meq30Response synthesize_meq30(const FactorScores& target);

using EdiResponse = std::array<double, 16>;

struct EdiScores {
  double dissolution_mean = 0.0;  // positions 2, 4, ..., 16
  double inflation_mean = 0.0;    // positions 1, 3, ..., 15
};

EdiScores score_edi(const EdiResponse& r);

/// Pictogram letter a..f to 0..5.
int score_ics(char choice);

struct CommunitasScores {
  int total8 = 0;
  double pct_of_max = 0.0;
  int bond_participant = 0;
  int bond_facilitator = 0;
};

CommunitasScores communitas_scores(const std::array<int, 10>& items);

struct FactorStat {
  double mean = 0.0;
  double sd = 0.0;
  std::optional<double> printed_p;  // as published, when known
};

struct ReferenceStudy {
  std::string label;
  std::size_t n = 0;
  std::array<std::optional<FactorStat>, 4> factors;  // I, M, P, T
};

using CohortFactors = std::array<stats::CohortSummary, 4>;

struct FactorComparison {
  Factor factor = Factor::ineffability;
  stats::TTestResult test;
  bool distinguishable = false;
  bool reference_higher = false;
};

struct StudyComparison {
  std::string label;
  std::vector<FactorComparison> factors;  // available factors only
  int indistinguishable = 0;
  int higher = 0;  // distinguishable, reference mean higher
  int lower = 0;   // distinguishable, reference mean lower

  /// "more intense on all 4", "indistinguishable on 3", ...
  std::string category() const;
};

/// Pooled two-sample t-test per available factor; p > alpha counts as
/// indistinguishable.
std::vector<StudyComparison> compare_to_reference(const CohortFactors& cohort, std::span<const ReferenceStudy> refs,
                                                  double alpha = 0.05);

struct ComparisonTally {
  int more_intense_all4 = 0;
  int indistinguishable_all4 = 0;
  int indistinguishable_exactly3 = 0;
  int more_intense_on2 = 0;
  int less_intense_on2 = 0;
  int less_intense_3or4 = 0;
};

ComparisonTally tally(std::span<const StudyComparison> comparisons);

CohortFactors summarize_factors(std::span<const FactorScores> scores);

// CSV ingestion. Column names follow the bundled files.

/// participant_id,I,M,P,T (percent of maximum).
std::vector<FactorScores> read_factor_scores_csv(std::istream& in);
/// label,n,I_mean,I_sd,I_p,M_mean,...; blank cells for missing factors.
std::vector<ReferenceStudy> read_reference_csv(std::istream& in);

struct ParticipantRow {
  std::string id;
  std::vector<std::string> fields;
};

/// participant_id,item1..itemN; returns rows in file order.
std::vector<ParticipantRow> read_item_csv(std::istream& in, std::size_t n_items);

}  // namespace presence::psychometrics
