#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "chattox/corpus.hpp"

namespace chattox {

struct ConsensusConfig {
  /// Minimum number of Toxic votes for a Toxic label.
  std::size_t toxic_threshold = 2;
};

/// NonEnglish on a strict NonEnglish majority; otherwise Toxic iff at least
/// `toxic_threshold` votes are Toxic (NonEnglish votes count as non-toxic).
/// Throws InvalidArgument on an empty vote vector or a threshold that is 0
/// or larger than the number of votes.
Label consensus_label(const AnnotationRecord& record, const ConsensusConfig& config = {});

/// Per-item vote counts: rows are items, columns are categories.
using VoteCounts = std::vector<std::vector<std::size_t>>;

/// Fleiss' kappa, or the degenerate case where every vote falls in a single
/// category and chance agreement is 1.
struct FleissKappa {
  std::optional<double> value;

  bool degenerate() const noexcept { return !value.has_value(); }
};

/// Throws InvalidArgument on ragged rows, fewer than two raters, no items
/// or fewer than two categories.
FleissKappa fleiss_kappa(const VoteCounts& counts);

/// Counts per category in Label order (Toxic, NonToxic, NonEnglish).
VoteCounts vote_counts(std::span<const AnnotationRecord> records);

struct AgreementReport {
  FleissKappa kappa;
  std::size_t unanimous_count = 0;
  std::size_t single_flag_count = 0;  // exactly one Toxic vote
  std::size_t n_items = 0;
  std::size_t n_raters = 0;
};

/// Kappa over all three categories. An empty input yields a degenerate
/// kappa with zero counts.
AgreementReport agreement_report(std::span<const AnnotationRecord> records);

/// {"kappa": number|"degenerate", "unanimous", "single_flag", "items", "raters"}
std::string agreement_report_json(const AgreementReport& report);

}  // namespace chattox
