#include "chattox/consensus.hpp"

#include <algorithm>

#include <json.hpp>

#include "chattox/errors.hpp"

namespace chattox {

Label consensus_label(const AnnotationRecord& record, const ConsensusConfig& config) {
  const auto& votes = record.votes;
  if (votes.empty()) throw InvalidArgument("message " + record.message_id + " has no votes");
  if (config.toxic_threshold == 0 || config.toxic_threshold > votes.size())
    throw InvalidArgument("toxic threshold " + std::to_string(config.toxic_threshold) +
                          " outside [1, " + std::to_string(votes.size()) + "]");

  const auto non_english = static_cast<std::size_t>(std::count(votes.begin(), votes.end(), Label::NonEnglish));
  if (2 * non_english > votes.size()) return Label::NonEnglish;
  const auto toxic = static_cast<std::size_t>(std::count(votes.begin(), votes.end(), Label::Toxic));
  return toxic >= config.toxic_threshold ? Label::Toxic : Label::NonToxic;
}

FleissKappa fleiss_kappa(const VoteCounts& counts) {
  if (counts.empty()) throw InvalidArgument("fleiss_kappa needs at least one item");
  const std::size_t k = counts.front().size();
  if (k < 2) throw InvalidArgument("fleiss_kappa needs at least two categories");

  std::size_t n = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const auto& row = counts[i];
    if (row.size() != k) throw InvalidArgument("row " + std::to_string(i) + " has the wrong number of categories");
    std::size_t sum = 0;
    for (auto c : row) sum += c;
    if (i == 0) n = sum;
    if (sum != n)
      throw InvalidArgument("row " + std::to_string(i) + " has " + std::to_string(sum) + " votes, expected " +
                            std::to_string(n));
  }
  if (n < 2) throw InvalidArgument("fleiss_kappa needs at least two raters per item");

  const auto items = static_cast<double>(counts.size());
  const auto raters = static_cast<double>(n);
  std::vector<double> column_totals(k, 0.0);
  double mean_agreement = 0.0;
  for (const auto& row : counts) {
    double squares = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const auto c = static_cast<double>(row[j]);
      squares += c * c;
      column_totals[j] += c;
    }
    mean_agreement += (squares - raters) / (raters * (raters - 1.0));
  }
  mean_agreement /= items;

  double chance = 0.0;
  for (double total : column_totals) {
    const double p = total / (items * raters);
    chance += p * p;
  }
  if (chance >= 1.0) return FleissKappa{};
  return FleissKappa{(mean_agreement - chance) / (1.0 - chance)};
}

VoteCounts vote_counts(std::span<const AnnotationRecord> records) {
  VoteCounts counts;
  counts.reserve(records.size());
  for (const auto& rec : records) {
    std::vector<std::size_t> row(3, 0);
    for (Label v : rec.votes) ++row[static_cast<std::size_t>(v)];
    counts.push_back(std::move(row));
  }
  return counts;
}

AgreementReport agreement_report(std::span<const AnnotationRecord> records) {
  AgreementReport report;
  report.n_items = records.size();
  if (records.empty()) return report;
  report.n_raters = records.front().votes.size();
  for (const auto& rec : records) {
    if (rec.votes.size() != report.n_raters)
      throw InvalidArgument("message " + rec.message_id + " has " + std::to_string(rec.votes.size()) +
                            " votes, expected " + std::to_string(report.n_raters));
    if (std::adjacent_find(rec.votes.begin(), rec.votes.end(), std::not_equal_to<>()) == rec.votes.end())
      ++report.unanimous_count;
    if (std::count(rec.votes.begin(), rec.votes.end(), Label::Toxic) == 1) ++report.single_flag_count;
  }
  report.kappa = fleiss_kappa(vote_counts(records));
  return report;
}

std::string agreement_report_json(const AgreementReport& report) {
  nlohmann::ordered_json obj;
  if (report.kappa.value)
    obj["kappa"] = *report.kappa.value;
  else
    obj["kappa"] = "degenerate";
  obj["unanimous"] = report.unanimous_count;
  obj["single_flag"] = report.single_flag_count;
  obj["items"] = report.n_items;
  obj["raters"] = report.n_raters;
  return obj.dump();
}

}  // namespace chattox
