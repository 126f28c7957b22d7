#include "chattox/scanner.hpp"

#include <cmath>
#include <ostream>
#include <set>

#include "chattox/corpus.hpp"
#include "chattox/errors.hpp"
#include "json.hpp"

namespace chattox {

namespace {

using json = nlohmann::json;

[[noreturn]] void bad_state(const char* op, ScanState s) {
  throw StateError(std::string(op) + " is not allowed in state " + std::string(scan_state_name(s)));
}

}  // namespace

std::string_view scan_state_name(ScanState state) noexcept {
  switch (state) {
    case ScanState::Idle: return "idle";
    case ScanState::Scanning: return "scanning";
    case ScanState::Paused: return "paused";
    case ScanState::Aborted: return "aborted";
    case ScanState::Done: return "done";
  }
  return "idle";
}

void ScanConfig::validate() const {
  if (batch_size < 1) throw InvalidArgument("batch_size must be at least 1");
  if (!(threshold > 0.0 && threshold < 1.0)) throw InvalidArgument("threshold must lie in (0, 1)");
}

ScanSession::ScanSession(std::vector<TextUnit> units, std::shared_ptr<const Classifier> classifier,
                         const ScanConfig& config)
    : units_(std::move(units)), classifier_(std::move(classifier)), config_(config) {
  config_.validate();
  if (!classifier_) throw InvalidArgument("scan session needs a classifier");
  std::set<std::string_view> seen;
  skipped_.reserve(units_.size());
  for (const auto& u : units_) {
    if (!seen.insert(u.locator).second) throw InvalidArgument("duplicate locator '" + u.locator + "'");
    skipped_.push_back(codepoint_count(u.text) < config_.min_chars);
  }
}

bool ScanSession::transition(ScanState from, ScanState to) noexcept {
  return state_.compare_exchange_strong(from, to);
}

void ScanSession::start() {
  const ScanState target = units_.empty() ? ScanState::Done : ScanState::Scanning;
  if (!transition(ScanState::Idle, target)) bad_state("start", state());
}

std::vector<SpoilerSpan> ScanSession::next_batch() {
  if (state() != ScanState::Scanning) bad_state("next_batch", state());
  return run_batch();
}

std::vector<SpoilerSpan> ScanSession::run_batch() {
  // an abort from another thread may land at any point before the classifier call
  if (state() != ScanState::Scanning) return {};
  const std::size_t begin = cursor_.load();
  const std::size_t end = std::min(begin + config_.batch_size, units_.size());

  std::vector<std::string> texts;
  std::vector<std::size_t> index;
  for (std::size_t i = begin; i < end; ++i) {
    if (skipped_[i]) continue;
    texts.push_back(units_[i].text);
    index.push_back(i);
  }

  std::vector<double> scores;
  if (!texts.empty()) {
    if (state() == ScanState::Aborted) return {};
    ++calls_;
    scores = classifier_->score(texts);
    if (scores.size() != texts.size()) throw ModelError("classifier returned the wrong number of scores", batches_.load());
  }

  // the batch ran to completion, so it commits even if an abort arrived meanwhile
  std::vector<SpoilerSpan> found;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    if (!(scores[k] >= 0.0 && scores[k] <= 1.0)) throw ModelError("score outside [0, 1]", batches_.load());
    if (scores[k] >= config_.threshold) found.push_back({units_[index[k]].locator, units_[index[k]].text, scores[k]});
  }
  findings_.insert(findings_.end(), found.begin(), found.end());
  cursor_.store(end);
  ++batches_;
  if (end == units_.size()) transition(ScanState::Scanning, ScanState::Done);
  return found;
}

void ScanSession::pause() {
  if (!transition(ScanState::Scanning, ScanState::Paused)) bad_state("pause", state());
}

void ScanSession::resume() {
  const ScanState target = cursor_.load() == units_.size() ? ScanState::Done : ScanState::Scanning;
  if (!transition(ScanState::Paused, target)) bad_state("resume", state());
}

void ScanSession::abort() noexcept {
  ScanState s = state_.load();
  while (s == ScanState::Idle || s == ScanState::Scanning || s == ScanState::Paused) {
    if (state_.compare_exchange_weak(s, ScanState::Aborted)) return;
  }
}

const std::vector<SpoilerSpan>& ScanSession::run_to_end() {
  while (state() == ScanState::Scanning) run_batch();
  return findings_;
}

ScanProgress ScanSession::progress() const noexcept { return {cursor_.load(), units_.size(), state()}; }

std::string ScanSession::snapshot_json() const {
  std::size_t skipped = 0;
  for (bool s : skipped_) skipped += s;
  const auto p = progress();
  json obj{{"state", scan_state_name(p.state)}, {"processed", p.processed}, {"total", p.total},
           {"findings", findings_.size()},       {"skipped", skipped},       {"batches", batches_run()}};
  return obj.dump();
}

void ScanSession::write_findings(std::ostream& out) const {
  for (const auto& f : findings_) {
    json obj{{"locator", f.locator}, {"text", f.text}, {"score", f.score}};
    out << obj.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
  }
}

ScanEngine::ScanEngine(Loader loader) : loader_(std::move(loader)) {
  if (!loader_) throw InvalidArgument("scan engine needs a classifier loader");
}

std::shared_ptr<const Classifier> ScanEngine::init_if_needed() {
  std::lock_guard lock(mutex_);
  if (!classifier_) {
    auto loaded = loader_();
    if (!loaded) throw LoadError("classifier loader returned nothing");
    classifier_ = std::move(loaded);
    ++init_count_;
  }
  return classifier_;
}

std::size_t ScanEngine::init_count() const {
  std::lock_guard lock(mutex_);
  return init_count_;
}

std::unique_ptr<ScanSession> ScanEngine::start_scan(std::vector<TextUnit> units, const ScanConfig& config) {
  auto session = std::make_unique<ScanSession>(std::move(units), init_if_needed(), config);
  session->start();
  return session;
}

}  // namespace chattox
