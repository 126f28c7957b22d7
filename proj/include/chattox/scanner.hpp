#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "chattox/classify.hpp"

namespace chattox {

enum class ScanState : std::uint8_t { Idle, Scanning, Paused, Aborted, Done };

std::string_view scan_state_name(ScanState state) noexcept;

/// A piece of host-extracted text. The locator is opaque to the engine.
struct TextUnit {
  std::string locator;
  std::string text;
};

struct SpoilerSpan {
  std::string locator;
  std::string text;
  double score = 0.0;

  friend bool operator==(const SpoilerSpan&, const SpoilerSpan&) = default;
};

struct ScanConfig {
  std::size_t batch_size = 16;
  double threshold = 0.5;
  std::size_t min_chars = 3;  // shorter units (in code points) are skipped

  void validate() const;
};

struct ScanProgress {
  std::size_t processed = 0;
  std::size_t total = 0;
  ScanState state = ScanState::Idle;
};

/// Batch scan over a fixed list of units.
///
/// One driver calls next_batch, pause and resume. abort() may be called from
/// any thread at any time: a batch already being classified still commits,
/// but no later batch starts. Aborted and Done are terminal.
class ScanSession {
 public:
  /// Throws InvalidArgument on duplicate locators or a bad config.
  ScanSession(std::vector<TextUnit> units, std::shared_ptr<const Classifier> classifier, const ScanConfig& config = {});

  ScanSession(const ScanSession&) = delete;
  ScanSession& operator=(const ScanSession&) = delete;

  /// Idle -> Scanning, or straight to Done when there is nothing to scan.
  void start();

  /// Classifies up to batch_size units and returns the new findings.
  /// Throws StateError unless Scanning.
  std::vector<SpoilerSpan> next_batch();

  void pause();   // Scanning -> Paused, else StateError
  void resume();  // Paused -> Scanning (or Done if the cursor is at the end), else StateError
  void abort() noexcept;

  /// Runs batches until the session leaves Scanning; returns all findings.
  const std::vector<SpoilerSpan>& run_to_end();

  ScanState state() const noexcept { return state_.load(); }
  ScanProgress progress() const noexcept;
  const std::vector<SpoilerSpan>& findings() const noexcept { return findings_; }
  const std::vector<TextUnit>& units() const noexcept { return units_; }
  bool skipped(std::size_t index) const { return skipped_.at(index); }
  std::size_t batches_run() const noexcept { return batches_.load(); }
  std::size_t classifier_calls() const noexcept { return calls_.load(); }

  /// {"state","processed","total","findings","skipped","batches"}
  std::string snapshot_json() const;
  /// One {"locator","text","score"} object per line.
  void write_findings(std::ostream& out) const;

 private:
  bool transition(ScanState from, ScanState to) noexcept;
  // next_batch without the state precondition; returns nothing once aborted
  std::vector<SpoilerSpan> run_batch();

  std::vector<TextUnit> units_;
  std::vector<bool> skipped_;
  std::shared_ptr<const Classifier> classifier_;
  ScanConfig config_;
  std::atomic<ScanState> state_{ScanState::Idle};
  std::atomic<std::size_t> cursor_{0};
  std::atomic<std::size_t> batches_{0};
  std::atomic<std::size_t> calls_{0};
  std::vector<SpoilerSpan> findings_;
};

/// Owns the lazily loaded classifier shared by all sessions.
class ScanEngine {
 public:
  using Loader = std::function<std::shared_ptr<const Classifier>()>;

  explicit ScanEngine(Loader loader);

  /// Loads the classifier on first use; later calls return the same one.
  /// A failed load is retried on the next call.
  std::shared_ptr<const Classifier> init_if_needed();
  std::size_t init_count() const;

  /// Returns a started session. Load failures propagate before any batch.
  std::unique_ptr<ScanSession> start_scan(std::vector<TextUnit> units, const ScanConfig& config = {});

 private:
  Loader loader_;
  mutable std::mutex mutex_;
  std::shared_ptr<const Classifier> classifier_;
  std::size_t init_count_ = 0;
};

}  // namespace chattox
