#include <atomic>
#include <condition_variable>
#include <functional>
#include <random>
#include <sstream>
#include <thread>

#include "chattox/errors.hpp"
#include "chattox/scanner.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace chattox;

namespace {

// Scores 0.9 for texts containing "bad", else 0.1; runs a hook inside every call.
class ProbeClassifier : public Classifier {
 public:
  std::function<void(std::size_t call)> hook;

  std::vector<double> score(std::span<const std::string> texts) const override {
    const std::size_t call = calls_++;
    if (hook) hook(call);
    std::vector<double> out;
    for (const auto& t : texts) out.push_back(t.find("bad") != std::string::npos ? 0.9 : 0.1);
    return out;
  }
  std::string name() const override { return "probe"; }
  std::size_t calls() const { return calls_; }

 private:
  mutable std::atomic<std::size_t> calls_{0};
};

std::vector<TextUnit> make_units(std::size_t n, std::size_t bad_every = 5) {
  std::vector<TextUnit> units;
  for (std::size_t i = 0; i < n; ++i)
    units.push_back({"u" + std::to_string(i), i % bad_every == 0 ? "bad line " + std::to_string(i) : "fine line"});
  return units;
}

std::shared_ptr<ProbeClassifier> probe() { return std::make_shared<ProbeClassifier>(); }

ScanConfig batch(std::size_t n) {
  ScanConfig c;
  c.batch_size = n;
  return c;
}

// Findings a full scan of the first `upto` units must produce.
std::vector<SpoilerSpan> expected_findings(const std::vector<TextUnit>& units, std::size_t upto) {
  std::vector<SpoilerSpan> out;
  for (std::size_t i = 0; i < upto; ++i)
    if (units[i].text.find("bad") != std::string::npos) out.push_back({units[i].locator, units[i].text, 0.9});
  return out;
}

}  // namespace

TEST_CASE("scan: empty page finishes without a batch") {
  auto clf = probe();
  ScanSession s({}, clf);
  s.start();
  CHECK(s.state() == ScanState::Done);
  CHECK(s.findings().empty());
  CHECK(clf->calls() == 0);
  CHECK_THROWS_AS(s.next_batch(), StateError);
}

TEST_CASE("scan: 100 units in batches of 16") {
  auto clf = probe();
  ScanSession s(make_units(100), clf, batch(16));
  s.start();
  s.run_to_end();
  CHECK(s.state() == ScanState::Done);
  CHECK(s.batches_run() == 7);
  CHECK(clf->calls() == 7);
  CHECK(s.progress().processed == 100);
  CHECK(s.findings() == expected_findings(s.units(), 100));
}

TEST_CASE("scan: the engine loads the classifier once") {
  std::size_t loads = 0;
  ScanEngine engine([&] {
    ++loads;
    return std::make_shared<LexiconClassifier>(LexiconClassifier::default_lexicon());
  });
  CHECK(engine.init_count() == 0);
  auto a = engine.start_scan({{"a", "gg"}, {"b", "mother fucking noob"}});
  auto b = engine.start_scan(make_units(3));
  CHECK(engine.init_count() == 1);
  CHECK(loads == 1);
  CHECK(engine.init_if_needed() == engine.init_if_needed());

  const auto& found = a->run_to_end();
  REQUIRE(found.size() == 1);
  CHECK(found[0].locator == "b");
  CHECK(a->skipped(0) == true);  // "gg" is below min_chars
  CHECK(a->state() == ScanState::Done);
}

TEST_CASE("scan: engine load failures and retries") {
  int attempt = 0;
  ScanEngine engine([&]() -> std::shared_ptr<const Classifier> {
    if (attempt++ == 0) throw LoadError("model file missing");
    return probe();
  });
  CHECK_THROWS_AS(engine.start_scan(make_units(2)), LoadError);
  CHECK(engine.init_count() == 0);
  CHECK(engine.start_scan(make_units(2))->state() == ScanState::Scanning);
  CHECK(engine.init_count() == 1);

  ScanEngine empty([] { return std::shared_ptr<const Classifier>(); });
  CHECK_THROWS_AS(empty.init_if_needed(), LoadError);
}

TEST_CASE("scan: engine initialises once under concurrent callers") {
  std::atomic<int> loads{0};
  ScanEngine engine([&] {
    ++loads;
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
    return probe();
  });
  std::vector<std::thread> threads;
  std::vector<std::shared_ptr<const Classifier>> got(8);
  for (std::size_t i = 0; i < got.size(); ++i) threads.emplace_back([&, i] { got[i] = engine.init_if_needed(); });
  for (auto& t : threads) t.join();
  CHECK(loads == 1);
  for (const auto& g : got) CHECK(g == got[0]);
}

TEST_CASE("scan: abort between batches stops further classifier calls") {
  auto clf = probe();
  ScanSession s(make_units(100), clf, batch(16));
  s.start();
  s.next_batch();
  s.next_batch();
  s.abort();
  CHECK(s.state() == ScanState::Aborted);
  CHECK(s.progress().processed == 32);
  CHECK_THROWS_AS(s.next_batch(), StateError);
  CHECK(s.run_to_end() == expected_findings(s.units(), 32));
  CHECK(clf->calls() == 2);
  CHECK(s.batches_run() == 2);
}

TEST_CASE("scan: an abort during classification lets that batch commit") {
  auto clf = probe();
  ScanSession s(make_units(100), clf, batch(16));
  clf->hook = [&](std::size_t call) {
    if (call == 2) s.abort();
  };
  s.start();
  s.run_to_end();
  CHECK(s.state() == ScanState::Aborted);
  CHECK(clf->calls() == 3);
  CHECK(s.progress().processed == 48);
  CHECK(s.findings() == expected_findings(s.units(), 48));
}

TEST_CASE("scan: abort from another thread while a batch is classifying") {
  for (int round = 0; round < 20; ++round) {
    auto clf = probe();
    ScanSession s(make_units(2000), clf, batch(4));
    std::mutex m;
    std::condition_variable cv;
    bool in_call = false, aborted = false;
    clf->hook = [&](std::size_t call) {
      if (call != 3) return;
      std::unique_lock lock(m);
      in_call = true;
      cv.notify_all();
      cv.wait(lock, [&] { return aborted; });
    };
    s.start();
    std::thread driver([&] { s.run_to_end(); });
    {
      std::unique_lock lock(m);
      cv.wait(lock, [&] { return in_call; });
    }
    s.abort();
    {
      std::lock_guard lock(m);
      aborted = true;
    }
    cv.notify_all();
    driver.join();
    CHECK(s.state() == ScanState::Aborted);
    CHECK(clf->calls() == 4);
    CHECK(s.progress().processed == 16);
    CHECK(s.findings() == expected_findings(s.units(), 16));
  }
}

TEST_CASE("scan: abort at an arbitrary moment allows at most one more batch") {
  for (int round = 0; round < 50; ++round) {
    auto clf = probe();
    ScanSession s(make_units(4000), clf, batch(4));
    s.start();
    std::thread driver([&] { s.run_to_end(); });
    std::this_thread::sleep_for(std::chrono::microseconds(50 * (round % 10)));
    const std::size_t calls_before = clf->calls();
    s.abort();
    const std::size_t calls_at_abort = clf->calls();
    driver.join();
    CHECK((s.state() == ScanState::Aborted || s.state() == ScanState::Done));
    CHECK(calls_at_abort >= calls_before);
    CHECK(clf->calls() <= calls_at_abort + 1);
    CHECK(s.progress().processed == std::min<std::size_t>(4000, s.batches_run() * 4));
    CHECK(s.findings() == expected_findings(s.units(), s.progress().processed));
  }
}

TEST_CASE("scan: pause and resume give the same findings as an uninterrupted run") {
  const auto units = make_units(100, 3);
  ScanSession straight(units, probe(), batch(16));
  straight.start();
  straight.run_to_end();

  auto clf = probe();
  ScanSession s(units, clf, batch(16));
  s.start();
  s.next_batch();
  s.pause();
  CHECK(s.state() == ScanState::Paused);
  CHECK_THROWS_AS(s.next_batch(), StateError);
  CHECK(s.run_to_end().size() == expected_findings(units, 16).size());
  CHECK(clf->calls() == 1);
  s.resume();
  s.next_batch();
  s.pause();
  s.resume();
  s.run_to_end();
  CHECK(s.state() == ScanState::Done);
  CHECK(s.findings() == straight.findings());
}

TEST_CASE("scan: illegal transitions") {
  SUBCASE("resume after done") {
    ScanSession s(make_units(3), probe());
    s.start();
    s.run_to_end();
    CHECK_THROWS_AS(s.resume(), StateError);
    CHECK_THROWS_AS(s.pause(), StateError);
    s.abort();
    CHECK(s.state() == ScanState::Done);
  }
  SUBCASE("pause, abort, resume") {
    ScanSession s(make_units(40), probe(), batch(16));
    s.start();
    s.pause();
    s.abort();
    CHECK_THROWS_AS(s.resume(), StateError);
    CHECK(s.state() == ScanState::Aborted);
  }
  SUBCASE("start twice and work before start") {
    ScanSession s(make_units(3), probe());
    CHECK_THROWS_AS(s.next_batch(), StateError);
    CHECK_THROWS_AS(s.pause(), StateError);
    s.start();
    CHECK_THROWS_AS(s.start(), StateError);
  }
  SUBCASE("abort before start") {
    auto clf = probe();
    ScanSession s(make_units(3), clf);
    s.abort();
    CHECK(s.state() == ScanState::Aborted);
    CHECK_THROWS_AS(s.start(), StateError);
    CHECK(clf->calls() == 0);
  }
  SUBCASE("paused at the last batch resumes to done") {
    ScanSession s(make_units(10), probe(), batch(10));
    s.start();
    s.pause();
    s.resume();
    s.next_batch();
    CHECK(s.state() == ScanState::Done);
  }
}

TEST_CASE("scan: every operation trace up to length 6 follows the reference machine") {
  enum Op { Next, Pause, Resume, Abort };
  const auto units = make_units(40, 4);
  const std::size_t n = units.size(), bs = 16;
  std::size_t traces = 0;
  for (std::size_t len = 0; len <= 6; ++len) {
    std::size_t combos = 1;
    for (std::size_t i = 0; i < len; ++i) combos *= 4;
    for (std::size_t code = 0; code < combos; ++code) {
      auto clf = probe();
      ScanSession s(units, clf, batch(bs));
      s.start();
      ScanState want = ScanState::Scanning;
      std::size_t cursor = 0, calls = 0;
      std::size_t c = code;
      for (std::size_t step = 0; step < len; ++step, c /= 4) {
        const Op op = static_cast<Op>(c % 4);
        bool legal = true;
        switch (op) {
          case Next:
            legal = want == ScanState::Scanning;
            if (legal) {
              cursor = std::min(cursor + bs, n);
              ++calls;
              if (cursor == n) want = ScanState::Done;
            }
            break;
          case Pause:
            legal = want == ScanState::Scanning;
            if (legal) want = ScanState::Paused;
            break;
          case Resume:
            legal = want == ScanState::Paused;
            if (legal) want = cursor == n ? ScanState::Done : ScanState::Scanning;
            break;
          case Abort:
            if (want != ScanState::Done && want != ScanState::Aborted) want = ScanState::Aborted;
            break;
        }
        bool threw = false;
        try {
          switch (op) {
            case Next: s.next_batch(); break;
            case Pause: s.pause(); break;
            case Resume: s.resume(); break;
            case Abort: s.abort(); break;
          }
        } catch (const StateError&) {
          threw = true;
        }
        REQUIRE(threw == !legal);
        REQUIRE(s.state() == want);
        REQUIRE(s.progress().processed == cursor);
        REQUIRE(clf->calls() == calls);
        REQUIRE(s.findings() == expected_findings(units, cursor));
      }
      ++traces;
    }
  }
  CHECK(traces == 5461);
}

TEST_CASE("scan: random abort points bound the work done") {
  std::mt19937_64 gen(44);
  for (int round = 0; round < 300; ++round) {
    const std::size_t n = gen() % 120, bs = 1 + gen() % 20;
    const std::size_t abort_after = gen() % 10;
    auto clf = probe();
    ScanSession s(make_units(n), clf, batch(bs));
    s.start();
    for (std::size_t b = 0; b < abort_after && s.state() == ScanState::Scanning; ++b) s.next_batch();
    const bool finished = s.state() == ScanState::Done;
    s.abort();
    s.run_to_end();
    CHECK(clf->calls() <= abort_after);
    CHECK(s.progress().processed == std::min(n, clf->calls() * bs));
    CHECK(s.state() == (finished ? ScanState::Done : ScanState::Aborted));
    CHECK(s.findings() == expected_findings(s.units(), s.progress().processed));
  }
}

TEST_CASE("scan: short units are skipped without a classifier call") {
  auto clf = probe();
  ScanConfig config = batch(2);
  config.min_chars = 3;
  ScanSession s({{"a", "ab"}, {"b", "é!"}, {"c", "bad"}, {"d", "日本語"}}, clf, config);
  CHECK(s.skipped(0));
  CHECK(s.skipped(1));
  CHECK_FALSE(s.skipped(2));
  CHECK_FALSE(s.skipped(3));
  s.start();
  s.next_batch();
  CHECK(clf->calls() == 0);
  s.run_to_end();
  CHECK(clf->calls() == 1);
  REQUIRE(s.findings().size() == 1);
  CHECK(s.findings()[0].locator == "c");
}

TEST_CASE("scan: snapshot and findings output") {
  ScanSession s({{"x", "bad call"}, {"y", "ok"}, {"z", "fine play"}}, probe(), batch(2));
  s.start();
  s.next_batch();
  auto snap = nlohmann::json::parse(s.snapshot_json());
  CHECK(snap["state"] == "scanning");
  CHECK(snap["processed"] == 2);
  CHECK(snap["total"] == 3);
  CHECK(snap["findings"] == 1);
  CHECK(snap["skipped"] == 1);
  CHECK(snap["batches"] == 1);
  s.run_to_end();
  CHECK(nlohmann::json::parse(s.snapshot_json())["state"] == "done");

  std::ostringstream out;
  s.write_findings(out);
  const auto line = nlohmann::json::parse(out.str());
  CHECK(line["locator"] == "x");
  CHECK(line["score"] == 0.9);
}

TEST_CASE("scan: construction errors") {
  CHECK_THROWS_AS(ScanSession({{"a", "one"}, {"a", "two"}}, probe()), InvalidArgument);
  CHECK_THROWS_AS(ScanSession(make_units(2), nullptr), InvalidArgument);
  CHECK_THROWS_AS(ScanSession(make_units(2), probe(), batch(0)), InvalidArgument);
  ScanConfig bad;
  bad.threshold = 1.5;
  CHECK_THROWS_AS(ScanSession(make_units(2), probe(), bad), InvalidArgument);
  CHECK(scan_state_name(ScanState::Paused) == "paused");
}
