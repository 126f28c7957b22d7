// Acceptance gate: one PASS / FAIL / SKIP line per primary criterion.
//
// Conditional criteria read these environment variables and SKIP without them:
//   CHATTOX_RELEASED_DATA   labeled JSONL of the full released chat corpus
//   CHATTOX_RELEASED_VOTES  annotation JSONL with the per-annotator vote table
//   CHATTOX_MODEL_DIR       directory with the released model.onnx + tokenizer.json
//   CHATTOX_BENCH_MODEL     quantized model file for the throughput check
//                           (default: model_quantized.onnx, then model.onnx, in CHATTOX_MODEL_DIR)
//
// Usage: acceptance [--unit <test binary>]...

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include <sys/wait.h>

#include "chattox/aggregate.hpp"
#include "chattox/classify.hpp"
#include "chattox/cli.hpp"
#include "chattox/consensus.hpp"
#include "chattox/corpus.hpp"
#include "chattox/errors.hpp"
#include "chattox/evalkit.hpp"
#include "chattox/scanner.hpp"
#include "json.hpp"
#include "kappa_oracle.hpp"
#include "test_support.hpp"

using namespace chattox;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

enum class Status { Pass, Fail, Skip };

struct Outcome {
  Status status;
  std::string detail;
};

Outcome pass(std::string d) { return {Status::Pass, std::move(d)}; }
Outcome fail(std::string d) { return {Status::Fail, std::move(d)}; }
Outcome skip(std::string d) { return {Status::Skip, std::move(d)}; }

std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

std::string env(const char* name) {
  const char* v = std::getenv(name);
  return v ? v : "";
}

bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

// ---------------------------------------------------------------------------

Outcome metric_arithmetic() {
  const auto r = metrics_from_counts({192, 32, 88, 2723});
  const bool ok = near(r.accuracy, 0.9605, 1e-4) && r.precision && near(*r.precision, 0.8571, 1e-4) && r.recall &&
                  near(*r.recall, 0.6857, 1e-4) && r.f1 && near(*r.f1, 0.7619, 1e-4);
  std::string d = "acc " + fixed(r.accuracy) + " prec " + fixed(r.precision.value_or(NAN)) + " rec " +
                  fixed(r.recall.value_or(NAN)) + " f1 " + fixed(r.f1.value_or(NAN));
  return ok ? pass(d) : fail(d);
}

Outcome consensus_fixture() {
  std::ifstream in(test_support::data_path("annotated_examples.jsonl"));
  const auto records = parse_annotations(in);
  const auto expected = test_support::read_json("annotated_examples_expected.json");
  std::size_t toxic = 0, non_toxic = 0, mismatches = 0;
  for (const auto& r : records) {
    const Label l = consensus_label(r, ConsensusConfig{2});
    toxic += l == Label::Toxic;
    non_toxic += l == Label::NonToxic;
    mismatches += label_name(l) != expected.at(r.message_id).get<std::string>();
  }
  std::string d = std::to_string(records.size()) + " rows: " + std::to_string(toxic) + " toxic, " +
                  std::to_string(non_toxic) + " nontoxic, " + std::to_string(mismatches) + " label mismatches";
  return records.size() == 10 && toxic == 9 && non_toxic == 1 && mismatches == 0 ? pass(d) : fail(d);
}

Outcome fleiss_kappa_checks() {
  const auto perfect = fleiss_kappa({{3, 0, 0}, {0, 3, 0}, {0, 0, 3}});
  const auto hand = fleiss_kappa({{2, 2}, {2, 2}});
  if (!perfect.value || !near(*perfect.value, 1.0, 1e-12)) return fail("perfect agreement is not 1");
  if (!hand.value || !near(*hand.value, -1.0 / 3.0, 1e-12)) return fail("[[2,2],[2,2]] is not -1/3");
  std::size_t checked = 0, bad = 0;
  test_support::for_each_vote_matrix(2, 4, 4, 3, [&](const VoteCounts& m) {
    const auto got = fleiss_kappa(m);
    const auto want = test_support::pairwise_kappa(m);
    ++checked;
    if (got.value.has_value() != want.has_value() || (want && !near(*got.value, *want, 1e-9))) ++bad;
  });
  std::string d = std::to_string(checked) + " matrices vs pairwise oracle, " + std::to_string(bad) + " mismatches";
  return bad == 0 ? pass(d) : fail(d);
}

Outcome released_corpus() {
  const std::string data_path = env("CHATTOX_RELEASED_DATA");
  if (data_path.empty()) return skip("CHATTOX_RELEASED_DATA not set");
  const auto data = read_labeled(fs::path(data_path));
  const auto s = corpus_stats(data);
  bool ok = s.total == 15999 && s.toxic == 1398 && s.non_toxic == 13773 && s.non_english == 828 &&
            near(s.mean_len_chars, 12.5, 0.1);
  std::string d = "counts " + std::to_string(s.total) + "/" + std::to_string(s.toxic) + "/" +
                  std::to_string(s.non_toxic) + "/" + std::to_string(s.non_english) + ", mean length " +
                  fixed(s.mean_len_chars, 2);
  const std::string votes_path = env("CHATTOX_RELEASED_VOTES");
  if (votes_path.empty()) {
    d += "; vote table absent, kappa/unanimity waived";
  } else {
    std::ifstream in(votes_path);
    const auto report = agreement_report(parse_annotations(in));
    const double kappa = report.kappa.value.value_or(NAN);
    ok = ok && near(kappa, 0.62, 0.01) && report.unanimous_count == 4704;
    d += "; kappa " + fixed(kappa, 3) + ", unanimous " + std::to_string(report.unanimous_count);
  }
  return ok ? pass(d) : fail(d);
}

std::optional<fs::path> released_model_dir() {
  const std::string dir = env("CHATTOX_MODEL_DIR");
  if (dir.empty() || !fs::is_regular_file(fs::path(dir) / "model.onnx")) return std::nullopt;
  return fs::path(dir);
}

Outcome released_model_eval() {
  const auto dir = released_model_dir();
  if (!dir) return skip("CHATTOX_MODEL_DIR with model.onnx not set");
  const std::string data_path = env("CHATTOX_RELEASED_DATA");
  if (data_path.empty()) return skip("CHATTOX_RELEASED_DATA not set");
  const auto model = TransformerClassifier::load(*dir / "model.onnx", *dir / "tokenizer.json");
  const auto data = read_labeled(fs::path(data_path));
  const auto english = english_only(data);

  EvalConfig config;
  config.seed = 42;
  const auto split = stratified_split(english, 0.8, config.seed);
  const auto message = evaluate(*model, split.test, config).report;
  const double f1 = message.f1.value_or(NAN);

  const auto by_match = match_split(data, 81, config.seed);
  config.granularity = Granularity::Message;
  const auto m = evaluate(*model, by_match.test, config).report;
  config.granularity = Granularity::Grouped;
  const auto g = evaluate(*model, by_match.test, config).report;
  config.granularity = Granularity::Match;
  const auto t = evaluate(*model, by_match.test, config).report;

  const bool monotone = g.f1.value_or(NAN) > m.f1.value_or(NAN) && t.precision.value_or(NAN) > g.precision.value_or(NAN);
  std::string d = "stratified message F1 " + fixed(f1) + "; match split F1 message " + fixed(m.f1.value_or(NAN)) +
                  " grouped " + fixed(g.f1.value_or(NAN)) + ", precision grouped " +
                  fixed(g.precision.value_or(NAN)) + " match " + fixed(t.precision.value_or(NAN));
  return near(f1, 0.7619, 0.03) && monotone ? pass(d) : fail(d);
}

int run_quiet(const std::string& command) {
  const int rc = std::system((command + " > /dev/null 2>&1").c_str());
  return rc == -1 ? -1 : WEXITSTATUS(rc);
}

std::string quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) out += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return out + "'";
}

Outcome model_free_suite(const std::vector<std::string>& unit_binaries) {
  ::unsetenv("CHATTOX_MODEL_DIR");
  std::size_t failed = 0;
  std::string names;
  for (const auto& bin : unit_binaries) {
    if (run_quiet(quote(bin)) != 0) {
      ++failed;
      names += " " + fs::path(bin).filename().string();
    }
  }

  // end-to-end CLI pipeline on lexicon and oracle backends only
  const auto tmp = fs::temp_directory_path() / "chattox_acceptance";
  fs::create_directories(tmp);
  auto cli = [](std::vector<std::string> args, std::string* out_text = nullptr) {
    std::istringstream in;
    std::ostringstream out, err;
    const int code = cli::run(args, in, out, err);
    if (out_text) *out_text = out.str();
    return code;
  };
  const std::string data = test_support::data_path("toy_labeled.jsonl").string();
  std::string oracle_out;
  std::vector<std::string> pipeline_errors;
  if (cli({"consensus", test_support::data_path("annotated_examples.jsonl").string(), "--chatlog",
           test_support::data_path("annotated_examples_chat.jsonl").string(), "--out", (tmp / "labeled.jsonl").string()}) != 0)
    pipeline_errors.push_back("consensus");
  if (cli({"stats", (tmp / "labeled.jsonl").string()}) != 0) pipeline_errors.push_back("stats");
  if (cli({"split", data, "--train-out", (tmp / "train.jsonl").string(), "--test-out", (tmp / "test.jsonl").string()}) != 0)
    pipeline_errors.push_back("split");
  if (cli({"eval", data, "--oracle"}, &oracle_out) != 0 || json::parse(oracle_out)["f1"] != 1.0)
    pipeline_errors.push_back("eval --oracle");
  if (cli({"eval", data, "--lexicon", "--granularity", "all"}) != 0) pipeline_errors.push_back("eval --lexicon");
  if (cli({"scan-captions", test_support::data_path("captions/flagged.srt").string(), "--lexicon"}) != 1)
    pipeline_errors.push_back("scan-captions");
  fs::remove_all(tmp);

  std::string d = std::to_string(unit_binaries.size() - failed) + "/" + std::to_string(unit_binaries.size()) +
                  " unit suites passed without CHATTOX_MODEL_DIR";
  if (failed) d += " (failed:" + names + ")";
  d += ", CLI pipeline " + (pipeline_errors.empty() ? std::string("ok") : "failed at " + pipeline_errors.front());
  if (unit_binaries.empty()) return fail("no unit suites given");
  return failed == 0 && pipeline_errors.empty() ? pass(d) : fail(d);
}

// Scores 0.9 for texts containing "bad", else 0.1.
class MarkerClassifier : public Classifier {
 public:
  std::vector<double> score(std::span<const std::string> texts) const override {
    ++calls;
    std::vector<double> out;
    for (const auto& t : texts) out.push_back(t.find("bad") != std::string::npos ? 0.9 : 0.1);
    return out;
  }
  std::string name() const override { return "marker"; }
  mutable std::size_t calls = 0;
};

std::vector<TextUnit> scanner_units(std::size_t n) {
  std::vector<TextUnit> units;
  for (std::size_t i = 0; i < n; ++i)
    units.push_back({"u" + std::to_string(i), i % 3 == 0 ? "bad " + std::to_string(i) : "fine " + std::to_string(i)});
  return units;
}

std::vector<SpoilerSpan> prefix_findings(const std::vector<TextUnit>& units, std::size_t upto) {
  std::vector<SpoilerSpan> out;
  for (std::size_t i = 0; i < upto; ++i)
    if (units[i].text.find("bad") != std::string::npos) out.push_back({units[i].locator, units[i].text, 0.9});
  return out;
}

Outcome scanner_machine() {
  const auto units = scanner_units(40);
  const std::size_t n = units.size(), bs = 16;
  ScanConfig config;
  config.batch_size = bs;
  std::size_t traces = 0, violations = 0;
  for (std::size_t len = 0; len <= 6; ++len) {
    std::size_t combos = 1;
    for (std::size_t i = 0; i < len; ++i) combos *= 4;
    for (std::size_t code = 0; code < combos; ++code, ++traces) {
      auto clf = std::make_shared<MarkerClassifier>();
      ScanSession s(units, clf, config);
      s.start();
      ScanState want = ScanState::Scanning;
      std::size_t cursor = 0, c = code;
      for (std::size_t step = 0; step < len; ++step, c /= 4) {
        const int op = static_cast<int>(c % 4);
        bool legal = true;
        if (op == 0) {
          legal = want == ScanState::Scanning;
          if (legal) {
            cursor = std::min(cursor + bs, n);
            if (cursor == n) want = ScanState::Done;
          }
        } else if (op == 1) {
          legal = want == ScanState::Scanning;
          if (legal) want = ScanState::Paused;
        } else if (op == 2) {
          legal = want == ScanState::Paused;
          if (legal) want = cursor == n ? ScanState::Done : ScanState::Scanning;
        } else if (want != ScanState::Done && want != ScanState::Aborted) {
          want = ScanState::Aborted;
        }
        bool threw = false;
        try {
          switch (op) {
            case 0: s.next_batch(); break;
            case 1: s.pause(); break;
            case 2: s.resume(); break;
            default: s.abort(); break;
          }
        } catch (const StateError&) {
          threw = true;
        }
        if (threw == legal || s.state() != want || s.progress().processed != cursor ||
            s.findings() != prefix_findings(units, cursor))
          ++violations;
      }
    }
  }

  std::mt19937_64 gen(2024);
  std::size_t bound_violations = 0;
  for (int round = 0; round < 500; ++round) {
    const std::size_t count = gen() % 150, batch = 1 + gen() % 24, budget = gen() % 12;
    auto clf = std::make_shared<MarkerClassifier>();
    ScanConfig c;
    c.batch_size = batch;
    ScanSession s(scanner_units(count), clf, c);
    s.start();
    for (std::size_t b = 0; b < budget && s.state() == ScanState::Scanning; ++b) s.next_batch();
    s.abort();
    s.run_to_end();
    if (clf->calls > budget || s.progress().processed != std::min(count, clf->calls * batch)) ++bound_violations;
  }

  std::size_t equivalence_failures = 0;
  for (int round = 0; round < 200; ++round) {
    const auto page = scanner_units(gen() % 200);
    ScanConfig c;
    c.batch_size = 1 + gen() % 20;
    ScanSession straight(page, std::make_shared<MarkerClassifier>(), c);
    straight.start();
    straight.run_to_end();
    ScanSession paused(page, std::make_shared<MarkerClassifier>(), c);
    paused.start();
    while (paused.state() == ScanState::Scanning) {
      if (gen() % 2) {
        paused.pause();
        paused.resume();
      } else {
        paused.next_batch();
      }
    }
    if (paused.state() != ScanState::Done || paused.findings() != straight.findings()) ++equivalence_failures;
  }

  std::string d = std::to_string(traces) + " traces, " + std::to_string(violations) + " violations; " +
                  std::to_string(bound_violations) + " abort-bound violations in 500 runs; " +
                  std::to_string(equivalence_failures) + " pause/resume mismatches in 200 runs";
  return violations == 0 && bound_violations == 0 && equivalence_failures == 0 ? pass(d) : fail(d);
}

std::vector<std::string> fuzz_texts(std::size_t n, std::uint64_t seed) {
  static const std::vector<std::string> words{"gg", "noob", "trash", "mid", "NOOB!!!", "kys", "report", "so",
                                              "bad", "lane", "ward", "Café", "😀", "", "idiot,", "shut",
                                              "up", "uninstall", "n0000b", "what's", "donkey", "ff"};
  std::mt19937_64 gen(seed);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::string t;
    const std::size_t len = gen() % 20;
    for (std::size_t k = 0; k < len; ++k) t += (k ? " " : "") + words[gen() % words.size()];
    out.push_back(std::move(t));
  }
  return out;
}

Outcome batch_invariance() {
  const auto texts = fuzz_texts(1000, 31);
  const LexiconClassifier lexicon(LexiconClassifier::default_lexicon());
  const auto fixture = TransformerClassifier::load(test_support::data_path("model/tiny_bert.onnx"),
                                                   test_support::data_path("model/tokenizer.json"));
  std::vector<std::pair<std::string, const Classifier*>> backends{{"lexicon", &lexicon}, {"fixture model", fixture.get()}};
  std::string d;
  bool ok = true;
  for (const auto& [name, clf] : backends) {
    std::vector<Label> reference;
    std::size_t diffs = 0;
    for (std::size_t batch : {1, 7, 16, 64}) {
      ClassifierConfig config;
      config.batch_size = batch;
      std::vector<Label> labels;
      for (const auto& p : classify_batch(texts, *clf, config)) labels.push_back(p.label);
      if (reference.empty()) reference = labels;
      else if (labels != reference) ++diffs;
    }
    ok = ok && diffs == 0;
    d += (d.empty() ? "" : ", ") + name + " " + (diffs ? "differs" : "identical");
  }
  return ok ? pass("1000 texts, batches {1,7,16,64}: " + d) : fail(d);
}

Outcome performance() {
  ::unsetenv("CHATTOX_MODEL_DIR");
  auto bench = [](std::vector<std::string> args, double& seconds, json& report) {
    std::istringstream in;
    std::ostringstream out, err;
    const auto t0 = std::chrono::steady_clock::now();
    const int code = cli::run(args, in, out, err);
    seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (code == 0) report = json::parse(out.str());
    return code;
  };
  double lexicon_s = 0;
  json lexicon_report;
  if (bench({"bench", "--lexicon", "--units", "10000"}, lexicon_s, lexicon_report) != 0)
    return fail("lexicon bench failed to run");
  const bool lexicon_ok = lexicon_s < 2.0;
  std::string d = "lexicon 10k units in " + fixed(lexicon_s, 3) + " s";

  fs::path model = env("CHATTOX_BENCH_MODEL");
  if (model.empty()) {
    if (const auto dir = released_model_dir()) {
      model = fs::is_regular_file(*dir / "model_quantized.onnx") ? *dir / "model_quantized.onnx" : *dir / "model.onnx";
    }
  }
  if (model.empty()) return lexicon_ok ? pass(d + "; model part skipped (no released model)") : fail(d);

  const fs::path tokenizer = model.parent_path() / "tokenizer.json";
  double model_s = 0;
  json model_report;
  if (bench({"bench", "--model", model.string(), "--tokenizer", tokenizer.string(), "--units", "10000"}, model_s,
            model_report) != 0)
    return fail(d + "; model bench failed to run");
  const unsigned cores = std::thread::hardware_concurrency();
  d += "; model " + model.filename().string() + " in " + fixed(model_s, 1) + " s on " + std::to_string(cores) + " cores";
  if (cores < 8) d += " (below the 8-core reference machine)";
  return lexicon_ok && model_s < 120.0 ? pass(d) : fail(d);
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> unit_binaries;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--unit" && i + 1 < argc) unit_binaries.push_back(argv[++i]);
    else {
      std::cerr << "usage: acceptance [--unit <test binary>]...\n";
      return 2;
    }
  }

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"metric arithmetic", metric_arithmetic},
      {"consensus fixture", consensus_fixture},
      {"fleiss kappa", fleiss_kappa_checks},
      {"released corpus statistics", released_corpus},
      {"released model evaluation", released_model_eval},
      {"model-free test suite", [&] { return model_free_suite(unit_binaries); }},
      {"scanner state machine", scanner_machine},
      {"batch invariance", batch_invariance},
      {"performance", performance},
  };

  std::size_t failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = fail(std::string("exception: ") + e.what());
    }
    const char* tag = o.status == Status::Pass ? "PASS" : o.status == Status::Fail ? "FAIL" : "SKIP";
    failures += o.status == Status::Fail;
    std::cout << tag << "  " << std::left << std::setw(28) << name << o.detail << std::endl;
  }
  return failures ? 1 : 0;
}
