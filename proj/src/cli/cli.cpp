#include "chattox/cli.hpp"

#include <sys/resource.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "chattox/aggregate.hpp"
#include "chattox/classify.hpp"
#include "chattox/consensus.hpp"
#include "chattox/corpus.hpp"
#include "chattox/errors.hpp"
#include "chattox/evalkit.hpp"
#include "chattox/scanner.hpp"
#include "json.hpp"

namespace chattox::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

constexpr const char* kModelDirEnv = "CHATTOX_MODEL_DIR";

struct Globals {
  std::uint64_t seed = 0;
  double threshold = 0.5;
  std::size_t batch_size = 16;
  std::string format = "json";

  bool pretty() const { return format == "pretty"; }
  ClassifierConfig classifier(std::size_t max_tokens) const {
    ClassifierConfig c;
    c.threshold = threshold;
    c.batch_size = batch_size;
    c.max_tokens = max_tokens;
    return c;
  }
};

struct Backend {
  std::string model;
  std::string tokenizer;
  std::string lexicon;
  bool lexicon_flag = false;
  bool oracle = false;
  std::size_t max_tokens = 192;
};

void add_backend(CLI::App* sub, Backend& b, bool with_oracle) {
  sub->add_option("--model", b.model, "ONNX model file, or a directory holding model.onnx");
  sub->add_option("--tokenizer", b.tokenizer, "tokenizer sidecar JSON (default: tokenizer.json beside the model)");
  sub->add_option("--lexicon", b.lexicon, "use the lexicon baseline, optionally from a JSON {term: weight} file")
      ->expected(0, 1);
  sub->add_option("--max-tokens", b.max_tokens, "model input length cap")->check(CLI::Range(2, 100000));
  if (with_oracle) sub->add_flag("--oracle", b.oracle, "score with the ground-truth labels (self-test)");
}

// Opens `path`, or returns `fallback` for "-".
class Input {
 public:
  Input(const std::string& path, std::istream& fallback) : stream_(&fallback) {
    if (path == "-") return;
    file_ = std::make_unique<std::ifstream>(path, std::ios::binary);
    if (!*file_) throw IoError("cannot open " + path);
    stream_ = file_.get();
  }
  std::istream& get() { return *stream_; }

 private:
  std::unique_ptr<std::ifstream> file_;
  std::istream* stream_;
};

class Output {
 public:
  Output(const std::string& path, std::ostream& fallback) : stream_(&fallback), path_(path) {
    if (path.empty() || path == "-") return;
    file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
    if (!*file_) throw IoError("cannot open " + path + " for writing");
    stream_ = file_.get();
  }
  std::ostream& get() { return *stream_; }
  void close() {
    stream_->flush();
    if (!*stream_) throw IoError("write failed: " + (path_.empty() ? std::string("<stdout>") : path_));
  }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* stream_;
  std::string path_;
};

std::vector<LabeledMessage> load_dataset(const std::string& path, std::istream& in, std::ostream& err) {
  Input input(path, in);
  ParseReport report;
  auto data = read_labeled(input.get(), &report);
  for (const auto& w : report.warnings) err << "warning: " << w << '\n';
  if (report.replaced_sequences) err << "warning: replaced " << report.replaced_sequences << " invalid UTF-8 sequences\n";
  return data;
}

std::shared_ptr<const Classifier> resolve_backend(const Backend& b, const Globals& g,
                                                  std::span<const LabeledMessage> oracle_data = {}) {
  if (b.oracle) {
    std::vector<std::string> texts;
    std::vector<Label> labels;
    for (const auto& item : oracle_data) {
      texts.push_back(item.message.text);
      labels.push_back(item.label);
    }
    return std::make_shared<OracleClassifier>(texts, labels);
  }
  if (b.lexicon_flag) {
    if (b.lexicon.empty()) return std::make_shared<LexiconClassifier>(LexiconClassifier::default_lexicon());
    return std::make_shared<LexiconClassifier>(LexiconClassifier::load(b.lexicon));
  }
  fs::path model = b.model;
  if (model.empty()) {
    const char* env = std::getenv(kModelDirEnv);
    if (!env || !*env)
      throw InvalidArgument(std::string("no classifier: pass --model, --lexicon or set ") + kModelDirEnv);
    model = env;
  }
  if (fs::is_directory(model)) model /= "model.onnx";
  const fs::path tokenizer = b.tokenizer.empty() ? model.parent_path() / "tokenizer.json" : fs::path(b.tokenizer);
  return TransformerClassifier::load(model, tokenizer, g.classifier(b.max_tokens));
}

// ---------------------------------------------------------------------------

struct ConsensusArgs {
  std::string annotations;
  std::string out;
  std::string report;
  std::string chatlog;
  std::size_t min_votes = 2;
};

int cmd_consensus(const ConsensusArgs& a, const Globals& g, std::istream& in, std::ostream& out, std::ostream& err) {
  std::vector<AnnotationRecord> records;
  {
    Input input(a.annotations, in);
    records = parse_annotations(input.get());
  }
  ConsensusConfig config;
  config.toxic_threshold = a.min_votes;
  std::vector<Label> labels;
  labels.reserve(records.size());
  for (const auto& r : records) labels.push_back(consensus_label(r, config));

  Output sink(a.out, out);
  if (!a.chatlog.empty()) {
    std::map<std::string, Label, std::less<>> by_id;
    for (std::size_t i = 0; i < records.size(); ++i) by_id[records[i].message_id] = labels[i];
    Input chat(a.chatlog, in);
    const auto format = fs::path(a.chatlog).extension() == ".csv" ? ChatlogFormat::Csv : ChatlogFormat::Jsonl;
    std::vector<LabeledMessage> labeled;
    std::size_t unlabeled = 0;
    for (auto& m : parse_chatlog(chat.get(), format)) {
      auto it = by_id.find(m.message_id);
      if (it == by_id.end()) {
        ++unlabeled;
        continue;
      }
      labeled.push_back({std::move(m), it->second});
    }
    if (unlabeled) err << "warning: " << unlabeled << " chat messages have no annotation and were dropped\n";
    if (labeled.size() != records.size())
      err << "warning: " << records.size() - labeled.size() << " annotations have no chat message\n";
    write_labeled(sink.get(), labeled);
  } else {
    for (std::size_t i = 0; i < records.size(); ++i)
      sink.get() << json{{"id", records[i].message_id}, {"label", label_name(labels[i])}}.dump() << '\n';
  }
  sink.close();

  const auto report = agreement_report(records);
  std::string report_path = a.report;
  if (report_path.empty() && !a.out.empty() && a.out != "-") report_path = a.out + ".report.json";
  Output report_sink(report_path, err);
  if (g.pretty()) {
    auto& o = report_sink.get();
    o << "items        " << report.n_items << "\nraters       " << report.n_raters << "\nkappa        ";
    if (report.kappa.value) o << std::fixed << std::setprecision(4) << *report.kappa.value << '\n';
    else o << "degenerate\n";
    o << "unanimous    " << report.unanimous_count << "\nsingle flag  " << report.single_flag_count << '\n';
  } else {
    report_sink.get() << agreement_report_json(report) << '\n';
  }
  report_sink.close();
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct SplitArgs {
  std::string data;
  std::string mode = "stratified";
  double train_fraction = 0.8;
  std::size_t train_matches = 81;
  std::string train_out;
  std::string test_out;
};

Split do_split(const std::string& mode, std::span<const LabeledMessage> data, double fraction, std::size_t matches,
               std::uint64_t seed) {
  if (mode == "stratified") {
    const auto english = english_only(data);
    return stratified_split(english, fraction, seed);
  }
  return match_split(data, matches, seed);
}

std::size_t count_label(std::span<const LabeledMessage> d, Label l) {
  return static_cast<std::size_t>(std::count_if(d.begin(), d.end(), [&](const auto& m) { return m.label == l; }));
}

int cmd_split(const SplitArgs& a, const Globals& g, std::istream& in, std::ostream& out, std::ostream& err) {
  const auto data = load_dataset(a.data, in, err);
  const Split split = do_split(a.mode, data, a.train_fraction, a.train_matches, g.seed);
  Output train(a.train_out, out);
  write_labeled(train.get(), split.train);
  train.close();
  Output test(a.test_out, out);
  write_labeled(test.get(), split.test);
  test.close();
  json summary{{"mode", a.mode},
               {"seed", g.seed},
               {"train", split.train.size()},
               {"test", split.test.size()},
               {"train_toxic", count_label(split.train, Label::Toxic)},
               {"test_toxic", count_label(split.test, Label::Toxic)}};
  err << summary.dump() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string data;
  Backend backend;
  std::string granularity = "message";
  std::string split = "none";
  double train_fraction = 0.8;
  std::size_t train_matches = 81;
  double gap_s = 10.0;
  std::size_t fallback_run = 3;
  std::string transcript_mode = "chunk";
  std::size_t stride = 0;
  std::string units_out;
};

int cmd_eval(const EvalArgs& a, const Globals& g, std::istream& in, std::ostream& out, std::ostream& err) {
  const auto data = load_dataset(a.data, in, err);
  std::vector<LabeledMessage> test;
  if (a.split == "none") test = data;
  else test = do_split(a.split, data, a.train_fraction, a.train_matches, g.seed).test;

  const auto classifier = resolve_backend(a.backend, g, data);
  std::vector<Granularity> levels;
  if (a.granularity == "all") levels = {Granularity::Message, Granularity::Grouped, Granularity::Match};
  else levels = {*try_parse_granularity(a.granularity)};

  EvalConfig config;
  config.grouping.gap_s = a.gap_s;
  config.grouping.fallback_run_len = a.fallback_run;
  config.classifier = g.classifier(a.backend.max_tokens);
  config.transcript_mode = a.transcript_mode == "truncate" ? TranscriptMode::Truncate : TranscriptMode::Chunk;
  if (a.stride) config.stride = a.stride;
  config.seed = g.seed;

  Output units(a.units_out, err);
  std::vector<MetricsReport> reports;
  for (Granularity level : levels) {
    config.granularity = level;
    auto result = evaluate(*classifier, test, config);
    if (!a.units_out.empty()) {
      for (const auto& u : result.units)
        units.get() << json{{"granularity", granularity_name(level)}, {"text", u.text},
                            {"truth", label_name(u.truth)},       {"label", label_name(u.predicted)},
                            {"score", u.score},                    {"chunks", u.chunks}}
                           .dump(-1, ' ', false, json::error_handler_t::replace)
                    << '\n';
    }
    reports.push_back(result.report);
  }
  if (!a.units_out.empty()) units.close();
  if (g.pretty()) {
    out << "backend: " << classifier->name() << ", test messages: " << test.size() << '\n';
    write_report_table(out, reports);
  } else {
    for (const auto& r : reports) out << report_json(r) << '\n';
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_classify(const Backend& b, const Globals& g, std::istream& in, std::ostream& out) {
  const auto classifier = resolve_backend(b, g);
  struct Line {
    std::string text;
    enum { Ok, Empty, BadUtf8 } kind;
  };
  std::vector<Line> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) lines.push_back({"", Line::Empty});
    else if (!is_valid_utf8(line)) lines.push_back({"", Line::BadUtf8});
    else lines.push_back({line, Line::Ok});
  }
  // each distinct line is scored once, so repeated lines get identical records
  std::vector<std::string> texts;
  std::map<std::string_view, std::size_t> first;
  std::vector<std::size_t> slot;
  for (const auto& l : lines) {
    if (l.kind != Line::Ok) continue;
    auto [it, fresh] = first.emplace(l.text, texts.size());
    if (fresh) texts.push_back(l.text);
    slot.push_back(it->second);
  }
  const auto predictions = classify_batch(texts, *classifier, g.classifier(b.max_tokens));

  std::size_t k = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    json rec{{"line", i + 1}};
    if (lines[i].kind == Line::Empty) {
      rec["skipped"] = "empty line";
    } else if (lines[i].kind == Line::BadUtf8) {
      rec["error"] = "invalid UTF-8";
    } else {
      const auto& p = predictions[slot[k++]];
      if (g.pretty()) {
        out << label_name(p.label) << '\t' << std::fixed << std::setprecision(4) << p.toxic_score << '\t'
            << lines[i].text << '\n';
        continue;
      }
      rec["text"] = lines[i].text;
      rec["score"] = p.toxic_score;
      rec["label"] = label_name(p.label);
    }
    if (g.pretty()) out << (rec.contains("error") ? "error" : "skipped") << "\t-\t\n";
    else out << rec.dump() << '\n';
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct CaptionArgs {
  std::string captions;
  Backend backend;
  std::string out;
  bool reorder = false;
};

int cmd_scan_captions(const CaptionArgs& a, const Globals& g, std::istream& in, std::ostream& out) {
  std::vector<CaptionCue> cues;
  {
    Input input(a.captions, in);
    cues = parse_vtt(input.get(), VttOptions{a.reorder});
  }
  const auto classifier = resolve_backend(a.backend, g);
  struct Ref {
    std::size_t cue;
    std::size_t line;
  };
  std::vector<std::string> texts;
  std::vector<Ref> refs;
  for (std::size_t c = 0; c < cues.size(); ++c)
    for (std::size_t l = 0; l < cues[c].lines.size(); ++l)
      if (!cues[c].lines[l].empty()) {
        texts.push_back(cues[c].lines[l]);
        refs.push_back({c, l});
      }
  const auto predictions = classify_batch(texts, *classifier, g.classifier(a.backend.max_tokens));

  std::size_t flagged = 0;
  json results = json::array();
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& cue = cues[refs[i].cue];
    const bool flag = predictions[i].label == Label::Toxic;
    flagged += flag;
    results.push_back({{"cue", refs[i].cue + 1},
                       {"start_s", cue.start_s},
                       {"end_s", cue.end_s},
                       {"start", format_vtt_timestamp(cue.start_s)},
                       {"line", texts[i]},
                       {"score", predictions[i].toxic_score},
                       {"flag", flag}});
  }
  Output sink(a.out, out);
  if (g.pretty()) {
    auto& o = sink.get();
    for (const auto& r : results) {
      o << r["start"].get<std::string>() << "  " << std::fixed << std::setprecision(4) << r["score"].get<double>()
        << "  " << (r["flag"].get<bool>() ? "TOXIC" : "     ") << "  " << r["line"].get<std::string>() << '\n';
    }
    o << flagged << " of " << results.size() << " lines flagged\n";
  } else {
    json report{{"backend", classifier->name()}, {"cues", cues.size()},    {"lines", results.size()},
                {"flagged", flagged},            {"results", results}};
    sink.get() << report.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
  }
  sink.close();
  return flagged ? kExitFlagged : kExitOk;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
  Backend backend;
  std::size_t units = 10000;
  std::size_t unit_len = 60;
  std::size_t min_chars = 3;
};

std::vector<TextUnit> synthetic_page(std::size_t n, std::size_t unit_len, std::uint64_t seed) {
  static const std::vector<std::string> words{
      "gg",   "wp",    "mid",   "lane",  "push",   "tower", "drake",  "baron", "ward",  "jungle", "gank",
      "help", "top",   "bot",   "back",  "nice",   "play",  "team",   "fight", "ult",   "flash",  "care",
      "go",   "now",   "dragon", "river", "farm",  "buy",   "items",  "wave",  "the",   "is",     "on",
      "my",   "you",   "noob",  "trash", "report", "idiot", "stupid", "ff",    "15",    "again",  "why"};
  std::mt19937_64 gen(seed);
  std::vector<TextUnit> units;
  units.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::string text;
    while (text.size() < unit_len) {
      if (!text.empty()) text += ' ';
      text += words[gen() % words.size()];
    }
    units.push_back({"unit:" + std::to_string(i), std::move(text)});
  }
  return units;
}

double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
  return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

std::string digest(const std::vector<SpoilerSpan>& findings) {
  std::vector<std::string> locators;
  for (const auto& f : findings) locators.push_back(f.locator);
  std::sort(locators.begin(), locators.end());
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (const auto& l : locators) {
    for (unsigned char c : l) h = (h ^ c) * 1099511628211ULL;
    h = (h ^ 0xFF) * 1099511628211ULL;
  }
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << h;
  return s.str();
}

int cmd_bench(const BenchArgs& a, const Globals& g, std::ostream& out) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  ScanEngine engine([&] { return resolve_backend(a.backend, g); });
  engine.init_if_needed();
  const double load_s = std::chrono::duration<double>(clock::now() - t0).count();

  ScanConfig config;
  config.batch_size = g.batch_size;
  config.threshold = g.threshold;
  config.min_chars = a.min_chars;
  auto session = engine.start_scan(synthetic_page(a.units, a.unit_len, g.seed), config);
  std::vector<double> latency_ms;
  const auto t1 = clock::now();
  while (session->state() == ScanState::Scanning) {
    const auto b0 = clock::now();
    session->next_batch();
    latency_ms.push_back(std::chrono::duration<double, std::milli>(clock::now() - b0).count());
  }
  const double scan_s = std::chrono::duration<double>(clock::now() - t1).count();

  rusage usage{};
  getrusage(RUSAGE_SELF, &usage);
  const double rate = scan_s > 0 ? static_cast<double>(a.units) / scan_s : 0.0;
  json report{{"backend", engine.init_if_needed()->name()},
              {"units", a.units},
              {"unit_len", a.unit_len},
              {"batch_size", g.batch_size},
              {"batches", session->batches_run()},
              {"load_s", load_s},
              {"scan_s", scan_s},
              {"units_per_s", rate},
              {"peak_rss_kb", usage.ru_maxrss},
              {"latency_ms",
               {{"p50", percentile(latency_ms, 0.50)},
                {"p90", percentile(latency_ms, 0.90)},
                {"p99", percentile(latency_ms, 0.99)},
                {"max", percentile(latency_ms, 1.0)}}},
              {"flagged", session->findings().size()},
              {"flag_digest", digest(session->findings())},
              {"seed", g.seed}};
  if (g.pretty()) {
    out << "backend      " << report["backend"].get<std::string>() << '\n'
        << "units        " << a.units << " in " << session->batches_run() << " batches of " << g.batch_size << '\n'
        << std::fixed << std::setprecision(3) << "scan time    " << scan_s << " s (load " << load_s << " s)\n"
        << std::setprecision(1) << "throughput   " << rate << " units/s\n"
        << "peak RSS     " << usage.ru_maxrss / 1024 << " MiB\n"
        << std::setprecision(3) << "latency ms   p50 " << percentile(latency_ms, 0.5) << "  p90 "
        << percentile(latency_ms, 0.9) << "  p99 " << percentile(latency_ms, 0.99) << '\n'
        << "flagged      " << session->findings().size() << " (" << report["flag_digest"].get<std::string>() << ")\n";
  } else {
    out << report.dump() << '\n';
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct StatsArgs {
  std::string data;
  std::string annotations;
};

int cmd_stats(const StatsArgs& a, const Globals& g, std::istream& in, std::ostream& out, std::ostream& err) {
  const auto data = load_dataset(a.data, in, err);
  const auto s = corpus_stats(data);
  const double rate = s.total ? static_cast<double>(s.toxic) / static_cast<double>(s.total) : 0.0;
  json report{{"total", s.total},
              {"toxic", s.toxic},
              {"non_toxic", s.non_toxic},
              {"non_english", s.non_english},
              {"toxic_rate", std::round(rate * 1e4) / 1e4},
              {"mean_len_chars", std::round(s.mean_len_chars * 1e4) / 1e4},
              {"std_len_chars", std::round(s.std_len_chars * 1e4) / 1e4},
              {"matches", s.match_count}};
  if (!a.annotations.empty()) {
    Input input(a.annotations, in);
    const auto records = parse_annotations(input.get());
    report["agreement"] = json::parse(agreement_report_json(agreement_report(records)));
  }
  if (g.pretty()) {
    for (const auto& [k, v] : report.items()) out << std::left << std::setw(16) << k << v.dump() << '\n';
  } else {
    out << report.dump() << '\n';
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Game-chat toxicity toolkit", "chattox"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--seed", g.seed, "seed for every random choice; echoed into reports");
  app.add_option("--threshold", g.threshold, "toxic-probability decision threshold")
      ->check(CLI::Range(0.0, 1.0).description("in (0, 1)"));
  app.add_option("--batch-size", g.batch_size, "texts per classifier call")->check(CLI::PositiveNumber);
  app.add_option("--format", g.format, "output format")->check(CLI::IsMember({"json", "pretty"}));

  ConsensusArgs consensus;
  auto* c = app.add_subcommand("consensus", "turn annotator votes into labels and report agreement");
  c->add_option("--annotations,annotations", consensus.annotations, "annotation JSONL ('-' for stdin)")->required();
  c->add_option("--out", consensus.out, "labeled output (default stdout)");
  c->add_option("--report", consensus.report, "agreement report path (default <out>.report.json, or stderr)");
  c->add_option("--chatlog", consensus.chatlog, "chat log to join, producing full labeled records");
  c->add_option("--min-toxic-votes", consensus.min_votes, "Toxic votes needed for a Toxic label")
      ->check(CLI::PositiveNumber);

  SplitArgs split;
  auto* s = app.add_subcommand("split", "seeded train/test split of a labeled dataset");
  s->add_option("--data,data", split.data, "labeled JSONL ('-' for stdin)")->required();
  s->add_option("--mode", split.mode)->check(CLI::IsMember({"stratified", "match"}));
  s->add_option("--train-fraction", split.train_fraction)->check(CLI::Range(0.0, 1.0));
  s->add_option("--train-matches", split.train_matches)->check(CLI::PositiveNumber);
  s->add_option("--train-out", split.train_out, "train side output")->required();
  s->add_option("--test-out", split.test_out, "test side output")->required();

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "evaluate a classifier at one or all granularities");
  e->add_option("--data,data", eval.data, "labeled JSONL ('-' for stdin)")->required();
  add_backend(e, eval.backend, true);
  e->add_option("--granularity", eval.granularity)->check(CLI::IsMember({"message", "grouped", "match", "all"}));
  e->add_option("--split", eval.split, "evaluate on the test side of this split")
      ->check(CLI::IsMember({"none", "stratified", "match"}));
  e->add_option("--train-fraction", eval.train_fraction)->check(CLI::Range(0.0, 1.0));
  e->add_option("--train-matches", eval.train_matches)->check(CLI::PositiveNumber);
  e->add_option("--gap-s", eval.gap_s, "grouping window in seconds")->check(CLI::PositiveNumber);
  e->add_option("--fallback-run", eval.fallback_run, "group size when timestamps are missing")
      ->check(CLI::PositiveNumber);
  e->add_option("--transcript-mode", eval.transcript_mode)->check(CLI::IsMember({"chunk", "truncate"}));
  e->add_option("--stride", eval.stride, "chunk stride in tokens (default max-tokens/2)")->check(CLI::PositiveNumber);
  e->add_option("--units-out", eval.units_out, "write per-unit predictions as JSONL");

  Backend classify;
  auto* k = app.add_subcommand("classify", "classify standard-input lines");
  add_backend(k, classify, false);

  CaptionArgs captions;
  auto* v = app.add_subcommand("scan-captions", "flag toxic caption lines; exit 1 when any is found");
  v->add_option("--captions,captions", captions.captions, "WebVTT or SRT file ('-' for stdin)")->required();
  add_backend(v, captions.backend, false);
  v->add_option("--out", captions.out, "report path (default stdout)");
  v->add_flag("--reorder", captions.reorder, "sort out-of-order cues instead of failing");

  BenchArgs bench;
  auto* b = app.add_subcommand("bench", "scan a synthetic page and report throughput");
  add_backend(b, bench.backend, false);
  b->add_option("--units", bench.units)->check(CLI::NonNegativeNumber);
  b->add_option("--unit-len", bench.unit_len, "characters per unit")->check(CLI::PositiveNumber);
  b->add_option("--min-chars", bench.min_chars, "skip units shorter than this");

  StatsArgs stats;
  auto* t = app.add_subcommand("stats", "corpus statistics");
  t->add_option("--data,data", stats.data, "labeled JSONL ('-' for stdin)")->required();
  t->add_option("--annotations", stats.annotations, "annotation JSONL for agreement statistics");

  std::vector<std::string> argv_store{"chattox"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& ex) {
    return app.exit(ex, out, err) == 0 ? kExitOk : kExitUsage;
  }

  auto lexicon_given = [](CLI::App* sub, Backend& be) { be.lexicon_flag = sub->count("--lexicon") > 0; };
  lexicon_given(e, eval.backend);
  lexicon_given(k, classify);
  lexicon_given(v, captions.backend);
  lexicon_given(b, bench.backend);

  try {
    if (!(g.threshold > 0.0 && g.threshold < 1.0)) throw InvalidArgument("--threshold must lie in (0, 1)");
    if (c->parsed()) return cmd_consensus(consensus, g, in, out, err);
    if (s->parsed()) return cmd_split(split, g, in, out, err);
    if (e->parsed()) return cmd_eval(eval, g, in, out, err);
    if (k->parsed()) return cmd_classify(classify, g, in, out);
    if (v->parsed()) return cmd_scan_captions(captions, g, in, out);
    if (b->parsed()) return cmd_bench(bench, g, out);
    if (t->parsed()) return cmd_stats(stats, g, in, out, err);
  } catch (const std::exception& ex) {
    err << "chattox: " << ex.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace chattox::cli
