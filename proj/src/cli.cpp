#include "dsgsum/cli.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <thread>

#include "CLI11.hpp"
#include "dsgsum/eval.hpp"
#include "dsgsum/runtime.hpp"
#include "json.hpp"

namespace dsgsum::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// chunked worker pool over n items; jobs == 1 stays on the calling thread
void parallel_for(size_t n, int jobs, const std::function<void(size_t)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const int workers = std::min<int>(jobs, static_cast<int>(n));
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (size_t i = static_cast<size_t>(w); i < n; i += static_cast<size_t>(workers)) fn(i);
    });
  }
  for (std::thread& t : pool) t.join();
}

int cmd_extract(const std::string& corpus_path, const std::string& kb_path,
                const std::string& out_path, bool filter, int max_arg_words, int jobs) {
  std::vector<RawPair> pairs = load_corpus(corpus_path, Split::Test);
  RelationKB kb = kb_path.empty() ? RelationKB() : RelationKB::load(kb_path);
  GraphOptions opt;
  opt.filter_triples = filter;
  opt.max_arg_words = max_arg_words;
  std::vector<std::string> lines(pairs.size());
  parallel_for(pairs.size(), jobs,
               [&](size_t i) { lines[i] = build_graph(pairs[i], kb, opt).to_json_line(); });
  std::ofstream out(out_path);
  DSG_DATA_CHECK(out.good(), "cannot write '" << out_path << "'");
  for (const std::string& line : lines) out << line << "\n";
  DSG_LOG_INFO("extracted " << lines.size() << " graphs to " << out_path);
  return 0;
}

struct Prediction {
  std::string id;
  std::string summary;
};

std::vector<Prediction> load_predictions(const std::string& path) {
  std::ifstream in(path);
  DSG_DATA_CHECK(in.good(), "cannot open predictions '" << path << "'");
  std::vector<Prediction> preds;
  std::string line;
  size_t line_no = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": malformed JSON line: " + e.what());
    }
    DSG_DATA_CHECK(j.contains("id") && j.contains("summary"),
                   path << ":" << line_no << ": prediction needs 'id' and 'summary'");
    Prediction p{j["id"].get<std::string>(), j["summary"].get<std::string>()};
    DSG_DATA_CHECK(seen.insert(p.id).second,
                   path << ":" << line_no << ": duplicate id '" << p.id << "'");
    preds.push_back(std::move(p));
  }
  return preds;
}

std::vector<std::string> lower_tokens(const std::string& text) {
  std::vector<std::string> toks = split_ws(text);
  for (std::string& t : toks) t = lowercase(t);
  return toks;
}

std::vector<std::string> gold_summary_tokens(const RawPair& pair) {
  std::vector<std::string> toks;
  for (const auto& sent : pair.sum_tokens)
    for (const std::string& t : sent) toks.push_back(lowercase(t));
  return toks;
}

// entity surfaces found in the gold summary, deduplicated case-insensitively
std::vector<std::string> gold_summary_entities(const RawPair& pair) {
  RawPair as_doc;
  as_doc.id = pair.id;
  as_doc.document = pair.summary.empty() ? std::vector<std::string>{""} : pair.summary;
  as_doc.doc_tokens = pair.sum_tokens.empty() ? std::vector<std::vector<std::string>>{{}}
                                              : pair.sum_tokens;
  std::vector<std::string> surfaces;
  std::set<std::string> seen;
  for (const EntitySpan& sp : annotate_entities(as_doc, default_stopwords())) {
    const std::string key = lowercase(sp.surface);
    if (seen.insert(key).second) surfaces.push_back(key);
  }
  return surfaces;
}

int cmd_evaluate(const std::string& pred_path, const std::string& gold_path,
                 const std::string& report_path, const std::string& scores_path,
                 const std::string& score_metric, bool limited_length, int jobs,
                 std::ostream& out) {
  std::vector<Prediction> preds = load_predictions(pred_path);
  std::vector<RawPair> gold = load_corpus(gold_path, Split::Test);
  std::map<std::string, const RawPair*> gold_by_id;
  for (const RawPair& p : gold) gold_by_id[p.id] = &p;

  struct Row {
    RougeScore r1, r2, rl;
    std::optional<double> coverage;
  };
  std::vector<Row> rows(preds.size());
  std::vector<const RawPair*> refs(preds.size());
  for (size_t i = 0; i < preds.size(); ++i) {
    auto it = gold_by_id.find(preds[i].id);
    DSG_DATA_CHECK(it != gold_by_id.end(),
                   "prediction id '" << preds[i].id << "' missing from gold corpus");
    refs[i] = it->second;
  }
  parallel_for(preds.size(), jobs, [&](size_t i) {
    std::vector<std::string> cand = lower_tokens(preds[i].summary);
    std::vector<std::string> ref = gold_summary_tokens(*refs[i]);
    if (limited_length && cand.size() > ref.size()) cand.resize(ref.size());
    Row& row = rows[i];
    row.r1 = rouge_n(cand, ref, 1);
    row.r2 = rouge_n(cand, ref, 2);
    row.rl = rouge_l(cand, ref);
    row.coverage = entity_coverage(gold_summary_entities(*refs[i]), cand);
  });

  EvalReport report;
  report.n = static_cast<int>(rows.size());
  double cov_sum = 0.0;
  int cov_n = 0;
  auto acc = [&](RougeScore& dst, const RougeScore& s) {
    dst.precision += s.precision;
    dst.recall += s.recall;
    dst.f1 += s.f1;
  };
  for (const Row& row : rows) {
    acc(report.rouge1, row.r1);
    acc(report.rouge2, row.r2);
    acc(report.rougeL, row.rl);
    if (row.coverage) {
      cov_sum += *row.coverage;
      ++cov_n;
    }
  }
  if (!rows.empty()) {
    const double inv = 1.0 / static_cast<double>(rows.size());
    for (RougeScore* s : {&report.rouge1, &report.rouge2, &report.rougeL}) {
      s->precision *= inv;
      s->recall *= inv;
      s->f1 *= inv;
    }
  }
  report.entity_coverage = cov_n > 0 ? cov_sum / cov_n : 0.0;

  out << report.to_json() << "\n";
  if (!report_path.empty()) {
    std::ofstream rf(report_path);
    DSG_DATA_CHECK(rf.good(), "cannot write report '" << report_path << "'");
    rf << report.to_json() << "\n";
  }
  if (!scores_path.empty()) {
    std::ofstream sf(scores_path);
    DSG_DATA_CHECK(sf.good(), "cannot write scores '" << scores_path << "'");
    for (size_t i = 0; i < preds.size(); ++i) {
      const Row& row = rows[i];
      const RougeScore& s = score_metric == "rouge2" ? row.r2
                            : score_metric == "rougeL" ? row.rl
                                                       : row.r1;
      sf << preds[i].id << "\t" << (limited_length ? s.recall : s.f1) << "\n";
    }
  }
  return 0;
}

std::vector<std::pair<std::string, double>> load_scores(const std::string& path) {
  std::ifstream in(path);
  DSG_DATA_CHECK(in.good(), "cannot open scores '" << path << "'");
  std::vector<std::pair<std::string, double>> scores;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const size_t tab = line.find('\t');
    DSG_DATA_CHECK(tab != std::string::npos, path << ":" << line_no << ": expected id<TAB>score");
    try {
      scores.emplace_back(line.substr(0, tab), std::stod(line.substr(tab + 1)));
    } catch (const std::exception&) {
      throw DataError(path + ":" + std::to_string(line_no) + ": bad score value");
    }
  }
  return scores;
}

int cmd_sigtest(const std::string& a_path, const std::string& b_path, int sample_size, int iters,
                uint64_t seed, const std::string& out_path, std::ostream& out) {
  auto a = load_scores(a_path);
  auto b = load_scores(b_path);
  DSG_DATA_CHECK(a.size() == b.size(), "score files differ in length: " << a.size() << " vs "
                                           << b.size());
  std::map<std::string, double> b_by_id(b.begin(), b.end());
  DSG_DATA_CHECK(b_by_id.size() == b.size(), "duplicate ids in '" << b_path << "'");
  std::vector<double> sa, sb;
  for (const auto& [id, score] : a) {
    auto it = b_by_id.find(id);
    DSG_DATA_CHECK(it != b_by_id.end(), "id '" << id << "' missing from '" << b_path << "'");
    sa.push_back(score);
    sb.push_back(it->second);
  }
  SigTestConfig cfg;
  cfg.sample_size = sample_size;
  cfg.n_iter = iters;
  cfg.seed = seed;
  const double p = paired_bootstrap(sa, sb, cfg);
  const std::string report = sigtest_report_json(p, cfg);
  out << report << "\n";
  if (!out_path.empty()) {
    std::ofstream f(out_path);
    DSG_DATA_CHECK(f.good(), "cannot write '" << out_path << "'");
    f << report << "\n";
  }
  return 0;
}

int cmd_summarize(const std::string& model_dir, std::string checkpoint,
                  const std::string& corpus_path, const std::string& kb_path,
                  const std::string& out_path, int beam, int max_len, bool no_length_norm) {
  ModelConfig mc = ModelConfig::load((fs::path(model_dir) / "model_config.json").string());
  Vocab vocab = Vocab::load((fs::path(model_dir) / "vocab.json").string());
  DSG_DATA_CHECK(mc.vocab_size == vocab.size(), "model config and vocab disagree on size");
  if (checkpoint.empty()) {
    const std::string ck_index = (fs::path(model_dir) / "checkpoints.json").string();
    std::ifstream in(ck_index);
    DSG_DATA_CHECK(in.good(), "no --checkpoint given and '" << ck_index << "' not found");
    json j;
    in >> j;
    DSG_DATA_CHECK(j.contains("selected") && !j["selected"].empty(),
                   "'" << ck_index << "' lists no selected checkpoints");
    checkpoint = j["selected"][0]["path"].get<std::string>();
  }
  Model model(mc, 0);
  model.params().load_checkpoint(checkpoint);

  std::vector<RawPair> pairs = load_corpus(corpus_path, Split::Test);
  RelationKB kb = kb_path.empty() ? RelationKB() : RelationKB::load(kb_path);
  DecodeConfig dc;
  dc.beam_size = beam;
  dc.max_len = max_len > 0 ? max_len : mc.max_tgt_len;
  dc.length_normalize = !no_length_norm;

  std::ofstream out(out_path);
  DSG_DATA_CHECK(out.good(), "cannot write '" << out_path << "'");
  for (const RawPair& pair : pairs) {
    ordered_json j;
    j["id"] = pair.id;
    j["summary"] = summarize_pair(model, vocab, kb, pair, dc);
    out << j.dump() << "\n";
  }
  DSG_LOG_INFO("wrote " << pairs.size() << " summaries to " << out_path);
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"graph-augmented abstractive summarizer"};
  app.require_subcommand(1);

  // extract
  auto* extract = app.add_subcommand("extract", "build semantic graphs from a corpus");
  std::string ex_corpus, ex_kb, ex_out;
  bool ex_filter = false;
  int ex_max_arg_words = 10, ex_jobs = 1;
  extract->add_option("--corpus", ex_corpus, "corpus JSONL")->required();
  extract->add_option("--kb", ex_kb, "relation KB TSV");
  extract->add_option("--out", ex_out, "output graphs JSONL")->required();
  extract->add_flag("--filter-triples", ex_filter, "drop triples with overlong arguments");
  extract->add_option("--max-arg-words", ex_max_arg_words, "argument length cap");
  extract->add_option("--jobs", ex_jobs, "worker threads");

  // train
  auto* train = app.add_subcommand("train", "train a model from a JSON config");
  std::string tr_config, tr_corpus, tr_valid, tr_kb, tr_out_dir;
  int64_t tr_max_steps = -1, tr_ckpt_int = -1;
  int tr_batch = -1;
  int64_t tr_seed = -1;
  train->add_option("--config", tr_config, "train config JSON file")->required();
  train->add_option("--corpus", tr_corpus, "override: training corpus");
  train->add_option("--valid-corpus", tr_valid, "override: validation corpus");
  train->add_option("--kb", tr_kb, "override: relation KB");
  train->add_option("--out-dir", tr_out_dir, "override: output directory");
  train->add_option("--max-steps", tr_max_steps, "override: training steps");
  train->add_option("--batch-size", tr_batch, "override: batch size");
  train->add_option("--seed", tr_seed, "override: RNG seed");
  train->add_option("--checkpoint-interval", tr_ckpt_int, "override: checkpoint interval");

  // summarize
  auto* summarize = app.add_subcommand("summarize", "decode summaries with a trained model");
  std::string su_dir, su_ckpt, su_corpus, su_kb, su_out;
  int su_beam = 5, su_max_len = 0;
  bool su_no_norm = false;
  summarize->add_option("--model-dir", su_dir, "directory written by train")->required();
  summarize->add_option("--checkpoint", su_ckpt, "checkpoint file (default: best)");
  summarize->add_option("--corpus", su_corpus, "corpus JSONL")->required();
  summarize->add_option("--kb", su_kb, "relation KB TSV");
  summarize->add_option("--out", su_out, "output summaries JSONL")->required();
  summarize->add_option("--beam", su_beam, "beam size");
  summarize->add_option("--max-len", su_max_len, "decode length cap");
  summarize->add_flag("--no-length-norm", su_no_norm, "rank beams by raw log-probability");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "score predictions against gold summaries");
  std::string ev_pred, ev_gold, ev_report, ev_scores, ev_metric = "rouge1";
  bool ev_limited = false;
  int ev_jobs = 1;
  evaluate->add_option("--pred", ev_pred, "predictions JSONL")->required();
  evaluate->add_option("--gold", ev_gold, "gold corpus JSONL")->required();
  evaluate->add_option("--report", ev_report, "write the report JSON here too");
  evaluate->add_option("--scores-out", ev_scores, "per-example id<TAB>score file");
  evaluate->add_option("--score-metric", ev_metric, "rouge1|rouge2|rougeL")
      ->check(CLI::IsMember({"rouge1", "rouge2", "rougeL"}));
  evaluate->add_flag("--limited-length", ev_limited,
                     "truncate candidates to the gold length (recall-oriented)");
  evaluate->add_option("--jobs", ev_jobs, "worker threads");

  // sigtest
  auto* sigtest = app.add_subcommand("sigtest", "paired bootstrap significance test");
  std::string sg_a, sg_b, sg_out;
  int sg_sample = 3000, sg_iters = 100;
  uint64_t sg_seed = 0;
  sigtest->add_option("--a", sg_a, "system A scores (id<TAB>score)")->required();
  sigtest->add_option("--b", sg_b, "system B scores")->required();
  sigtest->add_option("--sample-size", sg_sample, "resample size");
  sigtest->add_option("--iters", sg_iters, "bootstrap iterations");
  sigtest->add_option("--seed", sg_seed, "RNG seed");
  sigtest->add_option("--out", sg_out, "write the report JSON here too");

  std::vector<char*> argv;
  std::vector<std::string> storage = args;
  storage.insert(storage.begin(), "dsgsum");
  argv.reserve(storage.size());
  for (std::string& s : storage) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    std::ostringstream usage;
    const int code = app.exit(e, usage, usage);
    (code == 0 ? out : err) << usage.str();
    return code == 0 ? 0 : 1;
  }

  try {
    if (extract->parsed())
      return cmd_extract(ex_corpus, ex_kb, ex_out, ex_filter, ex_max_arg_words, ex_jobs);
    if (train->parsed()) {
      TrainConfig cfg = TrainConfig::from_json_file(tr_config);
      if (!tr_corpus.empty()) cfg.corpus = tr_corpus;
      if (!tr_valid.empty()) cfg.valid_corpus = tr_valid;
      if (!tr_kb.empty()) cfg.kb = tr_kb;
      if (!tr_out_dir.empty()) cfg.out_dir = tr_out_dir;
      if (tr_max_steps > 0) cfg.max_steps = tr_max_steps;
      if (tr_batch > 0) cfg.batch_size = tr_batch;
      if (tr_seed >= 0) cfg.seed = static_cast<uint64_t>(tr_seed);
      if (tr_ckpt_int > 0) cfg.checkpoint_interval = tr_ckpt_int;
      TrainOutcome outcome = run_training(cfg);
      out << "final_train_loss\t" << outcome.final_train_loss << "\n";
      return 0;
    }
    if (summarize->parsed())
      return cmd_summarize(su_dir, su_ckpt, su_corpus, su_kb, su_out, su_beam, su_max_len,
                           su_no_norm);
    if (evaluate->parsed())
      return cmd_evaluate(ev_pred, ev_gold, ev_report, ev_scores, ev_metric, ev_limited, ev_jobs,
                          out);
    if (sigtest->parsed())
      return cmd_sigtest(sg_a, sg_b, sg_sample, sg_iters, sg_seed, sg_out, out);
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace dsgsum::cli
