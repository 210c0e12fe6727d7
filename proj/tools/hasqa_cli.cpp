// hasqa: train, index, query, evaluate and benchmark hashed answer
// selection models from the command line.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "hasqa/binary_io.hpp"
#include "hasqa/codestore.hpp"
#include "hasqa/data.hpp"
#include "hasqa/errors.hpp"
#include "hasqa/model.hpp"
#include "hasqa/serve.hpp"
#include "hasqa/synthetic.hpp"
#include "hasqa/trainer.hpp"

namespace fs = std::filesystem;
using namespace hasqa;

namespace {

// Removes registered outputs unless commit() is reached.
class Artifacts {
 public:
  ~Artifacts() {
    if (committed_) return;
    for (const auto& p : paths_) {
      std::error_code ec;
      fs::remove(p, ec);
    }
  }
  const fs::path& add(fs::path p) {
    paths_.push_back(std::move(p));
    return paths_.back();
  }
  void commit() { committed_ = true; }

 private:
  std::vector<fs::path> paths_;
  bool committed_ = false;
};

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> beta, delta, margin;
  std::optional<int> epochs, batch_size;
  std::string mode = "binary-store";
  std::string store, checkpoint, out, vocab;
  std::string train_path, dev_path, data_path, question, trace;
  int threads = 1, repetitions = 1, top = 10, points = 10;
  int questions = 200, dev_questions = 50, candidates = 20;
  std::uint64_t max_float_bytes = std::uint64_t{4} << 30;
};

TrainConfig resolve_config(const Options& o) {
  TrainConfig c = o.config.empty() ? TrainConfig{} : load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.beta) c.beta = *o.beta;
  if (o.delta) c.delta = *o.delta;
  if (o.margin) c.margin = *o.margin;
  if (o.epochs) c.epochs = *o.epochs;
  if (o.batch_size) c.batch_size = *o.batch_size;
  c.validate();
  std::clog << "resolved config:\n" << c.to_text();
  return c;
}

fs::path vocab_path_for(const Options& o) {
  if (!o.vocab.empty()) return o.vocab;
  return fs::path(o.checkpoint).parent_path() / "vocab.txt";
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw InputError(std::string("missing required flag ") + flag);
}

int cmd_synth(const Options& o) {
  require(o.out, "--out");
  fs::create_directories(o.out);
  Artifacts art;
  SyntheticOptions s;
  s.candidates = o.candidates;
  s.seed = o.seed.value_or(1);
  s.questions = o.questions;
  s.prefix = "train";
  write_file_atomic(art.add(fs::path(o.out) / "train.jsonl"), synthetic_jsonl(s));
  s.questions = o.dev_questions;
  s.seed = s.seed * 1000003u + 17u;
  s.prefix = "dev";
  write_file_atomic(art.add(fs::path(o.out) / "dev.jsonl"), synthetic_jsonl(s));
  art.commit();
  std::cout << "wrote " << (fs::path(o.out) / "train.jsonl").string() << " and "
            << (fs::path(o.out) / "dev.jsonl").string() << '\n';
  return 0;
}

int cmd_train(const Options& o) {
  require(o.train_path, "--train");
  require(o.dev_path, "--dev");
  require(o.out, "--out");
  const TrainConfig config = resolve_config(o);
  const Vocabulary vocab = build_vocab(read_corpus(o.train_path), config.min_count);
  const Dataset train_set = load_dataset(o.train_path, config.seq_len, vocab);
  const Dataset dev_set = load_dataset(o.dev_path, config.seq_len, vocab);

  const auto result = train(config, static_cast<int>(vocab.size()), train_set, dev_set,
                            [](const EpochRecord& r) {
                              std::clog << "epoch " << r.epoch << " loss=" << r.train_loss
                                        << " dev_P@1=" << r.dev_p1 << " dev_MRR=" << r.dev_mrr
                                        << " mean|B|=" << r.mean_abs_b << '\n';
                            });
  fs::create_directories(o.out);
  Artifacts art;
  const fs::path dir(o.out);
  save_checkpoint(result.params, art.add(dir / "model.hasp"));
  vocab.save(art.add(dir / "vocab.txt"));
  write_file_atomic(art.add(dir / "history.csv"), history_csv(result.history));
  write_file_atomic(art.add(dir / "config.txt"), config.to_text());
  art.commit();
  const auto& best = result.history.at(static_cast<std::size_t>(result.best_epoch - 1));
  std::cout << "best epoch " << result.best_epoch << ": dev P@1=" << best.dev_p1
            << " MRR=" << best.dev_mrr << "\ncheckpoint " << (dir / "model.hasp").string() << '\n';
  return 0;
}

int cmd_index(const Options& o) {
  require(o.checkpoint, "--checkpoint");
  require(o.data_path, "--data");
  require(o.out, "--out");
  const auto params = load_checkpoint(o.checkpoint);
  const auto vocab = Vocabulary::load(vocab_path_for(o));
  const Dataset ds = load_dataset(o.data_path, params.config.seq_len, vocab);
  const CodeStore store = build_index(params, ds.answers);
  Artifacts art;
  save_store(store, art.add(o.out));
  art.commit();
  const auto mem = memory_report(store.rows(), store.cols(), store.size());
  std::cout << "indexed " << store.size() << " answers (D=" << store.rows() << ", L=" << store.cols()
            << "): " << mem.binary_bytes << " payload bytes vs " << mem.float_bytes
            << " as float32\n";
  return 0;
}

int cmd_query(const Options& o) {
  require(o.checkpoint, "--checkpoint");
  require(o.store, "--store");
  require(o.question, "--question");
  const auto params = load_checkpoint(o.checkpoint);
  const auto vocab = Vocabulary::load(vocab_path_for(o));
  const CodeStore store = load_store(o.store);
  const auto q = tokenize_pad(tokenize(o.question), params.config.seq_len, vocab);
  const auto result = Ranker(params, o.threads).rank("query", q, store);
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(o.top), result.ranked.size());
  std::cout.precision(6);
  for (std::size_t i = 0; i < n; ++i) {
    std::cout << (i + 1) << '\t' << result.ranked[i].id << '\t' << std::fixed
              << result.ranked[i].score << '\n';
  }
  return 0;
}

int cmd_eval(const Options& o) {
  require(o.checkpoint, "--checkpoint");
  require(o.data_path, "--data");
  const auto params = load_checkpoint(o.checkpoint);
  const auto vocab = Vocabulary::load(vocab_path_for(o));
  const Dataset ds = load_dataset(o.data_path, params.config.seq_len, vocab);
  const CodeStore store = o.store.empty() ? build_index(params, ds.answers) : load_store(o.store);
  const auto rankings = rank_dataset(ds, store, params, o.threads);
  const auto m = evaluate(rankings, ds.positives);

  std::ostringstream csv;
  csv.precision(9);
  csv << "questions,P@1,MRR,MAP\n" << ds.size() << ',' << m.p1 << ',' << m.mrr << ',' << m.map << '\n';
  Artifacts art;
  if (!o.out.empty()) write_file_atomic(art.add(o.out), csv.str());
  if (!o.trace.empty()) {
    std::ostringstream trace;
    for (const auto& r : rankings) {
      nlohmann::json rec;
      rec["qid"] = r.qid;
      rec["aids"] = nlohmann::json::array();
      rec["scores"] = nlohmann::json::array();
      for (const auto& a : r.ranked) {
        rec["aids"].push_back(a.id);
        rec["scores"].push_back(a.score);
      }
      trace << rec.dump() << '\n';
    }
    write_file_atomic(art.add(o.trace), trace.str());
  }
  art.commit();
  std::cout << csv.str();
  return 0;
}

int cmd_bench(const Options& o) {
  require(o.data_path, "--data");
  std::optional<ModelParams<float>> params;
  Vocabulary vocab;
  if (!o.checkpoint.empty()) {
    params = load_checkpoint(o.checkpoint);
    vocab = Vocabulary::load(vocab_path_for(o));
  } else {
    // Untrained model at the configured dims; timing does not depend on weights.
    const TrainConfig config = resolve_config(o);
    vocab = build_vocab(read_corpus(o.data_path), config.min_count);
    params = init_params(config.model_config(static_cast<int>(vocab.size())), config.seed);
  }
  const Dataset ds = load_dataset(o.data_path, params->config.seq_len, vocab);
  std::optional<CodeStore> store;
  if (!o.store.empty()) store = load_store(o.store);

  std::vector<ServeMode> modes;
  if (o.mode == "all") {
    modes = {ServeMode::kRecalc, ServeMode::kFloatStore, ServeMode::kBinaryStore};
  } else {
    modes = {parse_serve_mode(o.mode)};
  }
  BenchOptions bo;
  bo.repetitions = o.repetitions;
  bo.threads = o.threads;
  bo.max_float_bytes = o.max_float_bytes;

  std::ostringstream csv;
  csv << bench_csv_header() << '\n';
  std::cout << "mode           s/question    memory_bytes    P@1      MRR      MAP\n";
  for (auto mode : modes) {
    const auto r = bench(mode, ds, *params, bo, store ? &*store : nullptr);
    csv << bench_csv_row(r) << '\n';
    char line[160];
    std::snprintf(line, sizeof line, "%-14s %-13.6f %-15llu %-8.4f %-8.4f %-8.4f\n",
                  std::string(to_string(mode)).c_str(), r.seconds_per_question,
                  static_cast<unsigned long long>(r.memory_bytes), r.metrics.p1, r.metrics.mrr,
                  r.metrics.map);
    std::cout << line;
  }
  Artifacts art;
  if (!o.out.empty()) write_file_atomic(art.add(o.out), csv.str());
  art.commit();
  return 0;
}

int cmd_gradcheck(const Options& o) {
  GradCheckOptions g;
  if (o.seed) g.seed = *o.seed;
  if (o.beta) g.model.beta = *o.beta;
  if (o.delta) g.delta = *o.delta;
  if (o.margin) g.margin = *o.margin;
  g.points = o.points;
  std::clog << "gradcheck: D=" << g.model.model_dim << " E=" << g.model.embed_dim
            << " L=" << g.model.seq_len << " M=" << g.model.attn_dim << " F=" << g.model.ffn_dim
            << " beta=" << g.model.beta << " delta=" << g.delta << " points=" << g.points
            << " step=" << g.step << " tol=" << g.tolerance << '\n';
  const auto report = grad_check(g);
  for (const auto& [group, err] : report.max_relative_error) {
    std::cout << (err <= g.tolerance ? "PASS " : "FAIL ") << group << " max_rel_err=" << err << '\n';
  }
  if (!report.passed()) {
    std::string groups;
    for (const auto& f : report.failures) groups += (groups.empty() ? "" : ",") + f;
    throw NumericError("gradient check failed for: " + groups);
  }
  return 0;
}

int cmd_sensitivity(const Options& o) {
  require(o.train_path, "--train");
  require(o.dev_path, "--dev");
  const TrainConfig config = resolve_config(o);
  const Vocabulary vocab = build_vocab(read_corpus(o.train_path), config.min_count);
  const Dataset train_set = load_dataset(o.train_path, config.seq_len, vocab);
  const Dataset dev_set = load_dataset(o.dev_path, config.seq_len, vocab);
  const auto rows = sensitivity(config, static_cast<int>(vocab.size()), train_set, dev_set);
  const std::string csv = sensitivity_csv(rows);
  Artifacts art;
  if (!o.out.empty()) write_file_atomic(art.add(o.out), csv);
  art.commit();
  std::cout << csv;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hashing-based answer selection: binary answer codes with attention ranking"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "key=value config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "random seed");
    sub->add_option("--beta", o.beta, "tanh sharpness beta");
    sub->add_option("--delta", o.delta, "binary constraint weight delta");
    sub->add_option("--margin", o.margin, "hinge margin");
    sub->add_option("--epochs", o.epochs, "training epochs");
    sub->add_option("--batch-size", o.batch_size, "triplets per step");
    sub->add_option("--mode", o.mode, "serving mode: recalc, float-store, binary-store, all");
    sub->add_option("--store", o.store, "code store (.hasb)");
    sub->add_option("--checkpoint", o.checkpoint, "model checkpoint (.hasp)");
    sub->add_option("--vocab", o.vocab, "vocabulary file (default: vocab.txt next to checkpoint)");
    sub->add_option("--out", o.out, "output path");
    sub->add_option("--threads", o.threads, "candidate scoring threads")->check(CLI::PositiveNumber);
  };

  auto* synth = app.add_subcommand("synth", "write the synthetic train/dev corpus");
  common(synth);
  synth->add_option("--questions", o.questions, "training questions");
  synth->add_option("--dev-questions", o.dev_questions, "dev questions");
  synth->add_option("--candidates", o.candidates, "candidates per question");

  auto* train_cmd = app.add_subcommand("train", "train a model; writes checkpoint, vocab, history");
  common(train_cmd);
  train_cmd->add_option("--train", o.train_path, "training JSONL")->check(CLI::ExistingFile);
  train_cmd->add_option("--dev", o.dev_path, "dev JSONL")->check(CLI::ExistingFile);

  auto* index = app.add_subcommand("index", "encode and hash all answers into a .hasb store");
  common(index);
  index->add_option("--data", o.data_path, "dataset JSONL")->check(CLI::ExistingFile);

  auto* query = app.add_subcommand("query", "rank stored answers for one question");
  common(query);
  query->add_option("--question", o.question, "question text");
  query->add_option("--top", o.top, "answers to print");

  auto* eval = app.add_subcommand("eval", "P@1 / MRR / MAP from binary codes");
  common(eval);
  eval->add_option("--data", o.data_path, "dataset JSONL")->check(CLI::ExistingFile);
  eval->add_option("--trace", o.trace, "per-question JSONL trace");

  auto* bench_cmd = app.add_subcommand("bench", "latency and memory per serving mode");
  common(bench_cmd);
  bench_cmd->add_option("--data", o.data_path, "dataset JSONL")->check(CLI::ExistingFile);
  bench_cmd->add_option("--repetitions", o.repetitions, "passes over the question set");
  bench_cmd->add_option("--max-float-bytes", o.max_float_bytes, "float-store capacity");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
  common(gradcheck);
  gradcheck->add_option("--points", o.points, "random points");

  auto* sens = app.add_subcommand("sensitivity", "train over the beta x delta grid");
  common(sens);
  sens->add_option("--train", o.train_path, "training JSONL")->check(CLI::ExistingFile);
  sens->add_option("--dev", o.dev_path, "dev JSONL")->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return cmd_synth(o);
    if (*train_cmd) return cmd_train(o);
    if (*index) return cmd_index(o);
    if (*query) return cmd_query(o);
    if (*eval) return cmd_eval(o);
    if (*bench_cmd) return cmd_bench(o);
    if (*gradcheck) return cmd_gradcheck(o);
    if (*sens) return cmd_sensitivity(o);
  } catch (const Error& e) {
    std::cerr << "error[" << e.kind() << "]: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << '\n';
    return 3;
  }
  return 1;
}
