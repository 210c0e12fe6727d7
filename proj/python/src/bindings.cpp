#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "hasqa/codestore.hpp"
#include "hasqa/errors.hpp"
#include "hasqa/hashing.hpp"
#include "hasqa/model.hpp"
#include "hasqa/serve.hpp"
#include "hasqa/synthetic.hpp"
#include "hasqa/trainer.hpp"

namespace py = pybind11;
using namespace hasqa;

namespace {

TokenSequence encode_text(const std::string& text, const ModelParams<float>& model,
                          const Vocabulary& vocab) {
  return tokenize_pad(tokenize(text), model.config.seq_len, vocab);
}

py::dict record_dict(const EpochRecord& r) {
  py::dict d;
  d["epoch"] = r.epoch;
  d["train_loss"] = r.train_loss;
  d["dev_p1"] = r.dev_p1;
  d["dev_mrr"] = r.dev_mrr;
  d["mean_abs_b"] = r.mean_abs_b;
  return d;
}

py::list ranking_list(const RankingResult& r) {
  py::list out;
  for (const auto& a : r.ranked) out.append(py::make_tuple(a.id, a.score));
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Binary answer codes with question-conditioned attention ranking";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<InputError>(m, "InputError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<UsageError>(m, "UsageError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<IndexError>(m, "IndexError", base.ptr());
  py::register_exception<CapacityError>(m, "CapacityError", base.ptr());

  py::class_<Vocabulary>(m, "Vocabulary")
      .def_static("from_file", [](const std::filesystem::path& jsonl, int min_count) {
        return build_vocab(read_corpus(jsonl), min_count);
      }, py::arg("jsonl"), py::arg("min_count") = 1, "Build from a dataset's questions and answers.")
      .def_static("load", &Vocabulary::load)
      .def("save", &Vocabulary::save)
      .def("id", [](const Vocabulary& v, const std::string& t) { return v.id(t); })
      .def("token", &Vocabulary::token, py::return_value_policy::copy)
      .def("__len__", &Vocabulary::size)
      .def("__contains__", [](const Vocabulary& v, const std::string& t) { return v.contains(t); });

  py::class_<Dataset>(m, "Dataset")
      .def_static("load", [](const std::filesystem::path& path, int length, const Vocabulary& vocab) {
        return load_dataset(path, length, vocab);
      }, py::arg("path"), py::arg("length"), py::arg("vocab"))
      .def("__len__", &Dataset::size)
      .def_readonly("question_ids", &Dataset::question_order)
      .def_readonly("pools", &Dataset::pools)
      .def_readonly("positives", &Dataset::positives)
      .def_property_readonly("answer_count", [](const Dataset& d) { return d.answers.size(); });

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def(py::init([](const py::kwargs& kw) {
        TrainConfig c;
        for (const auto& [k, v] : kw) c.set(py::str(k), py::str(v));
        return c;
      }))
      .def_static("parse", &parse_config)
      .def_static("load", &load_config)
      .def("set", &TrainConfig::set)
      .def("validate", &TrainConfig::validate)
      .def("to_text", &TrainConfig::to_text)
      .def_readwrite("beta", &TrainConfig::beta)
      .def_readwrite("delta", &TrainConfig::delta)
      .def_readwrite("margin", &TrainConfig::margin)
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("weight_decay", &TrainConfig::weight_decay)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("seq_len", &TrainConfig::seq_len)
      .def_readwrite("model_dim", &TrainConfig::model_dim)
      .def_readwrite("embed_dim", &TrainConfig::embed_dim)
      .def_readwrite("attn_dim", &TrainConfig::attn_dim)
      .def_readwrite("ffn_dim", &TrainConfig::ffn_dim)
      .def_readwrite("layers", &TrainConfig::layers)
      .def_readwrite("min_count", &TrainConfig::min_count)
      .def_readwrite("beta_grid", &TrainConfig::beta_grid)
      .def_readwrite("delta_grid", &TrainConfig::delta_grid);

  py::class_<ModelParams<float>>(m, "Model")
      .def_static("init", [](const TrainConfig& c, int vocab_size, std::uint64_t seed) {
        return init_params(c.model_config(vocab_size), seed);
      }, py::arg("config"), py::arg("vocab_size"), py::arg("seed"))
      .def_static("load", &load_checkpoint)
      .def("save", [](const ModelParams<float>& p, const std::filesystem::path& path) {
        save_checkpoint(p, path);
      })
      .def_property_readonly("seq_len", [](const ModelParams<float>& p) { return p.config.seq_len; })
      .def_property_readonly("model_dim", [](const ModelParams<float>& p) { return p.config.model_dim; })
      .def_property_readonly("beta", [](const ModelParams<float>& p) { return p.config.beta; })
      .def_property_readonly("parameter_count", &ModelParams<float>::parameter_count)
      .def("encode", [](const ModelParams<float>& p, const std::string& text, const Vocabulary& v) {
        return encode_sequence(p, encode_text(text, p, v));
      }, "D x L encoder output for a text.")
      .def("soft_code", [](const ModelParams<float>& p, const std::string& text, const Vocabulary& v) {
        return soft_answer_matrix(p, encode_text(text, p, v));
      }, "tanh(beta H) for an answer text.")
      .def("hard_code", [](const ModelParams<float>& p, const std::string& text, const Vocabulary& v) {
        return answer_code(p, encode_text(text, p, v)).to_dense<float>();
      }, "+-1 code matrix for an answer text.");

  py::class_<CodeStore>(m, "CodeStore")
      .def_static("build", [](const ModelParams<float>& p, const Dataset& d) {
        return build_index(p, d.answers);
      }, py::arg("model"), py::arg("dataset"))
      .def_static("load", &load_store)
      .def("save", [](const CodeStore& s, const std::filesystem::path& path) { save_store(s, path); })
      .def("to_bytes", [](const CodeStore& s) {
        const auto b = serialize_store(s);
        return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
      })
      .def_static("from_bytes", [](const py::bytes& raw) {
        const std::string s = raw;
        return deserialize_store(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
      })
      .def("__len__", &CodeStore::size)
      .def("__eq__", [](const CodeStore& a, const CodeStore& b) { return a == b; })
      .def_property_readonly("rows", &CodeStore::rows)
      .def_property_readonly("cols", &CodeStore::cols)
      .def_property_readonly("payload_bytes", &CodeStore::payload_bytes)
      .def_property_readonly("ids", [](const CodeStore& s) {
        std::vector<std::string> ids;
        for (const auto& e : s.entries()) ids.push_back(e.id);
        return ids;
      });

  m.def("train", [](const TrainConfig& c, const Vocabulary& vocab, const Dataset& train_set,
                    const Dataset& dev_set, const std::function<void(py::dict)>& on_epoch) {
    EpochCallback cb;
    if (on_epoch) cb = [&](const EpochRecord& r) { on_epoch(record_dict(r)); };
    auto r = train(c, static_cast<int>(vocab.size()), train_set, dev_set, cb);
    py::list history;
    for (const auto& h : r.history) history.append(record_dict(h));
    return py::make_tuple(std::move(r.params), history, r.best_epoch);
  }, py::arg("config"), py::arg("vocab"), py::arg("train"), py::arg("dev"),
        py::arg("on_epoch") = nullptr,
        "Returns (model from the best dev P@1 epoch, per-epoch history, best epoch).");

  m.def("rank", [](const ModelParams<float>& p, const CodeStore& store, const std::string& question,
                   const Vocabulary& vocab, int threads) {
    const auto q = encode_text(question, p, vocab);
    return ranking_list(Ranker(p, threads).rank("query", q, store));
  }, py::arg("model"), py::arg("store"), py::arg("question"), py::arg("vocab"),
        py::arg("threads") = 1, "[(answer id, cosine)] best first.");

  m.def("evaluate", [](const ModelParams<float>& p, const CodeStore& store, const Dataset& d,
                       int threads) {
    const auto m = evaluate(rank_dataset(d, store, p, threads), d.positives);
    py::dict out;
    out["p1"] = m.p1;
    out["mrr"] = m.mrr;
    out["map"] = m.map;
    return out;
  }, py::arg("model"), py::arg("store"), py::arg("dataset"), py::arg("threads") = 1);

  m.def("memory_report", [](std::uint64_t rows, std::uint64_t cols, std::uint64_t count,
                            std::uint64_t bytes_per_element) {
    const auto r = memory_report(rows, cols, count, bytes_per_element);
    py::dict out;
    out["float_bytes"] = r.float_bytes;
    out["binary_bytes"] = r.binary_bytes;
    out["ratio"] = r.ratio;
    return out;
  }, py::arg("rows"), py::arg("cols"), py::arg("count"), py::arg("bytes_per_element") = 4);

  m.def("grad_check", [](int points, std::uint64_t seed) {
    GradCheckOptions o;
    o.points = points;
    o.seed = seed;
    return grad_check(o).max_relative_error;
  }, py::arg("points") = 10, py::arg("seed") = 7, "Max relative error per parameter group.");

  m.def("soft_binarize", [](const Mat<double>& h, double beta) { return soft_binarize(h, beta); });
  m.def("hard_binarize", [](const Mat<double>& b) { return hard_binarize(b).to_dense<double>(); });
  m.def("pack_bits", [](const Mat<double>& signs) {
    const auto b = pack_bits(signs);
    return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
  });
  m.def("unpack_bits", [](const py::bytes& raw, std::size_t rows, std::size_t cols) {
    const std::string s = raw;
    return unpack_bits<double>(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()),
                               rows, cols);
  });

  m.def("synthetic_jsonl", [](int questions, int candidates, std::uint64_t seed,
                              const std::string& prefix) {
    SyntheticOptions o;
    o.questions = questions;
    o.candidates = candidates;
    o.seed = seed;
    o.prefix = prefix;
    return synthetic_jsonl(o);
  }, py::arg("questions") = 200, py::arg("candidates") = 20, py::arg("seed") = 1,
        py::arg("prefix") = "q");
}
