#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "textfuse/complexity.hpp"
#include "textfuse/dataset.hpp"
#include "textfuse/gradcheck.hpp"
#include "textfuse/kernels.hpp"
#include "textfuse/train.hpp"

using nlohmann::json;
using namespace textfuse;

namespace {

json load_json(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void print_json(const json& j) { std::cout << j.dump(2) << '\n'; }

std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::string trace_text(const DecodeTrace& trace, const Vocabulary& vocab, const std::vector<std::string>& ocr) {
  std::ostringstream os;
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    const DecodingStep& s = trace.steps[i];
    os << "  " << std::setw(2) << i << "  " << (s.source == DecodingStep::Source::vocab ? "vocab" : "ocr  ") << ' '
       << std::setw(4) << s.index << "  " << render_step(s, vocab, ocr) << "  (" << fixed(trace.scores[i]) << ")\n";
  }
  return os.str();
}

struct Common {
  std::optional<std::uint64_t> seed;
  bool json = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "Random seed (overrides the config seed where one applies)");
  cmd->add_flag("--json", c.json, "Print machine-readable JSON instead of text");
}

int cmd_gen_data(const Common& c, const std::string& spec_path, const std::string& out_path) {
  SyntheticSpec spec = load_json(spec_path).get<SyntheticSpec>();
  if (c.seed) spec.seed = *c.seed;
  const Dataset data = generate_synthetic(spec);
  save_dataset(data, out_path);
  if (c.json) {
    print_json({{"instances", data.instances.size()}, {"vocab_size", data.vocab.size()}, {"path", out_path},
                {"vocab_path", out_path + ".vocab"}, {"spec", spec}});
  } else {
    std::cout << "wrote " << data.instances.size() << " " << to_string(spec.task) << " instances to " << out_path
              << " (vocabulary of " << data.vocab.size() << " in " << out_path << ".vocab)\n";
  }
  return 0;
}

int cmd_train(const Common& c, const std::string& config_path, const std::string& output_override) {
  RunConfig run = RunConfig::from_json(load_json(config_path));
  if (c.seed) run.train.seed = *c.seed;
  if (!output_override.empty()) run.output_dir = output_override;
  auto [train, eval] = run.load_data();
  if (run.train.model.vocab_size == 0) run.train.model.vocab_size = train.vocab.size();

  std::filesystem::create_directories(run.output_dir);
  const std::string csv_path = (std::filesystem::path(run.output_dir) / "metrics.csv").string();
  const std::string ckpt_path = (std::filesystem::path(run.output_dir) / "checkpoint.bin").string();
  std::ofstream csv(csv_path, std::ios::binary);
  if (!csv) throw ConfigError("cannot write " + csv_path);

  Trainer trainer(run.train, train.vocab);
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t total = run.train.total_iterations;
  const auto rows = trainer.run(train.instances, eval, &csv, [&](const MetricsRow& r) {
    if (!c.json && (r.iteration % 100 == 0 || r.iteration == total)) {
      std::cerr << "iter " << r.iteration << "/" << total << "  loss " << fixed(r.loss, 6) << "  lr " << r.lr;
      if (r.eval_accuracy) std::cerr << "  eval acc " << fixed(*r.eval_accuracy) << " anls " << fixed(*r.eval_anls);
      std::cerr << '\n';
    }
  });
  trainer.save_checkpoint(ckpt_path);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const MetricsRow& last = rows.back();
  if (c.json) {
    print_json({{"iterations", last.iteration}, {"final_loss", last.loss}, {"eval_accuracy", last.eval_accuracy.value_or(0.0)},
                {"eval_anls", last.eval_anls.value_or(0.0)}, {"seconds", seconds}, {"metrics", csv_path},
                {"checkpoint", ckpt_path}});
  } else {
    std::cout << "trained " << last.iteration << " iterations in " << fixed(seconds, 1) << " s\n"
              << "final loss      " << fixed(last.loss, 6) << '\n';
    if (last.eval_accuracy) {
      std::cout << "eval accuracy   " << fixed(*last.eval_accuracy) << '\n'
                << "eval mean ANLS  " << fixed(*last.eval_anls) << '\n';
    }
    std::cout << "metrics         " << csv_path << '\n' << "checkpoint      " << ckpt_path << '\n';
  }
  return 0;
}

int cmd_eval(const Common& c, const std::string& ckpt_path, const std::string& data_path, bool rows) {
  const auto trainer = Trainer::load_checkpoint(ckpt_path);
  const auto data = parse_jsonl(read_file(data_path));
  const EvalReport report = evaluate(trainer->model(), trainer->vocab(), data);
  if (c.json) {
    print_json(report_json(report, rows));
    return 0;
  }
  std::cout << "instances       " << report.rows.size() << '\n'
            << "accuracy        " << fixed(report.accuracy) << '\n'
            << "mean ANLS       " << fixed(report.mean_anls) << '\n';
  if (rows) {
    for (const EvalRow& r : report.rows) {
      std::cout << (r.correct ? "  ok   " : "  miss ") << r.id << "  anls " << fixed(r.anls) << "  \"" << r.prediction
                << "\"\n";
    }
  }
  return 0;
}

int cmd_decode(const Common& c, const std::string& ckpt_path, const std::string& data_path, const std::string& id) {
  const auto trainer = Trainer::load_checkpoint(ckpt_path);
  Dataset data;
  data.instances = parse_jsonl(read_file(data_path));
  const Instance& inst = data.find(id);
  const Model& model = trainer->model();
  const Encoded enc = model.encode(inst);
  const DecodeTrace trace = model.decode(enc);
  const std::string answer = render(trace.steps, trainer->vocab(), enc.ocr_strings);
  if (c.json) {
    json steps = json::array();
    for (std::size_t i = 0; i < trace.steps.size(); ++i) {
      const DecodingStep& s = trace.steps[i];
      steps.push_back({{"source", s.source == DecodingStep::Source::vocab ? "vocab" : "ocr"},
                       {"index", s.index},
                       {"token", render_step(s, trainer->vocab(), enc.ocr_strings)},
                       {"score", trace.scores[i]}});
    }
    print_json({{"id", inst.id}, {"answer", answer}, {"ended", trace.ended}, {"steps", steps},
                {"anls", anls_max(answer, inst.answers)}});
  } else {
    std::cout << "id      " << inst.id << '\n' << "answer  \"" << answer << "\"\n"
              << "trace (" << trace.steps.size() << " steps" << (trace.ended ? ", ended" : ", step limit") << ")\n"
              << trace_text(trace, trainer->vocab(), enc.ocr_strings);
  }
  return 0;
}

int cmd_complexity(const Common& c, const ComplexityQuery& q) {
  const ComplexityReport r = symbolic_count(q);
  if (c.json) {
    print_json(report_json(q, r));
  } else {
    std::cout << format_report(q, r);
  }
  return 0;
}

int cmd_grad_check(const Common& c, std::size_t seeds, const std::string& mode, std::size_t entries) {
  const std::uint64_t base = c.seed.value_or(0);
  GradCheckOptions opts;
  opts.entries_per_tensor = entries;
  std::vector<GradCheckResult> results;
  for (std::size_t s = 0; s < seeds; ++s) {
    opts.seed = base + s;
    for (auto& r : primitive_grad_checks(base + s, opts)) results.push_back(std::move(r));
    if (mode == "textvqa" || mode == "both") results.push_back(model_grad_check(base + s, false, opts));
    if (mode == "textcaps" || mode == "both") results.push_back(model_grad_check(base + s, true, opts));
  }
  bool ok = true;
  json out = json::array();
  for (const GradCheckResult& r : results) {
    ok = ok && r.passed();
    out.push_back({{"name", r.name}, {"checked", r.checked}, {"failed", r.failed},
                   {"kinks", r.kinks}, {"max_rel_error", r.max_rel_error}, {"worst", r.worst}});
  }
  if (c.json) {
    print_json({{"passed", ok}, {"eps", opts.eps}, {"rel_tol", opts.rel_tol}, {"floor", opts.floor},
                {"results", out}});
  } else {
    for (const GradCheckResult& r : results) {
      std::cout << (r.passed() ? "ok    " : "FAIL  ") << std::left << std::setw(32) << r.name << std::right
                << std::setw(6) << r.checked << " entries  max rel err " << std::scientific << std::setprecision(2)
                << r.max_rel_error << std::defaultfloat;
      if (r.kinks > 0) std::cout << "  (" << r.kinks << " at a kink, re-checked at eps " << opts.kink_eps << ")";
      std::cout << '\n';
    }
    std::cout << (ok ? "all gradient checks passed\n" : "gradient checks FAILED\n");
  }
  return ok ? 0 : 1;
}

int cmd_ablate(const Common& c, const std::string& config_path) {
  AblationConfig cfg = AblationConfig::from_json(load_json(config_path));
  if (c.seed) {
    for (std::uint64_t& s : cfg.seeds) s += *c.seed;
  }
  const auto rows = run_ablation(cfg, [&](const std::string& line) {
    if (!c.json) std::cerr << line << '\n';
  });
  if (c.json) {
    print_json(ablation_json(rows));
  } else {
    std::cout << format_ablation(rows);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"textfuse: scene-text question answering and captioning with a six-vector fusion encoder"};
  app.require_subcommand(1);
  std::string simd;
  app.add_option("--simd", simd, "Kernel backend: auto, scalar or avx2 (default from TEXTFUSE_SIMD)")
      ->check(CLI::IsMember({"auto", "scalar", "avx2"}));

  Common common;
  std::string a, b, id, output_dir, mode = "both";
  bool rows = false;
  std::size_t seeds = 1, entries = 0;
  ComplexityQuery query;
  std::string model_name = "ours";

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset as JSONL");
  gen->add_option("spec", a, "Synthetic spec JSON")->required();
  gen->add_option("out", b, "Output JSONL path")->required();
  add_common(gen, common);

  auto* train = app.add_subcommand("train", "Train a model from a run config");
  train->add_option("config", a, "Run config JSON")->required();
  train->add_option("--output-dir", output_dir, "Directory for metrics.csv and checkpoint.bin");
  add_common(train, common);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a JSONL dataset");
  eval->add_option("checkpoint", a, "Checkpoint file")->required();
  eval->add_option("data", b, "JSONL dataset")->required();
  eval->add_flag("--rows", rows, "Include per-instance rows");
  add_common(eval, common);

  auto* decode = app.add_subcommand("decode", "Decode one instance and print the per-step trace");
  decode->add_option("checkpoint", a, "Checkpoint file")->required();
  decode->add_option("data", b, "JSONL dataset")->required();
  decode->add_option("--id", id, "Instance id")->required();
  add_common(decode, common);

  auto* complexity = app.add_subcommand("complexity", "Symbolic encoder cost");
  complexity->add_option("--model", model_name, "m4c or ours")->check(CLI::IsMember({"m4c", "m4c_style", "ours", "six_vector"}));
  complexity->add_option("--L", query.L, "Question length");
  complexity->add_option("--N", query.N, "OCR tokens");
  complexity->add_option("--M", query.M, "Objects");
  complexity->add_option("--layers", query.layers, "Transformer layers");
  complexity->add_flag("--include-d", query.include_d, "Multiply by the vector width");
  complexity->add_option("--d", query.d, "Vector width used with --include-d");
  add_common(complexity, common);

  auto* grad = app.add_subcommand("grad-check", "Finite-difference gradient checks");
  grad->add_option("--seeds", seeds, "Number of consecutive seeds, starting at --seed");
  grad->add_option("--mode", mode, "Model loss mode")->check(CLI::IsMember({"textvqa", "textcaps", "both", "none"}));
  grad->add_option("--entries", entries, "Entries sampled per parameter tensor (0 = all)");
  add_common(grad, common);

  auto* ablate = app.add_subcommand("ablate", "Train one/two/three-block variants and compare accuracy");
  ablate->add_option("config", a, "Ablation config JSON")->required();
  add_common(ablate, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (simd == "scalar") kernels::set_backend(kernels::Backend::scalar);
    if (simd == "avx2") {
      if (!kernels::backend_available(kernels::Backend::avx2)) throw ConfigError("AVX2 kernels are not available here");
      kernels::set_backend(kernels::Backend::avx2);
    }
    if (*gen) return cmd_gen_data(common, a, b);
    if (*train) return cmd_train(common, a, output_dir);
    if (*eval) return cmd_eval(common, a, b, rows);
    if (*decode) return cmd_decode(common, a, b, id);
    if (*complexity) {
      query.model = encoder_model_from_string(model_name);
      return cmd_complexity(common, query);
    }
    if (*grad) return cmd_grad_check(common, seeds, mode, entries);
    if (*ablate) return cmd_ablate(common, a);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
