#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "textfuse/dataset.hpp"
#include "textfuse/errors.hpp"
#include "textfuse/train.hpp"

using namespace textfuse;

namespace {

SyntheticSpec small_spec(SyntheticTask task, std::size_t n, std::uint64_t seed) {
  SyntheticSpec s;
  s.task = task;
  s.n_instances = n;
  s.seed = seed;
  return s;
}

TrainConfig small_train_config(const Vocabulary& vocab) {
  TrainConfig c;
  c.model.encoder.num_layers = 1;
  c.model.encoder.num_heads = 2;
  c.model.encoder.d_model = 16;
  c.model.encoder.d_ff = 32;
  c.model.question_layers = 1;
  c.model.vocab_size = vocab.size();
  c.learning_rate = 1e-3;
  c.total_iterations = 6;
  c.decay_points = {3, 5};
  c.batch_size = 2;
  c.seed = 11;
  c.eval_every = 3;
  return c;
}

std::vector<std::string> split_words(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

std::string run_csv(const TrainConfig& cfg, const Dataset& data) {
  Trainer trainer(cfg, data.vocab);
  std::ostringstream os;
  trainer.run(data.instances, data.instances, &os);
  return os.str();
}

std::filesystem::path temp_dir() {
  const auto dir = std::filesystem::temp_directory_path() / "textfuse_harness_test";
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("synthetic generation is deterministic per seed") {
  for (SyntheticTask task : {SyntheticTask::copy_pointer, SyntheticTask::vocab_classify, SyntheticTask::mixed_compose,
                             SyntheticTask::split_cue, SyntheticTask::caption_compose}) {
    const std::string a = to_jsonl(generate_synthetic(small_spec(task, 12, 5)).instances);
    const std::string b = to_jsonl(generate_synthetic(small_spec(task, 12, 5)).instances);
    const std::string c = to_jsonl(generate_synthetic(small_spec(task, 12, 6)).instances);
    CHECK(a == b);
    CHECK(a != c);
    CHECK(to_jsonl(parse_jsonl(a)) == a);
  }
}

TEST_CASE("copy_pointer answers are OCR tokens; mixed_compose answers carry OOV tokens") {
  const Dataset copy = generate_synthetic(small_spec(SyntheticTask::copy_pointer, 50, 1));
  for (const Instance& inst : copy.instances) {
    bool found = false;
    for (const auto& t : inst.ocr) found = found || t.text == inst.answers[0];
    CHECK(found);
  }
  const Dataset mixed = generate_synthetic(small_spec(SyntheticTask::mixed_compose, 64, 7));
  std::size_t oov = 0;
  for (const Instance& inst : mixed.instances) {
    for (const std::string& w : split_words(inst.answers[0])) oov += mixed.vocab.find(w) ? 0 : 1;
  }
  CHECK(oov > 0);
  const Dataset caps = generate_synthetic(small_spec(SyntheticTask::caption_compose, 10, 2));
  for (const Instance& inst : caps.instances) CHECK(inst.question_tokens.empty());
}

TEST_CASE("dataset file round trip and malformed lines") {
  const Dataset data = generate_synthetic(small_spec(SyntheticTask::split_cue, 8, 3));
  const auto path = (temp_dir() / "split.jsonl").string();
  save_dataset(data, path);
  const Dataset back = load_dataset(path);
  CHECK(back.vocab.words() == data.vocab.words());
  CHECK(to_jsonl(back.instances) == to_jsonl(data.instances));
  CHECK_THROWS_AS(parse_jsonl("{\"id\": 1,\n"), FormatError);
  CHECK_THROWS_AS(parse_jsonl("[1, 2]\n"), FormatError);
  CHECK_THROWS_AS(read_file((temp_dir() / "missing.jsonl").string()), FormatError);
}

TEST_CASE("learning-rate schedule") {
  TrainConfig c;
  CHECK(learning_rate_at(c, 0) == 1e-4);
  CHECK(learning_rate_at(c, 1399) == 1e-4);
  CHECK(std::abs(learning_rate_at(c, 1400) - 1e-5) <= 1e-20);
  CHECK(std::abs(learning_rate_at(c, 1500) - 1e-6) <= 1e-21);
  CHECK(std::abs(learning_rate_at(c, 1999) - 1e-6) <= 1e-21);
  c.decay_points = {1500, 1400};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.decay_points = {2000};
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("training configuration JSON round trip and mode") {
  TrainConfig c;
  c.mode = TaskMode::textcaps;
  c.loss.pg_enabled = true;
  c.loss.alpha = 0.25;
  nlohmann::json j = c;
  const TrainConfig back = j.get<TrainConfig>();
  CHECK(nlohmann::json(back).dump() == j.dump());
  CHECK(back.effective_model().encoder.textcaps_mode);
  CHECK(back.effective_model().encoder.max_decode_steps >= 30);
  CHECK_THROWS_AS(RunConfig::from_json(nlohmann::json{{"learning_rate", 1e-3}}), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(nlohmann::json{{"mode", "vqa2"}, {"synthetic", nlohmann::json::object()}}),
                  ConfigError);
}

TEST_CASE("same seed and config give an identical metrics CSV") {
  const Dataset data = generate_synthetic(small_spec(SyntheticTask::mixed_compose, 8, 4));
  const TrainConfig cfg = small_train_config(data.vocab);
  const std::string a = run_csv(cfg, data);
  const std::string b = run_csv(cfg, data);
  CHECK(a == b);
  CHECK(a.rfind(metrics_csv_header(), 0) == 0);
  TrainConfig other = cfg;
  other.seed = 12;
  CHECK(run_csv(other, data) != a);
  // Header plus one line per iteration; evaluation at 3 and 6 only.
  std::istringstream is(a);
  std::vector<std::string> lines;
  for (std::string l; std::getline(is, l);) lines.push_back(l);
  REQUIRE(lines.size() == 7);
  CHECK(lines[1].back() == ',');
  CHECK(lines[3].back() != ',');
  CHECK(lines[6].back() != ',');
}

TEST_CASE("alpha = 0 training matches pg-disabled training bit for bit") {
  const Dataset data = generate_synthetic(small_spec(SyntheticTask::mixed_compose, 8, 4));
  TrainConfig off = small_train_config(data.vocab);
  off.loss.pg_enabled = false;
  TrainConfig zero = off;
  zero.loss.pg_enabled = true;
  zero.loss.alpha = 0.0;
  CHECK(run_csv(off, data) == run_csv(zero, data));
  TrainConfig on = off;
  on.loss.pg_enabled = true;
  on.loss.alpha = 1.0;
  CHECK(run_csv(on, data) != run_csv(off, data));
}

TEST_CASE("checkpoint save, load, save is byte-identical and evaluation matches") {
  const Dataset data = generate_synthetic(small_spec(SyntheticTask::mixed_compose, 8, 4));
  Trainer trainer(small_train_config(data.vocab), data.vocab);
  trainer.step(data.instances);
  trainer.step(data.instances);
  const auto path = (temp_dir() / "ckpt.bin").string();
  trainer.save_checkpoint(path);
  const auto loaded = Trainer::load_checkpoint(path);
  CHECK(loaded->checkpoint_bytes() == trainer.checkpoint_bytes());
  CHECK(loaded->iteration() == 2);

  const EvalReport a = evaluate(trainer.model(), data.vocab, data.instances);
  const EvalReport b = evaluate(loaded->model(), data.vocab, data.instances);
  CHECK(report_json(a, true).dump() == report_json(b, true).dump());

  // Resuming continues exactly where the original would.
  const MetricsRow next_a = trainer.step(data.instances);
  const MetricsRow next_b = loaded->step(data.instances);
  CHECK(metrics_csv_line(next_a) == metrics_csv_line(next_b));

  std::string bytes = trainer.checkpoint_bytes();
  CHECK_THROWS_AS(Trainer::from_checkpoint_bytes(bytes.substr(0, bytes.size() - 8)), FormatError);
  CHECK_THROWS_AS(Trainer::from_checkpoint_bytes(bytes + "x"), FormatError);
  bytes[0] = 'X';
  CHECK_THROWS_AS(Trainer::from_checkpoint_bytes(bytes), FormatError);
}

TEST_CASE("evaluation report") {
  const Dataset data = generate_synthetic(small_spec(SyntheticTask::copy_pointer, 6, 8));
  Trainer trainer(small_train_config(data.vocab), data.vocab);
  const EvalReport r = evaluate(trainer.model(), data.vocab, data.instances);
  REQUIRE(r.rows.size() == 6);
  double anls_sum = 0.0, correct = 0.0;
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    CHECK(r.rows[i].id == data.instances[i].id);
    CHECK(r.rows[i].anls == anls_max(r.rows[i].prediction, data.instances[i].answers));
    CHECK(r.rows[i].correct == answer_matches(r.rows[i].prediction, data.instances[i].answers));
    CHECK(r.rows[i].trace.size() <= trainer.model().max_decode_steps());
    anls_sum += r.rows[i].anls;
    correct += r.rows[i].correct ? 1.0 : 0.0;
  }
  CHECK(r.accuracy == doctest::Approx(correct / 6.0).epsilon(1e-15));
  CHECK(r.mean_anls == doctest::Approx(anls_sum / 6.0).epsilon(1e-15));
  CHECK(report_json(r, false).contains("accuracy"));
}

TEST_CASE("a non-finite loss raises a divergence error") {
  const Dataset data = generate_synthetic(small_spec(SyntheticTask::mixed_compose, 4, 4));
  Trainer trainer(small_train_config(data.vocab), data.vocab);
  trainer.model().head.weight.mutable_data()[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(trainer.step(data.instances), DivergenceError);
}

TEST_CASE("vocabulary mismatch is a configuration error") {
  const Dataset data = generate_synthetic(small_spec(SyntheticTask::mixed_compose, 4, 4));
  TrainConfig cfg = small_train_config(data.vocab);
  cfg.model.vocab_size += 1;
  CHECK_THROWS_AS(Trainer(cfg, data.vocab), ConfigError);
}

TEST_CASE("ablation produces one row per variant") {
  AblationConfig cfg;
  cfg.run.synthetic = small_spec(SyntheticTask::split_cue, 6, 1);
  cfg.run.train = small_train_config(synthetic_vocabulary(cfg.run.synthetic->vocab_words));
  cfg.run.train.total_iterations = 2;
  cfg.run.train.decay_points = {};
  cfg.seeds = {1, 2};
  const auto rows = run_ablation(cfg);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].blocks == BlockConfig::one_block);
  CHECK(rows[0].summary_slots == 2);
  CHECK(rows[1].summary_slots == 4);
  CHECK(rows[2].summary_slots == 6);
  for (const auto& r : rows) {
    CHECK(r.accuracies.size() == 2);
    CHECK(r.mean_accuracy == doctest::Approx((r.accuracies[0] + r.accuracies[1]) / 2.0));
  }
  CHECK(ablation_json(rows).size() == 3);
  CHECK(format_ablation(rows).find("three_block") != std::string::npos);
}
