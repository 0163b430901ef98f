#pragma once

// Training loop, evaluation, checkpoints and the block ablation.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "textfuse/dataset.hpp"
#include "textfuse/errors.hpp"
#include "textfuse/model.hpp"

namespace textfuse {

enum class TaskMode { textvqa, textcaps };

struct TrainConfig {
  ModelConfig model;
  TaskMode mode = TaskMode::textvqa;
  double learning_rate = 1e-4;
  std::size_t total_iterations = 2000;
  std::vector<std::size_t> decay_points{1400, 1500};
  double decay_factor = 0.1;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  LossConfig loss;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  // Evaluate on the eval set every eval_every iterations; 0 evaluates only
  // after the last iteration.
  std::size_t eval_every = 0;

  // Model config with the mode applied.
  ModelConfig effective_model() const;
  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

// Learning rate in effect for iteration `iteration` (0-based): the base rate
// times decay_factor for every decay point already reached.
double learning_rate_at(const TrainConfig& cfg, std::size_t iteration);

class Adam {
 public:
  Adam() = default;
  Adam(const ParameterStore& store, double beta1, double beta2, double eps);

  void step(ParameterStore& store, double lr);
  std::uint64_t steps() const { return t_; }

  std::vector<std::vector<double>>& first_moments() { return m_; }
  std::vector<std::vector<double>>& second_moments() { return v_; }
  void set_steps(std::uint64_t t) { t_ = t; }

 private:
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  std::uint64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct EvalRow {
  std::string id;
  std::string prediction;
  std::vector<DecodingStep> trace;
  double anls = 0.0;
  bool correct = false;
};

struct EvalReport {
  double accuracy = 0.0;
  double mean_anls = 0.0;
  std::vector<EvalRow> rows;
};

EvalReport evaluate(const Model& model, const Vocabulary& vocab, const std::vector<Instance>& data);
nlohmann::json report_json(const EvalReport& report, bool include_rows);

struct MetricsRow {
  std::size_t iteration = 0;
  double lr = 0.0;
  double loss = 0.0;
  double bce = 0.0;
  double pg = 0.0;
  std::optional<double> eval_accuracy;
  std::optional<double> eval_anls;
};

std::string metrics_csv_header();
std::string metrics_csv_line(const MetricsRow& row);

class DivergenceError : public Error {
 public:
  using Error::Error;
};

class Trainer {
 public:
  Trainer(const TrainConfig& cfg, Vocabulary vocab);

  const TrainConfig& config() const { return cfg_; }
  Model& model() { return *model_; }
  const Model& model() const { return *model_; }
  const Vocabulary& vocab() const { return vocab_; }
  std::size_t iteration() const { return iteration_; }

  // One optimizer update on the next batch of `train`.
  MetricsRow step(const std::vector<Instance>& train);

  // Runs until total_iterations, appending one CSV line per iteration to
  // metrics (if given). on_row is called after every iteration.
  std::vector<MetricsRow> run(const std::vector<Instance>& train, const std::vector<Instance>& eval,
                              std::ostream* metrics = nullptr,
                              const std::function<void(const MetricsRow&)>& on_row = {});

  std::string checkpoint_bytes() const;
  void save_checkpoint(const std::string& path) const;
  static std::unique_ptr<Trainer> from_checkpoint_bytes(std::string_view bytes);
  static std::unique_ptr<Trainer> load_checkpoint(const std::string& path);

 private:
  std::size_t next_index(std::size_t dataset_size);

  TrainConfig cfg_;
  Vocabulary vocab_;
  std::unique_ptr<Model> model_;
  Adam adam_;
  Rng rng_;
  std::size_t iteration_ = 0;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

struct RunConfig {
  TrainConfig train;
  std::string data;  // JSONL path; empty when synthetic is set
  std::optional<SyntheticSpec> synthetic;
  std::string eval_data;
  std::optional<SyntheticSpec> eval_synthetic;
  std::string output_dir = "run";

  static RunConfig from_json(const nlohmann::json& j);
  // Training and evaluation sets; the evaluation set defaults to the training set.
  std::pair<Dataset, std::vector<Instance>> load_data() const;
};

struct AblationRow {
  BlockConfig blocks = BlockConfig::three_block;
  std::size_t summary_slots = 0;
  std::vector<double> accuracies;  // one per seed
  std::vector<double> anls;
  double mean_accuracy = 0.0;
  double mean_anls = 0.0;
};

struct AblationConfig {
  RunConfig run;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<BlockConfig> variants{BlockConfig::one_block, BlockConfig::two_block, BlockConfig::three_block};

  static AblationConfig from_json(const nlohmann::json& j);
};

std::vector<AblationRow> run_ablation(const AblationConfig& cfg,
                                      const std::function<void(const std::string&)>& progress = {});
std::string format_ablation(const std::vector<AblationRow>& rows);
nlohmann::json ablation_json(const std::vector<AblationRow>& rows);

}  // namespace textfuse
