#include "textfuse/train.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "textfuse/ops.hpp"

namespace textfuse {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'T', 'X', 'F', 'C', 'K', 'P', 'T', '\n'};
constexpr std::uint32_t kFormatVersion = 1;

std::string_view mode_name(TaskMode m) { return m == TaskMode::textcaps ? "textcaps" : "textvqa"; }

TaskMode mode_from_string(const std::string& s) {
  if (s == "textvqa") return TaskMode::textvqa;
  if (s == "textcaps") return TaskMode::textcaps;
  throw ConfigError("unknown mode '" + s + "' (expected textvqa or textcaps)");
}

template <typename T>
void put_le(std::string& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::string_view bytes, std::size_t& pos) {
  if (pos + sizeof(T) > bytes.size()) throw FormatError("checkpoint truncated");
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, bytes.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  pos += sizeof(T);
  T value;
  std::memcpy(&value, buf, sizeof(T));
  return value;
}

void put_doubles(std::string& out, std::span<const double> values) {
  for (double v : values) put_le(out, v);
}

void get_doubles(std::string_view bytes, std::size_t& pos, std::span<double> out) {
  for (double& v : out) v = get_le<double>(bytes, pos);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

ModelConfig TrainConfig::effective_model() const {
  ModelConfig m = model;
  const bool caps = mode == TaskMode::textcaps;
  if (caps && !m.encoder.textcaps_mode) m.encoder.max_decode_steps = std::max<std::size_t>(m.encoder.max_decode_steps, 30);
  m.encoder.textcaps_mode = caps;
  return m;
}

void TrainConfig::validate() const {
  effective_model().validate();
  loss.validate();
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (total_iterations == 0) throw ConfigError("total_iterations must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  for (std::size_t i = 0; i < decay_points.size(); ++i) {
    if (decay_points[i] >= total_iterations) throw ConfigError("decay points must be below total_iterations");
    if (i > 0 && decay_points[i] <= decay_points[i - 1]) throw ConfigError("decay points must be strictly increasing");
  }
  if (!(decay_factor > 0.0)) throw ConfigError("decay_factor must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must lie in [0, 1)");
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"model", c.model},
           {"mode", std::string(mode_name(c.mode))},
           {"learning_rate", c.learning_rate},
           {"total_iterations", c.total_iterations},
           {"decay_points", c.decay_points},
           {"decay_factor", c.decay_factor},
           {"batch_size", c.batch_size},
           {"seed", c.seed},
           {"loss", {{"alpha", c.loss.alpha}, {"pg_enabled", c.loss.pg_enabled}}},
           {"beta1", c.beta1},
           {"beta2", c.beta2},
           {"adam_eps", c.adam_eps},
           {"eval_every", c.eval_every}};
}

void from_json(const json& j, TrainConfig& c) {
  TrainConfig d;
  c.model = j.contains("model") ? j.at("model").get<ModelConfig>() : d.model;
  c.mode = mode_from_string(j.value("mode", std::string("textvqa")));
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.total_iterations = j.value("total_iterations", d.total_iterations);
  c.decay_points = j.value("decay_points", d.decay_points);
  c.decay_factor = j.value("decay_factor", d.decay_factor);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.seed = j.value("seed", d.seed);
  c.loss = d.loss;
  if (j.contains("loss")) {
    c.loss.alpha = j.at("loss").value("alpha", d.loss.alpha);
    c.loss.pg_enabled = j.at("loss").value("pg_enabled", d.loss.pg_enabled);
  }
  c.beta1 = j.value("beta1", d.beta1);
  c.beta2 = j.value("beta2", d.beta2);
  c.adam_eps = j.value("adam_eps", d.adam_eps);
  c.eval_every = j.value("eval_every", d.eval_every);
}

double learning_rate_at(const TrainConfig& cfg, std::size_t iteration) {
  double lr = cfg.learning_rate;
  for (std::size_t p : cfg.decay_points) {
    if (iteration >= p) lr *= cfg.decay_factor;
  }
  return lr;
}

Adam::Adam(const ParameterStore& store, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const Parameter& p : store.all()) {
    m_.emplace_back(p.value.size(), 0.0);
    v_.emplace_back(p.value.size(), 0.0);
  }
}

void Adam::step(ParameterStore& store, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const auto& params = store.all();
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor value = params[i].value;
    auto w = value.mutable_data();
    const bool has = value.has_grad();
    auto g = value.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = has ? g[k] : 0.0;
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * gk;
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * gk * gk;
      w[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
    }
  }
}

EvalReport evaluate(const Model& model, const Vocabulary& vocab, const std::vector<Instance>& data) {
  EvalReport report;
  if (data.empty()) return report;
  double anls_sum = 0.0;
  std::size_t hits = 0;
  for (const Instance& inst : data) {
    const Encoded enc = model.encode(inst);
    EvalRow row;
    row.id = inst.id;
    row.trace = model.decode(enc).steps;
    row.prediction = render(row.trace, vocab, enc.ocr_strings);
    row.anls = anls_max(row.prediction, inst.answers);
    row.correct = answer_matches(row.prediction, inst.answers);
    anls_sum += row.anls;
    hits += row.correct ? 1 : 0;
    report.rows.push_back(std::move(row));
  }
  report.accuracy = static_cast<double>(hits) / static_cast<double>(data.size());
  report.mean_anls = anls_sum / static_cast<double>(data.size());
  return report;
}

json report_json(const EvalReport& report, bool include_rows) {
  json j{{"accuracy", report.accuracy}, {"mean_anls", report.mean_anls}, {"instances", report.rows.size()}};
  if (include_rows) {
    json rows = json::array();
    for (const EvalRow& r : report.rows) {
      rows.push_back({{"id", r.id}, {"prediction", r.prediction}, {"anls", r.anls}, {"correct", r.correct}});
    }
    j["rows"] = std::move(rows);
  }
  return j;
}

std::string metrics_csv_header() { return "iteration,lr,loss,bce,pg,eval_accuracy,eval_anls\n"; }

std::string metrics_csv_line(const MetricsRow& row) {
  std::string s = std::to_string(row.iteration) + "," + format_double(row.lr) + "," + format_double(row.loss) + "," +
                  format_double(row.bce) + "," + format_double(row.pg) + ",";
  if (row.eval_accuracy) s += format_double(*row.eval_accuracy);
  s += ",";
  if (row.eval_anls) s += format_double(*row.eval_anls);
  s += "\n";
  return s;
}

Trainer::Trainer(const TrainConfig& cfg, Vocabulary vocab) : cfg_(cfg), vocab_(std::move(vocab)), rng_(cfg.seed) {
  cfg_.validate();
  const ModelConfig mc = cfg_.effective_model();
  if (mc.vocab_size != vocab_.size()) {
    throw ConfigError("model vocab_size " + std::to_string(mc.vocab_size) + " does not match the vocabulary (" +
                      std::to_string(vocab_.size()) + " entries)");
  }
  model_ = std::make_unique<Model>(mc, cfg_.seed);
  adam_ = Adam(model_->parameters(), cfg_.beta1, cfg_.beta2, cfg_.adam_eps);
}

std::size_t Trainer::next_index(std::size_t n) {
  if (order_.size() != n || cursor_ >= order_.size()) {
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::shuffle(order_.begin(), order_.end(), rng_.engine());
    cursor_ = 0;
  }
  return order_[cursor_++];
}

MetricsRow Trainer::step(const std::vector<Instance>& train) {
  if (train.empty()) throw ContractError("training set is empty");
  MetricsRow row;
  row.lr = learning_rate_at(cfg_, iteration_);
  ParameterStore& store = model_->parameters();
  store.zero_grad();
  const double scale = 1.0 / static_cast<double>(cfg_.batch_size);
  for (std::size_t b = 0; b < cfg_.batch_size; ++b) {
    const Instance& inst = train[next_index(train.size())];
    Tape tape;
    TapeScope scope(tape);
    const LossTerms terms = model_->loss(inst, vocab_, cfg_.loss);
    const double value = terms.total.item();
    if (!std::isfinite(value)) {
      throw DivergenceError("loss is " + format_double(value) + " at iteration " + std::to_string(iteration_ + 1) +
                            " on instance '" + inst.id + "'");
    }
    tape.backward(affine(terms.total, scale));
    row.loss += value * scale;
    row.bce += terms.bce * scale;
    row.pg += terms.pg * scale;
  }
  adam_.step(store, row.lr);
  ++iteration_;
  row.iteration = iteration_;
  return row;
}

std::vector<MetricsRow> Trainer::run(const std::vector<Instance>& train, const std::vector<Instance>& eval,
                                     std::ostream* metrics, const std::function<void(const MetricsRow&)>& on_row) {
  std::vector<MetricsRow> rows;
  if (metrics) *metrics << metrics_csv_header();
  while (iteration_ < cfg_.total_iterations) {
    MetricsRow row = step(train);
    const bool last = iteration_ == cfg_.total_iterations;
    const bool periodic = cfg_.eval_every != 0 && iteration_ % cfg_.eval_every == 0;
    if (!eval.empty() && (last || periodic)) {
      const EvalReport report = evaluate(*model_, vocab_, eval);
      row.eval_accuracy = report.accuracy;
      row.eval_anls = report.mean_anls;
    }
    if (metrics) *metrics << metrics_csv_line(row);
    if (on_row) on_row(row);
    rows.push_back(row);
  }
  if (metrics) metrics->flush();
  return rows;
}

std::string Trainer::checkpoint_bytes() const {
  json params = json::array();
  for (const Parameter& p : model_->parameters().all()) params.push_back({{"name", p.name}, {"shape", p.value.shape()}});
  const json header{{"format_version", kFormatVersion},
                    {"train_config", cfg_},
                    {"vocab", vocab_.words()},
                    {"params", std::move(params)},
                    {"iteration", iteration_},
                    {"adam_steps", adam_.steps()},
                    {"rng_state", rng_.state()},
                    {"order", order_},
                    {"cursor", cursor_}};
  const std::string text = header.dump();
  std::string out(kMagic, sizeof kMagic);
  put_le<std::uint32_t>(out, kFormatVersion);
  put_le<std::uint64_t>(out, text.size());
  out += text;
  auto& self = const_cast<Trainer&>(*this);
  for (const Parameter& p : model_->parameters().all()) put_doubles(out, p.value.data());
  for (const auto& m : self.adam_.first_moments()) put_doubles(out, m);
  for (const auto& v : self.adam_.second_moments()) put_doubles(out, v);
  return out;
}

void Trainer::save_checkpoint(const std::string& path) const { write_file(path, checkpoint_bytes()); }

std::unique_ptr<Trainer> Trainer::from_checkpoint_bytes(std::string_view bytes) {
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw FormatError("not a checkpoint (bad magic)");
  }
  std::size_t pos = sizeof kMagic;
  const auto version = get_le<std::uint32_t>(bytes, pos);
  if (version != kFormatVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const auto header_len = get_le<std::uint64_t>(bytes, pos);
  if (pos + header_len > bytes.size()) throw FormatError("checkpoint header truncated");
  json header;
  try {
    header = json::parse(bytes.substr(pos, header_len));
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  pos += header_len;
  const TrainConfig cfg = header.at("train_config").get<TrainConfig>();
  Vocabulary vocab = Vocabulary::from_full_list(header.at("vocab").get<std::vector<std::string>>());
  auto trainer = std::make_unique<Trainer>(cfg, std::move(vocab));
  const auto& params = trainer->model_->parameters().all();
  const json& listed = header.at("params");
  if (listed.size() != params.size()) throw FormatError("checkpoint parameter count does not match the model");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (listed[i].at("name").get<std::string>() != params[i].name ||
        listed[i].at("shape").get<Shape>() != params[i].value.shape()) {
      throw FormatError("checkpoint parameter '" + listed[i].at("name").get<std::string>() +
                        "' does not match the model");
    }
    Tensor t = params[i].value;
    get_doubles(bytes, pos, t.mutable_data());
  }
  for (auto& m : trainer->adam_.first_moments()) get_doubles(bytes, pos, m);
  for (auto& v : trainer->adam_.second_moments()) get_doubles(bytes, pos, v);
  if (pos != bytes.size()) throw FormatError("checkpoint has trailing bytes");
  trainer->adam_.set_steps(header.at("adam_steps").get<std::uint64_t>());
  trainer->iteration_ = header.at("iteration").get<std::size_t>();
  trainer->rng_.set_state(header.at("rng_state").get<std::string>());
  trainer->order_ = header.at("order").get<std::vector<std::size_t>>();
  trainer->cursor_ = header.at("cursor").get<std::size_t>();
  return trainer;
}

std::unique_ptr<Trainer> Trainer::load_checkpoint(const std::string& path) {
  return from_checkpoint_bytes(read_file(path));
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig r;
  try {
    r.train = j.get<TrainConfig>();
    r.data = j.value("data", std::string());
    if (j.contains("synthetic")) r.synthetic = j.at("synthetic").get<SyntheticSpec>();
    r.eval_data = j.value("eval_data", std::string());
    if (j.contains("eval_synthetic")) r.eval_synthetic = j.at("eval_synthetic").get<SyntheticSpec>();
    r.output_dir = j.value("output_dir", r.output_dir);
    // Without an explicit vocab_size the model adopts the dataset's vocabulary.
    const bool explicit_vocab = j.contains("model") && j.at("model").contains("vocab_size");
    if (!explicit_vocab) r.train.model.vocab_size = 0;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (r.data.empty() == !r.synthetic.has_value()) throw ConfigError("config needs exactly one of data / synthetic");
  if (!r.eval_data.empty() && r.eval_synthetic) throw ConfigError("config has both eval_data and eval_synthetic");
  return r;
}

std::pair<Dataset, std::vector<Instance>> RunConfig::load_data() const {
  Dataset train = synthetic ? generate_synthetic(*synthetic) : load_dataset(data);
  std::vector<Instance> eval;
  if (eval_synthetic) {
    Dataset e = generate_synthetic(*eval_synthetic);
    if (e.vocab.words() != train.vocab.words()) throw ConfigError("eval vocabulary differs from training vocabulary");
    eval = std::move(e.instances);
  } else if (!eval_data.empty()) {
    eval = parse_jsonl(read_file(eval_data));
  } else {
    eval = train.instances;
  }
  return {std::move(train), std::move(eval)};
}

AblationConfig AblationConfig::from_json(const json& j) {
  AblationConfig a;
  a.run = RunConfig::from_json(j);
  if (j.contains("seeds")) a.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (j.contains("variants")) {
    a.variants.clear();
    for (const auto& v : j.at("variants")) a.variants.push_back(block_config_from_string(v.get<std::string>()));
  }
  if (a.seeds.empty() || a.variants.empty()) throw ConfigError("ablation needs at least one seed and one variant");
  return a;
}

std::vector<AblationRow> run_ablation(const AblationConfig& cfg,
                                      const std::function<void(const std::string&)>& progress) {
  const auto [train, eval] = cfg.run.load_data();
  std::vector<AblationRow> rows;
  for (BlockConfig variant : cfg.variants) {
    AblationRow row;
    row.blocks = variant;
    row.summary_slots = 2 * block_count(variant);
    for (std::uint64_t seed : cfg.seeds) {
      TrainConfig tc = cfg.run.train;
      tc.model.blocks = variant;
      tc.seed = seed;
      if (tc.model.vocab_size == 0) tc.model.vocab_size = train.vocab.size();
      Trainer trainer(tc, train.vocab);
      trainer.run(train.instances, {});
      const EvalReport report = evaluate(trainer.model(), train.vocab, eval);
      row.accuracies.push_back(report.accuracy);
      row.anls.push_back(report.mean_anls);
      if (progress) {
        progress(std::string(to_string(variant)) + " seed " + std::to_string(seed) +
                 ": accuracy " + format_double(report.accuracy));
      }
    }
    const double n = static_cast<double>(cfg.seeds.size());
    row.mean_accuracy = std::accumulate(row.accuracies.begin(), row.accuracies.end(), 0.0) / n;
    row.mean_anls = std::accumulate(row.anls.begin(), row.anls.end(), 0.0) / n;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_ablation(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(13) << "variant" << std::setw(7) << "slots" << std::setw(28) << "accuracy per seed"
     << std::setw(11) << "mean_acc" << "mean_anls\n";
  for (const AblationRow& r : rows) {
    std::ostringstream per;
    per << std::fixed << std::setprecision(4);
    for (std::size_t i = 0; i < r.accuracies.size(); ++i) per << (i ? " " : "") << r.accuracies[i];
    os << std::left << std::setw(13) << to_string(r.blocks) << std::setw(7) << r.summary_slots << std::setw(28)
       << per.str() << std::fixed << std::setprecision(4) << std::setw(11) << r.mean_accuracy << r.mean_anls
       << '\n';
  }
  return os.str();
}

json ablation_json(const std::vector<AblationRow>& rows) {
  json out = json::array();
  for (const AblationRow& r : rows) {
    out.push_back({{"variant", std::string(to_string(r.blocks))},
                   {"summary_slots", r.summary_slots},
                   {"accuracies", r.accuracies},
                   {"anls", r.anls},
                   {"mean_accuracy", r.mean_accuracy},
                   {"mean_anls", r.mean_anls}});
  }
  return out;
}

}  // namespace textfuse
