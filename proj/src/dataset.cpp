#include "textfuse/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "textfuse/errors.hpp"
#include "textfuse/phoc.hpp"
#include "textfuse/word_embedding.hpp"

namespace textfuse {

using nlohmann::json;

namespace {

const std::vector<std::string> kColors{"red", "green", "blue", "yellow", "orange", "purple", "white", "black"};
const std::vector<std::string> kSelectors{"topmost", "leftmost", "bottommost", "rightmost"};
const std::vector<std::string> kKinds{"car", "tree", "dog", "cup", "lamp", "book", "shoe", "boat"};
const std::vector<std::string> kCues{"brand", "name", "label", "title", "word", "sign", "text", "logo"};
const std::vector<std::string> kNouns{"store", "cafe", "hotel", "bank", "shop", "club", "bar", "inn"};
const std::vector<std::string> kFunctionWords{"what", "which", "token", "is",   "the", "color",
                                              "starts", "object", "says", "with", "of"};

constexpr std::size_t kCodeWidth = 4;  // appearance dims per color / kind code
constexpr double kNoiseScale = 0.1;

std::string letter(std::size_t i) { return std::string(1, static_cast<char>('a' + i)); }

std::vector<std::string> core_words() {
  std::vector<std::string> words;
  for (const auto* group : {&kColors, &kSelectors, &kKinds, &kCues, &kNouns, &kFunctionWords}) {
    words.insert(words.end(), group->begin(), group->end());
  }
  for (std::size_t i = 0; i < 26; ++i) words.push_back(letter(i));
  return words;
}

std::vector<double> random_box(Rng& rng) {
  const double x = rng.uniform(0.0, 0.85), y = rng.uniform(0.0, 0.9);
  const double w = rng.uniform(0.05, 0.15), h = rng.uniform(0.03, 0.1);
  return {x, y, std::min(1.0, x + w), std::min(1.0, y + h)};
}

// Distinct values drawn from [0, n).
std::vector<std::size_t> distinct(Rng& rng, std::size_t count, std::size_t n) {
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  for (std::size_t i = 0; i < count; ++i) std::swap(all[i], all[i + rng.index(n - i)]);
  all.resize(count);
  return all;
}

std::size_t in_range(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.index(hi - lo + 1); }

class TextSource {
 public:
  TextSource(Rng& rng, const Vocabulary& vocab) : rng_(rng), vocab_(vocab) {}

  // Fresh lowercase string outside the vocabulary and unused in this
  // instance; first_letter < 26 pins its first character.
  std::string next(std::unordered_set<std::string>& used, std::size_t first_letter = 26) {
    for (;;) {
      const std::size_t len = in_range(rng_, 3, 6);
      std::string s;
      for (std::size_t i = 0; i < len; ++i) s += static_cast<char>('a' + rng_.index(26));
      if (first_letter < 26) s[0] = static_cast<char>('a' + first_letter);
      if (vocab_.find(s) || used.contains(s)) continue;
      used.insert(s);
      return s;
    }
  }

 private:
  Rng& rng_;
  const Vocabulary& vocab_;
};

std::size_t word_id(const Vocabulary& vocab, const std::string& w) {
  const auto id = vocab.find(w);
  if (!id) throw ConfigError("synthetic vocabulary lacks '" + w + "'");
  return *id;
}

std::vector<std::size_t> question(const Vocabulary& vocab, std::initializer_list<std::string> words) {
  std::vector<std::size_t> ids;
  for (const auto& w : words) ids.push_back(word_id(vocab, w));
  return ids;
}

struct Scene {
  std::vector<std::string> texts;
  std::vector<std::size_t> colors;
  std::vector<std::vector<double>> boxes;
  std::vector<std::size_t> kinds;
  std::vector<std::size_t> obj_colors;
};

Scene make_scene(Rng& rng, TextSource& texts, const SyntheticSpec& spec, bool distinct_first_letters) {
  Scene s;
  const std::size_t n_ocr = in_range(rng, spec.ocr_min, spec.ocr_max);
  const std::size_t n_obj = in_range(rng, spec.obj_min, spec.obj_max);
  s.colors = distinct(rng, n_ocr, kColors.size());
  const std::vector<std::size_t> firsts = distinct(rng, n_ocr, 26);
  std::unordered_set<std::string> used;
  for (std::size_t i = 0; i < n_ocr; ++i) {
    s.texts.push_back(texts.next(used, distinct_first_letters ? firsts[i] : 26));
    s.boxes.push_back(random_box(rng));
  }
  s.kinds = distinct(rng, n_obj, kKinds.size());
  for (std::size_t i = 0; i < n_obj; ++i) s.obj_colors.push_back(rng.index(kColors.size()));
  return s;
}

Instance materialize(const Scene& s, const SyntheticSpec& spec, Rng& rng, std::string id) {
  Instance inst;
  inst.id = std::move(id);
  for (std::size_t i = 0; i < s.texts.size(); ++i) {
    inst.ocr.push_back(make_ocr_token(s.texts[i], s.colors[i], s.boxes[i], spec.d_frcn, spec.d_recog));
  }
  for (std::size_t i = 0; i < s.kinds.size(); ++i) {
    inst.objects.push_back(make_object(s.kinds[i], s.obj_colors[i], random_box(rng), spec.d_frcn,
                                       hash_bytes(inst.id + "#obj" + std::to_string(i), kWordEmbeddingSeed)));
  }
  return inst;
}

}  // namespace

std::string_view to_string(SyntheticTask task) {
  switch (task) {
    case SyntheticTask::copy_pointer: return "copy_pointer";
    case SyntheticTask::vocab_classify: return "vocab_classify";
    case SyntheticTask::mixed_compose: return "mixed_compose";
    case SyntheticTask::split_cue: return "split_cue";
    case SyntheticTask::caption_compose: return "caption_compose";
  }
  return "mixed_compose";
}

SyntheticTask synthetic_task_from_string(std::string_view text) {
  for (SyntheticTask t : {SyntheticTask::copy_pointer, SyntheticTask::vocab_classify, SyntheticTask::mixed_compose,
                          SyntheticTask::split_cue, SyntheticTask::caption_compose}) {
    if (text == to_string(t)) return t;
  }
  throw ConfigError("unknown synthetic task '" + std::string(text) + "'");
}

void SyntheticSpec::validate() const {
  if (n_instances == 0) throw ConfigError("n_instances must be positive");
  if (ocr_min > ocr_max || obj_min > obj_max) throw ConfigError("range minimum exceeds maximum");
  if (d_frcn < 2 * kCodeWidth * kColors.size()) {
    throw ConfigError("d_frcn must be at least " + std::to_string(2 * kCodeWidth * kColors.size()));
  }
  if (d_recog == 0) throw ConfigError("d_recog must be positive");
  if (ocr_max > kColors.size()) {
    throw ConfigError("synthetic scenes give each OCR token a distinct color; ocr_max must be <= " +
                      std::to_string(kColors.size()));
  }
  if (obj_max > kKinds.size()) {
    throw ConfigError("synthetic scenes use distinct object kinds; obj_max must be <= " + std::to_string(kKinds.size()));
  }
  const bool needs_ocr = task != SyntheticTask::vocab_classify;
  if (needs_ocr && ocr_min == 0) throw ConfigError(std::string(to_string(task)) + " needs at least one OCR token");
  if (task == SyntheticTask::mixed_compose && ocr_min < 2) throw ConfigError("mixed_compose needs ocr_min >= 2");
  if ((task == SyntheticTask::split_cue || task == SyntheticTask::caption_compose) && obj_min == 0) {
    throw ConfigError(std::string(to_string(task)) + " needs at least one object");
  }
  if (vocab_words < core_words().size()) {
    throw ConfigError("vocab_words must be at least " + std::to_string(core_words().size()));
  }
}

void to_json(json& j, const SyntheticSpec& s) {
  j = json{{"task", std::string(to_string(s.task))},
           {"n_instances", s.n_instances},
           {"n_ocr", {s.ocr_min, s.ocr_max}},
           {"n_obj", {s.obj_min, s.obj_max}},
           {"vocab_words", s.vocab_words},
           {"seed", s.seed},
           {"d_frcn", s.d_frcn},
           {"d_recog", s.d_recog}};
}

void from_json(const json& j, SyntheticSpec& s) {
  SyntheticSpec d;
  s.task = synthetic_task_from_string(j.value("task", std::string(to_string(d.task))));
  s.n_instances = j.value("n_instances", d.n_instances);
  auto range = [&](const char* key, std::size_t& lo, std::size_t& hi) {
    if (!j.contains(key)) return;
    const auto& r = j.at(key);
    if (!r.is_array() || r.size() != 2) throw ConfigError(std::string(key) + " must be [min, max]");
    lo = r[0].get<std::size_t>();
    hi = r[1].get<std::size_t>();
  };
  s.ocr_min = d.ocr_min;
  s.ocr_max = d.ocr_max;
  s.obj_min = d.obj_min;
  s.obj_max = d.obj_max;
  range("n_ocr", s.ocr_min, s.ocr_max);
  range("n_obj", s.obj_min, s.obj_max);
  s.vocab_words = j.value("vocab_words", d.vocab_words);
  s.seed = j.value("seed", d.seed);
  s.d_frcn = j.value("d_frcn", d.d_frcn);
  s.d_recog = j.value("d_recog", d.d_recog);
}

const Instance& Dataset::find(std::string_view id) const {
  for (const Instance& inst : instances) {
    if (inst.id == id) return inst;
  }
  throw IndexError("no instance with id '" + std::string(id) + "'");
}

Vocabulary synthetic_vocabulary(std::size_t vocab_words) {
  std::vector<std::string> words = core_words();
  if (vocab_words < words.size()) throw ConfigError("vocab_words too small for the synthetic tasks");
  char buf[16];
  for (std::size_t i = 0; words.size() < vocab_words; ++i) {
    std::snprintf(buf, sizeof buf, "w%03zu", i);
    words.emplace_back(buf);
  }
  return Vocabulary(words);
}

OcrTokenRaw make_ocr_token(const std::string& text, std::size_t color, const std::vector<double>& bbox,
                           std::size_t d_frcn, std::size_t d_recog) {
  if (color >= kColors.size() || d_frcn < kCodeWidth * kColors.size()) {
    throw ConfigError("ocr token: color code " + std::to_string(color) + " does not fit d_frcn " +
                      std::to_string(d_frcn));
  }
  OcrTokenRaw t;
  t.text = text;
  t.frcn.assign(d_frcn, 0.0);
  hashed_direction(hash_bytes(text + "#frcn", kWordEmbeddingSeed), t.frcn);
  for (double& v : t.frcn) v *= kNoiseScale;
  for (std::size_t i = 0; i < kCodeWidth; ++i) t.frcn[color * kCodeWidth + i] += 1.0;
  t.bbox = bbox;
  t.fasttext = stand_in_word_embedding(text);
  t.phoc = phoc_encode(text);
  t.recog.assign(d_recog, 0.0);
  hashed_direction(hash_bytes(text + "#recog", kWordEmbeddingSeed), t.recog);
  for (double& v : t.recog) v *= 0.5;
  return t;
}

ObjectRaw make_object(std::size_t kind, std::size_t color, const std::vector<double>& bbox, std::size_t d_frcn,
                      std::uint64_t noise_key) {
  if (color >= kColors.size() || kind >= kKinds.size() || d_frcn < 2 * kCodeWidth * kColors.size()) {
    throw ConfigError("object: color / kind codes do not fit d_frcn " + std::to_string(d_frcn));
  }
  ObjectRaw o;
  o.frcn.assign(d_frcn, 0.0);
  hashed_direction(noise_key, o.frcn);
  for (double& v : o.frcn) v *= kNoiseScale;
  const std::size_t kind_base = kCodeWidth * kColors.size();
  for (std::size_t i = 0; i < kCodeWidth; ++i) {
    o.frcn[color * kCodeWidth + i] += 1.0;
    o.frcn[kind_base + kind * kCodeWidth + i] += 1.0;
  }
  o.bbox = bbox;
  return o;
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Dataset data{synthetic_vocabulary(spec.vocab_words), {}};
  const Vocabulary& vocab = data.vocab;
  Rng rng(spec.seed);
  TextSource texts(rng, vocab);
  char id_buf[64];
  for (std::size_t n = 0; n < spec.n_instances; ++n) {
    std::snprintf(id_buf, sizeof id_buf, "%s-%04zu", std::string(to_string(spec.task)).c_str(), n);
    const bool letters = spec.task == SyntheticTask::split_cue;
    const Scene s = make_scene(rng, texts, spec, letters);
    Instance inst = materialize(s, spec, rng, id_buf);
    switch (spec.task) {
      case SyntheticTask::copy_pointer: {
        const std::size_t choice = rng.index(kSelectors.size() + s.texts.size());
        std::size_t target = 0;
        if (choice < kSelectors.size()) {
          // 0 top (min y), 1 left (min x), 2 bottom (max y_br), 3 right (max x_br)
          auto key = [&](std::size_t i) {
            const auto& b = s.boxes[i];
            switch (choice) {
              case 0: return b[1];
              case 1: return b[0];
              case 2: return -b[3];
              default: return -b[2];
            }
          };
          for (std::size_t i = 1; i < s.texts.size(); ++i) {
            if (key(i) < key(target)) target = i;
          }
          inst.question_tokens = question(vocab, {"which", "token", "is", kSelectors[choice]});
        } else {
          target = choice - kSelectors.size();
          inst.question_tokens = question(vocab, {"which", "token", "is", kColors[s.colors[target]]});
        }
        inst.answers = {s.texts[target]};
        break;
      }
      case SyntheticTask::vocab_classify: {
        const std::size_t cue = rng.index(kCues.size());
        const std::size_t color = rng.index(kColors.size());
        inst.question_tokens = question(vocab, {kCues[cue], kColors[color]});
        inst.answers = {kNouns[(3 * cue + color) % kNouns.size()]};
        break;
      }
      case SyntheticTask::mixed_compose: {
        const std::size_t cue = rng.index(kCues.size());
        const bool two = s.texts.size() >= 2 && rng.index(2) == 1;
        const std::vector<std::size_t> picks = distinct(rng, two ? 2 : 1, s.texts.size());
        std::string answer = kNouns[cue] + " " + s.texts[picks[0]];
        if (two) {
          inst.question_tokens = question(vocab, {kCues[cue], kColors[s.colors[picks[0]]], kColors[s.colors[picks[1]]]});
          answer += " " + s.texts[picks[1]];
        } else {
          inst.question_tokens = question(vocab, {kCues[cue], kColors[s.colors[picks[0]]]});
        }
        inst.answers = {answer};
        break;
      }
      case SyntheticTask::split_cue: {
        const std::size_t kind = rng.index(3);
        if (kind == 0) {
          const std::size_t t = rng.index(s.texts.size());
          inst.question_tokens = question(vocab, {"which", "token", "is", kColors[s.colors[t]]});
          inst.answers = {s.texts[t]};
        } else if (kind == 1) {
          const std::size_t t = rng.index(s.texts.size());
          inst.question_tokens = question(vocab, {"which", "token", "starts", "with", s.texts[t].substr(0, 1)});
          inst.answers = {s.texts[t]};
        } else {
          const std::size_t o = rng.index(s.kinds.size());
          inst.question_tokens = question(vocab, {"what", "color", "is", "the", kKinds[s.kinds[o]]});
          inst.answers = {kColors[s.obj_colors[o]]};
        }
        break;
      }
      case SyntheticTask::caption_compose: {
        std::vector<std::size_t> order(s.texts.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s.boxes[a][0] < s.boxes[b][0]; });
        std::string caption = "the " + kColors[s.obj_colors[0]] + " " + kKinds[s.kinds[0]] + " says";
        for (std::size_t i : order) caption += " " + s.texts[i];
        inst.answers = {caption};
        break;
      }
    }
    data.instances.push_back(std::move(inst));
  }
  return data;
}

Instance random_instance(Rng& rng, const ModelConfig& cfg, const Vocabulary& vocab, std::size_t n_ocr,
                         std::size_t n_obj, std::size_t question_len) {
  Instance inst;
  inst.id = "random";
  TextSource texts(rng, vocab);
  std::unordered_set<std::string> used;
  for (std::size_t i = 0; i < n_ocr; ++i) {
    OcrTokenRaw t = make_ocr_token(texts.next(used), rng.index(8), random_box(rng), cfg.d_frcn, cfg.d_recog);
    for (double& v : t.frcn) v += rng.normal(0.0, 0.5);
    for (double& v : t.recog) v += rng.normal(0.0, 0.5);
    inst.ocr.push_back(std::move(t));
  }
  for (std::size_t i = 0; i < n_obj; ++i) {
    ObjectRaw o;
    o.frcn.resize(cfg.d_frcn);
    for (double& v : o.frcn) v = rng.normal(0.0, 1.0);
    o.bbox = random_box(rng);
    inst.objects.push_back(std::move(o));
  }
  if (!cfg.encoder.textcaps_mode) {
    for (std::size_t i = 0; i < question_len; ++i) {
      inst.question_tokens.push_back(Vocabulary::kSpecialCount + rng.index(vocab.size() - Vocabulary::kSpecialCount));
    }
  }
  if (cfg.visual == VisualBranch::global_grid) {
    inst.global_grid.assign(8, std::vector<double>(cfg.d_glob));
    for (auto& row : inst.global_grid) {
      for (double& v : row) v = rng.normal(0.0, 1.0);
    }
  }
  std::string answer = vocab.word(Vocabulary::kSpecialCount + rng.index(vocab.size() - Vocabulary::kSpecialCount));
  if (n_ocr > 0) answer += " " + inst.ocr[rng.index(n_ocr)].text;
  inst.answers = {answer};
  return inst;
}

json instance_to_json(const Instance& inst) {
  json ocr = json::array();
  for (const auto& t : inst.ocr) {
    ocr.push_back({{"text", t.text},
                   {"frcn", t.frcn},
                   {"bbox", t.bbox},
                   {"fasttext", t.fasttext},
                   {"phoc", t.phoc},
                   {"recog", t.recog}});
  }
  json objects = json::array();
  for (const auto& o : inst.objects) objects.push_back({{"frcn", o.frcn}, {"bbox", o.bbox}});
  json j{{"id", inst.id},
         {"question", inst.question_tokens},
         {"ocr", std::move(ocr)},
         {"objects", std::move(objects)},
         {"answers", inst.answers}};
  if (!inst.global_grid.empty()) j["global_grid"] = inst.global_grid;
  return j;
}

Instance instance_from_json(const json& j) {
  try {
    Instance inst;
    inst.id = j.at("id").get<std::string>();
    inst.question_tokens = j.value("question", std::vector<std::size_t>{});
    for (const auto& t : j.value("ocr", json::array())) {
      OcrTokenRaw tok;
      tok.text = normalize_answer(t.at("text").get<std::string>());
      tok.frcn = t.at("frcn").get<std::vector<double>>();
      tok.bbox = t.at("bbox").get<std::vector<double>>();
      tok.fasttext = t.contains("fasttext") ? t.at("fasttext").get<std::vector<double>>()
                                            : stand_in_word_embedding(tok.text);
      tok.phoc = t.contains("phoc") ? t.at("phoc").get<std::vector<double>>() : phoc_encode(tok.text);
      tok.recog = t.at("recog").get<std::vector<double>>();
      inst.ocr.push_back(std::move(tok));
    }
    for (const auto& o : j.value("objects", json::array())) {
      inst.objects.push_back({o.at("frcn").get<std::vector<double>>(), o.at("bbox").get<std::vector<double>>()});
    }
    inst.answers = j.at("answers").get<std::vector<std::string>>();
    if (inst.answers.empty()) throw FormatError("instance '" + inst.id + "' has no answers");
    if (j.contains("global_grid")) inst.global_grid = j.at("global_grid").get<std::vector<std::vector<double>>>();
    return inst;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed instance: ") + e.what());
  }
}

std::string to_jsonl(const std::vector<Instance>& instances) {
  std::string out;
  for (const Instance& inst : instances) {
    out += instance_to_json(inst).dump();
    out += '\n';
  }
  return out;
}

std::vector<Instance> parse_jsonl(std::string_view text) {
  std::vector<Instance> out;
  std::size_t line_no = 0, start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    const std::string_view line = text.substr(start, end - start);
    start = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
    }
    out.push_back(instance_from_json(j));
  }
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write to '" + path + "' failed");
}

void save_dataset(const Dataset& data, const std::string& jsonl_path) {
  write_file(jsonl_path, to_jsonl(data.instances));
  write_file(jsonl_path + ".vocab", data.vocab.save_text());
}

Dataset load_dataset(const std::string& jsonl_path, const std::string& vocab_path) {
  Dataset data;
  data.vocab = Vocabulary::load_text(read_file(vocab_path.empty() ? jsonl_path + ".vocab" : vocab_path));
  data.instances = parse_jsonl(read_file(jsonl_path));
  return data;
}

}  // namespace textfuse
