/*
 * Copyright 2026 The Speculens Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "speculens/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <type_traits>

#include "speculens/metrics.hpp"

namespace speculens {

// --- Parser ----------------------------------------------------------------------

namespace {

class LineParser {
 public:
  LineParser(const std::string& text, int line) : s_(text), line_(line) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("config line " + std::to_string(line_) + ": " + what);
  }

  void skip_space() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }

  bool at_end() {
    skip_space();
    return pos_ >= s_.size() || s_[pos_] == '#';
  }

  bool consume(char c) {
    skip_space();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  std::string key() {
    skip_space();
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_' || s_[pos_] == '-'))
      ++pos_;
    if (pos_ == start) fail("expected a key");
    return s_.substr(start, pos_ - start);
  }

  ConfigValue value() {
    skip_space();
    ConfigValue v;
    v.line = line_;
    if (pos_ >= s_.size()) fail("missing value");
    const char c = s_[pos_];
    if (c == '"') {
      v.data = string();
    } else if (c == '[') {
      ++pos_;
      ConfigArray items;
      if (!consume(']')) {
        do {
          if (consume(']')) return finish_array(v, std::move(items));
          items.push_back(value());
        } while (consume(','));
        if (!consume(']')) fail("expected ']'");
      }
      return finish_array(v, std::move(items));
    } else if (s_.compare(pos_, 4, "true") == 0) {
      pos_ += 4;
      v.data = true;
    } else if (s_.compare(pos_, 5, "false") == 0) {
      pos_ += 5;
      v.data = false;
    } else {
      v.data = number();
    }
    return v;
  }

 private:
  ConfigValue finish_array(ConfigValue& v, ConfigArray items) {
    v.data = std::move(items);
    return v;
  }

  std::string string() {
    ++pos_;
    std::string out;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      char c = s_[pos_++];
      if (c == '\\') {
        if (pos_ >= s_.size()) break;
        const char e = s_[pos_++];
        switch (e) {
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          case '"': c = '"'; break;
          case '\\': c = '\\'; break;
          default: fail(std::string("unsupported escape \\") + e);
        }
      }
      out.push_back(c);
    }
    if (pos_ >= s_.size()) fail("unterminated string");
    ++pos_;
    return out;
  }

  std::variant<std::int64_t, double, bool, std::string, ConfigArray> number() {
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '+' ||
                                s_[pos_] == '-' || s_[pos_] == '.' || s_[pos_] == '_'))
      ++pos_;
    std::string tok = s_.substr(start, pos_ - start);
    std::erase(tok, '_');
    if (tok.empty()) fail("expected a value");
    const char* b = tok.data() + (tok[0] == '+' ? 1 : 0);
    const char* e = tok.data() + tok.size();
    if (tok.find_first_of(".eE") == std::string::npos && tok != "inf" && tok != "nan") {
      std::int64_t i = 0;
      const auto r = std::from_chars(b, e, i);
      if (r.ec == std::errc() && r.ptr == e) return i;
      fail("bad integer '" + tok + "'");
    }
    double d = 0;
    const auto r = std::from_chars(b, e, d);
    if (r.ec != std::errc() || r.ptr != e) fail("bad number '" + tok + "'");
    return d;
  }

  const std::string& s_;
  std::size_t pos_ = 0;
  int line_;
};

}  // namespace

ConfigDocument parse_config_text(const std::string& text) {
  ConfigDocument doc;
  doc[""];
  std::string section;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    LineParser p(raw, line);
    if (p.at_end()) continue;
    if (p.consume('[')) {
      section = p.key();
      if (!p.consume(']')) p.fail("expected ']' after section name");
      if (!p.at_end()) p.fail("trailing characters after section header");
      if (doc.count(section) && section != "") p.fail("duplicate section [" + section + "]");
      doc[section];
      continue;
    }
    const std::string key = p.key();
    if (!p.consume('=')) p.fail("expected '=' after " + key);
    ConfigValue v = p.value();
    if (!p.at_end()) p.fail("trailing characters after the value of " + key);
    auto& sec = doc[section];
    if (sec.count(key)) p.fail("duplicate key " + (section.empty() ? key : section + "." + key));
    sec.emplace(key, std::move(v));
  }
  return doc;
}

// --- Pipeline schema ---------------------------------------------------------------

const char* mask_source_name(MaskSource s) { return s == MaskSource::orig ? "orig" : "trans"; }

MaskSource parse_mask_source(const std::string& name) {
  if (name == "orig") return MaskSource::orig;
  if (name == "trans") return MaskSource::trans;
  throw ConfigError("mask source must be \"orig\" or \"trans\" (got \"" + name + "\")");
}

namespace {

// Walks every field of a PipelineConfig in a fixed order; the same walk reads
// and writes the text form.
template <typename Visitor>
void visit_fields(Visitor& v, PipelineConfig& c) {
  v.section("detector");
  v.field("saturation_threshold", c.detector.saturation_threshold);
  v.field("chroma_ratio_threshold", c.detector.chroma_ratio_threshold);
  v.field("local_window", c.detector.local_window);
  v.field("min_component_area", c.detector.min_component_area);
  v.field("achromatic_tolerance", c.detector.achromatic_tolerance);

  v.section("pseudo_gt");
  v.field("offset_dx", c.pseudo_gt.offset.dx);
  v.field("offset_dy", c.pseudo_gt.offset.dy);
  v.field("dilation_shape", c.pseudo_gt.dilation.shape);
  v.field("dilation_kernel", c.pseudo_gt.dilation.kernel);
  v.field("dilation_iterations", c.pseudo_gt.dilation.iterations);
  v.field("dilate_before_translate", c.pseudo_gt.dilation.before_translate);
  v.field("test_fraction", c.pseudo_gt.test_fraction);
  v.field("image_size", c.pseudo_gt.image_size);

  v.section("model");
  v.field("channels", c.model.channels);
  v.field("layers", c.model.layers);
  v.field("heads", c.model.heads);
  v.field("encoder_width1", c.model.encoder_width1);
  v.field("encoder_width2", c.model.encoder_width2);
  v.field("decoder_width", c.model.decoder_width);
  v.field("disc_width1", c.model.disc_width1);
  v.field("disc_width2", c.model.disc_width2);
  v.field("image_size", c.model.image_size);

  v.section("train");
  v.field("preset", c.train.preset);
  v.field("init_checkpoint", c.train.init_checkpoint);
  v.field("max_iterations", c.train.max_iterations);
  v.field("batch", c.train.batch);
  v.field("clip_length", c.train.clip_length);
  v.field("neighbor_radius", c.train.sampling.neighbor_radius);
  v.field("distant_stride", c.train.sampling.distant_stride);
  v.field("lambda_hole", c.train.loss_weights.hole);
  v.field("lambda_valid", c.train.loss_weights.valid);
  v.field("lambda_adv", c.train.loss_weights.adv);
  v.field("eval_every", c.train.eval_every);
  v.field("lr", c.train.lr);
  v.field("beta1", c.train.beta1);
  v.field("beta2", c.train.beta2);
  v.field("mask_strokes_per_frame", c.train.random_masks.strokes_per_frame);
  v.field("mask_brush_width", c.train.random_masks.brush_width);
  v.field("mask_max_step", c.train.random_masks.max_step);
  v.field("double_precision", c.train.double_precision);

  v.section("eval");
  v.field("neighbor_radius", c.eval.sampling.neighbor_radius);
  v.field("distant_stride", c.eval.sampling.distant_stride);
  v.field("single_frame", c.eval.single_frame);
  v.field("double_precision", c.eval.double_precision);

  v.section("geometry");
  v.field("harris_k", c.geometry.pose.features.harris_k);
  v.field("window_sigma", c.geometry.pose.features.window_sigma);
  v.field("relative_threshold", c.geometry.pose.features.relative_threshold);
  v.field("nms_radius", c.geometry.pose.features.nms_radius);
  v.field("max_keypoints", c.geometry.pose.features.max_keypoints);
  v.field("patch_size", c.geometry.pose.features.patch_size);
  v.field("ratio", c.geometry.pose.ratio);
  v.field("ransac_threshold", c.geometry.pose.ransac.threshold);
  v.field("ransac_confidence", c.geometry.pose.ransac.confidence);
  v.field("ransac_max_iterations", c.geometry.pose.ransac.max_iterations);
  v.field("ransac_refine", c.geometry.pose.ransac.refine);
  v.field("window", c.geometry.pose.window);
  v.field("flow_stride", c.geometry.flow_stride);
}

class Reader {
 public:
  explicit Reader(const ConfigDocument& doc) : doc_(doc) {}

  void section(const std::string& name) {
    name_ = name;
    seen_sections_.insert(name);
    const auto it = doc_.find(name);
    current_ = it == doc_.end() ? nullptr : &it->second;
  }

  template <typename T>
  void field(const char* key, T& out) {
    if (!current_) return;
    const auto it = current_->find(key);
    if (it == current_->end()) return;
    used_.insert(name_ + "." + key);
    read(it->second, qualified(key), out);
  }

  /// Unknown sections and keys.
  void check_unknown() const {
    for (const auto& [sec, keys] : doc_) {
      if (sec.empty()) {
        for (const auto& [k, v] : keys)
          if (k != "seed") throw ConfigError("unknown key " + k + " (line " + std::to_string(v.line) + ")");
        continue;
      }
      if (!seen_sections_.count(sec)) throw ConfigError("unknown section [" + sec + "]");
      for (const auto& [k, v] : keys)
        if (!used_.count(sec + "." + k))
          throw ConfigError("unknown key " + sec + "." + k + " (line " + std::to_string(v.line) + ")");
    }
  }

  static std::int64_t integer(const ConfigValue& v, const std::string& key) {
    if (const auto* i = std::get_if<std::int64_t>(&v.data)) return *i;
    throw type_error(key, "an integer", v);
  }

 private:
  std::string qualified(const char* key) const { return name_ + "." + key; }

  static ConfigError type_error(const std::string& key, const char* what, const ConfigValue& v) {
    return ConfigError(key + " must be " + what + " (line " + std::to_string(v.line) + ")");
  }

  template <typename T>
  static void read(const ConfigValue& v, const std::string& key, T& out) {
    if constexpr (std::is_same_v<T, bool>) {
      const auto* b = std::get_if<bool>(&v.data);
      if (!b) throw type_error(key, "true or false", v);
      out = *b;
    } else if constexpr (std::is_integral_v<T>) {
      const std::int64_t i = integer(v, key);
      if (i < static_cast<std::int64_t>(std::numeric_limits<T>::min()) ||
          i > static_cast<std::int64_t>(std::numeric_limits<T>::max()))
        throw type_error(key, "in range", v);
      out = static_cast<T>(i);
    } else if constexpr (std::is_floating_point_v<T>) {
      if (const auto* d = std::get_if<double>(&v.data)) {
        out = *d;
      } else if (const auto* i = std::get_if<std::int64_t>(&v.data)) {
        out = static_cast<double>(*i);
      } else {
        throw type_error(key, "a number", v);
      }
    } else if constexpr (std::is_same_v<T, std::string>) {
      const auto* s = std::get_if<std::string>(&v.data);
      if (!s) throw type_error(key, "a string", v);
      out = *s;
    } else if constexpr (std::is_same_v<T, Preset>) {
      std::string s;
      read(v, key, s);
      out = parse_preset(s);
    } else if constexpr (std::is_same_v<T, std::optional<std::filesystem::path>>) {
      std::string s;
      read(v, key, s);
      out = s.empty() ? std::nullopt : std::optional<std::filesystem::path>(s);
    } else if constexpr (std::is_same_v<T, std::vector<HeadConfig>>) {
      const auto* arr = std::get_if<ConfigArray>(&v.data);
      if (!arr) throw type_error(key, "an array of [r1, r2] pairs", v);
      out.clear();
      for (const auto& h : *arr) {
        const auto* pair = std::get_if<ConfigArray>(&h.data);
        if (!pair || pair->size() != 2) throw type_error(key, "an array of [r1, r2] pairs", v);
        out.push_back({integer((*pair)[0], key), integer((*pair)[1], key)});
      }
    } else {
      static_assert(sizeof(T) == 0, "unsupported config field type");
    }
  }

  const ConfigDocument& doc_;
  const std::map<std::string, ConfigValue>* current_ = nullptr;
  std::string name_;
  std::set<std::string> seen_sections_;
  std::set<std::string> used_;
};

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out.push_back(c);
  }
  return out + "\"";
}

class Writer {
 public:
  void section(const std::string& name) { out_ << "\n[" << name << "]\n"; }

  template <typename T>
  void field(const char* key, const T& v) {
    out_ << key << " = ";
    if constexpr (std::is_same_v<T, bool>) {
      out_ << (v ? "true" : "false");
    } else if constexpr (std::is_integral_v<T>) {
      out_ << v;
    } else if constexpr (std::is_floating_point_v<T>) {
      std::string s = format_number(v);
      // Keep floats recognisable as floats.
      if (s.find_first_of(".en") == std::string::npos) s += ".0";
      out_ << s;
    } else if constexpr (std::is_same_v<T, std::string>) {
      out_ << quote(v);
    } else if constexpr (std::is_same_v<T, Preset>) {
      out_ << quote(preset_name(v));
    } else if constexpr (std::is_same_v<T, std::optional<std::filesystem::path>>) {
      out_ << quote(v ? v->string() : std::string());
    } else if constexpr (std::is_same_v<T, std::vector<HeadConfig>>) {
      out_ << "[";
      for (std::size_t i = 0; i < v.size(); ++i)
        out_ << (i ? ", " : "") << "[" << v[i].patch_r1 << ", " << v[i].patch_r2 << "]";
      out_ << "]";
    }
    out_ << "\n";
  }

  std::ostringstream& stream() { return out_; }

 private:
  std::ostringstream out_;
};

}  // namespace

void PipelineConfig::validate() const {
  detector.validate();
  pseudo_gt.dilation.validate();
  if (!(pseudo_gt.test_fraction > 0.0 && pseudo_gt.test_fraction < 1.0))
    throw ConfigError("pseudo_gt.test_fraction must be in (0, 1)");
  if (pseudo_gt.image_size < 0) throw ConfigError("pseudo_gt.image_size must be >= 0");
  if (pseudo_gt.offset.dx == 0 && pseudo_gt.offset.dy == 0)
    throw ConfigError("pseudo_gt.offset_dx and pseudo_gt.offset_dy must not both be 0");
  model.validate();
  train.validate();
  eval.sampling.validate();
  const auto& f = geometry.pose.features;
  if (!(f.harris_k > 0.0)) throw ConfigError("geometry.harris_k must be > 0");
  if (!(f.window_sigma > 0.0)) throw ConfigError("geometry.window_sigma must be > 0");
  if (!(f.relative_threshold >= 0.0 && f.relative_threshold < 1.0))
    throw ConfigError("geometry.relative_threshold must be in [0, 1)");
  if (f.nms_radius < 0) throw ConfigError("geometry.nms_radius must be >= 0");
  if (f.max_keypoints < 5) throw ConfigError("geometry.max_keypoints must be >= 5");
  if (f.patch_size < 3 || f.patch_size % 2 == 0) throw ConfigError("geometry.patch_size must be an odd integer >= 3");
  if (!(geometry.pose.ratio > 0.0 && geometry.pose.ratio <= 1.0)) throw ConfigError("geometry.ratio must be in (0, 1]");
  geometry.pose.ransac.validate();
  if (geometry.pose.window < 1) throw ConfigError("geometry.window must be >= 1");
  if (geometry.flow_stride < 1) throw ConfigError("geometry.flow_stride must be >= 1");
}

PipelineConfig pipeline_config_from(const ConfigDocument& doc) {
  PipelineConfig cfg;
  Reader r(doc);
  visit_fields(r, cfg);
  r.check_unknown();
  const auto& top = doc.count("") ? doc.at("") : std::map<std::string, ConfigValue>{};
  const auto seed = top.find("seed");
  if (seed == top.end()) throw ConfigError("seed is required");
  const std::int64_t s = Reader::integer(seed->second, "seed");
  if (s < 0) throw ConfigError("seed must be >= 0");
  cfg.seed = static_cast<std::uint64_t>(s);
  cfg.pseudo_gt.seed = cfg.seed;
  cfg.pseudo_gt.detector = cfg.detector;
  cfg.train.seed = cfg.seed;
  cfg.geometry.pose.ransac.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

PipelineConfig parse_pipeline_config(const std::string& text) { return pipeline_config_from(parse_config_text(text)); }

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_pipeline_config(ss.str());
}

std::string config_text(const PipelineConfig& cfg) {
  Writer w;
  w.stream() << "seed = " << cfg.seed << "\n";
  PipelineConfig copy = cfg;
  visit_fields(w, copy);
  return w.stream().str();
}

void write_run_metadata(const std::filesystem::path& dir, const PipelineConfig& cfg) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "config.toml", std::ios::binary);
    out << config_text(cfg);
    if (!out) throw IoError("cannot write " + (dir / "config.toml").string());
  }
  std::ofstream out(dir / "VERSION", std::ios::binary);
  out << "speculens " << SPECULENS_VERSION << "\n";
  if (!out) throw IoError("cannot write " + (dir / "VERSION").string());
}

}  // namespace speculens
