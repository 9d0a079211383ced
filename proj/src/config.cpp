#include "infusenet/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace ifn {

using nlohmann::json;

namespace {

// Reads typed keys out of one JSON object and rejects any key it never asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw Error(Errc::validation, where() + " must be an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw Error(Errc::unknown_key, "unknown key '" + key + "' in " + where());
    }
  }
  Section(const Section&) = delete;
  Section& operator=(const Section&) = delete;

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw Error(Errc::validation, where() + "." + key + ": " + e.what());
    }
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  const json& at(const char* key) const { return j_.at(key); }
  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string where() const { return path_.empty() ? "config" : "'" + path_ + "'"; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_noise(const json& j, const std::string& path, NoiseSpec& n) {
  Section s(j, path);
  s.get("illumination_drift", n.illumination_drift);
  s.get("artefact_level", n.artefact_level);
  s.get("sensor_sigma", n.sensor_sigma);
}

void read_texture(const json& j, const std::string& path, TextureSpec& t) {
  Section s(j, path);
  s.get("base_level", t.base_level);
  s.get("contrast", t.contrast);
  s.get("frequency", t.frequency);
}

void read_corpus(const json& j, CorpusConfig& c) {
  Section s(j, "corpus");
  s.get("height", c.height);
  s.get("width", c.width);
  s.get("num_frames", c.num_frames);
  s.get("apex_min", c.apex_min);
  s.get("apex_max", c.apex_max);
  s.get("class_distribution", c.class_distribution);
  if (s.has("class_percent")) {
    std::vector<double> v;
    s.get("class_percent", v);
    if (v.size() != static_cast<std::size_t>(kNumAus)) throw Error(Errc::validation, "corpus.class_percent needs 12 values");
    std::copy(v.begin(), v.end(), c.class_percent.begin());
  }
  s.get("co_occurrence", c.co_occurrence);
  if (s.has("databases")) {
    const json& arr = s.at("databases");
    if (!arr.is_array()) throw Error(Errc::validation, "corpus.databases must be an array");
    c.databases.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string path = "corpus.databases[" + std::to_string(i) + "]";
      DatabaseSpec db;
      Section d(arr[i], path);
      d.get("name", db.name);
      d.get("samples", db.samples);
      d.get("displacement_min", db.displacement_min);
      d.get("displacement_max", db.displacement_max);
      if (d.has("texture")) read_texture(d.at("texture"), path + ".texture", db.texture);
      if (d.has("noise")) read_noise(d.at("noise"), path + ".noise", db.noise);
      c.databases.push_back(std::move(db));
    }
  }
}

void read_flow(const json& j, FlowParams& f) {
  Section s(j, "flow");
  s.get("lambda", f.lambda);
  s.get("iters", f.iters);
  s.get("tol", f.tol);
  s.get("levels", f.levels);
  s.get("warps", f.warps);
}

void read_magnify(const json& j, MagnifySection& m) {
  Section s(j, "magnify");
  s.get("alpha", m.mag.alpha);
  s.get("depth", m.mag.depth);
  s.get("decoded", m.decoded);
  s.get("standardize", m.standardize);
}

void read_model(const json& j, ModelConfig& m) {
  Section s(j, "model");
  s.get("blocks", m.backbone.blocks);
  s.get("widths", m.backbone.widths);
  s.get("kernel", m.backbone.kernel);
  s.get("infusion", m.infusion);
  if (s.has("fusion")) {
    std::string v;
    s.get("fusion", v);
    m.fusion = fusion_mode_from_string(v);
  }
}

void read_train(const json& j, TrainConfig& t) {
  Section s(j, "train");
  s.get("lr", t.lr);
  s.get("gamma", t.gamma);
  s.get("epochs", t.epochs);
  s.get("batch", t.batch);
  s.get("seed", t.seed);
  s.get("max_offset", t.max_offset);
  s.get("aux_flow_head", t.aux_flow_head);
  if (s.has("loss")) {
    std::string v;
    s.get("loss", v);
    t.loss = loss_kind_from_string(v);
  }
}

void read_eval(const json& j, EvalSection& e) {
  Section s(j, "eval");
  s.get("ablation_factors", e.ablation_factors);
  s.get("ablation_modes", e.ablation_modes);
  s.get("batch", e.batch);
}

void read_paths(const json& j, PathsSection& p) {
  Section s(j, "paths");
  s.get("out", p.out);
}

// 1-based line and column of a byte offset.
std::string line_context(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

json noise_json(const NoiseSpec& n) {
  return {{"illumination_drift", n.illumination_drift}, {"artefact_level", n.artefact_level},
          {"sensor_sigma", n.sensor_sigma}};
}

}  // namespace

void RunConfig::validate() const {
  corpus.validate();
  if (!(flow.lambda > 0.0)) throw Error(Errc::validation, "flow.lambda must be > 0");
  if (flow.iters < 1 || flow.levels < 1 || flow.warps < 1) {
    throw Error(Errc::validation, "flow.iters, flow.levels and flow.warps must be >= 1");
  }
  if (!(flow.tol >= 0.0)) throw Error(Errc::validation, "flow.tol must be >= 0");
  ifn::validate(magnify.mag);
  const int cell = 1 << magnify.mag.depth;
  if (corpus.height % cell != 0 || corpus.width % cell != 0) {
    throw Error(Errc::validation, "corpus frame dims must be divisible by 2^magnify.depth");
  }
  model.validate();
  const int shrink = 1 << model.backbone.blocks;
  if (corpus.height % shrink != 0 || corpus.width % shrink != 0) {
    throw Error(Errc::validation, "corpus frame dims must be divisible by 2^model.blocks");
  }
  train.validate();
  if (train.max_offset >= corpus.num_frames) throw Error(Errc::validation, "train.max_offset exceeds the sequence");
  for (double a : eval.ablation_factors) {
    if (!(a >= 0.0)) throw Error(Errc::validation, "eval.ablation_factors must be >= 0");
  }
  for (const auto& m : eval.ablation_modes) {
    if (m != "infuse_decoded" && m != "infuse_no_infusion") fusion_mode_from_string(m);
  }
  if (eval.batch < 1) throw Error(Errc::validation, "eval.batch must be >= 1");
  if (paths.out.empty()) throw Error(Errc::validation, "paths.out must not be empty");
}

json RunConfig::to_json() const {
  json dbs = json::array();
  for (const auto& d : corpus.databases) {
    dbs.push_back({{"name", d.name},
                   {"samples", d.samples},
                   {"displacement_min", d.displacement_min},
                   {"displacement_max", d.displacement_max},
                   {"texture", {{"base_level", d.texture.base_level},
                                {"contrast", d.texture.contrast},
                                {"frequency", d.texture.frequency}}},
                   {"noise", noise_json(d.noise)}});
  }
  return {
      {"corpus",
       {{"height", corpus.height},
        {"width", corpus.width},
        {"num_frames", corpus.num_frames},
        {"apex_min", corpus.apex_min},
        {"apex_max", corpus.apex_max},
        {"class_distribution", corpus.class_distribution},
        {"class_percent", corpus.class_percent},
        {"co_occurrence", corpus.co_occurrence},
        {"databases", dbs}}},
      {"flow",
       {{"lambda", flow.lambda}, {"iters", flow.iters}, {"tol", flow.tol}, {"levels", flow.levels}, {"warps", flow.warps}}},
      {"magnify", {{"alpha", magnify.mag.alpha}, {"depth", magnify.mag.depth}, {"decoded", magnify.decoded},
                   {"standardize", magnify.standardize}}},
      {"model",
       {{"blocks", model.backbone.blocks},
        {"widths", model.backbone.widths},
        {"kernel", model.backbone.kernel},
        {"infusion", model.infusion},
        {"fusion", to_string(model.fusion)}}},
      {"train",
       {{"lr", train.lr},
        {"gamma", train.gamma},
        {"epochs", train.epochs},
        {"batch", train.batch},
        {"seed", train.seed},
        {"max_offset", train.max_offset},
        {"loss", to_string(train.loss)},
        {"aux_flow_head", train.aux_flow_head}}},
      {"eval", {{"ablation_factors", eval.ablation_factors}, {"ablation_modes", eval.ablation_modes}, {"batch", eval.batch}}},
      {"paths", {{"out", paths.out}}},
      {"seed", seed},
  };
}

ExperimentConfig RunConfig::experiment() const {
  ExperimentConfig e;
  e.inputs.flow = flow;
  e.inputs.magnify = magnify.mag;
  e.inputs.decoded = magnify.decoded;
  e.inputs.standardize = magnify.standardize;
  e.inputs.max_offset = train.max_offset;
  e.model = model;
  e.train = train;
  return e;
}

RunConfig config_from_json(const json& j) {
  RunConfig cfg;
  {
    Section root(j, "");
    if (root.has("corpus")) read_corpus(root.at("corpus"), cfg.corpus);
    if (root.has("flow")) read_flow(root.at("flow"), cfg.flow);
    if (root.has("magnify")) read_magnify(root.at("magnify"), cfg.magnify);
    if (root.has("model")) read_model(root.at("model"), cfg.model);
    if (root.has("train")) read_train(root.at("train"), cfg.train);
    if (root.has("eval")) read_eval(root.at("eval"), cfg.eval);
    if (root.has("paths")) read_paths(root.at("paths"), cfg.paths);
    root.get("seed", cfg.seed);
  }
  cfg.validate();
  return cfg;
}

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(Errc::parse_error, origin + ": " + line_context(text, e.byte == 0 ? 0 : e.byte - 1) + ": " + e.what());
  }
  return config_from_json(j);
}

RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::missing_file, "cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path.string());
}

void write_resolved_config(const RunConfig& cfg, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  std::ofstream out(dir / "config.json");
  if (!out) throw Error(Errc::unwritable_path, "cannot write " + (dir / "config.json").string());
  out << cfg.to_json().dump(2) << '\n';
}

}  // namespace ifn
