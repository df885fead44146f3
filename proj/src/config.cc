#include "vfl/config.h"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "vfl/error.h"

namespace vfl {
namespace {

using nlohmann::json;

// Strict object reader: every key must be consumed, and type errors carry
// the full JSON path.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  [[noreturn]] static void fail(const std::string& path, const std::string& what) {
    throw ConfigError((path.empty() ? std::string("<root>") : path) + ": " + what);
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (const json* v = find(key)) out = convert<T>(*v, at(key));
  }

  template <typename T>
  T require(const std::string& key) {
    const json* v = find(key);
    if (!v) fail(at(key), "missing required field");
    return convert<T>(*v, at(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) fail(at(it.key()), "unknown field");
  }

  template <typename T>
  static T convert(const json& v, const std::string& path) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) fail(path, "expected true or false");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) fail(path, "expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) fail(path, "expected a number");
      return v.get<double>();
    } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
      if (!v.is_number_unsigned()) fail(path, "expected a non-negative integer");
      return static_cast<T>(v.get<std::uint64_t>());
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) fail(path, "expected an integer");
      return static_cast<T>(v.get<std::int64_t>());
    } else {
      // std::vector<U>
      using U = typename T::value_type;
      if (!v.is_array()) fail(path, "expected an array");
      T out;
      for (std::size_t i = 0; i < v.size(); ++i)
        out.push_back(convert<U>(v[i], path + "[" + std::to_string(i) + "]"));
      return out;
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename F>
auto wrap(const std::string& path, F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    if (msg.rfind(path, 0) == 0) throw;
    throw ConfigError(path + ": " + msg);
  }
}

DatasetSpec read_dataset(const json& j, const std::string& path, std::string& name) {
  Reader r(j, path);
  DatasetSpec d;
  d.kind = wrap(r.at("kind"), [&] { return dataset_kind_from_string(r.require<std::string>("kind")); });
  name = to_string(d.kind);
  r.get("name", name);
  r.get("n_train", d.n_train);
  r.get("n_test", d.n_test);
  r.get("dims_a", d.dims_a);
  r.get("dims_b", d.dims_b);
  r.get("positive_ratio", d.positive_ratio);
  r.get("num_classes", d.num_classes);
  r.get("separation_a", d.separation_a);
  r.get("separation_b", d.separation_b);
  r.get("image_size", d.image_size);
  r.get("pixel_noise", d.pixel_noise);
  r.get("csv_path", d.csv_path);
  r.get("label_column", d.label_column);
  r.get("party_a_columns", d.party_a_columns);
  r.get("party_b_columns", d.party_b_columns);
  r.get("test_fraction", d.test_fraction);
  r.finish();
  if (d.kind == DatasetKind::kBinaryBalanced || d.kind == DatasetKind::kBinaryImbalanced) d.num_classes = 2;
  wrap(path, [&] {
    d.validate();
    return 0;
  });
  return d;
}

TrainConfig read_train(const json& j, const std::string& path) {
  Reader r(j, path);
  TrainConfig t;
  r.get("epochs", t.epochs);
  r.get("batch_size", t.batch_size);
  r.get("learning_rate", t.learning_rate);
  if (r.has("optimizer")) {
    const auto name = r.require<std::string>("optimizer");
    if (name == "sgd")
      t.optimizer = OptimizerKind::kSgd;
    else if (name == "sgd-momentum")
      t.optimizer = OptimizerKind::kSgdMomentum;
    else
      Reader::fail(r.at("optimizer"), "expected \"sgd\" or \"sgd-momentum\"");
  }
  r.get("momentum", t.momentum);
  r.get("bottom_hidden", t.bottom_hidden);
  r.get("cut_width", t.cut_width);
  r.get("top_hidden", t.top_hidden);
  r.get("vlr_softmax", t.vlr_softmax);
  r.get("local_patch", t.local_patch);
  r.get("precode_beta", t.protection.precode_beta);
  r.get("precode_latent", t.protection.precode_latent);
  r.finish();
  if (!(t.learning_rate > 0)) Reader::fail(r.at("learning_rate"), "must be > 0");
  if (t.epochs == 0) Reader::fail(r.at("epochs"), "must be >= 1");
  if (t.batch_size == 0) Reader::fail(r.at("batch_size"), "must be >= 1");
  return t;
}

EvaluationTask read_task(const json& j, const std::string& path, std::size_t index) {
  Reader r(j, path);
  EvaluationTask t;
  t.name = "task" + std::to_string(index);
  r.get("name", t.name);
  t.setting = r.require<int>("setting");
  wrap(r.at("setting"), [&] { return setting_info(t.setting); });
  t.algorithm = wrap(r.at("algorithm"),
                     [&] { return algorithm_kind_from_string(r.require<std::string>("algorithm")); });
  if (r.has("threat")) {
    const auto tm = r.require<std::string>("threat");
    if (tm == "T1")
      t.threat = ThreatModel::kT1;
    else if (tm == "T2")
      t.threat = ThreatModel::kT2;
    else
      Reader::fail(r.at("threat"), "expected \"T1\" or \"T2\"");
  }
  {
    const json* d = r.find("dataset");
    if (!d) Reader::fail(r.at("dataset"), "missing required field");
    t.dataset = read_dataset(*d, r.at("dataset"), t.dataset_name);
  }
  {
    const auto names = r.require<std::vector<std::string>>("attacks");
    t.attacks.clear();
    for (std::size_t i = 0; i < names.size(); ++i)
      t.attacks.push_back(wrap(r.at("attacks") + "[" + std::to_string(i) + "]",
                               [&] { return attack_kind_from_string(names[i]); }));
  }
  {
    const json* ps = r.find("protections");
    if (!ps || !ps->is_array()) Reader::fail(r.at("protections"), "expected an array");
    for (std::size_t i = 0; i < ps->size(); ++i) {
      const std::string pp = r.at("protections") + "[" + std::to_string(i) + "]";
      const json& pj = (*ps)[i];
      ProtectionSweep sweep;
      if (pj.is_string()) {
        sweep.kind = wrap(pp, [&] { return protection_kind_from_string(pj.get<std::string>()); });
      } else {
        Reader pr(pj, pp);
        sweep.kind = wrap(pr.at("kind"), [&] { return protection_kind_from_string(pr.require<std::string>("kind")); });
        pr.get("strengths", sweep.strengths);
        pr.finish();
      }
      t.protections.push_back(sweep);
    }
  }
  r.get("seeds", t.seeds);
  if (const json* tj = r.find("train")) t.train = read_train(*tj, r.at("train"));
  r.get("aux_sizes", t.aux_sizes);
  r.get("mi_samples", t.mi_samples);
  if (r.has("shadows")) {
    const auto names = r.require<std::vector<std::string>>("shadows");
    t.shadows.clear();
    for (std::size_t i = 0; i < names.size(); ++i)
      t.shadows.push_back(wrap(r.at("shadows") + "[" + std::to_string(i) + "]",
                               [&] { return shadow_kind_from_string(names[i]); }));
  }
  if (const json* mj = r.find("mc")) {
    Reader mr(*mj, r.at("mc"));
    mr.get("epochs", t.mc.epochs);
    mr.get("learning_rate", t.mc.learning_rate);
    mr.get("head_hidden", t.mc.head_hidden);
    mr.finish();
  }
  if (const json* mj = r.find("mi")) {
    Reader mr(*mj, r.at("mi"));
    mr.get("shadow_epochs", t.mi.shadow_epochs);
    mr.get("shadow_learning_rate", t.mi.shadow_learning_rate);
    mr.get("steps", t.mi.steps);
    mr.get("learning_rate", t.mi.learning_rate);
    mr.finish();
  }
  if (const json* gj = r.find("gi")) {
    Reader gr(*gj, r.at("gi"));
    gr.get("steps", t.gi.steps);
    gr.get("learning_rate", t.gi.learning_rate);
    gr.get("tolerance", t.gi.tolerance);
    gr.finish();
  }
  r.finish();
  wrap(path, [&] {
    t.validate();
    return 0;
  });
  return t;
}

}  // namespace

void apply_global_seed(RunConfig& config, std::uint64_t seed) {
  config.seed = seed;
  for (std::size_t i = 0; i < config.tasks.size(); ++i) {
    config.tasks[i].dataset.seed = mix_keys(seed, {i, 1});
    config.tasks[i].train.seed = mix_keys(seed, {i, 2});
  }
}

RunConfig parse_run_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  Reader r(root, "");
  RunConfig cfg;
  cfg.version = r.require<int>("version");
  if (cfg.version != kConfigVersion)
    Reader::fail("version", "unsupported version " + std::to_string(cfg.version) + " (expected " +
                                std::to_string(kConfigVersion) + ")");
  r.get("seed", cfg.seed);
  r.get("parallelism", cfg.parallelism);
  if (cfg.parallelism < 1) Reader::fail("parallelism", "must be >= 1");
  r.get("output_dir", cfg.output_dir);
  if (r.has("format")) {
    const auto f = r.require<std::string>("format");
    if (f == "csv")
      cfg.format = RecordFormat::kCsv;
    else if (f == "json")
      cfg.format = RecordFormat::kJson;
    else
      Reader::fail("format", "expected \"csv\" or \"json\"");
  }
  const json* tasks = r.find("tasks");
  if (!tasks || !tasks->is_array()) Reader::fail("tasks", "expected an array");
  for (std::size_t i = 0; i < tasks->size(); ++i)
    cfg.tasks.push_back(read_task((*tasks)[i], "tasks[" + std::to_string(i) + "]", i));
  r.finish();
  apply_global_seed(cfg, cfg.seed);
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

}  // namespace vfl
