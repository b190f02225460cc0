// tdcm: command-line front end over the C API.
//
// Exit codes: 0 when every output was written, 2 for usage, configuration
// and input errors, 1 for runtime and numerical failures.

#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tdcm/tdcm.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct Failure {
  int exit_code;
  std::string message;
};

int exit_code_for(tdcm_status s) {
  switch (s) {
    case TDCM_ERR_NUMERICAL:
    case TDCM_ERR_DOMAIN:
    case TDCM_ERR_STATE:
    case TDCM_ERR_EVALUATION:
    case TDCM_ERR_INTERNAL:
      return kExitRuntime;
    default:
      return kExitUsage;
  }
}

void check(tdcm_status s, const std::string& what) {
  if (s == TDCM_OK) return;
  throw Failure{exit_code_for(s), what + ": " + tdcm_last_error()};
}

[[noreturn]] void usage_error(const std::string& message) { throw Failure{kExitUsage, message}; }

template <class T, void (*Free)(T*)>
struct Handle {
  T* ptr = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(ptr); }
  T** out() { return &ptr; }
  T* get() const { return ptr; }
};

using Config = Handle<tdcm_config, tdcm_config_free>;
using Dataset = Handle<tdcm_dataset, tdcm_dataset_free>;
using Model = Handle<tdcm_model, tdcm_model_free>;
using Record = Handle<tdcm_record, tdcm_record_free>;

std::string take(char* s) {
  std::string out = s == nullptr ? "" : s;
  tdcm_string_free(s);
  return out;
}

// Relative output paths resolve under $TDCM_OUTPUT_ROOT when it is set.
fs::path output_path(const std::string& p) {
  fs::path path(p);
  const char* root = std::getenv("TDCM_OUTPUT_ROOT");
  if (path.is_relative() && root != nullptr && *root != '\0') path = fs::path(root) / path;
  return path;
}

// Checked before any compute so that a bad destination leaves nothing behind.
void require_writable_parent(const fs::path& p) {
  fs::path dir = p.parent_path();
  if (dir.empty()) dir = ".";
  if (!fs::is_directory(dir)) usage_error("output directory '" + dir.string() + "' does not exist");
  if (::access(dir.c_str(), W_OK) != 0) usage_error("output directory '" + dir.string() + "' is not writable");
}

fs::path staging_path(const fs::path& p) { return fs::path(p.string() + ".partial"); }

void commit(const fs::path& staged, const fs::path& final_path) {
  std::error_code ec;
  fs::rename(staged, final_path, ec);
  if (ec) throw Failure{kExitRuntime, "cannot move output into place at '" + final_path.string() + "': " + ec.message()};
}

void write_text(const fs::path& p, const std::string& text) {
  const fs::path staged = staging_path(p);
  {
    std::ofstream out(staged);
    out << text;
    if (!text.empty() && text.back() != '\n') out << '\n';
    if (!out) usage_error("cannot write '" + p.string() + "'");
  }
  commit(staged, p);
}

void require_input(const std::string& path, const char* what) {
  if (path.empty()) usage_error(std::string("missing ") + what);
  if (!fs::is_regular_file(path)) usage_error(std::string(what) + " '" + path + "' does not exist");
}

bool header_has_labels(const std::string& path) {
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  while (!header.empty() && (header.back() == '\r' || header.back() == ' ')) header.pop_back();
  const auto comma = header.rfind(',');
  const std::string last = comma == std::string::npos ? header : header.substr(comma + 1);
  return last == "label";
}

void load_dataset(const std::string& path, const char* what, Dataset& ds, bool need_labels) {
  require_input(path, what);
  const bool labelled = header_has_labels(path);
  if (need_labels && !labelled) usage_error(std::string(what) + " '" + path + "' has no label column");
  check(tdcm_dataset_load(path.c_str(), labelled ? 1 : 0, ds.out()), std::string("loading ") + what);
}

std::string fmt3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

void print_summary(const tdcm_record* rec) {
  tdcm_metrics s{}, t{}, d{};
  check(tdcm_record_metrics(rec, &s, &t, &d), "reading metrics");
  auto triple = [](const tdcm_metrics& m) { return fmt3(m.nmi) + "/" + fmt3(m.ari) + "/" + fmt3(m.acc); };
  std::cout << "NMI/ARI/ACC source " << triple(s) << " | target " << triple(t) << " | diff " << triple(d) << '\n';
}

std::string flag_name(std::string key) {
  for (char& c : key) {
    if (c == '_') c = '-';
  }
  return "--" + key;
}

// Config keys exposed as --key-name flags, plus --config and --set.
struct ConfigOptions {
  std::string config_file;
  std::vector<std::string> assignments;
  std::map<std::string, std::string> values;
  std::vector<std::string> order;
  bool variant_r = false;
  bool variant_o = false;
  bool variant_e = false;
  bool literal_entropy = false;

  void attach(CLI::App* app, bool with_variants = true) {
    app->add_option("--config", config_file, "key = value configuration file");
    app->add_option("--set", assignments, "override a config key, KEY=VALUE (repeatable)");
    const size_t n = tdcm_config_key_count();
    for (size_t i = 0; i < n; ++i) {
      const char* name = nullptr;
      const char* def = nullptr;
      const char* desc = nullptr;
      tdcm_config_key_info(i, &name, &def, &desc);
      if (values.count(name) == 0) order.emplace_back(name);
      std::string& slot = values[name];
      const std::string help = std::string(desc) + " (default " + def + ")";
      const std::string def_s = def;
      if (def_s == "true" || def_s == "false") {
        app->add_flag(flag_name(name) + "{true}", slot, help)->group("Config");
      } else {
        app->add_option(flag_name(name), slot, help)->group("Config");
      }
    }
    if (with_variants) {
      app->add_flag("--variant-R", variant_r, "raw score matrices without the symmetry constraint")->group("Ablations");
      app->add_flag("--variant-O", variant_o, "no orthogonality penalty")->group("Ablations");
      app->add_flag("--variant-E", variant_e, "no entropy term")->group("Ablations");
      app->add_flag("--paper-literal-entropy", literal_entropy, "entropy term with the flipped sign")
          ->group("Ablations");
    }
  }

  // File first, then --key flags, then --set, then the aliases.
  void resolve(Config& cfg) const {
    if (!config_file.empty()) {
      require_input(config_file, "config file");
      check(tdcm_config_load(config_file.c_str(), cfg.out()), "config");
    } else {
      check(tdcm_config_new(cfg.out()), "config");
    }
    for (const auto& key : order) {
      const std::string& v = values.at(key);
      if (!v.empty()) check(tdcm_config_set(cfg.get(), key.c_str(), v.c_str()), "config");
    }
    for (const auto& a : assignments) {
      const auto eq = a.find('=');
      if (eq == std::string::npos) usage_error("--set expects KEY=VALUE, got '" + a + "'");
      check(tdcm_config_set(cfg.get(), a.substr(0, eq).c_str(), a.substr(eq + 1).c_str()), "config");
    }
    if (variant_r) check(tdcm_config_set(cfg.get(), "variant_r", "true"), "config");
    if (variant_o) check(tdcm_config_set(cfg.get(), "variant_o", "true"), "config");
    if (variant_e) check(tdcm_config_set(cfg.get(), "variant_e", "true"), "config");
    if (literal_entropy) check(tdcm_config_set(cfg.get(), "literal_entropy_sign", "true"), "config");
    check(tdcm_config_validate(cfg.get()), "config");
  }
};

// --pair PREFIX stands for PREFIX_source.csv and PREFIX_target.csv.
struct PairOptions {
  std::string pair;
  std::string source;
  std::string target;

  void attach(CLI::App* app) {
    app->add_option("--pair", pair, "pair prefix, e.g. data/pair_000");
    app->add_option("--source", source, "source CSV");
    app->add_option("--target", target, "target CSV");
  }

  void resolve() {
    if (!pair.empty()) {
      if (source.empty()) source = pair + "_source.csv";
      if (target.empty()) target = pair + "_target.csv";
    }
  }
};

struct Cli {
  ConfigOptions cfg_opts;
  PairOptions pair_opts;
  std::string out;
  std::string checkpoint;
  std::string record;
  std::string data;
  std::string algo;
  std::string axis;
  std::string values;
  std::vector<std::string> inputs;
};

int cmd_generate(Cli& c) {
  Config cfg;
  c.cfg_opts.resolve(cfg);
  const fs::path dir = output_path(c.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) usage_error("cannot create output directory '" + dir.string() + "'");
  if (::access(dir.c_str(), W_OK) != 0) usage_error("output directory '" + dir.string() + "' is not writable");
  check(tdcm_generate_files(cfg.get(), dir.c_str()), "generate");
  char* n = nullptr;
  check(tdcm_config_get(cfg.get(), "num_pairs", &n), "config");
  std::cout << "wrote " << take(n) << " pair(s) to " << dir.string() << '\n';
  return 0;
}

fs::path default_record_path(const fs::path& checkpoint) {
  fs::path p = checkpoint;
  p.replace_extension(".record.json");
  return p;
}

int cmd_train(Cli& c) {
  Config cfg;
  c.cfg_opts.resolve(cfg);
  c.pair_opts.resolve();
  Dataset source;
  Dataset target;
  load_dataset(c.pair_opts.source, "source dataset", source, true);
  const bool has_target = !c.pair_opts.target.empty();
  if (has_target) load_dataset(c.pair_opts.target, "target dataset", target, true);
  if (c.checkpoint.empty()) usage_error("--checkpoint is required");
  const fs::path ckpt_path = output_path(c.checkpoint);
  const fs::path rec_path = c.record.empty() ? default_record_path(ckpt_path) : output_path(c.record);
  require_writable_parent(ckpt_path);
  require_writable_parent(rec_path);

  Model model;
  check(tdcm_train(cfg.get(), source.get(), model.out()), "training");
  Record rec;
  check(tdcm_evaluate(model.get(), source.get(), has_target ? target.get() : source.get(), rec.out()),
        "evaluation");
  char* json = nullptr;
  check(tdcm_record_to_json(rec.get(), &json), "record");
  const std::string rec_json = take(json);

  check(tdcm_model_save(model.get(), staging_path(ckpt_path).c_str()), "saving checkpoint");
  commit(staging_path(ckpt_path), ckpt_path);
  write_text(rec_path, rec_json);
  print_summary(rec.get());
  return 0;
}

int cmd_eval(Cli& c) {
  c.pair_opts.resolve();
  require_input(c.checkpoint, "checkpoint");
  Dataset source;
  Dataset target;
  load_dataset(c.pair_opts.source, "source dataset", source, true);
  load_dataset(c.pair_opts.target, "target dataset", target, true);
  if (c.record.empty()) usage_error("--record is required");
  const fs::path rec_path = output_path(c.record);
  require_writable_parent(rec_path);

  Model model;
  check(tdcm_model_load(c.checkpoint.c_str(), model.out()), "loading checkpoint");
  Record rec;
  check(tdcm_evaluate(model.get(), source.get(), target.get(), rec.out()), "evaluation");
  char* json = nullptr;
  check(tdcm_record_to_json(rec.get(), &json), "record");
  write_text(rec_path, take(json));
  print_summary(rec.get());
  return 0;
}

int cmd_baseline(Cli& c) {
  if (!c.algo.empty()) c.cfg_opts.assignments.push_back("baseline=" + c.algo);
  Config cfg;
  c.cfg_opts.resolve(cfg);
  c.pair_opts.resolve();
  Dataset source;
  Dataset target;
  load_dataset(c.pair_opts.source, "source dataset", source, true);
  load_dataset(c.pair_opts.target, "target dataset", target, true);
  if (c.record.empty()) usage_error("--record is required");
  const fs::path rec_path = output_path(c.record);
  require_writable_parent(rec_path);

  Record rec;
  check(tdcm_run_baseline(cfg.get(), source.get(), target.get(), rec.out()), "baseline");
  char* json = nullptr;
  check(tdcm_record_to_json(rec.get(), &json), "record");
  write_text(rec_path, take(json));
  print_summary(rec.get());
  return 0;
}

std::string json_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      default: out += ch;
    }
  }
  return out;
}

int cmd_sweep(Cli& c) {
  Config cfg;
  c.cfg_opts.resolve(cfg);
  if (c.values.find_first_not_of(" ,\t") == std::string::npos) usage_error("--values must list at least one value");
  if (c.out.empty()) usage_error("--out is required");
  const fs::path csv_path = output_path(c.out);
  const fs::path meta_path = fs::path(csv_path.string() + ".config.json");
  require_writable_parent(csv_path);

  char* csv = nullptr;
  check(tdcm_sweep(cfg.get(), c.axis.c_str(), c.values.c_str(), &csv), "sweep");
  const std::string table = take(csv);

  // The resolved configuration travels next to the table.
  std::ostringstream meta;
  meta << "{\n  \"format\": \"tdcm-sweep\",\n  \"axis\": \"" << json_escape(c.axis) << "\",\n  \"values\": \""
       << json_escape(c.values) << "\",\n  \"table\": \"" << json_escape(csv_path.filename().string())
       << "\",\n  \"config\": {";
  const size_t n = tdcm_config_key_count();
  for (size_t i = 0; i < n; ++i) {
    const char* name = nullptr;
    tdcm_config_key_info(i, &name, nullptr, nullptr);
    char* v = nullptr;
    check(tdcm_config_get(cfg.get(), name, &v), "config");
    meta << (i == 0 ? "\n" : ",\n") << "    \"" << name << "\": \"" << json_escape(take(v)) << '"';
  }
  meta << "\n  }\n}\n";
  write_text(meta_path, meta.str());
  write_text(csv_path, table);
  std::cout << "wrote " << csv_path.string() << '\n';
  return 0;
}

int cmd_trace(Cli& c) {
  require_input(c.checkpoint, "checkpoint");
  Dataset data;
  load_dataset(c.data, "dataset", data, false);
  if (c.out.empty()) usage_error("--out is required");
  const fs::path out_path = output_path(c.out);
  require_writable_parent(out_path);
  Model model;
  check(tdcm_model_load(c.checkpoint.c_str(), model.out()), "loading checkpoint");
  char* json = nullptr;
  check(tdcm_model_trace(model.get(), data.get(), &json), "trace");
  write_text(out_path, take(json));
  std::cout << "wrote " << out_path.string() << '\n';
  return 0;
}

int cmd_report(Cli& c) {
  if (c.inputs.empty()) usage_error("report needs at least one run record");
  std::vector<std::unique_ptr<Record>> records;
  std::vector<const tdcm_record*> ptrs;
  for (const auto& path : c.inputs) {
    require_input(path, "run record");
    std::ifstream in(path);
    std::stringstream buf;
    buf << in.rdbuf();
    auto rec = std::make_unique<Record>();
    check(tdcm_record_from_json(buf.str().c_str(), rec->out()), "reading '" + path + "'");
    ptrs.push_back(rec->get());
    records.push_back(std::move(rec));
  }
  std::optional<fs::path> out_path;
  if (!c.out.empty()) {
    out_path = output_path(c.out);
    require_writable_parent(*out_path);
  }
  char* table = nullptr;
  check(tdcm_report(ptrs.data(), ptrs.size(), &table), "report");
  const std::string text = take(table);
  std::cout << text;
  if (out_path) write_text(*out_path, text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transferable deep clustering: generation, training, transfer evaluation and sweeps"};
  app.set_version_flag("--version", tdcm_version());
  app.require_subcommand(1);
  Cli c;

  CLI::App* gen = app.add_subcommand("generate", "write synthetic source/target pairs");
  c.cfg_opts.attach(gen, false);
  gen->add_option("--out", c.out, "output directory")->required();

  CLI::App* train = app.add_subcommand("train", "train on the source and evaluate the transfer");
  c.cfg_opts.attach(train);
  c.pair_opts.attach(train);
  train->add_option("--checkpoint", c.checkpoint, "checkpoint output path")->required();
  train->add_option("--record", c.record, "run record output path (default: <checkpoint>.record.json)");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a source/target pair");
  c.pair_opts.attach(eval);
  eval->add_option("--checkpoint", c.checkpoint, "checkpoint to load")->required();
  eval->add_option("--record", c.record, "run record output path")->required();

  CLI::App* base = app.add_subcommand("baseline", "fit a classical baseline and transfer with frozen centroids");
  c.cfg_opts.attach(base, false);
  c.pair_opts.attach(base);
  base->add_option("--algo", c.algo, "kmeans, gmm or soft-kmeans");
  base->add_option("--record", c.record, "run record output path")->required();

  CLI::App* sweep = app.add_subcommand("sweep", "one run per value, pair and seed along an axis");
  c.cfg_opts.attach(sweep);
  sweep->add_option("--axis", c.axis, "tau, L, alpha-mode, beta or perturbation")->required();
  sweep->add_option("--values", c.values, "comma-separated values")->required();
  sweep->add_option("--out", c.out, "CSV output path")->required();

  CLI::App* trace = app.add_subcommand("trace-centroids", "dump per-block centroids for plotting");
  trace->add_option("--checkpoint", c.checkpoint, "checkpoint to load")->required();
  trace->add_option("--data", c.data, "dataset CSV")->required();
  trace->add_option("--out", c.out, "trace JSON output path")->required();

  CLI::App* report = app.add_subcommand("report", "average run records per model");
  report->add_option("records", c.inputs, "run record JSON files")->required();
  report->add_option("--out", c.out, "also write the table here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_generate(c);
    if (train->parsed()) return cmd_train(c);
    if (eval->parsed()) return cmd_eval(c);
    if (base->parsed()) return cmd_baseline(c);
    if (sweep->parsed()) return cmd_sweep(c);
    if (trace->parsed()) return cmd_trace(c);
    if (report->parsed()) return cmd_report(c);
  } catch (const Failure& f) {
    std::cerr << "tdcm: " << f.message << '\n';
    return f.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "tdcm: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
