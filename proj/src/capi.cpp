#include "tdcm/tdcm.h"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <new>
#include <optional>
#include <sstream>
#include <string>

#include "tdcm/config.hpp"
#include "tdcm/datagen.hpp"
#include "tdcm/error.hpp"
#include "tdcm/experiments.hpp"
#include "tdcm/metrics.hpp"
#include "tdcm/trainer.hpp"
#include "json.hpp"

struct tdcm_config {
  tdcm::ExperimentConfig cfg;
};

struct tdcm_dataset {
  tdcm::Matrix x;
  std::optional<std::vector<int>> labels;
};

struct tdcm_model {
  tdcm::Checkpoint ckpt;
  // Zero for loaded checkpoints.
  double train_seconds = 0.0;
};

struct tdcm_record {
  tdcm::RunRecord record;
};

namespace {

thread_local std::string last_error;

tdcm_status fail(tdcm_status status, const std::string& message) {
  last_error = message;
  return status;
}

// Runs `body`, translating exceptions into status codes.
template <class F>
tdcm_status guarded(F&& body) {
  try {
    body();
    last_error.clear();
    return TDCM_OK;
  } catch (const tdcm::Error& e) {
    return fail(static_cast<tdcm_status>(static_cast<int>(e.code())), e.what());
  } catch (const std::bad_alloc&) {
    return fail(TDCM_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(TDCM_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(TDCM_ERR_INTERNAL, "unknown error");
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

#define TDCM_REQUIRE(ptr)                                                     \
  do {                                                                        \
    if ((ptr) == nullptr) return fail(TDCM_ERR_NULL_ARGUMENT, #ptr " is null"); \
  } while (0)

tdcm::Domain as_domain(const tdcm_dataset* ds, const char* what) {
  if (!ds->labels) {
    throw tdcm::ConfigError(std::string(what) + " dataset has no label column; labels are needed for metrics");
  }
  tdcm::Domain d;
  d.x = ds->x;
  d.labels = *ds->labels;
  return d;
}

std::unique_ptr<tdcm_dataset> dataset_from(const tdcm::Domain& d) {
  auto out = std::make_unique<tdcm_dataset>();
  out->x = d.x;
  out->labels = d.labels;
  return out;
}

}  // namespace

extern "C" {

const char* tdcm_version(void) { return "1.0.0"; }

const char* tdcm_last_error(void) { return last_error.c_str(); }

const char* tdcm_status_name(tdcm_status status) {
  switch (status) {
    case TDCM_OK: return "ok";
    case TDCM_ERR_NULL_ARGUMENT: return "null argument";
    case TDCM_ERR_INTERNAL: return "internal error";
    default: break;
  }
  const int code = static_cast<int>(status);
  if (code >= 1 && code <= 10) return tdcm::error_code_name(static_cast<tdcm::ErrorCode>(code));
  return "unknown status";
}

void tdcm_string_free(char* s) { std::free(s); }

tdcm_status tdcm_config_new(tdcm_config** out) {
  TDCM_REQUIRE(out);
  return guarded([&] { *out = new tdcm_config(); });
}

tdcm_status tdcm_config_load(const char* path, tdcm_config** out) {
  TDCM_REQUIRE(path);
  TDCM_REQUIRE(out);
  return guarded([&] {
    auto c = std::make_unique<tdcm_config>();
    c->cfg = tdcm::ExperimentConfig::from_file(path);
    *out = c.release();
  });
}

tdcm_status tdcm_config_parse(const char* text, tdcm_config** out) {
  TDCM_REQUIRE(text);
  TDCM_REQUIRE(out);
  return guarded([&] {
    auto c = std::make_unique<tdcm_config>();
    c->cfg = tdcm::ExperimentConfig::from_text(text);
    *out = c.release();
  });
}

tdcm_status tdcm_config_clone(const tdcm_config* cfg, tdcm_config** out) {
  TDCM_REQUIRE(cfg);
  TDCM_REQUIRE(out);
  return guarded([&] { *out = new tdcm_config(*cfg); });
}

tdcm_status tdcm_config_set(tdcm_config* cfg, const char* key, const char* value) {
  TDCM_REQUIRE(cfg);
  TDCM_REQUIRE(key);
  TDCM_REQUIRE(value);
  return guarded([&] { cfg->cfg.set(key, value); });
}

tdcm_status tdcm_config_get(const tdcm_config* cfg, const char* key, char** value) {
  TDCM_REQUIRE(cfg);
  TDCM_REQUIRE(key);
  TDCM_REQUIRE(value);
  return guarded([&] { *value = dup_string(cfg->cfg.get(key)); });
}

tdcm_status tdcm_config_validate(const tdcm_config* cfg) {
  TDCM_REQUIRE(cfg);
  return guarded([&] { cfg->cfg.validate(); });
}

tdcm_status tdcm_config_dump(const tdcm_config* cfg, char** text) {
  TDCM_REQUIRE(cfg);
  TDCM_REQUIRE(text);
  return guarded([&] { *text = dup_string(cfg->cfg.dump()); });
}

size_t tdcm_config_key_count(void) { return tdcm::config_keys().size(); }

tdcm_status tdcm_config_key_info(size_t index, const char** name, const char** default_value,
                                 const char** description) {
  const auto& keys = tdcm::config_keys();
  if (index >= keys.size()) return fail(TDCM_ERR_PARAMETER, "config key index out of range");
  if (name != nullptr) *name = keys[index].name;
  if (default_value != nullptr) *default_value = keys[index].default_value;
  if (description != nullptr) *description = keys[index].description;
  last_error.clear();
  return TDCM_OK;
}

void tdcm_config_free(tdcm_config* cfg) { delete cfg; }

tdcm_status tdcm_dataset_from_array(const double* data, size_t rows, size_t cols, const int* labels,
                                    tdcm_dataset** out) {
  TDCM_REQUIRE(out);
  if (rows * cols > 0) TDCM_REQUIRE(data);
  return guarded([&] {
    auto ds = std::make_unique<tdcm_dataset>();
    ds->x = tdcm::Matrix(rows, cols, std::vector<double>(data, data + rows * cols));
    if (!ds->x.all_finite()) throw tdcm::DomainError("dataset contains non-finite values");
    if (labels != nullptr) ds->labels = std::vector<int>(labels, labels + rows);
    *out = ds.release();
  });
}

tdcm_status tdcm_dataset_load(const char* path, int has_labels, tdcm_dataset** out) {
  TDCM_REQUIRE(path);
  TDCM_REQUIRE(out);
  return guarded([&] {
    tdcm::TabularData t = tdcm::load_tabular(path, has_labels != 0);
    auto ds = std::make_unique<tdcm_dataset>();
    ds->x = std::move(t.x);
    ds->labels = std::move(t.labels);
    *out = ds.release();
  });
}

tdcm_status tdcm_dataset_save(const tdcm_dataset* ds, const char* path) {
  TDCM_REQUIRE(ds);
  TDCM_REQUIRE(path);
  return guarded([&] { tdcm::save_tabular(path, ds->x, ds->labels ? &*ds->labels : nullptr); });
}

tdcm_status tdcm_dataset_shape(const tdcm_dataset* ds, size_t* rows, size_t* cols, int* has_labels) {
  TDCM_REQUIRE(ds);
  if (rows != nullptr) *rows = ds->x.rows();
  if (cols != nullptr) *cols = ds->x.cols();
  if (has_labels != nullptr) *has_labels = ds->labels ? 1 : 0;
  last_error.clear();
  return TDCM_OK;
}

tdcm_status tdcm_dataset_copy_labels(const tdcm_dataset* ds, int* labels, size_t capacity) {
  TDCM_REQUIRE(ds);
  TDCM_REQUIRE(labels);
  if (!ds->labels) return fail(TDCM_ERR_STATE, "dataset has no labels");
  if (capacity < ds->labels->size()) return fail(TDCM_ERR_SHAPE, "label buffer is too small");
  std::copy(ds->labels->begin(), ds->labels->end(), labels);
  last_error.clear();
  return TDCM_OK;
}

void tdcm_dataset_free(tdcm_dataset* ds) { delete ds; }

tdcm_status tdcm_generate_pair(const tdcm_config* cfg, size_t pair_index, tdcm_dataset** source,
                               tdcm_dataset** target) {
  TDCM_REQUIRE(cfg);
  TDCM_REQUIRE(source);
  TDCM_REQUIRE(target);
  return guarded([&] {
    const tdcm::DomainPair pair = tdcm::make_pair(cfg->cfg, pair_index);
    auto s = dataset_from(pair.source);
    auto t = dataset_from(pair.target);
    *source = s.release();
    *target = t.release();
  });
}

tdcm_status tdcm_generate_files(const tdcm_config* cfg, const char* out_dir) {
  TDCM_REQUIRE(cfg);
  TDCM_REQUIRE(out_dir);
  return guarded([&] {
    cfg->cfg.validate();
    const std::filesystem::path dir(out_dir);
    if (!std::filesystem::is_directory(dir)) throw tdcm::IoError("output directory '" + dir.string() + "' does not exist");
    const std::size_t pairs = cfg->cfg.get_size("num_pairs");
    for (std::size_t p = 0; p < pairs; ++p) {
      char stem[32];
      std::snprintf(stem, sizeof stem, "pair_%03zu", p);
      const std::string src = std::string(stem) + "_source.csv";
      const std::string tgt = std::string(stem) + "_target.csv";
      const tdcm::DomainPair pair = tdcm::make_pair(cfg->cfg, p);
      tdcm::save_tabular((dir / src).string(), pair.source.x, &pair.source.labels);
      tdcm::save_tabular((dir / tgt).string(), pair.target.x, &pair.target.labels);
      nlohmann::json meta = nlohmann::json::parse(tdcm::domain_pair_metadata(pair, src, tgt));
      meta["pair_index"] = p;
      meta["config"] = nlohmann::json::object();
      for (const auto& [k, v] : cfg->cfg.values()) meta["config"][k] = v;
      // One sidecar per CSV so each data file is self-describing.
      for (const char* role : {"source", "target"}) {
        meta["role"] = role;
        const std::filesystem::path out = dir / (std::string(stem) + "_" + role + ".json");
        std::ofstream f(out);
        f << meta.dump(2) << '\n';
        if (!f) throw tdcm::IoError("cannot write '" + out.string() + "'");
      }
    }
  });
}

tdcm_status tdcm_train(const tdcm_config* cfg, const tdcm_dataset* source, tdcm_model** out) {
  TDCM_REQUIRE(cfg);
  TDCM_REQUIRE(source);
  TDCM_REQUIRE(out);
  return guarded([&] {
    auto m = std::make_unique<tdcm_model>();
    const auto start = std::chrono::steady_clock::now();
    m->ckpt = tdcm::train(source->x, cfg->cfg);
    m->train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    *out = m.release();
  });
}

tdcm_status tdcm_model_save(const tdcm_model* model, const char* path) {
  TDCM_REQUIRE(model);
  TDCM_REQUIRE(path);
  return guarded([&] { tdcm::save_checkpoint(model->ckpt, path); });
}

tdcm_status tdcm_model_load(const char* path, tdcm_model** out) {
  TDCM_REQUIRE(path);
  TDCM_REQUIRE(out);
  return guarded([&] {
    auto m = std::make_unique<tdcm_model>();
    m->ckpt = tdcm::load_checkpoint(path);
    *out = m.release();
  });
}

tdcm_status tdcm_model_config(const tdcm_model* model, tdcm_config** out) {
  TDCM_REQUIRE(model);
  TDCM_REQUIRE(out);
  return guarded([&] { *out = new tdcm_config{model->ckpt.config}; });
}

tdcm_status tdcm_model_predict(const tdcm_model* model, const tdcm_dataset* ds, int* labels, size_t capacity) {
  TDCM_REQUIRE(model);
  TDCM_REQUIRE(ds);
  TDCM_REQUIRE(labels);
  return guarded([&] {
    if (capacity < ds->x.rows()) throw tdcm::ShapeError("label buffer is too small");
    const std::vector<int> pred = tdcm::infer_labels(model->ckpt, ds->x);
    std::copy(pred.begin(), pred.end(), labels);
  });
}

tdcm_status tdcm_model_trace(const tdcm_model* model, const tdcm_dataset* ds, char** json) {
  TDCM_REQUIRE(model);
  TDCM_REQUIRE(ds);
  TDCM_REQUIRE(json);
  return guarded([&] { *json = dup_string(tdcm::centroid_trace_json(model->ckpt, ds->x)); });
}

void tdcm_model_free(tdcm_model* model) { delete model; }

tdcm_status tdcm_evaluate(const tdcm_model* model, const tdcm_dataset* source, const tdcm_dataset* target,
                          tdcm_record** out) {
  TDCM_REQUIRE(model);
  TDCM_REQUIRE(source);
  TDCM_REQUIRE(target);
  TDCM_REQUIRE(out);
  return guarded([&] {
    auto r = std::make_unique<tdcm_record>();
    r->record = tdcm::evaluate_transfer(model->ckpt, as_domain(source, "source"), as_domain(target, "target"));
    r->record.wall_seconds += model->train_seconds;
    *out = r.release();
  });
}

tdcm_status tdcm_run_baseline(const tdcm_config* cfg, const tdcm_dataset* source, const tdcm_dataset* target,
                              tdcm_record** out) {
  TDCM_REQUIRE(cfg);
  TDCM_REQUIRE(source);
  TDCM_REQUIRE(target);
  TDCM_REQUIRE(out);
  return guarded([&] {
    cfg->cfg.validate();
    auto r = std::make_unique<tdcm_record>();
    r->record = tdcm::run_baseline(cfg->cfg, as_domain(source, "source"), as_domain(target, "target"));
    *out = r.release();
  });
}

tdcm_status tdcm_record_metrics(const tdcm_record* rec, tdcm_metrics* source, tdcm_metrics* target,
                                tdcm_metrics* diff) {
  TDCM_REQUIRE(rec);
  auto put = [](tdcm_metrics* dst, const tdcm::MetricsReport& m) {
    if (dst != nullptr) *dst = {m.nmi, m.ari, m.acc};
  };
  put(source, rec->record.source);
  put(target, rec->record.target);
  put(diff, rec->record.diff());
  last_error.clear();
  return TDCM_OK;
}

tdcm_status tdcm_record_to_json(const tdcm_record* rec, char** json) {
  TDCM_REQUIRE(rec);
  TDCM_REQUIRE(json);
  return guarded([&] { *json = dup_string(tdcm::run_record_to_json(rec->record)); });
}

tdcm_status tdcm_record_from_json(const char* json, tdcm_record** out) {
  TDCM_REQUIRE(json);
  TDCM_REQUIRE(out);
  return guarded([&] {
    auto r = std::make_unique<tdcm_record>();
    r->record = tdcm::run_record_from_json(json);
    *out = r.release();
  });
}

void tdcm_record_free(tdcm_record* rec) { delete rec; }

tdcm_status tdcm_sweep(const tdcm_config* base, const char* axis, const char* values, char** csv) {
  TDCM_REQUIRE(base);
  TDCM_REQUIRE(axis);
  TDCM_REQUIRE(values);
  TDCM_REQUIRE(csv);
  return guarded([&] {
    std::vector<std::string> list;
    std::stringstream in(values);
    std::string item;
    while (std::getline(in, item, ',')) {
      const auto b = item.find_first_not_of(" \t");
      const auto e = item.find_last_not_of(" \t");
      if (b == std::string::npos) throw tdcm::ConfigError("sweep value list contains an empty entry");
      list.push_back(item.substr(b, e - b + 1));
    }
    base->cfg.validate();
    const auto rows = tdcm::sweep(base->cfg, axis, list, base->cfg.get_size("jobs"));
    *csv = dup_string(tdcm::sweep_csv(rows));
  });
}

tdcm_status tdcm_report(const tdcm_record* const* records, size_t count, char** table) {
  TDCM_REQUIRE(table);
  if (count > 0) TDCM_REQUIRE(records);
  return guarded([&] {
    std::vector<tdcm::RunRecord> recs;
    for (size_t i = 0; i < count; ++i) {
      if (records[i] == nullptr) throw tdcm::ParameterError("record " + std::to_string(i) + " is null");
      recs.push_back(records[i]->record);
    }
    *table = dup_string(tdcm::format_report(tdcm::aggregate(recs)));
  });
}

tdcm_status tdcm_metrics_compute(const int* predicted, const int* truth, size_t n, tdcm_metrics* out) {
  TDCM_REQUIRE(out);
  if (n > 0) {
    TDCM_REQUIRE(predicted);
    TDCM_REQUIRE(truth);
  }
  return guarded([&] {
    const tdcm::MetricsReport m = tdcm::evaluate_clustering({predicted, n}, {truth, n});
    *out = {m.nmi, m.ari, m.acc};
  });
}

}  // extern "C"
