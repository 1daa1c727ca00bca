#include "mcp/run.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <sstream>
#include <thread>

#include <json.hpp>
#include <spdlog/spdlog.h>

namespace mcp {

using nlohmann::ordered_json;

std::optional<double> RunSummary::accuracy() const {
  if (labeled == 0) return std::nullopt;
  return 100.0 * static_cast<double>(correct) / static_cast<double>(labeled);
}

std::optional<double> RunSummary::zero_shot_accuracy() const {
  if (labeled == 0) return std::nullopt;
  return 100.0 * static_cast<double>(zero_shot_correct) / static_cast<double>(labeled);
}

std::string RunSummary::to_json(bool include_wall_time) const {
  ordered_json j;
  j["samples"] = samples;
  j["labeled"] = labeled;
  if (auto a = accuracy()) j["accuracy"] = *a;
  if (auto a = zero_shot_accuracy()) j["zero_shot_accuracy"] = *a;
  ordered_json caches;
  for (CacheKind k : kAllCacheKinds) {
    const auto i = static_cast<std::size_t>(k);
    caches[to_string(k)] = {{"occupancy", occupancy[i]},
                            {"admitted", turnover[i].admitted},
                            {"replaced", turnover[i].replaced},
                            {"rejected", turnover[i].rejected}};
  }
  j["caches"] = caches;
  j["warnings"] = {{"reader_norm", reader_warnings}, {"skipped_nonfinite_steps", skipped_steps}};
  if (tuned_samples > 0)
    j["mean_loss"] = {{"entropy", mean_loss_entropy}, {"align", mean_loss_align}, {"contrast", mean_loss_contrast},
                        {"total", mean_loss_total}};
  if (include_wall_time) j["wall_ms"] = wall_ms;
  j["completed"] = completed;
  if (!error.empty()) j["error"] = error;
  ordered_json cfg = ordered_json::object();
  for (const auto& [k, v] : config) cfg[k] = v;
  j["config"] = cfg;
  return j.dump(2);
}

namespace {

void emit_line(std::ostream& os, std::uint64_t seq, const SampleRecord& rec, const PredictResult& r,
               const RunSummary& s, const CacheBank& bank, bool terms) {
  ordered_json j;
  j["seq"] = seq;
  j["pred"] = r.pred();
  if (rec.label) j["label"] = *rec.label;
  j["zero_shot_pred"] = r.zero_shot_pred;
  if (auto a = s.accuracy()) j["running_accuracy"] = *a;
  j["occupancy"] = {{"entropy", bank.occupancy(CacheKind::kEntropy)},
                    {"align", bank.occupancy(CacheKind::kAlign)},
                    {"negative", bank.occupancy(CacheKind::kNegative)}};
  if (terms) {
    j["terms"] = {{"text", r.breakdown.text_term},
                  {"visual_negative", r.breakdown.visual_neg_term},
                  {"cache", r.breakdown.cache_term}};
  }
  os << j.dump() << '\n';
}

}  // namespace

void run_stream(Engine& engine, RecordSource& source, std::ostream* jsonl, RunSummary& s) {
  const auto t0 = std::chrono::steady_clock::now();
  s.config = engine.config().to_key_values();
  double sum_e = 0.0, sum_a = 0.0, sum_c = 0.0, sum_t = 0.0;
  auto finish = [&] {
    for (CacheKind k : kAllCacheKinds) {
      const auto i = static_cast<std::size_t>(k);
      s.occupancy[i] = engine.bank().occupancy(k);
      s.turnover[i] = engine.bank().counters(k);
    }
    s.reader_warnings = source.warnings();
    s.skipped_steps = engine.optimizer().skipped_nonfinite;
    if (s.tuned_samples > 0) {
      const auto n = static_cast<double>(s.tuned_samples);
      s.mean_loss_entropy = sum_e / n;
      s.mean_loss_align = sum_a / n;
      s.mean_loss_contrast = sum_c / n;
      s.mean_loss_total = sum_t / n;
    }
    s.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (jsonl) jsonl->flush();
  };

  try {
    SampleRecord rec;
    while (source.next(rec)) {
      const PredictResult r = engine.predict(rec.views);
      ++s.samples;
      if (rec.label) {
        ++s.labeled;
        if (r.pred() == *rec.label) ++s.correct;
        if (r.zero_shot_pred == *rec.label) ++s.zero_shot_correct;
      }
      if (r.loss) {
        ++s.tuned_samples;
        sum_e += r.loss->entropy;
        sum_a += r.loss->align;
        sum_c += r.loss->contrast;
        sum_t += r.loss->total;
      }
      if (jsonl) emit_line(*jsonl, s.samples - 1, rec, r, s, engine.bank(), engine.config().emit_terms);
      if (s.samples % 1000 == 0) spdlog::debug("processed {} samples", s.samples);
    }
  } catch (const std::exception& e) {
    s.error = e.what();
    finish();
    throw;
  }
  s.completed = true;
  finish();
}

RunSummary run_stream(Engine& engine, RecordSource& source, std::ostream* jsonl) {
  RunSummary s;
  run_stream(engine, source, jsonl, s);
  return s;
}

RunSummary run_config(const RunConfig& cfg, RecordSource& source, std::ostream* jsonl) {
  Engine engine(source.header(), cfg);
  return run_stream(engine, source, jsonl);
}

LoadedStream load_stream(const std::string& path) {
  StreamReader reader(path);
  LoadedStream out;
  out.header = reader.header();
  auto records = std::make_shared<std::vector<SampleRecord>>();
  SampleRecord rec;
  while (reader.next(rec)) records->push_back(rec);
  out.records = std::move(records);
  out.warnings = reader.warnings();
  return out;
}

GridResult grid_search(const RunConfig& base, const SourceFactory& make_source, const GridSpec& grid,
                       std::size_t threads) {
  if (grid.size() == 0) throw ConfigError("grid_search: every grid axis needs at least one value");
  GridResult g;
  for (double a1 : grid.alpha1)
    for (double a2 : grid.alpha2)
      for (double a3 : grid.alpha3)
        for (double w : grid.w) g.rows.push_back({a1, a2, a3, w, 0.0});
  for (const auto& row : g.rows) {
    RunConfig cfg = base;
    cfg.hp.alpha1 = row.alpha1;
    cfg.hp.alpha2 = row.alpha2;
    cfg.hp.alpha3 = row.alpha3;
    cfg.hp.w = row.w;
    cfg.validate();
  }

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, g.rows.size());
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(threads);
  auto worker = [&](std::size_t id) {
    try {
      for (std::size_t i = next++; i < g.rows.size(); i = next++) {
        RunConfig cfg = base;
        cfg.hp.alpha1 = g.rows[i].alpha1;
        cfg.hp.alpha2 = g.rows[i].alpha2;
        cfg.hp.alpha3 = g.rows[i].alpha3;
        cfg.hp.w = g.rows[i].w;
        auto src = make_source();
        const RunSummary s = run_config(cfg, *src);
        const auto acc = s.accuracy();
        if (!acc) throw DataError("grid_search: stream has no labels");
        g.rows[i].accuracy = *acc;
      }
    } catch (...) {
      errors[id] = std::current_exception();
      next = g.rows.size();
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker, t);
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  for (std::size_t i = 1; i < g.rows.size(); ++i)
    if (g.rows[i].accuracy > g.rows[g.best].accuracy) g.best = i;
  return g;
}

namespace {

std::string shortest(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::string grid_table_tsv(const GridResult& g) {
  std::ostringstream os;
  os << "alpha1\talpha2\talpha3\tw\taccuracy\n";
  for (const auto& r : g.rows)
    os << shortest(r.alpha1) << '\t' << shortest(r.alpha2) << '\t' << shortest(r.alpha3) << '\t'
       << shortest(r.w) << '\t' << shortest(r.accuracy) << '\n';
  return os.str();
}

}  // namespace mcp
