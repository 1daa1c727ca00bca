#include "mcp/fig2.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "mcp/engine.hpp"
#include "mcp/run.hpp"

namespace mcp {

std::vector<Fig2Dataset> load_fig2_sweep(const std::string& path) {
  KeyValues rest;
  const SynthSpec base = load_synth_spec(path, &rest);
  std::vector<double> spreads, shifts;
  for (const auto& [k, v] : rest) {
    if (k == "spreads") spreads = parse_double_list(k, v);
    else if (k == "shifts") shifts = parse_double_list(k, v);
    else throw ConfigError(path + ": unknown sweep key '" + k + "'");
  }
  if (spreads.empty()) throw ConfigError(path + ": missing 'spreads'");
  if (!shifts.empty() && shifts.size() != spreads.size())
    throw ConfigError(path + ": 'shifts' must have one entry per spread");
  std::vector<Fig2Dataset> out;
  for (std::size_t i = 0; i < spreads.size(); ++i) {
    Fig2Dataset ds;
    ds.spec = base;
    ds.spec.spread = spreads[i];
    if (!shifts.empty()) ds.spec.shift = shifts[i];
    ds.spec.validate();
    std::ostringstream name;
    name << "spread_" << spreads[i];
    ds.name = name.str();
    out.push_back(std::move(ds));
  }
  return out;
}

namespace {

Fig2Point evaluate(const Fig2Dataset& ds, const RunConfig& cfg) {
  const SynthStream s = synth_stream(ds.spec);
  const std::size_t C = s.header.num_classes();
  Engine engine(s.header, cfg);
  std::size_t zs = 0, mcp = 0;
  std::vector<Vec> test_features;
  std::vector<std::size_t> test_labels;
  for (const auto& rec : s.records) {
    const auto r = engine.predict(rec.views);
    zs += r.zero_shot_pred == *rec.label;
    mcp += r.pred() == *rec.label;
    test_features.emplace_back(rec.views.row(0).begin(), rec.views.row(0).end());
    test_labels.push_back(*rec.label);
  }
  std::vector<Vec> cached;
  std::vector<std::size_t> cached_labels;
  for (std::size_t c = 0; c < C; ++c)
    for (const CacheSlot* slot : engine.bank().positive_slots(c)) {
      cached.push_back(slot->feature);
      cached_labels.push_back(slot->pseudo_label);
    }

  Fig2Point p;
  p.name = ds.name;
  p.spread = ds.spec.spread;
  p.compactness_cached = compactness(cached, cached_labels, C).compactness;
  p.compactness_test = compactness(test_features, test_labels, C).compactness;
  const auto n = static_cast<double>(s.records.size());
  p.zero_shot_accuracy = 100.0 * static_cast<double>(zs) / n;
  p.mcp_accuracy = 100.0 * static_cast<double>(mcp) / n;
  p.gain = p.mcp_accuracy - p.zero_shot_accuracy;
  return p;
}

}  // namespace

Fig2Report fig2_experiment(const std::vector<Fig2Dataset>& datasets, const RunConfig& cfg,
                           std::size_t threads) {
  for (const auto& ds : datasets) {
    if (ds.spec.classes < 2 || ds.spec.samples < 200)
      throw ConfigError("fig2: dataset '" + ds.name + "' needs >= 2 classes and >= 200 samples");
  }
  const auto t0 = std::chrono::steady_clock::now();
  Fig2Report rep;
  rep.points.resize(datasets.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::max<std::size_t>(1, std::min(threads, datasets.size()));
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(threads);
  auto worker = [&](std::size_t id) {
    try {
      for (std::size_t i = next++; i < datasets.size(); i = next++) rep.points[i] = evaluate(datasets[i], cfg);
    } catch (...) {
      errors[id] = std::current_exception();
      next = datasets.size();
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker, t);
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<double> cc, ct, gain;
  for (const auto& p : rep.points) {
    cc.push_back(p.compactness_cached);
    ct.push_back(p.compactness_test);
    gain.push_back(p.gain);
  }
  rep.cached = pearson(cc, gain);
  rep.test = pearson(ct, gain);
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

std::string Fig2Report::csv() const {
  std::ostringstream os;
  os.precision(10);
  os << "dataset,spread,compactness_cached,compactness_test,zero_shot_accuracy,mcp_accuracy,gain\n";
  for (const auto& p : points)
    os << p.name << ',' << p.spread << ',' << p.compactness_cached << ',' << p.compactness_test << ','
       << p.zero_shot_accuracy << ',' << p.mcp_accuracy << ',' << p.gain << '\n';
  return os.str();
}

std::string Fig2Report::json() const {
  using nlohmann::ordered_json;
  auto corr = [](const PearsonResult& r) {
    return ordered_json{{"r", r.r}, {"t", r.t}, {"p", r.p}, {"n", r.n}};
  };
  ordered_json j;
  j["pearson_cached"] = corr(cached);
  j["pearson_test"] = corr(test);
  j["seconds"] = seconds;
  ordered_json pts = ordered_json::array();
  for (const auto& p : points)
    pts.push_back({{"dataset", p.name},
                   {"spread", p.spread},
                   {"compactness_cached", p.compactness_cached},
                   {"compactness_test", p.compactness_test},
                   {"zero_shot_accuracy", p.zero_shot_accuracy},
                   {"mcp_accuracy", p.mcp_accuracy},
                   {"gain", p.gain}});
  j["points"] = pts;
  return j.dump(2);
}

}  // namespace mcp
