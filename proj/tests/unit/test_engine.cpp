#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>

#include "mcp/engine.hpp"
#include "mcp/synth.hpp"
#include "oracle/naive.hpp"
#include "support/suites.hpp"

using namespace mcp;

namespace {

SynthStream shifted_stream(std::size_t classes, std::size_t samples, std::uint64_t seed, std::size_t views = 4) {
  SynthSpec spec;
  spec.classes = classes;
  spec.dim = 32;
  spec.spread = 0.9;
  spec.view_noise = 0.3;
  spec.shift = 0.75;
  spec.samples = samples;
  spec.views = views;
  spec.seed = seed;
  return synth_stream(spec);
}

std::size_t fusion_now(const Engine& e, ConstRow f) {
  const HyperParams& hp = e.config().hp;
  const auto refined = apply_residuals(e.prototypes());
  const auto neg = e.bank().cache_matrices(CacheKind::kNegative, hp.p_mask);
  const Vec p = visual_negative_score(f, refined.visual, e.prototypes().valid_visual, neg.features, neg.labels, hp);
  return fuse_logits(f, refined.text, p, retrieve_adaptive(f, e.bank(), hp), hp, e.config().terms).pred;
}

std::vector<std::size_t> preds(Engine& e, const std::vector<SampleRecord>& recs, std::size_t from = 0,
                               std::size_t to = SIZE_MAX) {
  std::vector<std::size_t> out;
  for (std::size_t i = from; i < std::min(to, recs.size()); ++i) out.push_back(e.predict(recs[i].views).pred());
  return out;
}

void check_same_state(const Engine& a, const Engine& b) {
  CHECK(a.bank() == b.bank());
  CHECK(a.prototypes().res_text == b.prototypes().res_text);
  CHECK(a.prototypes().res_visual == b.prototypes().res_visual);
  CHECK(a.optimizer().step == b.optimizer().step);
  CHECK(a.optimizer().m_text == b.optimizer().m_text);
  CHECK(a.optimizer().v_visual == b.optimizer().v_visual);
  CHECK(a.samples_seen() == b.samples_seen());
}

}  // namespace

TEST_SUITE("engine") {
  TEST_CASE("first sample on an empty bank matches zero-shot unless it lands in the negative cache") {
    const auto s = shifted_stream(6, 200, 1);
    RunConfig no_neg;
    no_neg.caches.negative = false;
    std::size_t negative_first = 0;
    for (const auto& rec : s.records) {
      Engine e(s.header, RunConfig{});
      const auto r = e.predict(rec.views);
      const bool negative = r.routing && r.routing->negative.stored();
      negative_first += negative;
      if (!negative) CHECK(r.pred() == r.zero_shot_pred);

      Engine positive_only(s.header, no_neg);
      const auto q = positive_only.predict(rec.views);
      CHECK(q.pred() == q.zero_shot_pred);
    }
    CHECK(negative_first > 0);
  }

  TEST_CASE("MCP++ with a zero learning rate reproduces MCP") {
    const auto s = shifted_stream(6, 150, 2);
    RunConfig plus;
    plus.mode = Mode::kMcpPlusPlus;
    plus.hp.lr = 0.0;
    Engine a(s.header, RunConfig{}), b(s.header, plus);
    CHECK(preds(a, s.records) == preds(b, s.records));
    CHECK(a.bank() == b.bank());
  }

  TEST_CASE("pipeline matches the independent replay") {
    for (std::size_t classes : {2u, 5u}) {
      CAPTURE(classes);
      const auto s = shifted_stream(classes, 200, 3 + classes);
      naive::M text;
      for (const auto& prompts : s.header.prompts) {
        naive::V m(s.header.dim, 0.0);
        for (const auto& p : prompts)
          for (std::size_t i = 0; i < m.size(); ++i) m[i] += p[i];
        text.push_back(naive::unit(m));
      }
      naive::Replay replay(text, naive::ReplayParams{});
      Engine e(s.header, RunConfig{});
      std::size_t agree = 0, eng_ok = 0, rep_ok = 0;
      for (const auto& rec : s.records) {
        const naive::V f(rec.views.row(0).begin(), rec.views.row(0).end());
        const std::size_t want = replay.predict(f);
        const std::size_t got = e.predict(rec.views).pred();
        agree += want == got;
        eng_ok += got == *rec.label;
        rep_ok += want == *rec.label;
      }
      CHECK(agree == s.records.size());
      CHECK(eng_ok == rep_ok);
    }
  }

  TEST_CASE("prediction uses the bank after this sample's update") {
    const auto s = shifted_stream(8, 300, 4);
    Engine e(s.header, RunConfig{});
    std::size_t differs = 0;
    for (const auto& rec : s.records) {
      const Matrix v = normalized_views(rec.views);
      const std::size_t before = fusion_now(e, v.row(0));
      const std::size_t got = e.predict(rec.views).pred();
      CHECK(got == fusion_now(e, v.row(0)));
      differs += before != got;
    }
    CHECK(differs > 0);
  }

  TEST_CASE("engine prototypes equal a fresh build from its bank") {
    const auto s = shifted_stream(6, 120, 5);
    Engine e(s.header, RunConfig{});
    preds(e, s.records);
    const auto fresh = build_prototypes(e.text(), e.bank(), e.config().hp.w);
    CHECK(fresh.visual == e.prototypes().visual);
    CHECK(fresh.centers == e.prototypes().centers);
    CHECK(fresh.valid_visual == e.prototypes().valid_visual);
  }

  TEST_CASE("replays are deterministic") {
    const auto s = shifted_stream(6, 150, 6);
    for (Mode m : {Mode::kMcp, Mode::kMcpPlusPlus}) {
      RunConfig cfg;
      cfg.mode = m;
      Engine a(s.header, cfg), b(s.header, cfg);
      CHECK(preds(a, s.records) == preds(b, s.records));
      check_same_state(a, b);
    }
  }

  TEST_CASE("optimizer state resets per sample unless persisted") {
    const auto s = shifted_stream(4, 30, 7);
    RunConfig reset;
    reset.mode = Mode::kMcpPlusPlus;
    RunConfig keep = reset;
    keep.persist_residuals = true;
    Engine a(s.header, reset), b(s.header, keep);
    preds(a, s.records);
    preds(b, s.records);
    CHECK(a.optimizer().step == 1);
    CHECK(b.optimizer().step == 30);
  }

  TEST_CASE("MCP++ reports the objective it minimized") {
    const auto s = shifted_stream(4, 20, 8);
    RunConfig cfg;
    cfg.mode = Mode::kMcpPlusPlus;
    Engine e(s.header, cfg);
    for (const auto& rec : s.records) {
      const auto r = e.predict(rec.views);
      REQUIRE(r.loss.has_value());
      CHECK(std::isfinite(r.loss->total));
    }
    Engine plain(s.header, RunConfig{});
    CHECK_FALSE(plain.predict(s.records[0].views).loss.has_value());
  }

  TEST_CASE("confident-view inference averages the selected views") {
    const auto s = shifted_stream(5, 60, 9, 10);
    RunConfig cfg;
    cfg.inference_views = InferenceViews::kConfident;
    Engine e(s.header, cfg);
    std::size_t ok = 0;
    for (const auto& rec : s.records) {
      const auto r = e.predict(rec.views);
      double sum = 0.0;
      for (double p : r.breakdown.probs) sum += p;
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(r.pred() == argmax(r.breakdown.probs));
      ok += r.pred() == *rec.label;
    }
    CHECK(ok > 0);
  }

  TEST_CASE("snapshot restore continues the run exactly") {
    const auto s = shifted_stream(6, 200, 10);
    for (bool plus : {false, true}) {
      CAPTURE(plus);
      RunConfig cfg;
      if (plus) {
        cfg.mode = Mode::kMcpPlusPlus;
        cfg.persist_residuals = true;
      }
      Engine full(s.header, cfg);
      const auto want = preds(full, s.records);

      Engine first(s.header, cfg);
      preds(first, s.records, 0, 100);
      std::stringstream snap;
      first.save_snapshot(snap);
      Engine resumed(s.header, cfg);
      resumed.load_snapshot(snap);
      check_same_state(first, resumed);
      auto got = std::vector<std::size_t>(want.begin(), want.begin() + 100);
      const auto rest = preds(resumed, s.records, 100);
      got.insert(got.end(), rest.begin(), rest.end());
      CHECK(got == want);
      check_same_state(full, resumed);
    }
  }

  TEST_CASE("damaged snapshots are rejected") {
    const auto s = shifted_stream(4, 30, 11);
    Engine e(s.header, RunConfig{});
    preds(e, s.records);
    std::stringstream snap;
    e.save_snapshot(snap);
    const std::string bytes = snap.str();

    std::stringstream cut(bytes.substr(0, bytes.size() - 5));
    Engine a(s.header, RunConfig{});
    CHECK_THROWS_WITH_AS(a.load_snapshot(cut), doctest::Contains("byte offset"), DataError);
    CHECK(a.samples_seen() == 0);

    std::stringstream extra(bytes + "x");
    CHECK_THROWS_WITH_AS(a.load_snapshot(extra), doctest::Contains("trailing"), DataError);

    std::string magic = bytes;
    magic[1] = 'Z';
    std::stringstream bad(magic);
    CHECK_THROWS_AS(a.load_snapshot(bad), DataError);

    RunConfig small;
    small.hp.m_entropy = 5;
    Engine other(s.header, small);
    std::stringstream again(bytes);
    CHECK_THROWS_AS(other.load_snapshot(again), DataError);
  }

  TEST_CASE("engine rejects malformed views") {
    const auto s = shifted_stream(4, 2, 12);
    Engine e(s.header, RunConfig{});
    CHECK_THROWS_AS(e.predict(Matrix(0, 32)), InvalidArgument);
    CHECK_THROWS_AS(e.predict(Matrix(1, 31)), InvalidArgument);
  }
}
