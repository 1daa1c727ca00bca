#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>

#include "mcp/inference.hpp"
#include "mcp/prototypes.hpp"
#include "mcp/stream_io.hpp"
#include "mcp/synth.hpp"
#include "support/suites.hpp"

using namespace mcp;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "mcp_stream_io_tests";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

SynthSpec small_spec() {
  SynthSpec s;
  s.classes = 4;
  s.dim = 16;
  s.samples = 100;
  s.views = 3;
  s.seed = 7;
  return s;
}

std::vector<SampleRecord> read_all(StreamReader& r) {
  std::vector<SampleRecord> out;
  SampleRecord rec;
  while (r.next(rec)) out.push_back(rec);
  return out;
}

double zero_shot_accuracy(const SynthStream& s) {
  const Matrix text = text_prototypes(s.header.prompts);
  std::size_t ok = 0;
  for (const auto& r : s.records) {
    const Vec f(r.views.row(0).begin(), r.views.row(0).end());
    ok += argmax(matvec(text, f)) == *r.label;
  }
  return static_cast<double>(ok) / static_cast<double>(s.records.size());
}

}  // namespace

TEST_SUITE("stream_io") {
  TEST_CASE("round trip within f32 precision and byte-exact rewrite") {
    const auto s = synth_stream(small_spec());
    const auto a = scratch("roundtrip_a.mcpe"), b = scratch("roundtrip_b.mcpe");
    write_stream(a.string(), s.header, s.records);

    StreamReader r(a.string());
    CHECK(r.header().class_names == s.header.class_names);
    CHECK(r.header().dim == 16);
    const auto back = read_all(r);
    REQUIRE(back.size() == 100);
    for (std::size_t i = 0; i < back.size(); ++i) {
      CHECK(back[i].label == s.records[i].label);
      for (std::size_t k = 0; k < back[i].views.data().size(); ++k)
        CHECK(std::abs(back[i].views.data()[k] - s.records[i].views.data()[k]) <= 6e-8);
    }
    CHECK(r.offset() == fs::file_size(a));

    write_stream(b.string(), r.header(), back);
    CHECK(slurp(a) == slurp(b));
  }

  TEST_CASE("unlabeled records survive the round trip") {
    auto s = synth_stream(small_spec());
    s.records.resize(3);
    s.records[1].label.reset();
    const auto p = scratch("unlabeled.mcpe");
    write_stream(p.string(), s.header, s.records);
    StreamReader r(p.string());
    const auto back = read_all(r);
    CHECK_FALSE(back[1].label.has_value());
    CHECK(back[2].label.has_value());
  }

  TEST_CASE("file size arithmetic") {
    StreamHeader h;
    h.dim = 512;
    for (int c = 0; c < 10; ++c) {
      h.class_names.push_back("c" + std::to_string(c));
      Vec e(512, 0.0);
      e[static_cast<std::size_t>(c)] = 1.0;
      h.prompts.push_back({e});
    }
    CHECK(header_size_bytes(h) == 16 + 10 * (4 + 2) + 10 * (4 + 4 * 512));
    CHECK(record_size_bytes(32, 512) == 8 + 4 * 32 * 512);

    const auto s = synth_stream(small_spec());
    const auto p = scratch("size.mcpe");
    write_stream(p.string(), s.header, s.records);
    CHECK(fs::file_size(p) == header_size_bytes(s.header) + 100 * record_size_bytes(3, 16));
  }

  TEST_CASE("truncated file names the byte offset") {
    const auto s = synth_stream(small_spec());
    const auto full = scratch("full.mcpe"), cut = scratch("cut.mcpe");
    write_stream(full.string(), s.header, s.records);
    const std::string bytes = slurp(full);
    const std::uint64_t at = header_size_bytes(s.header) + 5 * record_size_bytes(3, 16) + 8 + 4 * 16 + 10;
    spit(cut, bytes.substr(0, at));
    StreamReader r(cut.string());
    SampleRecord rec;
    for (int i = 0; i < 5; ++i) REQUIRE(r.next(rec));
    try {
      r.next(rec);
      FAIL("no error on truncated record");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("byte offset " + std::to_string(at)) != std::string::npos);
    }
  }

  TEST_CASE("malformed files are rejected") {
    const auto s = synth_stream(small_spec());
    const auto good = scratch("good.mcpe"), bad = scratch("bad.mcpe");
    write_stream(good.string(), s.header, s.records);
    std::string bytes = slurp(good);

    std::string magic = bytes;
    magic[0] = 'X';
    spit(bad, magic);
    CHECK_THROWS_AS(StreamReader(bad.string()), DataError);

    std::string off_unit = bytes;
    const std::uint64_t first = header_size_bytes(s.header) + 8;
    const float big = 3.0f;
    std::memcpy(off_unit.data() + first, &big, 4);
    spit(bad, off_unit);
    StreamReader r(bad.string());
    SampleRecord rec;
    CHECK_THROWS_AS(r.next(rec), DataError);

    CHECK_THROWS_AS(StreamReader(scratch("missing.mcpe").string()), DataError);

    SampleRecord wrong_dim;
    wrong_dim.label = 0;
    wrong_dim.views = Matrix(1, 8);
    wrong_dim.views(0, 0) = 1.0;
    CHECK_THROWS_AS(validate_record(wrong_dim, s.header), DataError);
    StreamWriter w(bad.string(), s.header);
    CHECK_THROWS_AS(w.write(wrong_dim), DataError);

    SampleRecord not_unit = s.records[0];
    not_unit.views(0, 0) += 0.5;
    CHECK_THROWS_AS(validate_record(not_unit, s.header), DataError);
  }

  TEST_CASE("noise-free synth is perfectly separable zero-shot") {
    SynthSpec spec = small_spec();
    spec.spread = spec.view_noise = spec.shift = spec.prompt_noise = 0.0;
    spec.samples = 300;
    CHECK(zero_shot_accuracy(synth_stream(spec)) == 1.0);
  }

  TEST_CASE("zero-shot accuracy does not rise with the text shift") {
    double prev = 1.0;
    for (double shift : {0.0, 0.5, 1.0, 1.5}) {
      SynthSpec spec = small_spec();
      spec.classes = 10;
      spec.dim = 32;
      spec.views = 1;
      spec.samples = 2000;
      spec.shift = shift;
      const double acc = zero_shot_accuracy(synth_stream(spec));
      CHECK(acc <= prev);
      prev = acc;
    }
    CHECK(prev < 0.9);
  }

  TEST_CASE("fixed seed gives a byte-identical file") {
    const auto a = scratch("seed_a.mcpe"), b = scratch("seed_b.mcpe"), c = scratch("seed_c.mcpe");
    write_synth_stream(small_spec(), a.string());
    write_synth_stream(small_spec(), b.string());
    SynthSpec other = small_spec();
    other.seed = 8;
    write_synth_stream(other, c.string());
    CHECK(slurp(a) == slurp(b));
    CHECK(slurp(a) != slurp(c));
  }

  TEST_CASE("infeasible class packing is reported") {
    SynthSpec spec = small_spec();
    spec.classes = 50;
    spec.dim = 2;
    spec.min_angle_deg = 60.0;
    CHECK_THROWS_AS(synth_stream(spec), InvalidArgument);
    spec = small_spec();
    spec.classes = 1;
    CHECK_THROWS_AS(synth_stream(spec), ConfigError);
  }
}
