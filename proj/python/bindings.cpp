#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mcp/config.hpp"
#include "mcp/engine.hpp"
#include "mcp/metrics.hpp"
#include "mcp/run.hpp"
#include "mcp/stream_io.hpp"
#include "mcp/synth.hpp"
#include "mcp/tuning.hpp"

namespace py = pybind11;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

mcp::Matrix to_matrix(const Array& a) {
  if (a.ndim() == 1) {
    mcp::Matrix m(1, static_cast<std::size_t>(a.shape(0)));
    std::copy(a.data(), a.data() + a.size(), m.data().begin());
    return m;
  }
  if (a.ndim() != 2) throw mcp::InvalidArgument("expected a 1-D or 2-D array");
  mcp::Matrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), m.data().begin());
  return m;
}

Array to_array(const mcp::Matrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

Array to_array(const mcp::Vec& v) {
  Array out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

mcp::StreamHeader make_header(const std::vector<std::string>& names, const std::vector<Array>& prompts) {
  if (names.size() != prompts.size()) throw mcp::InvalidArgument("one prompt array per class name");
  mcp::StreamHeader h;
  h.class_names = names;
  for (const auto& p : prompts) {
    const mcp::Matrix m = to_matrix(p);
    if (h.dim == 0) h.dim = m.cols();
    std::vector<mcp::Vec> rows;
    for (std::size_t r = 0; r < m.rows(); ++r) rows.emplace_back(m.row(r).begin(), m.row(r).end());
    h.prompts.push_back(std::move(rows));
  }
  mcp::validate_header(h);
  return h;
}

py::dict header_dict(const mcp::StreamHeader& h) {
  py::list prompts;
  for (const auto& rows : h.prompts) {
    mcp::Matrix m(rows.size(), h.dim);
    for (std::size_t r = 0; r < rows.size(); ++r) m.set_row(r, rows[r]);
    prompts.append(to_array(m));
  }
  py::dict d;
  d["version"] = h.version;
  d["dim"] = h.dim;
  d["class_names"] = h.class_names;
  d["prompts"] = prompts;
  return d;
}

mcp::SampleRecord make_record(std::optional<std::uint32_t> label, const Array& views) {
  mcp::SampleRecord r;
  r.label = label;
  r.views = to_matrix(views);
  return r;
}

std::string as_text(const py::handle& v) {
  if (py::isinstance<py::bool_>(v)) return v.cast<bool>() ? "true" : "false";
  return py::str(v).cast<std::string>();
}

mcp::RunConfig make_config(const py::dict& kv) {
  mcp::RunConfig cfg;
  for (const auto& [k, v] : kv) cfg.set(py::str(k).cast<std::string>(), as_text(v));
  cfg.validate();
  return cfg;
}

class PyReader {
 public:
  explicit PyReader(const std::string& path) : reader_(path) {}
  py::dict header() const { return header_dict(reader_.header()); }
  std::uint64_t offset() const { return reader_.offset(); }
  std::uint64_t warnings() const { return reader_.warnings(); }
  py::tuple next() {
    if (!reader_.next(rec_)) throw py::stop_iteration();
    py::object label = rec_.label ? py::cast(*rec_.label) : py::none();
    return py::make_tuple(label, to_array(rec_.views));
  }

 private:
  mcp::StreamReader reader_;
  mcp::SampleRecord rec_;
};

class PyWriter {
 public:
  PyWriter(const std::string& path, const std::vector<std::string>& names, const std::vector<Array>& prompts)
      : writer_(std::make_unique<mcp::StreamWriter>(path, make_header(names, prompts))) {}
  void write(std::optional<std::uint32_t> label, const Array& views) {
    if (!writer_) throw mcp::DataError("writer is closed");
    writer_->write(make_record(label, views));
  }
  void close() {
    if (!writer_) return;
    writer_->close();
    bytes_ = writer_->bytes_written();
    writer_.reset();
  }
  std::uint64_t bytes_written() const { return writer_ ? writer_->bytes_written() : bytes_; }

 private:
  std::unique_ptr<mcp::StreamWriter> writer_;
  std::uint64_t bytes_ = 0;
};

py::dict predict_dict(const mcp::PredictResult& r) {
  py::dict d;
  d["pred"] = r.pred();
  d["zero_shot_pred"] = r.zero_shot_pred;
  d["zero_shot_entropy"] = r.zero_shot_entropy;
  d["low_entropy_path"] = r.low_entropy_path;
  d["probs"] = to_array(r.breakdown.probs);
  d["fused"] = to_array(r.breakdown.fused);
  d["text_term"] = to_array(r.breakdown.text_term);
  d["visual_negative_term"] = to_array(r.breakdown.visual_neg_term);
  d["cache_term"] = to_array(r.breakdown.cache_term);
  if (r.loss) d["loss"] = r.loss->total;
  return d;
}

}  // namespace

PYBIND11_MODULE(_mcp_tta, m) {
  m.doc() = "MCP / MCP++ test-time adaptation over embedding streams";

  py::register_exception<mcp::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<mcp::DataError>(m, "DataError", PyExc_IOError);
  py::register_exception<mcp::InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<mcp::DegenerateInput>(m, "DegenerateInput", PyExc_ArithmeticError);

  py::class_<PyReader>(m, "StreamReader")
      .def(py::init<const std::string&>(), py::arg("path"))
      .def_property_readonly("header", &PyReader::header)
      .def_property_readonly("offset", &PyReader::offset)
      .def_property_readonly("warnings", &PyReader::warnings)
      .def("__iter__", [](PyReader& r) -> PyReader& { return r; })
      .def("__next__", &PyReader::next);

  py::class_<PyWriter>(m, "StreamWriter")
      .def(py::init<const std::string&, const std::vector<std::string>&, const std::vector<Array>&>(),
           py::arg("path"), py::arg("class_names"), py::arg("prompts"))
      .def("write", &PyWriter::write, py::arg("label"), py::arg("views"))
      .def("close", &PyWriter::close)
      .def_property_readonly("bytes_written", &PyWriter::bytes_written)
      .def("__enter__", [](PyWriter& w) -> PyWriter& { return w; })
      .def("__exit__", [](PyWriter& w, py::object, py::object, py::object) { w.close(); });

  m.def("header_size_bytes",
        [](const std::vector<std::string>& names, const std::vector<Array>& prompts) {
          return mcp::header_size_bytes(make_header(names, prompts));
        },
        py::arg("class_names"), py::arg("prompts"));
  m.def("record_size_bytes", &mcp::record_size_bytes, py::arg("views"), py::arg("dim"));

  m.def("write_synth",
        [](const std::string& path, const py::dict& spec) {
          mcp::SynthSpec s;
          for (const auto& [k, v] : spec) s.set(py::str(k).cast<std::string>(), as_text(v));
          mcp::write_synth_stream(s, path);
        },
        py::arg("path"), py::arg("spec") = py::dict());

  py::class_<mcp::Engine>(m, "Engine")
      .def(py::init([](const std::vector<std::string>& names, const std::vector<Array>& prompts,
                       const py::dict& config) { return mcp::Engine(make_header(names, prompts), make_config(config)); }),
           py::arg("class_names"), py::arg("prompts"), py::arg("config") = py::dict())
      .def("predict", [](mcp::Engine& e, const Array& views) { return predict_dict(e.predict(to_matrix(views))); },
           py::arg("views"))
      .def_property_readonly("samples_seen", &mcp::Engine::samples_seen)
      .def("occupancy",
           [](const mcp::Engine& e) {
             py::dict d;
             for (mcp::CacheKind k : mcp::kAllCacheKinds) d[mcp::to_string(k)] = e.bank().occupancy(k);
             return d;
           })
      .def("save_snapshot", py::overload_cast<const std::string&>(&mcp::Engine::save_snapshot, py::const_),
           py::arg("path"))
      .def("load_snapshot", py::overload_cast<const std::string&>(&mcp::Engine::load_snapshot), py::arg("path"));

  m.def("run_json",
        [](const std::string& stream, const py::dict& config) {
          const mcp::RunConfig cfg = make_config(config);
          mcp::StreamReader reader(stream);
          py::gil_scoped_release release;
          return mcp::run_config(cfg, reader).to_json(false);
        },
        py::arg("stream"), py::arg("config") = py::dict());

  m.def("gradcheck",
        [](std::size_t instances, std::uint64_t seed, double step) {
          const auto rep = mcp::run_gradcheck(instances, seed, step);
          py::dict terms;
          for (const auto& t : rep.terms) terms[py::str(t.name)] = t.max_rel_error;
          py::dict d;
          d["instances"] = rep.instances;
          d["max_rel_error"] = rep.max_rel_error();
          d["terms"] = terms;
          d["seconds"] = rep.seconds;
          return d;
        },
        py::arg("instances") = 50, py::arg("seed") = 0, py::arg("step") = 1e-5);

  m.def("pearson",
        [](const std::vector<double>& xs, const std::vector<double>& ys) {
          const auto r = mcp::pearson(xs, ys);
          py::dict d;
          d["r"] = r.r;
          d["t"] = r.t;
          d["p"] = r.p;
          d["n"] = r.n;
          return d;
        },
        py::arg("x"), py::arg("y"));

  m.def("compactness",
        [](const Array& features, const std::vector<std::size_t>& labels, std::size_t num_classes) {
          const mcp::Matrix f = to_matrix(features);
          std::vector<mcp::Vec> rows;
          for (std::size_t r = 0; r < f.rows(); ++r) rows.emplace_back(f.row(r).begin(), f.row(r).end());
          return mcp::compactness(rows, labels, num_classes).compactness;
        },
        py::arg("features"), py::arg("labels"), py::arg("num_classes"));
}
