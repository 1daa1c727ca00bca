#include "mcp/stream_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <sstream>

namespace mcp {

namespace {

constexpr char kMagic[4] = {'M', 'C', 'P', 'E'};

std::uint32_t load_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void check_unit(ConstRow v, const char* what) {
  const double n = norm(v);
  if (std::abs(n - 1.0) > kUnitSlack) {
    std::ostringstream os;
    os << what << ": vector norm " << n << " is not unit within " << kUnitSlack;
    throw DataError(os.str());
  }
}

}  // namespace

void validate_header(const StreamHeader& h) {
  if (h.version != kStreamVersion) throw DataError("stream header: unsupported version");
  if (h.dim == 0 || h.class_names.empty()) throw DataError("stream header: d and C must be >= 1");
  if (h.prompts.size() != h.class_names.size()) throw DataError("stream header: prompt lists != class count");
  for (std::size_t c = 0; c < h.prompts.size(); ++c) {
    if (h.prompts[c].empty()) throw DataError("stream header: class " + std::to_string(c) + " has no prompts");
    for (const auto& p : h.prompts[c]) {
      if (p.size() != h.dim) throw DataError("stream header: prompt dimension mismatch");
      check_unit(p, "stream header prompt");
    }
  }
}

void validate_record(const SampleRecord& r, const StreamHeader& h) {
  if (r.label && *r.label >= h.num_classes()) throw DataError("record: label out of range");
  if (r.views.rows() == 0) throw DataError("record: needs at least one view");
  if (r.views.cols() != h.dim) throw DataError("record: view dimension mismatch");
  for (std::size_t n = 0; n < r.views.rows(); ++n) check_unit(r.views.row(n), "record view");
}

std::uint64_t header_size_bytes(const StreamHeader& h) {
  std::uint64_t n = 16;
  for (const auto& name : h.class_names) n += 4 + name.size();
  for (const auto& p : h.prompts) n += 4 + 4ull * p.size() * h.dim;
  return n;
}

std::uint64_t record_size_bytes(std::size_t views, std::size_t dim) { return 8 + 4ull * views * dim; }

// ---- reader ----

StreamReader::StreamReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
  if (!in_) throw DataError("cannot open stream file '" + path + "'");
  char magic[4];
  read_exact(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw DataError(path_ + ": bad magic at byte offset 0");
  header_.version = read_u32("version");
  if (header_.version != kStreamVersion)
    throw DataError(path_ + ": unsupported version " + std::to_string(header_.version) + " at byte offset 4");
  header_.dim = read_u32("dimension");
  const std::uint32_t classes = read_u32("class count");
  if (header_.dim == 0 || classes == 0) throw DataError(path_ + ": d and C must be >= 1 (byte offset 8)");
  for (std::uint32_t c = 0; c < classes; ++c) {
    const std::uint32_t len = read_u32("class name length");
    std::string name(len, '\0');
    read_exact(name.data(), len, "class name");
    header_.class_names.push_back(std::move(name));
  }
  header_.prompts.resize(classes);
  for (std::uint32_t c = 0; c < classes; ++c) {
    const std::uint32_t count = read_u32("prompt count");
    if (count == 0) throw DataError(path_ + ": class with zero prompts before byte offset " + std::to_string(offset_));
    for (std::uint32_t i = 0; i < count; ++i) {
      Vec v(header_.dim);
      read_f32_row(v, "prompt embedding");
      header_.prompts[c].push_back(std::move(v));
    }
  }
}

void StreamReader::read_exact(void* dst, std::size_t n, const char* what) {
  in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  const auto got = static_cast<std::size_t>(in_.gcount());
  if (got != n) {
    std::ostringstream os;
    os << path_ << ": truncated " << what << " at byte offset " << offset_ + got << " (needed " << n
       << " bytes, got " << got << ")";
    throw DataError(os.str());
  }
  offset_ += n;
}

std::uint32_t StreamReader::read_u32(const char* what) {
  unsigned char b[4];
  read_exact(b, 4, what);
  return load_u32(b);
}

void StreamReader::read_f32_row(Row out, const char* what) {
  const std::uint64_t start = offset_;
  buf_.resize(out.size() * 4);
  read_exact(buf_.data(), buf_.size(), what);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<double>(std::bit_cast<float>(load_u32(buf_.data() + 4 * i)));
  const double n = norm(out);
  if (std::abs(n - 1.0) > kUnitSlack) {
    std::ostringstream os;
    os << path_ << ": " << what << " at byte offset " << start << " has norm " << n << ", not unit";
    throw DataError(os.str());
  }
  if (std::abs(n - 1.0) > 1e-5) ++warnings_;
}

bool StreamReader::next(SampleRecord& out) {
  unsigned char b[4];
  in_.read(reinterpret_cast<char*>(b), 4);
  const auto got = in_.gcount();
  if (got == 0 && in_.eof()) return false;
  if (got != 4) {
    std::ostringstream os;
    os << path_ << ": truncated record label at byte offset " << offset_ + static_cast<std::uint64_t>(got);
    throw DataError(os.str());
  }
  const std::uint64_t record_start = offset_;
  offset_ += 4;
  const std::uint32_t label = load_u32(b);
  if (label != kUnlabeled && label >= header_.num_classes())
    throw DataError(path_ + ": label out of range at byte offset " + std::to_string(record_start));
  out.label = label == kUnlabeled ? std::nullopt : std::optional<std::uint32_t>(label);
  const std::uint32_t n = read_u32("view count");
  if (n == 0) throw DataError(path_ + ": record with zero views at byte offset " + std::to_string(record_start));
  if (out.views.rows() != n || out.views.cols() != header_.dim) out.views = Matrix(n, header_.dim);
  for (std::uint32_t v = 0; v < n; ++v) read_f32_row(out.views.row(v), "view embedding");
  return true;
}

// ---- writer ----

StreamWriter::StreamWriter(const std::string& path, const StreamHeader& header)
    : out_(path, std::ios::binary | std::ios::trunc), header_(header) {
  if (!out_) throw DataError("cannot open '" + path + "' for writing");
  validate_header(header_);
  out_.write(kMagic, 4);
  bytes_ += 4;
  put_u32(header_.version);
  put_u32(static_cast<std::uint32_t>(header_.dim));
  put_u32(static_cast<std::uint32_t>(header_.num_classes()));
  for (const auto& name : header_.class_names) {
    put_u32(static_cast<std::uint32_t>(name.size()));
    out_.write(name.data(), static_cast<std::streamsize>(name.size()));
    bytes_ += name.size();
  }
  for (const auto& prompts : header_.prompts) {
    put_u32(static_cast<std::uint32_t>(prompts.size()));
    for (const auto& p : prompts)
      for (double x : p) put_f32(x);
  }
}

void StreamWriter::put_u32(std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out_.write(reinterpret_cast<const char*>(b), 4);
  bytes_ += 4;
}

void StreamWriter::put_f32(double v) { put_u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }

void StreamWriter::write(const SampleRecord& r) {
  validate_record(r, header_);
  put_u32(r.label ? *r.label : kUnlabeled);
  put_u32(static_cast<std::uint32_t>(r.views.rows()));
  for (double x : r.views.data()) put_f32(x);
  if (!out_) throw DataError("write failed");
}

void StreamWriter::close() {
  out_.flush();
  if (!out_) throw DataError("flush failed");
  out_.close();
}

bool MemorySource::next(SampleRecord& out) {
  if (pos_ >= records_->size()) return false;
  out = (*records_)[pos_++];
  return true;
}

void write_stream(const std::string& path, const StreamHeader& header,
                  const std::vector<SampleRecord>& records) {
  StreamWriter w(path, header);
  for (const auto& r : records) w.write(r);
  w.close();
}

}  // namespace mcp
