#pragma once

#include <cstdint>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mcp/core.hpp"

namespace mcp {

// Embedding stream file, all integers and floats little-endian:
//
//   header   "MCPE" | u32 version (=1) | u32 d | u32 C
//            C x { u32 byte_len | UTF-8 class name }
//            C x { u32 P_c | P_c x d f32 prompt embedding }
//   record*  u32 label (0xFFFFFFFF = unlabeled) | u32 N | N x d f32 (view 0 = original)
//
// Records run to end of file.

inline constexpr std::uint32_t kStreamVersion = 1;
inline constexpr std::uint32_t kUnlabeled = 0xFFFFFFFFu;
inline constexpr double kUnitSlack = 1e-4;

struct StreamHeader {
  std::uint32_t version = kStreamVersion;
  std::size_t dim = 0;
  std::vector<std::string> class_names;
  std::vector<std::vector<Vec>> prompts;  // per class, P_c unit vectors

  std::size_t num_classes() const { return class_names.size(); }
};

struct SampleRecord {
  std::optional<std::uint32_t> label;
  Matrix views;  // N x d
};

void validate_header(const StreamHeader& h);
void validate_record(const SampleRecord& r, const StreamHeader& h);

/// Serialized header size in bytes.
std::uint64_t header_size_bytes(const StreamHeader& h);
std::uint64_t record_size_bytes(std::size_t views, std::size_t dim);

class RecordSource {
 public:
  virtual ~RecordSource() = default;
  virtual const StreamHeader& header() const = 0;
  /// Fills `out` with the next record; false at end of stream.
  virtual bool next(SampleRecord& out) = 0;
  /// Vectors accepted within the unit slack but off by more than 1e-5.
  virtual std::uint64_t warnings() const { return 0; }
};

/// Streaming reader; holds one record at a time.
class StreamReader final : public RecordSource {
 public:
  explicit StreamReader(const std::string& path);

  const StreamHeader& header() const override { return header_; }
  bool next(SampleRecord& out) override;

  std::uint64_t offset() const { return offset_; }
  std::uint64_t warnings() const override { return warnings_; }

 private:
  void read_exact(void* dst, std::size_t n, const char* what);
  std::uint32_t read_u32(const char* what);
  void read_f32_row(Row out, const char* what);

  std::string path_;
  std::ifstream in_;
  StreamHeader header_;
  std::uint64_t offset_ = 0;
  std::uint64_t warnings_ = 0;
  std::vector<unsigned char> buf_;
};

class StreamWriter {
 public:
  StreamWriter(const std::string& path, const StreamHeader& header);
  void write(const SampleRecord& r);
  void close();
  std::uint64_t bytes_written() const { return bytes_; }

 private:
  void put_u32(std::uint32_t v);
  void put_f32(double v);

  std::ofstream out_;
  StreamHeader header_;
  std::uint64_t bytes_ = 0;
};

class MemorySource final : public RecordSource {
 public:
  MemorySource(StreamHeader header, std::shared_ptr<const std::vector<SampleRecord>> records)
      : header_(std::move(header)), records_(std::move(records)) {}

  const StreamHeader& header() const override { return header_; }
  bool next(SampleRecord& out) override;

 private:
  StreamHeader header_;
  std::shared_ptr<const std::vector<SampleRecord>> records_;
  std::size_t pos_ = 0;
};

void write_stream(const std::string& path, const StreamHeader& header,
                  const std::vector<SampleRecord>& records);

}  // namespace mcp
