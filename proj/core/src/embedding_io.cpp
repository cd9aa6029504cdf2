// Copyright 2026 The USL Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "usl/embedding_io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>
#include <string>
#include <unordered_set>

#include "usl/errors.hpp"
#include "usl/rng.hpp"

namespace usl {
namespace {

constexpr double kUnitNormTolerance = 1e-5;
constexpr double kIdempotenceSlack = 1e-13;

template <typename T>
T from_little_endian(const unsigned char* bytes) {
  static_assert(sizeof(T) == 4);
  std::uint32_t raw = static_cast<std::uint32_t>(bytes[0]) |
                      (static_cast<std::uint32_t>(bytes[1]) << 8) |
                      (static_cast<std::uint32_t>(bytes[2]) << 16) |
                      (static_cast<std::uint32_t>(bytes[3]) << 24);
  return std::bit_cast<T>(raw);
}

template <typename T>
void append_little_endian(std::string& out, T value) {
  static_assert(sizeof(T) == 4);
  const auto raw = std::bit_cast<std::uint32_t>(value);
  for (int shift = 0; shift < 32; shift += 8) {
    out.push_back(static_cast<char>((raw >> shift) & 0xffu));
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string contents((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on " + path.string());
  return contents;
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failure on " + path.string());
}

EmbeddingMatrix parse_fvecs(const std::string& bytes,
                            const std::filesystem::path& path) {
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t size = bytes.size();
  std::size_t offset = 0;
  std::size_t dim = 0;
  std::size_t rows = 0;
  std::vector<double> data;
  while (offset < size) {
    if (size - offset < 4) {
      throw DataError(path.string() + ": truncated dimension header at byte " +
                      std::to_string(offset));
    }
    const auto record_dim = from_little_endian<std::int32_t>(raw + offset);
    if (record_dim <= 0) {
      throw DataError(path.string() + ": non-positive dimension " +
                      std::to_string(record_dim) + " at byte " +
                      std::to_string(offset));
    }
    if (rows == 0) {
      dim = static_cast<std::size_t>(record_dim);
    } else if (static_cast<std::size_t>(record_dim) != dim) {
      throw DataError(path.string() + ": record " + std::to_string(rows) +
                      " at byte " + std::to_string(offset) + " has dimension " +
                      std::to_string(record_dim) + ", expected " +
                      std::to_string(dim));
    }
    offset += 4;
    if ((size - offset) / 4 < dim) {
      throw DataError(path.string() + ": truncated record " +
                      std::to_string(rows) + " at byte " +
                      std::to_string(offset));
    }
    for (std::size_t j = 0; j < dim; ++j, offset += 4) {
      const float value = from_little_endian<float>(raw + offset);
      if (!std::isfinite(value)) {
        throw DataError(path.string() + ": non-finite value at byte " +
                        std::to_string(offset) + " (record " +
                        std::to_string(rows) + ")");
      }
      data.push_back(static_cast<double>(value));
    }
    ++rows;
  }
  if (rows == 0) throw DataError(path.string() + ": no records");
  return EmbeddingMatrix(rows, dim, std::move(data));
}

EmbeddingMatrix parse_csv(const std::string& text,
                          const std::filesystem::path& path) {
  std::size_t dim = 0;
  std::size_t rows = 0;
  std::size_t line_no = 0;
  std::vector<double> data;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) {
      if (pos >= text.size()) break;
      throw DataError(path.string() + ": empty line " + std::to_string(line_no));
    }

    std::size_t fields = 0;
    std::size_t field_start = 0;
    while (true) {
      std::size_t comma = line.find(',', field_start);
      std::string_view field =
          line.substr(field_start, comma == std::string_view::npos
                                       ? std::string_view::npos
                                       : comma - field_start);
      while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
      while (!field.empty() && field.back() == ' ') field.remove_suffix(1);
      if (!field.empty() && field.front() == '+') field.remove_prefix(1);
      double value = 0.0;
      const auto [ptr, ec] =
          std::from_chars(field.data(), field.data() + field.size(), value);
      if (field.empty() || ec != std::errc() ||
          ptr != field.data() + field.size()) {
        throw DataError(path.string() + ": line " + std::to_string(line_no) +
                        ", field " + std::to_string(fields + 1) +
                        ": malformed number '" + std::string(field) + "'");
      }
      if (!std::isfinite(value)) {
        throw DataError(path.string() + ": line " + std::to_string(line_no) +
                        ": non-finite value");
      }
      data.push_back(value);
      ++fields;
      if (comma == std::string_view::npos) break;
      field_start = comma + 1;
    }
    if (rows == 0) {
      dim = fields;
    } else if (fields != dim) {
      throw DataError(path.string() + ": line " + std::to_string(line_no) +
                      " has " + std::to_string(fields) + " fields, expected " +
                      std::to_string(dim));
    }
    ++rows;
  }
  if (rows == 0) throw DataError(path.string() + ": no records");
  return EmbeddingMatrix(rows, dim, std::move(data));
}

std::vector<std::size_t> parse_index_lines(const std::string& text,
                                           const std::filesystem::path& path) {
  std::vector<std::size_t> values;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) {
      if (pos >= text.size()) break;
      throw DataError(path.string() + ": empty line " + std::to_string(line_no));
    }
    std::size_t value = 0;
    const auto [ptr, ec] =
        std::from_chars(line.data(), line.data() + line.size(), value);
    if (ec != std::errc() || ptr != line.data() + line.size()) {
      throw DataError(path.string() + ": line " + std::to_string(line_no) +
                      ": expected a non-negative integer, got '" +
                      std::string(line) + "'");
    }
    values.push_back(value);
  }
  return values;
}

}  // namespace

EmbeddingMatrix::EmbeddingMatrix(std::size_t rows, std::size_t cols,
                                 std::vector<double> data, bool normalized)
    : rows_(rows), cols_(cols), data_(std::move(data)), normalized_(normalized) {
  if (rows_ == 0 || cols_ == 0) {
    throw DataError("embedding matrix must have at least one row and column");
  }
  if (data_.size() != rows_ * cols_) {
    throw DataError("embedding data has " + std::to_string(data_.size()) +
                    " values, expected " + std::to_string(rows_ * cols_));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw DataError("non-finite value at row " + std::to_string(i / cols_) +
                      ", column " + std::to_string(i % cols_));
    }
  }
  if (normalized_) {
    for (std::size_t i = 0; i < rows_; ++i) {
      double sq = 0.0;
      for (double v : row(i)) sq += v * v;
      if (std::abs(std::sqrt(sq) - 1.0) > kUnitNormTolerance) {
        throw DataError("row " + std::to_string(i) +
                        " is flagged normalized but has norm " +
                        std::to_string(std::sqrt(sq)));
      }
    }
  }
}

LabelVector make_labels(std::vector<std::uint32_t> labels,
                        std::size_t num_classes) {
  if (labels.empty()) throw DataError("label vector is empty");
  const std::size_t max_label = *std::max_element(labels.begin(), labels.end());
  if (num_classes == 0) num_classes = max_label + 1;
  if (max_label >= num_classes) {
    throw DataError("label " + std::to_string(max_label) +
                    " is not below num_classes " + std::to_string(num_classes));
  }
  return LabelVector{std::move(labels), num_classes};
}

EmbeddingFormat format_from_path(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (ext == ".fvecs") return EmbeddingFormat::kFvecs;
  if (ext == ".csv") return EmbeddingFormat::kCsv;
  throw InvalidArgument("cannot infer embedding format from '" + path.string() +
                        "' (expected .fvecs or .csv)");
}

std::string_view to_string(EmbeddingFormat format) {
  return format == EmbeddingFormat::kFvecs ? "fvecs" : "csv";
}

EmbeddingMatrix load_embeddings(const std::filesystem::path& path,
                                EmbeddingFormat format) {
  const std::string bytes = read_file(path);
  return format == EmbeddingFormat::kFvecs ? parse_fvecs(bytes, path)
                                           : parse_csv(bytes, path);
}

void save_embeddings(const EmbeddingMatrix& matrix,
                     const std::filesystem::path& path,
                     EmbeddingFormat format) {
  std::string out;
  if (format == EmbeddingFormat::kFvecs) {
    if (matrix.cols() > static_cast<std::size_t>(
                            std::numeric_limits<std::int32_t>::max())) {
      throw InvalidArgument("dimension too large for fvecs");
    }
    out.reserve(matrix.rows() * (matrix.cols() + 1) * 4);
    for (std::size_t i = 0; i < matrix.rows(); ++i) {
      append_little_endian(out, static_cast<std::int32_t>(matrix.cols()));
      for (double v : matrix.row(i)) {
        append_little_endian(out, static_cast<float>(v));
      }
    }
  } else {
    char buf[64];
    for (std::size_t i = 0; i < matrix.rows(); ++i) {
      const auto row = matrix.row(i);
      for (std::size_t j = 0; j < row.size(); ++j) {
        if (j > 0) out.push_back(',');
        // Shortest representation that round-trips exactly.
        const auto result = std::to_chars(buf, buf + sizeof(buf), row[j]);
        out.append(buf, result.ptr);
      }
      out.push_back('\n');
    }
  }
  write_file(path, out);
}

EmbeddingMatrix l2_normalize(const EmbeddingMatrix& matrix) {
  const std::size_t d = matrix.cols();
  std::vector<double> data(matrix.data().begin(), matrix.data().end());
  for (std::size_t i = 0; i < matrix.rows(); ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) sq += data[i * d + j] * data[i * d + j];
    if (sq == 0.0) {
      throw DataError("row " + std::to_string(i) +
                      " has zero norm and cannot be normalized");
    }
    const double norm = std::sqrt(sq);
    // Rows already unit length up to rounding are left bit-for-bit unchanged,
    // which makes normalization idempotent.
    if (std::abs(norm - 1.0) <= kIdempotenceSlack) continue;
    for (std::size_t j = 0; j < d; ++j) data[i * d + j] /= norm;
  }
  return EmbeddingMatrix(matrix.rows(), d, std::move(data), true);
}

EmbeddingMatrix add_jitter(const EmbeddingMatrix& matrix, double scale,
                           std::uint64_t seed) {
  if (!(scale >= 0.0)) throw InvalidArgument("jitter scale must be >= 0");
  Rng rng(seed);
  std::vector<double> data(matrix.data().begin(), matrix.data().end());
  for (double& v : data) v += rng.uniform(-scale, scale);
  return EmbeddingMatrix(matrix.rows(), matrix.cols(), std::move(data));
}

void validate_selection(const SelectionFile& selection,
                        std::optional<std::size_t> n) {
  if (selection.indices.empty()) {
    throw InvalidArgument("selection budget must be at least 1");
  }
  std::unordered_set<std::size_t> seen;
  seen.reserve(selection.indices.size());
  for (std::size_t idx : selection.indices) {
    if (n && idx >= *n) {
      throw DataError("selected index " + std::to_string(idx) +
                      " is out of range for n = " + std::to_string(*n));
    }
    if (!seen.insert(idx).second) {
      throw DataError("duplicate selected index " + std::to_string(idx));
    }
  }
}

void save_selection(const SelectionFile& selection,
                    const std::filesystem::path& path) {
  validate_selection(selection);
  std::string out;
  for (std::size_t idx : selection.indices) {
    out += std::to_string(idx);
    out.push_back('\n');
  }
  write_file(path, out);
}

SelectionFile load_selection(const std::filesystem::path& path,
                             std::optional<std::size_t> n) {
  SelectionFile selection{parse_index_lines(read_file(path), path)};
  if (selection.indices.empty()) {
    throw DataError(path.string() + ": selection file is empty");
  }
  validate_selection(selection, n);
  return selection;
}

void save_labels(const LabelVector& labels, const std::filesystem::path& path) {
  std::string out;
  for (auto label : labels.labels) {
    out += std::to_string(label);
    out.push_back('\n');
  }
  write_file(path, out);
}

LabelVector load_labels(const std::filesystem::path& path) {
  const auto values = parse_index_lines(read_file(path), path);
  std::vector<std::uint32_t> labels;
  labels.reserve(values.size());
  for (std::size_t v : values) {
    if (v > std::numeric_limits<std::uint32_t>::max()) {
      throw DataError(path.string() + ": label " + std::to_string(v) +
                      " exceeds 32-bit range");
    }
    labels.push_back(static_cast<std::uint32_t>(v));
  }
  return make_labels(std::move(labels));
}

}  // namespace usl
