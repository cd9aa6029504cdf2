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

#ifndef USL_EMBEDDING_IO_HPP_
#define USL_EMBEDDING_IO_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace usl {

// n x d row-major matrix of instance features. Values are held in double
// precision regardless of the on-disk representation. Immutable once built.
class EmbeddingMatrix {
 public:
  // Validates shape and finiteness; when `normalized` is set, also checks that
  // every row has unit norm within 1e-5.
  EmbeddingMatrix(std::size_t rows, std::size_t cols, std::vector<double> data,
                  bool normalized = false);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool normalized() const { return normalized_; }

  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * cols_, cols_};
  }
  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * cols_ + j];
  }
  std::span<const double> data() const { return data_; }

  friend bool operator==(const EmbeddingMatrix&,
                         const EmbeddingMatrix&) = default;

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> data_;
  bool normalized_;
};

// Ground-truth class ids. Only diagnostics consume these; selectors never do.
struct LabelVector {
  std::vector<std::uint32_t> labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
};

// Builds a LabelVector, inferring num_classes as max label + 1 when zero.
LabelVector make_labels(std::vector<std::uint32_t> labels,
                        std::size_t num_classes = 0);

// Ordered set of distinct instance indices chosen for annotation.
struct SelectionFile {
  std::vector<std::size_t> indices;

  std::size_t budget() const { return indices.size(); }
};

enum class EmbeddingFormat { kFvecs, kCsv };

// Picks the format from the file extension (".fvecs" or ".csv").
EmbeddingFormat format_from_path(const std::filesystem::path& path);
std::string_view to_string(EmbeddingFormat format);

EmbeddingMatrix load_embeddings(const std::filesystem::path& path,
                                EmbeddingFormat format);
void save_embeddings(const EmbeddingMatrix& matrix,
                     const std::filesystem::path& path, EmbeddingFormat format);

// Scales every row to unit Euclidean norm. Throws DataError naming the first
// zero-norm row.
EmbeddingMatrix l2_normalize(const EmbeddingMatrix& matrix);

// Adds seeded uniform noise in [-scale, scale] to every coordinate. Used to
// break exact duplicates before density estimation.
EmbeddingMatrix add_jitter(const EmbeddingMatrix& matrix, double scale,
                           std::uint64_t seed);

// One zero-based decimal index per line, newline-terminated.
void save_selection(const SelectionFile& selection,
                    const std::filesystem::path& path);
// Rejects empty files and duplicates; when `n` is given, also indices >= n.
SelectionFile load_selection(const std::filesystem::path& path,
                             std::optional<std::size_t> n = std::nullopt);
// Validation shared by save/load and the diagnostics entry points.
void validate_selection(const SelectionFile& selection,
                        std::optional<std::size_t> n = std::nullopt);

void save_labels(const LabelVector& labels, const std::filesystem::path& path);
LabelVector load_labels(const std::filesystem::path& path);

}  // namespace usl

#endif  // USL_EMBEDDING_IO_HPP_
