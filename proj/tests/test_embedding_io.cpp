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

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "usl/embedding_io.hpp"
#include "usl/errors.hpp"
#include "usl/rng.hpp"

namespace usl {
namespace {

using testing::TempDir;

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

void append_record(std::string& bytes, std::int32_t dim,
                   const std::vector<float>& values) {
  char buf[4];
  std::memcpy(buf, &dim, 4);
  bytes.append(buf, 4);
  for (float v : values) {
    std::memcpy(buf, &v, 4);
    bytes.append(buf, 4);
  }
}

TEST(EmbeddingMatrix, RejectsBadShapeAndValues) {
  EXPECT_THROW(EmbeddingMatrix(0, 2, {}), DataError);
  EXPECT_THROW(EmbeddingMatrix(1, 0, {}), DataError);
  EXPECT_THROW(EmbeddingMatrix(2, 2, {1, 2, 3}), DataError);
  EXPECT_THROW(EmbeddingMatrix(1, 2, {1, NAN}), DataError);
  EXPECT_THROW(EmbeddingMatrix(1, 2, {INFINITY, 0}), DataError);
  EXPECT_THROW(EmbeddingMatrix(1, 2, {1, 1}, true), DataError);
  EXPECT_NO_THROW(EmbeddingMatrix(1, 2, {0.6, 0.8}, true));
}

TEST(LoadEmbeddings, FvecsThreeRecords) {
  TempDir dir;
  std::string bytes;
  append_record(bytes, 2, {1.f, 2.f});
  append_record(bytes, 2, {3.f, 4.f});
  append_record(bytes, 2, {5.f, 6.5f});
  spit(dir / "a.fvecs", bytes);
  const auto m = load_embeddings(dir / "a.fvecs", EmbeddingFormat::kFvecs);
  EXPECT_EQ(m.rows(), 3u);
  EXPECT_EQ(m.cols(), 2u);
  EXPECT_FALSE(m.normalized());
  EXPECT_EQ(m(2, 1), 6.5);
}

TEST(LoadEmbeddings, CsvIdentity) {
  TempDir dir;
  spit(dir / "a.csv", "1.0,0.0\n0.0,1.0");
  const auto m = load_embeddings(dir / "a.csv", EmbeddingFormat::kCsv);
  ASSERT_EQ(m.rows(), 2u);
  ASSERT_EQ(m.cols(), 2u);
  EXPECT_EQ(m(0, 0), 1.0);
  EXPECT_EQ(m(0, 1), 0.0);
  EXPECT_EQ(m(1, 0), 0.0);
  EXPECT_EQ(m(1, 1), 1.0);
}

TEST(LoadEmbeddings, FvecsErrorsNameByteOffset) {
  TempDir dir;
  std::string bytes;
  append_record(bytes, 2, {1.f, 2.f});
  append_record(bytes, 3, {1.f, 2.f, 3.f});
  spit(dir / "mixed.fvecs", bytes);
  try {
    load_embeddings(dir / "mixed.fvecs", EmbeddingFormat::kFvecs);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("byte 12"), std::string::npos) << e.what();
  }

  std::string truncated;
  append_record(truncated, 4, {1.f, 2.f});
  spit(dir / "short.fvecs", truncated);
  EXPECT_THROW(load_embeddings(dir / "short.fvecs", EmbeddingFormat::kFvecs),
               DataError);

  std::string nonfinite;
  append_record(nonfinite, 2, {1.f, std::numeric_limits<float>::quiet_NaN()});
  spit(dir / "nan.fvecs", nonfinite);
  EXPECT_THROW(load_embeddings(dir / "nan.fvecs", EmbeddingFormat::kFvecs),
               DataError);

  std::string zero_dim;
  append_record(zero_dim, 0, {});
  spit(dir / "zero.fvecs", zero_dim);
  EXPECT_THROW(load_embeddings(dir / "zero.fvecs", EmbeddingFormat::kFvecs),
               DataError);

  spit(dir / "empty.fvecs", "");
  EXPECT_THROW(load_embeddings(dir / "empty.fvecs", EmbeddingFormat::kFvecs),
               DataError);
  EXPECT_THROW(load_embeddings(dir / "missing.fvecs", EmbeddingFormat::kFvecs),
               IoError);
}

TEST(LoadEmbeddings, CsvErrorsNameLine) {
  TempDir dir;
  spit(dir / "ragged.csv", "1,2\n3,4\n5\n");
  try {
    load_embeddings(dir / "ragged.csv", EmbeddingFormat::kCsv);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  spit(dir / "junk.csv", "1,2\n3,x\n");
  EXPECT_THROW(load_embeddings(dir / "junk.csv", EmbeddingFormat::kCsv), DataError);
  spit(dir / "inf.csv", "1,inf\n");
  EXPECT_THROW(load_embeddings(dir / "inf.csv", EmbeddingFormat::kCsv), DataError);
  spit(dir / "gap.csv", "1,2\n\n3,4\n");
  EXPECT_THROW(load_embeddings(dir / "gap.csv", EmbeddingFormat::kCsv), DataError);
  spit(dir / "trailing.csv", "1,2\n3,4\n");
  EXPECT_EQ(load_embeddings(dir / "trailing.csv", EmbeddingFormat::kCsv).rows(), 2u);
}

TEST(SaveEmbeddings, RoundTripIsBitExact) {
  TempDir dir;
  // Values representable in float so the fvecs path is lossless too.
  Rng rng(11);
  std::vector<double> v(5 * 4);
  for (auto& x : v) x = static_cast<float>(rng.normal());
  const EmbeddingMatrix m(5, 4, v);
  for (auto fmt : {EmbeddingFormat::kFvecs, EmbeddingFormat::kCsv}) {
    const auto path = dir / (std::string("m.") + std::string(to_string(fmt)));
    save_embeddings(m, path, fmt);
    const auto back = load_embeddings(path, fmt);
    ASSERT_EQ(back.data().size(), m.data().size());
    EXPECT_EQ(std::memcmp(back.data().data(), m.data().data(),
                          m.data().size() * sizeof(double)),
              0);
  }
}

TEST(SaveEmbeddings, CsvRoundTripsArbitraryDoubles) {
  TempDir dir;
  const auto m = testing::random_matrix(7, 3, 5);
  save_embeddings(m, dir / "m.csv", EmbeddingFormat::kCsv);
  EXPECT_EQ(load_embeddings(dir / "m.csv", EmbeddingFormat::kCsv), m);
}

TEST(LoadEmbeddings, FvecsAndCsvAgree) {
  TempDir dir;
  const auto m = testing::random_matrix(6, 5, 9);
  save_embeddings(m, dir / "m.fvecs", EmbeddingFormat::kFvecs);
  const auto f = load_embeddings(dir / "m.fvecs", EmbeddingFormat::kFvecs);
  save_embeddings(f, dir / "m.csv", EmbeddingFormat::kCsv);
  const auto c = load_embeddings(dir / "m.csv", EmbeddingFormat::kCsv);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      EXPECT_EQ(f(i, j), c(i, j));
      EXPECT_EQ(f(i, j), static_cast<double>(static_cast<float>(m(i, j))));
    }
  }
}

TEST(FormatFromPath, UsesExtension) {
  EXPECT_EQ(format_from_path("a/b.fvecs"), EmbeddingFormat::kFvecs);
  EXPECT_EQ(format_from_path("b.CSV"), EmbeddingFormat::kCsv);
  EXPECT_THROW(format_from_path("b.txt"), InvalidArgument);
}

TEST(L2Normalize, PythagoreanRow) {
  const auto n = l2_normalize(EmbeddingMatrix(1, 2, {3, 4}));
  EXPECT_TRUE(n.normalized());
  EXPECT_DOUBLE_EQ(n(0, 0), 0.6);
  EXPECT_DOUBLE_EQ(n(0, 1), 0.8);
}

TEST(L2Normalize, UnitRowUnchanged) {
  const auto n = l2_normalize(EmbeddingMatrix(1, 2, {1, 0}));
  EXPECT_EQ(n(0, 0), 1.0);
  EXPECT_EQ(n(0, 1), 0.0);
}

TEST(L2Normalize, RandomRowsHaveUnitNorm) {
  const auto n = l2_normalize(testing::random_matrix(10, 8, 3));
  for (std::size_t i = 0; i < n.rows(); ++i) {
    double s = 0.0;
    for (double v : n.row(i)) s += v * v;
    EXPECT_NEAR(std::sqrt(s), 1.0, 1e-6);
  }
}

TEST(L2Normalize, IdempotentExactly) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto once = l2_normalize(testing::random_matrix(30, 7, seed));
    EXPECT_EQ(l2_normalize(once), once);
  }
}

TEST(L2Normalize, ZeroRowReportsIndex) {
  try {
    l2_normalize(EmbeddingMatrix(3, 2, {1, 0, 0, 0, 0, 1}));
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos) << e.what();
  }
}

TEST(AddJitter, SmallDeterministicAndSeeded) {
  const EmbeddingMatrix m(2, 2, {1, 0, 1, 0});
  const auto a = add_jitter(m, 1e-12, 4);
  EXPECT_EQ(a, add_jitter(m, 1e-12, 4));
  EXPECT_NE(a, add_jitter(m, 1e-12, 5));
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_LE(std::abs(a.data()[i] - m.data()[i]), 1e-12);
  }
  EXPECT_NE(a(0, 0), a(1, 0));
}

TEST(Selection, FileFormat) {
  TempDir dir;
  save_selection({{4, 0, 7}}, dir / "s.txt");
  EXPECT_EQ(slurp(dir / "s.txt"), "4\n0\n7\n");
}

TEST(Selection, EmptyRejected) {
  TempDir dir;
  EXPECT_THROW(save_selection({}, dir / "s.txt"), InvalidArgument);
  spit(dir / "e.txt", "");
  EXPECT_THROW(load_selection(dir / "e.txt"), DataError);
}

TEST(Selection, RoundTripPreservesOrder) {
  TempDir dir;
  Rng rng(21);
  std::vector<std::size_t> pool(1000);
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
  for (std::size_t i = 0; i < 40; ++i) std::swap(pool[i], pool[i + rng.below(1000 - i)]);
  const SelectionFile s{{pool.begin(), pool.begin() + 40}};
  save_selection(s, dir / "s.txt");
  EXPECT_EQ(load_selection(dir / "s.txt", 1000).indices, s.indices);
}

TEST(Selection, LoadValidates) {
  TempDir dir;
  spit(dir / "dup.txt", "1\n2\n1\n");
  EXPECT_THROW(load_selection(dir / "dup.txt"), DataError);
  spit(dir / "range.txt", "1\n5\n");
  EXPECT_NO_THROW(load_selection(dir / "range.txt"));
  EXPECT_THROW(load_selection(dir / "range.txt", 5), DataError);
  spit(dir / "neg.txt", "-1\n");
  EXPECT_THROW(load_selection(dir / "neg.txt"), DataError);
  spit(dir / "junk.txt", "1\nabc\n");
  EXPECT_THROW(load_selection(dir / "junk.txt"), DataError);
}

TEST(Labels, RoundTripAndInference) {
  TempDir dir;
  const LabelVector l = make_labels({0, 2, 1, 2});
  EXPECT_EQ(l.num_classes, 3u);
  save_labels(l, dir / "l.txt");
  EXPECT_EQ(slurp(dir / "l.txt"), "0\n2\n1\n2\n");
  const auto back = load_labels(dir / "l.txt");
  EXPECT_EQ(back.labels, l.labels);
  EXPECT_EQ(back.num_classes, 3u);
  EXPECT_THROW(make_labels({0, 3}, 2), DataError);
  spit(dir / "bad.txt", "0\n-2\n");
  EXPECT_THROW(load_labels(dir / "bad.txt"), DataError);
}

}  // namespace
}  // namespace usl
