/*
 * Copyright 2026 The fairshot Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <algorithm>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "fairshot/embeddings.hpp"
#include "test_util.hpp"

using namespace fairshot;
using fairshot::tests::vec;

namespace {

EmbeddingTable parse(const std::string& s, EmbeddingLoadStats* st = nullptr) {
  std::istringstream in(s);
  return parse_embeddings(in, "mem", st);
}

EmbeddingTable cat_dog() {
  EmbeddingTable t(3);
  t.insert("cat", vec({1, 0, 0}));
  t.insert("dog", vec({0, 1, 0}));
  return t;
}

}  // namespace

TEST(LoadEmbeddings, HeaderForm) {
  EmbeddingLoadStats st;
  const auto t = parse("2 3\ncat 1 0 0\ndog 0 1 0\n", &st);
  EXPECT_EQ(t.size(), 2u);
  EXPECT_EQ(t.dimension(), 3u);
  EXPECT_TRUE(st.had_header);
  EXPECT_EQ(*t.find("dog"), vec({0, 1, 0}));
}

TEST(LoadEmbeddings, WrongVectorLengthIsAnError) {
  EXPECT_THROW(parse("1 3\ncat 1 0\n"), ParseError);
}

TEST(LoadEmbeddings, HeaderlessFormTakesDimensionFromFirstRow) {
  EmbeddingLoadStats st;
  const auto t = parse("cat 1 0 0 0\ndog 0 1 0 0\n", &st);
  EXPECT_FALSE(st.had_header);
  EXPECT_EQ(t.dimension(), 4u);
  EXPECT_EQ(t.size(), 2u);
}

TEST(LoadEmbeddings, MalformedInputs) {
  EXPECT_THROW(parse(""), ParseError);
  EXPECT_THROW(parse("\n\n"), ParseError);
  EXPECT_THROW(parse("2 0\n"), ParseError);
  EXPECT_THROW(parse("lonely\n"), ParseError);
  EXPECT_THROW(parse("1 2\ncat 1 x\n"), ParseError);
  EXPECT_THROW(parse("1 2\ncat 1 nan\n"), ParseError);
  EXPECT_THROW(parse("1 2\n"), ParseError);
}

TEST(LoadEmbeddings, ErrorsCarryTheLineNumber) {
  try {
    parse("3 2\na 1 2\nb 1 2\nc 1\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4u);
  }
}

TEST(LoadEmbeddings, DuplicateTokenIsLastWinsWithWarning) {
  tests::WarningCapture w;
  EmbeddingLoadStats st;
  const auto t = parse("2 2\ncat 1 1\ncat 2 2\n", &st);
  EXPECT_EQ(t.size(), 1u);
  EXPECT_EQ(*t.find("cat"), vec({2, 2}));
  EXPECT_EQ(st.duplicates, 1u);
  ASSERT_FALSE(w.messages.empty());
  EXPECT_NE(w.messages[0].find("duplicate"), std::string::npos);
}

TEST(LoadEmbeddings, CountMismatchWarns) {
  tests::WarningCapture w;
  parse("5 2\ncat 1 1\n");
  ASSERT_EQ(w.messages.size(), 1u);
}

// Write-then-read oracle over a generated 50-token fixture.
TEST(LoadEmbeddings, WrittenFixtureRoundTrips) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;
  EmbeddingTable written(10);
  std::vector<std::pair<std::string, Vector>> expected;
  for (int i = 0; i < 50; ++i) {
    Vector v(10);
    for (int k = 0; k < 10; ++k) v[k] = g(rng) * std::pow(10.0, (i % 7) - 3);
    expected.emplace_back("tok" + std::to_string(i), v);
    written.insert(expected.back().first, v);
  }
  tests::TempDir dir;
  std::ostringstream out;
  write_embeddings(written, out);
  text::write_file_atomic(dir / "e.vec", out.str());
  const auto read = load_embeddings(dir / "e.vec");
  ASSERT_EQ(read.size(), 50u);
  EXPECT_EQ(read.dimension(), 10u);
  for (const auto& [tok, v] : expected) {
    const Vector* got = read.find(tok);
    ASSERT_NE(got, nullptr) << tok;
    EXPECT_EQ(*got, v) << tok;
  }
}

TEST(LoadEmbeddings, MissingFile) {
  EXPECT_THROW(load_embeddings("/nonexistent/e.vec"), Error);
}

TEST(EncodeSentence, SpecExamples) {
  const auto t = cat_dog();
  const std::vector<std::string> one = {"cat"}, two = {"cat", "dog"}, oov = {"cat", "unseen", "cat"};
  EXPECT_EQ(encode_sentence(t, one), vec({1, 0, 0}));
  EXPECT_EQ(encode_sentence(t, two), vec({1, 1, 0}));
  EncodeStats st;
  EXPECT_EQ(encode_sentence(t, oov, &st), vec({2, 0, 0}));
  EXPECT_EQ(st.tokens, 3u);
  EXPECT_EQ(st.out_of_vocabulary, 1u);
}

TEST(EncodeSentence, EmptyAndFullyUnknownGiveZero) {
  const auto t = cat_dog();
  const std::vector<std::string> none, unknown = {"x", "y"};
  EXPECT_EQ(encode_sentence(t, none), Vector::Zero(3));
  EXPECT_EQ(encode_sentence(t, unknown), Vector::Zero(3));
}

TEST(EncodeSentence, PermutationInvariantAndAdditive) {
  EmbeddingTable t(4);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<std::string> vocab;
  for (int i = 0; i < 12; ++i) {
    vocab.push_back("w" + std::to_string(i));
    t.insert(vocab.back(), vec({u(rng), u(rng), u(rng), u(rng)}));
  }
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::string> a, b;
    for (int i = 0; i < 5; ++i) a.push_back(vocab[rng() % vocab.size()]);
    for (int i = 0; i < 4; ++i) b.push_back(trial % 2 ? "oov" : vocab[rng() % vocab.size()]);
    auto shuffled = a;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    EXPECT_TRUE(encode_sentence(t, a).isApprox(encode_sentence(t, shuffled), 1e-12));
    auto ab = a;
    ab.insert(ab.end(), b.begin(), b.end());
    EXPECT_TRUE(encode_sentence(t, ab).isApprox(encode_sentence(t, a) + encode_sentence(t, b), 1e-12));
  }
}

TEST(Tokenize, LowerStripAndWhitespace) {
  EXPECT_EQ(tokenize("The man feels ANGRY!"), (std::vector<std::string>{"the", "man", "feels", "angry"}));
  EXPECT_EQ(tokenize("  a  ,  b\t"), (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(tokenize("He's sad.", Tokenizer::whitespace), (std::vector<std::string>{"He's", "sad."}));
}

TEST(CosineDistance, SpecExamples) {
  EXPECT_DOUBLE_EQ(cosine_distance(vec({1, 0}), vec({1, 0})), 0.0);
  EXPECT_DOUBLE_EQ(cosine_distance(vec({1, 0}), vec({0, 1})), 1.0);
  EXPECT_DOUBLE_EQ(cosine_distance(vec({1, 0}), vec({-1, 0})), 2.0);
}

TEST(CosineDistance, ZeroNormAndMismatch) {
  EXPECT_EQ(cosine_distance(vec({0, 0}), vec({1, 0})), 1.0);
  EXPECT_EQ(cosine_distance(vec({0, 0}), vec({0, 0})), 1.0);
  EXPECT_THROW(cosine_distance(vec({1, 0}), vec({1, 0, 0})), DimensionMismatch);
}

TEST(CosineDistance, SelfSymmetricAndScaleInvariant) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int i = 0; i < 200; ++i) {
    const Vector a = vec({u(rng), u(rng), u(rng)});
    const Vector b = vec({u(rng), u(rng), u(rng)});
    const double c = std::abs(u(rng)) + 0.1;
    EXPECT_NEAR(cosine_distance(a, a), 0.0, 1e-12);
    EXPECT_DOUBLE_EQ(cosine_distance(a, b), cosine_distance(b, a));
    EXPECT_NEAR(cosine_distance(c * a, b), cosine_distance(a, b), 1e-12);
    const double d = cosine_distance(a, b);
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, 2.0);
  }
}
