#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "core/encoder.hpp"
#include "core/latent_store.hpp"
#include "core/model.hpp"
#include "expect_error.hpp"
#include "fixtures.hpp"

namespace {

using cl::ErrorCode;

TEST(Tokenize, SplitsOnAnyWhitespace) {
  const auto t = cl::tokenize("  the\tquick \n brown  ");
  ASSERT_EQ(t.size(), 3u);
  EXPECT_EQ(t[0], "the");
  EXPECT_EQ(t[1], "quick");
  EXPECT_EQ(t[2], "brown");
  EXPECT_TRUE(cl::tokenize("   ").empty());
}

TEST(ToyEncoder, SameSeedGivesIdenticalVectors) {
  const auto a = cl::LayeredEncoder::build_toy(8, 3, 42);
  const auto b = cl::LayeredEncoder::build_toy(8, 3, 42);
  const auto fa = a.forward("hello world");
  const auto fb = b.forward("hello world");
  ASSERT_EQ(fa.size(), 3u);
  for (std::size_t i = 0; i < fa.size(); ++i) EXPECT_EQ(fa[i], fb[i]);
}

TEST(ToyEncoder, DifferentSeedsDiffer) {
  const auto a = cl::LayeredEncoder::build_toy(8, 3, 1).forward("hello world");
  const auto b = cl::LayeredEncoder::build_toy(8, 3, 2).forward("hello world");
  EXPECT_NE(a.back(), b.back());
}

TEST(ToyEncoder, RejectsTooSmallConfigurations) {
  EXPECT_CL_ERROR(cl::LayeredEncoder::build_toy(1, 3, 0), ErrorCode::kInvalidConfiguration);
  EXPECT_CL_ERROR(cl::LayeredEncoder::build_toy(8, 1, 0), ErrorCode::kInvalidConfiguration);
}

TEST(ToyEncoder, EmptyTextIsZeroAtEveryLayer) {
  const auto enc = cl::LayeredEncoder::build_toy(6, 4, 3);
  const auto out = enc.forward("");
  ASSERT_EQ(out.size(), 4u);
  for (const auto& v : out) {
    EXPECT_EQ(v.size(), 6);
    EXPECT_TRUE(v.isZero(0.0));
  }
}

TEST(ToyEncoder, EveryLayerHasHiddenDimension) {
  const auto enc = cl::LayeredEncoder::build_toy(5, 3, 9);
  for (const auto& v : enc.forward("a b c d")) EXPECT_EQ(v.size(), 5);
}

TEST(ToyEncoder, WeightsStayInInitRange) {
  const auto enc = cl::LayeredEncoder::build_toy(16, 2, 5);
  const double bound = 1.0 / 4.0;
  for (const auto& layer : enc.layers()) {
    EXPECT_LE(layer.weight.cwiseAbs().maxCoeff(), bound);
    EXPECT_LE(layer.bias.cwiseAbs().maxCoeff(), bound);
  }
}

TEST(ToyEncoder, PoolingIsTokenMean) {
  const auto enc = cl::LayeredEncoder::build_toy(4, 2, 8);
  const auto x = enc.embed_tokens("alpha beta gamma");
  const auto y = enc.apply_layer(0, x);
  cl::Vector expected = (y.col(0) + y.col(1) + y.col(2)) / 3.0;
  EXPECT_TRUE(enc.forward("alpha beta gamma")[0].isApprox(expected, 1e-15));
}

TEST(Slicing, SuffixAfterPrefixIsExactlyTheFullForward) {
  const cl::Model model(cl::LayeredEncoder::build_toy(8, 3, 4));
  for (const auto& text : fixtures::random_texts(20, 1)) {
    const cl::Vector full = model.forward(text);
    for (int k = 1; k < 3; ++k) {
      const auto slice = model.slice_at(k);
      EXPECT_EQ(slice.suffix(slice.prefix(text)), full) << "k=" << k;
    }
  }
}

TEST(Slicing, EncodePrefixIsLayerBeforeSlice) {
  const cl::Model model(cl::LayeredEncoder::build_toy(8, 4, 4));
  const auto layers = model.encoder().forward("market shares fell");
  EXPECT_EQ(model.slice_at(2).encode_prefix("market shares fell"), layers[1]);
  EXPECT_TRUE(model.slice_at(3).encode_prefix("").isZero(0.0));
}

TEST(Slicing, OutOfRangeIndexIsRejected) {
  const cl::Model model(cl::LayeredEncoder::build_toy(8, 3, 4));
  EXPECT_CL_ERROR(model.slice_at(3), ErrorCode::kSliceIndex);
  EXPECT_CL_ERROR(model.slice_at(0), ErrorCode::kSliceIndex);
}

class LatentStoreTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("cl_store_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }

  std::filesystem::path dir_;
};

TEST_F(LatentStoreTest, PutGetAndMissingEntries) {
  cl::LatentStore store(3, 2);
  store.put("t1", 0, cl::Vector::Constant(3, 1.0));
  EXPECT_EQ(store.get("t1", 0), cl::Vector::Constant(3, 1.0));
  EXPECT_CL_ERROR(store.get("t1", 1), ErrorCode::kUnknownConcept);
  EXPECT_CL_ERROR(store.get("t2", 0), ErrorCode::kUnknownConcept);
  EXPECT_CL_ERROR(store.put("t1", 0, cl::Vector::Zero(2)), ErrorCode::kShape);
  EXPECT_CL_ERROR(store.check_complete(), ErrorCode::kParse);
}

TEST_F(LatentStoreTest, TextRoundTripIsExact) {
  cl::LatentStore store(4, 2);
  cl::Xoshiro256 rng(3);
  for (const char* id : {"a", "b", "c"})
    for (int l = 0; l < 2; ++l) store.put(id, l, fixtures::random_unit(4, rng));
  store.save_text(dir_ / "store.tsv");
  const auto back = cl::LatentStore::load(dir_ / "store.tsv");
  EXPECT_EQ(back.ids(), store.ids());
  for (const auto& id : store.ids())
    for (int l = 0; l < 2; ++l) EXPECT_EQ(back.get(id, l), store.get(id, l));
}

TEST_F(LatentStoreTest, BinarySidecarRoundTripsAsFloat32) {
  cl::LatentStore store(3, 1);
  store.put("x", 0, cl::Vector::LinSpaced(3, 0.1, 0.3));
  store.save_binary(dir_ / "store.idx");
  EXPECT_TRUE(std::filesystem::exists(dir_ / "store.idx.bin"));
  EXPECT_EQ(std::filesystem::file_size(dir_ / "store.idx.bin"), 3 * sizeof(float));
  const auto back = cl::LatentStore::load(dir_ / "store.idx");
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(back.get("x", 0)(i), static_cast<double>(static_cast<float>(store.get("x", 0)(i))));
  }
}

TEST_F(LatentStoreTest, ParsesTheDocumentedTextFormat) {
  {
    std::ofstream f(dir_ / "s.tsv");
    f << "CLSTORE v1 2 2\n"
      << "doc1\t0\t1,2\n"
      << "doc1\t1\t0.5,-0.25\n";
  }
  const auto store = cl::LatentStore::load(dir_ / "s.tsv");
  EXPECT_EQ(store.hidden_dim(), 2);
  EXPECT_EQ(store.get("doc1", 1), (cl::Vector(2) << 0.5, -0.25).finished());
}

TEST_F(LatentStoreTest, MalformedLinesNameTheirLocation) {
  {
    std::ofstream f(dir_ / "bad.tsv");
    f << "CLSTORE v1 2 1\n"
      << "doc1\t0\t1,oops\n";
  }
  try {
    cl::LatentStore::load(dir_ / "bad.tsv");
    FAIL() << "expected a parse error";
  } catch (const cl::Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParse);
    EXPECT_NE(std::string(e.what()).find(":2"), std::string::npos) << e.what();
  }
}

}  // namespace
