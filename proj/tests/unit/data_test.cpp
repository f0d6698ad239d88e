#include <gtest/gtest.h>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <string>
#include <vector>

#include "sybilsim/data.hpp"
#include "sybilsim/errors.hpp"

using namespace sybilsim;
namespace fs = std::filesystem;

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v >> 24));
  out.push_back(static_cast<char>(v >> 16));
  out.push_back(static_cast<char>(v >> 8));
  out.push_back(static_cast<char>(v));
}

std::string idx_images(const std::vector<std::vector<std::uint8_t>>& images, std::uint32_t rows,
                       std::uint32_t cols, std::uint32_t magic = 0x803) {
  std::string out;
  put_u32(out, magic);
  put_u32(out, static_cast<std::uint32_t>(images.size()));
  put_u32(out, rows);
  put_u32(out, cols);
  for (const auto& img : images) out.append(img.begin(), img.end());
  return out;
}

std::string idx_labels(const std::vector<std::uint8_t>& labels, std::uint32_t magic = 0x801) {
  std::string out;
  put_u32(out, magic);
  put_u32(out, static_cast<std::uint32_t>(labels.size()));
  out.append(labels.begin(), labels.end());
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class IdxFiles : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("sybilsim_idx_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
            "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write(const std::string& name, const std::string& bytes) {
    const fs::path p = dir_ / name;
    std::ofstream(p, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    return p;
  }

  fs::path dir_;
};

// 2x2 images; label pattern 0,1,2,0,1,2,...
std::vector<std::vector<std::uint8_t>> sample_images(std::size_t n) {
  std::vector<std::vector<std::uint8_t>> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({static_cast<std::uint8_t>(i), 0, 255, static_cast<std::uint8_t>(3 * i)});
  }
  return out;
}

std::vector<std::uint8_t> sample_labels(std::size_t n) {
  std::vector<std::uint8_t> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(static_cast<std::uint8_t>(i % 3));
  return out;
}

}  // namespace

TEST(Synthetic, SameSeedBitwiseIdentical) {
  SyntheticSpec spec;
  spec.seed = 99;
  const auto a = generate_synthetic(spec);
  const auto b = generate_synthetic(spec);
  EXPECT_EQ(a.first.features, b.first.features);
  EXPECT_EQ(a.first.labels, b.first.labels);
  EXPECT_EQ(a.second.features, b.second.features);
  spec.seed = 100;
  EXPECT_NE(generate_synthetic(spec).first.features, a.first.features);
}

TEST(Synthetic, SplitArithmetic) {
  SyntheticSpec spec{10, 5, 10, 0.3, 1};
  const auto [train, test] = generate_synthetic(spec);
  EXPECT_EQ(train.size(), 80u);
  EXPECT_EQ(test.size(), 20u);
  for (int c = 0; c < 10; ++c) {
    EXPECT_EQ(train.count_of(c), 8u);
    EXPECT_EQ(test.count_of(c), 2u);
  }
  EXPECT_EQ(train.provenance, Provenance::synthetic);
}

TEST(Synthetic, FeaturesInUnitInterval) {
  const auto [train, test] = generate_synthetic(SyntheticSpec{4, 6, 20, 1.5, 2});
  for (const auto* ds : {&train, &test}) {
    for (double x : ds->features) {
      EXPECT_GE(x, 0.0);
      EXPECT_LE(x, 1.0);
    }
  }
}

TEST(Synthetic, ZeroSpreadMakesClassesConstant) {
  const auto [train, test] = generate_synthetic(SyntheticSpec{3, 4, 5, 0.0, 3});
  for (int c = 0; c < 3; ++c) {
    const auto idx = train.indices_of(c);
    for (std::size_t i : idx) {
      EXPECT_TRUE(std::equal(train.row(i).begin(), train.row(i).end(), train.row(idx[0]).begin()));
    }
  }
}

TEST(Synthetic, RejectsDegenerateSpecs) {
  EXPECT_THROW(generate_synthetic(SyntheticSpec{1, 4, 10, 0.1, 1}), ConfigError);
  EXPECT_THROW(generate_synthetic(SyntheticSpec{3, 4, 1, 0.1, 1}), ConfigError);
}

TEST(PartitionNonIid, ShardPerClass) {
  const auto [train, test] = generate_synthetic(SyntheticSpec{10, 4, 20, 0.2, 4});
  const auto shards = partition_non_iid(train, 10);
  ASSERT_EQ(shards.size(), 10u);
  std::set<std::size_t> seen;
  for (std::size_t i = 0; i < shards.size(); ++i) {
    EXPECT_EQ(shards[i].owner, i);
    EXPECT_FALSE(shards[i].label_override.has_value());
    EXPECT_EQ(shards[i].indices.size(), 16u);
    for (std::size_t idx : shards[i].indices) {
      EXPECT_EQ(train.labels[idx], static_cast<int>(i));
      EXPECT_TRUE(seen.insert(idx).second);
    }
  }
  EXPECT_EQ(seen.size(), train.size());
}

TEST(PartitionNonIid, ClientCountMustMatchClasses) {
  const auto [train, test] = generate_synthetic(SyntheticSpec{10, 4, 20, 0.2, 4});
  EXPECT_THROW(partition_non_iid(train, 9), ConfigError);
}

TEST(SybilShards, SingleSybilGetsEverything) {
  const auto [train, test] = generate_synthetic(SyntheticSpec{10, 4, 20, 0.2, 5});
  const auto shards = build_sybil_shards(train, {1, 7, 1, 3, false, 10});
  ASSERT_EQ(shards.size(), 1u);
  auto got = shards[0].indices;
  std::sort(got.begin(), got.end());
  EXPECT_EQ(got, train.indices_of(1));
  EXPECT_EQ(shards[0].label_override, 7);
  EXPECT_EQ(shards[0].owner, 10u);
}

TEST(SybilShards, NineExamplesSplitFiveFour) {
  Dataset ds;
  ds.input_dim = 1;
  ds.num_classes = 2;
  for (int i = 0; i < 9; ++i) {
    ds.features.push_back(0.5);
    ds.labels.push_back(0);
  }
  ds.features.push_back(0.1);
  ds.labels.push_back(1);
  const auto shards = build_sybil_shards(ds, {0, 1, 2, 8, false, 0});
  ASSERT_EQ(shards.size(), 2u);
  EXPECT_EQ(shards[0].indices.size(), 5u);
  EXPECT_EQ(shards[1].indices.size(), 4u);
}

TEST(SybilShards, DisjointCoverOfSource) {
  const auto [train, test] = generate_synthetic(SyntheticSpec{10, 4, 23, 0.2, 6});
  const auto shards = build_sybil_shards(train, {2, 5, 4, 77, false, 0});
  std::vector<std::size_t> all;
  for (const auto& s : shards) {
    EXPECT_EQ(s.label_override, 5);
    all.insert(all.end(), s.indices.begin(), s.indices.end());
  }
  std::sort(all.begin(), all.end());
  EXPECT_TRUE(std::adjacent_find(all.begin(), all.end()) == all.end());
  EXPECT_EQ(all, train.indices_of(2));
  const auto [lo, hi] = std::minmax_element(shards.begin(), shards.end(), [](auto& a, auto& b) {
    return a.indices.size() < b.indices.size();
  });
  EXPECT_LE(hi->indices.size() - lo->indices.size(), 1u);
}

TEST(SybilShards, DuplicateModeGivesEveryoneTheFullSet) {
  const auto [train, test] = generate_synthetic(SyntheticSpec{10, 4, 20, 0.2, 6});
  const auto shards = build_sybil_shards(train, {2, 5, 3, 77, true, 0});
  for (const auto& s : shards) EXPECT_EQ(s.indices, train.indices_of(2));
}

TEST(SybilShards, DeterministicAndSeedDependent) {
  const auto [train, test] = generate_synthetic(SyntheticSpec{10, 4, 40, 0.2, 6});
  const auto a = build_sybil_shards(train, {2, 5, 3, 1, false, 0});
  const auto b = build_sybil_shards(train, {2, 5, 3, 1, false, 0});
  const auto c = build_sybil_shards(train, {2, 5, 3, 2, false, 0});
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(a[i].indices, b[i].indices);
  EXPECT_NE(a[0].indices, c[0].indices);
}

TEST(SybilShards, PreconditionsAreConfigErrors) {
  const auto [train, test] = generate_synthetic(SyntheticSpec{10, 4, 5, 0.2, 6});
  EXPECT_THROW(build_sybil_shards(train, {3, 3, 1, 0, false, 0}), ConfigError);
  EXPECT_THROW(build_sybil_shards(train, {3, 4, 0, 0, false, 0}), ConfigError);
  EXPECT_THROW(build_sybil_shards(train, {3, 4, 5, 0, false, 0}), ConfigError);
  EXPECT_THROW(build_sybil_shards(train, {3, 10, 1, 0, false, 0}), ConfigError);
}

TEST(Shard, TrainingViewReportsOverride) {
  const auto [train, test] = generate_synthetic(SyntheticSpec{10, 4, 20, 0.2, 7});
  const auto shards = build_sybil_shards(train, {1, 7, 2, 3, false, 0});
  for (const auto& s : shards) {
    const auto view = s.training_view(train);
    ASSERT_EQ(view.size(), s.indices.size());
    for (std::size_t i = 0; i < view.size(); ++i) {
      EXPECT_EQ(view[i].label, 7);
      EXPECT_EQ(view[i].features.data(), train.row(s.indices[i]).data());
    }
  }
}

TEST_F(IdxFiles, LoadsPixelsScaledAndLimitedPerClass) {
  const auto img = write("img", idx_images(sample_images(9), 2, 2));
  const auto lab = write("lab", idx_labels(sample_labels(9)));
  const auto ds = load_idx(img, lab, 2);
  EXPECT_EQ(ds.size(), 6u);
  EXPECT_EQ(ds.input_dim, 4u);
  EXPECT_EQ(ds.num_classes, 3u);
  EXPECT_EQ(ds.image_rows, 2u);
  EXPECT_EQ(ds.provenance, Provenance::idx_file);
  EXPECT_EQ(ds.labels, (std::vector<int>{0, 1, 2, 0, 1, 2}));
  EXPECT_DOUBLE_EQ(ds.row(1)[0], 1.0 / 255.0);
  EXPECT_DOUBLE_EQ(ds.row(1)[2], 1.0);
}

TEST_F(IdxFiles, WrongMagicNamesField) {
  const auto img = write("img", idx_images(sample_images(3), 2, 2));
  const auto lab = write("lab", idx_labels(sample_labels(3), 0x803));
  try {
    load_idx(img, lab, 0);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos) << e.what();
  }
}

TEST_F(IdxFiles, CountMismatchNamesField) {
  const auto img = write("img", idx_images(sample_images(4), 2, 2));
  const auto lab = write("lab", idx_labels(sample_labels(3)));
  try {
    load_idx(img, lab, 0);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("count"), std::string::npos) << e.what();
  }
}

TEST_F(IdxFiles, TruncatedFileIsFormatError) {
  auto bytes = idx_images(sample_images(4), 2, 2);
  bytes.resize(bytes.size() - 3);
  const auto img = write("img", bytes);
  const auto lab = write("lab", idx_labels(sample_labels(4)));
  EXPECT_THROW(load_idx(img, lab, 0), FormatError);
}

TEST_F(IdxFiles, MissingFileIsError) {
  EXPECT_THROW(load_idx(dir_ / "nope", dir_ / "nope2", 0), Error);
}

TEST_F(IdxFiles, RewriteReproducesConsumedBytes) {
  const auto images = sample_images(9);
  const auto labels = sample_labels(9);
  const auto img = write("img", idx_images(images, 2, 2));
  const auto lab = write("lab", idx_labels(labels));
  const auto ds = load_idx(img, lab, 100);
  write_idx(ds, dir_ / "img2", dir_ / "lab2");
  EXPECT_EQ(slurp(dir_ / "img2"), slurp(img));
  EXPECT_EQ(slurp(dir_ / "lab2"), slurp(lab));
}
