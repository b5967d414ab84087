#include <gtest/gtest.h>

#include <set>

#include "klshc/dataset.hpp"
#include "klshc/kmeans.hpp"
#include "support/test_util.hpp"

using namespace klshc;

namespace {

std::vector<unsigned char> idx_images(std::uint32_t magic, std::uint32_t count, std::uint32_t rows,
                                      std::uint32_t cols, const std::vector<unsigned char>& pixels) {
  std::vector<unsigned char> out;
  testutil::put_be32(out, magic);
  testutil::put_be32(out, count);
  testutil::put_be32(out, rows);
  testutil::put_be32(out, cols);
  out.insert(out.end(), pixels.begin(), pixels.end());
  return out;
}

std::vector<unsigned char> idx_labels(std::uint32_t magic, std::uint32_t count,
                                      const std::vector<unsigned char>& labels) {
  std::vector<unsigned char> out;
  testutil::put_be32(out, magic);
  testutil::put_be32(out, count);
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

}  // namespace

TEST(LoadIdx, ZeroImages) {
  testutil::TempDir dir("idx");
  testutil::write_bytes(dir / "img", idx_images(2051, 4, 2, 2, std::vector<unsigned char>(16, 0)));
  testutil::write_bytes(dir / "lab", idx_labels(2049, 4, {0, 1, 2, 3}));
  const Dataset ds = load_idx(dir / "img", dir / "lab");
  EXPECT_EQ(ds.n(), 4u);
  EXPECT_EQ(ds.d(), 4u);
  EXPECT_EQ(ds.features().cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(ds.labels(), (std::vector<int>{0, 1, 2, 3}));
}

TEST(LoadIdx, PixelScalingIsRowMajor) {
  testutil::TempDir dir("idx");
  testutil::write_bytes(dir / "img", idx_images(2051, 1, 2, 2, {255, 51, 0, 102}));
  testutil::write_bytes(dir / "lab", idx_labels(2049, 1, {7}));
  const Dataset ds = load_idx(dir / "img", dir / "lab");
  EXPECT_DOUBLE_EQ(ds.features()(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(ds.features()(0, 1), 0.2);
  EXPECT_DOUBLE_EQ(ds.features()(0, 2), 0.0);
  EXPECT_DOUBLE_EQ(ds.features()(0, 3), 0.4);
  EXPECT_EQ(ds.label(0), 7);
}

TEST(LoadIdx, Errors) {
  testutil::TempDir dir("idx");
  testutil::write_bytes(dir / "img", idx_images(2051, 2, 2, 2, std::vector<unsigned char>(8, 1)));
  testutil::write_bytes(dir / "bad_magic", idx_images(2049, 2, 2, 2, std::vector<unsigned char>(8, 1)));
  testutil::write_bytes(dir / "lab", idx_labels(2049, 2, {0, 1}));
  testutil::write_bytes(dir / "lab3", idx_labels(2049, 3, {0, 1, 2}));
  testutil::write_bytes(dir / "short", idx_images(2051, 2, 2, 2, std::vector<unsigned char>(5, 1)));
  testutil::write_bytes(dir / "stub", {0, 0});

  EXPECT_KLSHC_ERROR(load_idx(dir / "bad_magic", dir / "lab"), ErrorKind::format);
  EXPECT_KLSHC_ERROR(load_idx(dir / "img", dir / "img"), ErrorKind::format);
  EXPECT_KLSHC_ERROR(load_idx(dir / "img", dir / "lab3"), ErrorKind::consistency);
  EXPECT_KLSHC_ERROR(load_idx(dir / "short", dir / "lab"), ErrorKind::io);
  EXPECT_KLSHC_ERROR(load_idx(dir / "stub", dir / "lab"), ErrorKind::io);
  EXPECT_KLSHC_ERROR(load_idx(dir / "missing", dir / "lab"), ErrorKind::io);
}

TEST(LoadIdx, BundledMnistSubset) {
  const std::filesystem::path root = KLSHC_MNIST_DIR;
  const Dataset ds = load_idx(root / "mnist10k-images-idx3-ubyte.gz", root / "mnist10k-labels-idx1-ubyte.gz");
  EXPECT_EQ(ds.n(), 10000u);
  EXPECT_EQ(ds.d(), 784u);
  std::set<int> classes(ds.labels().begin(), ds.labels().end());
  EXPECT_EQ(classes, (std::set<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}));
  EXPECT_GE(ds.features().minCoeff(), 0.0);
  EXPECT_LE(ds.features().maxCoeff(), 1.0);
}

TEST(Csv, RoundTripProperty) {
  testutil::TempDir dir("csv");
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto n = static_cast<Eigen::Index>(1 + rng.below(30));
    const auto d = static_cast<Eigen::Index>(1 + rng.below(8));
    Matrix x = testutil::random_matrix(rng, n, d, std::pow(10.0, static_cast<double>(rng.below(7)) - 3));
    std::vector<int> labels;
    for (Eigen::Index i = 0; i < n; ++i) labels.push_back(static_cast<int>(rng.below(5)) - 1);
    const Dataset ds(x, labels);
    save_csv(ds, dir / "a.csv", true);
    const Dataset back = load_csv(dir / "a.csv", true);
    ASSERT_EQ(back.n(), ds.n());
    ASSERT_EQ(back.d(), ds.d());
    EXPECT_LE((back.features() - ds.features()).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_EQ(back.labels(), ds.labels());

    save_csv(ds, dir / "b.csv", false);
    const Dataset bare = load_csv(dir / "b.csv", false);
    EXPECT_FALSE(bare.has_labels());
    EXPECT_EQ(bare.d(), ds.d());
  }
}

TEST(Csv, MalformedInput) {
  testutil::TempDir dir("csv");
  {
    std::ofstream(dir / "ragged.csv") << "1,2,3\n4,5\n";
    std::ofstream(dir / "text.csv") << "1,abc\n";
  }
  EXPECT_KLSHC_ERROR(load_csv(dir / "ragged.csv", false), ErrorKind::format);
  EXPECT_KLSHC_ERROR(load_csv(dir / "text.csv", false), ErrorKind::format);
  EXPECT_KLSHC_ERROR(load_csv(dir / "nope.csv", false), ErrorKind::io);
}

TEST(SynthBlobs, DegenerateSpread) {
  const Dataset ds = synth_blobs(1, 5, 3, 1e-12, 9);
  ASSERT_EQ(ds.n(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(ds.label(i), 0);
    EXPECT_LE((ds.row(i) - ds.row(0)).norm(), 1e-10);
  }
}

TEST(SynthBlobs, DeterministicAndSeedSensitive) {
  const Dataset a = synth_blobs(3, 20, 4, 0.5, 42);
  const Dataset b = synth_blobs(3, 20, 4, 0.5, 42);
  const Dataset c = synth_blobs(3, 20, 4, 0.5, 43);
  EXPECT_EQ(0, std::memcmp(a.features().data(), b.features().data(), sizeof(double) * a.features().size()));
  EXPECT_EQ(a.labels(), b.labels());
  EXPECT_NE(a.features(), c.features());
}

TEST(SynthBlobs, Errors) {
  EXPECT_KLSHC_ERROR(synth_blobs(0, 5, 2, 1.0, 1), ErrorKind::parameter);
  EXPECT_KLSHC_ERROR(synth_blobs(2, 0, 2, 1.0, 1), ErrorKind::parameter);
  EXPECT_KLSHC_ERROR(synth_blobs(2, 5, 0, 1.0, 1), ErrorKind::parameter);
  EXPECT_KLSHC_ERROR(synth_blobs(2, 5, 2, 0.0, 1), ErrorKind::parameter);
}

TEST(SynthBlobs, KMeansRecoversSeparatedBlobs) {
  // Find a seed whose two centers are at least 10 apart, then check that
  // k-means labels match the truth up to relabeling.
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Dataset ds = synth_blobs(2, 100, 2, 0.1, seed);
    const double gap = (ds.row(0) - ds.row(100)).norm();
    if (gap < 10.5) continue;
    const auto res = kmeans(ds, KMeansConfig{2, 100, 1e-9, seed, 1, 1});
    std::size_t same = 0, swapped = 0;
    for (std::size_t i = 0; i < ds.n(); ++i) {
      same += res.assignment[i] == static_cast<std::size_t>(ds.label(i));
      swapped += res.assignment[i] == static_cast<std::size_t>(1 - ds.label(i));
    }
    EXPECT_EQ(std::max(same, swapped), ds.n());
    return;
  }
  FAIL() << "no seed produced separated centers";
}

TEST(MakeConstraints, ClosedFormCounts) {
  const Dataset ds = synth_blobs(3, 6, 2, 1.0, 3);
  auto cs = make_constraints(ds, {0, 1}, 3, 1);
  EXPECT_EQ(cs.similar.size(), 6u);
  EXPECT_EQ(cs.dissimilar.size(), 9u);
  cs = make_constraints(ds, {2}, 4, 1);
  EXPECT_EQ(cs.similar.size(), 6u);
  EXPECT_EQ(cs.dissimilar.size(), 0u);
  cs = make_constraints(ds, {0, 1, 2}, 2, 1);
  EXPECT_EQ(cs.similar.size(), 3u);
  EXPECT_EQ(cs.dissimilar.size(), 12u);
}

TEST(MakeConstraints, PropertyRandomInputs) {
  Rng rng(77);
  for (int trial = 0; trial < 30; ++trial) {
    const int k = 1 + static_cast<int>(rng.below(5));
    const int n_per = 2 + static_cast<int>(rng.below(8));
    const Dataset ds = synth_blobs(k, n_per, 2, 1.0, rng.next());
    std::set<int> labeled;
    for (int c = 0; c < k; ++c)
      if (rng.below(2) || labeled.empty()) labeled.insert(c);
    const std::size_t per = 1 + rng.below(static_cast<std::uint64_t>(n_per));
    const auto cs = make_constraints(ds, labeled, per, rng.next());
    const std::size_t c = labeled.size();
    EXPECT_EQ(cs.similar.size(), c * per * (per - 1) / 2);
    EXPECT_EQ(cs.dissimilar.size(), c * (c - 1) / 2 * per * per);
    EXPECT_NO_THROW(cs.validate(ds.n()));
    for (const auto* set : {&cs.similar, &cs.dissimilar})
      for (auto [i, j] : *set) {
        EXPECT_TRUE(labeled.count(ds.label(i)));
        EXPECT_TRUE(labeled.count(ds.label(j)));
      }
    for (auto [i, j] : cs.similar) EXPECT_EQ(ds.label(i), ds.label(j));
    for (auto [i, j] : cs.dissimilar) EXPECT_NE(ds.label(i), ds.label(j));
  }
}

TEST(MakeConstraints, Errors) {
  const Dataset ds = synth_blobs(2, 3, 2, 1.0, 3);
  EXPECT_KLSHC_ERROR(make_constraints(ds, {0}, 4, 1), ErrorKind::insufficient_data);
  EXPECT_KLSHC_ERROR(make_constraints(ds, {5}, 1, 1), ErrorKind::insufficient_data);
  EXPECT_KLSHC_ERROR(make_constraints(ds, {}, 1, 1), ErrorKind::parameter);
}

TEST(ConstraintSet, ValidateRejectsOverlapAndBadPairs) {
  ConstraintSet cs{{{0, 1}}, {{1, 0}}};
  EXPECT_KLSHC_ERROR(cs.validate(3), ErrorKind::consistency);
  cs = {{{2, 2}}, {}};
  EXPECT_KLSHC_ERROR(cs.validate(3), ErrorKind::parameter);
  cs = {{{0, 5}}, {}};
  EXPECT_KLSHC_ERROR(cs.validate(3), ErrorKind::parameter);
}

TEST(SubsetByClass, SeededAndFiltered) {
  const Dataset ds = synth_blobs(4, 50, 2, 1.0, 8);
  const Dataset a = subset_by_class(ds, {1, 3}, 30, 5);
  const Dataset b = subset_by_class(ds, {1, 3}, 30, 5);
  EXPECT_EQ(a.n(), 30u);
  EXPECT_EQ(a.features(), b.features());
  for (int l : a.labels()) EXPECT_TRUE(l == 1 || l == 3);
  EXPECT_KLSHC_ERROR(subset_by_class(ds, {1}, 51, 5), ErrorKind::insufficient_data);
}
