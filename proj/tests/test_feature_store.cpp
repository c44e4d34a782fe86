#include <gtest/gtest.h>

#include <cstring>
#include <fstream>

#include "hyperscore/feature_store.hpp"
#include "hyperscore/errors.hpp"
#include "test_util.hpp"

using namespace hyperscore;

namespace {

FeatureBundle identity_bundle() {
  FeatureBundle b;
  b.views = {Mat<float>(1, 2)};
  b.views[0] << 1, 0;
  b.text_tokens.resize(1, 2);
  b.text_tokens << 0, 1;
  b.eot_index = 0;
  b.viewpoints = {{0, 0}};
  return b;
}

bool bit_equal(const FeatureBundle& a, const FeatureBundle& b) {
  if (!(a.dims() == b.dims()) || a.eot_index != b.eot_index || !(a.viewpoints == b.viewpoints)) return false;
  for (std::size_t m = 0; m < a.views.size(); ++m)
    if (std::memcmp(a.views[m].data(), b.views[m].data(), a.views[m].size() * sizeof(float)) != 0) return false;
  return std::memcmp(a.text_tokens.data(), b.text_tokens.data(), a.text_tokens.size() * sizeof(float)) == 0;
}

}  // namespace

TEST(FeatureContainer, FullScaleDims) {
  const FeatureBundle src = synth_toy_bundle(3, {6, 196, 77, 512});
  const FeatureBundle b = decode_feature_bundle(encode_feature_bundle(src));
  ASSERT_EQ(b.views.size(), 6u);
  for (const auto& v : b.views) {
    EXPECT_EQ(v.rows(), 196);
    EXPECT_EQ(v.cols(), 512);
  }
  EXPECT_EQ(b.text_tokens.rows(), 77);
  EXPECT_TRUE(bit_equal(src, b));
}

TEST(FeatureContainer, IdentityPayload) {
  const auto b = decode_feature_bundle(encode_feature_bundle(identity_bundle()));
  EXPECT_EQ(b.views[0](0, 0), 1.0f);
  EXPECT_EQ(b.views[0](0, 1), 0.0f);
  EXPECT_EQ(b.text_tokens(0, 1), 1.0f);
}

TEST(FeatureContainer, ShortPayloadIsDimensionError) {
  auto bytes = encode_feature_bundle(identity_bundle());
  bytes.resize(bytes.size() - 4);
  EXPECT_THROW(decode_feature_bundle(bytes), DimensionError);
}

TEST(FeatureContainer, BadMagicAndTruncatedHeader) {
  auto bytes = encode_feature_bundle(identity_bundle());
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_feature_bundle(bad), FormatError);
  bytes.resize(10);
  EXPECT_THROW(decode_feature_bundle(bytes), FormatError);
  EXPECT_THROW(decode_feature_bundle({}), FormatError);
}

TEST(FeatureContainer, NonFiniteIsDataError) {
  auto b = identity_bundle();
  auto bytes = encode_feature_bundle(b);
  const float nan = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(bytes.data() + bytes.size() - 4, &nan, 4);
  EXPECT_THROW(decode_feature_bundle(bytes), DataError);
}

TEST(FeatureContainer, FileRoundTripUsesStem) {
  const auto dir = hstest::temp_dir("fs_roundtrip");
  const auto src = synth_toy_bundle(11, {2, 5, 4, 8});
  write_feature_bundle(src, dir / "abc.hsf");
  const auto b = load_feature_bundle(dir / "abc.hsf");
  EXPECT_EQ(b.sample_id, "abc");
  EXPECT_TRUE(bit_equal(src, b));
  EXPECT_THROW(load_feature_bundle(dir / "missing.hsf"), Error);
}

TEST(FeatureBundleInvariants, Violations) {
  auto b = identity_bundle();
  b.eot_index = 1;
  EXPECT_THROW(b.validate(), DimensionError);
  b = identity_bundle();
  b.views.push_back(Mat<float>::Zero(2, 2));
  b.viewpoints.push_back({});
  EXPECT_THROW(b.validate(), DimensionError);
  b = identity_bundle();
  b.text_tokens = Mat<float>::Zero(1, 3);
  EXPECT_THROW(b.validate(), DimensionError);
}

TEST(SynthToy, Deterministic) {
  const FeatureDims d{2, 4, 3, 6};
  EXPECT_TRUE(bit_equal(synth_toy_bundle(7, d), synth_toy_bundle(7, d)));
  EXPECT_FALSE(bit_equal(synth_toy_bundle(7, d), synth_toy_bundle(8, d)));
}

TEST(SynthToy, BoundedAndValid) {
  const auto b = synth_toy_bundle(1, {3, 10, 5, 16});
  b.validate();
  for (const auto& v : b.views) EXPECT_LE(v.cwiseAbs().maxCoeff(), 1.0f);
  EXPECT_LE(b.text_tokens.cwiseAbs().maxCoeff(), 1.0f);
  EXPECT_EQ(b.eot_index, 4u);
}

TEST(SynthToy, ZeroDimRejected) {
  EXPECT_THROW(synth_toy_bundle(1, {0, 1, 1, 1}), ArgumentError);
  EXPECT_THROW(synth_toy_bundle(1, {1, 1, 1, 0}), ArgumentError);
}

TEST(ConcatViews, StacksInOrder) {
  const auto b = synth_toy_bundle(5, {2, 3, 2, 4});
  const Mat<double> c = concat_views<double>(b);
  ASSERT_EQ(c.rows(), 6);
  EXPECT_EQ(c.topRows(3), b.views[0].cast<double>());
  EXPECT_EQ(c.bottomRows(3), b.views[1].cast<double>());
  const auto one = synth_toy_bundle(5, {1, 3, 2, 4});
  EXPECT_EQ(concat_views<float>(one), one.views[0]);
  EXPECT_EQ(concat_views<float>(synth_toy_bundle(2, {6, 196, 1, 4})).rows(), 1176);
}

TEST(Viewpoints, CameraTable) {
  const auto six = default_viewpoints(6);
  ASSERT_EQ(six.size(), 6u);
  EXPECT_EQ(six[1], (Viewpoint{0, 90}));
  EXPECT_EQ(six[4], (Viewpoint{90, 0}));
  for (std::uint32_t m : {4u, 9u, 12u, 16u, 5u}) EXPECT_EQ(default_viewpoints(m).size(), m);
}

TEST(Manifest, RoundTripAndValidation) {
  const auto dir = hstest::temp_dir("manifest");
  DatasetManifest m;
  m.samples = {{"a", "p0", "m0", "a.hsf"}, {"b", "p1", "m0", "b.hsf"}};
  m.prompt_categories = {{"p0", "Basic"}, {"p1", "Spatial"}};
  write_manifest(m, dir / "manifest.json");
  const auto r = load_manifest(dir / "manifest.json");
  EXPECT_EQ(r.samples.size(), 2u);
  EXPECT_EQ(r.find("b").prompt_id, "p1");
  EXPECT_EQ(r.dimension_names.size(), 4u);
  EXPECT_THROW(r.find("zzz"), DataError);

  auto dup = m;
  dup.samples.push_back(m.samples[0]);
  EXPECT_THROW(dup.validate(), DataError);
  auto nocat = m;
  nocat.prompt_categories.erase("p1");
  EXPECT_THROW(nocat.validate(), DataError);
  auto badcat = m;
  badcat.prompt_categories["p1"] = "Whimsical";
  EXPECT_THROW(badcat.validate(), DataError);

  std::ofstream(dir / "broken.json") << "{ not json";
  EXPECT_THROW(load_manifest(dir / "broken.json"), FormatError);
}
