// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#include <Eigen/Eigenvalues>
#include <cmath>

#include "doctest.h"
#include "oocd/encoder.hpp"
#include "oocd/error.hpp"
#include "oocd/features.hpp"
#include "oocd/pca.hpp"
#include "oocd/rng.hpp"
#include "oocd/store.hpp"
#include "test_support.hpp"

using namespace oocd;

namespace {

const EncoderSet kEncoders{};

// Unit basis vector e_{hot} of the given dim.
std::vector<float> basis(std::uint32_t dim, std::uint32_t hot) {
  std::vector<float> v(dim, 0.0f);
  v[hot] = 1.0f;
  return v;
}

struct Planted {
  Artifact artifact;
  std::string encoder;
  std::uint32_t dim;
  std::uint32_t hot;
};

std::vector<Planted> plant_all(EmbeddingStore& store, const std::string& id) {
  const std::vector<Planted> plan{
      {Artifact::kImage, kEncoders.joint, kJointDim, 1},
      {Artifact::kCaption, kEncoders.joint, kJointDim, 2},
      {Artifact::kCaption, kEncoders.text, kTextDim, 3},
      {Artifact::kGeneratedCaption, kEncoders.text, kTextDim, 4},
      {Artifact::kImage, kEncoders.image, kImageDim, 5},
      {Artifact::kGeneratedImage, kEncoders.image, kImageDim, 6},
  };
  for (const auto& p : plan) {
    store.ensure_partition(p.encoder, p.dim);
    store.put({id, p.artifact, p.encoder, basis(p.dim, p.hot)});
  }
  return plan;
}

}  // namespace

TEST_CASE("channel sets parse and print in fixed order") {
  CHECK(ChannelSet::parse("vit+clip") == ChannelSet{Channel::kClip, Channel::kVit});
  CHECK(ChannelSet::parse("clip+vit").to_string() == "clip+vit");
  CHECK(ChannelSet::all().to_string() == "clip+sbert+vit");
  CHECK_THROWS_AS(ChannelSet::parse("clip+resnet"), ConfigError);
  CHECK_THROWS_AS(ChannelSet::parse(""), ConfigError);
}

TEST_CASE("feature lengths per mode and channel group") {
  const ChannelSet cs{Channel::kClip, Channel::kSbert}, cv{Channel::kClip, Channel::kVit};
  CHECK(expected_feature_length(FeatureMode::kSimilarity, cs) == 2);
  CHECK(expected_feature_length(FeatureMode::kSimilarity, cv) == 2);
  CHECK(expected_feature_length(FeatureMode::kSimilarity, ChannelSet::all()) == 3);
  CHECK(expected_feature_length(FeatureMode::kFeatureMap, {Channel::kClip}) == 1024);
  CHECK(expected_feature_length(FeatureMode::kFeatureMap, cs) == 2560);
  CHECK(expected_feature_length(FeatureMode::kFeatureMap, ChannelSet::all()) == 4608);
}

TEST_CASE("similarity features keep clip, sbert, vit order") {
  const std::vector<SimilarityTriple> t{{"a", 0.9, 0.8, 0.7}, {"b", 0.1, 0.2, 0.3}};
  const std::vector<Label> labels{Label::kPristine, Label::kFalsified};
  const auto all = assemble_similarity_features(t, ChannelSet::all(), &labels);
  REQUIRE(all.size() == 2);
  CHECK(all[0].values == std::vector<double>{0.9, 0.8, 0.7});
  CHECK(all[1].label == Label::kFalsified);
  const auto cv = assemble_similarity_features(t, {Channel::kVit, Channel::kClip});
  CHECK(cv[0].values == std::vector<double>{0.9, 0.7});
  CHECK_FALSE(cv[0].label.has_value());
  CHECK(features_csv(all) == features_csv(assemble_similarity_features(t, ChannelSet::all(), &labels)));
  CHECK(features_csv(all).rfind("sample_id,clip,sbert,vit,label\n", 0) == 0);
  CHECK_THROWS_AS(assemble_similarity_features(t, ChannelSet{}), ShapeMismatch);
}

TEST_CASE("feature maps concatenate the six vectors end to end") {
  const auto dir = testing::scratch_dir("features_map");
  auto store = EmbeddingStore::open(dir);
  const auto plan = plant_all(store, "a");

  const auto f = assemble_feature_map(store, "a", ChannelSet::all(), kEncoders);
  REQUIRE(f.values.size() == 4608);
  std::vector<double> expected;
  for (const auto& p : plan) {
    const auto v = basis(p.dim, p.hot);
    expected.insert(expected.end(), v.begin(), v.end());
  }
  CHECK(f.values == expected);

  const auto clip = assemble_feature_map(store, "a", {Channel::kClip}, kEncoders);
  CHECK(clip.values.size() == 1024);
  CHECK(clip.values[1] == 1.0);
  CHECK(clip.values[512 + 2] == 1.0);
  const auto cs = assemble_feature_map(store, "a", {Channel::kClip, Channel::kSbert}, kEncoders);
  CHECK(cs.values.size() == 2560);
  CHECK(cs.values[1024 + 3] == 1.0);
  CHECK(cs.values[1024 + 768 + 4] == 1.0);
}

TEST_CASE("feature map assembly fails loudly on missing or mis-sized records") {
  const auto dir = testing::scratch_dir("features_map_errors");
  auto store = EmbeddingStore::open(dir);
  CHECK_THROWS_AS(assemble_feature_map(store, "nobody", {Channel::kClip}, kEncoders),
                  MissingRecord);
  EncoderSet odd = kEncoders;
  odd.joint = "small-joint";
  store.ensure_partition("small-joint", 4);
  store.put({"b", Artifact::kImage, "small-joint", {1, 0, 0, 0}});
  store.put({"b", Artifact::kCaption, "small-joint", {0, 1, 0, 0}});
  CHECK_THROWS_AS(assemble_feature_map(store, "b", {Channel::kClip}, odd), DimensionMismatch);
}

TEST_CASE("matrix conversion rejects ragged, unlabeled and non-finite rows") {
  std::vector<FeatureVector> rows(2);
  rows[0].values = {1, 2};
  rows[1].values = {1, 2, 3};
  CHECK_THROWS_AS(to_matrix(rows), ShapeMismatch);
  rows[1].values = {1, NAN};
  CHECK_THROWS_AS(to_matrix(rows), NonFiniteFeature);
  rows[1].values = {3, 4};
  CHECK(to_matrix(rows)(1, 1) == 4.0);
  CHECK_THROWS_AS(to_targets(rows), ShapeMismatch);
}

TEST_CASE("fingerprints track values, labels and order") {
  auto a = testing::gaussian_blobs(20, 3, 2.0, 1);
  auto b = a;
  CHECK(fingerprint(a) == fingerprint(b));
  b[3].values[1] = std::nextafter(b[3].values[1], 10.0);
  CHECK(fingerprint(a) != fingerprint(b));
  b = a;
  std::swap(b[0], b[1]);
  CHECK(fingerprint(a) != fingerprint(b));
  b = a;
  b[0].label = Label::kFalsified;
  CHECK(fingerprint(a) != fingerprint(b));
}

TEST_CASE("PCA matches an eigendecomposition oracle on a 10x5 fixture") {
  Rng rng(3);
  Eigen::MatrixXd x(10, 5);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal() * (1 + i % 5);

  const auto fit = reduce_dimensions(x, 4);
  CHECK(fit.warnings.empty());
  REQUIRE(fit.projection.output_dim() == 4);

  const Eigen::MatrixXd c = x.rowwise() - x.colwise().mean();
  const Eigen::MatrixXd cov = c.transpose() * c / 9.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::VectorXd ev = eig.eigenvalues().reverse();  // descending

  for (Eigen::Index k = 0; k < 4; ++k) {
    CHECK(fit.projection.explained_variance(k) == doctest::Approx(ev(k)).epsilon(1e-9));
    // Each component is an eigenvector of the covariance.
    const Eigen::VectorXd v = fit.projection.components.row(k).transpose();
    CHECK((cov * v - ev(k) * v).norm() <= 1e-9 * ev(0));
  }
  const Eigen::MatrixXd gram = fit.projection.components * fit.projection.components.transpose();
  CHECK((gram - Eigen::MatrixXd::Identity(4, 4)).norm() <= 1e-12);

  // Dropping one component loses exactly the smallest eigenvalue share.
  const Eigen::MatrixXd recon = fit.projection.inverse_transform(fit.transformed);
  const double lost = (x - recon).squaredNorm() / c.squaredNorm();
  const double share = ev(4) / ev.sum();
  CHECK(lost == doctest::Approx(share).epsilon(1e-9));
  CHECK(lost <= share + 1e-12);
}

TEST_CASE("PCA reconstructs data lying in a 2-d subspace") {
  Rng rng(4);
  Eigen::MatrixXd basis(2, 6);
  for (Eigen::Index i = 0; i < basis.size(); ++i) basis.data()[i] = rng.normal();
  Eigen::MatrixXd coeffs(30, 2);
  for (Eigen::Index i = 0; i < coeffs.size(); ++i) coeffs.data()[i] = rng.normal();
  Eigen::RowVectorXd offset(6);
  for (Eigen::Index i = 0; i < 6; ++i) offset(i) = rng.uniform(-5, 5);
  const Eigen::MatrixXd x = (coeffs * basis).rowwise() + offset;

  const auto fit = reduce_dimensions(x, 2);
  const Eigen::MatrixXd recon = fit.projection.inverse_transform(fit.transformed);
  CHECK((x - recon).cwiseAbs().maxCoeff() <= 1e-9);

  // The training mean maps to the origin.
  const Eigen::MatrixXd mean_row = fit.projection.mean.transpose();
  CHECK(fit.projection.transform(mean_row).norm() <= 1e-12);

  // Asking for more components than the rank reduces k with a warning.
  const auto over = reduce_dimensions(x, 4);
  CHECK(over.projection.output_dim() == 2);
  REQUIRE(over.warnings.size() == 1);
  CHECK(over.warnings[0].rfind("DegenerateCovariance", 0) == 0);
}

TEST_CASE("PCA preconditions and persistence") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(8, 3);
  CHECK_THROWS_AS(reduce_dimensions(x, 3), ShapeMismatch);
  CHECK_THROWS_AS(reduce_dimensions(x, 0), ShapeMismatch);
  CHECK_THROWS_AS(reduce_dimensions(x.topRows(1), 2), DegenerateCovariance);
  CHECK_THROWS_AS(reduce_dimensions(Eigen::MatrixXd::Ones(5, 3), 2), DegenerateCovariance);

  const auto fit = reduce_dimensions(x, 2);
  const auto dir = testing::scratch_dir("features_pca_io");
  save_projection(fit.projection, dir / "projection.bin");
  const auto back = load_projection(dir / "projection.bin");
  CHECK(back.mean == fit.projection.mean);
  CHECK(back.components == fit.projection.components);
  CHECK(back.explained_variance == fit.projection.explained_variance);
  CHECK(back.transform(x) == fit.transformed);
  CHECK_THROWS_AS(fit.projection.transform(Eigen::MatrixXd::Zero(2, 5)), ShapeMismatch);
}
