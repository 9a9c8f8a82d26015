#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "json.hpp"

#include "core/evaluation.hpp"
#include "expect_error.hpp"
#include "fixtures.hpp"

namespace {

using cl::ErrorCode;

TEST(Metrics, Accuracy) {
  const std::vector<int> pred{0, 1, 1}, gold{0, 1, 0};
  EXPECT_DOUBLE_EQ(cl::accuracy(pred, gold), 2.0 / 3.0);
  EXPECT_CL_ERROR(cl::accuracy(pred, std::vector<int>{0}), ErrorCode::kShape);
}

TEST(Metrics, WeightedF1) {
  const std::vector<int> pred{0, 0, 1, 1}, gold{0, 1, 0, 1};
  EXPECT_DOUBLE_EQ(cl::weighted_f1(pred, gold), 0.5);
  // Class 0: p=1 r=1/2 f=2/3, support 2; class 1: p=1/2 r=1 f=2/3, support 1.
  const std::vector<int> pred2{0, 1, 1}, gold2{0, 0, 1};
  EXPECT_NEAR(cl::weighted_f1(pred2, gold2), 2.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(cl::weighted_f1(gold, gold), 1.0);
}

TEST(Metrics, Agreement) {
  const std::vector<int> a{0, 1, 2}, b{0, 1, 1};
  EXPECT_DOUBLE_EQ(cl::agreement(a, b), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(cl::agreement(a, a), 1.0);
}

TEST(Metrics, InvariantUnderRelabelling) {
  const std::vector<int> pred{0, 2, 1, 1, 0, 2, 2}, gold{0, 1, 1, 2, 0, 2, 1};
  const int perm[] = {2, 0, 1};
  std::vector<int> p2, g2;
  for (int x : pred) p2.push_back(perm[x]);
  for (int x : gold) g2.push_back(perm[x]);
  EXPECT_DOUBLE_EQ(cl::accuracy(p2, g2), cl::accuracy(pred, gold));
  EXPECT_NEAR(cl::weighted_f1(p2, g2), cl::weighted_f1(pred, gold), 1e-15);
}

TEST(Metrics, CrossEntropy) {
  const std::vector<cl::Vector> probs{(cl::Vector(2) << 0.5, 0.5).finished(),
                                      (cl::Vector(2) << 0.25, 0.75).finished()};
  const std::vector<int> gold{0, 1};
  EXPECT_NEAR(cl::xent_loss(probs, gold), (std::log(2.0) + std::log(4.0 / 3.0)) / 2.0, 1e-15);
}

cl::LabeledSet blobs(std::size_t n, std::uint64_t seed) {
  cl::Xoshiro256 rng(seed);
  cl::LabeledSet set;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    cl::Vector x(4);
    for (int j = 0; j < 4; ++j) x(j) = rng.uniform(-1.0, 1.0) + (label == 0 ? -3.0 : 3.0);
    set.features.push_back(x);
    set.labels.push_back(label);
  }
  return set;
}

TEST(TrainHead, SeparableTwoClassProblem) {
  const auto train = blobs(80, 1), val = blobs(20, 2), test = blobs(100, 3);
  const auto head = cl::train_head(train, val);
  EXPECT_EQ(head.class_count(), 2);
  EXPECT_EQ(head.input_dim(), 4);
  const auto report = cl::evaluate(head, test.features, test.labels);
  EXPECT_GE(report.accuracy, 0.99);
  EXPECT_EQ(report.count, 100u);
}

TEST(TrainHead, DeterministicForFixedSeed) {
  const auto train = blobs(40, 1), val = blobs(10, 2);
  cl::HeadConfig config;
  config.seed = 5;
  const auto a = cl::train_head(train, val, config);
  const auto b = cl::train_head(train, val, config);
  EXPECT_EQ(a.hidden_weight(), b.hidden_weight());
  EXPECT_EQ(a.output_bias(), b.output_bias());
}

TEST(TrainHead, InvalidInputs) {
  const auto train = blobs(10, 1);
  EXPECT_CL_ERROR(cl::train_head(train, cl::LabeledSet{}), ErrorCode::kInvalidSplit);
  EXPECT_CL_ERROR(cl::train_head(cl::LabeledSet{}, train), ErrorCode::kInvalidSplit);
  cl::LabeledSet one = train;
  for (auto& l : one.labels) l = 1;
  EXPECT_CL_ERROR(cl::train_head(one, train), ErrorCode::kDegenerateTask);
}

TEST(Head, RejectsInconsistentShapesAndInputs) {
  EXPECT_CL_ERROR(cl::ClassificationHead(cl::Vector::Zero(3), cl::Vector::Ones(3),
                                         cl::Matrix::Zero(2, 3), cl::Vector::Zero(2),
                                         cl::Matrix::Zero(1, 2), cl::Vector::Zero(1)),
                  ErrorCode::kShape);
  const cl::ClassificationHead head(cl::Vector::Zero(3), cl::Vector::Ones(3),
                                    cl::Matrix::Zero(2, 3), cl::Vector::Zero(2),
                                    cl::Matrix::Zero(2, 2), cl::Vector::Zero(2));
  EXPECT_CL_ERROR(head.predict(cl::Vector::Zero(4)), ErrorCode::kShape);
  EXPECT_NEAR(head.probabilities(cl::Vector::Zero(3)).sum(), 1.0, 1e-15);
}

TEST(EvalReport, SerializesAgreementOnlyWhenPresent) {
  cl::EvalReport r;
  r.count = 3;
  r.accuracy = 0.5;
  EXPECT_EQ(r.to_key_value().find("agreement"), std::string::npos);
  r.agreement = 0.75;
  EXPECT_NE(r.to_key_value().find("agreement=0.75"), std::string::npos);
  const auto j = nlohmann::json::parse(r.to_json());
  EXPECT_EQ(j["count"], 3);
  EXPECT_DOUBLE_EQ(j["agreement"].get<double>(), 0.75);
}

TEST(BackwardCompat, IdenticalModelsAgreeCompletely) {
  const cl::Model model(cl::LayeredEncoder::build_toy(6, 3, 1));
  cl::Model lossless = model;
  lossless.install(fixtures::orthonormal_layer(6, 1, 2));
  const auto texts = fixtures::random_texts(30, 1);
  std::vector<int> labels;
  for (std::size_t i = 0; i < texts.size(); ++i) labels.push_back(static_cast<int>(i % 2));
  cl::LabeledSet train{cl::model_outputs(model, texts), labels};
  const auto head = cl::train_head(train, train);
  const auto report = cl::backward_compat_eval(head, model, lossless, texts, labels);
  ASSERT_TRUE(report.agreement.has_value());
  EXPECT_DOUBLE_EQ(*report.agreement, 1.0);

  const cl::Model wide(cl::LayeredEncoder::build_toy(7, 3, 1));
  EXPECT_CL_ERROR(cl::backward_compat_eval(head, model, wide, texts, labels), ErrorCode::kShape);
}

TEST(SyntheticTask, DeterministicAndWellFormed) {
  cl::SyntheticTaskConfig config;
  config.classes = 3;
  config.count = 50;
  config.seed = 9;
  const auto a = cl::generate_synthetic_task(config);
  const auto b = cl::generate_synthetic_task(config);
  EXPECT_EQ(a.texts, b.texts);
  EXPECT_EQ(a.labels, b.labels);
  ASSERT_EQ(a.texts.size(), 50u);
  EXPECT_EQ(a.class_names, (std::vector<std::string>{"sports", "business", "science"}));
  std::set<int> seen;
  for (std::size_t i = 0; i < a.texts.size(); ++i) {
    const auto tokens = cl::tokenize(a.texts[i]);
    EXPECT_GE(tokens.size(), 24u);
    EXPECT_LE(tokens.size(), 48u);
    const auto& kw = cl::synthetic_keywords(a.labels[i]);
    bool topical = false;
    for (const auto& t : tokens) topical = topical || std::find(kw.begin(), kw.end(), t) != kw.end();
    EXPECT_TRUE(topical) << a.texts[i];
    seen.insert(a.labels[i]);
  }
  EXPECT_EQ(seen.size(), 3u);
  config.seed = 10;
  EXPECT_NE(cl::generate_synthetic_task(config).texts, a.texts);
}

TEST(SyntheticTask, InvalidConfigurations) {
  cl::SyntheticTaskConfig config;
  config.classes = 1;
  EXPECT_CL_ERROR(cl::generate_synthetic_task(config), ErrorCode::kInvalidConfiguration);
  config.classes = 7;
  EXPECT_CL_ERROR(cl::generate_synthetic_task(config), ErrorCode::kInvalidConfiguration);
  config = {};
  config.topic_probability = 0.0;
  EXPECT_CL_ERROR(cl::generate_synthetic_task(config), ErrorCode::kInvalidConfiguration);
  config = {};
  config.min_tokens = 5;
  config.max_tokens = 4;
  EXPECT_CL_ERROR(cl::generate_synthetic_task(config), ErrorCode::kInvalidConfiguration);
}

}  // namespace
