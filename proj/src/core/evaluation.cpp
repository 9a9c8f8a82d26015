#include "core/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"

#include "core/error.hpp"
#include "core/random.hpp"

namespace cl {

namespace {

Vector softmax(const Vector& z) {
  const double top = z.maxCoeff();
  Vector e = (z.array() - top).exp().matrix();
  return e / e.sum();
}

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) {
    fail(ErrorCode::kShape,
         "length mismatch: " + std::to_string(a) + " vs " + std::to_string(b));
  }
  if (a == 0) fail(ErrorCode::kShape, "empty prediction list");
}

struct HeadParams {
  Matrix w1;
  Vector b1;
  Matrix w2;
  Vector b2;
};

struct AdamState {
  HeadParams m;
  HeadParams v;
  long t = 0;
};

template <typename T>
void adam_update(T& p, T& m, T& v, const T& g, double lr, double bc1, double bc2) {
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  m = kBeta1 * m + (1.0 - kBeta1) * g;
  v = kBeta2 * v + (1.0 - kBeta2) * g.cwiseProduct(g);
  p.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + kEps);
}

double mean_xent(const HeadParams& p, const Matrix& x, const std::vector<int>& labels) {
  const Matrix hidden = ((p.w1 * x).colwise() + p.b1).array().tanh().matrix();
  const Matrix z = (p.w2 * hidden).colwise() + p.b2;
  double total = 0.0;
  for (Eigen::Index c = 0; c < z.cols(); ++c) {
    const double top = z.col(c).maxCoeff();
    const double lse = top + std::log((z.col(c).array() - top).exp().sum());
    total += lse - z(labels[static_cast<std::size_t>(c)], c);
  }
  return total / static_cast<double>(z.cols());
}

Matrix standardized(const LabeledSet& set, const Vector& mean, const Vector& scale) {
  Matrix x(mean.size(), static_cast<Eigen::Index>(set.size()));
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (set.features[i].size() != mean.size()) {
      fail(ErrorCode::kShape, "feature vectors differ in dimension");
    }
    x.col(static_cast<Eigen::Index>(i)) =
        (set.features[i] - mean).cwiseQuotient(scale);
  }
  return x;
}

}  // namespace

ClassificationHead::ClassificationHead(Vector input_mean, Vector input_scale, Matrix hidden_weight,
                                       Vector hidden_bias, Matrix output_weight,
                                       Vector output_bias)
    : input_mean_(std::move(input_mean)),
      input_scale_(std::move(input_scale)),
      hidden_weight_(std::move(hidden_weight)),
      hidden_bias_(std::move(hidden_bias)),
      output_weight_(std::move(output_weight)),
      output_bias_(std::move(output_bias)) {
  const auto in = input_mean_.size();
  if (input_scale_.size() != in || hidden_weight_.cols() != in ||
      hidden_weight_.rows() != hidden_bias_.size() ||
      output_weight_.cols() != hidden_bias_.size() ||
      output_weight_.rows() != output_bias_.size() || output_bias_.size() < 2) {
    fail(ErrorCode::kShape, "classification head parameters are inconsistent");
  }
}

Vector ClassificationHead::logits(const Vector& x) const {
  if (x.size() != input_mean_.size()) {
    fail(ErrorCode::kShape, "head expects input dimension " + std::to_string(input_dim()) +
                                ", got " + std::to_string(x.size()));
  }
  const Vector z = (x - input_mean_).cwiseQuotient(input_scale_);
  const Vector hidden = (hidden_weight_ * z + hidden_bias_).array().tanh().matrix();
  return output_weight_ * hidden + output_bias_;
}

Vector ClassificationHead::probabilities(const Vector& x) const { return softmax(logits(x)); }

int ClassificationHead::predict(const Vector& x) const {
  const Vector z = logits(x);
  Eigen::Index best = 0;
  z.maxCoeff(&best);
  return static_cast<int>(best);
}

ClassificationHead train_head(const LabeledSet& train, const LabeledSet& validation,
                              const HeadConfig& config) {
  if (train.size() == 0 || validation.size() == 0) {
    fail(ErrorCode::kInvalidSplit, "training and validation splits must be nonempty");
  }
  if (train.features.size() != train.labels.size() ||
      validation.features.size() != validation.labels.size()) {
    fail(ErrorCode::kShape, "features and labels differ in count");
  }
  int classes = 0;
  std::set<int> distinct;
  for (const auto* set : {&train, &validation}) {
    for (int label : set->labels) {
      if (label < 0) fail(ErrorCode::kInvalidArgument, "labels must be non-negative");
      classes = std::max(classes, label + 1);
    }
  }
  for (int label : train.labels) distinct.insert(label);
  if (distinct.size() < 2) fail(ErrorCode::kDegenerateTask, "training data has a single class");

  const auto in = train.features.front().size();
  Vector mean = Vector::Zero(in);
  for (const auto& f : train.features) {
    if (f.size() != in) fail(ErrorCode::kShape, "feature vectors differ in dimension");
    mean += f;
  }
  mean /= static_cast<double>(train.size());
  Vector scale = Vector::Zero(in);
  for (const auto& f : train.features) scale += (f - mean).cwiseAbs2();
  scale = (scale / static_cast<double>(train.size())).cwiseSqrt();
  for (Eigen::Index i = 0; i < scale.size(); ++i) {
    if (!(scale(i) > 1e-12)) scale(i) = 1.0;
  }

  const Matrix x_train = standardized(train, mean, scale);
  const Matrix x_val = standardized(validation, mean, scale);

  const int hidden = config.hidden_width > 0 ? config.hidden_width : static_cast<int>(2 * in);
  Xoshiro256 rng(config.seed ^ 0x68656164ULL);
  HeadParams p{Matrix(hidden, in), Vector::Zero(hidden), Matrix(classes, hidden),
               Vector::Zero(classes)};
  const double b1 = 1.0 / std::sqrt(static_cast<double>(in));
  const double b2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (Eigen::Index c = 0; c < p.w1.cols(); ++c)
    for (Eigen::Index r = 0; r < p.w1.rows(); ++r) p.w1(r, c) = rng.uniform(-b1, b1);
  for (Eigen::Index c = 0; c < p.w2.cols(); ++c)
    for (Eigen::Index r = 0; r < p.w2.rows(); ++r) p.w2(r, c) = rng.uniform(-b2, b2);

  AdamState adam{{Matrix::Zero(hidden, in), Vector::Zero(hidden), Matrix::Zero(classes, hidden),
                  Vector::Zero(classes)},
                 {Matrix::Zero(hidden, in), Vector::Zero(hidden), Matrix::Zero(classes, hidden),
                  Vector::Zero(classes)}};

  HeadParams best = p;
  double best_loss = mean_xent(p, x_val, validation.labels);
  int stale = 0;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch = std::max<std::size_t>(1, config.batch_size);

  for (int epoch = 0; epoch < config.max_epochs && stale < config.patience; ++epoch) {
    shuffle_in_place(order, rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      const auto m = static_cast<Eigen::Index>(end - start);
      Matrix xb(in, m);
      Matrix onehot = Matrix::Zero(classes, m);
      for (Eigen::Index j = 0; j < m; ++j) {
        const std::size_t idx = order[start + static_cast<std::size_t>(j)];
        xb.col(j) = x_train.col(static_cast<Eigen::Index>(idx));
        onehot(train.labels[idx], j) = 1.0;
      }
      const Matrix h = ((p.w1 * xb).colwise() + p.b1).array().tanh().matrix();
      Matrix z = (p.w2 * h).colwise() + p.b2;
      for (Eigen::Index j = 0; j < m; ++j) z.col(j) = softmax(z.col(j));
      const Matrix dz = (z - onehot) / static_cast<double>(m);
      const Matrix da = (p.w2.transpose() * dz).cwiseProduct((1.0 - h.array().square()).matrix());
      const HeadParams g{da * xb.transpose(), da.rowwise().sum(), dz * h.transpose(),
                         dz.rowwise().sum()};
      ++adam.t;
      const double bc1 = 1.0 - std::pow(0.9, static_cast<double>(adam.t));
      const double bc2 = 1.0 - std::pow(0.999, static_cast<double>(adam.t));
      const double lr = config.learning_rate;
      adam_update(p.w1, adam.m.w1, adam.v.w1, g.w1, lr, bc1, bc2);
      adam_update(p.b1, adam.m.b1, adam.v.b1, g.b1, lr, bc1, bc2);
      adam_update(p.w2, adam.m.w2, adam.v.w2, g.w2, lr, bc1, bc2);
      adam_update(p.b2, adam.m.b2, adam.v.b2, g.b2, lr, bc1, bc2);
    }
    const double val_loss = mean_xent(p, x_val, validation.labels);
    if (val_loss < best_loss - 1e-9) {
      best_loss = val_loss;
      best = p;
      stale = 0;
    } else {
      ++stale;
    }
  }

  return ClassificationHead(std::move(mean), std::move(scale), std::move(best.w1),
                            std::move(best.b1), std::move(best.w2), std::move(best.b2));
}

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  check_lengths(predictions.size(), labels.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double weighted_f1(std::span<const int> predictions, std::span<const int> labels) {
  check_lengths(predictions.size(), labels.size());
  std::map<int, std::size_t> support, predicted, correct;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    ++support[labels[i]];
    ++predicted[predictions[i]];
    if (predictions[i] == labels[i]) ++correct[labels[i]];
  }
  double total = 0.0;
  for (const auto& [label, count] : support) {
    const double tp = static_cast<double>(correct[label]);
    const double pred = static_cast<double>(predicted[label]);
    const double precision = pred > 0.0 ? tp / pred : 0.0;
    const double recall = tp / static_cast<double>(count);
    const double f1 =
        precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    total += f1 * static_cast<double>(count);
  }
  return total / static_cast<double>(labels.size());
}

double xent_loss(std::span<const Vector> probabilities, std::span<const int> labels) {
  check_lengths(probabilities.size(), labels.size());
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= probabilities[i].size()) {
      fail(ErrorCode::kShape, "label outside probability vector");
    }
    const double p = std::max(probabilities[i](labels[i]), std::numeric_limits<double>::min());
    total -= std::log(p);
  }
  return total / static_cast<double>(labels.size());
}

double agreement(std::span<const int> a, std::span<const int> b) {
  check_lengths(a.size(), b.size());
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i] ? 1 : 0;
  return static_cast<double>(same) / static_cast<double>(a.size());
}

std::string EvalReport::to_key_value() const {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "count=" << count << '\n';
  out << "accuracy=" << accuracy << '\n';
  out << "weighted_f1=" << weighted_f1 << '\n';
  out << "loss=" << loss << '\n';
  if (agreement) out << "agreement=" << *agreement << '\n';
  return out.str();
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["count"] = count;
  j["accuracy"] = accuracy;
  j["weighted_f1"] = weighted_f1;
  j["loss"] = loss;
  if (agreement) j["agreement"] = *agreement;
  return j.dump(2);
}

Predictions predict_all(const ClassificationHead& head, std::span<const Vector> features) {
  Predictions out;
  out.labels.reserve(features.size());
  out.probabilities.reserve(features.size());
  for (const auto& f : features) {
    Vector p = head.probabilities(f);
    Eigen::Index best = 0;
    p.maxCoeff(&best);
    out.labels.push_back(static_cast<int>(best));
    out.probabilities.push_back(std::move(p));
  }
  return out;
}

EvalReport evaluate(const ClassificationHead& head, std::span<const Vector> features,
                    std::span<const int> labels, std::optional<std::span<const int>> reference) {
  const Predictions preds = predict_all(head, features);
  EvalReport report;
  report.count = labels.size();
  report.accuracy = accuracy(preds.labels, labels);
  report.weighted_f1 = weighted_f1(preds.labels, labels);
  report.loss = xent_loss(preds.probabilities, labels);
  if (reference) report.agreement = agreement(preds.labels, *reference);
  return report;
}

std::vector<Vector> model_outputs(const Model& model, std::span<const std::string> texts,
                                  const InterventionPlan* plan) {
  std::vector<Vector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(model.forward(t, plan));
  return out;
}

EvalReport backward_compat_eval(const ClassificationHead& head, const Model& original,
                                const Model& conceptualized, std::span<const std::string> texts,
                                std::span<const int> labels) {
  if (head.input_dim() != conceptualized.hidden_dim()) {
    fail(ErrorCode::kShape, "head input dimension " + std::to_string(head.input_dim()) +
                                " does not match model output dimension " +
                                std::to_string(conceptualized.hidden_dim()));
  }
  const auto reference = predict_all(head, model_outputs(original, texts)).labels;
  const auto features = model_outputs(conceptualized, texts);
  return evaluate(head, features, labels, std::span<const int>(reference));
}

const std::vector<std::string>& synthetic_topic_names() {
  static const std::vector<std::string> names{"sports", "business", "science",
                                              "politics", "music", "food"};
  return names;
}

const std::vector<std::string>& synthetic_keywords(int topic) {
  static const std::vector<std::vector<std::string>> keywords{
      {"football", "goal", "league", "coach", "match", "striker", "stadium", "season",
       "tournament", "referee", "team", "championship"},
      {"market", "shares", "profit", "investor", "bank", "revenue", "merger", "stocks",
       "economy", "earnings", "trade", "company"},
      {"research", "physics", "laboratory", "experiment", "molecule", "telescope", "genome",
       "theory", "scientists", "quantum", "biology", "discovery"},
      {"election", "senate", "minister", "parliament", "vote", "campaign", "policy",
       "government", "president", "law", "diplomat", "treaty"},
      {"guitar", "album", "concert", "singer", "melody", "band", "orchestra", "lyrics",
       "rhythm", "piano", "festival", "song"},
      {"recipe", "kitchen", "chef", "flavor", "bread", "dinner", "spices", "restaurant",
       "dessert", "cheese", "soup", "menu"},
  };
  if (topic < 0 || topic >= static_cast<int>(keywords.size())) {
    fail(ErrorCode::kInvalidArgument, "synthetic topic index out of range");
  }
  return keywords[static_cast<std::size_t>(topic)];
}

const std::vector<std::string>& synthetic_filler() {
  static const std::vector<std::string> filler{
      "the", "a", "of", "and", "in", "on", "with", "for", "to", "after",
      "new", "report", "today", "says", "while", "week", "during", "big",
      "first", "year", "from", "about", "over", "more", "than", "local",
      "news", "people", "early", "late"};
  return filler;
}

SyntheticTask generate_synthetic_task(const SyntheticTaskConfig& config) {
  if (config.classes < 2 || config.classes > kMaxSyntheticClasses) {
    fail(ErrorCode::kInvalidConfiguration,
         "synthetic task needs 2.." + std::to_string(kMaxSyntheticClasses) + " classes");
  }
  if (config.min_tokens < 1 || config.max_tokens < config.min_tokens) {
    fail(ErrorCode::kInvalidConfiguration, "invalid synthetic text length range");
  }
  if (!(config.topic_probability > 0.0 && config.topic_probability <= 1.0)) {
    fail(ErrorCode::kInvalidConfiguration, "topic_probability must be in (0, 1]");
  }
  SyntheticTask task;
  task.class_names.assign(synthetic_topic_names().begin(),
                          synthetic_topic_names().begin() + config.classes);
  Xoshiro256 rng(config.seed ^ 0x73796e7468ULL);
  const auto& filler = synthetic_filler();
  for (std::size_t i = 0; i < config.count; ++i) {
    const int label = static_cast<int>(rng.below(static_cast<std::uint64_t>(config.classes)));
    const auto& keywords = synthetic_keywords(label);
    const int span = config.max_tokens - config.min_tokens + 1;
    const int length = config.min_tokens + static_cast<int>(rng.below(static_cast<std::uint64_t>(span)));
    std::string text;
    bool has_keyword = false;
    for (int t = 0; t < length; ++t) {
      // The last slot forces a keyword so every text carries its topic.
      const bool topical = rng.uniform() < config.topic_probability || (t == length - 1 && !has_keyword);
      const auto& pool = topical ? keywords : filler;
      if (!text.empty()) text += ' ';
      text += pool[static_cast<std::size_t>(rng.below(pool.size()))];
      has_keyword = has_keyword || topical;
    }
    task.texts.push_back(std::move(text));
    task.labels.push_back(label);
  }
  return task;
}

}  // namespace cl
