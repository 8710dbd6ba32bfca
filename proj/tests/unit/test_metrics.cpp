#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "biasprobe/counterfactual.hpp"
#include "biasprobe/defaults.hpp"
#include "biasprobe/metrics.hpp"
#include "biasprobe/model/reference_model.hpp"
#include "oracles.hpp"
#include "stub_backend.hpp"
#include "test_util.hpp"

using namespace biasprobe;
using namespace biasprobe::metrics;
using model::tokenize;

namespace {

EmbeddingVector vec(std::vector<double> v) { return EmbeddingVector(std::move(v)); }

const model::ReferenceModel& ref() {
  static const auto m = model::build_reference({});
  return m;
}

}  // namespace

// --- distances ---------------------------------------------------------------

TEST(EmbeddingDistance, Examples) {
  EXPECT_EQ(embedding_distance(vec({1, 2, 3}), vec({1, 2, 3})), 0.0);
  EXPECT_NEAR(embedding_distance(vec({1, 0}), vec({0, 1})), 1.41421356, 1e-8);
  EXPECT_KIND(embedding_distance(vec({1, 0}), vec({1, 0, 0})), ErrorKind::ShapeMismatch);
}

TEST(EmbeddingDistance, MatchesComponentwiseOracle) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (int k = 0; k < 50; ++k) {
    std::vector<double> a(16), b(16);
    for (auto& x : a) x = g(rng);
    for (auto& x : b) x = g(rng);
    EXPECT_NEAR(embedding_distance(vec(a), vec(b)), oracle::euclidean(a, b), 1e-12);
  }
}

TEST(BiasFlag, Examples) {
  EXPECT_FALSE(embedding_bias_flag(vec({1, 1}), vec({1, 1}), 0.01).flagged());
  EXPECT_TRUE(embedding_bias_flag(vec({1, 0}), vec({0, 1}), 1.0).flagged());
  EXPECT_FALSE(embedding_bias_flag(vec({0, 0}), vec({3, 4}), 5.0).flagged());
  EXPECT_KIND(embedding_bias_flag(vec({1}), vec({2}), 0.0), ErrorKind::InvalidThreshold);
  EXPECT_KIND(embedding_bias_flag(vec({1}), vec({2}), -1.0), ErrorKind::InvalidThreshold);
}

TEST(Cosine, Examples) {
  EXPECT_DOUBLE_EQ(cosine_similarity(vec({1, 0}), vec({0, 1})), 0.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(vec({2, 0}), vec({5, 0})), 1.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(vec({1, 0}), vec({-1, 0})), -1.0);
  EXPECT_EQ(cosine_similarity(vec({0, 0}), vec({1, 0})), 0.0);
}

// --- probability gap ------------------------------------------------------------

TEST(ProbabilityGap, Examples) {
  EXPECT_EQ(generation_probability_gap({{"a", 0.3}, {"b", 0.3}, {"c", 0.3}}), 0.0);
  EXPECT_NEAR(generation_probability_gap({{"a", 0.2}, {"b", 0.5}, {"c", 0.35}}), 0.3, 1e-15);
  EXPECT_KIND(generation_probability_gap({{"a", 0.2}}), ErrorKind::InsufficientAttributes);
  EXPECT_KIND(generation_probability_gap({{"a", 0.2}, {"b", 1.2}}), ErrorKind::InvalidProbability);
  EXPECT_KIND(generation_probability_gap({{"a", -0.1}, {"b", 0.2}}), ErrorKind::InvalidProbability);
}

TEST(ProbabilityGap, AllPairsOracle) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::map<std::string, double> m;
  std::vector<double> ps;
  for (int i = 0; i < 50; ++i) {
    ps.push_back(u(rng));
    m["t" + std::to_string(i)] = ps.back();
  }
  double best = 0.0;
  for (double a : ps)
    for (double b : ps) best = std::max(best, std::abs(a - b));
  EXPECT_EQ(generation_probability_gap(m), best);
}

// --- categories ------------------------------------------------------------------

TEST(ClassifyCategory, Examples) {
  const CategoryModel cm({"a", "b", "c"}, {vec({0, 0}), vec({2, 0}), vec({0, 5})});
  EXPECT_EQ(classify_category(vec({2, 0}), cm), "b");
  EXPECT_EQ(classify_category(vec({1, 0}), cm), "a");  // equidistant between a and b
  EXPECT_EQ(classify_category(vec({0, 4}), cm), "c");
  EXPECT_KIND(classify_category(vec({0, 0, 0}), cm), ErrorKind::ShapeMismatch);
  EXPECT_KIND(CategoryModel({"a"}, {vec({0})}), ErrorKind::InvalidInput);
  EXPECT_KIND(CategoryModel({"a", "b"}, {vec({0}), vec({0, 1})}), ErrorKind::ShapeMismatch);
}

TEST(ClassifyCategory, NearestNeighbourOracle) {
  const auto cm = CategoryModel::seeded_random({"w", "x", "y", "z"}, 6, 99);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (int k = 0; k < 100; ++k) {
    std::vector<double> v(6);
    for (auto& x : v) x = u(rng);
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t c = 0; c < 4; ++c) {
      const auto p = cm.prototypes()[c].values();
      const double d = oracle::euclidean(v, std::vector<double>(p.begin(), p.end()));
      if (d < best_d) best_d = d, best = c;
    }
    EXPECT_EQ(classify_category(vec(v), cm), cm.labels()[best]);
  }
}

TEST(CategoryShift, Examples) {
  const CategoryDistribution p({"a", "b"}, {{"a", 0.5}, {"b", 0.5}});
  const CategoryDistribution q({"a", "b"}, {{"a", 0.8}, {"b", 0.2}});
  EXPECT_EQ(category_shift(p, p), 0.0);
  EXPECT_NEAR(category_shift(p, q), 0.3, 1e-15);
  const CategoryDistribution r({"a", "b", "c", "d"}, {{"a", 0.5}, {"b", 0.5}, {"c", 0}, {"d", 0}});
  const CategoryDistribution s({"a", "b", "c", "d"}, {{"a", 0}, {"b", 0}, {"c", 0.25}, {"d", 0.75}});
  EXPECT_DOUBLE_EQ(category_shift(r, s), 1.0);
  EXPECT_KIND(category_shift(p, r), ErrorKind::CategoryMismatch);
}

// --- contrastive loss --------------------------------------------------------------

TEST(ContrastiveLoss, Examples) {
  const std::vector<EmbeddingPair> inside{{vec({0, 0}), vec({0.5, 0.5})}};
  EXPECT_EQ(contrastive_bias_loss(inside, 1.0), 0.0);
  const std::vector<EmbeddingPair> one{{vec({1, 0}), vec({0, 1})}};
  EXPECT_DOUBLE_EQ(contrastive_bias_loss(one, 1.0), 1.0);
  const std::vector<EmbeddingPair> three{{vec({0, 0}), vec({std::sqrt(0.5), 0})},
                                         {vec({0, 0}), vec({std::sqrt(2.0), 0})},
                                         {vec({0, 0}), vec({std::sqrt(3.0), 0})}};
  EXPECT_NEAR(contrastive_bias_loss(three, 1.0), 3.0, 1e-12);
  EXPECT_KIND(contrastive_bias_loss(one, 0.0), ErrorKind::InvalidMargin);
  const std::vector<EmbeddingPair> mixed{{vec({0, 0}), vec({0, 0, 0})}};
  EXPECT_KIND(contrastive_bias_loss(mixed, 1.0), ErrorKind::ShapeMismatch);
}

TEST(ContrastiveGradient, InactiveIsZero) {
  const std::vector<EmbeddingPair> inside{{vec({0, 0}), vec({0.5, 0.5})}, {vec({1, 1}), vec({1, 1})}};
  EXPECT_TRUE(contrastive_bias_loss_gradient(inside, 1.0, model::ProjectionHead::identity(2)).isZero(0.0));
}

TEST(ContrastiveGradient, IdentityFormula) {
  const std::vector<EmbeddingPair> one{{vec({2, 0, 1}), vec({0, 1, -1})}};
  Eigen::Vector3d u(2, -1, 2);
  const Eigen::MatrixXd expected = 2.0 * u * u.transpose();
  EXPECT_TRUE(contrastive_bias_loss_gradient(one, 1.0, model::ProjectionHead::identity(3)).isApprox(expected, 1e-15));
}

TEST(ContrastiveGradient, FiniteDifferences) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  const double h = 1e-5;
  std::vector<EmbeddingPair> pairs;
  for (int p = 0; p < 5; ++p) {
    std::vector<double> a(8), b(8);
    for (auto& x : a) x = g(rng);
    for (auto& x : b) x = g(rng);
    pairs.emplace_back(vec(a), vec(b));
  }
  model::ProjectionHead head{Eigen::MatrixXd::Identity(8, 8)};
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) head.W(r, c) += 0.3 * g(rng);
  const auto grad = contrastive_bias_loss_gradient(pairs, 1.0, head);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) {
      auto plus = head, minus = head;
      plus.W(r, c) += h;
      minus.W(r, c) -= h;
      const double fd = (contrastive_bias_loss(pairs, 1.0, plus) - contrastive_bias_loss(pairs, 1.0, minus)) / (2 * h);
      EXPECT_NEAR(grad(r, c), fd, 1e-4 * std::max(1.0, std::abs(fd)));
    }
}

// --- perturbation ------------------------------------------------------------------------

TEST(Perturb, ZeroColumnExample) {
  const AttentionTensor a(1, 1, 2, {0.6, 0.4, 0.3, 0.7});
  const auto p = perturb_attention(a, PerturbationSpec(PerturbationMode::Zero, 0.0, {1}));
  EXPECT_EQ(std::vector<double>(p.weights().begin(), p.weights().end()), (std::vector<double>{1, 0, 1, 0}));
}

TEST(Perturb, EmptyPositionsIsNoop) {
  const auto a = ref().attentions(tokenize("The nurse was gentle."));
  for (auto mode : {PerturbationMode::Zero, PerturbationMode::Scale, PerturbationMode::Uniform})
    EXPECT_EQ(perturb_attention(a, PerturbationSpec(mode, 0.5, {})), a);
}

TEST(Perturb, ScaleOneIsIdentity) {
  const auto a = ref().attentions(tokenize("The nurse was gentle."));
  const auto p = perturb_attention(a, PerturbationSpec(PerturbationMode::Scale, 1.0, {1, 2}));
  for (std::size_t k = 0; k < a.weights().size(); ++k) EXPECT_NEAR(p.weights()[k], a.weights()[k], 1e-12);
}

TEST(Perturb, ModesMatchDefinition) {
  const Text t = tokenize("My neighbor is a software developer who works late.");
  const auto a = ref().attentions(t);
  const std::vector<double> flat(a.weights().begin(), a.weights().end());
  const std::vector<std::size_t> pos{4, 5};
  const std::pair<PerturbationMode, std::string> modes[] = {
      {PerturbationMode::Zero, "zero"}, {PerturbationMode::Scale, "scale"}, {PerturbationMode::Uniform, "uniform"}};
  for (const auto& [mode, name] : modes) {
    const auto got_owner = perturb_attention(a, PerturbationSpec(mode, 0.25, pos));
    const auto got = got_owner.weights();
    const auto expected = oracle::perturb(flat, a.n(), pos, name, 0.25);
    for (std::size_t k = 0; k < expected.size(); ++k) EXPECT_NEAR(got[k], expected[k], 1e-15) << name;
  }
}

TEST(Perturb, ZeroMassRowFallsBackToUniform) {
  // row 0 attends only to column 0; zeroing it leaves no mass
  const AttentionTensor a(1, 1, 3, {1, 0, 0, 0.2, 0.3, 0.5, 0.1, 0.1, 0.8});
  const auto p = perturb_attention(a, PerturbationSpec(PerturbationMode::Zero, 0.0, {0}));
  EXPECT_DOUBLE_EQ(p.at(0, 0, 0, 0), 0.0);
  EXPECT_DOUBLE_EQ(p.at(0, 0, 0, 1), 0.5);
  EXPECT_DOUBLE_EQ(p.at(0, 0, 0, 2), 0.5);
}

TEST(Perturb, Errors) {
  const AttentionTensor a(1, 1, 2, {0.6, 0.4, 0.3, 0.7});
  EXPECT_KIND(perturb_attention(a, PerturbationSpec(PerturbationMode::Zero, 0.0, {0, 1})),
              ErrorKind::DegeneratePerturbation);
  EXPECT_KIND(perturb_attention(a, PerturbationSpec(PerturbationMode::Uniform, 0.0, {0, 1})),
              ErrorKind::DegeneratePerturbation);
  EXPECT_KIND(perturb_attention(a, PerturbationSpec(PerturbationMode::Scale, 0.0, {0, 1})),
              ErrorKind::DegeneratePerturbation);
  EXPECT_EQ(perturb_attention(a, PerturbationSpec(PerturbationMode::Scale, 2.0, {0, 1})), a);
  EXPECT_KIND(perturb_attention(a, PerturbationSpec(PerturbationMode::Zero, 0.0, {2})), ErrorKind::IndexError);
  EXPECT_KIND(PerturbationSpec(PerturbationMode::Zero, 0.0, {1, 1}), ErrorKind::InvalidInput);
  EXPECT_KIND(PerturbationSpec(PerturbationMode::Scale, -1.0, {}), ErrorKind::InvalidConfig);
  EXPECT_KIND(PerturbationSpec(PerturbationMode::Scale, INFINITY, {}), ErrorKind::InvalidConfig);
  EXPECT_KIND(parse_perturbation_mode("mask"), ErrorKind::InvalidConfig);
  EXPECT_EQ(parse_perturbation_mode("uniform"), PerturbationMode::Uniform);
}

TEST(AttentionSensitivity, Identities) {
  const Text t = tokenize("The nurse was gentle.");
  EXPECT_EQ(attention_sensitivity(ref(), t, PerturbationSpec(PerturbationMode::Zero, 0.0, {})), 0.0);
  EXPECT_NEAR(attention_sensitivity(ref(), t, PerturbationSpec(PerturbationMode::Scale, 1.0, {1})), 0.0, 1e-9);
  EXPECT_GT(attention_sensitivity(ref(), t, PerturbationSpec(PerturbationMode::Zero, 0.0, {1})), 0.0);
}

TEST(AttentionSensitivity, DualPath) {
  const Text t = tokenize("The engineer was praised for being very caring.");
  const std::vector<std::size_t> pos{1};
  std::vector<double> attn;
  const auto base = oracle::mean_pool(oracle::forward(ref(), t, nullptr, &attn));
  const auto perturbed = oracle::perturb(attn, t.token_count(), pos, "zero", 0.0);
  const auto moved = oracle::mean_pool(oracle::forward(ref(), t, &perturbed));
  EXPECT_NEAR(attention_sensitivity(ref(), t, PerturbationSpec(PerturbationMode::Zero, 0.0, pos)),
              oracle::euclidean(base, moved), 1e-9);
}

TEST(AttentionSensitivity, Unsupported) {
  stub::TableBackend b;
  b.fallback = [](const std::string&) { return std::vector<double>{1, 0}; };
  EXPECT_KIND(attention_sensitivity(b, tokenize("a b"), PerturbationSpec(PerturbationMode::Zero, 0.0, {0})),
              ErrorKind::Unsupported);
}

// --- composite -----------------------------------------------------------------------------

TEST(CompositeWeights, Validation) {
  EXPECT_NO_THROW(CompositeWeights(1, 0, 0));
  EXPECT_KIND(CompositeWeights(0.5, 0.5, 0.5), ErrorKind::InvalidConfig);
  EXPECT_KIND(CompositeWeights(1.5, -0.5, 0), ErrorKind::InvalidConfig);
  const CompositeWeights d;
  EXPECT_EQ(d.embed(), 0.4);
  EXPECT_EQ(d.prob(), 0.4);
  EXPECT_EQ(d.attn(), 0.2);
}

TEST(Composite, IdenticalMembersScoreZero) {
  const PromptTemplate tmpl("t", "The {attr} left.");
  const auto g = counterfactual::instantiate(tmpl, AttributeCategory("c", {{"nurse", "a"}, {"Nurse", "b"}}));
  // both members tokenize the same; raw text differs only in case
  ASSERT_EQ(g.members()[0].text.tokens(), g.members()[1].text.tokens());
  stub::TableBackend b;
  b.fallback = [](const std::string&) { return std::vector<double>{0.3, 0.4}; };
  b.probs = {{"The nurse left.", 0.2}, {"The Nurse left.", 0.2}};
  b.caps.has_logprobs = true;
  EXPECT_EQ(composite_bias_score(g, b, tokenize("ok"), CompositeWeights(0.5, 0.5, 0.0), {}), 0.0);
  EXPECT_EQ(composite_bias_score(g, ref(), tokenize("ok"), CompositeWeights(0.5, 0.5, 0.0), {}), 0.0);

  // With no attribute span there is nothing to perturb, so every signal is 0.
  const Text t = tokenize("The nurse left.");
  const CounterfactualGroup same("t", "c", {{"nurse", t, {}}, {"nurse", t, {}}, {"nurse", t, {}}});
  EXPECT_EQ(composite_bias_score(same, ref(), tokenize("ok"), CompositeWeights(), {}), 0.0);
}

TEST(Composite, EmbeddingOnlyWeight) {
  const auto g = counterfactual::instantiate(PromptTemplate("t", "The {attr} left."),
                                             AttributeCategory("c", {{"a", "x"}, {"b", "y"}, {"c", "z"}}));
  stub::TableBackend b;
  b.embeddings = {{"The a left.", {0, 0}}, {"The b left.", {3, 4}}, {"The c left.", {1, 0}}};
  EXPECT_DOUBLE_EQ(composite_bias_score(g, b, tokenize("ok"), CompositeWeights(1, 0, 0), {}), 5.0 / 6.0);
  EXPECT_KIND(composite_bias_score(g, b, tokenize("ok"), CompositeWeights(0.5, 0.5, 0), {}), ErrorKind::Unsupported);
  EXPECT_KIND(composite_bias_score(g, b, tokenize("ok"), CompositeWeights(0.5, 0, 0.5), {}), ErrorKind::Unsupported);
}

TEST(Composite, RecomposedFromParts) {
  const auto g = counterfactual::instantiate(defaults::templates()[1], defaults::lexicon_pack().at("gender"));
  const Text cont = tokenize(defaults::kContinuation);
  const PerturbationSettings ps{PerturbationMode::Zero, 0.0};

  double max_dist = 0.0;
  std::vector<double> probs;
  double sens = 0.0;
  for (const auto& a : g.members()) {
    for (const auto& b : g.members())
      max_dist = std::max(max_dist, oracle::euclidean(oracle::mean_pool(oracle::forward(ref(), a.text)),
                                                      oracle::mean_pool(oracle::forward(ref(), b.text))));
    probs.push_back(ref().continuation_probability(a.text, cont).total_prob());
    sens += attention_sensitivity(ref(), a.text, PerturbationSpec(ps, a.attribute_positions));
  }
  const double gap = *std::max_element(probs.begin(), probs.end()) - *std::min_element(probs.begin(), probs.end());
  const double mean_sens = sens / static_cast<double>(g.size());
  const double expected = 0.4 * (max_dist / (1 + max_dist)) + 0.4 * gap + 0.2 * (mean_sens / (1 + mean_sens));
  EXPECT_NEAR(composite_bias_score(g, ref(), cont, CompositeWeights(0.4, 0.4, 0.2), ps), expected, 1e-12);
  const double s = composite_bias_score(g, ref(), cont, CompositeWeights(), ps);
  EXPECT_GE(s, 0.0);
  EXPECT_LE(s, 1.0);
}
