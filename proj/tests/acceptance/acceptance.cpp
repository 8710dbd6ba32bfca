// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit when any
// criterion fails. Usage: acceptance [--artifacts DIR]

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <numeric>
#include <sstream>

#include "biasprobe/cli.hpp"
#include "biasprobe/model/finetune.hpp"
#include "oracles.hpp"
#include "stub_backend.hpp"

using namespace biasprobe;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(3);
  s << v;
  return s.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const model::ReferenceModel& reference() {
  static const auto m = model::build_reference({});
  return m;
}

/// Random ws-v1 text of 2..14 tokens, mixing lexicon terms in.
Text random_text(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> len(2, 14);
  return model::tokenize(oracle::random_sentence(rng, len(rng)));
}

// --- criteria ---------------------------------------------------------------

Outcome probability_gap_oracle() {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::size_t> size(2, 50);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto t0 = Clock::now();
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::map<std::string, double> scores;
    std::vector<double> ps(size(rng));
    for (std::size_t i = 0; i < ps.size(); ++i) scores["term" + std::to_string(i)] = ps[i] = u(rng);
    double brute = 0.0;
    for (double a : ps)
      for (double b : ps) brute = std::max(brute, std::abs(a - b));
    const double gap = metrics::generation_probability_gap(scores);
    const auto [lo, hi] = std::minmax_element(ps.begin(), ps.end());
    if (gap != brute || gap != *hi - *lo) ++mismatches;
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 1.0, std::to_string(mismatches) + " mismatches in 1000 maps, " + fmt(secs) + " s"};
}

Outcome gradient_check() {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  const double h = 1e-5, margin = 1.0;
  double worst = 0.0;
  const auto t0 = Clock::now();
  for (int inst = 0; inst < 100; ++inst) {
    std::vector<metrics::EmbeddingPair> pairs;
    for (int p = 0; p < 5; ++p) {
      std::vector<double> a(8), b(8);
      for (auto& x : a) x = g(rng);
      for (auto& x : b) x = g(rng);
      pairs.emplace_back(EmbeddingVector(a), EmbeddingVector(b));
    }
    model::ProjectionHead head{Eigen::MatrixXd(8, 8)};
    for (int r = 0; r < 8; ++r)
      for (int c = 0; c < 8; ++c) head.W(r, c) = g(rng);
    const Eigen::MatrixXd grad = metrics::contrastive_bias_loss_gradient(pairs, margin, head);
    for (int r = 0; r < 8; ++r)
      for (int c = 0; c < 8; ++c) {
        auto plus = head, minus = head;
        plus.W(r, c) += h;
        minus.W(r, c) -= h;
        const double fd =
            (metrics::contrastive_bias_loss(pairs, margin, plus) - metrics::contrastive_bias_loss(pairs, margin, minus)) /
            (2.0 * h);
        const double scale = std::max(std::abs(grad(r, c)), std::abs(fd));
        if (scale > 0.0) worst = std::max(worst, std::abs(grad(r, c) - fd) / scale);
      }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 10.0, "max relative error " + fmt(worst) + " over 100 instances, " + fmt(secs) + " s"};
}

Outcome identity_perturbations() {
  std::mt19937_64 rng(3);
  std::size_t empty_nonzero = 0;
  double worst_scale = 0.0;
  for (int k = 0; k < 50; ++k) {
    const Text t = random_text(rng);
    const double empty =
        metrics::attention_sensitivity(reference(), t, metrics::PerturbationSpec(metrics::PerturbationMode::Zero, 0.0, {}));
    if (empty != 0.0) ++empty_nonzero;
    std::vector<TokenIndex> pos;
    for (std::size_t j = 0; j < t.token_count(); ++j)
      if (rng() % 3 == 0) pos.push_back(j);
    if (pos.empty()) pos.push_back(0);
    const double scaled =
        metrics::attention_sensitivity(reference(), t, metrics::PerturbationSpec(metrics::PerturbationMode::Scale, 1.0, pos));
    worst_scale = std::max(worst_scale, scaled);
  }
  return {empty_nonzero == 0 && worst_scale <= 1e-9,
          std::to_string(empty_nonzero) + " non-zero empty-position results; max scale-1 displacement " +
              fmt(worst_scale) + " on 50 texts"};
}

Outcome row_stochasticity() {
  std::mt19937_64 rng(4);
  double worst = 0.0;
  std::size_t tensors = 0;
  auto check = [&](const AttentionTensor& a) {
    ++tensors;
    const std::size_t n = a.n();
    for (std::size_t r = 0; r < a.weights().size() / n; ++r) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += a.weights()[r * n + j];
      worst = std::max(worst, std::abs(s - 1.0));
    }
  };
  std::uniform_real_distribution<double> lambda(0.0, 4.0);
  for (int trial = 0; trial < 500; ++trial) {
    const Text t = random_text(rng);
    const auto a = reference().attentions(t);
    check(a);
    std::vector<TokenIndex> pos;
    for (std::size_t j = 0; j < t.token_count(); ++j)
      if (rng() % 2 == 0) pos.push_back(j);
    if (pos.size() == t.token_count()) pos.erase(pos.begin() + static_cast<std::ptrdiff_t>(rng() % pos.size()));
    for (auto mode : {metrics::PerturbationMode::Zero, metrics::PerturbationMode::Scale, metrics::PerturbationMode::Uniform})
      check(metrics::perturb_attention(a, metrics::PerturbationSpec(mode, lambda(rng), pos)));
  }
  return {worst <= 1e-9, "max |row sum - 1| = " + fmt(worst) + " over " + std::to_string(tensors) + " tensors"};
}

Outcome dual_path() {
  const auto groups = counterfactual::nested_controls(defaults::templates(), defaults::lexicon_pack());
  double worst = 0.0;
  std::size_t cases = 0;
  for (std::size_t gi = 0; gi < groups.size() && cases < 20; ++gi) {
    const auto& m = groups[gi].members()[gi % groups[gi].size()];
    const double fast = metrics::attention_sensitivity(
        reference(), m.text, metrics::PerturbationSpec(metrics::PerturbationMode::Zero, 0.0, m.attribute_positions));
    std::vector<double> attn;
    const auto base = oracle::mean_pool(oracle::forward(reference(), m.text, nullptr, &attn));
    const auto perturbed = oracle::perturb(attn, m.text.token_count(), m.attribute_positions, "zero", 0.0);
    const auto moved = oracle::mean_pool(oracle::forward(reference(), m.text, &perturbed));
    worst = std::max(worst, std::abs(fast - oracle::euclidean(base, moved)));
    ++cases;
  }
  return {cases == 20 && worst <= 1e-9, "max |difference| " + fmt(worst) + " over " + std::to_string(cases) + " cases"};
}

struct FixtureRun {
  fs::path dir;
  nlohmann::json report;
  std::string first, second;
};

FixtureRun& fixture_run(const fs::path& artifacts) {
  static FixtureRun run = [&] {
    FixtureRun r;
    r.dir = artifacts / "fixture";
    std::ostringstream out, err;
    if (cli::run({"gen-fixture", "--seed", "42", "--out", r.dir.string()}, out, err) != 0)
      throw std::runtime_error("gen-fixture failed: " + err.str());
    for (const char* name : {"evaluate_1.json", "evaluate_2.json"}) {
      if (cli::run({"evaluate", "--seed", "42", "--dataset", (r.dir / "stereoset_mini.json").string(), "--out",
                    (artifacts / name).string()},
                   out, err) != 0)
        throw std::runtime_error("evaluate failed: " + err.str());
    }
    r.first = slurp(artifacts / "evaluate_1.json");
    r.second = slurp(artifacts / "evaluate_2.json");
    r.report = nlohmann::json::parse(r.first);
    return r;
  }();
  return run;
}

Outcome determinism(const fs::path& artifacts) {
  const auto& run = fixture_run(artifacts);
  const bool identical = !run.first.empty() && run.first == run.second;

  std::map<std::string, std::string> type_of;
  for (const auto& m : fixture::mini_instances()) type_of[m.id] = m.bias_type;
  std::map<std::string, std::pair<int, int>> tally;
  for (const auto& r : run.report["results"]) {
    auto& [correct, total] = tally[type_of.at(r["id"].get<std::string>())];
    correct += r["correct"].get<bool>() ? 1 : 0;
    total += 1;
  }
  bool match = tally.size() == run.report["report"]["per_dimension"].size();
  std::string counts;
  for (const auto& [type, ct] : tally) {
    const double hand = static_cast<double>(ct.first) / static_cast<double>(ct.second);
    match = match && run.report["report"]["per_dimension"][type].get<double>() == hand;
    counts += " " + type + "=" + std::to_string(ct.first) + "/" + std::to_string(ct.second);
  }
  return {identical && match,
          std::string(identical ? "byte-identical" : "reports differ") + "; hand tally" + counts +
              (match ? " matches" : " does not match")};
}

Outcome aggregation(const fs::path& artifacts) {
  const auto& rep = fixture_run(artifacts).report;
  std::map<std::string, std::size_t> counts;
  for (const auto& m : fixture::mini_instances()) counts[m.bias_type]++;
  double weighted = 0.0;
  std::size_t total = 0;
  for (const auto& [type, acc] : rep["report"]["per_dimension"].items()) {
    weighted += acc.get<double>() * static_cast<double>(counts.at(type));
    total += counts.at(type);
  }
  const double combined = 100.0 * weighted / static_cast<double>(total);
  const double overall = rep["report"]["detection_accuracy_pct"].get<double>();
  return {combined == overall, "weighted " + fmt(combined) + " vs overall " + fmt(overall)};
}

Outcome finetune(const fs::path& artifacts) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  const double margin = 1.0;
  std::vector<metrics::EmbeddingPair> pairs;
  while (pairs.size() < 10) {
    std::vector<double> a(8), b(8);
    for (auto& x : a) x = g(rng);
    for (auto& x : b) x = g(rng);
    metrics::EmbeddingPair p{EmbeddingVector(a), EmbeddingVector(b)};
    if (metrics::contrastive_bias_loss(std::span(&p, 1), margin) > 0.0) pairs.push_back(std::move(p));
  }
  const auto t0 = Clock::now();
  const auto result = model::finetune_projection(pairs, margin, 1e-3, 500);
  const double secs = seconds_since(t0);

  std::ofstream f(artifacts / "finetune_trajectory.csv");
  f << "step,loss\n";
  for (std::size_t i = 0; i < result.trajectory.size(); ++i) f << i << ',' << stereoset::csv_number(result.trajectory[i]) << '\n';
  const double first = result.trajectory.front(), last = result.trajectory.back();
  const double reduction = 1.0 - last / first;
  return {f.good() && reduction >= 0.5 && secs < 5.0,
          "loss " + fmt(first) + " -> " + fmt(last) + " (" + fmt(100.0 * reduction) + "% reduction), " + fmt(secs) +
              " s, trajectory in finetune_trajectory.csv"};
}

/// 20 pairs of near-paraphrases that share a bias label, 20 low-similarity
/// pairs whose labels differ.
Outcome curve_shape() {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> low_cos(-0.9, 0.5);
  const std::size_t d = 8;
  auto unit = [&](std::vector<double> v) {
    double n = 0.0;
    for (double x : v) n += x * x;
    for (double& x : v) x /= std::sqrt(n);
    return v;
  };
  auto random_unit = [&] {
    std::vector<double> v(d);
    for (auto& x : v) x = g(rng);
    return unit(v);
  };
  auto axpy = [](double a, const std::vector<double>& x, std::vector<double> y) {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
    return y;
  };

  stub::TableBackend backend;
  backend.d = d;
  std::vector<std::pair<Text, Text>> pairs;
  for (int i = 0; i < 20; ++i) {
    const std::string n = std::to_string(i);
    const auto e = random_unit();
    const auto shift = random_unit();
    // attribute-bearing texts whose swapped counterparts sit 0.5 away: flagged
    backend.embeddings["the man waited " + n] = e;
    backend.embeddings["the woman waited " + n] = axpy(0.5, shift, e);
    backend.embeddings["the man waited " + n + " again"] = unit(axpy(1e-3, random_unit(), e));
    backend.embeddings["the woman waited " + n + " again"] = axpy(0.5, shift, e);
    pairs.emplace_back(model::tokenize("the man waited " + n), model::tokenize("the man waited " + n + " again"));

    // no attribute term: compared with itself, never flagged
    auto o = random_unit();
    const double dot = std::inner_product(o.begin(), o.end(), e.begin(), 0.0);
    o = unit(axpy(-dot, e, o));
    const double c = low_cos(rng);
    std::vector<double> r(d);
    for (std::size_t k = 0; k < d; ++k) r[k] = c * e[k] + std::sqrt(1.0 - c * c) * o[k];
    backend.embeddings["a quiet street " + n] = r;
    pairs.emplace_back(model::tokenize("the man waited " + n), model::tokenize("a quiet street " + n));
  }

  const auto bins = stereoset::alignment_curve(pairs, backend, 0.1, 5, defaults::lexicon_pack());
  std::size_t total = 0;
  std::string rates;
  for (const auto& b : bins) {
    total += b.pair_count;
    rates += " " + (b.conflict_rate() ? fmt(*b.conflict_rate()) : std::string("-"));
  }
  const auto top = bins.back().conflict_rate();
  return {top && *top == 0.0 && total == pairs.size(),
          "conflict rates by bin:" + rates + "; counts sum " + std::to_string(total) + "/" + std::to_string(pairs.size())};
}

Outcome round_trips(const fs::path& artifacts) {
  const auto& run = fixture_run(artifacts);
  const auto bundle = model::load_bundle(run.dir / "bundle.jsonl");
  model::ReferenceModelConfig mc;
  mc.seed = 42;
  const auto ref = model::build_reference(mc);
  double worst = 0.0;
  for (const auto& item : bundle.items()) {
    const auto stored = bundle.embed_id(item.id);
    const auto fresh = ref.embed(Text(item.text, item.tokens));
    const auto by_text = bundle.embed(Text(item.text, item.tokens));
    for (std::size_t c = 0; c < stored.dim(); ++c)
      worst = std::max({worst, std::abs(stored[c] - fresh[c]), std::abs(by_text[c] - fresh[c])});
  }
  const auto sample = stereoset::load_stereoset(fs::path(BIASPROBE_TEST_DATA) / "stereoset_sample.json");
  const bool sample_ok = sample.instances.size() == 6 && sample.skipped == 1 && sample.warnings.size() == 1;
  return {worst <= 1e-6 && sample_ok && !bundle.items().empty(),
          std::to_string(bundle.items().size()) + " bundle items, max element error " + fmt(worst) + "; sample " +
              std::to_string(sample.instances.size()) + " instances, " + std::to_string(sample.warnings.size()) +
              " warning(s)"};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path artifacts = "acceptance_artifacts";
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--artifacts") artifacts = argv[i + 1];
  fs::create_directories(artifacts);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"probability gap equals all-pairs oracle and max-min", probability_gap_oracle},
      {"hinge-loss gradient matches central differences", gradient_check},
      {"identity perturbations leave embeddings unchanged", identity_perturbations},
      {"attention rows stay stochastic", row_stochasticity},
      {"attention sensitivity agrees with independent recomputation", dual_path},
      {"evaluate is deterministic and per-dimension matches hand tally", [&] { return determinism(artifacts); }},
      {"per-dimension accuracies aggregate to overall accuracy", [&] { return aggregation(artifacts); }},
      {"projection fine-tuning halves the hinge loss", [&] { return finetune(artifacts); }},
      {"alignment curve top bin has no conflicts, counts sum", curve_shape},
      {"bundle and dataset round trips", [&] { return round_trips(artifacts); }},
  };

  int failures = 0;
  std::ofstream summary(artifacts / "summary.txt");
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    const std::string line = std::string(o.pass ? "PASS" : "FAIL") + " [" + std::to_string(i + 1) + "] " +
                             criteria[i].first + " (" + o.detail + ")";
    std::cout << line << std::endl;
    summary << line << '\n';
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
