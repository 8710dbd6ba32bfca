#pragma once

// Command implementations behind the `biasprobe` executable. `run()` takes an
// argument vector and output streams so the commands are testable in-process.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "biasprobe/counterfactual.hpp"
#include "biasprobe/defaults.hpp"
#include "biasprobe/fixture.hpp"
#include "biasprobe/metrics.hpp"
#include "biasprobe/model/bundle.hpp"
#include "biasprobe/model/reference_model.hpp"
#include "biasprobe/stereoset.hpp"

namespace biasprobe::cli {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr std::uint64_t kDefaultSeed = 42;

enum ExitCode : int { kOk = 0, kInternal = 1, kConfigError = 2, kDataError = 3, kCapabilityError = 4 };

inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidConfig:
    case ErrorKind::InvalidThreshold:
    case ErrorKind::InvalidMargin:
      return kConfigError;
    case ErrorKind::Unsupported:
      return kCapabilityError;
    default:
      return kDataError;
  }
}

struct RunConfig {
  std::string backend = "reference";
  std::string bundle;
  std::optional<std::uint64_t> seed;
  double delta = metrics::kDefaultDelta;
  double margin = metrics::kDefaultMargin;
  std::string perturb_mode = "zero";
  double lambda = 0.0;
  std::string weights = "0.4,0.4,0.2";
  std::size_t bins = 5;
  std::string format = "json";
  std::string templates;
  std::string lexicons;
  std::string dataset;
  std::string out;
  std::string continuation = defaults::kContinuation;
};

/// RunConfig after validation, with every default and override resolved.
struct ResolvedConfig {
  RunConfig raw;
  std::uint64_t seed = kDefaultSeed;
  metrics::CompositeWeights weights;
  metrics::PerturbationSettings perturbation;
};

inline metrics::CompositeWeights parse_weights(const std::string& s) {
  std::vector<double> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      parts.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorKind::InvalidConfig, "--weights: '" + item + "' is not a number");
    }
  }
  if (parts.size() != 3) throw Error(ErrorKind::InvalidConfig, "--weights expects three comma-separated values");
  return metrics::CompositeWeights(parts[0], parts[1], parts[2]);
}

inline ResolvedConfig resolve(const RunConfig& cfg) {
  ResolvedConfig r{cfg, kDefaultSeed, {}, {}};
  if (cfg.seed) {
    r.seed = *cfg.seed;
  } else if (const char* env = std::getenv("BIASPROBE_SEED"); env != nullptr && *env != '\0') {
    try {
      std::size_t used = 0;
      r.seed = std::stoull(env, &used);
      if (env[used] != '\0') throw std::invalid_argument(env);
    } catch (const std::exception&) {
      throw Error(ErrorKind::InvalidConfig, std::string("BIASPROBE_SEED is not an unsigned integer: '") + env + "'");
    }
  }
  if (cfg.backend != "reference" && cfg.backend != "file")
    throw Error(ErrorKind::InvalidConfig, "--backend must be 'reference' or 'file'");
  if (cfg.backend == "file" && cfg.bundle.empty()) throw Error(ErrorKind::InvalidConfig, "--backend file requires --bundle");
  if (!(cfg.delta > 0.0)) throw Error(ErrorKind::InvalidThreshold, "--delta must be > 0");
  if (!(cfg.margin > 0.0)) throw Error(ErrorKind::InvalidMargin, "--margin must be > 0");
  if (cfg.format != "json" && cfg.format != "csv") throw Error(ErrorKind::InvalidConfig, "--format must be json or csv");
  if (cfg.bins < 2) throw Error(ErrorKind::InvalidConfig, "--bins must be >= 2");
  r.weights = parse_weights(cfg.weights);
  r.perturbation = {metrics::parse_perturbation_mode(cfg.perturb_mode), cfg.lambda};
  metrics::PerturbationSpec(r.perturbation, {});  // validates lambda
  if (r.weights.prob() > 0.0 && model::split_tokens(cfg.continuation).empty())
    throw Error(ErrorKind::InvalidConfig, "--continuation is empty but the probability weight is non-zero");
  return r;
}

inline nlohmann::json provenance(const std::string& command, const ResolvedConfig& rc) {
  const auto& c = rc.raw;
  return {{"tool", "biasprobe"},
          {"version", kToolVersion},
          {"command", command},
          {"seed", rc.seed},
          {"config",
           {{"backend", c.backend},
            {"bundle", c.bundle},
            {"delta", c.delta},
            {"margin", c.margin},
            {"perturb_mode", c.perturb_mode},
            {"lambda", c.lambda},
            {"weights", {rc.weights.embed(), rc.weights.prob(), rc.weights.attn()}},
            {"bins", c.bins},
            {"format", c.format},
            {"templates", c.templates},
            {"lexicons", c.lexicons},
            {"dataset", c.dataset},
            {"continuation", c.continuation}}}};
}

inline std::unique_ptr<model::Backend> make_backend(const ResolvedConfig& rc) {
  if (rc.raw.backend == "file") return std::make_unique<model::BundleBackend>(model::load_bundle(rc.raw.bundle));
  model::ReferenceModelConfig mc;
  mc.seed = rc.seed;
  return std::make_unique<model::ReferenceModel>(mc);
}

inline void require_capabilities(const model::Backend& backend, const metrics::CompositeWeights& w) {
  const auto caps = backend.capabilities();
  if (w.attn() > 0.0 && !caps.has_override)
    throw Error(ErrorKind::Unsupported, "backend '" + backend.model_id() +
                                            "' cannot override attention; set the third --weights entry to 0");
  if (w.prob() > 0.0 && !caps.has_logprobs)
    throw Error(ErrorKind::Unsupported, "backend '" + backend.model_id() +
                                            "' has no log-probabilities; set the second --weights entry to 0");
}

inline counterfactual::LexiconPack lexicons_for(const RunConfig& c) {
  return c.lexicons.empty() ? defaults::lexicon_pack() : counterfactual::load_lexicon_pack(c.lexicons);
}

inline void write_text(const std::string& path, const std::string& content, std::ostream& stdout_stream) {
  if (path.empty()) {
    stdout_stream << content;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::IoError, "cannot open '" + path + "' for writing");
  f << content;
  if (!f) throw Error(ErrorKind::IoError, "write to '" + path + "' failed");
}

// --- probe -------------------------------------------------------------------------

inline nlohmann::json probe_group(const CounterfactualGroup& g, const model::Backend& backend,
                                  const metrics::CategoryModel& categories, const ResolvedConfig& rc,
                                  const counterfactual::LexiconPack& pack) {
  const auto& members = g.members();
  std::vector<EmbeddingVector> vs;
  for (const auto& m : members) vs.push_back(backend.embed(m.text));

  double max_dist = 0.0;
  std::vector<metrics::EmbeddingPair> pairs;
  for (std::size_t i = 0; i < vs.size(); ++i)
    for (std::size_t j = i + 1; j < vs.size(); ++j) {
      max_dist = std::max(max_dist, metrics::embedding_distance(vs[i], vs[j]));
      pairs.emplace_back(vs[i], vs[j]);
    }
  const BiasVerdict verdict(max_dist, rc.raw.delta);

  nlohmann::json j = {{"template_id", g.template_id()},
                      {"category", g.category()},
                      {"members", members.size()},
                      {"max_embedding_distance", max_dist},
                      {"flagged", verdict.flagged()},
                      {"contrastive_loss", metrics::contrastive_bias_loss(pairs, rc.raw.margin)}};

  // Category distribution per attribute group label, compared pairwise.
  std::map<std::string, std::vector<std::string>> labels_by_group;
  const auto& category = pack.at(g.category());
  for (std::size_t i = 0; i < members.size(); ++i)
    labels_by_group[category.terms()[i].group].push_back(metrics::classify_category(vs[i], categories));
  std::vector<CategoryDistribution> dists;
  for (const auto& [_, labels] : labels_by_group)
    dists.push_back(CategoryDistribution::from_counts(categories.labels(), labels));
  double shift = 0.0;
  for (std::size_t a = 0; a < dists.size(); ++a)
    for (std::size_t b = a + 1; b < dists.size(); ++b) shift = std::max(shift, metrics::category_shift(dists[a], dists[b]));
  j["category_shift"] = shift;

  if (!model::split_tokens(rc.raw.continuation).empty()) {
    const Text cont = backend.tokenize(rc.raw.continuation);
    std::map<std::string, double> probs;
    for (const auto& m : members) probs[m.term] = backend.continuation_probability(m.text, cont).total_prob();
    j["probability_gap"] = metrics::generation_probability_gap(probs);
  }
  if (rc.weights.attn() > 0.0) {
    double total = 0.0, worst = 0.0;
    for (const auto& m : members) {
      const double s =
          metrics::attention_sensitivity(backend, m.text, metrics::PerturbationSpec(rc.perturbation, m.attribute_positions));
      total += s;
      worst = std::max(worst, s);
    }
    j["attention_sensitivity_mean"] = total / static_cast<double>(members.size());
    j["attention_sensitivity_max"] = worst;
  }
  const Text cont = backend.tokenize(model::split_tokens(rc.raw.continuation).empty() ? std::string(defaults::kContinuation)
                                                                                       : rc.raw.continuation);
  j["composite_score"] = metrics::composite_bias_score(g, backend, cont, rc.weights, rc.perturbation);
  return j;
}

inline int cmd_probe(const ResolvedConfig& rc, std::ostream& out) {
  const auto pack = lexicons_for(rc.raw);
  const auto templates = rc.raw.templates.empty() ? defaults::templates() : counterfactual::load_templates(rc.raw.templates);
  const auto backend = make_backend(rc);
  require_capabilities(*backend, rc.weights);
  if (!model::split_tokens(rc.raw.continuation).empty() && !backend->capabilities().has_logprobs)
    throw Error(ErrorKind::Unsupported, "--continuation needs log-probabilities; pass --continuation \"\" to skip");

  const auto groups = counterfactual::nested_controls(templates, pack);
  const auto anchors = defaults::category_anchors();
  const auto categories = metrics::CategoryModel::from_anchor_texts(*backend, anchors.labels, anchors.texts);

  nlohmann::json rows = nlohmann::json::array();
  std::size_t flagged = 0;
  for (const auto& g : groups) {
    try {
      rows.push_back(probe_group(g, *backend, categories, rc, pack));
    } catch (const Error& e) {
      rethrow_with_context(e, "template '" + g.template_id() + "', category '" + g.category() + "'");
    }
    flagged += rows.back()["flagged"].get<bool>() ? 1 : 0;
  }

  if (rc.raw.format == "csv") {
    std::ostringstream csv;
    csv << "template_id,category,members,max_embedding_distance,flagged,contrastive_loss,category_shift,"
           "probability_gap,attention_sensitivity_mean,composite_score\n";
    auto num = [](const nlohmann::json& r, const char* key) { return r.contains(key) ? r[key].dump() : std::string(); };
    for (const auto& r : rows)
      csv << r["template_id"].get<std::string>() << ',' << r["category"].get<std::string>() << ',' << r["members"] << ','
          << r["max_embedding_distance"] << ',' << (r["flagged"].get<bool>() ? "true" : "false") << ','
          << r["contrastive_loss"] << ',' << r["category_shift"] << ',' << num(r, "probability_gap") << ','
          << num(r, "attention_sensitivity_mean") << ',' << r["composite_score"] << '\n';
    write_text(rc.raw.out, csv.str(), out);
  } else {
    nlohmann::json report = provenance("probe", rc);
    report["model_id"] = backend->model_id();
    report["groups"] = std::move(rows);
    report["summary"] = {{"group_count", groups.size()}, {"flagged_count", flagged}};
    write_text(rc.raw.out, report.dump(2) + "\n", out);
  }
  return kOk;
}

// --- evaluate ------------------------------------------------------------------------

inline stereoset::EvaluationConfig evaluation_config(const ResolvedConfig& rc) {
  stereoset::EvaluationConfig ec;
  ec.score.weights = rc.weights;
  ec.score.perturbation = rc.perturbation;
  ec.score.continuation = rc.raw.continuation;
  ec.delta = rc.raw.delta;
  ec.bins = rc.raw.bins;
  ec.neutral_prefixes = defaults::neutral_prefixes();
  return ec;
}

inline int cmd_evaluate(const ResolvedConfig& rc, std::ostream& out, std::ostream& err) {
  if (rc.raw.dataset.empty()) throw Error(ErrorKind::InvalidConfig, "--dataset is required");
  const auto loaded = stereoset::load_stereoset(rc.raw.dataset);
  for (const auto& w : loaded.warnings) err << "warning: " << w << '\n';
  if (loaded.instances.empty()) throw Error(ErrorKind::EmptyResults, "no instances in '" + rc.raw.dataset + "'");
  const auto pack = lexicons_for(rc.raw);
  const auto backend = make_backend(rc);
  require_capabilities(*backend, rc.weights);

  const auto ev = stereoset::evaluate(loaded.instances, *backend, pack, evaluation_config(rc));
  if (rc.raw.format == "csv") {
    write_text(rc.raw.out, stereoset::report_to_csv(ev.report, loaded.instances.size(), loaded.skipped), out);
  } else {
    nlohmann::json report = provenance("evaluate", rc);
    report["model_id"] = backend->model_id();
    report["report"] = stereoset::report_to_json(ev.report);
    report["instances"] = loaded.instances.size();
    report["skipped_instances"] = loaded.skipped;
    report["counterfactual_groups"] = ev.group_count;
    nlohmann::json results = nlohmann::json::array();
    for (const auto& r : ev.results) results.push_back(stereoset::result_to_json(r));
    report["results"] = std::move(results);
    write_text(rc.raw.out, report.dump(2) + "\n", out);
  }
  return kOk;
}

// --- curve ---------------------------------------------------------------------------

/// Pairs from a `{"pairs": [[a, b], ...]}` file, or stereotype/anti-stereotype
/// pairs from any StereoSet-format dataset.
inline std::vector<std::pair<Text, Text>> load_pairs(const std::string& path, const model::Backend& backend) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open pair data '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string content = ss.str();
  nlohmann::json doc = nlohmann::json::parse(content, nullptr, false);
  if (!doc.is_discarded() && doc.is_object() && doc.contains("pairs")) {
    std::vector<std::pair<Text, Text>> pairs;
    try {
      for (const auto& p : doc["pairs"]) {
        if (!p.is_array() || p.size() != 2) throw Error(ErrorKind::FormatError, path + ": each pair must be [text, text]");
        pairs.emplace_back(backend.tokenize(p[0].get<std::string>()), backend.tokenize(p[1].get<std::string>()));
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::FormatError, path + ": " + e.what());
    }
    return pairs;
  }
  return stereoset::contrast_pairs(stereoset::parse_stereoset(content, path).instances);
}

inline int cmd_curve(const ResolvedConfig& rc, std::ostream& out) {
  if (rc.raw.dataset.empty()) throw Error(ErrorKind::InvalidConfig, "--dataset (pair data) is required");
  const auto pack = lexicons_for(rc.raw);
  const auto backend = make_backend(rc);
  const auto pairs = load_pairs(rc.raw.dataset, *backend);
  if (pairs.empty()) throw Error(ErrorKind::EmptyResults, "no text pairs in '" + rc.raw.dataset + "'");
  const auto bins = stereoset::alignment_curve(pairs, *backend, rc.raw.delta, rc.raw.bins, pack);

  nlohmann::json report = provenance("curve", rc);
  report["model_id"] = backend->model_id();
  report["pair_count"] = pairs.size();
  report["bins"] = stereoset::bins_to_json(bins);
  const std::string json_text = report.dump(2) + "\n";

  std::ostringstream csv;
  csv << "midpoint,conflict_rate\n";
  for (const auto& b : bins) {
    csv << stereoset::csv_number(b.midpoint()) << ',';
    if (auto rate = b.conflict_rate()) csv << stereoset::csv_number(*rate);
    csv << '\n';
  }

  const bool csv_primary = rc.raw.format == "csv";
  write_text(rc.raw.out, csv_primary ? csv.str() : json_text, out);
  if (!rc.raw.out.empty()) {
    std::filesystem::path sibling(rc.raw.out);
    sibling.replace_extension(csv_primary ? ".json" : ".csv");
    if (sibling != std::filesystem::path(rc.raw.out)) write_text(sibling.string(), csv_primary ? json_text : csv.str(), out);
  }
  return kOk;
}

// --- gen-fixture -----------------------------------------------------------------------

/// Forwards to another backend and remembers, in first-use order, every raw
/// text whose embedding or log-probabilities were requested. Single-threaded.
class RecordingBackend final : public model::Backend {
 public:
  explicit RecordingBackend(const model::Backend& inner) : inner_(inner) {}

  model::BackendCapabilities capabilities() const override { return inner_.capabilities(); }
  std::size_t dim() const override { return inner_.dim(); }
  std::string model_id() const override { return inner_.model_id(); }

  EmbeddingVector embed(const Text& text) const override {
    note(text);
    return inner_.embed(text);
  }
  ContinuationScore continuation_probability(const Text& prompt, const Text& continuation) const override {
    std::vector<std::string> tokens = prompt.tokens();
    tokens.insert(tokens.end(), continuation.tokens().begin(), continuation.tokens().end());
    note(Text(prompt.raw() + " " + continuation.raw(), std::move(tokens)));
    return inner_.continuation_probability(prompt, continuation);
  }
  AttentionTensor attentions(const Text& text) const override {
    note(text);
    return inner_.attentions(text);
  }
  EmbeddingVector embed_with_attention_override(const Text& text, const AttentionTensor& a) const override {
    note(text);
    return inner_.embed_with_attention_override(text, a);
  }

  const std::vector<Text>& texts() const noexcept { return order_; }

 private:
  void note(const Text& t) const {
    if (seen_.insert(t.raw()).second) order_.push_back(t);
  }

  const model::Backend& inner_;
  mutable std::set<std::string> seen_;
  mutable std::vector<Text> order_;
};

inline std::string item_id(std::size_t index) {
  std::string digits = std::to_string(index + 1);
  if (digits.size() < 3) digits.insert(0, 3 - digits.size(), '0');
  return "t" + digits;
}

/// Bundle covering every text the default probe, evaluate and curve runs
/// touch on the miniature fixture, so those commands also run against the
/// file backend (with the attention weight set to 0).
inline std::vector<model::BundleItem> fixture_bundle_items(const model::ReferenceModel& reference,
                                                           const std::vector<stereoset::StereoInstance>& instances,
                                                           const std::vector<std::pair<Text, Text>>& pairs,
                                                           const ResolvedConfig& rc) {
  RecordingBackend rec(reference);
  for (const auto& inst : instances) {
    rec.embed(inst.context());
    for (const auto& o : inst.options()) rec.embed(o.text);
  }
  const auto pack = defaults::lexicon_pack();
  stereoset::evaluate(instances, rec, pack, evaluation_config(rc));
  stereoset::alignment_curve(pairs, rec, rc.raw.delta, rc.raw.bins, pack);
  const auto anchors = defaults::category_anchors();
  const auto categories = metrics::CategoryModel::from_anchor_texts(rec, anchors.labels, anchors.texts);
  for (const auto& g : counterfactual::nested_controls(defaults::templates(), pack))
    probe_group(g, rec, categories, rc, pack);

  std::vector<model::BundleItem> items;
  items.reserve(rec.texts().size());
  for (std::size_t i = 0; i < rec.texts().size(); ++i) {
    const Text& t = rec.texts()[i];
    const EmbeddingVector emb = reference.embed(t);
    items.push_back({item_id(i), t.raw(), t.tokens(), std::vector<double>(emb.values().begin(), emb.values().end()),
                     reference.sequence_logprobs(t), std::nullopt});
  }
  return items;
}

inline int cmd_gen_fixture(const ResolvedConfig& rc, std::ostream& out) {
  const std::filesystem::path dir = rc.raw.out.empty() ? std::filesystem::path("fixture") : std::filesystem::path(rc.raw.out);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot create '" + dir.string() + "': " + ec.message());

  const nlohmann::json dataset = fixture::stereoset_json();
  const nlohmann::json pairs_doc = fixture::pairs_json();
  write_text((dir / "stereoset_mini.json").string(), dataset.dump(2) + "\n", out);
  write_text((dir / "pairs.json").string(), pairs_doc.dump(2) + "\n", out);
  write_text((dir / "lexicons.json").string(), counterfactual::lexicon_pack_to_json(defaults::lexicon_pack()).dump(2) + "\n", out);
  write_text((dir / "templates.json").string(), counterfactual::templates_to_json(defaults::templates()).dump(2) + "\n", out);

  model::ReferenceModelConfig mc;
  mc.seed = rc.seed;
  const model::ReferenceModel reference(mc);
  const auto instances = stereoset::parse_stereoset(dataset.dump(), "stereoset_mini.json").instances;
  std::vector<std::pair<Text, Text>> pairs;
  for (const auto& p : pairs_doc["pairs"])
    pairs.emplace_back(model::tokenize(p[0].get<std::string>()), model::tokenize(p[1].get<std::string>()));

  ResolvedConfig defaults_rc = rc;
  defaults_rc.weights = {};
  defaults_rc.perturbation = {};
  const auto items = fixture_bundle_items(reference, instances, pairs, defaults_rc);
  model::BundleHeader header{reference.dim(), std::string(model::kTokenizerName), reference.model_id()};
  const auto bundle_path = dir / "bundle.jsonl";
  std::ofstream f(bundle_path, std::ios::binary);
  if (!f) throw Error(ErrorKind::IoError, "cannot open '" + bundle_path.string() + "' for writing");
  model::write_bundle(f, header, items);
  if (!f) throw Error(ErrorKind::IoError, "write to '" + bundle_path.string() + "' failed");
  return kOk;
}

// --- entry point -------------------------------------------------------------------------

inline void add_common_options(CLI::App& cmd, RunConfig& cfg, std::uint64_t& seed_value) {
  cmd.add_option("--backend", cfg.backend, "Model backend: reference or file")->capture_default_str();
  cmd.add_option("--bundle", cfg.bundle, "Tensor-bundle file for --backend file");
  cmd.add_option("--seed", seed_value, "Reference-model seed (env BIASPROBE_SEED when absent; default 42)");
  cmd.add_option("--delta", cfg.delta, "Embedding-distance threshold")->capture_default_str();
  cmd.add_option("--margin", cfg.margin, "Contrastive hinge margin m")->capture_default_str();
  cmd.add_option("--perturb-mode", cfg.perturb_mode, "Attention perturbation: zero, scale or uniform")->capture_default_str();
  cmd.add_option("--lambda", cfg.lambda, "Scale factor for --perturb-mode scale")->capture_default_str();
  cmd.add_option("--weights", cfg.weights, "Composite weights embed,prob,attn")->capture_default_str();
  cmd.add_option("--bins", cfg.bins, "Alignment-curve bins")->capture_default_str();
  cmd.add_option("--format", cfg.format, "Output format: json or csv")->capture_default_str();
  cmd.add_option("--templates", cfg.templates, "Template pack JSON (default: built-in)");
  cmd.add_option("--lexicons", cfg.lexicons, "Lexicon pack JSON (default: built-in)");
  cmd.add_option("--dataset", cfg.dataset, "StereoSet JSON/JSONL, or pair data for curve");
  cmd.add_option("--out", cfg.out, "Output file (directory for gen-fixture); stdout when absent");
  cmd.add_option("--continuation", cfg.continuation, "Continuation scored under each prompt")->capture_default_str();
}

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Counterfactual stereotype probing for language-model outputs", "biasprobe"};
  app.require_subcommand(1);
  RunConfig cfg;
  std::uint64_t seed_value = 0;
  std::map<std::string, CLI::App*> commands;
  for (const char* name : {"probe", "evaluate", "curve", "gen-fixture"}) {
    static const std::map<std::string, std::string> help{
        {"probe", "Run every bias measure over template x lexicon counterfactual groups"},
        {"evaluate", "Score a StereoSet-format dataset and report detection metrics"},
        {"curve", "Similarity vs. bias-judgement conflict curve over text pairs"},
        {"gen-fixture", "Write the miniature dataset, pair data and a reference-model bundle"}};
    auto* sub = app.add_subcommand(name, help.at(name));
    add_common_options(*sub, cfg, seed_value);
    commands[name] = sub;
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return e.get_exit_code() == 0 ? kOk : kConfigError;
  }

  for (const auto& [name, sub] : commands)
    if (sub->parsed() && sub->count("--seed") > 0) cfg.seed = seed_value;

  try {
    const ResolvedConfig rc = resolve(cfg);
    if (commands["probe"]->parsed()) return cmd_probe(rc, out);
    if (commands["evaluate"]->parsed()) return cmd_evaluate(rc, out, err);
    if (commands["curve"]->parsed()) return cmd_curve(rc, out);
    return cmd_gen_fixture(rc, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternal;
  }
}

}  // namespace biasprobe::cli
