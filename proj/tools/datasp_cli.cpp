#include <malloc.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "datasp/datasp.hpp"

namespace fs = std::filesystem;
using namespace datasp;

namespace {

enum ExitCode { kOk = 0, kValidation = 2, kNumerical = 3, kVerification = 4 };

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::string out;
};

// Overwrites dst with src key by key, recursing into objects. Unknown keys
// are rejected so typos do not silently fall back to defaults.
void overlay(json& dst, const json& src, const std::string& where) {
  require(src.is_object(), where + " must be a JSON object");
  for (const auto& [key, value] : src.items()) {
    require(dst.contains(key), "unknown config key '" + where + key + "'");
    if (dst[key].is_object() && value.is_object()) {
      overlay(dst[key], value, where + key + ".");
    } else {
      dst[key] = value;
    }
  }
}

/// defaults <- config file <- DATASP_SEED <- --seed, then --workers / --out.
json resolve_config(json defaults, const CommonFlags& flags) {
  if (!flags.config.empty()) overlay(defaults, read_json(flags.config), "");
  if (const char* env = std::getenv("DATASP_SEED")) {
    try {
      defaults["seed"] = std::stoull(env);
    } catch (const std::exception&) {
      throw ValidationError("DATASP_SEED is not an unsigned integer");
    }
  }
  if (flags.seed) defaults["seed"] = *flags.seed;
  if (flags.workers) defaults["workers"] = *flags.workers;
  if (!flags.out.empty()) defaults["out"] = flags.out;
  return defaults;
}

template <class T>
T get(const json& cfg, const char* key) {
  try {
    return cfg.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config key '") + key + "': " + e.what());
  }
}

fs::path out_dir(const json& cfg) {
  const fs::path dir = get<std::string>(cfg, "out");
  fs::create_directories(dir);
  return dir;
}

// Relative input paths in a config resolve against the current directory.
std::optional<fs::path> optional_path(const json& cfg, const char* key) {
  if (!cfg.contains(key) || cfg[key].is_null()) return std::nullopt;
  const auto s = get<std::string>(cfg, key);
  if (s.empty()) return std::nullopt;
  return fs::path(s);
}

std::string format_double(double x) {
  if (std::isnan(x)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

std::uint64_t prior_hash(std::span<const double> prior) { return fnv1a(prior.data(), prior.size() * sizeof(double)); }

// ------------------------------------------------------------------ gen --

json generator_defaults() {
  const GeneratorConfig g;
  return {{"seed", g.seed},
          {"out", "data"},
          {"generator",
           {{"num_nodes", g.num_nodes},
            {"sparsity", g.sparsity},
            {"neighbours", g.neighbours},
            {"feature_dim", g.feature_dim},
            {"latent_dim", g.latent_dim},
            {"weight_scale", g.weight_scale},
            {"num_samples", g.num_samples},
            {"val_count", g.val_count},
            {"test_count", g.test_count},
            {"pair_pool_size", g.pair_pool_size},
            {"noise_scale", g.noise_scale},
            {"max_retries", g.max_retries}}}};
}

GeneratorConfig generator_config(const json& cfg) {
  const auto& g = cfg.at("generator");
  GeneratorConfig c;
  c.num_nodes = get<std::size_t>(g, "num_nodes");
  c.sparsity = get<double>(g, "sparsity");
  c.neighbours = get<std::size_t>(g, "neighbours");
  c.feature_dim = get<std::size_t>(g, "feature_dim");
  c.latent_dim = get<std::size_t>(g, "latent_dim");
  c.weight_scale = get<double>(g, "weight_scale");
  c.num_samples = get<std::size_t>(g, "num_samples");
  c.val_count = get<std::size_t>(g, "val_count");
  c.test_count = get<std::size_t>(g, "test_count");
  c.pair_pool_size = get<std::size_t>(g, "pair_pool_size");
  c.noise_scale = get<double>(g, "noise_scale");
  c.max_retries = get<std::size_t>(g, "max_retries");
  c.seed = get<std::uint64_t>(cfg, "seed");
  return c;
}

int cmd_gen(const CommonFlags& flags) {
  const json cfg = resolve_config(generator_defaults(), flags);
  const auto gc = generator_config(cfg);
  const auto dir = out_dir(cfg);
  const auto data = generate_synthetic_dataset(gc);
  write_json(dir / "gen_config.json", cfg);
  write_json(dir / "graph.json", graph_to_json(data.graph, data.prior, data.positions, false));
  write_file(dir / "trajectories.jsonl", trajectories_to_jsonl(data.dataset));
  json provenance;
  provenance["generator"] = cfg["generator"];
  provenance["seed"] = gc.seed;
  json pool = json::array();
  for (const auto& [s, d] : data.pair_pool) pool.push_back({s, d});
  provenance["pair_pool"] = std::move(pool);
  write_json(dir / "manifest.json", manifest_to_json({"graph.json", {"trajectories.jsonl"}, provenance}, data.dataset));
  std::cout << "nodes " << data.graph.node_count() << ", directed edges " << data.graph.edge_count() << ", records "
            << data.dataset.records.size() << " -> " << dir.string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------- train --

// Named hyperparameter profiles. "synthetic" is calibrated for the bundled
// generator, whose unit-square costs need a larger beta; "synthetic_beta1"
// keeps beta 1 and lr 1e-4; "real" uses batch 32 and 20% node sampling.
json training_profile(const std::string& name) {
  json t = {{"learning_rate", 1e-3},
            {"beta", 30.0},
            {"batch_size", 16},
            {"keep_count", 0},
            {"keep_fraction", 0.0},
            {"similarity_fraction", 0.01},
            {"alpha", 1e-5},
            {"epochs", 10},
            {"hidden", {128, 128, 128}},
            {"cost_floor", 1e-3},
            {"time_budget_seconds", 0.0},
            {"adam", {{"beta1", 0.9}, {"beta2", 0.999}, {"epsilon", 1e-8}}}};
  if (name == "synthetic") return t;
  if (name == "synthetic_beta1") {
    t["learning_rate"] = 1e-4;
    t["beta"] = 1.0;
    return t;
  }
  if (name == "real") {
    t["learning_rate"] = 1e-4;
    t["batch_size"] = 32;
    t["keep_fraction"] = 0.2;
    return t;
  }
  throw ValidationError("unknown training profile '" + name + "' (synthetic, synthetic_beta1, real)");
}

json train_defaults(const std::string& profile) {
  return {{"profile", profile}, {"seed", 0},         {"workers", 1},
          {"out", "run"},       {"dataset", nullptr}, {"init_checkpoint", nullptr},
          {"training", training_profile(profile)}};
}

TrainConfig train_config(const json& cfg, std::size_t node_count) {
  const auto& t = cfg.at("training");
  TrainConfig c;
  c.learning_rate = get<double>(t, "learning_rate");
  c.beta = get<double>(t, "beta");
  c.batch_size = get<std::size_t>(t, "batch_size");
  c.keep_count = get<std::size_t>(t, "keep_count");
  const double keep_fraction = get<double>(t, "keep_fraction");
  require(keep_fraction >= 0.0 && keep_fraction <= 1.0, "keep_fraction must be in [0, 1]");
  if (c.keep_count == 0 && keep_fraction > 0.0)
    c.keep_count = std::max<std::size_t>(2, static_cast<std::size_t>(std::lround(keep_fraction * node_count)));
  c.similarity_fraction = get<double>(t, "similarity_fraction");
  c.alpha = get<double>(t, "alpha");
  c.epochs = get<std::size_t>(t, "epochs");
  c.hidden = get<std::vector<std::size_t>>(t, "hidden");
  c.cost_floor = get<double>(t, "cost_floor");
  c.time_budget_seconds = get<double>(t, "time_budget_seconds");
  c.adam.beta1 = get<double>(t.at("adam"), "beta1");
  c.adam.beta2 = get<double>(t.at("adam"), "beta2");
  c.adam.epsilon = get<double>(t.at("adam"), "epsilon");
  c.seed = get<std::uint64_t>(cfg, "seed");
  c.workers = get<std::size_t>(cfg, "workers");
  c.validate(node_count);
  return c;
}

LoadedDataset load_dataset_from(const json& cfg) {
  const auto path = optional_path(cfg, "dataset");
  require(path.has_value(), "config key 'dataset' (a manifest path) is required");
  auto loaded = load_dataset(*path);
  require(!loaded.graph.prior.empty(), "graph has neither prior_costs nor node_positions");
  return loaded;
}

Checkpoint load_checkpoint(const fs::path& path, const GraphFile& graph) {
  auto c = decode_checkpoint(read_file(path));
  require(c.arch.edge_count == graph.graph.edge_count(), "checkpoint edge count does not match the graph");
  if (c.extra.contains("prior_hash"))
    require(c.extra["prior_hash"].get<std::string>() == hex64(prior_hash(graph.prior)),
            "checkpoint was trained against different prior costs");
  return c;
}

void write_checkpoint(const fs::path& path, const ModelArchitecture& arch, std::vector<double> params,
                      std::uint64_t step, std::optional<AdamState> adam, const TrainConfig& tc,
                      std::span<const double> prior) {
  Checkpoint c{arch, step, std::move(params), std::move(adam), json::object()};
  c.extra["beta"] = tc.beta;
  c.extra["seed"] = tc.seed;
  c.extra["prior_hash"] = hex64(prior_hash(prior));
  write_file(path, encode_checkpoint(c));
}

json step_json(const StepRecord& r) {
  return {{"step", r.step},
          {"L_S", r.shortcut},
          {"L_P", r.prior},
          {"grad_norm", r.grad_norm},
          {"kept_nodes", r.kept_nodes},
          {"skipped", r.skipped},
          {"skipped_anchors", r.skipped_anchors},
          {"floor_hits", r.floor_hits}};
}

int cmd_train(const CommonFlags& flags, const std::string& profile_flag) {
  std::string profile = profile_flag;
  if (profile.empty() && !flags.config.empty()) profile = read_json(flags.config).value("profile", "synthetic");
  if (profile.empty()) profile = "synthetic";
  const json cfg = resolve_config(train_defaults(profile), flags);
  require(get<std::string>(cfg, "profile") == profile, "profile changed while resolving the config");
  const auto loaded = load_dataset_from(cfg);
  const Graph& g = loaded.graph.graph;
  const auto tc = train_config(cfg, g.node_count());
  const auto dir = out_dir(cfg);
  write_json(dir / "train_config.json", cfg);

  const TrainingProblem prob(g, loaded.dataset, loaded.graph.prior, tc);
  TrainState init;
  if (const auto path = optional_path(cfg, "init_checkpoint")) {
    auto c = load_checkpoint(*path, loaded.graph);
    require(c.arch == prob.model.architecture(), "init_checkpoint architecture differs from the configured model");
    init = {std::move(c.params), c.adam.value_or(AdamState{}), c.step};
  } else {
    init = {prob.model.init_params(mix_seed(tc.seed, 0x1a17)), {}, 0};
  }

  std::string log;
  std::string epochs_log;
  std::optional<StepRecord> last;
  const auto start = std::chrono::steady_clock::now();
  TrainResult res;
  try {
    res = train_loop(
        prob, tc, init,
        [&](const StepRecord& r) {
          log += step_json(r).dump() + "\n";
          last = r;
        },
        [&](const EpochRecord& e) {
          epochs_log += json{{"epoch", e.epoch}, {"val_jaccard", e.val_jaccard}, {"mean_L_S", e.mean_shortcut}}.dump() +
                        "\n";
          std::cerr << "epoch " << e.epoch << "  mean L_S " << e.mean_shortcut << "  val Jaccard " << e.val_jaccard
                    << "  (" << e.seconds << " s)\n";
        });
  } catch (const NumericalError& e) {
    write_file(dir / "train_log.jsonl", log);
    json dump = {{"error", e.what()}, {"last_completed_step", last ? json(last->step) : json(nullptr)}};
    write_json(dir / "nonfinite_dump.json", dump);
    throw;
  }
  write_file(dir / "train_log.jsonl", log);
  write_file(dir / "epochs.jsonl", epochs_log);
  const auto& arch = prob.model.architecture();
  write_checkpoint(dir / "best.ckpt", arch, res.best_params, res.state.step, std::nullopt, tc, loaded.graph.prior);
  std::optional<AdamState> adam;
  if (!res.state.adam.m.empty()) adam = res.state.adam;
  write_checkpoint(dir / "last.ckpt", arch, res.state.params, res.state.step, adam, tc, loaded.graph.prior);
  json summary = {{"best_epoch", res.best_epoch},
                  {"best_val_jaccard", prob.val.empty() ? json(nullptr) : json(res.best_val_jaccard)},
                  {"steps", res.steps.size()},
                  {"final_step", res.state.step},
                  {"keep_count", tc.keep_count == 0 ? g.node_count() : tc.keep_count},
                  {"stopped_by_budget", res.stopped_by_budget},
                  {"checkpoint_hash", file_hash(dir / "best.ckpt")}};
  write_json(dir / "train_summary.json", summary);
  std::cout << "trained " << res.steps.size() << " steps in "
            << std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()
            << " s; best epoch " << res.best_epoch << ", val Jaccard " << res.best_val_jaccard << "\n";
  return kOk;
}

// ----------------------------------------------------------------- eval --

json eval_defaults() {
  return {{"seed", 0}, {"workers", 1}, {"out", "eval"}, {"dataset", nullptr}, {"checkpoint", nullptr}, {"split", "test"}};
}

int cmd_eval(const CommonFlags& flags) {
  const json cfg = resolve_config(eval_defaults(), flags);
  const auto loaded = load_dataset_from(cfg);
  const Graph& g = loaded.graph.graph;
  const auto split = parse_split(get<std::string>(cfg, "split"));
  const auto idx = loaded.dataset.indices(split);
  require(!idx.empty(), std::string("split '") + split_name(split) + "' is empty");
  const auto dir = out_dir(cfg);
  write_json(dir / "eval_config.json", cfg);

  std::vector<std::pair<std::string, EvalMetrics>> rows;
  const auto& prior = loaded.graph.prior;
  rows.emplace_back("PRIOR", evaluate_paths(g, loaded.dataset, idx, [&](const Record&) { return prior; }));
  std::string ckpt_hash;
  if (const auto path = optional_path(cfg, "checkpoint")) {
    const auto c = load_checkpoint(*path, loaded.graph);
    const CostModel model(c.arch, prior);
    ckpt_hash = file_hash(*path);
    rows.emplace_back("DataSP", evaluate_paths(g, loaded.dataset, idx, [&](const Record& r) {
                        return model.predict(c.params, r.context.features);
                      }));
  }
  std::string csv = "method,jaccard_mean,jaccard_std,match_pct,optimal_cost_pct,n_test\n";
  json doc = {{"split", split_name(split)}, {"checkpoint_hash", ckpt_hash.empty() ? json(nullptr) : json(ckpt_hash)}};
  json methods = json::array();
  for (const auto& [name, m] : rows) {
    csv += name + "," + format_double(m.jaccard_mean) + "," + format_double(m.jaccard_std) + "," +
           format_double(100.0 * m.match) + "," + format_double(100.0 * m.optimal_cost) + "," +
           std::to_string(m.count) + "\n";
    methods.push_back({{"method", name},
                       {"jaccard_mean", m.jaccard_mean},
                       {"jaccard_std", m.jaccard_std},
                       {"match_pct", 100.0 * m.match},
                       {"optimal_cost_pct", std::isnan(m.optimal_cost) ? json(nullptr) : json(100.0 * m.optimal_cost)},
                       {"n_test", m.count}});
  }
  doc["methods"] = std::move(methods);
  write_file(dir / "metrics.csv", csv);
  write_json(dir / "metrics.json", doc);
  std::cout << csv;
  return kOk;
}

// ------------------------------------------------------------ inference --

struct CostSource {
  GraphFile graph;
  std::vector<double> costs;
  std::optional<std::string> checkpoint_hash;
  std::optional<Record> record;
};

// Graph from "dataset" or "graph"; costs from the checkpoint applied to
// "context" or to dataset record "record", else the prior costs.
CostSource cost_source(const json& cfg) {
  CostSource src;
  std::optional<Dataset> ds;
  if (const auto manifest = optional_path(cfg, "dataset")) {
    auto loaded = load_dataset(*manifest);
    src.graph = std::move(loaded.graph);
    ds = std::move(loaded.dataset);
  } else if (const auto graph = optional_path(cfg, "graph")) {
    src.graph = graph_from_json(read_json(*graph));
  } else {
    throw ValidationError("config needs 'dataset' or 'graph'");
  }
  require(!src.graph.prior.empty(), "graph has neither prior_costs nor node_positions");
  std::optional<std::vector<double>> context;
  if (!cfg["record"].is_null()) {
    require(ds.has_value(), "'record' needs a dataset");
    const auto r = get<std::size_t>(cfg, "record");
    require(r < ds->records.size(), "'record' is out of range");
    src.record = ds->records[r];
    context = src.record->context.features;
  }
  if (!cfg["context"].is_null()) context = get<std::vector<double>>(cfg, "context");
  src.costs = src.graph.prior;
  if (const auto path = optional_path(cfg, "checkpoint")) {
    require(context.has_value(), "a checkpoint needs 'context' or 'record'");
    const auto c = load_checkpoint(*path, src.graph);
    src.costs = CostModel(c.arch, src.graph.prior).predict(c.params, *context);
    src.checkpoint_hash = file_hash(*path);
  }
  return src;
}

json inference_defaults() {
  return {{"seed", 0},          {"workers", 1},         {"out", "infer"},     {"dataset", nullptr},
          {"graph", nullptr},   {"checkpoint", nullptr}, {"context", nullptr}, {"record", nullptr},
          {"beta", 30.0}};
}

int cmd_sample_paths(const CommonFlags& flags) {
  json defaults = inference_defaults();
  defaults["tensor"] = nullptr;
  defaults["source"] = nullptr;
  defaults["target"] = nullptr;
  defaults["num_samples"] = 1000;
  defaults["reject_cycles"] = false;
  defaults["save_tensor"] = false;
  const json cfg = resolve_config(defaults, flags);
  const double beta = get<double>(cfg, "beta");
  const auto dir = out_dir(cfg);

  ShortcutTensor p;
  std::optional<std::string> ckpt_hash;
  std::optional<Record> record;
  if (const auto tensor = optional_path(cfg, "tensor")) {
    p = shortcut_tensor_from(decode_tensor(read_file(*tensor)));
  } else {
    auto src = cost_source(cfg);
    p = std::move(datasp_forward_efficient(build_cost_matrix(src.costs, src.graph.graph), Beta(beta)).shortcuts);
    ckpt_hash = src.checkpoint_hash;
    record = src.record;
  }
  Node source = 0, target = 0;
  if (cfg["source"].is_null() || cfg["target"].is_null()) {
    require(record.has_value(), "'source' and 'target' are required unless 'record' is given");
    source = record->paths.front().front();
    target = record->paths.front().back();
  }
  if (!cfg["source"].is_null()) source = get<Node>(cfg, "source");
  if (!cfg["target"].is_null()) target = get<Node>(cfg, "target");
  require(source < p.size() && target < p.size() && source != target, "source and target must be distinct nodes");
  require(p.reachable(source, target), "target is unreachable from source");
  write_json(dir / "sample_paths_config.json", cfg);

  std::mt19937_64 rng(get<std::uint64_t>(cfg, "seed"));
  const auto est = monte_carlo_path_distribution(p, source, target, get<std::size_t>(cfg, "num_samples"), rng,
                                                 get<bool>(cfg, "reject_cycles"));
  std::vector<std::pair<Path, std::size_t>> rows(est.counts.begin(), est.counts.end());
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  const json hash = ckpt_hash ? json(*ckpt_hash) : json(nullptr);
  std::string lines;
  for (const auto& [path, count] : rows)
    lines += json{{"path", path}, {"count", count}, {"freq", est.frequency(path)}, {"beta", beta}, {"checkpoint_hash", hash}}
                 .dump() +
             "\n";
  write_file(dir / "paths.jsonl", lines);
  write_json(dir / "sample_paths_summary.json", {{"source", source},
                                                 {"target", target},
                                                 {"beta", beta},
                                                 {"checkpoint_hash", hash},
                                                 {"accepted", est.sample_count},
                                                 {"rejected_cycles", est.rejected_count},
                                                 {"attempts", est.attempts},
                                                 {"resample_events", est.resample_events},
                                                 {"distinct_paths", rows.size()}});
  if (get<bool>(cfg, "save_tensor")) write_file(dir / "shortcuts.dsptnsr", encode_tensor(to_tensor(p)));
  std::cout << rows.size() << " distinct paths from " << est.sample_count << " samples (" << est.rejected_count
            << " cyclic rejected)\n";
  return kOk;
}

int cmd_predict_dest(const CommonFlags& flags) {
  json defaults = inference_defaults();
  defaults["partial"] = nullptr;
  defaults["prior"] = "uniform";
  const json cfg = resolve_config(defaults, flags);
  const double beta = get<double>(cfg, "beta");
  const auto src = cost_source(cfg);
  const auto dir = out_dir(cfg);
  Path partial;
  if (!cfg["partial"].is_null()) {
    partial = get<Path>(cfg, "partial");
  } else {
    require(src.record.has_value(), "'partial' is required unless 'record' is given");
    const auto& full = src.record->paths.front();
    // The first half of the record's path, at least one edge long.
    const std::size_t keep = std::min(full.size(), std::max<std::size_t>(2, (full.size() + 1) / 2));
    partial.assign(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(keep));
  }
  require(!partial.empty(), "'partial' must contain at least one node");
  const std::size_t n = src.graph.graph.node_count();
  const CostMatrix m = build_cost_matrix(src.costs, src.graph.graph);
  DestinationPrior prior;
  const json& pc = cfg["prior"];
  if (pc.is_string() && pc.get<std::string>() == "uniform") {
    prior = DestinationPrior::uniform(n);
  } else if (pc.is_string() && pc.get<std::string>() == "exp_negative_distance") {
    prior = DestinationPrior::exp_negative_distance(m, partial.back());
  } else if (pc.is_object() && pc.contains("mask")) {
    prior = DestinationPrior::custom_mask(pc["mask"].get<std::vector<double>>());
  } else {
    throw ValidationError("'prior' must be \"uniform\", \"exp_negative_distance\" or {\"mask\": [...]}");
  }
  write_json(dir / "predict_dest_config.json", cfg);
  const auto probs = destination_likelihood(m, Beta(beta), partial, prior);
  json table = json::object();
  for (Node x = 0; x < n; ++x) table[std::to_string(x)] = probs[x];
  const auto best = static_cast<Node>(std::max_element(probs.begin(), probs.end()) - probs.begin());
  write_json(dir / "destination.json", {{"probabilities", table},
                                        {"prior", prior_kind_name(prior.kind)},
                                        {"partial", partial},
                                        {"most_likely", best},
                                        {"beta", beta},
                                        {"checkpoint_hash", src.checkpoint_hash ? json(*src.checkpoint_hash) : json(nullptr)}});
  std::cout << "most likely destination " << best << " (p = " << probs[best] << ")\n";
  return kOk;
}

// --------------------------------------------------------------- verify --

CostMatrix abs_difference_fixture() {
  CostMatrix m(4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      if (i != j) m(i, j) = std::abs(static_cast<double>(i) - static_cast<double>(j));
  return m;
}

// KL of P against the shortest-path shortcut frequencies of every reachable
// pair, as a function of the cost matrix entries.
double fixture_kl(const CostMatrix& m, Beta beta, const FrequencyTensor& f, std::vector<double>* grad) {
  const auto fwd = datasp_forward_efficient(m, beta);
  const auto l = shortcut_loss(fwd.shortcuts, f);
  if (grad) *grad = datasp_backward(fwd.tape, l.grad, std::vector<double>(m.size() * m.size(), 0.0));
  return l.value;
}

int cmd_verify(const CommonFlags& flags) {
  const json defaults = {{"seed", 0},
                         {"workers", 1},
                         {"out", "verify"},
                         {"graph", nullptr},
                         {"betas", {1.0}},
                         {"num_samples", 100000},
                         {"tolerance", {{"identity", 1e-9}, {"tv", 0.01}, {"gradient", 1e-4}, {"smooth_ops", 1e-6}}}};
  const json cfg = resolve_config(defaults, flags);
  CostMatrix m = abs_difference_fixture();
  std::string source = "abs_difference_fixture";
  if (const auto path = optional_path(cfg, "graph")) {
    const auto gf = graph_from_json(read_json(*path));
    require(!gf.prior.empty(), "verify graph needs prior_costs or node_positions");
    m = build_cost_matrix(gf.prior, gf.graph);
    source = path->string();
  }
  const auto dir = out_dir(cfg);
  write_json(dir / "verify_config.json", cfg);
  const auto& tol = cfg.at("tolerance");
  const double tol_thm = get<double>(tol, "identity"), tol_tv = get<double>(tol, "tv");
  const double tol_grad = get<double>(tol, "gradient"), tol_smooth = get<double>(tol, "smooth_ops");
  const std::size_t n = m.size();
  const auto num_samples = get<std::size_t>(cfg, "num_samples");
  std::mt19937_64 rng(get<std::uint64_t>(cfg, "seed"));

  json report = {{"source", source}, {"nodes", n}};
  bool passed = true;

  // Walk support of the (0, n-1) pair.
  try {
    const auto walks = enumerate_visitable_walks(m, 0, n - 1, n - 1);
    std::map<double, std::size_t> multiset;
    for (const auto& w : walks) ++multiset[w.cost];
    json costs = json::array();
    for (const auto& [c, k] : multiset) costs.push_back({{"cost", c}, {"count", k}});
    report["walk_support"] = {{"pair", {0, n - 1}}, {"walks", walks.size()}, {"cost_multiset", costs}};
  } catch (const OracleRefusal& e) {
    report["walk_support"] = {{"refused", e.what()}};
  }

  json per_beta = json::array();
  for (double b : get<std::vector<double>>(cfg, "betas")) {
    const Beta beta(b);
    json entry = {{"beta", b}};
    try {
      double t1 = 0.0, t2 = 0.0;
      for (auto v : {ForwardVariant::reference, ForwardVariant::efficient}) {
        t1 = std::max(t1, verify_distance_identity(m, beta, v));
        t2 = std::max(t2, verify_shortcut_identity(m, beta, v));
      }
      entry["distance_identity_max_deviation"] = t1;
      entry["shortcut_identity_max_deviation"] = t2;
      passed = passed && t1 <= tol_thm && t2 <= tol_thm;

      const auto fwd = datasp_forward_efficient(m, beta);
      double tv = 0.0;
      std::size_t pairs = 0;
      for (Node i = 0; i < n; ++i)
        for (Node j = 0; j < n; ++j)
          if (i != j && fwd.shortcuts.reachable(i, j)) {
            tv = std::max(tv, verify_sampler_distribution(fwd.shortcuts, m, beta, i, j, num_samples, rng));
            ++pairs;
          }
      entry["sampler_max_tv"] = tv;
      entry["sampler_pairs"] = pairs;
      passed = passed && tv <= tol_tv;
    } catch (const OracleRefusal& e) {
      entry["refused"] = e.what();
    }

    std::vector<Path> shortest;
    for (Node i = 0; i < n; ++i)
      for (Node j = 0; j < n; ++j)
        if (i != j)
          if (const auto sp = dijkstra(m, i, j)) shortest.push_back(sp->nodes);
    if (!shortest.empty()) {
      const auto f = build_frequency_tensor(shortest, n);
      std::vector<double> analytic;
      fixture_kl(m, beta, f, &analytic);
      std::vector<double> x(m.data().begin(), m.data().end());
      const auto check = finite_difference_gradcheck(
          [&](std::span<const double> q) {
            CostMatrix mq(n);
            std::copy(q.begin(), q.end(), mq.data().begin());
            return fixture_kl(mq, beta, f, nullptr);
          },
          x, analytic, 1e-5);
      entry["gradient_max_rel_error"] = check.max_rel_error;
      passed = passed && check.max_rel_error <= tol_grad;
    }

    const std::vector<double> v{0.3, 1.7, kInf, 0.9, 2.5};
    const auto w = softmin_weights(v, beta);
    const auto smooth = finite_difference_gradcheck(
        [&](std::span<const double> q) { return softmin_value(q, beta); }, v, w, 1e-6);
    entry["smooth_ops_max_rel_error"] = smooth.max_rel_error;
    passed = passed && smooth.max_rel_error <= tol_smooth;
    per_beta.push_back(std::move(entry));
  }
  report["checks"] = std::move(per_beta);
  report["passed"] = passed;
  write_json(dir / "verify_report.json", report);
  std::cout << report.dump(2) << "\n";
  return passed ? kOk : kVerification;
}

}  // namespace

int main(int argc, char** argv) {
  // The forward tape is allocated and freed once per training step; keep
  // those blocks in the heap instead of fresh mmaps.
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);

  CLI::App app{"DataSP: differentiable all-pairs shortest paths learned from trajectories"};
  app.require_subcommand(1);
  CommonFlags flags;
  std::string profile;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", flags.seed, "seed override (also DATASP_SEED)");
    sub->add_option("--workers", flags.workers, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out", flags.out, "output directory");
  };
  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  auto* train = app.add_subcommand("train", "train the context-to-cost model");
  train->add_option("--profile", profile, "hyperparameter profile: synthetic, synthetic_beta1, real");
  auto* eval = app.add_subcommand("eval", "evaluate the model and the PRIOR baseline");
  auto* sample = app.add_subcommand("sample-paths", "sample paths between two nodes");
  auto* dest = app.add_subcommand("predict-dest", "destination likelihood of a partial trajectory");
  auto* verify = app.add_subcommand("verify", "check the engine against the walk-enumeration oracle");
  for (auto* sub : {gen, train, eval, sample, dest, verify}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kValidation;
  }
  try {
    if (gen->parsed()) return cmd_gen(flags);
    if (train->parsed()) return cmd_train(flags, profile);
    if (eval->parsed()) return cmd_eval(flags);
    if (sample->parsed()) return cmd_sample_paths(flags);
    if (dest->parsed()) return cmd_predict_dest(flags);
    if (verify->parsed()) return cmd_verify(flags);
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kValidation;
  } catch (const NoFiniteBranchError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kValidation;
  } catch (const GenerationError& e) {
    std::cerr << "generation failed: " << e.what() << "\n";
    return kValidation;
  } catch (const json::exception& e) {
    std::cerr << "invalid JSON value: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kValidation;
}
