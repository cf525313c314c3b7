#pragma once

// Losses and the learning loop: predict costs for an anchor context,
// compress the graph, fit P to the shortcut frequencies of the anchor's most
// similar contexts, and push the gradient back to the network.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "datasp/cost_model.hpp"
#include "datasp/engine.hpp"
#include "datasp/exclusion.hpp"
#include "datasp/inference.hpp"
#include "datasp/shortest_paths.hpp"
#include "datasp/synthetic.hpp"
#include "datasp/trajectory.hpp"

namespace datasp {

struct TrainConfig {
  double learning_rate = 1e-4;
  double beta = 1.0;
  std::size_t batch_size = 16;       // anchors per optimizer update
  std::size_t keep_count = 0;        // nodes kept per step; 0 keeps all
  double similarity_fraction = 0.01;
  double alpha = 1e-5;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  AdamConfig adam;
  std::size_t workers = 1;
  std::vector<std::size_t> hidden{128, 128, 128};
  double cost_floor = 1e-3;
  double time_budget_seconds = 0.0;  // 0 means unlimited

  void validate(std::size_t node_count) const {
    require(learning_rate >= 0.0 && std::isfinite(learning_rate), "learning_rate must be >= 0");
    require(beta > 0.0 && std::isfinite(beta), "beta must be positive");
    require(batch_size >= 1, "batch_size must be >= 1");
    require(keep_count == 0 || (keep_count >= 2 && keep_count <= node_count),
            "keep_count must be 0 or in [2, |V|]");
    require(similarity_fraction > 0.0 && similarity_fraction <= 1.0, "similarity_fraction must be in (0, 1]");
    require(alpha >= 0.0, "alpha must be >= 0");
    require(workers >= 1, "workers must be >= 1");
    require(cost_floor > 0.0, "cost_floor must be positive");
  }
};

inline constexpr double kProbabilityFloor = 1e-12;

struct LossWithGrad {
  double value = 0.0;
  std::vector<double> grad;
  std::size_t floor_hits = 0;  // observed shortcuts P assigns (almost) no mass
};

/// (1/|D|) sum over observed pairs of KL(F[i,j,.] || P[i,j,.]), with P
/// floored at p_floor inside the log. The gradient is zero outside D.
inline LossWithGrad shortcut_loss(const ShortcutTensor& p, const FrequencyTensor& f,
                                  double p_floor = kProbabilityFloor) {
  const std::size_t n = p.size();
  require(f.node_count() == n, "shortcut_loss: F and P sizes differ");
  require(!f.empty(), "shortcut_loss: empty batch");
  LossWithGrad out{0.0, std::vector<double>(n * n * n, 0.0), 0};
  const double scale = 1.0 / static_cast<double>(f.pairs().size());
  for (const auto& pair : f.pairs())
    for (const auto& [k, fk] : pair.shortcuts) {
      if (fk <= 0.0) continue;
      const double pk = p(pair.i, pair.j, k);
      if (pk <= p_floor) {
        ++out.floor_hits;
        out.value += scale * fk * std::log(fk / p_floor);
        continue;
      }
      out.value += scale * fk * std::log(fk / pk);
      out.grad[(pair.i * n + pair.j) * n + k] = -scale * fk / pk;
    }
  return out;
}

/// Mean squared deviation from the prior costs.
inline LossWithGrad prior_loss(std::span<const double> costs, std::span<const double> prior) {
  require(costs.size() == prior.size() && !costs.empty(), "prior_loss: length mismatch");
  LossWithGrad out{0.0, std::vector<double>(costs.size()), 0};
  const double inv = 1.0 / static_cast<double>(costs.size());
  for (std::size_t e = 0; e < costs.size(); ++e) {
    const double d = costs[e] - prior[e];
    out.value += inv * d * d;
    out.grad[e] = 2.0 * inv * d;
  }
  return out;
}

/// Everything fixed across training steps.
struct TrainingProblem {
  const Graph& graph;
  const Dataset& dataset;
  CostModel model;
  std::vector<std::size_t> train;             // record indices
  std::vector<std::size_t> val;
  std::vector<std::vector<std::size_t>> batches;  // similarity batch per train position
  std::vector<double> node_frequencies;

  TrainingProblem(const Graph& g, const Dataset& ds, std::span<const double> prior, const TrainConfig& cfg)
      : graph(g), dataset(ds) {
    cfg.validate(g.node_count());
    validate_priors(prior, g);
    validate_dataset(ds, g);
    train = ds.indices(Split::train);
    val = ds.indices(Split::val);
    require(!train.empty(), "training split is empty");
    const std::size_t dim = ds.records[train.front()].context.features.size();
    model = CostModel({dim, cfg.hidden, g.edge_count(), cfg.cost_floor}, {prior.begin(), prior.end()});
    batches.reserve(train.size());
    for (std::size_t r : train) batches.push_back(batch_by_context_similarity(ds, train, r, cfg.similarity_fraction));
    node_frequencies = datasp::node_frequencies(ds, train, g.node_count());
  }
};

struct AnchorResult {
  double shortcut = 0.0;
  double prior = 0.0;
  std::vector<double> grad;  // d(L_S + alpha L_P)/dparams
  std::size_t kept_nodes = 0;
  std::size_t floor_hits = 0;
  bool skipped = false;
  std::string reason;
};

/// Loss and parameter gradient for one anchor (train position `pos`).
inline AnchorResult anchor_gradient(const TrainingProblem& prob, std::span<const double> params,
                                    std::size_t pos, const TrainConfig& cfg, std::uint64_t seed) {
  const Graph& g = prob.graph;
  const std::size_t n = g.node_count();
  const Beta beta(cfg.beta);
  const auto& anchor = prob.dataset.records[prob.train[pos]];

  CostModel::Cache cache;
  const auto costs = prob.model.predict(params, anchor.context.features, &cache);
  const CostMatrix m = build_cost_matrix(costs, g);
  const std::size_t keep = cfg.keep_count == 0 ? n : cfg.keep_count;
  const auto comp = sample_subgraph(g, m, keep, prob.node_frequencies, seed, beta);

  AnchorResult out;
  out.kept_nodes = comp.kept.size();
  std::vector<Path> paths;
  for (std::size_t r : prob.batches[pos])
    for (const auto& p : prob.dataset.records[r].paths)
      if (auto q = apply_node_exclusion_to_path(p, comp.remap)) paths.push_back(std::move(*q));
  if (paths.empty()) {
    out.skipped = true;
    out.reason = "no observed path keeps two nodes after exclusion";
    return out;
  }
  const auto f = build_frequency_tensor(paths, comp.kept.size());
  const auto fwd = datasp_forward_efficient(comp.matrix, beta);
  const auto ls = shortcut_loss(fwd.shortcuts, f);
  const auto lp = prior_loss(costs, prob.model.prior());
  out.shortcut = ls.value;
  out.prior = lp.value;
  out.floor_hits = ls.floor_hits;

  const std::vector<double> no_grad_m(comp.kept.size() * comp.kept.size(), 0.0);
  const auto g_comp = datasp_backward(fwd.tape, ls.grad, no_grad_m);
  const auto g_full = comp.chain.backward(g_comp);
  auto g_costs = gather_edge_gradient(g_full, g);
  for (std::size_t e = 0; e < g_costs.size(); ++e) g_costs[e] += cfg.alpha * lp.grad[e];
  out.grad = prob.model.backward(params, cache, g_costs);
  return out;
}

struct StepRecord {
  std::uint64_t step = 0;
  double shortcut = 0.0;  // mean over non-skipped anchors
  double prior = 0.0;
  double grad_norm = 0.0;
  double kept_nodes = 0.0;
  std::size_t anchors = 0;
  std::size_t skipped_anchors = 0;
  std::size_t floor_hits = 0;
  bool skipped = false;
};

struct TrainState {
  std::vector<double> params;
  AdamState adam;
  std::uint64_t step = 0;
};

namespace detail {

template <class F>
void parallel_for(std::size_t count, std::size_t workers, F&& body) {
  workers = std::max<std::size_t>(1, std::min(workers, count));
  if (workers == 1) {
    for (std::size_t t = 0; t < count; ++t) body(t);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t t = w; t < count; t += workers) body(t);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace detail

/// One optimizer update from the anchors at train positions `anchors`;
/// their gradients are averaged.
inline StepRecord train_step(const TrainingProblem& prob, TrainState& state, std::span<const std::size_t> anchors,
                             const TrainConfig& cfg) {
  std::vector<AnchorResult> results(anchors.size());
  const std::uint64_t step = state.step;
  detail::parallel_for(anchors.size(), cfg.workers, [&](std::size_t t) {
    results[t] = anchor_gradient(prob, state.params, anchors[t], cfg,
                                 mix_seed(cfg.seed, step, prob.train[anchors[t]]));
  });

  StepRecord rec;
  rec.step = step;
  rec.anchors = anchors.size();
  std::vector<double> grad(state.params.size(), 0.0);
  std::size_t used = 0;
  for (std::size_t t = 0; t < results.size(); ++t) {
    const auto& r = results[t];
    if (r.skipped) {
      ++rec.skipped_anchors;
      continue;
    }
    if (!std::isfinite(r.shortcut) || !std::isfinite(r.prior) || !detail::all_finite(r.grad)) {
      std::ostringstream msg;
      msg << "non-finite loss or gradient at step " << step << ", anchor record " << prob.train[anchors[t]]
          << ": L_S=" << r.shortcut << " L_P=" << r.prior << " kept=" << r.kept_nodes;
      throw NumericalError(msg.str());
    }
    ++used;
    rec.shortcut += r.shortcut;
    rec.prior += r.prior;
    rec.kept_nodes += static_cast<double>(r.kept_nodes);
    rec.floor_hits += r.floor_hits;
    for (std::size_t q = 0; q < grad.size(); ++q) grad[q] += r.grad[q];
  }
  ++state.step;
  if (used == 0) {
    rec.skipped = true;
    return rec;
  }
  const double inv = 1.0 / static_cast<double>(used);
  rec.shortcut *= inv;
  rec.prior *= inv;
  rec.kept_nodes *= inv;
  double sq = 0.0;
  for (double& x : grad) {
    x *= inv;
    sq += x * x;
  }
  rec.grad_norm = std::sqrt(sq);
  adam_update(state.params, grad, cfg.learning_rate, cfg.adam, state.adam);
  return rec;
}

struct EvalMetrics {
  double jaccard_mean = 0.0;
  double jaccard_std = 0.0;
  double match = 0.0;
  double optimal_cost = std::numeric_limits<double>::quiet_NaN();  // NaN without true costs
  std::size_t count = 0;
};

/// Predicts the observed path of every record in `indices` with Dijkstra on
/// the costs returned by `predict` and scores it against the first path.
inline EvalMetrics evaluate_paths(const Graph& g, const Dataset& ds, std::span<const std::size_t> indices,
                                  const std::function<std::vector<double>(const Record&)>& predict) {
  require(!indices.empty(), "evaluation split is empty");
  std::vector<Path> preds, obs;
  std::vector<CostMatrix> truth;
  bool have_truth = true;
  for (std::size_t r : indices) {
    const auto& rec = ds.records[r];
    require(!rec.paths.empty(), "evaluation record without a path");
    const Path& o = rec.paths.front();
    preds.push_back(expected_optimal_path(predict(rec), g, o.front(), o.back()));
    obs.push_back(o);
    if (rec.true_costs.empty()) have_truth = false;
    else truth.push_back(build_cost_matrix(rec.true_costs, g));
  }
  EvalMetrics m;
  m.count = preds.size();
  std::vector<double> jac;
  for (std::size_t t = 0; t < preds.size(); ++t)
    jac.push_back(preds[t].size() < 2 ? 0.0 : jaccard_edges(preds[t], obs[t]));
  for (double j : jac) m.jaccard_mean += j / static_cast<double>(jac.size());
  for (double j : jac) m.jaccard_std += (j - m.jaccard_mean) * (j - m.jaccard_mean) / static_cast<double>(jac.size());
  m.jaccard_std = std::sqrt(m.jaccard_std);
  m.match = match_rate(preds, obs);
  if (have_truth) m.optimal_cost = optimal_cost_rate(preds, obs, truth);
  return m;
}

inline EvalMetrics evaluate_model(const TrainingProblem& prob, std::span<const double> params,
                                  std::span<const std::size_t> indices) {
  return evaluate_paths(prob.graph, prob.dataset, indices,
                        [&](const Record& r) { return prob.model.predict(params, r.context.features); });
}

struct EpochRecord {
  std::size_t epoch = 0;
  double val_jaccard = std::numeric_limits<double>::quiet_NaN();
  double mean_shortcut = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  TrainState state;
  std::vector<double> best_params;
  double best_val_jaccard = -1.0;
  std::size_t best_epoch = 0;  // 0 is the initial model
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  bool stopped_by_budget = false;
};

/// Shuffled anchors per epoch, batch_size anchors per update, validation
/// Jaccard after every epoch, best parameters retained. Deterministic for a
/// given seed regardless of the worker count.
inline TrainResult train_loop(const TrainingProblem& prob, const TrainConfig& cfg, TrainState initial,
                              const std::function<void(const StepRecord&)>& on_step = {},
                              const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(Clock::now() - start).count(); };

  TrainResult out;
  out.state = std::move(initial);
  require(out.state.params.size() == prob.model.architecture().parameter_count(),
          "train_loop: initial parameters do not match the architecture");
  out.best_params = out.state.params;
  if (!prob.val.empty()) out.best_val_jaccard = evaluate_model(prob, out.state.params, prob.val).jaccard_mean;

  std::vector<std::size_t> order(prob.train.size());
  for (std::size_t epoch = 1; epoch <= cfg.epochs && !out.stopped_by_budget; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffle_rng(mix_seed(cfg.seed, 0x5eed, epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochRecord er{epoch};
    std::size_t counted = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      if (cfg.time_budget_seconds > 0.0 && elapsed() > cfg.time_budget_seconds) {
        out.stopped_by_budget = true;
        break;
      }
      const std::size_t e = std::min(order.size(), b + cfg.batch_size);
      const auto rec = train_step(prob, out.state, std::span(order).subspan(b, e - b), cfg);
      if (!rec.skipped) {
        er.mean_shortcut += rec.shortcut;
        ++counted;
      }
      out.steps.push_back(rec);
      if (on_step) on_step(rec);
    }
    if (counted > 0) er.mean_shortcut /= static_cast<double>(counted);
    if (!prob.val.empty()) {
      er.val_jaccard = evaluate_model(prob, out.state.params, prob.val).jaccard_mean;
      if (er.val_jaccard > out.best_val_jaccard) {
        out.best_val_jaccard = er.val_jaccard;
        out.best_epoch = epoch;
        out.best_params = out.state.params;
      }
    } else {
      out.best_params = out.state.params;
      out.best_epoch = epoch;
    }
    er.seconds = elapsed();
    out.epochs.push_back(er);
    if (on_epoch) on_epoch(er);
  }
  return out;
}

}  // namespace datasp
