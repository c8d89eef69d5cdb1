#include "attnroute/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "attnroute/pattern_route.hpp"

namespace attnroute {

using dc::Tensor;

namespace {

// Visits every parameter tensor with a stable name. Works on const and
// non-const PolicyParams alike.
template <typename P, typename F>
void for_each_tensor(P& p, F&& f) {
  f("in.w", p.w_in);
  f("in.b", p.b_in);
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    auto& l = p.layers[i];
    const std::string pre = "layer" + std::to_string(i) + ".";
    f(pre + "wq", l.wq);
    f(pre + "wk", l.wk);
    f(pre + "wv", l.wv);
    f(pre + "wo", l.wo);
    f(pre + "bn1.gamma", l.bn1_gamma);
    f(pre + "bn1.beta", l.bn1_beta);
    f(pre + "ff.w1", l.ff_w1);
    f(pre + "ff.b1", l.ff_b1);
    f(pre + "ff.w2", l.ff_w2);
    f(pre + "ff.b2", l.ff_b2);
    f(pre + "bn2.gamma", l.bn2_gamma);
    f(pre + "bn2.beta", l.bn2_beta);
  }
  f("ctx.w", p.w_ctx);
  f("ctx.first", p.first_placeholder);
  f("ctx.last", p.last_placeholder);
  f("glimpse.k", p.w_gk);
  f("glimpse.v", p.w_gv);
  f("glimpse.o", p.w_go);
  f("logit.k", p.w_lk);
}

std::vector<char> blocked_slots(std::span<const char> mask, std::span<const char> visited) {
  std::vector<char> blocked(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) blocked[i] = !mask[i] || visited[i];
  return blocked;
}

int count_real(std::span<const char> mask) {
  return static_cast<int>(std::count_if(mask.begin(), mask.end(), [](char c) { return c != 0; }));
}

}  // namespace

void ModelDims::validate() const {
  if (d < 1 || heads < 1 || layers < 0 || d_ff < 1)
    throw std::invalid_argument("model dimensions must be positive");
  if (d % heads != 0)
    throw std::invalid_argument("model width " + std::to_string(d) + " is not divisible by " + std::to_string(heads) +
                                " heads");
}

PolicyParams PolicyParams::init(const ModelDims& dims, std::uint64_t seed) {
  dims.validate();
  Rng rng(seed);
  const double s = 1.0 / std::sqrt(static_cast<double>(dims.d));
  const int d = dims.d;
  auto u = [&](int r, int c) { return Tensor::uniform({r, c}, s, rng); };
  PolicyParams p;
  p.dims = dims;
  p.w_in = u(kFeatureCount, d);
  p.b_in = u(1, d);
  for (int i = 0; i < dims.layers; ++i) {
    EncoderLayer l;
    l.wq = u(d, d);
    l.wk = u(d, d);
    l.wv = u(d, d);
    l.wo = u(d, d);
    l.bn1_gamma = Tensor::full({1, d}, 1.0, true);
    l.bn1_beta = Tensor::zeros({1, d}, true);
    l.ff_w1 = u(d, dims.d_ff);
    l.ff_b1 = u(1, dims.d_ff);
    l.ff_w2 = u(dims.d_ff, d);
    l.ff_b2 = u(1, d);
    l.bn2_gamma = Tensor::full({1, d}, 1.0, true);
    l.bn2_beta = Tensor::zeros({1, d}, true);
    p.layers.push_back(std::move(l));
  }
  p.w_ctx = u(3 * d, d);
  p.first_placeholder = u(1, d);
  p.last_placeholder = u(1, d);
  p.w_gk = u(d, d);
  p.w_gv = u(d, d);
  p.w_go = u(d, d);
  p.w_lk = u(d, d);
  return p;
}

dc::NamedTensors PolicyParams::named() const {
  dc::NamedTensors out;
  for_each_tensor(*this, [&](const std::string& name, const Tensor& t) { out.emplace_back(name, t); });
  return out;
}

std::vector<Tensor> PolicyParams::tensors() const {
  std::vector<Tensor> out;
  for_each_tensor(*this, [&](const std::string&, const Tensor& t) { out.push_back(t); });
  return out;
}

PolicyParams PolicyParams::clone() const {
  PolicyParams p = *this;
  for_each_tensor(p, [](const std::string&, Tensor& t) { t = t.clone(true); });
  return p;
}

void PolicyParams::assign(const dc::NamedTensors& values) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : values) by_name[name] = &t;
  for_each_tensor(*this, [&](const std::string& name, Tensor& t) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw std::invalid_argument("missing parameter '" + name + "'");
    if (it->second->shape() != t.shape())
      throw std::invalid_argument("parameter '" + name + "' has shape " + dc::shape_str(it->second->shape()) +
                                  ", expected " + dc::shape_str(t.shape()));
    t.values() = it->second->values();
  });
}

Features featurize(const RoutingInstance& inst) {
  const int n = static_cast<int>(inst.features.size());
  const double xs = inst.width > 0 ? 1.0 / inst.width : 0.0;
  const double ys = inst.height > 0 ? 1.0 / inst.height : 0.0;
  const double ls = 1.0 / (1.0 + inst.max_net_index);
  const double scales[kFeatureCount] = {xs, xs, ys, xs, xs, ys, ls};
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(n) * kFeatureCount);
  for (const auto& row : inst.features)
    for (int k = 0; k < kFeatureCount; ++k) v.push_back(row[static_cast<std::size_t>(k)] * scales[k]);
  Features f;
  f.nodes = Tensor::from({n, kFeatureCount}, std::move(v));
  f.mask.assign(inst.mask.begin(), inst.mask.end());
  return f;
}

Tensor multi_head_attention(const Tensor& h, const Tensor& wq, const Tensor& wk, const Tensor& wv, const Tensor& wo,
                            int heads, std::span<const char> key_mask, std::vector<Tensor>* weights) {
  const int n = h.rows();
  const int d = wq.cols();
  if (heads < 1 || d % heads != 0) throw dc::ShapeError("multi_head_attention: width not divisible by heads");
  if (static_cast<int>(key_mask.size()) != n) throw dc::ShapeError("multi_head_attention: key mask size mismatch");
  const int hd = d / heads;
  const Tensor q = dc::matmul(h, wq);
  const Tensor k = dc::matmul(h, wk);
  const Tensor v = dc::matmul(h, wv);
  std::vector<char> blocked(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) blocked[static_cast<std::size_t>(i * n + j)] = !key_mask[static_cast<std::size_t>(j)];
  const double inv = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<Tensor> outs;
  for (int m = 0; m < heads; ++m) {
    const Tensor qh = dc::slice_cols(q, m * hd, hd);
    const Tensor kh = dc::slice_cols(k, m * hd, hd);
    const Tensor vh = dc::slice_cols(v, m * hd, hd);
    Tensor scores = dc::scale(dc::matmul(qh, dc::transpose(kh)), inv);
    scores = dc::masked_fill(scores, blocked, kMaskedLogit);
    const Tensor a = dc::softmax(scores);
    if (weights) weights->push_back(a);
    outs.push_back(dc::matmul(a, vh));
  }
  return dc::matmul(dc::concat_cols(outs), wo);
}

Tensor encode(const PolicyParams& params, const Tensor& nodes, std::span<const char> mask) {
  if (nodes.rank() != 2 || nodes.cols() != kFeatureCount)
    throw dc::ShapeError("encode: node matrix must be n x 7, got " + dc::shape_str(nodes.shape()));
  if (static_cast<int>(mask.size()) != nodes.rows()) throw dc::ShapeError("encode: mask size mismatch");
  Tensor h = dc::add(dc::matmul(nodes, params.w_in), params.b_in);
  for (const auto& l : params.layers) {
    const Tensor att = multi_head_attention(h, l.wq, l.wk, l.wv, l.wo, params.dims.heads, mask);
    const Tensor h1 = dc::batch_norm(dc::add(h, att), l.bn1_gamma, l.bn1_beta, nullptr, true, mask);
    const Tensor ff =
        dc::add(dc::matmul(dc::relu(dc::add(dc::matmul(h1, l.ff_w1), l.ff_b1)), l.ff_w2), l.ff_b2);
    h = dc::batch_norm(dc::add(h1, ff), l.bn2_gamma, l.bn2_beta, nullptr, true, mask);
  }
  return h;
}

DecoderCache prepare_decoder(const PolicyParams& params, const Tensor& embeddings, std::span<const char> mask) {
  const int d = params.dims.d;
  const int hd = d / params.dims.heads;
  DecoderCache c;
  c.embeddings = embeddings;
  c.mask.assign(mask.begin(), mask.end());
  c.graph_mean = dc::mean_rows(embeddings, mask);
  const Tensor k = dc::matmul(embeddings, params.w_gk);
  const Tensor v = dc::matmul(embeddings, params.w_gv);
  for (int m = 0; m < params.dims.heads; ++m) {
    c.glimpse_keys_t.push_back(dc::transpose(dc::slice_cols(k, m * hd, hd)));
    c.glimpse_values.push_back(dc::slice_cols(v, m * hd, hd));
  }
  c.logit_keys_t = dc::transpose(dc::matmul(embeddings, params.w_lk));
  return c;
}

Tensor decode_step(const PolicyParams& params, const DecoderCache& cache, std::span<const char> visited, int first,
                   int last) {
  const auto n = cache.mask.size();
  if (visited.size() != n) throw dc::ShapeError("decode_step: visited size mismatch");
  const auto blocked = blocked_slots(cache.mask, visited);
  if (std::all_of(blocked.begin(), blocked.end(), [](char b) { return b != 0; }))
    throw NoSelectableNode("decode_step: every slot is visited or padding");

  const int d = params.dims.d;
  const int hd = d / params.dims.heads;
  auto row = [&](int idx, const Tensor& placeholder) {
    if (idx < 0) return placeholder;
    const int sel[1] = {idx};
    return dc::index_select(cache.embeddings, sel);
  };
  const Tensor ctx = dc::concat_cols({cache.graph_mean, row(last, params.last_placeholder),
                                      row(first, params.first_placeholder)});
  const Tensor q = dc::matmul(ctx, params.w_ctx);

  const double inv_h = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<Tensor> outs;
  for (int m = 0; m < params.dims.heads; ++m) {
    const Tensor qh = dc::slice_cols(q, m * hd, hd);
    Tensor s = dc::scale(dc::matmul(qh, cache.glimpse_keys_t[static_cast<std::size_t>(m)]), inv_h);
    s = dc::masked_fill(s, blocked, kMaskedLogit);
    outs.push_back(dc::matmul(dc::softmax(s), cache.glimpse_values[static_cast<std::size_t>(m)]));
  }
  const Tensor g = dc::matmul(dc::concat_cols(outs), params.w_go);
  Tensor logits = dc::scale(dc::matmul(g, cache.logit_keys_t), 1.0 / std::sqrt(static_cast<double>(d)));
  logits = dc::scale(dc::tanh(logits), kLogitClip);
  logits = dc::masked_fill(logits, blocked, kMaskedLogit);
  return dc::log_softmax(logits);
}

Episode run_episode(const PolicyParams& params, const Features& f, const StepChooser& choose, bool record_probs) {
  const int real = count_real(f.mask);
  if (real < 1) throw std::invalid_argument("policy rollout needs at least one real pair");
  const Tensor h = encode(params, f.nodes, f.mask);
  const DecoderCache cache = prepare_decoder(params, h, f.mask);
  const auto n = f.mask.size();
  std::vector<char> visited(n, 0);
  std::vector<Tensor> chosen_logp;
  Episode ep;
  int first = -1, last = -1;
  for (int step = 0; step < real; ++step) {
    const Tensor logp = decode_step(params, cache, visited, first, last);
    std::vector<double> probs(n);
    for (std::size_t i = 0; i < n; ++i) probs[i] = std::exp(logp[i]);
    std::vector<char> selectable(n);
    for (std::size_t i = 0; i < n; ++i) selectable[i] = f.mask[i] && !visited[i];
    const int c = choose(probs, selectable);
    if (c < 0 || static_cast<std::size_t>(c) >= n || !selectable[static_cast<std::size_t>(c)])
      throw NoSelectableNode("step chooser returned unselectable slot " + std::to_string(c));
    const int sel[1] = {c};
    chosen_logp.push_back(dc::reshape(dc::index_select(dc::reshape(logp, {static_cast<int>(n)}), sel), {1, 1}));
    if (record_probs) ep.rollout.step_probs.push_back(std::move(probs));
    visited[static_cast<std::size_t>(c)] = 1;
    ep.rollout.order.push_back(c);
    if (first < 0) first = c;
    last = c;
  }
  ep.log_prob = dc::sum(dc::concat_rows(chosen_logp));
  ep.rollout.log_prob = ep.log_prob.item();
  return ep;
}

Tensor sequence_log_prob(const PolicyParams& params, const Features& f, std::span<const int> order) {
  std::size_t step = 0;
  const std::vector<int> forced(order.begin(), order.end());
  auto chooser = [&](std::span<const double>, std::span<const char>) {
    if (step >= forced.size()) throw std::invalid_argument("order is shorter than the number of real slots");
    return forced[step++];
  };
  Episode ep = run_episode(params, f, chooser);
  if (step != forced.size()) throw std::invalid_argument("order is longer than the number of real slots");
  return ep.log_prob;
}

namespace {

int sample_index(std::span<const double> probs, std::span<const char> selectable, Rng& rng) {
  const double u = rng.uniform01();
  double cum = 0.0;
  int fallback = -1;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!selectable[i]) continue;
    cum += probs[i];
    if (probs[i] > 0.0) fallback = static_cast<int>(i);
    if (u < cum) return static_cast<int>(i);
  }
  // Rounding left u above the accumulated mass: take the last reachable slot.
  if (fallback < 0)
    for (std::size_t i = 0; i < probs.size(); ++i)
      if (selectable[i]) fallback = static_cast<int>(i);
  return fallback;
}

int argmax_index(std::span<const double> probs, std::span<const char> selectable) {
  int best = -1;
  for (std::size_t i = 0; i < probs.size(); ++i)
    if (selectable[i] && (best < 0 || probs[i] > probs[static_cast<std::size_t>(best)])) best = static_cast<int>(i);
  return best;
}

}  // namespace

Rollout sample_rollout(const RoutingInstance& inst, const PolicyParams& params, Rng& rng, bool record_probs) {
  dc::NoGradGuard no_grad;
  auto chooser = [&](std::span<const double> p, std::span<const char> s) { return sample_index(p, s, rng); };
  Rollout r = run_episode(params, featurize(inst), chooser, record_probs).rollout;
  r.cost = route_cost(inst, r.order);
  return r;
}

Rollout greedy_rollout(const RoutingInstance& inst, const PolicyParams& params, bool record_probs) {
  dc::NoGradGuard no_grad;
  Rollout r = run_episode(params, featurize(inst), argmax_index, record_probs).rollout;
  r.cost = route_cost(inst, r.order);
  return r;
}

double paired_ttest(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("paired t-test needs samples of equal length");
  const std::size_t n = a.size();
  if (n < 2) throw std::invalid_argument("paired t-test needs at least 2 pairs");
  std::vector<double> diff(n);
  for (std::size_t i = 0; i < n; ++i) diff[i] = a[i] - b[i];
  const double mean = std::accumulate(diff.begin(), diff.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double x : diff) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (sd == 0.0) return mean < 0.0 ? 0.0 : 1.0;
  const double t = mean / (sd / std::sqrt(static_cast<double>(n)));
  const boost::math::students_t dist(static_cast<double>(n - 1));
  return boost::math::cdf(dist, t);
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("correlation needs samples of equal length");
  const std::size_t n = a.size();
  if (n < 2) throw std::invalid_argument("correlation needs at least 2 samples");
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(n);
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  // Undefined for a constant sample.
  if (saa == 0.0 || sbb == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sab / std::sqrt(saa * sbb);
}

void TrainHyper::validate() const {
  if (epochs < 1 || batches < 1 || batch_size < 1) throw std::invalid_argument("epochs, batches and batch size must be positive");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("learning rate must be a finite non-negative number");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("significance level must lie in (0, 1)");
  dims.validate();
}

double mean_greedy_cost(const std::vector<RoutingInstance>& set, const PolicyParams& params) {
  if (set.empty()) throw std::invalid_argument("cannot average over an empty set");
  double total = 0.0;
  for (const auto& inst : set) total += greedy_rollout(inst, params).cost;
  return total / static_cast<double>(set.size());
}

namespace {

std::vector<double> greedy_costs(const std::vector<RoutingInstance>& set, const PolicyParams& params) {
  std::vector<double> out;
  out.reserve(set.size());
  for (const auto& inst : set) out.push_back(greedy_rollout(inst, params).cost);
  return out;
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

TrainResult reinforce_train(const std::vector<RoutingInstance>& train, const std::vector<RoutingInstance>& val,
                            const TrainHyper& hyper, const std::function<void(const EpochRecord&)>& on_epoch) {
  hyper.validate();
  if (train.empty()) throw std::invalid_argument("training set is empty");
  if (val.empty()) throw std::invalid_argument("validation set is empty");
  const int n_max = train.front().n_max;
  for (const auto* set : {&train, &val})
    for (const auto& inst : *set)
      if (inst.n_max != n_max)
        throw std::invalid_argument("instance '" + inst.name + "' has n_max " + std::to_string(inst.n_max) +
                                    ", expected " + std::to_string(n_max));
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < train.size(); ++i)
    if (train[i].real_count() > 0) usable.push_back(i);
  if (usable.empty()) throw std::invalid_argument("no training instance has a pair to route");
  for (const auto& inst : val)
    if (inst.real_count() < 1) throw std::invalid_argument("validation instance '" + inst.name + "' has no pairs");

  PolicyParams theta = PolicyParams::init(hyper.dims, hyper.seed);
  PolicyParams baseline = theta.clone();
  dc::Adam opt(theta.tensors(), hyper.lr);
  std::vector<Features> features;
  features.reserve(train.size());
  for (const auto& inst : train) features.push_back(featurize(inst));

  Rng rng(mix_seed(hyper.seed, 1));
  std::vector<std::optional<int>> baseline_cost(train.size());
  std::vector<double> baseline_val = greedy_costs(val, baseline);

  std::vector<std::size_t> pass;
  std::size_t cursor = 0;
  auto next_instance = [&] {
    if (cursor == pass.size()) {
      pass = usable;
      rng.shuffle(pass);
      cursor = 0;
    }
    return pass[cursor++];
  };
  auto sampler = [&](std::span<const double> p, std::span<const char> s) { return sample_index(p, s, rng); };

  TrainResult result;
  result.best_val_cost = std::numeric_limits<double>::infinity();
  for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
    double cost_sum = 0.0;
    int cost_count = 0;
    for (int b = 0; b < hyper.batches; ++b) {
      for (int t = 0; t < hyper.batch_size; ++t) {
        const std::size_t idx = next_instance();
        Episode ep = run_episode(theta, features[idx], sampler);
        const int cost = route_cost(train[idx], ep.rollout.order);
        if (!baseline_cost[idx]) baseline_cost[idx] = greedy_rollout(train[idx], baseline).cost;
        const double advantage = static_cast<double>(cost - *baseline_cost[idx]);
        const Tensor loss = dc::scale(ep.log_prob, advantage / hyper.batch_size);
        if (!std::isfinite(loss.item()))
          throw TrainingDiverged("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                 std::to_string(b + 1) + " on instance '" + train[idx].name + "'");
        dc::backward(loss);
        cost_sum += cost;
        ++cost_count;
      }
      for (const auto& [name, p] : theta.named())
        for (double g : p.grad())
          if (!std::isfinite(g))
            throw TrainingDiverged("non-finite gradient for '" + name + "' at epoch " + std::to_string(epoch) +
                                   ", batch " + std::to_string(b + 1));
      opt.step();
    }

    const std::vector<double> val_costs = greedy_costs(val, theta);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_mean_cost = cost_sum / cost_count;
    rec.val_mean_cost = mean_of(val_costs);
    if (rec.val_mean_cost < result.best_val_cost) {
      result.best_val_cost = rec.val_mean_cost;
      result.best_epoch = epoch;
      result.best = theta.clone();
    }
    if (val_costs.size() >= 2 && paired_ttest(val_costs, baseline_val) <= hyper.alpha) {
      baseline = theta.clone();
      baseline_val = val_costs;
      std::fill(baseline_cost.begin(), baseline_cost.end(), std::nullopt);
      rec.baseline_refreshed = true;
    }
    result.curve.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  result.last = std::move(theta);
  return result;
}

void save_policy(const std::string& path, const PolicyParams& params, int n_max,
                 std::map<std::string, std::string> meta) {
  dc::Checkpoint ckpt;
  ckpt.meta = std::move(meta);
  ckpt.meta["n_max"] = std::to_string(n_max);
  ckpt.meta["d"] = std::to_string(params.dims.d);
  ckpt.meta["heads"] = std::to_string(params.dims.heads);
  ckpt.meta["layers"] = std::to_string(params.dims.layers);
  ckpt.meta["d_ff"] = std::to_string(params.dims.d_ff);
  ckpt.tensors = params.named();
  dc::save_checkpoint(path, ckpt);
}

PolicyCheckpoint load_policy(const std::string& path) {
  dc::Checkpoint ckpt = dc::load_checkpoint(path);
  auto field = [&](const char* key) {
    auto it = ckpt.meta.find(key);
    if (it == ckpt.meta.end()) throw std::runtime_error("checkpoint '" + path + "' lacks '" + key + "'");
    try {
      return std::stoi(it->second);
    } catch (const std::exception&) {
      throw std::runtime_error("checkpoint '" + path + "' has a malformed '" + key + "'");
    }
  };
  ModelDims dims;
  dims.d = field("d");
  dims.heads = field("heads");
  dims.layers = field("layers");
  dims.d_ff = field("d_ff");
  PolicyCheckpoint out;
  out.n_max = field("n_max");
  out.params = PolicyParams::init(dims, 0);
  out.params.assign(ckpt.tensors);
  out.meta = std::move(ckpt.meta);
  return out;
}

}  // namespace attnroute
