#include "semalign/optim/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <iostream>
#include <ostream>

#include "json.hpp"
#include "semalign/align/losses.hpp"
#include "semalign/backbone/checkpoint.hpp"
#include "semalign/common/errors.hpp"
#include "semalign/common/random.hpp"

namespace semalign {

std::string_view to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::base:
      return "base";
    case TrainMode::con:
      return "con";
    case TrainMode::gen:
      return "gen";
  }
  return "base";
}

TrainMode mode_from_string(std::string_view name) {
  if (name == "base") return TrainMode::base;
  if (name == "con") return TrainMode::con;
  if (name == "gen") return TrainMode::gen;
  throw DataError("unknown training mode '" + std::string(name) + "' (expected base, con or gen)");
}

void TrainConfig::validate() const {
  if (!(adam.lr > 0.0)) throw DataError("lr must be positive");
  if (!(adam.beta1 > 0.0 && adam.beta1 < 1.0 && adam.beta2 > 0.0 && adam.beta2 < 1.0)) {
    throw DataError("Adam betas must lie in (0, 1)");
  }
  if (patience < 1) throw DataError("patience must be at least 1");
  if (eval_every < 1) throw DataError("eval_every must be at least 1");
  if (max_epochs < 1) throw DataError("max_epochs must be at least 1");
  if (batch_size == 0) throw DataError("batch_size must be positive");
  if (dim == 0) throw DataError("embedding dimension must be positive");
  if (backbone.layers < 0) throw DataError("layer count must be non-negative");
  if (backbone.l2_weight < 0.0) throw DataError("l2 weight must be non-negative");
  if (!(tau > 0.0)) throw DataError("temperature must be positive");
  if (!(mask_ratio >= 0.0 && mask_ratio <= 1.0)) throw DataError("mask ratio must lie in [0, 1]");
}

namespace {

Matrix gather_rows(const Matrix& m, const std::vector<std::uint32_t>& rows, std::size_t offset = 0) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = m.row(rows[k] - offset);
  return out;
}

void sorted_unique(std::vector<std::uint32_t>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

struct BatchEntities {
  std::vector<std::uint32_t> users;  // entity rows
  std::vector<std::uint32_t> items;  // entity rows (I + item)
};

BatchEntities batch_entities(const std::vector<Triple>& batch, std::size_t num_users) {
  BatchEntities out;
  out.users.reserve(batch.size());
  out.items.reserve(2 * batch.size());
  const auto nu = static_cast<std::uint32_t>(num_users);
  for (const auto& t : batch) {
    out.users.push_back(t.user);
    out.items.push_back(nu + t.pos);
    out.items.push_back(nu + t.neg);
  }
  sorted_unique(out.users);
  sorted_unique(out.items);
  return out;
}

std::vector<ParamSlot> slots(EmbeddingTable& table, const Matrix& grad_x, AdapterNet* adapter,
                             const AdapterGrads& grads) {
  std::vector<ParamSlot> out;
  out.push_back({{table.values.data(), static_cast<std::size_t>(table.values.size())},
                 {grad_x.data(), static_cast<std::size_t>(grad_x.size())}});
  if (adapter) {
    auto add = [&out](auto& value, const auto& grad) {
      out.push_back({{value.data(), static_cast<std::size_t>(value.size())},
                     {grad.data(), static_cast<std::size_t>(grad.size())}});
    };
    add(adapter->w1, grads.w1);
    add(adapter->b1, grads.b1);
    add(adapter->w2, grads.w2);
    add(adapter->b2, grads.b2);
  }
  return out;
}

}  // namespace

Trainer::Trainer(const SplitSet& data, const SemanticStore* semantic, TrainConfig cfg,
                 std::optional<EmbeddingTable> init)
    : data_(data),
      semantic_(semantic),
      cfg_(cfg),
      adj_((cfg_.validate(), build_normalized_adjacency(data.train))),
      sampler_(data.train, cfg_.seed),
      adam_(cfg_.adam) {
  const auto nu = data.train.num_users();
  const auto ni = data.train.num_items();
  if (init) {
    if (init->num_users != nu || init->num_items != ni || init->dim() != cfg_.dim) {
      throw DataError("initial embedding table does not match the corpus shape");
    }
    table_ = std::move(*init);
  } else {
    table_ = EmbeddingTable::random(nu, ni, cfg_.dim, cfg_.init_std, cfg_.seed);
  }
  if (cfg_.mode != TrainMode::base) {
    if (!semantic_) throw DataError("con/gen training needs a semantic store");
    if (static_cast<std::size_t>(semantic_->users.rows()) != nu ||
        static_cast<std::size_t>(semantic_->items.rows()) != ni) {
      throw DataError("semantic store is not aligned with the training id maps");
    }
    const auto d_out = output_dim(cfg_.backbone, cfg_.dim);
    const auto dir = cfg_.mode == TrainMode::con ? AdapterDirection::down : AdapterDirection::up;
    adapter_ = AdapterNet::create(dir, semantic_->dim(), d_out, cfg_.seed);
    adapter_grads_ = AdapterGrads::zeros_like(*adapter_);
  }
}

StepStats Trainer::step_base_or_con(const std::vector<Triple>& batch, Matrix& grad_x) {
  const auto n = static_cast<Eigen::Index>(table_.num_entities());
  const Matrix x = table_.entities();
  const Matrix e = encode(x, adj_, cfg_.backbone);
  auto bpr = bpr_terms(e, batch, cfg_.backbone.l2_weight, x, table_.num_users);
  StepStats stats;
  stats.loss_rec = bpr.loss;

  if (cfg_.mode == TrainMode::con) {
    const auto groups = batch_entities(batch, table_.num_users);
    const auto nu = static_cast<std::uint32_t>(table_.num_users);
    for (const auto* rows : {&groups.users, &groups.items}) {
      if (rows->size() < 2) continue;
      const bool users = rows == &groups.users;
      const Matrix s = users ? gather_rows(semantic_->users, *rows) : gather_rows(semantic_->items, *rows, nu);
      auto al = contrastive_info_loss(gather_rows(e, *rows), s, *adapter_, cfg_.tau);
      stats.loss_info += al.loss;
      ++stats.info_terms;
      for (std::size_t k = 0; k < rows->size(); ++k) {
        bpr.grad_e.row((*rows)[k]) += cfg_.lambda * al.grad_e.row(static_cast<Eigen::Index>(k));
      }
      al.adapter *= cfg_.lambda;
      adapter_grads_ += al.adapter;
    }
  }
  grad_x.topRows(n) = encode_backward(bpr.grad_e, adj_, cfg_.backbone) + bpr.grad_x;
  return stats;
}

StepStats Trainer::step_gen(const std::vector<Triple>& batch, Matrix& grad_x) {
  const auto n = static_cast<Eigen::Index>(table_.num_entities());
  const auto masked = mask_entities(table_, cfg_.mask_ratio, derive_seed(derive_seed(cfg_.seed, "mask"), steps_));
  const Matrix x_masked = masked.table.topRows(n);
  const Matrix x = table_.entities();
  const Matrix e = encode(x_masked, adj_, cfg_.backbone);
  auto bpr = bpr_terms(e, batch, cfg_.backbone.l2_weight, x, table_.num_users);
  StepStats stats;
  stats.loss_rec = bpr.loss;

  const auto groups = batch_entities(batch, table_.num_users);
  const auto nu = static_cast<std::uint32_t>(table_.num_users);
  for (const auto* rows : {&groups.users, &groups.items}) {
    std::vector<std::uint32_t> hit;
    std::set_intersection(rows->begin(), rows->end(), masked.masked.begin(), masked.masked.end(),
                          std::back_inserter(hit));
    const bool users = rows == &groups.users;
    const Matrix s = users ? gather_rows(semantic_->users, hit) : gather_rows(semantic_->items, hit, nu);
    auto gl = generative_info_loss(gather_rows(e, hit), s, *adapter_, cfg_.tau);
    if (!gl) {
      if (!hit.empty() && !warned_skip_) {
        std::clog << "warning: fewer than two masked " << (users ? "users" : "items")
                  << " in a batch; generative term skipped\n";
        warned_skip_ = true;
      }
      continue;
    }
    stats.loss_info += gl->loss;
    ++stats.info_terms;
    for (std::size_t k = 0; k < hit.size(); ++k) {
      bpr.grad_e.row(hit[k]) += cfg_.lambda * gl->grad_e.row(static_cast<Eigen::Index>(k));
    }
    gl->adapter *= cfg_.lambda;
    adapter_grads_ += gl->adapter;
  }

  Matrix g = encode_backward(bpr.grad_e, adj_, cfg_.backbone);
  auto mask_grad = grad_x.row(n);
  for (auto r : masked.masked) {
    mask_grad += g.row(r);
    g.row(r).setZero();
  }
  grad_x.topRows(n) = g + bpr.grad_x;
  return stats;
}

void Trainer::apply(const Matrix& grad_x) {
  const auto params = slots(table_, grad_x, adapter_ ? &*adapter_ : nullptr, adapter_grads_);
  adam_.step(params);
}

StepStats Trainer::step() {
  const auto batch = sampler_.sample(cfg_.batch_size);
  Matrix grad_x = Matrix::Zero(table_.values.rows(), table_.values.cols());
  if (adapter_) adapter_grads_ *= 0.0;
  const auto stats = cfg_.mode == TrainMode::gen ? step_gen(batch, grad_x) : step_base_or_con(batch, grad_x);
  apply(grad_x);
  ++steps_;
  return stats;
}

EpochLog Trainer::run_epoch() {
  ++epoch_;
  EpochLog log;
  log.epoch = epoch_;
  const auto start = std::chrono::steady_clock::now();
  const auto batches = sampler_.batches_per_epoch(cfg_.batch_size);
  for (std::size_t b = 0; b < batches; ++b) {
    StepStats s;
    try {
      s = step();
    } catch (const DivergenceError& e) {
      throw DivergenceError("epoch " + std::to_string(epoch_) + ", batch " + std::to_string(b) + ": " + e.what());
    }
    log.loss_rec += s.loss_rec;
    log.loss_info += s.loss_info;
  }
  log.loss_rec /= static_cast<double>(batches);
  log.loss_info /= static_cast<double>(batches);
  log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return log;
}

MetricsReport Trainer::evaluate(EvalStage stage) const {
  const Matrix e = encode(table_.entities(), adj_, cfg_.backbone);
  return evaluate_split(score_all(e, table_.num_users), data_, stage);
}

TrainResult Trainer::fit() {
  TrainResult result;
  double best = -1.0;
  int rounds_without_gain = 0;
  Matrix best_values = table_.values;
  std::optional<AdapterNet> best_adapter = adapter_;
  for (int ep = 0; ep < cfg_.max_epochs; ++ep) {
    auto log = run_epoch();
    const bool last = ep + 1 == cfg_.max_epochs;
    if (epoch_ % cfg_.eval_every == 0 || (last && best < 0.0)) {
      const auto m = evaluate(EvalStage::validation);
      log.recall20 = m.recall.at(20);
      log.ndcg20 = m.ndcg.at(20);
      if (*log.recall20 > best) {
        best = *log.recall20;
        best_values = table_.values;
        best_adapter = adapter_;
        result.best_epoch = epoch_;
        result.best_validation = m;
        rounds_without_gain = 0;
      } else {
        ++rounds_without_gain;
      }
    }
    result.log.push_back(log);
    if (rounds_without_gain >= cfg_.patience) break;
  }
  table_.values = std::move(best_values);
  adapter_ = std::move(best_adapter);
  result.table = table_;
  result.adapter = adapter_;
  return result;
}

TrainResult train_base(const SplitSet& data, const TrainConfig& cfg, std::optional<EmbeddingTable> init) {
  if (cfg.mode != TrainMode::base) throw DataError("train_base requires mode=base");
  return Trainer(data, nullptr, cfg, std::move(init)).fit();
}

TrainResult train_con(const SplitSet& data, const SemanticStore& semantic, const TrainConfig& cfg,
                      std::optional<EmbeddingTable> init) {
  if (cfg.mode != TrainMode::con) throw DataError("train_con requires mode=con");
  return Trainer(data, &semantic, cfg, std::move(init)).fit();
}

TrainResult train_gen(const SplitSet& data, const SemanticStore& semantic, const TrainConfig& cfg,
                      std::optional<EmbeddingTable> init) {
  if (cfg.mode != TrainMode::gen) throw DataError("train_gen requires mode=gen");
  return Trainer(data, &semantic, cfg, std::move(init)).fit();
}

MetricsReport test_metrics(const SplitSet& data, const EmbeddingTable& table, const BackboneConfig& backbone) {
  const auto adj = build_normalized_adjacency(data.train);
  const Matrix e = encode(table.entities(), adj, backbone);
  return evaluate_split(score_all(e, table.num_users), data, EvalStage::test);
}

EmbeddingTable init_from_checkpoint(const std::filesystem::path& path, const IdMap& users, const IdMap& items,
                                    std::size_t dim, double init_std, std::uint64_t seed) {
  const auto ck = load_checkpoint(path);
  if (ck.table.dim() != dim) {
    throw DataError("checkpoint embedding dimension " + std::to_string(ck.table.dim()) + " does not match " +
                    std::to_string(dim));
  }
  auto table = EmbeddingTable::random(users.size(), items.size(), dim, init_std, seed);
  for (std::uint32_t u = 0; u < users.size(); ++u) {
    if (auto src = ck.users.find(users.raw(u))) table.values.row(u) = ck.table.values.row(*src);
  }
  const auto nu = static_cast<Eigen::Index>(users.size());
  const auto ck_nu = static_cast<Eigen::Index>(ck.table.num_users);
  for (std::uint32_t v = 0; v < items.size(); ++v) {
    if (auto src = ck.items.find(items.raw(v))) table.values.row(nu + v) = ck.table.values.row(ck_nu + *src);
  }
  table.values.row(static_cast<Eigen::Index>(table.mask_index())) = ck.table.mask_row();
  return table;
}

void write_train_log(std::ostream& out, const std::vector<EpochLog>& log) {
  for (const auto& l : log) {
    nlohmann::ordered_json j{{"epoch", l.epoch}, {"loss_rec", l.loss_rec}, {"loss_info", l.loss_info}};
    if (l.recall20) j["recall20"] = *l.recall20;
    if (l.ndcg20) j["ndcg20"] = *l.ndcg20;
    j["sec"] = l.seconds;
    out << j.dump() << '\n';
  }
}

}  // namespace semalign
