#include "mmrec/trainer.hpp"

#include <chrono>
#include <cstdio>
#include <ostream>
#include <tuple>

#include "mmrec/log.hpp"

namespace mmrec {

TrainData TrainData::from(const Split& split) {
  TrainData d;
  d.n_users = split.n_users();
  d.n_items = split.n_items();
  d.train = split.train;
  d.validation = items_by_user(split.validation, d.n_users);
  return d;
}

template <typename Real>
double validation_recall(Model<Real>& model, const TrainData& data, std::size_t k, unsigned threads) {
  const auto users = users_with_items(data.validation);
  if (users.empty()) return 0.0;
  const auto popularity = PopularityProfile::from(data.train, data.n_items);
  const auto train = items_by_user(data.train, data.n_users);
  RankOptions options;
  options.k = k;
  options.threads = threads;
  const auto lists = rank_topk(model, users, train, popularity.catalog, options);
  return recall_at_k(lists, data.validation, k);
}

template <typename Real>
TrainResult train_loop(Model<Real>& model, const TrainData& data, const TrainerConfig& trainer,
                       const TrainOptions& options) {
  trainer.validate();
  if (options.eval_every < 1) throw std::invalid_argument("train_loop: eval_every must be positive");
  if (data.train.empty()) throw std::invalid_argument("train_loop: empty train split");
  validate(model.pipeline());

  const TripleSampler sampler(data.train, data.n_users, data.n_items);
  Optimizer<Real> optimizer(trainer.optimizer, trainer.learning_rate);
  auto& params = model.parameters();
  Rng rng(trainer.seed);
  const bool validate_runs = !users_with_items(data.validation).empty();
  const auto start = std::chrono::steady_clock::now();

  TrainResult result;
  for (int epoch = 1; epoch <= trainer.epochs; ++epoch) {
    model.begin_epoch(rng);
    const auto triples = sampler.sample(data.train.size(), rng);
    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t b = 0; b < triples.size(); b += trainer.batch_size, ++batch_index) {
      const auto n = std::min(trainer.batch_size, triples.size() - b);
      const std::span<const Triple> batch(triples.data() + b, n);
      try {
        Tape<Real> tape;
        auto total = model.loss(tape, batch, rng);
        if (trainer.reg_weight > 0.0) total = tape.add(total, l2_regularizer(tape, params, trainer.reg_weight));
        const double value = static_cast<double>(total.value()(0, 0));
        params.zero_grad();
        tape.backward(total);
        optimizer.step(params);
        loss_sum += value * static_cast<double>(n);
      } catch (const NumericError& e) {
        throw TrainingDiverged(std::string(model.name()) + " diverged at epoch " + std::to_string(epoch) +
                               ", batch " + std::to_string(batch_index) + " (lr " +
                               std::to_string(trainer.learning_rate) + "): " + e.what());
      }
    }
    TraceRow row;
    row.epoch = epoch;
    row.loss = loss_sum / static_cast<double>(triples.size());
    if (validate_runs && (epoch % options.eval_every == 0 || epoch == trainer.epochs)) {
      row.recall = validation_recall(model, data, options.eval_k, options.threads);
      if (result.best_epoch == 0 || *row.recall > result.best_recall) {
        result.best_epoch = epoch;
        result.best_recall = *row.recall;
      }
    }
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (epoch == 1) result.initial_loss = row.loss;
    result.final_loss = row.loss;
    result.trace.push_back(row);
    log::info(std::string(model.name()) + " epoch " + std::to_string(epoch) + " loss " + std::to_string(row.loss));
  }
  result.epochs = trainer.epochs;
  return result;
}

void write_trace_tsv(std::ostream& out, const std::vector<TraceRow>& trace) {
  out << "epoch\tloss\trecall\tseconds\n";
  char buf[64];
  for (const auto& r : trace) {
    out << r.epoch << '\t';
    std::snprintf(buf, sizeof buf, "%.6f", r.loss);
    out << buf << '\t';
    if (r.recall) {
      std::snprintf(buf, sizeof buf, "%.6f", *r.recall);
      out << buf;
    }
    std::snprintf(buf, sizeof buf, "%.3f", r.seconds);
    out << '\t' << buf << '\n';
  }
}

template <typename Real>
GridResult grid_search(const ModelFactory<Real>& factory, const GridSpec& grid, const TrainData& data,
                       const TrainerConfig& base, const TrainOptions& options) {
  grid.validate();
  if (users_with_items(data.validation).empty()) {
    throw std::invalid_argument("grid_search: validation split is empty");
  }
  GridResult out;
  for (std::size_t index = 0; index < grid.size(); ++index) {
    const auto [lr, alpha] = grid.point(index);
    auto trainer = base;
    trainer.learning_rate = lr;
    trainer.reg_weight = alpha;
    auto model = factory();
    GridTrial trial{index, lr, alpha, {}};
    try {
      trial.result = train_loop(*model, data, trainer, options);
    } catch (const TrainingDiverged& e) {
      // A diverging point is reported and skipped; the others still compete.
      log::warn("grid point " + std::to_string(index) + " skipped: " + e.what());
    }
    out.trials.push_back(std::move(trial));
  }
  std::tie(out.best_index, out.best_epoch) = select_grid_point(out.trials);
  out.best_recall = out.trials[out.best_index].result.best_recall;
  return out;
}

std::pair<std::size_t, int> select_grid_point(const std::vector<GridTrial>& trials) {
  bool found = false;
  std::size_t best_index = 0;
  int best_epoch = 0;
  double best = 0.0;
  for (std::size_t t = 0; t < trials.size(); ++t) {
    for (const auto& row : trials[t].result.trace) {
      if (!row.recall) continue;
      if (!found || *row.recall > best) {
        found = true;
        best = *row.recall;
        best_index = t;
        best_epoch = row.epoch;
      }
    }
  }
  if (!found) throw TrainingDiverged("grid_search: no grid point produced a validation measurement");
  return {best_index, best_epoch};
}

template TrainResult train_loop(Model<float>&, const TrainData&, const TrainerConfig&, const TrainOptions&);
template TrainResult train_loop(Model<double>&, const TrainData&, const TrainerConfig&, const TrainOptions&);
template double validation_recall(Model<float>&, const TrainData&, std::size_t, unsigned);
template double validation_recall(Model<double>&, const TrainData&, std::size_t, unsigned);
template GridResult grid_search(const ModelFactory<float>&, const GridSpec&, const TrainData&,
                                const TrainerConfig&, const TrainOptions&);
template GridResult grid_search(const ModelFactory<double>&, const GridSpec&, const TrainData&,
                                const TrainerConfig&, const TrainOptions&);

}  // namespace mmrec
