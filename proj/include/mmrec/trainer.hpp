#pragma once

#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <vector>

#include "mmrec/evaluation.hpp"
#include "mmrec/model.hpp"
#include "mmrec/training.hpp"

namespace mmrec {

/// Raised when the training loss or an update stops being finite.
class TrainingDiverged : public NumericError {
 public:
  using NumericError::NumericError;
};

/// What a fit sees of the split.
struct TrainData {
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::vector<UserItem> train;
  /// Held-out validation items per user (may be empty: no validation).
  ItemSets validation;

  static TrainData from(const Split& split);
};

struct TrainOptions {
  /// Validation Recall@k every this many epochs, and after the last one.
  int eval_every = 10;
  std::size_t eval_k = 20;
  unsigned threads = 1;
};

struct TraceRow {
  int epoch = 0;
  double loss = 0;
  std::optional<double> recall;
  double seconds = 0;
};

struct TrainResult {
  std::vector<TraceRow> trace;
  int epochs = 0;
  /// Epoch with the highest validation recall (earliest on ties); 0 without validation.
  int best_epoch = 0;
  double best_recall = 0;
  double initial_loss = 0;
  double final_loss = 0;
};

/// Fits `model` for exactly trainer.epochs epochs. Each epoch calls
/// begin_epoch, draws |R_train| triples and steps the optimizer once per
/// batch on model loss + L2. Deterministic for a given seed.
template <typename Real>
TrainResult train_loop(Model<Real>& model, const TrainData& data, const TrainerConfig& trainer,
                       const TrainOptions& options = {});

/// Validation Recall@k of the model (train items excluded, catalog = I_train).
template <typename Real>
double validation_recall(Model<Real>& model, const TrainData& data, std::size_t k, unsigned threads = 1);

void write_trace_tsv(std::ostream& out, const std::vector<TraceRow>& trace);

struct GridTrial {
  std::size_t index = 0;
  double learning_rate = 0;
  double reg_weight = 0;
  TrainResult result;
};

struct GridResult {
  std::vector<GridTrial> trials;
  std::size_t best_index = 0;
  int best_epoch = 0;
  double best_recall = 0;

  const GridTrial& best() const { return trials.at(best_index); }
};

/// The (trial, epoch) with the highest measured validation recall; ties go
/// to the lower trial index, then the earlier epoch. Trials without any
/// measurement (diverged) never win. Throws when no trial has one.
std::pair<std::size_t, int> select_grid_point(const std::vector<GridTrial>& trials);

template <typename Real>
using ModelFactory = std::function<std::unique_ptr<Model<Real>>()>;

/// Trains a fresh model per grid point and returns the (point, epoch) with
/// the highest validation Recall@20; ties go to the lower point index, then
/// the earlier epoch.
template <typename Real>
GridResult grid_search(const ModelFactory<Real>& factory, const GridSpec& grid, const TrainData& data,
                       const TrainerConfig& base, const TrainOptions& options = {});

}  // namespace mmrec
