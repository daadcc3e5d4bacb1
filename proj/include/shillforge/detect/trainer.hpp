#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shillforge/detect/detector.hpp"

namespace shillforge::detect {

enum class Mode { plain, graphrfi, pdr };

struct TrainConfig {
  Mode mode = Mode::graphrfi;
  std::size_t epochs = 50;
  std::size_t steps_per_epoch = 20;  // full-batch steps per epoch
  double lr = 0.2;
  double lambda = 1.0;
  std::size_t detector_hidden = 16;
  DefenseConfig defense;
  bool normalize_ip = true;
  /// Adversarial training after `pretrain_epochs` plain epochs.
  bool adversarial = false;
  double noise_scale = 0.1;
  std::size_t pretrain_epochs = 0;
  std::uint64_t seed = 1;
};

struct TrainData {
  const rec::GraphIndex* index = nullptr;
  const nk::Tensor* features = nullptr;
  std::vector<std::size_t> labels;   // observed class per user (kFake / kNormal)
  std::vector<std::size_t> holdout;  // users scored for the AUC trigger, excluded from the detector loss
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // joint loss before the epoch's last step
  double auc = 0.0;       // holdout AUC; NaN when the holdout lacks a class
  bool adjusted = false;
  double c1 = 0.0, c2 = 0.0;  // band used for this epoch's adjustment
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::vector<std::vector<double>> q_fake;  // [epoch][user], at the end of each epoch
  std::optional<std::size_t> trigger_epoch;
  std::unique_ptr<rec::DetectorHead> head;
};

/// Trains the recommender (in place) jointly with the mode's detector. In PDR mode the
/// priors are adjusted once per epoch from the first epoch whose holdout AUC reaches a0,
/// decaying the band after each adjustment.
TrainResult train(rec::RecParams& params, const TrainData& data, const TrainConfig& cfg);

/// Users sampled per observed class, round(frac * class size) each, from `pool`.
std::vector<std::size_t> stratified_holdout(std::span<const std::size_t> pool,
                                            std::span<const std::size_t> labels, double frac,
                                            std::uint64_t seed);

/// CSV `epoch,user_id,user_type,q_fake`, epochs 1-based, every user every epoch.
void write_trajectory(std::ostream& out, const std::vector<std::vector<double>>& q_fake,
                      std::span<const std::string> user_ids, std::span<const std::string> user_types);

}  // namespace shillforge::detect
