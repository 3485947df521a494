#pragma once

#include <filesystem>
#include <span>
#include <string>

#include "cfn/config.hpp"
#include "cfn/model.hpp"
#include "cfn/preprocess.hpp"
#include "cfn/train.hpp"

namespace cfn {

/// Everything needed to rebuild a CompletedMatrix given the training split.
struct Checkpoint {
  ExperimentSpec spec;
  TrainState state;
  Preprocessing prep;
};

/// Binary format, little-endian:
///   "CFNCKPT\0" magic, u32 version (1), u32 length + canonical config text,
///   u64 n, k, side_input, side_hidden, epoch, seed,
///   rating scale (f64 min, f64 max, u8 discrete, f64 step),
///   scaler (f64 centered_low, f64 centered_high),
///   bias (u8 orientation, f64 global_mean, u64 count, f64[count] means),
///   w1 (column-major), b1, w2 (row-major), b2 as raw f64 arrays,
///   u64 curve length, then per epoch (u64 epoch, f64 loss, u8 has_rmse, f64 rmse).
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);

/// Throws DataError on a bad magic, an unsupported version or truncation.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// `epoch,loss,rmse` (rmse empty when not evaluated).
void write_loss_curve_csv(const std::filesystem::path& path, std::span<const EpochRecord> curve);

}  // namespace cfn
