#pragma once

#include <filesystem>
#include <memory>
#include <stdexcept>

#include "nslmt/trainer.hpp"

namespace nslmt {

/// File layout:
///   "NSLMT-CKPT\n"                magic
///   u32 version                    (kCheckpointVersion)
///   u64 header bytes, header       JSON: model config, train config, vocabulary,
///                                  step, adam steps, parameter names and shapes
///   u64 n, n doubles               parameters, then first and second moments
///   u64 checksum                   FNV-1a over the payload bytes
/// Integers and doubles are stored in host byte order.
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  ModelConfig model_config;
  TrainConfig train_config;
  Tokenizer tokenizer;
  TrainState state;
  std::unique_ptr<Seq2SeqModel> model;
};

nlohmann::ordered_json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});

void save_checkpoint(const std::filesystem::path& path, const Seq2SeqModel& model, const Tokenizer& tokenizer,
                     const TrainConfig& config, const TrainState& state);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Loads a checkpoint for continued training; the stored vocabulary must equal `tokenizer`.
Checkpoint resume(const std::filesystem::path& path, const Tokenizer& tokenizer);

}  // namespace nslmt
