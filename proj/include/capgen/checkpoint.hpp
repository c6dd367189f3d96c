#ifndef CAPGEN_CHECKPOINT_HPP_
#define CAPGEN_CHECKPOINT_HPP_

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "capgen/captioner.hpp"
#include "capgen/optimizer.hpp"
#include "capgen/text.hpp"

namespace capgen {

struct ParameterBlob {
  std::string name;
  Shape shape;
  double lr_scale = 1.0;
  bool trainable = true;
  std::vector<double> values;
};

/// Decoded "ICKP" file. Layout (little endian): magic, u32 version, model
/// config, config echo text, vocabulary, then the named parameter blobs as
/// float64 and, when present, Adam moments and step counts per parameter.
struct Checkpoint {
  ModelConfig model;
  std::string config_text;
  std::vector<std::string> vocabulary;
  std::vector<ParameterBlob> parameters;
  std::optional<AdamConfig> adam;
  std::vector<AdamSlot> slots;
};

void save_checkpoint(const std::filesystem::path& path, const CaptionModel& model,
                     const Vocabulary& vocab, const Adam* optimizer = nullptr,
                     const std::string& config_text = {});

/// Parses the whole file; throws FormatError on truncation or bad fields.
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Copies the checkpoint into `model` (and `optimizer` when both sides have
/// state). Every name and shape is checked before anything is written, so a
/// mismatch leaves the targets untouched.
void load_into(const Checkpoint& ckpt, CaptionModel& model, Adam* optimizer = nullptr);

/// Fresh model built from the stored config and filled from the checkpoint.
CaptionModel model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace capgen

#endif  // CAPGEN_CHECKPOINT_HPP_
