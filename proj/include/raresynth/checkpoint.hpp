#pragma once

#include <string>

#include <nlohmann/json_fwd.hpp>

#include "raresynth/classifier.hpp"
#include "raresynth/diffusion.hpp"
#include "raresynth/lora.hpp"

namespace raresynth {

// Single-file archive: 8-byte magic, little-endian u64 manifest length, JSON
// manifest (format version, kind, config snapshot, tensor name/shape/dtype
// list, metadata), then raw little-endian f32 arrays in manifest order.
// save -> load -> save is byte-identical.
inline constexpr char kCheckpointMagic[9] = "RSCKPT01";

std::string checkpoint_kind(const std::string& path);

void save_diffusion_checkpoint(const std::string& path, UNet<float>& model,
                               const NoiseSchedule& sched, ScheduleKind kind);
struct LoadedDiffusion {
  UNet<float> model;
  int schedule_T = 0;
  ScheduleKind schedule_kind = ScheduleKind::linear;
};
LoadedDiffusion load_diffusion_checkpoint(const std::string& path);

void save_adapter_checkpoint(const std::string& path, AdaptedModel<float>& adapted);
// The adapter archive stores only the low-rank factors; the base model is
// re-attached from its own checkpoint.
AdaptedModel<float> load_adapter_checkpoint(const std::string& path,
                                            const UNet<float>& base);

void save_classifier_checkpoint(const std::string& path, ClassifierModel<float>& model);
ClassifierModel<float> load_classifier_checkpoint(const std::string& path);

// Config snapshot helpers shared with the config module.
nlohmann::json unet_config_to_json(const UNetConfig& c);
UNetConfig unet_config_from_json(const nlohmann::json& j);
nlohmann::json classifier_config_to_json(const ClassifierConfig& c);
ClassifierConfig classifier_config_from_json(const nlohmann::json& j);
nlohmann::json lora_config_to_json(const LoraConfig& c);
LoraConfig lora_config_from_json(const nlohmann::json& j);

}  // namespace raresynth
