#include "raresynth/checkpoint.hpp"

#include <bit>
#include <cstring>

#include <nlohmann/json.hpp>

#include "raresynth/errors.hpp"
#include "raresynth/io_util.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is little-endian f32");

namespace raresynth {

using nlohmann::json;

namespace {

std::string pack_archive(const json& manifest, const std::vector<nn::Param<float>*>& params) {
  const std::string mjson = manifest.dump();
  std::string out;
  out.reserve(8 + 8 + mjson.size());
  out.append(kCheckpointMagic, 8);
  const std::uint64_t len = mjson.size();
  out.append(reinterpret_cast<const char*>(&len), 8);
  out.append(mjson);
  for (const auto* p : params)
    out.append(reinterpret_cast<const char*>(p->value.data.data()),
               p->value.data.size() * sizeof(float));
  return out;
}

struct Archive {
  json manifest;
  std::string payload;
};

Archive unpack_archive(const std::string& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
    throw FormatError("not a checkpoint archive: " + path);
  std::uint64_t len;
  std::memcpy(&len, bytes.data() + 8, 8);
  if (16 + len > bytes.size()) throw FormatError("truncated checkpoint: " + path);
  Archive a;
  a.manifest = json::parse(bytes.substr(16, len), nullptr, /*allow_exceptions=*/false);
  if (a.manifest.is_discarded())
    throw FormatError("checkpoint manifest is not valid JSON: " + path);
  a.payload = bytes.substr(16 + len);
  return a;
}

json tensor_list(const std::vector<nn::Param<float>*>& params) {
  json arr = json::array();
  for (const auto* p : params) {
    json t;
    t["name"] = p->name;
    t["shape"] = p->value.shape;
    t["dtype"] = "f32";
    arr.push_back(std::move(t));
  }
  return arr;
}

void load_tensors(const Archive& a, const std::string& path,
                  std::vector<nn::Param<float>*>& params) {
  const json& tensors = a.manifest.at("tensors");
  if (tensors.size() != params.size())
    throw FormatError("checkpoint tensor count mismatch in " + path + ": archive has " +
                      std::to_string(tensors.size()) + ", architecture expects " +
                      std::to_string(params.size()));
  std::size_t off = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const json& t = tensors[i];
    nn::Param<float>* p = params[i];
    if (t.at("name").get<std::string>() != p->name)
      throw FormatError("checkpoint tensor name mismatch: " +
                        t.at("name").get<std::string>() + " vs " + p->name);
    if (t.at("shape").get<std::vector<int>>() != p->value.shape)
      throw FormatError("checkpoint tensor shape mismatch for " + p->name);
    const std::size_t bytes = p->value.data.size() * sizeof(float);
    if (off + bytes > a.payload.size())
      throw FormatError("checkpoint payload too short: " + path);
    std::memcpy(p->value.data.data(), a.payload.data() + off, bytes);
    off += bytes;
  }
  if (off != a.payload.size())
    throw FormatError("checkpoint payload has trailing bytes: " + path);
}

}  // namespace

json unet_config_to_json(const UNetConfig& c) {
  json j;
  j["in_channels"] = c.in_channels;
  j["widths"] = c.widths;
  j["res_blocks"] = c.res_blocks;
  j["emb_dim"] = c.emb_dim;
  j["gn_groups"] = c.gn_groups;
  return j;
}

UNetConfig unet_config_from_json(const json& j) {
  UNetConfig c;
  c.in_channels = j.at("in_channels").get<int>();
  c.widths = j.at("widths").get<std::vector<int>>();
  c.res_blocks = j.at("res_blocks").get<int>();
  c.emb_dim = j.at("emb_dim").get<int>();
  c.gn_groups = j.at("gn_groups").get<int>();
  return c;
}

json classifier_config_to_json(const ClassifierConfig& c) {
  json j;
  j["widths"] = c.widths;
  j["gn_groups"] = c.gn_groups;
  j["stem_stride"] = c.stem_stride;
  j["activation"] = c.activation == nn::Act::relu ? "relu" : "silu";
  j["epochs"] = c.epochs;
  j["batch"] = c.batch;
  j["lr"] = c.lr;
  j["weight_decay"] = c.weight_decay;
  j["pos_weight"] = c.pos_weight <= 0.0 ? json("auto") : json(c.pos_weight);
  return j;
}

ClassifierConfig classifier_config_from_json(const json& j) {
  ClassifierConfig c;
  c.widths = j.at("widths").get<std::vector<int>>();
  c.gn_groups = j.at("gn_groups").get<int>();
  c.stem_stride = j.at("stem_stride").get<int>();
  const std::string act = j.at("activation").get<std::string>();
  if (act != "relu" && act != "silu")
    throw FormatError("classifier activation must be relu or silu, got " + act);
  c.activation = act == "relu" ? nn::Act::relu : nn::Act::silu;
  c.epochs = j.at("epochs").get<int>();
  c.batch = j.at("batch").get<int>();
  c.lr = j.at("lr").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  const json& pw = j.at("pos_weight");
  if (pw.is_string()) {
    if (pw.get<std::string>() != "auto")
      throw FormatError("pos_weight must be a positive number or \"auto\"");
    c.pos_weight = 0.0;
  } else {
    c.pos_weight = pw.get<double>();
    if (c.pos_weight <= 0.0)
      throw FormatError("explicit pos_weight must be > 0");
  }
  return c;
}

json lora_config_to_json(const LoraConfig& c) {
  json j;
  j["rank"] = c.rank;
  j["alpha"] = c.alpha;
  j["dropout"] = c.dropout;
  j["targets"] = c.targets;
  j["steps"] = c.steps;
  j["lr"] = c.lr;
  j["batch"] = c.batch;
  return j;
}

LoraConfig lora_config_from_json(const json& j) {
  LoraConfig c;
  c.rank = j.at("rank").get<int>();
  c.alpha = j.at("alpha").get<double>();
  c.dropout = j.at("dropout").get<double>();
  c.targets = j.at("targets").get<std::vector<std::string>>();
  c.steps = j.at("steps").get<int>();
  c.lr = j.at("lr").get<double>();
  c.batch = j.at("batch").get<int>();
  return c;
}

std::string checkpoint_kind(const std::string& path) {
  return unpack_archive(path).manifest.at("kind").get<std::string>();
}

void save_diffusion_checkpoint(const std::string& path, UNet<float>& model,
                               const NoiseSchedule& sched, ScheduleKind kind) {
  nn::ParamStore<float> store;
  model.collect_params(store);
  json m;
  m["format_version"] = 1;
  m["kind"] = "diffusion";
  m["config"] = unet_config_to_json(model.cfg);
  m["config"]["schedule_T"] = sched.T;
  m["config"]["schedule_kind"] = schedule_kind_name(kind);
  m["tensors"] = tensor_list(store.params);
  m["meta"] = {{"tool", "raresynth"}, {"param_count", store.count()}};
  write_file_atomic(path, pack_archive(m, store.params));
}

LoadedDiffusion load_diffusion_checkpoint(const std::string& path) {
  Archive a = unpack_archive(path);
  if (a.manifest.at("kind") != "diffusion")
    throw FormatError("expected diffusion checkpoint: " + path);
  json cfg = a.manifest.at("config");
  LoadedDiffusion out;
  out.schedule_T = cfg.at("schedule_T").get<int>();
  out.schedule_kind = parse_schedule_kind(cfg.at("schedule_kind").get<std::string>());
  cfg.erase("schedule_T");
  cfg.erase("schedule_kind");
  Rng rng(0);
  out.model = UNet<float>(unet_config_from_json(cfg), rng);
  nn::ParamStore<float> store;
  out.model.collect_params(store);
  load_tensors(a, path, store.params);
  return out;
}

void save_adapter_checkpoint(const std::string& path, AdaptedModel<float>& adapted) {
  nn::ParamStore<float> store;
  collect_lora_params(adapted.net, store);
  json m;
  m["format_version"] = 1;
  m["kind"] = "lora_adapter";
  m["config"] = lora_config_to_json(adapted.cfg);
  m["config"]["base"] = unet_config_to_json(adapted.net.cfg);
  m["tensors"] = tensor_list(store.params);
  m["meta"] = {{"tool", "raresynth"}, {"param_count", store.count()}};
  write_file_atomic(path, pack_archive(m, store.params));
}

AdaptedModel<float> load_adapter_checkpoint(const std::string& path,
                                            const UNet<float>& base) {
  Archive a = unpack_archive(path);
  if (a.manifest.at("kind") != "lora_adapter")
    throw FormatError("expected lora_adapter checkpoint: " + path);
  json cfg = a.manifest.at("config");
  const UNetConfig base_cfg = unet_config_from_json(cfg.at("base"));
  if (!(base_cfg == base.cfg))
    throw FormatError("adapter was trained for a different base architecture: " + path);
  cfg.erase("base");
  AdaptedModel<float> adapted = attach_lora(base, lora_config_from_json(cfg), 0);
  nn::ParamStore<float> store;
  collect_lora_params(adapted.net, store);
  load_tensors(a, path, store.params);
  return adapted;
}

void save_classifier_checkpoint(const std::string& path, ClassifierModel<float>& model) {
  nn::ParamStore<float> store;
  model.net.collect_params(store);
  json m;
  m["format_version"] = 1;
  m["kind"] = "classifier";
  m["config"] = classifier_config_to_json(model.cfg);
  m["tensors"] = tensor_list(store.params);
  m["meta"] = {{"tool", "raresynth"},
               {"param_count", store.count()},
               {"trained", model.trained},
               {"pos_weight_used", model.pos_weight_used},
               {"input_size", model.input_size}};
  write_file_atomic(path, pack_archive(m, store.params));
}

ClassifierModel<float> load_classifier_checkpoint(const std::string& path) {
  Archive a = unpack_archive(path);
  if (a.manifest.at("kind") != "classifier")
    throw FormatError("expected classifier checkpoint: " + path);
  ClassifierModel<float> model;
  model.cfg = classifier_config_from_json(a.manifest.at("config"));
  Rng rng(0);
  model.net = ClassifierNet<float>(model.cfg, rng);
  nn::ParamStore<float> store;
  model.net.collect_params(store);
  load_tensors(a, path, store.params);
  const json& meta = a.manifest.at("meta");
  model.trained = meta.at("trained").get<bool>();
  model.pos_weight_used = meta.at("pos_weight_used").get<double>();
  model.input_size = meta.at("input_size").get<int>();
  return model;
}

}  // namespace raresynth
