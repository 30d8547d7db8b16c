#include "raresynth/config.hpp"

#include <set>

#include <nlohmann/json.hpp>

#include "raresynth/checkpoint.hpp"
#include "raresynth/errors.hpp"
#include "raresynth/io_util.hpp"

namespace raresynth {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed,
                const std::string& where) {
  if (!j.is_object()) throw FormatError("config: " + where + " must be an object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k))
      throw FormatError("config: unknown key '" + k + "' in " + where);
}

json domain_params_to_json(const DomainParams& p) {
  return json{{"image_size", p.image_size},
              {"noise_amp", p.noise_amp},
              {"pixel_noise", p.pixel_noise},
              {"distractor_min", p.distractor_min},
              {"distractor_max", p.distractor_max},
              {"crack_count", p.crack_count},
              {"crack_width", p.crack_width},
              {"crack_depth_min", p.crack_depth_min},
              {"crack_depth_max", p.crack_depth_max},
              {"crack_len_min", p.crack_len_min},
              {"crack_len_max", p.crack_len_max},
              {"blob_radius_min", p.blob_radius_min},
              {"blob_radius_max", p.blob_radius_max},
              {"blob_amp_min", p.blob_amp_min},
              {"blob_amp_max", p.blob_amp_max}};
}

DomainParams domain_params_from_json(const json& j) {
  check_keys(j,
             {"image_size", "noise_amp", "pixel_noise", "distractor_min",
              "distractor_max", "crack_count", "crack_width", "crack_depth_min",
              "crack_depth_max", "crack_len_min", "crack_len_max", "blob_radius_min",
              "blob_radius_max", "blob_amp_min", "blob_amp_max"},
             "domain_params");
  DomainParams p;
  p.image_size = j.at("image_size").get<int>();
  p.noise_amp = j.at("noise_amp").get<double>();
  p.pixel_noise = j.at("pixel_noise").get<double>();
  p.distractor_min = j.at("distractor_min").get<int>();
  p.distractor_max = j.at("distractor_max").get<int>();
  p.crack_count = j.at("crack_count").get<int>();
  p.crack_width = j.at("crack_width").get<int>();
  p.crack_depth_min = j.at("crack_depth_min").get<double>();
  p.crack_depth_max = j.at("crack_depth_max").get<double>();
  p.crack_len_min = j.at("crack_len_min").get<int>();
  p.crack_len_max = j.at("crack_len_max").get<int>();
  p.blob_radius_min = j.at("blob_radius_min").get<double>();
  p.blob_radius_max = j.at("blob_radius_max").get<double>();
  p.blob_amp_min = j.at("blob_amp_min").get<double>();
  p.blob_amp_max = j.at("blob_amp_max").get<double>();
  return p;
}

}  // namespace

PipelineConfig default_config(const std::string& profile) {
  PipelineConfig c;
  c.profile = profile;
  c.domain_params = default_domain_params(c.domain, 32);
  if (profile == "desk") {
    // struct defaults are the desk profile
  } else if (profile == "paper") {
    c.schedule.T = 1000;
    c.lora.rank = 64;
    c.lora.alpha = 8.0;
    c.lora.dropout = 0.08;
    c.lora.steps = 200;
    c.lora.lr = 5e-3;
    c.sampler.steps = 22;
    c.sampler.guidance_scale = 2.0;
    c.pretrain.steps = 6000;
    c.sweep.pool_size = 1000;
    c.sweep.seeds = {1};
  } else {
    throw std::invalid_argument("unknown profile: " + profile +
                                " (expected desk or paper)");
  }
  return c;
}

json pipeline_config_to_json(const PipelineConfig& c) {
  json j;
  j["schema_version"] = c.schema_version;
  j["profile"] = c.profile;
  j["domain"] = domain_name(c.domain);
  j["domain_params"] = domain_params_to_json(c.domain_params);
  j["schedule"] = {{"T", c.schedule.T}, {"kind", schedule_kind_name(c.schedule.kind)}};
  j["model"] = unet_config_to_json(c.model);
  j["pretrain"] = {{"steps", c.pretrain.steps},
                   {"batch", c.pretrain.batch},
                   {"lr", c.pretrain.lr},
                   {"p_uncond", c.pretrain.p_uncond},
                   {"n_per_class", c.pretrain.n_per_class}};
  j["sampler"] = {{"steps", c.sampler.steps},
                  {"guidance_scale", c.sampler.guidance_scale},
                  {"eta", c.sampler.eta}};
  j["lora"] = lora_config_to_json(c.lora);
  j["classifier"] = classifier_config_to_json(c.classifier);
  j["threshold"] = c.threshold;
  j["data"] = {{"n_neg", c.data.n_neg},
               {"n_pos_train", c.data.n_pos_train},
               {"n_pos_lora", c.data.n_pos_lora},
               {"test_fraction", c.data.test_fraction}};
  j["sweep"] = {{"ratios", c.sweep.ratios},
                {"include_synth_only", c.sweep.include_synth_only},
                {"folds", c.sweep.folds},
                {"seeds", c.sweep.seeds},
                {"refit_lora_per_fold", c.sweep.refit_lora_per_fold},
                {"pool_size", c.sweep.pool_size},
                {"base_checkpoint", c.sweep.base_checkpoint}};
  j["diversity"] = {{"max_pairs", c.diversity.max_pairs},
                    {"psnr_shift_db", c.diversity.psnr_shift_db},
                    {"collapse_std_ratio", c.diversity.collapse_std_ratio}};
  j["out_dir"] = c.out_dir;
  j["seed"] = c.seed;
  j["jobs"] = c.jobs;
  return j;
}

PipelineConfig pipeline_config_from_json(const json& j) {
  check_keys(j,
             {"schema_version", "profile", "domain", "domain_params", "schedule",
              "model", "pretrain", "sampler", "lora", "classifier", "threshold", "data",
              "sweep", "diversity", "out_dir", "seed", "jobs"},
             "top level");
  PipelineConfig c;
  c.schema_version = j.at("schema_version").get<int>();
  if (c.schema_version != 1)
    throw FormatError("config: unsupported schema_version " +
                      std::to_string(c.schema_version));
  c.profile = j.at("profile").get<std::string>();
  c.domain = parse_domain(j.at("domain").get<std::string>());
  c.domain_params = domain_params_from_json(j.at("domain_params"));

  const json& sch = j.at("schedule");
  check_keys(sch, {"T", "kind"}, "schedule");
  c.schedule.T = sch.at("T").get<int>();
  c.schedule.kind = parse_schedule_kind(sch.at("kind").get<std::string>());

  check_keys(j.at("model"), {"in_channels", "widths", "res_blocks", "emb_dim", "gn_groups"},
             "model");
  c.model = unet_config_from_json(j.at("model"));

  const json& pre = j.at("pretrain");
  check_keys(pre, {"steps", "batch", "lr", "p_uncond", "n_per_class"}, "pretrain");
  c.pretrain.steps = pre.at("steps").get<int>();
  c.pretrain.batch = pre.at("batch").get<int>();
  c.pretrain.lr = pre.at("lr").get<double>();
  c.pretrain.p_uncond = pre.at("p_uncond").get<double>();
  c.pretrain.n_per_class = pre.at("n_per_class").get<int>();

  const json& smp = j.at("sampler");
  check_keys(smp, {"steps", "guidance_scale", "eta"}, "sampler");
  c.sampler.steps = smp.at("steps").get<int>();
  c.sampler.guidance_scale = smp.at("guidance_scale").get<double>();
  c.sampler.eta = smp.at("eta").get<double>();

  check_keys(j.at("lora"), {"rank", "alpha", "dropout", "targets", "steps", "lr", "batch"},
             "lora");
  c.lora = lora_config_from_json(j.at("lora"));

  check_keys(j.at("classifier"),
             {"widths", "gn_groups", "stem_stride", "activation", "epochs", "batch",
              "lr", "weight_decay", "pos_weight"},
             "classifier");
  c.classifier = classifier_config_from_json(j.at("classifier"));
  c.threshold = j.at("threshold").get<double>();

  const json& dat = j.at("data");
  check_keys(dat, {"n_neg", "n_pos_train", "n_pos_lora", "test_fraction"}, "data");
  c.data.n_neg = dat.at("n_neg").get<int>();
  c.data.n_pos_train = dat.at("n_pos_train").get<int>();
  c.data.n_pos_lora = dat.at("n_pos_lora").get<int>();
  c.data.test_fraction = dat.at("test_fraction").get<double>();

  const json& sw = j.at("sweep");
  check_keys(sw,
             {"ratios", "include_synth_only", "folds", "seeds", "refit_lora_per_fold",
              "pool_size", "base_checkpoint"},
             "sweep");
  c.sweep.ratios = sw.at("ratios").get<std::vector<double>>();
  for (std::size_t i = 0; i < c.sweep.ratios.size(); ++i) {
    if (c.sweep.ratios[i] < 0.0)
      throw FormatError("config: sweep.ratios must be non-negative");
    if (i > 0 && c.sweep.ratios[i] <= c.sweep.ratios[i - 1])
      throw FormatError("config: sweep.ratios must be sorted ascending");
  }
  c.sweep.include_synth_only = sw.at("include_synth_only").get<bool>();
  c.sweep.folds = sw.at("folds").get<int>();
  c.sweep.seeds = sw.at("seeds").get<std::vector<std::uint64_t>>();
  c.sweep.refit_lora_per_fold = sw.at("refit_lora_per_fold").get<bool>();
  c.sweep.pool_size = sw.at("pool_size").get<int>();
  c.sweep.base_checkpoint = sw.at("base_checkpoint").get<std::string>();

  const json& div = j.at("diversity");
  check_keys(div, {"max_pairs", "psnr_shift_db", "collapse_std_ratio"}, "diversity");
  c.diversity.max_pairs = div.at("max_pairs").get<std::int64_t>();
  c.diversity.psnr_shift_db = div.at("psnr_shift_db").get<double>();
  c.diversity.collapse_std_ratio = div.at("collapse_std_ratio").get<double>();

  c.out_dir = j.at("out_dir").get<std::string>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.jobs = j.at("jobs").get<int>();
  if (c.jobs < 1) throw FormatError("config: jobs must be >= 1");
  return c;
}

PipelineConfig load_config_file(const std::string& path, const std::string& profile) {
  json user = json::parse(read_file(path), nullptr, /*allow_exceptions=*/false);
  if (user.is_discarded()) throw FormatError("config is not valid JSON: " + path);
  json merged = pipeline_config_to_json(default_config(profile));
  merged.merge_patch(user);
  return pipeline_config_from_json(merged);
}

std::string resolved_config_string(const PipelineConfig& c) {
  return pipeline_config_to_json(c).dump(2) + "\n";
}

}  // namespace raresynth
