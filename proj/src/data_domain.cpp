#include "raresynth/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "raresynth/errors.hpp"
#include "raresynth/io_png.hpp"
#include "raresynth/rng.hpp"

namespace raresynth {

std::string domain_name(Domain d) {
  return d == Domain::tilecrack ? "tilecrack" : "lungspot";
}

Domain parse_domain(const std::string& s) {
  if (s == "tilecrack") return Domain::tilecrack;
  if (s == "lungspot") return Domain::lungspot;
  throw std::invalid_argument("unknown domain: " + s);
}

DomainParams default_domain_params(Domain d, int image_size) {
  DomainParams p;
  p.image_size = image_size;
  if (d == Domain::tilecrack) {
    p.crack_len_min = std::max(6, image_size * 9 / 16);
    p.crack_len_max = std::max(p.crack_len_min + 2, image_size * 5 / 4);
  } else {
    p.blob_radius_min = std::max(1.5, image_size / 16.0);
    p.blob_radius_max = std::max(p.blob_radius_min + 1.0, image_size * 5.0 / 32.0);
  }
  return p;
}

namespace {

// Zero-centered value noise: random lattice, bilinear interpolation.
void add_value_noise(Tensor<float>& img, int grid, double amp, Rng& rng) {
  const int size = img.size(1);
  std::vector<double> lattice(static_cast<std::size_t>((grid + 1) * (grid + 1)));
  for (auto& v : lattice) v = rng.uniform() - 0.5;
  const double scale = static_cast<double>(grid) / size;
  for (int y = 0; y < size; ++y) {
    const double fy = y * scale;
    const int gy = std::min(static_cast<int>(fy), grid - 1);
    const double ty = fy - gy;
    for (int x = 0; x < size; ++x) {
      const double fx = x * scale;
      const int gx = std::min(static_cast<int>(fx), grid - 1);
      const double tx = fx - gx;
      const double v00 = lattice[static_cast<std::size_t>(gy) * (grid + 1) + gx];
      const double v01 = lattice[static_cast<std::size_t>(gy) * (grid + 1) + gx + 1];
      const double v10 = lattice[static_cast<std::size_t>(gy + 1) * (grid + 1) + gx];
      const double v11 = lattice[static_cast<std::size_t>(gy + 1) * (grid + 1) + gx + 1];
      const double v = (1 - ty) * ((1 - tx) * v00 + tx * v01) +
                       ty * ((1 - tx) * v10 + tx * v11);
      img.data[static_cast<std::size_t>(y) * size + x] += static_cast<float>(amp * v);
    }
  }
}

void add_gaussian_spot(Tensor<float>& img, double cy, double cx, double sigma,
                       double amp) {
  const int size = img.size(1);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
      img.data[static_cast<std::size_t>(y) * size + x] +=
          static_cast<float>(amp * std::exp(-d2 / (2.0 * sigma * sigma)));
    }
}

void clamp_image(Tensor<float>& img, float lo, float hi) {
  for (auto& v : img.data) v = std::clamp(v, lo, hi);
}

// Negative tile texture: mid-gray slab with value noise, fine grain and a few
// round dark smudges that share the "dark mark" cue with cracks.
Tensor<float> render_tile_texture(const DomainParams& p, Rng& rng) {
  const int size = p.image_size;
  Tensor<float> img({1, size, size});
  const float base = static_cast<float>(rng.uniform(0.48, 0.68));
  img.fill(base);
  add_value_noise(img, 4, p.noise_amp, rng);
  add_value_noise(img, 8, p.noise_amp * 0.5, rng);
  for (auto& v : img.data) v += static_cast<float>(rng.normal() * p.pixel_noise);
  const int nd = p.distractor_min +
                 static_cast<int>(rng.uniform_int(
                     static_cast<std::uint64_t>(p.distractor_max - p.distractor_min + 1)));
  for (int i = 0; i < nd; ++i) {
    const double cy = rng.uniform(2.0, size - 3.0);
    const double cx = rng.uniform(2.0, size - 3.0);
    const double r = rng.uniform(1.5, 3.5);
    const double depth = rng.uniform(0.08, 0.22);
    add_gaussian_spot(img, cy, cx, r / 2.0, -depth);
  }
  // Keep the slab above the crack-contrast floor.
  clamp_image(img, 0.28f, 0.97f);
  return img;
}

void paint_crack(Tensor<float>& img, Tensor<float>* mask, const DomainParams& p,
                 Rng& rng) {
  const int size = p.image_size;
  const int n_cracks = p.crack_count;
  for (int c = 0; c < n_cracks; ++c) {
    double y = rng.uniform(2.0, size - 3.0);
    double x = rng.uniform(2.0, size - 3.0);
    double theta = rng.uniform(0.0, 6.283185307179586);
    const int len = p.crack_len_min +
                    static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(
                        p.crack_len_max - p.crack_len_min + 1)));
    const double depth = rng.uniform(p.crack_depth_min, p.crack_depth_max);
    for (int s = 0; s < len; ++s) {
      const int py = std::clamp(static_cast<int>(std::lround(y)), 0, size - p.crack_width);
      const int px = std::clamp(static_cast<int>(std::lround(x)), 0, size - p.crack_width);
      for (int dy = 0; dy < p.crack_width; ++dy)
        for (int dx = 0; dx < p.crack_width; ++dx) {
          const std::size_t idx = static_cast<std::size_t>(py + dy) * size + (px + dx);
          const double jitter = rng.uniform(0.9, 1.1);
          img.data[idx] = std::max(0.0f, img.data[idx] -
                                             static_cast<float>(depth * jitter));
          if (mask) mask->data[idx] = 1.0f;
        }
      theta += rng.uniform(-0.35, 0.35);
      double ny = y + std::sin(theta);
      double nx = x + std::cos(theta);
      if (ny < 2.0 || ny > size - 3.0) {
        theta = -theta;
        ny = y + std::sin(theta);
      }
      if (nx < 2.0 || nx > size - 3.0) {
        theta = 3.141592653589793 - theta;
        nx = x + std::cos(theta);
      }
      y = std::clamp(ny, 1.0, size - 2.0);
      x = std::clamp(nx, 1.0, size - 2.0);
    }
  }
}

// Negative lung field: smooth bright center, low-frequency clouds, rib bands.
Tensor<float> render_lung_texture(const DomainParams& p, Rng& rng) {
  const int size = p.image_size;
  Tensor<float> img({1, size, size});
  img.fill(static_cast<float>(rng.uniform(0.30, 0.42)));
  const double cy = size / 2.0 + rng.uniform(-2.0, 2.0);
  const double cx = size / 2.0 + rng.uniform(-2.0, 2.0);
  add_gaussian_spot(img, cy, cx, size / 2.4, 0.18);
  add_value_noise(img, 4, p.noise_amp, rng);
  add_value_noise(img, 8, p.noise_amp * 0.4, rng);
  const double period = rng.uniform(5.0, 9.0);
  const double phase = rng.uniform(0.0, 6.283185307179586);
  for (int y = 0; y < size; ++y) {
    const float band =
        static_cast<float>(0.04 * std::sin(2.0 * 3.141592653589793 * y / period + phase));
    for (int x = 0; x < size; ++x) img.data[static_cast<std::size_t>(y) * size + x] += band;
  }
  for (auto& v : img.data) v += static_cast<float>(rng.normal() * p.pixel_noise);
  clamp_image(img, 0.05f, 0.92f);
  return img;
}

void paint_blob(Tensor<float>& img, Tensor<float>* mask, const DomainParams& p,
                Rng& rng) {
  const int size = p.image_size;
  const double cy = rng.uniform(size * 0.30, size * 0.70);
  const double cx = rng.uniform(size * 0.30, size * 0.70);
  const double r = rng.uniform(p.blob_radius_min, p.blob_radius_max);
  const double amp = rng.uniform(p.blob_amp_min, p.blob_amp_max);
  add_gaussian_spot(img, cy, cx, r / 1.8, amp);
  if (mask) {
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r)
          mask->data[static_cast<std::size_t>(y) * size + x] = 1.0f;
  }
  clamp_image(img, 0.05f, 0.98f);
}

}  // namespace

LabeledSample gen_domain_masked(Domain domain, const DomainParams& params, Label label,
                                std::uint64_t seed, Tensor<float>* mask_out) {
  // Texture and structure use distinct streams so a positive sample sits on
  // the same texture its seed would render for a negative.
  Rng tex_rng(derive_seed(seed, 0x7e87));
  Rng struct_rng(derive_seed(seed, 0x51c7));

  LabeledSample s;
  s.label = label;
  s.origin = Origin::real;
  if (mask_out) *mask_out = Tensor<float>({1, params.image_size, params.image_size});

  if (domain == Domain::tilecrack) {
    s.image = render_tile_texture(params, tex_rng);
    if (label == Label::positive) paint_crack(s.image, mask_out, params, struct_rng);
  } else {
    s.image = render_lung_texture(params, tex_rng);
    if (label == Label::positive) paint_blob(s.image, mask_out, params, struct_rng);
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s-%s-%016llx", domain_name(domain).c_str(),
                label == Label::positive ? "pos" : "neg",
                static_cast<unsigned long long>(seed));
  s.id = buf;
  return s;
}

LabeledSample gen_domain(Domain domain, const DomainParams& params, Label label,
                         std::uint64_t seed) {
  return gen_domain_masked(domain, params, label, seed, nullptr);
}

namespace {

void append_generated(Dataset& out, Domain domain, const DomainParams& params,
                      Label label, int count, std::uint64_t seed,
                      std::uint64_t role) {
  for (int i = 0; i < count; ++i)
    out.samples.push_back(gen_domain(domain, params, label,
                                     derive_seed(seed, role,
                                                 static_cast<std::uint64_t>(i))));
}

}  // namespace

ImbalancedSplit make_imbalanced_split(Domain domain, const DomainParams& params,
                                      int n_neg, int n_pos_train, int n_pos_lora,
                                      double test_fraction, std::uint64_t seed) {
  if (n_neg < 1 || n_pos_train < 1 || n_pos_lora < 0)
    throw std::invalid_argument("make_imbalanced_split: counts must be positive");
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw std::invalid_argument("make_imbalanced_split: test_fraction must be in (0,1)");

  ImbalancedSplit split;
  const std::string dn = domain_name(domain);
  split.train.domain = dn;
  split.train.note = "imbalanced training pool";
  split.lora_set.domain = dn;
  split.lora_set.note = "rare positives reserved for adapter fine-tuning";
  split.test.domain = dn;
  split.test.note = "held-out real-only test split";

  append_generated(split.train, domain, params, Label::negative, n_neg, seed, 1);
  append_generated(split.train, domain, params, Label::positive, n_pos_train, seed, 2);
  append_generated(split.lora_set, domain, params, Label::positive, n_pos_lora, seed, 3);
  const int t_neg = static_cast<int>(std::floor(test_fraction * n_neg));
  const int t_pos = static_cast<int>(std::floor(test_fraction * n_pos_train));
  append_generated(split.test, domain, params, Label::negative, t_neg, seed, 4);
  append_generated(split.test, domain, params, Label::positive, t_pos, seed, 5);
  return split;
}

Dataset load_image_dir(const std::string& manifest_path, int target_size) {
  namespace fs = std::filesystem;
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest: " + manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();

  Dataset out;
  out.domain = "imported";
  out.note = "loaded from " + manifest_path;

  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (row == 1) {
      if (line != "path,label")
        throw FormatError("manifest row 1: expected header 'path,label'");
      continue;
    }
    const auto comma = line.rfind(',');
    if (comma == std::string::npos)
      throw FormatError("manifest row " + std::to_string(row) + ": missing comma");
    const std::string rel = line.substr(0, comma);
    const std::string lab = line.substr(comma + 1);
    if (lab != "0" && lab != "1")
      throw FormatError("manifest row " + std::to_string(row) +
                        ": label must be 0 or 1, got '" + lab + "'");
    fs::path p = fs::path(rel).is_absolute() ? fs::path(rel) : base / rel;
    if (!fs::exists(p)) throw IoError("manifest references missing file: " + p.string());
    LabeledSample s;
    s.image = resize_bilinear(read_png_gray(p.string()), target_size, target_size);
    s.label = lab == "1" ? Label::positive : Label::negative;
    s.origin = Origin::real;
    s.id = rel;
    out.samples.push_back(std::move(s));
  }
  return out;
}

AssembleMode parse_assemble_mode(const std::string& s) {
  if (s == "mixed") return AssembleMode::mixed;
  if (s == "synth_only") return AssembleMode::synth_only;
  throw std::invalid_argument("unknown assemble mode: " + s);
}

std::string assemble_mode_name(AssembleMode m) {
  return m == AssembleMode::mixed ? "mixed" : "synth_only";
}

Dataset assemble_training_set(const Dataset& real_train, const Dataset& pool,
                              double ratio, AssembleMode mode, std::uint64_t seed) {
  if (ratio < 0.0)
    throw std::invalid_argument("assemble_training_set: ratio must be >= 0");
  for (const auto& s : pool.samples)
    if (s.origin != Origin::synthetic || s.label != Label::positive)
      throw std::invalid_argument(
          "assemble_training_set: pool must contain only synthetic positives");

  int real_pos = 0;
  for (const auto& s : real_train.samples)
    if (s.label == Label::positive && s.origin == Origin::real) ++real_pos;
  const auto need = static_cast<std::size_t>(
      std::floor(ratio * static_cast<double>(real_pos)));
  if (need > pool.samples.size())
    throw std::invalid_argument("assemble_training_set: pool too small, required " +
                                std::to_string(need) + " vs available " +
                                std::to_string(pool.samples.size()));

  // One seeded shuffle; smaller ratios consume a prefix of larger ones.
  std::vector<int> order(pool.samples.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed_role(seed, SeedRole::assemble));
  rng.shuffle(order);

  Dataset out;
  out.domain = real_train.domain;
  out.note = "assembled ratio=" + std::to_string(ratio) + " mode=" +
             assemble_mode_name(mode);
  for (const auto& s : real_train.samples)
    if (mode == AssembleMode::mixed || s.label == Label::negative)
      out.samples.push_back(s);
  for (std::size_t i = 0; i < need; ++i)
    out.samples.push_back(pool.samples[static_cast<std::size_t>(order[i])]);
  return out;
}

}  // namespace raresynth
