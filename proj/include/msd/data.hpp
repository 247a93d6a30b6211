// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>
#include <zlib.h>

#include "msd/errors.hpp"
#include "msd/prob.hpp"
#include "msd/rng.hpp"

namespace msd {

enum class Split { kTrain, kMeta, kTest };

inline std::string split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kMeta: return "meta";
    default: return "test";
  }
}

inline Split split_from_name(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "meta") return Split::kMeta;
  if (name == "test") return Split::kTest;
  throw ParseError("unknown split '" + name + "'");
}

/// Input selector: both modalities, or one masked out.
enum class ModalityView { kMulti, kImageOnly, kTextOnly };

inline std::string view_name(ModalityView v) {
  switch (v) {
    case ModalityView::kMulti: return "multi";
    case ModalityView::kImageOnly: return "image";
    default: return "text";
  }
}

/// One labeled two-modality instance. `dominance` is generator metadata: the
/// text share of the class signal this sample was built with.
struct MultimodalSample {
  std::int64_t id = 0;
  std::vector<double> text_feats;
  std::vector<double> image_feats;
  OneHotLabel label;
  double dominance = 0.0;
  Split split = Split::kTrain;
};

struct DataGenConfig {
  int num_classes = 3;
  int d_text = 16;
  int d_image = 16;
  int n_train = 2000;
  int n_meta = 300;
  int n_test = 1000;
  double noise_sigma = 0.5;
  double confounder_prob = 0.2;
  std::uint64_t seed = 7;
};

inline void validate(const DataGenConfig& cfg) {
  if (cfg.num_classes < 2) throw ParamError("num_classes must be >= 2");
  if (cfg.d_text <= 0 || cfg.d_image <= 0) throw ParamError("feature dims must be positive");
  if (cfg.n_train <= 0 || cfg.n_meta <= 0 || cfg.n_test <= 0)
    throw ParamError("split counts must be positive");
  if (cfg.noise_sigma < 0.0) throw ParamError("noise_sigma must be nonnegative");
  if (cfg.confounder_prob < 0.0 || cfg.confounder_prob > 1.0)
    throw ParamError("confounder_prob must be in [0,1]");
}

/// share * prototype + sigma * standard normal noise, drawn componentwise.
inline std::vector<double> compose_features(std::span<const double> prototype, double share,
                                            double sigma, Rng& rng) {
  std::vector<double> out(prototype.size());
  for (std::size_t j = 0; j < prototype.size(); ++j)
    out[j] = share * prototype[j] + sigma * rng.normal();
  return out;
}

/// Deterministic synthetic dataset. Per class, one text and one image
/// prototype are drawn i.i.d. standard normal. Each sample's dominance
/// rho ~ U(0,1) splits the signal between modalities:
///   text  = rho * proto_text[y]  + sigma * noise
///   image = (1-rho) * proto_image[y] + sigma * noise
/// With probability confounder_prob one modality's prototype is swapped for
/// a uniformly chosen wrong class's prototype before composing, planting a
/// unimodal confounder. Splits are assigned by count in id order.
inline std::vector<MultimodalSample> generate_dataset(const DataGenConfig& cfg) {
  validate(cfg);
  Rng rng(cfg.seed);
  const int C = cfg.num_classes;
  std::vector<std::vector<double>> proto_text(C), proto_image(C);
  for (int k = 0; k < C; ++k) {
    proto_text[k].resize(cfg.d_text);
    for (double& v : proto_text[k]) v = rng.normal();
    proto_image[k].resize(cfg.d_image);
    for (double& v : proto_image[k]) v = rng.normal();
  }

  const int total = cfg.n_train + cfg.n_meta + cfg.n_test;
  std::vector<MultimodalSample> data;
  data.reserve(total);
  for (int i = 0; i < total; ++i) {
    MultimodalSample s;
    s.id = i;
    const int y = static_cast<int>(rng.below(C));
    s.label = OneHotLabel{y, C};
    const double rho = rng.next_double();
    s.dominance = rho;
    const std::vector<double>* pt = &proto_text[y];
    const std::vector<double>* pv = &proto_image[y];
    if (rng.next_double() < cfg.confounder_prob) {
      const int wrong = (y + 1 + static_cast<int>(rng.below(C - 1))) % C;
      if (rng.below(2) == 0)
        pt = &proto_text[wrong];
      else
        pv = &proto_image[wrong];
    }
    s.text_feats = compose_features(*pt, rho, cfg.noise_sigma, rng);
    s.image_feats = compose_features(*pv, 1.0 - rho, cfg.noise_sigma, rng);
    s.split = i < cfg.n_train             ? Split::kTrain
              : i < cfg.n_train + cfg.n_meta ? Split::kMeta
                                             : Split::kTest;
    data.push_back(std::move(s));
  }
  return data;
}

inline int view_input_dim(int d_text, int d_image) { return d_text + d_image + 2; }

/// Fixed-length network input for a view:
///   [text block | image block | text presence bit | image presence bit].
/// A masked modality is zeroed and its presence bit cleared, so a dropped
/// modality stays distinguishable from genuinely zero features.
inline std::vector<double> apply_view(const MultimodalSample& s, ModalityView view) {
  const std::size_t dt = s.text_feats.size(), dv = s.image_feats.size();
  std::vector<double> x(dt + dv + 2, 0.0);
  const bool text_on = view != ModalityView::kImageOnly;
  const bool image_on = view != ModalityView::kTextOnly;
  if (text_on)
    for (std::size_t j = 0; j < dt; ++j) x[j] = s.text_feats[j];
  if (image_on)
    for (std::size_t j = 0; j < dv; ++j) x[dt + j] = s.image_feats[j];
  x[dt + dv] = text_on ? 1.0 : 0.0;
  x[dt + dv + 1] = image_on ? 1.0 : 0.0;
  return x;
}

inline std::vector<int> split_indices(const std::vector<MultimodalSample>& data, Split split) {
  std::vector<int> idx;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data[i].split == split) idx.push_back(static_cast<int>(i));
  return idx;
}

// ---------------------------------------------------------------------------
// JSONL persistence (gzip when the path ends in .gz)
// ---------------------------------------------------------------------------

namespace detail {

inline bool has_gz_suffix(const std::string& path) {
  return path.size() >= 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
}

inline nlohmann::json sample_to_json(const MultimodalSample& s) {
  nlohmann::json j;
  j["id"] = s.id;
  j["text"] = s.text_feats;
  j["image"] = s.image_feats;
  j["label"] = s.label.class_index;
  j["dominance"] = s.dominance;
  j["split"] = split_name(s.split);
  return j;
}

inline MultimodalSample sample_from_json(const nlohmann::json& j, int num_classes) {
  MultimodalSample s;
  s.id = j.at("id").get<std::int64_t>();
  s.text_feats = j.at("text").get<std::vector<double>>();
  s.image_feats = j.at("image").get<std::vector<double>>();
  s.label = OneHotLabel{j.at("label").get<int>(), num_classes};
  s.dominance = j.at("dominance").get<double>();
  s.split = split_from_name(j.at("split").get<std::string>());
  return s;
}

}  // namespace detail

inline void save_dataset(const std::vector<MultimodalSample>& data, const std::string& path) {
  std::string text;
  for (const MultimodalSample& s : data) {
    text += detail::sample_to_json(s).dump();
    text += '\n';
  }
  if (detail::has_gz_suffix(path)) {
    gzFile gz = gzopen(path.c_str(), "wb");
    if (gz == nullptr) throw MissingInputError("cannot open for writing: " + path);
    if (!text.empty() &&
        gzwrite(gz, text.data(), static_cast<unsigned>(text.size())) !=
            static_cast<int>(text.size())) {
      gzclose(gz);
      throw ParseError("gzip write failed: " + path);
    }
    gzclose(gz);
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw MissingInputError("cannot open for writing: " + path);
  out << text;
}

inline std::vector<MultimodalSample> load_dataset(const std::string& path) {
  std::string text;
  if (detail::has_gz_suffix(path)) {
    gzFile gz = gzopen(path.c_str(), "rb");
    if (gz == nullptr) throw MissingInputError("missing dataset: " + path);
    char buf[1 << 16];
    int n;
    while ((n = gzread(gz, buf, sizeof(buf))) > 0) text.append(buf, static_cast<std::size_t>(n));
    const bool bad = n < 0;
    gzclose(gz);
    if (bad) throw ParseError("gzip read failed: " + path);
  } else {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingInputError("missing dataset: " + path);
    text.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }

  std::vector<MultimodalSample> data;
  std::size_t pos = 0;
  int line_no = 0;
  // Two passes are not needed: labels store the max class index seen plus
  // one, patched after the scan.
  int max_label = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    ++line_no;
    const std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    if (line.empty()) continue;
    try {
      const nlohmann::json j = nlohmann::json::parse(line);
      MultimodalSample s = detail::sample_from_json(j, 0);
      if (s.label.class_index < 0) throw ParseError("negative label");
      max_label = std::max(max_label, s.label.class_index);
      data.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ": line " + std::to_string(line_no) + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError(path + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  const int C = std::max(max_label + 1, 2);
  for (MultimodalSample& s : data) s.label.num_classes = C;
  return data;
}

}  // namespace msd
