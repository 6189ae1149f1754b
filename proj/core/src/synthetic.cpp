#include "vivit/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "vivit/errors.hpp"
#include "vivit/rng.hpp"

namespace vivit {

using nlohmann::json;

namespace {

const char* transform_name(ContrastTransform t) {
  switch (t) {
    case ContrastTransform::kLinear: return "linear";
    case ContrastTransform::kInverted: return "inverted";
    case ContrastTransform::kGamma: return "gamma";
  }
  return "linear";
}

ContrastTransform parse_transform(const std::string& name) {
  if (name == "linear") return ContrastTransform::kLinear;
  if (name == "inverted") return ContrastTransform::kInverted;
  if (name == "gamma") return ContrastTransform::kGamma;
  throw ConfigError("contrast transform must be linear, inverted or gamma, got '" + name + "'");
}

struct Ellipsoid {
  std::array<double, 3> center;
  std::array<double, 3> radii;

  double level(double x, double y, double z) const {
    const double a = (x - center[0]) / radii[0];
    const double b = (y - center[1]) / radii[1];
    const double c = (z - center[2]) / radii[2];
    return a * a + b * b + c * c;
  }
};

struct Blob {
  std::array<double, 3> center;
  double sigma;
  double amplitude;
};

}  // namespace

std::vector<std::string> SyntheticSpec::validate() const {
  std::vector<std::string> errors;
  std::set<std::string> universe(modalities.begin(), modalities.end());
  if (modalities.empty()) errors.push_back("modalities: at least one is required");
  if (universe.size() != modalities.size()) errors.push_back("modalities: names must be unique");
  if (num_studies < 1) errors.push_back("num_studies: must be >= 1");
  for (auto e : volume) {
    if (e < 4) errors.push_back("volume: extents must be >= 4");
  }
  if (train_fraction < 0 || val_fraction < 0 || train_fraction + val_fraction > 1.0 + 1e-12) {
    errors.push_back("splits: fractions must be non-negative and sum to at most 1");
  }
  for (const auto& s : subsets) {
    if (s.modalities.empty()) errors.push_back("subsets: empty modality subset");
    if (!(s.weight > 0)) errors.push_back("subsets: weights must be positive");
    for (const auto& m : s.modalities) {
      if (!universe.count(m)) errors.push_back("subsets: unknown modality '" + m + "'");
    }
    if (std::set<std::string>(s.modalities.begin(), s.modalities.end()).size() != s.modalities.size()) {
      errors.push_back("subsets: repeated modality in a subset");
    }
  }
  if (lesion_count_min < 0 || lesion_count_max < lesion_count_min) {
    errors.push_back("lesions.count: need 0 <= min <= max");
  }
  if (!(lesion_radius_min > 0) || lesion_radius_max < lesion_radius_min) {
    errors.push_back("lesions.radius: need 0 < min <= max");
  }
  const auto smallest = *std::min_element(volume.begin(), volume.end());
  // The lesion must fit inside the brain ellipsoid with a voxel of margin.
  if (lesion_count_max > 0 && 2.0 * (lesion_radius_max + 1.0) > 0.8 * static_cast<double>(smallest)) {
    errors.push_back("lesions.radius: lesion of radius " + std::to_string(lesion_radius_max) +
                     " does not fit a volume of extent " + std::to_string(smallest));
  }
  if (anatomy_blobs < 0) errors.push_back("anatomy.blobs: must be >= 0");
  for (const auto& [name, c] : contrasts) {
    if (!universe.count(name)) errors.push_back("contrasts: unknown modality '" + name + "'");
    if (c.noise < 0) errors.push_back("contrasts." + name + ".noise: must be >= 0");
  }
  return errors;
}

SyntheticSpec default_synthetic_spec() {
  SyntheticSpec s;
  s.modalities = {"TraceW", "ADC", "T2"};
  s.num_studies = 16;
  s.volume = {16, 16, 16};
  s.train_fraction = 0.75;
  s.val_fraction = 0.25;
  s.subsets = {{{"TraceW", "ADC", "T2"}, 2.0}, {{"TraceW", "ADC"}, 1.0}, {{"TraceW", "T2"}, 1.0}, {{"ADC", "T2"}, 1.0}};
  s.lesion_count_min = 1;
  s.lesion_count_max = 2;
  s.lesion_radius_min = 2.5;
  s.lesion_radius_max = 3.5;
  s.contrasts["TraceW"] = {ContrastTransform::kLinear, 1.5, 0.05};
  s.contrasts["ADC"] = {ContrastTransform::kInverted, -0.9, 0.05};
  s.contrasts["T2"] = {ContrastTransform::kGamma, 0.5, 0.08};
  return s;
}

std::string synthetic_spec_to_json(const SyntheticSpec& spec) {
  nlohmann::ordered_json doc;
  doc["modalities"] = spec.modalities;
  doc["num_studies"] = spec.num_studies;
  doc["volume"] = spec.volume;
  doc["splits"] = {{"train", spec.train_fraction}, {"val", spec.val_fraction}};
  doc["subsets"] = nlohmann::ordered_json::array();
  for (const auto& s : spec.subsets) doc["subsets"].push_back({{"modalities", s.modalities}, {"weight", s.weight}});
  doc["lesions"] = {{"count", {spec.lesion_count_min, spec.lesion_count_max}},
                    {"radius", {spec.lesion_radius_min, spec.lesion_radius_max}}};
  doc["anatomy"] = {{"blobs", spec.anatomy_blobs}};
  doc["contrasts"] = nlohmann::ordered_json::object();
  for (const auto& name : spec.modalities) {
    const auto it = spec.contrasts.find(name);
    const ContrastSpec c = it == spec.contrasts.end() ? ContrastSpec{} : it->second;
    doc["contrasts"][name] = {{"transform", transform_name(c.transform)}, {"lesion_gain", c.lesion_gain},
                              {"noise", c.noise}};
  }
  return doc.dump(2) + "\n";
}

SyntheticSpec parse_synthetic_spec(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("synthetic spec is not valid JSON: ") + e.what());
  }
  SyntheticSpec s;
  try {
    s.modalities = doc.at("modalities").get<std::vector<std::string>>();
    s.num_studies = doc.value("num_studies", s.num_studies);
    if (doc.contains("volume")) s.volume = doc.at("volume").get<std::array<std::int64_t, 3>>();
    if (doc.contains("splits")) {
      s.train_fraction = doc["splits"].value("train", s.train_fraction);
      s.val_fraction = doc["splits"].value("val", s.val_fraction);
    }
    if (doc.contains("subsets")) {
      for (const auto& e : doc.at("subsets")) {
        s.subsets.push_back({e.at("modalities").get<std::vector<std::string>>(), e.value("weight", 1.0)});
      }
    }
    if (doc.contains("lesions")) {
      const auto& l = doc.at("lesions");
      if (l.contains("count")) {
        const auto c = l.at("count").get<std::array<std::int64_t, 2>>();
        s.lesion_count_min = c[0];
        s.lesion_count_max = c[1];
      }
      if (l.contains("radius")) {
        const auto r = l.at("radius").get<std::array<double, 2>>();
        s.lesion_radius_min = r[0];
        s.lesion_radius_max = r[1];
      }
    }
    if (doc.contains("anatomy")) s.anatomy_blobs = doc["anatomy"].value("blobs", s.anatomy_blobs);
    if (doc.contains("contrasts")) {
      for (auto it = doc["contrasts"].begin(); it != doc["contrasts"].end(); ++it) {
        ContrastSpec c;
        c.transform = parse_transform(it.value().value("transform", std::string("linear")));
        c.lesion_gain = it.value().value("lesion_gain", c.lesion_gain);
        c.noise = it.value().value("noise", c.noise);
        s.contrasts[it.key()] = c;
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synthetic spec: ") + e.what());
  }
  const auto errors = s.validate();
  if (!errors.empty()) {
    std::string msg = "invalid synthetic spec:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return s;
}

SyntheticSpec read_synthetic_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open synthetic spec " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_synthetic_spec(ss.str());
}

SyntheticStudy generate_synthetic_study(const SyntheticSpec& spec, std::uint64_t seed, std::int64_t index) {
  const auto errors = spec.validate();
  if (!errors.empty()) throw ConfigError("invalid synthetic spec: " + errors.front());
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(index)));
  const auto [h, w, d] = spec.volume;
  const std::array<double, 3> ext{static_cast<double>(h), static_cast<double>(w), static_cast<double>(d)};

  SyntheticStudy study;
  char id[32];
  std::snprintf(id, sizeof(id), "study%04lld", static_cast<long long>(index));
  study.id = id;

  // Modality subset.
  std::vector<std::string> chosen = spec.modalities;
  if (!spec.subsets.empty()) {
    double total = 0.0;
    for (const auto& s : spec.subsets) total += s.weight;
    double u = rng.uniform() * total;
    std::size_t pick = spec.subsets.size() - 1;
    for (std::size_t i = 0; i < spec.subsets.size(); ++i) {
      if (u < spec.subsets[i].weight) {
        pick = i;
        break;
      }
      u -= spec.subsets[i].weight;
    }
    chosen.clear();
    // Canonical order: declaration order of the universe.
    for (const auto& m : spec.modalities) {
      const auto& sub = spec.subsets[pick].modalities;
      if (std::find(sub.begin(), sub.end(), m) != sub.end()) chosen.push_back(m);
    }
  }

  // Anatomy: a brain ellipsoid with smooth intensity blobs.
  Ellipsoid brain;
  for (int a = 0; a < 3; ++a) {
    brain.center[a] = 0.5 * ext[a] - 0.5 + rng.uniform(-0.5, 0.5);
    brain.radii[a] = 0.42 * ext[a] * rng.uniform(0.92, 1.05);
  }
  std::vector<Blob> blobs;
  for (std::int64_t b = 0; b < spec.anatomy_blobs; ++b) {
    Blob blob;
    for (int a = 0; a < 3; ++a) blob.center[a] = brain.center[a] + brain.radii[a] * rng.uniform(-0.8, 0.8);
    blob.sigma = rng.uniform(0.12, 0.25) * ext[0];
    blob.amplitude = rng.uniform(-0.3, 0.3);
    blobs.push_back(blob);
  }

  // Lesions on integer centers, fully inside the brain.
  std::vector<Ellipsoid> lesions;
  study.lesion_count = rng.uniform_range(spec.lesion_count_min, spec.lesion_count_max);
  for (std::int64_t l = 0; l < study.lesion_count; ++l) {
    Ellipsoid les;
    for (int a = 0; a < 3; ++a) les.radii[a] = rng.uniform(spec.lesion_radius_min, spec.lesion_radius_max);
    const double reach = *std::max_element(les.radii.begin(), les.radii.end()) + 1.0;
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      for (int a = 0; a < 3; ++a) {
        const auto lo = static_cast<std::int64_t>(std::ceil(brain.center[a] - brain.radii[a] + reach));
        const auto hi = static_cast<std::int64_t>(std::floor(brain.center[a] + brain.radii[a] - reach));
        if (hi < lo) break;
        les.center[a] = static_cast<double>(rng.uniform_range(lo, hi));
      }
      Ellipsoid shrunk = brain;
      for (int a = 0; a < 3; ++a) shrunk.radii[a] = brain.radii[a] - reach;
      placed = shrunk.radii[0] > 0 && shrunk.radii[1] > 0 && shrunk.radii[2] > 0 &&
               shrunk.level(les.center[0], les.center[1], les.center[2]) <= 1.0;
    }
    if (!placed) throw ConfigError("synthetic spec: lesion of radius " + std::to_string(reach - 1.0) +
                                   " cannot be placed inside the brain");
    lesions.push_back(les);
  }

  Volume anatomy;
  anatomy.shape = spec.volume;
  anatomy.voxels.assign(static_cast<std::size_t>(anatomy.size()), 0.0f);
  study.label = anatomy;
  std::vector<char> inside(anatomy.voxels.size(), 0);
  for (std::int64_t z = 0; z < d; ++z) {
    for (std::int64_t y = 0; y < w; ++y) {
      for (std::int64_t x = 0; x < h; ++x) {
        const auto i = static_cast<std::size_t>(anatomy.index(x, y, z));
        const double px = static_cast<double>(x), py = static_cast<double>(y), pz = static_cast<double>(z);
        if (brain.level(px, py, pz) > 1.0) continue;
        inside[i] = 1;
        // Shared tissue profile: darker core, brighter rim.
        const double rho2 = brain.level(px, py, pz);
        double a = 0.6 + 0.8 * rho2;
        for (const auto& b : blobs) {
          const double r2 = (px - b.center[0]) * (px - b.center[0]) + (py - b.center[1]) * (py - b.center[1]) +
                            (pz - b.center[2]) * (pz - b.center[2]);
          a += b.amplitude * std::exp(-0.5 * r2 / (b.sigma * b.sigma));
        }
        anatomy.voxels[i] = static_cast<float>(std::clamp(a, 0.3, 1.8));
        for (const auto& les : lesions) {
          if (les.level(px, py, pz) <= 1.0) study.label.voxels[i] = 1.0f;
        }
      }
    }
  }

  for (const auto& name : chosen) {
    const auto it = spec.contrasts.find(name);
    const ContrastSpec c = it == spec.contrasts.end() ? ContrastSpec{} : it->second;
    Rng noise = rng.split(name);
    Volume v = anatomy;
    for (std::size_t i = 0; i < v.voxels.size(); ++i) {
      if (!inside[i]) continue;
      const double a = anatomy.voxels[i];
      double s = c.transform == ContrastTransform::kLinear ? a : c.transform == ContrastTransform::kInverted ? 2.0 - a : a * a;
      s += c.lesion_gain * study.label.voxels[i] + noise.normal(0.0, c.noise);
      if (s == 0.0) s = 1e-6;  // keep the voxel inside the nonzero support
      v.voxels[i] = static_cast<float>(s);
    }
    study.volumes.emplace_back(name, std::move(v));
  }
  return study;
}

std::filesystem::path generate_synthetic_corpus(const SyntheticSpec& spec, std::uint64_t seed,
                                                const std::filesystem::path& out_dir) {
  const auto errors = spec.validate();
  if (!errors.empty()) {
    std::string msg = "invalid synthetic spec:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  std::filesystem::create_directories(out_dir / "studies");
  Manifest manifest;
  manifest.modalities = spec.modalities;
  manifest.base_dir = out_dir;
  const auto n = spec.num_studies;
  const auto n_train = static_cast<std::int64_t>(std::llround(spec.train_fraction * static_cast<double>(n)));
  const auto n_val = std::min(n - n_train, static_cast<std::int64_t>(std::llround(spec.val_fraction * static_cast<double>(n))));
  for (std::int64_t i = 0; i < n; ++i) {
    const SyntheticStudy s = generate_synthetic_study(spec, seed, i);
    const auto dir = std::filesystem::path("studies") / s.id;
    std::filesystem::create_directories(out_dir / dir);
    StudyRecord r;
    r.id = s.id;
    r.split = i < n_train ? Split::kTrain : i < n_train + n_val ? Split::kVal : Split::kTest;
    for (const auto& [name, vol] : s.volumes) {
      const auto rel = dir / (name + ".rvol");
      write_volume(out_dir / rel, vol);
      r.volumes.emplace_back(name, rel.generic_string());
    }
    const auto label_rel = dir / "label.rvol";
    write_volume(out_dir / label_rel, s.label);
    r.label = label_rel.generic_string();
    manifest.studies.push_back(std::move(r));
  }
  const auto path = out_dir / "manifest.json";
  write_manifest(path, manifest);
  return path;
}

}  // namespace vivit
