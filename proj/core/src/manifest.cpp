#include "vivit/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "vivit/errors.hpp"
#include "vivit/ops.hpp"
#include "vivit/volume_io.hpp"

namespace vivit {

using nlohmann::json;

const char* split_name(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw DataError("unknown split '" + name + "' (expected train, val or test)");
}

std::vector<const StudyRecord*> Manifest::split(Split which) const {
  std::vector<const StudyRecord*> out;
  for (const auto& s : studies) {
    if (s.split == which) out.push_back(&s);
  }
  return out;
}

Manifest parse_manifest(const std::string& json_text, const std::filesystem::path& base_dir, bool check_files) {
  json doc;
  // The JSON object model keeps only the last of repeated keys, so repeats
  // are caught while parsing.
  struct Scope {
    std::string opened_by;
    std::set<std::string> keys;
  };
  std::vector<Scope> scopes;
  std::string last_key;
  const json::parser_callback_t detect_repeats = [&](int, json::parse_event_t event, json& parsed) {
    switch (event) {
      case json::parse_event_t::object_start:
        scopes.push_back(Scope{last_key, {}});
        break;
      case json::parse_event_t::object_end:
        scopes.pop_back();
        break;
      case json::parse_event_t::key:
        last_key = parsed.get<std::string>();
        if (!scopes.back().keys.insert(last_key).second) {
          if (scopes.back().opened_by == "volumes") {
            throw DataError("manifest: a study lists modality '" + last_key + "' twice");
          }
          throw DataError("manifest: repeated key '" + last_key + "'");
        }
        break;
      default:
        break;
    }
    return true;
  };
  try {
    doc = json::parse(json_text, detect_repeats);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("manifest is not valid JSON: ") + e.what());
  }
  Manifest m;
  m.base_dir = base_dir;
  try {
    m.modalities = doc.at("modalities").get<std::vector<std::string>>();
    std::set<std::string> universe;
    for (const auto& name : m.modalities) {
      if (name.empty()) throw DataError("manifest: empty modality name");
      if (!universe.insert(name).second) throw DataError("manifest: modality '" + name + "' declared twice");
    }
    std::set<std::string> ids;
    for (const auto& s : doc.at("studies")) {
      StudyRecord r;
      r.id = s.at("id").get<std::string>();
      if (!ids.insert(r.id).second) throw DataError("manifest: duplicate study id '" + r.id + "'");
      r.split = parse_split(s.value("split", std::string("train")));
      const auto& vols = s.at("volumes");
      if (!vols.is_object() || vols.empty()) throw DataError("study '" + r.id + "' lists no volumes");
      for (auto it = vols.begin(); it != vols.end(); ++it) {
        if (!universe.count(it.key())) {
          throw DataError("study '" + r.id + "' uses undeclared modality '" + it.key() + "'");
        }
        r.volumes.emplace_back(it.key(), it.value().get<std::string>());
      }
      std::sort(r.volumes.begin(), r.volumes.end(), [&](const auto& a, const auto& b) {
        const auto ia = std::find(m.modalities.begin(), m.modalities.end(), a.first);
        const auto ib = std::find(m.modalities.begin(), m.modalities.end(), b.first);
        return ia < ib;
      });
      if (s.contains("label") && !s.at("label").is_null()) r.label = s.at("label").get<std::string>();
      m.studies.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("manifest: ") + e.what());
  }
  if (check_files) {
    for (const auto& r : m.studies) {
      for (const auto& [name, path] : r.volumes) {
        if (!std::filesystem::exists(m.resolve(path))) {
          throw DataError("study '" + r.id + "': missing volume file " + m.resolve(path).string());
        }
      }
      if (r.label && !std::filesystem::exists(m.resolve(*r.label))) {
        throw DataError("study '" + r.id + "': missing label file " + m.resolve(*r.label).string());
      }
    }
  }
  return m;
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str(), path.parent_path());
}

std::string manifest_to_json(const Manifest& manifest) {
  // ordered_json keeps volume keys in canonical modality order.
  nlohmann::ordered_json doc;
  doc["modalities"] = manifest.modalities;
  doc["studies"] = nlohmann::ordered_json::array();
  for (const auto& r : manifest.studies) {
    nlohmann::ordered_json s;
    s["id"] = r.id;
    s["split"] = split_name(r.split);
    s["volumes"] = nlohmann::ordered_json::object();
    for (const auto& [name, path] : r.volumes) s["volumes"][name] = path;
    if (r.label) s["label"] = *r.label;
    doc["studies"].push_back(std::move(s));
  }
  return doc.dump(2) + "\n";
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write manifest " + path.string());
  out << manifest_to_json(manifest);
}

namespace {

Tensor load_label(const Volume& raw, const LoadOptions& options) {
  const auto [h, w, d] = options.volume;
  const std::int64_t classes = options.num_classes;
  std::vector<Volume> channels;
  for (std::int64_t c = 0; c < classes; ++c) {
    Volume ch = raw;
    for (auto& v : ch.voxels) {
      const auto code = static_cast<std::int64_t>(std::lround(v));
      const bool on = classes == 1 ? code != 0 : ((code >> c) & 1) != 0;
      v = on ? 1.0f : 0.0f;
    }
    if (ch.shape != options.volume) {
      ch = resize(ch, options.volume);
      for (auto& v : ch.voxels) v = v >= 0.5f ? 1.0f : 0.0f;
    }
    channels.push_back(std::move(ch));
  }
  std::vector<Tensor> parts;
  for (const auto& ch : channels) parts.push_back(volume_to_tensor(ch, options.dtype));
  NoGradGuard guard;
  return classes == 1 ? parts.front() : ops::reshape(ops::concat_rows(parts), {classes, h, w, d});
}

}  // namespace

StudyTensors load_study(const Manifest& manifest, const StudyRecord& record, const LoadOptions& options) {
  StudyTensors study;
  study.id = record.id;
  for (const auto& [name, path] : record.volumes) {
    Volume v = read_volume(manifest.resolve(path));
    v = resize(v, options.volume);
    try {
      v = normalize(v);
    } catch (const DataError& e) {
      throw DataError("study '" + record.id + "', modality " + name + ": " + e.what());
    }
    study.volumes.push_back(ModalityVolume{name, volume_to_tensor(v, options.dtype)});
  }
  if (options.load_label) {
    if (!record.label) throw DataError("study '" + record.id + "' has no label");
    study.label = load_label(read_volume(manifest.resolve(*record.label)), options);
  }
  return study;
}

void canonicalize(StudyTensors& study, const ModalityRegistry& registry) {
  std::stable_sort(study.volumes.begin(), study.volumes.end(), [&](const auto& a, const auto& b) {
    return registry.id(a.modality).index < registry.id(b.modality).index;
  });
}

}  // namespace vivit
