#include "vivit/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "json_io.hpp"
#include "vivit/errors.hpp"

namespace vivit {

namespace {

constexpr char kMagic[4] = {'V', 'I', 'V', 'T'};
constexpr std::uint8_t kTagF32 = 1;
constexpr std::uint8_t kTagF64 = 2;
constexpr const char* kMomentPrefix = "optimizer/m/";
constexpr const char* kVariancePrefix = "optimizer/v/";

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& in, std::string source) : in_(in), source_(std::move(source)) {}
  void need(std::size_t n, const char* what) const {
    if (pos_ + n > in_.size()) throw DataError(source_ + ": truncated checkpoint while reading " + what);
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return in_[pos_++];
  }
  std::uint32_t u32(const char* what) {
    std::uint32_t v;
    raw(&v, 4, what);
    return v;
  }
  std::uint64_t u64(const char* what) {
    std::uint64_t v;
    raw(&v, 8, what);
    return v;
  }
  void raw(void* p, std::size_t n, const char* what) {
    need(n, what);
    std::memcpy(p, in_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t remaining() const { return in_.size() - pos_; }
  const std::string& source() const { return source_; }

 private:
  const std::vector<std::uint8_t>& in_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace

const CheckpointTensor* Checkpoint::find(const std::string& name) const {
  const auto it = std::lower_bound(tensors.begin(), tensors.end(), name,
                                   [](const CheckpointTensor& t, const std::string& n) { return t.name < n; });
  return it != tensors.end() && it->name == name ? &*it : nullptr;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint) {
  for (std::size_t i = 1; i < checkpoint.tensors.size(); ++i) {
    if (!(checkpoint.tensors[i - 1].name < checkpoint.tensors[i].name)) {
      throw DataError("checkpoint entries must be unique and sorted by name");
    }
  }
  Writer w;
  w.raw(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(checkpoint.tensors.size()));
  for (const auto& entry : checkpoint.tensors) {
    const Tensor& t = entry.value;
    w.u32(static_cast<std::uint32_t>(entry.name.size()));
    w.raw(entry.name.data(), entry.name.size());
    w.u8(t.dtype() == DType::kFloat64 ? kTagF64 : kTagF32);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) w.u32(static_cast<std::uint32_t>(e));
    dispatch(t.dtype(), [&](auto tag) {
      using T = decltype(tag);
      const auto data = t.data<T>();
      w.raw(data.data(), data.size() * sizeof(T));
    });
  }
  w.u64(checkpoint.footer.size());
  w.raw(checkpoint.footer.data(), checkpoint.footer.size());
  return w.take();
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes, const std::string& source) {
  Reader r(bytes, source);
  char magic[4];
  r.raw(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw DataError(source + ": not a checkpoint (bad magic)");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw DataError(source + ": unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32("entry count");
  Checkpoint ckpt;
  ckpt.tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = r.u32("name length");
    r.need(len, "name");
    std::string name(len, '\0');
    r.raw(name.data(), len, "name");
    const std::uint8_t tag = r.u8("dtype");
    if (tag != kTagF32 && tag != kTagF64) throw DataError(source + ": unknown dtype tag for " + name);
    const std::uint32_t rank = r.u32("rank");
    if (rank > 8) throw DataError(source + ": implausible rank for " + name);
    Shape shape;
    std::uint64_t numel = 1;
    for (std::uint32_t a = 0; a < rank; ++a) {
      shape.push_back(r.u32("extent"));
      numel *= static_cast<std::uint64_t>(shape.back());
      if (numel > (std::uint64_t{1} << 34)) throw DataError(source + ": tensor " + name + " too large");
    }
    const DType dtype = tag == kTagF64 ? DType::kFloat64 : DType::kFloat32;
    Tensor t = Tensor::zeros(shape, dtype);
    dispatch(dtype, [&](auto dtag) {
      using T = decltype(dtag);
      auto data = t.data<T>();
      r.raw(data.data(), data.size() * sizeof(T), name.c_str());
    });
    if (!ckpt.tensors.empty() && !(ckpt.tensors.back().name < name)) {
      throw DataError(source + ": entries not sorted or repeated at " + name);
    }
    ckpt.tensors.push_back({std::move(name), std::move(t)});
  }
  const std::uint64_t footer_len = r.u64("footer length");
  if (footer_len != r.remaining()) throw DataError(source + ": footer length does not match file size");
  ckpt.footer.resize(footer_len);
  r.raw(ckpt.footer.data(), footer_len, "footer");
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const auto bytes = encode_checkpoint(checkpoint);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes, path.string());
}

Checkpoint capture_checkpoint(const VivitModel& model, const AdamW* optimizer, const TrainingState& state) {
  Checkpoint ckpt;
  for (const auto& [name, t] : model.parameters().tensors()) ckpt.tensors.push_back({name, t.detach()});
  detail::ordered_json opt = nullptr;
  if (optimizer) {
    opt = detail::ordered_json::object();
    opt["beta1"] = optimizer->config().beta1;
    opt["beta2"] = optimizer->config().beta2;
    opt["eps"] = optimizer->config().eps;
    opt["weight_decay"] = optimizer->config().weight_decay;
    opt["updates"] = optimizer->updates();
    opt["steps"] = detail::ordered_json::object();
    for (const auto& [name, slot] : optimizer->slots()) {
      ckpt.tensors.push_back({kMomentPrefix + name, slot.m.detach()});
      ckpt.tensors.push_back({kVariancePrefix + name, slot.v.detach()});
      opt["steps"][name] = slot.step;
    }
  }
  std::sort(ckpt.tensors.begin(), ckpt.tensors.end(),
            [](const CheckpointTensor& a, const CheckpointTensor& b) { return a.name < b.name; });

  detail::ordered_json footer;
  footer["format"] = kCheckpointVersion;
  footer["model"] = detail::model_config_to_json(model.config());
  footer["seed"] = model.parameters().seed();
  footer["modalities"] = model.registry().names();
  footer["bank"] = detail::ordered_json::array();
  if (model.has_segmentation()) {
    for (const auto& [name, level] : model.bank().entries()) {
      footer["bank"].push_back({name, level});
    }
  }
  footer["optimizer"] = opt;
  footer["training"] = {{"phase", state.phase},
                        {"step", state.step},
                        {"epoch", state.epoch},
                        {"rng", state.rng_state},
                        {"best_metric", state.best_metric}};
  footer["run_config"] = state.run_config.empty() ? detail::ordered_json(nullptr)
                                                  : detail::ordered_json::parse(state.run_config);
  ckpt.footer = footer.dump(2) + "\n";
  return ckpt;
}

CheckpointInfo checkpoint_info(const Checkpoint& checkpoint) {
  nlohmann::json footer;
  try {
    footer = nlohmann::json::parse(checkpoint.footer);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint footer is not valid JSON: ") + e.what());
  }
  CheckpointInfo info;
  try {
    std::vector<std::string> errors;
    info.config = detail::model_config_from_json(footer.at("model"), ModelConfig{}, errors);
    if (!errors.empty()) throw DataError("checkpoint model config: " + errors.front());
    info.seed = footer.at("seed").get<std::uint64_t>();
    info.modalities = footer.at("modalities").get<std::vector<std::string>>();
    for (const auto& e : footer.at("bank")) info.bank.emplace_back(e.at(0).get<std::string>(), e.at(1).get<std::int64_t>());
    const auto& tr = footer.at("training");
    info.state.phase = tr.at("phase").get<std::string>();
    info.state.step = tr.at("step").get<std::int64_t>();
    info.state.epoch = tr.at("epoch").get<std::int64_t>();
    info.state.rng_state = tr.at("rng").get<std::string>();
    info.state.best_metric = tr.at("best_metric").get<double>();
    if (!footer.at("run_config").is_null()) info.state.run_config = footer.at("run_config").dump();
    info.has_optimizer = !footer.at("optimizer").is_null();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint footer: ") + e.what());
  }
  return info;
}

LoadReport load_parameters(VivitModel& model, const Checkpoint& checkpoint, const std::vector<std::string>& prefixes) {
  const CheckpointInfo info = checkpoint_info(checkpoint);
  for (const auto& name : info.modalities) model.register_modality(name);
  const auto selected = [&](const std::string& name) {
    if (prefixes.empty()) return true;
    return std::any_of(prefixes.begin(), prefixes.end(), [&](const std::string& p) { return name.rfind(p, 0) == 0; });
  };
  if (model.has_segmentation()) {
    for (const auto& [name, level] : info.bank) {
      if (selected(LevelAttentionBank::prefix(name, level))) model.bank().get(name, level);
    }
  }
  LoadReport report;
  ParameterSet& params = model.parameters();
  for (const auto& entry : checkpoint.tensors) {
    if (entry.name.rfind("optimizer/", 0) == 0) {
      ++report.optimizer_entries;
      continue;
    }
    if (!selected(entry.name) || !params.contains(entry.name)) {
      report.unmatched.push_back(entry.name);
      continue;
    }
    Tensor target = params.at(entry.name);
    if (target.shape() != entry.value.shape()) {
      throw ShapeError("checkpoint tensor " + entry.name + " has shape " + shape_str(entry.value.shape()) +
                       ", model expects " + shape_str(target.shape()));
    }
    target.copy_from(entry.value);
    report.loaded.push_back(entry.name);
  }
  for (const auto& [name, t] : params.tensors()) {
    if (!checkpoint.find(name) || !selected(name)) report.fresh.push_back(name);
  }
  return report;
}

std::unique_ptr<VivitModel> model_from_checkpoint(const Checkpoint& checkpoint, ModelHeads heads) {
  const CheckpointInfo info = checkpoint_info(checkpoint);
  DType dtype = DType::kFloat32;
  if (!checkpoint.tensors.empty() && checkpoint.tensors.front().value.dtype() == DType::kFloat64) dtype = DType::kFloat64;
  auto model = std::make_unique<VivitModel>(info.config, info.seed, heads, dtype);
  load_parameters(*model, checkpoint);
  return model;
}

void restore_optimizer(AdamW& optimizer, const Checkpoint& checkpoint) {
  const auto footer = nlohmann::json::parse(checkpoint.footer);
  const auto& opt = footer.at("optimizer");
  if (opt.is_null()) throw DataError("checkpoint holds no optimizer state");
  AdamWConfig config;
  config.beta1 = opt.at("beta1").get<double>();
  config.beta2 = opt.at("beta2").get<double>();
  config.eps = opt.at("eps").get<double>();
  config.weight_decay = opt.at("weight_decay").get<double>();
  optimizer = AdamW(config);
  optimizer.set_updates(opt.at("updates").get<std::int64_t>());
  for (auto it = opt.at("steps").begin(); it != opt.at("steps").end(); ++it) {
    const auto* m = checkpoint.find(kMomentPrefix + it.key());
    const auto* v = checkpoint.find(kVariancePrefix + it.key());
    if (!m || !v) throw DataError("checkpoint optimizer state for " + it.key() + " is incomplete");
    AdamWSlot slot{m->value.detach(), v->value.detach(), it.value().get<std::int64_t>()};
    optimizer.slots().emplace(it.key(), std::move(slot));
  }
}

}  // namespace vivit
