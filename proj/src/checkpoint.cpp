#include "tpr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "tpr/errors.hpp"

namespace tpr::ckpt {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'T', 'P', 'R', 'C'};

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view b) : b_(b) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, b_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) throw CheckpointError("checkpoint: truncated file");
  }
  std::string_view b_;
  std::size_t pos_ = 0;
};

}  // namespace

const Entry* Checkpoint::find(std::string_view name) const {
  for (const auto& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

std::string to_bytes(const Checkpoint& c) {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, c.entries.size());
  for (const auto& e : c.entries) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out += e.name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.shape.size()));
    for (auto d : e.shape) put<std::uint64_t>(out, d);
    for (double v : e.values) put<double>(out, v);
  }
  const std::string meta = format_kv(c.meta);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(meta.size()));
  out += meta;
  return out;
}

Checkpoint from_bytes(std::string_view bytes) {
  Reader r(bytes);
  if (r.bytes(4) != std::string_view(kMagic, 4)) throw CheckpointError("checkpoint: bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) {
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint c;
  const auto count = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    Entry e;
    e.name = std::string(r.bytes(r.get<std::uint32_t>()));
    const auto rank = r.get<std::uint32_t>();
    for (std::uint32_t k = 0; k < rank; ++k) e.shape.push_back(r.get<std::uint64_t>());
    e.values.resize(numel(e.shape));
    for (auto& v : e.values) v = r.get<double>();
    c.entries.push_back(std::move(e));
  }
  c.meta = parse_kv(r.bytes(r.get<std::uint32_t>()));
  if (!r.done()) throw CheckpointError("checkpoint: trailing bytes");
  return c;
}

void save(const std::filesystem::path& path, const Checkpoint& c) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("checkpoint: cannot write " + path.string());
  const auto b = to_bytes(c);
  out.write(b.data(), static_cast<std::streamsize>(b.size()));
}

Checkpoint load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot read " + path.string());
  std::string b((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_bytes(b);
}

std::string config_fingerprint(const ModelConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : format_kv(cfg.to_kv())) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

Checkpoint snapshot(const Model& model, const data::Vocab& vocab, std::uint64_t seed,
                    const std::vector<train::EpochRecord>& history) {
  Checkpoint c;
  for (const auto& [name, p] : model.params()) {
    c.entries.push_back({name, p.shape(), {p.values().begin(), p.values().end()}});
  }
  c.meta = model.config().to_kv();
  c.meta["fingerprint"] = config_fingerprint(model.config());
  c.meta["seed"] = std::to_string(seed);
  std::string tokens;
  for (std::size_t i = data::Vocab::kUnk + 1; i < vocab.size(); ++i) {
    if (!tokens.empty()) tokens += ' ';
    tokens += vocab.token(static_cast<int>(i));
  }
  c.meta["vocab"] = tokens;
  std::string acc, loss;
  for (const auto& h : history) {
    if (!acc.empty()) {
      acc += ',';
      loss += ',';
    }
    acc += format_double(h.dev_acc);
    loss += format_double(h.train_loss);
  }
  c.meta["history.dev_acc"] = acc;
  c.meta["history.train_loss"] = loss;
  return c;
}

void restore(Model& model, const Checkpoint& c) {
  for (auto& [name, p] : model.params()) {
    const Entry* e = c.find(name);
    if (!e) throw CheckpointError("checkpoint: missing parameter " + name);
    if (e->shape != p.shape()) {
      throw CheckpointError("checkpoint: parameter " + name + " has shape " +
                            shape_str(e->shape) + ", model expects " + shape_str(p.shape()));
    }
    std::copy(e->values.begin(), e->values.end(), p.mutable_values().begin());
  }
}

ModelConfig model_config(const Checkpoint& c) {
  try {
    return ModelConfig::from_kv(c.meta);
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint: bad model metadata: ") + e.what());
  }
}

data::Vocab vocab(const Checkpoint& c) {
  data::Vocab v;
  auto it = c.meta.find("vocab");
  if (it == c.meta.end()) throw CheckpointError("checkpoint: no vocabulary");
  for (const auto& w : data::split_words(it->second)) v.add(w);
  return v;
}

Model load_model(const Checkpoint& c) {
  const auto cfg = model_config(c);
  std::uint64_t seed = 0;
  if (auto it = c.meta.find("seed"); it != c.meta.end()) seed = std::stoull(it->second);
  Model m(cfg, seed);
  restore(m, c);
  return m;
}

}  // namespace tpr::ckpt
