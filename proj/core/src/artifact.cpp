#include "ssdd/artifact.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ssdd {

namespace {

constexpr char kMagic[8] = {'S', 'S', 'D', 'D', 'B', 'O', 'X', '1'};
constexpr uint32_t kVersion = 1;

std::array<uint32_t, 256> make_crc_table() {
  std::array<uint32_t, 256> table{};
  for (uint32_t i = 0; i < 256; ++i) {
    uint32_t crc = i;
    for (int b = 0; b < 8; ++b) crc = (crc >> 1) ^ (0xEDB88320u & (~(crc & 1u) + 1u));
    table[i] = crc;
  }
  return table;
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<uint8_t>(v >> (8 * b)));
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<uint8_t>(v >> (8 * b)));
}

void put_str(std::vector<uint8_t>& out, const std::string& s) {
  put_u32(out, static_cast<uint32_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

struct Reader {
  std::span<const uint8_t> bytes;
  size_t pos = 0;
  std::string context = "header";

  void need(size_t n) {
    if (pos + n > bytes.size())
      throw IoError("container: truncated while reading " + context);
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<uint32_t>(bytes[pos + b]) << (8 * b);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= static_cast<uint64_t>(bytes[pos + b]) << (8 * b);
    pos += 8;
    return v;
  }
  uint8_t u8() {
    need(1);
    return bytes[pos++];
  }
  std::string str(uint32_t max_len = 1u << 20) {
    const uint32_t len = u32();
    if (len > max_len) throw IoError("container: unreasonable string length in " + context);
    need(len);
    std::string s(reinterpret_cast<const char*>(bytes.data() + pos), len);
    pos += len;
    return s;
  }
};

}  // namespace

uint32_t crc32_ieee(std::span<const uint8_t> bytes) {
  static const auto table = make_crc_table();
  uint32_t crc = 0xFFFFFFFFu;
  for (uint8_t b : bytes) crc = (crc >> 8) ^ table[(crc ^ b) & 0xFFu];
  return crc ^ 0xFFFFFFFFu;
}

std::vector<uint8_t> Container::serialize() const {
  std::vector<uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 8);
  put_u32(out, kVersion);
  const size_t crc_start = out.size();
  put_u32(out, static_cast<uint32_t>(metadata.size()));
  for (const auto& [k, v] : metadata) {
    put_str(out, k);
    put_str(out, v);
  }
  put_u32(out, static_cast<uint32_t>(fields.size()));
  for (const auto& f : fields) {
    put_str(out, f.name);
    out.push_back(0);  // dtype f32
    out.push_back(static_cast<uint8_t>(f.shape.size()));
    for (int64_t d : f.shape) put_u64(out, static_cast<uint64_t>(d));
    const size_t payload = f.data.size() * sizeof(float);
    const size_t at = out.size();
    out.resize(at + payload);
    std::memcpy(out.data() + at, f.data.data(), payload);
  }
  const uint32_t crc = crc32_ieee({out.data() + crc_start, out.size() - crc_start});
  put_u32(out, crc);
  return out;
}

Container Container::deserialize(std::span<const uint8_t> bytes) {
  if (bytes.size() < 16) throw IoError("container: too short to hold a header");
  if (std::memcmp(bytes.data(), kMagic, 8) != 0)
    throw IoError("container: bad magic, not a container file");
  Reader r{bytes, 8};
  const uint32_t version = r.u32();
  if (version != kVersion)
    throw IoError("container: unsupported version " + std::to_string(version));

  // CRC covers everything between the version word and the trailer.
  const size_t body_begin = r.pos;
  const size_t body_end = bytes.size() - 4;
  uint32_t stored = 0;
  for (int b = 0; b < 4; ++b)
    stored |= static_cast<uint32_t>(bytes[body_end + b]) << (8 * b);
  const uint32_t computed = crc32_ieee(bytes.subspan(body_begin, body_end - body_begin));
  if (stored != computed) {
    std::ostringstream os;
    os << "container: checksum mismatch (stored 0x" << std::hex << stored << ", computed 0x"
       << computed << ")";
    throw IoError(os.str());
  }

  Container c;
  r.context = "metadata";
  const uint32_t meta_count = r.u32();
  for (uint32_t i = 0; i < meta_count; ++i) {
    std::string k = r.str();
    std::string v = r.str();
    c.metadata.emplace_back(std::move(k), std::move(v));
  }
  r.context = "field table";
  const uint32_t field_count = r.u32();
  for (uint32_t i = 0; i < field_count; ++i) {
    ContainerField f;
    r.context = "field " + std::to_string(i);
    f.name = r.str();
    r.context = "field '" + f.name + "'";
    const uint8_t dtype = r.u8();
    if (dtype != 0) throw IoError("container: field '" + f.name + "' has unknown dtype");
    const uint8_t ndim = r.u8();
    int64_t numel = 1;
    for (uint8_t d = 0; d < ndim; ++d) {
      const auto dim = static_cast<int64_t>(r.u64());
      if (dim <= 0 || dim > (1ll << 32))
        throw IoError("container: field '" + f.name + "' has invalid dimension");
      f.shape.push_back(dim);
      numel *= dim;
    }
    r.need(static_cast<size_t>(numel) * sizeof(float));
    f.data.resize(static_cast<size_t>(numel));
    std::memcpy(f.data.data(), r.bytes.data() + r.pos, f.data.size() * sizeof(float));
    r.pos += f.data.size() * sizeof(float);
    c.fields.push_back(std::move(f));
  }
  if (r.pos != body_end) throw IoError("container: trailing bytes after last field");
  return c;
}

const ContainerField* Container::find(const std::string& name) const {
  for (const auto& f : fields)
    if (f.name == name) return &f;
  return nullptr;
}

const ContainerField& Container::require(const std::string& name) const {
  const auto* f = find(name);
  if (!f) throw IoError("container: missing field '" + name + "'");
  return *f;
}

const std::string* Container::meta(const std::string& key) const {
  for (const auto& [k, v] : metadata)
    if (k == key) return &v;
  return nullptr;
}

const std::string& Container::require_meta(const std::string& key) const {
  const auto* v = meta(key);
  if (!v) throw IoError("container: missing metadata key '" + key + "'");
  return *v;
}

void Container::add_field(const std::string& name, const Tensor& values) {
  ContainerField f;
  f.name = name;
  f.shape = values.shape();
  f.data.reserve(static_cast<size_t>(values.numel()));
  for (double v : values.data()) f.data.push_back(static_cast<float>(v));
  fields.push_back(std::move(f));
}

Tensor Container::field_tensor(const std::string& name, bool requires_grad) const {
  const auto& f = require(name);
  std::vector<double> data(f.data.begin(), f.data.end());
  return Tensor::from_data(f.shape, std::move(data), requires_grad);
}

void write_container(const std::filesystem::path& path, const Container& c) {
  const auto bytes = c.serialize();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write: " + path.string());
}

Container read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open: " + path.string());
  const auto size = static_cast<size_t>(in.tellg());
  std::vector<uint8_t> bytes(size);
  in.seekg(0);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  if (!in) throw IoError("short read: " + path.string());
  return Container::deserialize(bytes);
}

// ---------------------------------------------------------------------------
// distilled artifact
// ---------------------------------------------------------------------------

int64_t DistilledArtifact::float_count() const {
  int64_t total = image_basis.numel() + image_mean.numel() + image_coeffs.numel() +
                  rep_basis.numel() + rep_mean.numel() + rep_coeffs.numel();
  for (const auto& net : approx_nets)
    total += net.w1.numel() + net.b1.numel() + net.w2.numel() + net.b2.numel();
  return total;
}

ImageBases DistilledArtifact::image_bases_view() const {
  ImageBases b;
  b.basis = image_basis;
  b.mean = image_mean;
  b.scale = scale;
  b.geom = geom;
  return b;
}

RepBases DistilledArtifact::rep_bases_view() const {
  RepBases b;
  b.basis = rep_basis;
  b.mean = rep_mean;
  return b;
}

BudgetLedger audit_budget(const DistilledArtifact& artifact, int64_t n_images, int64_t d_x) {
  BudgetLedger ledger;
  ledger.n_images = n_images;
  ledger.d_x = d_x;
  ledger.items = {
      {"image_basis", artifact.image_basis.numel()},
      {"image_mean", artifact.image_mean.numel()},
      {"image_coeffs", artifact.image_coeffs.numel()},
      {"rep_basis", artifact.rep_basis.numel()},
      {"rep_mean", artifact.rep_mean.numel()},
      {"rep_coeffs", artifact.rep_coeffs.numel()},
  };
  int64_t nets = 0;
  for (const auto& net : artifact.approx_nets)
    nets += net.w1.numel() + net.b1.numel() + net.w2.numel() + net.b2.numel();
  ledger.items.emplace_back("approx_nets", nets);
  ledger.total = 0;
  for (const auto& [name, count] : ledger.items) ledger.total += count;
  ledger.slack = n_images * d_x - ledger.total;
  return ledger;
}

int64_t container_payload_floats(const Container& c) {
  int64_t total = 0;
  for (const auto& f : c.fields) total += f.numel();
  return total;
}

void enforce_budget(const BudgetLedger& ledger) {
  if (!ledger.within_budget())
    throw ConfigError("budget exceeded by " + std::to_string(-ledger.slack) + " floats (total " +
                      std::to_string(ledger.total) + " > " +
                      std::to_string(ledger.n_images * ledger.d_x) + ")");
}

std::string BudgetLedger::table() const {
  std::ostringstream os;
  os << "budget: " << n_images << " images x " << d_x << " floats = " << n_images * d_x << "\n";
  for (const auto& [name, count] : items) os << "  " << name << "\t" << count << "\n";
  os << "  total\t" << total << "\n  slack\t" << slack << "\n";
  return os.str();
}

namespace {

std::string spec_to_string(const AugmentationSpec& spec) {
  std::ostringstream os;
  for (size_t i = 0; i < spec.transforms.size(); ++i) {
    if (i) os << ',';
    os << transform_name(spec.transforms[i].kind);
    if (spec.transforms[i].crop_side > 0) os << ':' << spec.transforms[i].crop_side;
  }
  return os.str();
}

AugmentationSpec spec_from_string(const std::string& s) {
  AugmentationSpec spec;
  std::istringstream is(s);
  std::string item;
  while (std::getline(is, item, ',')) {
    if (item.empty()) continue;
    Transform t{TransformKind::Rotate90, 0};
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      t.kind = transform_from_name(item);
    } else {
      t.kind = transform_from_name(item.substr(0, colon));
      t.crop_side = std::stoi(item.substr(colon + 1));
    }
    spec.transforms.push_back(t);
  }
  return spec;
}

constexpr const char* kReservedKeys[] = {"kind",      "channels",      "height", "width",
                                         "scale",     "rep_dim",       "budget_images",
                                         "approx_hidden", "augmentations"};

bool reserved_key(const std::string& k) {
  for (const char* r : kReservedKeys)
    if (k == r) return true;
  return false;
}

}  // namespace

Container to_container(const DistilledArtifact& artifact) {
  Container c;
  c.metadata.emplace_back("kind", "artifact");
  c.metadata.emplace_back("channels", std::to_string(artifact.geom.c));
  c.metadata.emplace_back("height", std::to_string(artifact.geom.h));
  c.metadata.emplace_back("width", std::to_string(artifact.geom.w));
  c.metadata.emplace_back("scale", std::to_string(artifact.scale));
  c.metadata.emplace_back("rep_dim", std::to_string(artifact.d_y));
  c.metadata.emplace_back("budget_images", std::to_string(artifact.budget_images));
  c.metadata.emplace_back("approx_hidden", std::to_string(artifact.approx_hidden));
  c.metadata.emplace_back("augmentations", spec_to_string(artifact.spec));
  for (const auto& [k, v] : artifact.extra_metadata)
    if (!reserved_key(k)) c.metadata.emplace_back(k, v);

  c.add_field("image_basis", artifact.image_basis);
  c.add_field("image_mean", artifact.image_mean);
  c.add_field("image_coeffs", artifact.image_coeffs);
  c.add_field("rep_basis", artifact.rep_basis);
  c.add_field("rep_mean", artifact.rep_mean);
  c.add_field("rep_coeffs", artifact.rep_coeffs);
  for (size_t a = 0; a < artifact.approx_nets.size(); ++a) {
    const std::string prefix = "approx" + std::to_string(a) + "_";
    c.add_field(prefix + "w1", artifact.approx_nets[a].w1);
    c.add_field(prefix + "b1", artifact.approx_nets[a].b1);
    c.add_field(prefix + "w2", artifact.approx_nets[a].w2);
    c.add_field(prefix + "b2", artifact.approx_nets[a].b2);
  }
  return c;
}

DistilledArtifact artifact_from_container(const Container& c) {
  if (c.require_meta("kind") != "artifact")
    throw IoError("container: expected kind 'artifact', got '" + c.require_meta("kind") + "'");
  DistilledArtifact a;
  a.geom.c = std::stoll(c.require_meta("channels"));
  a.geom.h = std::stoll(c.require_meta("height"));
  a.geom.w = std::stoll(c.require_meta("width"));
  a.scale = std::stoi(c.require_meta("scale"));
  a.d_y = std::stoll(c.require_meta("rep_dim"));
  a.budget_images = std::stoll(c.require_meta("budget_images"));
  a.approx_hidden = std::stoll(c.require_meta("approx_hidden"));
  a.spec = spec_from_string(c.require_meta("augmentations"));
  for (const auto& [k, v] : c.metadata)
    if (!reserved_key(k)) a.extra_metadata.emplace_back(k, v);

  a.image_basis = c.field_tensor("image_basis");
  a.image_mean = c.field_tensor("image_mean");
  a.image_coeffs = c.field_tensor("image_coeffs");
  a.rep_basis = c.field_tensor("rep_basis");
  a.rep_mean = c.field_tensor("rep_mean");
  a.rep_coeffs = c.field_tensor("rep_coeffs");
  for (int64_t t = 0; t < a.spec.count(); ++t) {
    const std::string prefix = "approx" + std::to_string(t) + "_";
    if (!c.find(prefix + "w1")) break;  // artifact saved before net training
    Mlp2 net;
    net.w1 = c.field_tensor(prefix + "w1");
    net.b1 = c.field_tensor(prefix + "b1");
    net.w2 = c.field_tensor(prefix + "w2");
    net.b2 = c.field_tensor(prefix + "b2");
    a.approx_nets.push_back(std::move(net));
  }
  return a;
}

DistilledArtifact make_artifact(const Parameterization& param, std::vector<Mlp2> nets,
                                int64_t approx_hidden, int64_t budget_images,
                                std::vector<std::pair<std::string, std::string>> extra_metadata) {
  DistilledArtifact a;
  a.geom = param.image_bases.geom;
  a.scale = param.image_bases.scale;
  a.d_y = param.rep_bases.dim();
  a.budget_images = budget_images;
  a.image_basis = param.image_bases.basis.detach();
  a.image_mean = param.image_bases.mean.detach();
  a.image_coeffs = param.image_coeffs.detach();
  a.rep_basis = param.rep_bases.basis.detach();
  a.rep_mean = param.rep_bases.mean.detach();
  a.rep_coeffs = param.rep_coeffs.base.detach();
  a.approx_nets = std::move(nets);
  a.approx_hidden = approx_hidden;
  a.spec = param.spec;
  a.extra_metadata = std::move(extra_metadata);
  return a;
}

// ---------------------------------------------------------------------------
// model checkpoints
// ---------------------------------------------------------------------------

namespace {

void add_params(Container& c, const std::vector<Tensor>& params) {
  for (size_t i = 0; i < params.size(); ++i)
    c.add_field("param" + std::to_string(i), params[i]);
}

void load_params(const Container& c, const std::vector<Tensor>& params) {
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& f = c.require("param" + std::to_string(i));
    if (f.numel() != params[i].numel())
      throw IoError("checkpoint: param" + std::to_string(i) + " size mismatch");
    Tensor p = params[i];
    auto vals = p.raw();
    for (size_t j = 0; j < vals.size(); ++j) vals[j] = static_cast<double>(f.data[j]);
  }
}

}  // namespace

Container convnet_to_container(const ConvNetExtractor& net) {
  Container c;
  const auto& cfg = net.config();
  c.metadata.emplace_back("kind", "model");
  c.metadata.emplace_back("model_kind", "convnet");
  c.metadata.emplace_back("in_channels", std::to_string(cfg.in_channels));
  c.metadata.emplace_back("image_hw", std::to_string(cfg.image_hw));
  c.metadata.emplace_back("depth", std::to_string(cfg.depth));
  c.metadata.emplace_back("width", std::to_string(cfg.width));
  add_params(c, net.parameters());
  return c;
}

std::unique_ptr<ConvNetExtractor> convnet_from_container(const Container& c) {
  if (c.require_meta("model_kind") != "convnet")
    throw IoError("checkpoint: expected a convnet model");
  ConvNetConfig cfg;
  cfg.in_channels = std::stoi(c.require_meta("in_channels"));
  cfg.image_hw = std::stoi(c.require_meta("image_hw"));
  cfg.depth = std::stoi(c.require_meta("depth"));
  cfg.width = std::stoi(c.require_meta("width"));
  Rng dummy(0);
  auto net = std::make_unique<ConvNetExtractor>(cfg, dummy);
  load_params(c, net->parameters());
  return net;
}

Container mlp_to_container(const MlpExtractor& net, const MlpExtractorConfig& cfg) {
  Container c;
  c.metadata.emplace_back("kind", "model");
  c.metadata.emplace_back("model_kind", "mlp");
  c.metadata.emplace_back("in_dim", std::to_string(cfg.in_dim));
  c.metadata.emplace_back("hidden", std::to_string(cfg.hidden));
  c.metadata.emplace_back("out_dim", std::to_string(cfg.out_dim));
  add_params(c, net.parameters());
  return c;
}

std::unique_ptr<MlpExtractor> mlp_from_container(const Container& c) {
  if (c.require_meta("model_kind") != "mlp") throw IoError("checkpoint: expected an mlp model");
  MlpExtractorConfig cfg;
  cfg.in_dim = std::stoll(c.require_meta("in_dim"));
  cfg.hidden = std::stoll(c.require_meta("hidden"));
  cfg.out_dim = std::stoll(c.require_meta("out_dim"));
  Rng dummy(0);
  auto net = std::make_unique<MlpExtractor>(cfg, dummy);
  load_params(c, net->parameters());
  return net;
}

Container teacher_to_container(const TeacherModel& teacher) {
  if (!teacher.frozen()) throw ContractError("checkpoint: teacher must be frozen first");
  Container c;
  const auto& cfg = teacher.config();
  c.metadata.emplace_back("kind", "model");
  c.metadata.emplace_back("model_kind", "teacher");
  c.metadata.emplace_back("in_channels", std::to_string(cfg.backbone.in_channels));
  c.metadata.emplace_back("image_hw", std::to_string(cfg.backbone.image_hw));
  c.metadata.emplace_back("depth", std::to_string(cfg.backbone.depth));
  c.metadata.emplace_back("width", std::to_string(cfg.backbone.width));
  c.metadata.emplace_back("rep_dim", std::to_string(cfg.rep_dim));
  c.metadata.emplace_back("proj_hidden_mult", std::to_string(cfg.proj_hidden_mult));
  add_params(c, teacher.parameters());
  const auto& stats = teacher.bn_stats();
  for (size_t b = 0; b < stats.size(); ++b) {
    const auto n = static_cast<int64_t>(stats[b].mean.size());
    c.add_field("bn" + std::to_string(b) + "_mean",
                Tensor::from_data({n}, stats[b].mean));
    c.add_field("bn" + std::to_string(b) + "_var", Tensor::from_data({n}, stats[b].var));
  }
  return c;
}

TeacherModel teacher_from_container(const Container& c) {
  if (c.require_meta("model_kind") != "teacher")
    throw IoError("checkpoint: expected a teacher model");
  TeacherConfig cfg;
  cfg.backbone.in_channels = std::stoi(c.require_meta("in_channels"));
  cfg.backbone.image_hw = std::stoi(c.require_meta("image_hw"));
  cfg.backbone.depth = std::stoi(c.require_meta("depth"));
  cfg.backbone.width = std::stoi(c.require_meta("width"));
  cfg.rep_dim = std::stoll(c.require_meta("rep_dim"));
  cfg.proj_hidden_mult = std::stoi(c.require_meta("proj_hidden_mult"));
  Rng dummy(0);
  TeacherModel teacher(cfg, dummy);
  load_params(c, teacher.parameters());
  std::vector<BnStats> stats;
  for (int b = 0; b < cfg.backbone.depth; ++b) {
    BnStats st;
    const auto& mean = c.require("bn" + std::to_string(b) + "_mean");
    const auto& var = c.require("bn" + std::to_string(b) + "_var");
    st.mean.assign(mean.data.begin(), mean.data.end());
    st.var.assign(var.data.begin(), var.data.end());
    stats.push_back(std::move(st));
  }
  teacher.restore(std::move(stats));
  return teacher;
}

}  // namespace ssdd
