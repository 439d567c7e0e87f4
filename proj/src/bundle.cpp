#include <openssl/evp.h>

#include <algorithm>
#include <cstring>
#include <iomanip>
#include <sstream>

#include "voicetriage/audio.hpp"
#include "voicetriage/error.hpp"
#include "voicetriage/pipeline.hpp"

namespace vt {

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    fail(ErrorKind::IoError, "sha256: digest failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

std::string feature_digest(std::span<const ProcessedRecording> rows) {
  std::vector<std::uint8_t> buf;
  auto put = [&](const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf.insert(buf.end(), b, b + n);
  };
  for (const auto& r : rows) {
    put(r.recording_id.data(), r.recording_id.size());
    buf.push_back(0);
    put(r.speaker_id.data(), r.speaker_id.size());
    buf.push_back(0);
    const auto dx = static_cast<std::uint8_t>(index_of(r.diagnosis));
    buf.push_back(dx);
    put(r.features.values.data(), r.features.values.size() * sizeof(double));
  }
  return sha256_hex(buf);
}

namespace {

constexpr char kMagic[8] = {'V', 'T', 'B', 'U', 'N', 'D', 'L', 'E'};
constexpr std::size_t kNameBytes = 16;
constexpr std::size_t kDigestBytes = 32;

class Writer {
 public:
  std::vector<std::uint8_t> bytes;

  template <class T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    bytes.insert(bytes.end(), p, p + sizeof(T));
  }
  void u8(std::uint8_t v) { put(v); }
  void u32(std::uint32_t v) { put(v); }
  void u64(std::uint64_t v) { put(v); }
  void i32(std::int32_t v) { put(v); }
  void f64(double v) { put(v); }
  template <class T>
  void f32s(const std::vector<T>& v) {
    u64(v.size());
    for (T x : v) put(static_cast<float>(x));
  }
  void f64s(const std::vector<double>& v) {
    u64(v.size());
    for (double x : v) put(x);
  }
  void flags(const std::vector<bool>& v) {
    u64(v.size());
    for (bool b : v) u8(b ? 1 : 0);
  }
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::uint8_t u8() { return get<std::uint8_t>(); }
  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  std::int32_t i32() { return get<std::int32_t>(); }
  double f64() { return get<double>(); }
  std::size_t count(std::size_t elem) {
    const std::uint64_t n = u64();
    if (n > (bytes_.size() - pos_) / elem) fail(ErrorKind::TruncatedFile, "bundle: " + what_ + " section is truncated");
    return static_cast<std::size_t>(n);
  }
  template <class T>
  std::vector<T> f32s() {
    const std::size_t n = count(4);
    std::vector<T> v(n);
    for (auto& x : v) x = static_cast<T>(get<float>());
    return v;
  }
  std::vector<double> f64s() {
    const std::size_t n = count(8);
    std::vector<double> v(n);
    for (auto& x : v) x = get<double>();
    return v;
  }
  std::vector<bool> flags() {
    const std::size_t n = count(1);
    std::vector<bool> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = u8() != 0;
    return v;
  }
  void expect_end() const {
    if (pos_ != bytes_.size()) fail(ErrorKind::MalformedHeader, "bundle: trailing bytes in " + what_ + " section");
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) fail(ErrorKind::TruncatedFile, "bundle: " + what_ + " section is truncated");
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::string what_;
};

void write_cnn(Writer& w, const CnnModel& m) {
  const CnnConfig& c = m.config;
  w.u32(static_cast<std::uint32_t>(c.filters.size()));
  for (int f : c.filters) w.i32(f);
  w.u64(c.input_rows);
  w.u64(c.input_cols);
  w.f64(c.bn_momentum);
  w.f64(c.bn_eps);
  for (const auto& b : m.blocks) {
    w.i32(b.in_channels);
    w.i32(b.out_channels);
    w.f32s(b.weight);
    w.f32s(b.bias);
    w.f32s(b.gamma);
    w.f32s(b.beta);
    w.f32s(b.running_mean);
    w.f32s(b.running_var);
  }
  w.f32s(m.head_weight);
  w.f32s(m.head_bias);
}

CnnModel read_cnn(Reader& r) {
  CnnModel m;
  const std::uint32_t blocks = r.u32();
  if (blocks == 0 || blocks > 16) fail(ErrorKind::MalformedHeader, "bundle: implausible CNN block count");
  m.config.filters.resize(blocks);
  for (auto& f : m.config.filters) f = r.i32();
  m.config.input_rows = r.u64();
  m.config.input_cols = r.u64();
  m.config.bn_momentum = r.f64();
  m.config.bn_eps = r.f64();
  m.config.validate();
  for (std::uint32_t i = 0; i < blocks; ++i) {
    CnnModel::Block b;
    b.in_channels = r.i32();
    b.out_channels = r.i32();
    b.weight = r.f32s<float>();
    b.bias = r.f32s<float>();
    b.gamma = r.f32s<float>();
    b.beta = r.f32s<float>();
    b.running_mean = r.f32s<float>();
    b.running_var = r.f32s<float>();
    const auto out = static_cast<std::size_t>(b.out_channels);
    if (b.out_channels != m.config.filters[i] || b.weight.size() != out * static_cast<std::size_t>(b.in_channels) * 9 ||
        b.bias.size() != out || b.gamma.size() != out || b.beta.size() != out || b.running_mean.size() != out ||
        b.running_var.size() != out) {
      fail(ErrorKind::MalformedHeader, "bundle: CNN block " + std::to_string(i) + " has inconsistent shapes");
    }
    m.blocks.push_back(std::move(b));
  }
  m.head_weight = r.f32s<float>();
  m.head_bias = r.f32s<float>();
  if (m.head_weight.size() != 2 * m.config.flat_dim() || m.head_bias.size() != 2) {
    fail(ErrorKind::MalformedHeader, "bundle: CNN head has inconsistent shapes");
  }
  return m;
}

void write_scaler(Writer& w, const Scaler& s) {
  w.f64s(s.mean);
  w.f64s(s.stddev);
  w.flags(s.constant);
  w.flags(s.all_missing);
}

Scaler read_scaler(Reader& r) {
  Scaler s;
  s.mean = r.f64s();
  s.stddev = r.f64s();
  s.constant = r.flags();
  s.all_missing = r.flags();
  const std::size_t d = s.mean.size();
  if (s.stddev.size() != d || s.constant.size() != d || s.all_missing.size() != d) {
    fail(ErrorKind::MalformedHeader, "bundle: scaler arrays differ in length");
  }
  return s;
}

void write_svm(Writer& w, const SvmBinary& m) {
  w.u8(m.kernel.kind == KernelKind::Gaussian ? 0 : 1);
  w.f64(m.kernel.gamma);
  w.i32(m.kernel.degree);
  w.f64(m.kernel.scale);
  w.f64(m.C);
  w.f64(m.bias);
  w.f64(m.dual_objective);
  w.u64(m.iterations);
  w.u8(m.converged ? 1 : 0);
  w.u64(m.support_vectors.rows());
  w.u64(m.support_vectors.cols());
  w.f32s(m.support_vectors.data());
  w.f32s(m.coef);
  w.u64(m.support_indices.size());
  for (std::size_t i : m.support_indices) w.u64(i);
}

SvmBinary read_svm(Reader& r) {
  SvmBinary m;
  const std::uint8_t kind = r.u8();
  if (kind > 1) fail(ErrorKind::MalformedHeader, "bundle: unknown kernel kind");
  m.kernel.kind = kind == 0 ? KernelKind::Gaussian : KernelKind::Polynomial;
  m.kernel.gamma = r.f64();
  m.kernel.degree = r.i32();
  m.kernel.scale = r.f64();
  m.kernel.validate();
  m.C = r.f64();
  m.bias = r.f64();
  m.dual_objective = r.f64();
  m.iterations = r.u64();
  m.converged = r.u8() != 0;
  const std::uint64_t rows = r.u64();
  const std::uint64_t cols = r.u64();
  std::vector<double> sv = r.f32s<double>();
  if (rows == 0 || sv.size() != rows * cols) fail(ErrorKind::MalformedHeader, "bundle: support vector shape mismatch");
  m.support_vectors = Matrix(rows, cols);
  m.support_vectors.data() = std::move(sv);
  m.coef = r.f32s<double>();
  const std::size_t ni = r.count(8);
  for (std::size_t i = 0; i < ni; ++i) m.support_indices.push_back(r.u64());
  if (m.coef.size() != rows || m.support_indices.size() != rows) {
    fail(ErrorKind::MalformedHeader, "bundle: support vector count mismatch");
  }
  return m;
}

void write_ovo(Writer& w, const OvoSvm& m) {
  w.u32(static_cast<std::uint32_t>(m.classes.size()));
  for (int c : m.classes) w.i32(c);
  w.u32(static_cast<std::uint32_t>(m.machines.size()));
  for (std::size_t i = 0; i < m.machines.size(); ++i) {
    w.u32(static_cast<std::uint32_t>(m.pairs[i].first));
    w.u32(static_cast<std::uint32_t>(m.pairs[i].second));
    write_svm(w, m.machines[i]);
  }
}

OvoSvm read_ovo(Reader& r) {
  OvoSvm m;
  const std::uint32_t k = r.u32();
  if (k < 2 || k > 64) fail(ErrorKind::MalformedHeader, "bundle: implausible class count");
  for (std::uint32_t i = 0; i < k; ++i) m.classes.push_back(r.i32());
  const std::uint32_t machines = r.u32();
  if (machines != k * (k - 1) / 2) fail(ErrorKind::MalformedHeader, "bundle: one-vs-one machine count mismatch");
  for (std::uint32_t i = 0; i < machines; ++i) {
    const std::size_t a = r.u32();
    const std::size_t b = r.u32();
    if (a >= b || b >= k) fail(ErrorKind::MalformedHeader, "bundle: bad class pair");
    m.pairs.emplace_back(a, b);
    m.machines.push_back(read_svm(r));
  }
  return m;
}

void write_trees(Writer& w, const TreeEnsemble& m) {
  w.u32(static_cast<std::uint32_t>(m.classes.size()));
  for (int c : m.classes) w.i32(c);
  w.u64(m.dim);
  w.u64(m.seed);
  w.u32(static_cast<std::uint32_t>(m.trees.size()));
  for (const auto& t : m.trees) {
    w.u32(static_cast<std::uint32_t>(t.nodes.size()));
    for (const auto& n : t.nodes) {
      w.i32(n.feature);
      w.f64(n.threshold);
      w.i32(n.left);
      w.i32(n.right);
      w.f64s(n.counts);
    }
  }
}

TreeEnsemble read_trees(Reader& r) {
  TreeEnsemble m;
  const std::uint32_t k = r.u32();
  if (k < 2 || k > 64) fail(ErrorKind::MalformedHeader, "bundle: implausible class count");
  for (std::uint32_t i = 0; i < k; ++i) m.classes.push_back(r.i32());
  m.dim = r.u64();
  m.seed = r.u64();
  const std::uint32_t trees = r.u32();
  for (std::uint32_t t = 0; t < trees; ++t) {
    DecisionTree tree;
    const std::uint32_t nodes = r.u32();
    for (std::uint32_t i = 0; i < nodes; ++i) {
      TreeNode n;
      n.feature = r.i32();
      n.threshold = r.f64();
      n.left = r.i32();
      n.right = r.i32();
      n.counts = r.f64s();
      const bool leaf = n.feature < 0;
      const bool links_ok = n.left > static_cast<std::int32_t>(i) && n.right > static_cast<std::int32_t>(i) &&
                            n.left < static_cast<std::int32_t>(nodes) && n.right < static_cast<std::int32_t>(nodes);
      if (leaf ? n.counts.size() != k : (!links_ok || static_cast<std::uint64_t>(n.feature) >= m.dim)) {
        fail(ErrorKind::MalformedHeader, "bundle: malformed tree node");
      }
      tree.nodes.push_back(std::move(n));
    }
    if (tree.nodes.empty()) fail(ErrorKind::MalformedHeader, "bundle: empty tree");
    m.trees.push_back(std::move(tree));
  }
  return m;
}

}  // namespace

std::vector<std::uint8_t> encode_bundle(const ModelBundle& b) {
  std::vector<std::pair<std::string, std::vector<std::uint8_t>>> sections;
  {
    nlohmann::ordered_json meta;
    meta["format"] = "voicetriage-bundle";
    meta["version"] = b.version;
    meta["augmentation"] = b.augmentation == Augmentation::Soft ? "soft" : "hard";
    meta["provenance"] = b.provenance;
    const std::string text = meta.dump();
    sections.emplace_back("meta", std::vector<std::uint8_t>(text.begin(), text.end()));
  }
  {
    Writer w;
    write_cnn(w, b.cnn);
    sections.emplace_back("cnn", std::move(w.bytes));
  }
  {
    Writer w;
    for (const Scaler* s : {&b.scaler1, &b.scaler2, &b.scaler3, &b.scaler_flat}) write_scaler(w, *s);
    sections.emplace_back("scalers", std::move(w.bytes));
  }
  {
    Writer w;
    write_svm(w, b.stage1);
    sections.emplace_back("stage1", std::move(w.bytes));
  }
  {
    Writer w;
    write_ovo(w, b.stage2);
    sections.emplace_back("stage2", std::move(w.bytes));
  }
  {
    Writer w;
    write_ovo(w, b.stage3);
    sections.emplace_back("stage3", std::move(w.bytes));
  }
  {
    Writer w;
    write_trees(w, b.flat);
    sections.emplace_back("flat", std::move(w.bytes));
  }

  Writer out;
  out.bytes.insert(out.bytes.end(), kMagic, kMagic + 8);
  out.u32(b.version);
  out.u32(static_cast<std::uint32_t>(sections.size()));
  std::uint64_t offset = 16 + sections.size() * (kNameBytes + 16);
  for (const auto& [name, data] : sections) {
    char field[kNameBytes] = {};
    std::memcpy(field, name.data(), std::min(name.size(), kNameBytes));
    out.bytes.insert(out.bytes.end(), field, field + kNameBytes);
    out.u64(offset);
    out.u64(data.size());
    offset += data.size();
  }
  for (const auto& [name, data] : sections) out.bytes.insert(out.bytes.end(), data.begin(), data.end());
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(out.bytes.data(), out.bytes.size(), md, &len, EVP_sha256(), nullptr);
  out.bytes.insert(out.bytes.end(), md, md + len);
  return out.bytes;
}

ModelBundle decode_bundle(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    fail(ErrorKind::MalformedHeader, "bundle: bad magic bytes");
  }
  if (bytes.size() < 16) fail(ErrorKind::TruncatedFile, "bundle: header is truncated");
  std::uint32_t version = 0;
  std::memcpy(&version, bytes.data() + 8, 4);
  if (version != kBundleVersion) {
    fail(ErrorKind::VersionMismatch, "bundle: format version " + std::to_string(version) + ", this reader handles " +
                                         std::to_string(kBundleVersion));
  }
  std::uint32_t count = 0;
  std::memcpy(&count, bytes.data() + 12, 4);
  const std::size_t table_end = 16 + static_cast<std::size_t>(count) * (kNameBytes + 16);
  if (count > 64 || bytes.size() < table_end + kDigestBytes) fail(ErrorKind::TruncatedFile, "bundle: file is truncated");

  const auto body = bytes.first(bytes.size() - kDigestBytes);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(body.data(), body.size(), md, &len, EVP_sha256(), nullptr);
  if (len != kDigestBytes || std::memcmp(md, bytes.data() + body.size(), kDigestBytes) != 0) {
    // A shortened file also fails here; report it as truncation when the
    // section table points past the end.
    Reader table(bytes.subspan(16, table_end - 16), "table");
    for (std::uint32_t i = 0; i < count; ++i) {
      for (std::size_t k = 0; k < kNameBytes; ++k) table.u8();
      const std::uint64_t off = table.u64();
      const std::uint64_t size = table.u64();
      if (off + size > body.size()) fail(ErrorKind::TruncatedFile, "bundle: file is truncated");
    }
    fail(ErrorKind::ChecksumMismatch, "bundle: SHA-256 checksum mismatch");
  }

  std::vector<std::pair<std::string, std::span<const std::uint8_t>>> sections;
  Reader table(bytes.subspan(16, table_end - 16), "table");
  for (std::uint32_t i = 0; i < count; ++i) {
    char field[kNameBytes + 1] = {};
    for (std::size_t k = 0; k < kNameBytes; ++k) field[k] = static_cast<char>(table.u8());
    const std::uint64_t off = table.u64();
    const std::uint64_t size = table.u64();
    if (off < table_end || off + size > body.size()) fail(ErrorKind::MalformedHeader, "bundle: section out of range");
    sections.emplace_back(field, bytes.subspan(off, size));
  }
  auto section = [&](const std::string& name) {
    for (const auto& [n, data] : sections) {
      if (n == name) return data;
    }
    fail(ErrorKind::MalformedHeader, "bundle: missing section '" + name + "'");
  };

  ModelBundle b;
  b.version = version;
  {
    const auto data = section("meta");
    nlohmann::ordered_json meta;
    try {
      meta = nlohmann::ordered_json::parse(data.begin(), data.end());
    } catch (const nlohmann::json::exception&) {
      fail(ErrorKind::MalformedHeader, "bundle: metadata is not valid JSON");
    }
    const std::string aug = meta.value("augmentation", "");
    if (aug != "hard" && aug != "soft") fail(ErrorKind::MalformedHeader, "bundle: unknown augmentation mode");
    b.augmentation = aug == "soft" ? Augmentation::Soft : Augmentation::Hard;
    b.provenance = meta["provenance"];
  }
  {
    Reader r(section("cnn"), "cnn");
    b.cnn = read_cnn(r);
    r.expect_end();
  }
  {
    Reader r(section("scalers"), "scalers");
    b.scaler1 = read_scaler(r);
    b.scaler2 = read_scaler(r);
    b.scaler3 = read_scaler(r);
    b.scaler_flat = read_scaler(r);
    r.expect_end();
  }
  {
    Reader r(section("stage1"), "stage1");
    b.stage1 = read_svm(r);
    r.expect_end();
  }
  {
    Reader r(section("stage2"), "stage2");
    b.stage2 = read_ovo(r);
    r.expect_end();
  }
  {
    Reader r(section("stage3"), "stage3");
    b.stage3 = read_ovo(r);
    r.expect_end();
  }
  {
    Reader r(section("flat"), "flat");
    b.flat = read_trees(r);
    r.expect_end();
  }
  return b;
}

void save_bundle(const std::filesystem::path& path, const ModelBundle& bundle) {
  write_file_bytes(path, encode_bundle(bundle));
}

ModelBundle load_bundle(const std::filesystem::path& path) { return decode_bundle(read_file_bytes(path)); }

}  // namespace vt
