#include "mrsr/trainer.hpp"

#include <bit>
#include <fstream>
#include <sstream>

namespace mrsr {
namespace {

constexpr char kMagic[8] = {'M', 'R', 'S', 'R', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kFormatVersion = 1;

class Writer {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const std::string& s) { out_ += s; }
  void text(const std::string& s) {
    u64(s.size());
    bytes(s);
  }
  void section(const char (&tag)[5], const std::string& payload) {
    out_.append(tag, 4);
    u64(payload.size());
    out_ += payload;
  }
  void tensor(const std::string& name, const Matrix& m) {
    text(name);
    u64(static_cast<std::uint64_t>(m.rows()));
    u64(static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) f64(m.data()[i]);
  }
  std::string take() { return std::move(out_); }

 private:
  void put(std::uint64_t v, int width) {
    for (int i = 0; i < width; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}
  std::uint64_t u64() { return get(8); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string text() { return std::string(bytes(u64())); }
  [[nodiscard]] bool done() const { return pos_ == data_.size(); }

  void tensor_into(const std::string& expected_name, Matrix& m) {
    const std::string name = text();
    const auto rows = u64();
    const auto cols = u64();
    if (name != expected_name) throw DataError("checkpoint: expected tensor " + expected_name + ", found " + name);
    if (rows != static_cast<std::uint64_t>(m.rows()) || cols != static_cast<std::uint64_t>(m.cols()))
      throw DataError("checkpoint: shape mismatch for " + name);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = f64();
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw DataError("checkpoint: truncated file");
  }
  std::uint64_t get(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(width);
    return v;
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

std::string tensors_payload(const ModelParams& params, const std::string& prefix) {
  Writer w;
  std::uint32_t count = 0;
  params.for_each([&](const std::string&, const Matrix&) { ++count; });
  w.u32(count);
  params.for_each([&](const std::string& name, const Matrix& m) { w.tensor(prefix + name, m); });
  return w.take();
}

void read_tensors(Reader& r, ModelParams& params, const std::string& prefix) {
  std::uint32_t count = 0;
  params.for_each([&](const std::string&, const Matrix&) { ++count; });
  if (r.u32() != count) throw DataError("checkpoint: tensor count mismatch");
  params.for_each([&](const std::string& name, Matrix& m) { r.tensor_into(prefix + name, m); });
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  Writer meta;
  meta.text(format_kv({{"num_items", std::to_string(ckpt.num_items)},
                       {"epoch", std::to_string(ckpt.epoch)},
                       {"valid_mrr", format_double(ckpt.valid_mrr)}}));
  Writer relations;
  relations.u32(static_cast<std::uint32_t>(ckpt.relation_names.size()));
  for (const auto& name : ckpt.relation_names) relations.text(name);
  Writer adam;
  adam.u64(static_cast<std::uint64_t>(ckpt.optimizer.step));
  adam.bytes(tensors_payload(ckpt.optimizer.first_moment, "m/"));
  adam.bytes(tensors_payload(ckpt.optimizer.second_moment, "v/"));

  Writer out;
  out.bytes(std::string(kMagic, sizeof(kMagic)));
  out.u32(kFormatVersion);
  out.section("HYPR", format_kv(ckpt.hyper.to_kv()));
  out.section("META", meta.take());
  out.section("RELV", relations.take());
  out.section("TNSR", tensors_payload(ckpt.params, ""));
  out.section("ADAM", adam.take());
  return out.take();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.bytes(sizeof(kMagic)) != std::string_view(kMagic, sizeof(kMagic))) throw DataError("checkpoint: bad magic");
  if (const auto version = r.u32(); version != kFormatVersion)
    throw DataError("checkpoint: unsupported format version " + std::to_string(version));

  std::map<std::string, std::string_view> sections;
  while (!r.done()) {
    const std::string tag(r.bytes(4));
    const auto length = r.u64();
    sections[tag] = r.bytes(length);
  }
  for (const char* tag : {"HYPR", "META", "RELV", "TNSR", "ADAM"})
    if (!sections.contains(tag)) throw DataError(std::string("checkpoint: missing section ") + tag);

  Checkpoint ckpt;
  ckpt.hyper = HyperParams::from_kv(parse_kv(std::string(sections["HYPR"]), "checkpoint"));
  {
    Reader meta(sections["META"]);
    const auto kv = parse_kv(meta.text(), "checkpoint");
    ckpt.num_items = std::stoi(kv.at("num_items"));
    ckpt.epoch = std::stoi(kv.at("epoch"));
    ckpt.valid_mrr = std::stod(kv.at("valid_mrr"));
  }
  {
    Reader rel(sections["RELV"]);
    const auto count = rel.u32();
    for (std::uint32_t i = 0; i < count; ++i) ckpt.relation_names.push_back(rel.text());
  }
  Rng unused(0);
  ckpt.params = init_params(ckpt.hyper, ckpt.num_items, static_cast<int>(ckpt.relation_names.size()), unused);
  {
    Reader tensors(sections["TNSR"]);
    read_tensors(tensors, ckpt.params, "");
  }
  {
    Reader adam(sections["ADAM"]);
    ckpt.optimizer = OptimState::zeros_for(ckpt.params);
    ckpt.optimizer.step = static_cast<std::int64_t>(adam.u64());
    read_tensors(adam, ckpt.optimizer.first_moment, "m/");
    read_tensors(adam, ckpt.optimizer.second_moment, "v/");
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  const std::string bytes = serialize_checkpoint(checkpoint);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return deserialize_checkpoint(buffer.str());
}

}  // namespace mrsr
