#include "posefront/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "posefront/errors.hpp"
#include "posefront/fileio.hpp"

namespace posefront {

namespace {

constexpr char kMagic[8] = {'P', 'F', 'C', 'K', 'P', 'T', '\0', '\0'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void tensor(const Tensor& t) {
    u32(static_cast<std::uint32_t>(t.rank()));
    u64(t.rows());
    u64(t.cols());
    for (double v : t.values()) f64(v);
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw IoError("checkpoint is truncated");
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(in_[pos_++]);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }

  Tensor tensor(int rank, std::size_t rows, std::size_t cols, const char* what) {
    const auto r = static_cast<int>(u32());
    const std::uint64_t got_rows = u64();
    const std::uint64_t got_cols = u64();
    if (r != rank || got_rows != rows || got_cols != cols)
      throw IoError(std::string("checkpoint tensor '") + what + "' has shape " + std::to_string(got_rows) + "x" +
                    std::to_string(got_cols) + ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
    need(rows * cols * 8);
    Tensor t = rank == 1 ? Tensor(rows) : Tensor(rows, cols);
    for (double& v : t.values()) v = f64();
    return t;
  }

  bool done() const { return pos_ == in_.size(); }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

void write_layer(Writer& w, const AffineLayer& layer) {
  w.tensor(layer.weight().value);
  w.tensor(layer.bias().value);
}

AffineLayer read_layer(Reader& r, std::size_t in_dim, std::size_t out_dim, const char* what) {
  Tensor weight = r.tensor(2, out_dim, in_dim, what);
  Tensor bias = r.tensor(1, out_dim, 1, what);
  return AffineLayer(std::move(weight), std::move(bias));
}

}  // namespace

std::string serialize_checkpoint(const Model& model) {
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.u32(kCheckpointVersion);
  const auto& blocks = model.progressive.blocks();
  w.u64(model.encoder.dim_in());
  w.u64(model.encoder.hidden());
  w.u64(model.encoder.dim());
  w.u64(model.classifier.num_identities());
  w.u64(blocks.size());
  w.u8(model.use_progressive ? 1 : 0);
  w.u8(model.progressive.gate_mode() == GateMode::kFixedOne ? 1 : 0);
  w.f64(model.progressive.gate_config().steepness);
  for (double t : model.progressive.gate_config().thresholds) w.f64(t);

  write_layer(w, model.encoder.first());
  write_layer(w, model.encoder.second());
  for (const auto& block : blocks) {
    w.f64(block.threshold_deg);
    write_layer(w, block.inner);
    write_layer(w, block.outer);
  }
  write_layer(w, model.classifier.layer());
  return w.take();
}

Model deserialize_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(sizeof(kMagic)) != std::string_view(kMagic, sizeof(kMagic))) throw IoError("not a checkpoint file");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                  std::to_string(kCheckpointVersion) + ")");
  const std::uint64_t dim_in = r.u64();
  const std::uint64_t hidden = r.u64();
  const std::uint64_t dim = r.u64();
  const std::uint64_t identities = r.u64();
  const std::uint64_t block_count = r.u64();
  if (dim_in == 0 || hidden == 0 || dim == 0 || identities < 2 || block_count > 16)
    throw IoError("checkpoint header holds invalid dimensions");
  const bool use_progressive = r.u8() != 0;
  const bool fixed_gate = r.u8() != 0;
  GateConfig gate;
  gate.steepness = r.f64();
  gate.thresholds.clear();
  for (std::uint64_t i = 0; i < block_count; ++i) gate.thresholds.push_back(r.f64());
  try {
    gate.validate();
  } catch (const ValidationError& e) {
    throw IoError(std::string("checkpoint gate configuration is invalid: ") + e.what());
  }

  AffineLayer first = read_layer(r, dim_in, hidden, "encoder.first");
  AffineLayer second = read_layer(r, hidden, dim, "encoder.second");
  std::vector<ResidualBlock> blocks;
  for (std::uint64_t i = 0; i < block_count; ++i) {
    ResidualBlock block;
    block.threshold_deg = r.f64();
    if (block.threshold_deg != gate.thresholds[i]) throw IoError("checkpoint block tag disagrees with its header");
    block.inner = read_layer(r, dim, dim, "block.inner");
    block.outer = read_layer(r, dim, dim, "block.outer");
    blocks.push_back(std::move(block));
  }
  AffineLayer cls = read_layer(r, dim, identities, "classifier");
  if (!r.done()) throw IoError("checkpoint has trailing bytes");

  return Model{Encoder(std::move(first), std::move(second)),
               ProgressiveModule(dim, gate, std::move(blocks), fixed_gate ? GateMode::kFixedOne : GateMode::kSoft),
               Classifier(std::move(cls)), use_progressive};
}

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
  write_file_atomic(path, serialize_checkpoint(model));
}

Model load_checkpoint(const std::filesystem::path& path) { return deserialize_checkpoint(read_file(path)); }

}  // namespace posefront
