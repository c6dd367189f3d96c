#include "capgen/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "capgen/error.hpp"

namespace capgen {

namespace {

constexpr char kMagic[4] = {'I', 'C', 'K', 'P'};
constexpr uint32_t kVersion = 1;

class Writer {
 public:
  void u8(uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f64(double v) { u64(std::bit_cast<uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    buf_.append(s);
  }
  void raw(const char* p, size_t n) { buf_.append(p, n); }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string data) : data_(std::move(data)) {}

  void need(size_t n, const char* what) const {
    if (data_.size() - pos_ < n) {
      throw FormatError("checkpoint truncated at byte " + std::to_string(pos_) + " reading " +
                        what);
    }
  }
  uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<uint8_t>(data_[pos_++]);
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t{static_cast<uint8_t>(data_[pos_++])} << (8 * i);
    return v;
  }
  uint64_t u64(const char* what) {
    need(8, what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t{static_cast<uint8_t>(data_[pos_++])} << (8 * i);
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  std::string str(const char* what) {
    const uint64_t n = u64(what);
    need(n, what);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  // A count whose elements take at least `min_bytes` each must fit in the rest.
  uint64_t count(size_t min_bytes, const char* what) {
    const uint64_t n = u64(what);
    if (min_bytes > 0 && n > (data_.size() - pos_) / min_bytes) {
      throw FormatError("checkpoint truncated at byte " + std::to_string(pos_) + ": " +
                        std::to_string(n) + " " + what + " cannot fit");
    }
    return n;
  }
  std::vector<double> doubles(uint64_t n, const char* what) {
    if (n > (data_.size() - pos_) / 8) {
      throw FormatError("checkpoint truncated at byte " + std::to_string(pos_) + " reading " +
                        what);
    }
    std::vector<double> out(n);
    for (double& d : out) d = f64(what);
    return out;
  }
  bool done() const { return pos_ == data_.size(); }
  size_t pos() const { return pos_; }
  const std::string& data() const { return data_; }
  void skip(size_t n) { pos_ += n; }

 private:
  std::string data_;
  size_t pos_ = 0;
};

void write_doubles(Writer& w, std::span<const double> v) {
  for (double d : v) w.f64(d);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const CaptionModel& model,
                     const Vocabulary& vocab, const Adam* optimizer,
                     const std::string& config_text) {
  const ModelConfig& c = model.config();
  if (vocab.size() != c.vocab_size) {
    throw ContractError("vocabulary of " + std::to_string(vocab.size()) +
                        " tokens does not match model output " + std::to_string(c.vocab_size));
  }
  Writer w;
  w.raw(kMagic, 4);
  w.u32(kVersion);
  w.u8(c.variant == Variant::kSoftAttention ? 1 : 0);
  for (uint64_t v : {uint64_t{c.vocab_size}, uint64_t{c.embed_dim}, uint64_t{c.hidden},
                     uint64_t{c.feature_dim}, uint64_t{c.att_dim}, uint64_t{c.num_layers}, c.seed}) {
    w.u64(v);
  }
  w.str(config_text);
  w.u64(vocab.size());
  for (const std::string& t : vocab.tokens()) w.str(t);

  const auto& params = model.parameters();
  w.u64(params.size());
  for (const Parameter& p : params) {
    w.str(p.name);
    w.u32(static_cast<uint32_t>(p.tensor.rank()));
    for (size_t d : p.tensor.shape()) w.u64(d);
    w.f64(p.lr_scale);
    w.u8(p.trainable ? 1 : 0);
    write_doubles(w, p.tensor.data());
  }

  w.u8(optimizer ? 1 : 0);
  if (optimizer) {
    const AdamConfig& a = optimizer->config();
    w.f64(a.beta1);
    w.f64(a.beta2);
    w.f64(a.epsilon);
    const auto& slots = optimizer->slots();
    if (slots.size() != params.size()) throw ContractError("optimizer does not match the model");
    for (size_t i = 0; i < slots.size(); ++i) {
      w.u64(slots[i].step);
      write_doubles(w, slots[i].m);
      write_doubles(w, slots[i].v);
    }
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  Reader r(std::string(std::istreambuf_iterator<char>(in), {}));

  r.need(4, "magic");
  if (std::memcmp(r.data().data(), kMagic, 4) != 0) throw FormatError("not an ICKP checkpoint");
  r.skip(4);
  const uint32_t version = r.u32("version");
  if (version != kVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  const uint8_t variant = r.u8("variant");
  if (variant > 1) throw FormatError("bad variant byte " + std::to_string(variant));
  ck.model.variant = variant == 1 ? Variant::kSoftAttention : Variant::kEncoderDecoder;
  ck.model.vocab_size = r.u64("vocab_size");
  ck.model.embed_dim = r.u64("embed_dim");
  ck.model.hidden = r.u64("hidden");
  ck.model.feature_dim = r.u64("feature_dim");
  ck.model.att_dim = r.u64("att_dim");
  ck.model.num_layers = r.u64("num_layers");
  ck.model.seed = r.u64("seed");
  ck.config_text = r.str("config text");

  const uint64_t tokens = r.count(8, "vocabulary tokens");
  for (uint64_t i = 0; i < tokens; ++i) ck.vocabulary.push_back(r.str("vocabulary token"));

  const uint64_t nparams = r.count(8, "parameters");
  for (uint64_t i = 0; i < nparams; ++i) {
    ParameterBlob b;
    b.name = r.str("parameter name");
    const uint32_t rank = r.u32("rank");
    if (rank > 2) throw FormatError("parameter " + b.name + " has rank " + std::to_string(rank));
    uint64_t size = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      const uint64_t extent = r.u64("extent");
      if (extent == 0 || extent > (uint64_t{1} << 40)) {
        throw FormatError("parameter " + b.name + " has bad extent " + std::to_string(extent));
      }
      b.shape.push_back(extent);
      size *= extent;
    }
    b.lr_scale = r.f64("lr_scale");
    b.trainable = r.u8("trainable flag") != 0;
    b.values = r.doubles(size, b.name.c_str());
    ck.parameters.push_back(std::move(b));
  }

  if (r.u8("optimizer flag") != 0) {
    AdamConfig a;
    a.beta1 = r.f64("beta1");
    a.beta2 = r.f64("beta2");
    a.epsilon = r.f64("epsilon");
    ck.adam = a;
    for (const ParameterBlob& b : ck.parameters) {
      AdamSlot s;
      s.step = r.u64("step count");
      s.m = r.doubles(b.values.size(), "first moment");
      s.v = r.doubles(b.values.size(), "second moment");
      ck.slots.push_back(std::move(s));
    }
  }
  if (!r.done()) {
    throw FormatError("checkpoint has " + std::to_string(r.data().size() - r.pos()) +
                      " trailing bytes");
  }
  return ck;
}

void load_into(const Checkpoint& ckpt, CaptionModel& model, Adam* optimizer) {
  auto& params = model.parameters();
  if (ckpt.parameters.size() != params.size()) {
    throw FormatError("checkpoint holds " + std::to_string(ckpt.parameters.size()) +
                      " parameters, model has " + std::to_string(params.size()));
  }
  for (size_t i = 0; i < params.size(); ++i) {
    const ParameterBlob& b = ckpt.parameters[i];
    const Parameter& p = params[i];
    if (b.name != p.name) {
      throw FormatError("checkpoint entry " + std::to_string(i) + " is '" + b.name +
                        "', model expects '" + p.name + "'");
    }
    if (b.shape != p.tensor.shape()) {
      throw FormatError("parameter " + b.name + " has shape " + shape_str(b.shape) +
                        " in checkpoint but " + shape_str(p.tensor.shape()) + " in model");
    }
  }
  const bool with_optimizer = optimizer && ckpt.adam;
  if (with_optimizer && optimizer->slots().size() != ckpt.slots.size()) {
    throw FormatError("optimizer state does not match the model");
  }
  for (size_t i = 0; i < params.size(); ++i) {
    const ParameterBlob& b = ckpt.parameters[i];
    std::ranges::copy(b.values, params[i].tensor.mutable_data().begin());
    params[i].lr_scale = b.lr_scale;
    params[i].trainable = b.trainable;
  }
  if (with_optimizer) optimizer->slots() = ckpt.slots;
}

CaptionModel model_from_checkpoint(const Checkpoint& ckpt) {
  CaptionModel model(ckpt.model);
  load_into(ckpt, model);
  return model;
}

}  // namespace capgen
