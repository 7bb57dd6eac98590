#include "gdc/weight_file.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace gdc {

namespace {

constexpr char kMagic[4] = {'G', 'D', 'C', 'W'};

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFFu));
}

void put_f32(std::vector<unsigned char>& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

class Reader {
 public:
  explicit Reader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  float f32() { return std::bit_cast<float>(u32()); }

  std::string text(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("weight file: truncated record");
  }

  std::span<const unsigned char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<unsigned char> encode_weight_records(std::span<const WeightRecord> records) {
  std::vector<unsigned char> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, kWeightFileVersion);
  for (const WeightRecord& r : records) {
    if (element_count(r.shape) != static_cast<Index>(r.values.size())) {
      throw ShapeError("weight record '" + r.name + "': payload does not match shape " + to_string(r.shape));
    }
    put_u32(out, static_cast<std::uint32_t>(r.name.size()));
    out.insert(out.end(), r.name.begin(), r.name.end());
    put_u32(out, static_cast<std::uint32_t>(r.shape.size()));
    for (Index d : r.shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : r.values) put_f32(out, v);
  }
  return out;
}

std::vector<WeightRecord> decode_weight_records(std::span<const unsigned char> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("weight file: bad magic, expected GDCW");
  }
  Reader reader(bytes.subspan(4));
  const std::uint32_t version = reader.u32();
  if (version != kWeightFileVersion) {
    throw FormatError("weight file: unsupported version " + std::to_string(version));
  }
  std::vector<WeightRecord> records;
  while (!reader.done()) {
    WeightRecord r;
    r.name = reader.text(reader.u32());
    const std::uint32_t rank = reader.u32();
    if (rank > 8) throw FormatError("weight file: implausible rank for '" + r.name + "'");
    for (std::uint32_t i = 0; i < rank; ++i) r.shape.push_back(static_cast<Index>(reader.u32()));
    const Index n = element_count(r.shape);
    r.values.reserve(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) r.values.push_back(reader.f32());
    records.push_back(std::move(r));
  }
  return records;
}

void write_weight_file(const std::filesystem::path& path, std::span<const WeightRecord> records) {
  const auto bytes = encode_weight_records(records);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<WeightRecord> read_weight_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_weight_records(bytes);
}

template <typename Scalar>
void save_parameters(const std::filesystem::path& path, std::span<Parameter<Scalar>* const> params) {
  std::vector<WeightRecord> records;
  for (const Parameter<Scalar>* p : params) {
    WeightRecord r{p->name, p->value.shape(), {}};
    r.values.reserve(static_cast<std::size_t>(p->value.size()));
    for (Scalar v : p->value.values()) r.values.push_back(static_cast<float>(v));
    records.push_back(std::move(r));
  }
  write_weight_file(path, records);
}

template <typename Scalar>
void load_parameters(const std::filesystem::path& path, std::span<Parameter<Scalar>* const> params) {
  const auto records = read_weight_file(path);
  for (Parameter<Scalar>* p : params) {
    const WeightRecord* match = nullptr;
    for (const auto& r : records) {
      if (r.name == p->name) match = &r;
    }
    if (!match) throw ShapeError("weight file " + path.string() + " has no record '" + p->name + "'");
    if (match->shape != p->value.shape()) {
      throw ShapeError("weight record '" + p->name + "' has shape " + to_string(match->shape) + ", expected " +
                       to_string(p->value.shape()));
    }
    for (std::size_t i = 0; i < match->values.size(); ++i) {
      p->value.data()[i] = static_cast<Scalar>(match->values[i]);
    }
  }
}

template void save_parameters(const std::filesystem::path&, std::span<Parameter<float>* const>);
template void save_parameters(const std::filesystem::path&, std::span<Parameter<double>* const>);
template void load_parameters(const std::filesystem::path&, std::span<Parameter<float>* const>);
template void load_parameters(const std::filesystem::path&, std::span<Parameter<double>* const>);

}  // namespace gdc
