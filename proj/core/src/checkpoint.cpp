#include "mufuru/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace mufuru {

// Flat little-endian binary layout, version-tagged:
//   magic "MUFR" | u32 version | u8 kind | u32 N | u32 M |
//   u32 op_count | u8 op_id per op |
//   cell matrices in declared order | u32 extra_count |
//   per extra: u32 name_len, name bytes, matrix
// where a matrix is: u32 rank, u32 extents..., f64 data.

namespace {

constexpr char kMagic[4] = {'M', 'U', 'F', 'R'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

void write_u8(std::ostream& os, std::uint8_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint8_t read_u8(std::istream& is) {
  std::uint8_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

void write_tensor(std::ostream& os, const Tensor& t) {
  write_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (int e : t.shape()) write_u32(os, static_cast<std::uint32_t>(e));
  os.write(reinterpret_cast<const char*>(t.value().data()),
           static_cast<std::streamsize>(sizeof(double) * t.size()));
}

Tensor read_tensor(std::istream& is, bool requires_grad) {
  const std::uint32_t rank = read_u32(is);
  if (rank > 4) throw DataError("checkpoint: implausible tensor rank");
  Shape shape(rank);
  for (auto& e : shape) e = static_cast<int>(read_u32(is));
  std::vector<double> data(static_cast<std::size_t>(shape_size(shape)));
  is.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(sizeof(double) * data.size()));
  if (!is) throw DataError("checkpoint: truncated tensor payload");
  return Tensor::from(std::move(shape), std::move(data), requires_grad);
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path);
  os.write(kMagic, sizeof kMagic);
  write_u32(os, kVersion);
  write_u8(os, static_cast<std::uint8_t>(ckpt.cell.kind()));
  write_u32(os, static_cast<std::uint32_t>(ckpt.cell.shape.input_size));
  write_u32(os, static_cast<std::uint32_t>(ckpt.cell.shape.state_size));
  const auto ops = ckpt.cell.ops();
  write_u32(os, static_cast<std::uint32_t>(ops.size()));
  for (CompositionOp op : ops) write_u8(os, static_cast<std::uint8_t>(op));
  for (const Tensor& t : ckpt.cell.parameters()) write_tensor(os, t);
  write_u32(os, static_cast<std::uint32_t>(ckpt.extras.size()));
  for (const auto& [name, tensor] : ckpt.extras) {
    write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_tensor(os, tensor);
  }
  if (!os) throw IoError("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw DataError("not a checkpoint file: " + path);
  }
  const std::uint32_t version = read_u32(is);
  if (version != kVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto kind = static_cast<CellKind>(read_u8(is));
  CellShape shape;
  shape.input_size = static_cast<int>(read_u32(is));
  shape.state_size = static_cast<int>(read_u32(is));
  const std::uint32_t op_count = read_u32(is);
  std::vector<CompositionOp> ops(op_count);
  for (auto& op : ops) op = static_cast<CompositionOp>(read_u8(is));

  Checkpoint ckpt;
  ckpt.cell.shape = shape;
  switch (kind) {
    case CellKind::Vanilla: {
      VanillaParams p;
      p.w = read_tensor(is, true);
      p.b = read_tensor(is, true);
      ckpt.cell.params = std::move(p);
      break;
    }
    case CellKind::Gru: {
      GRUParams p;
      p.w_u = read_tensor(is, true);
      p.b_u = read_tensor(is, true);
      p.w_v = read_tensor(is, true);
      p.b_v = read_tensor(is, true);
      ckpt.cell.params = std::move(p);
      break;
    }
    case CellKind::Mufuru: {
      MuFuRUParams p;
      p.ops = std::move(ops);
      p.w_r = read_tensor(is, true);
      p.b_r = read_tensor(is, true);
      p.w_v = read_tensor(is, true);
      p.b_v = read_tensor(is, true);
      for (std::size_t j = 0; j < p.ops.size(); ++j) {
        p.w_p.push_back(read_tensor(is, true));
        p.b_p.push_back(read_tensor(is, true));
      }
      ckpt.cell.params = std::move(p);
      break;
    }
    default:
      throw DataError("checkpoint: unknown cell kind");
  }
  const std::uint32_t extra_count = read_u32(is);
  if (!is) throw DataError("checkpoint: truncated header");
  for (std::uint32_t i = 0; i < extra_count; ++i) {
    const std::uint32_t len = read_u32(is);
    std::string name(len, '\0');
    is.read(name.data(), len);
    Tensor t = read_tensor(is, true);
    ckpt.extras.emplace_back(std::move(name), std::move(t));
  }
  return ckpt;
}

}  // namespace mufuru
