#include "snbd/output.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "snbd/errors.hpp"
#include "snbd/fingerprint.hpp"

#ifndef SNBD_VERSION
#define SNBD_VERSION "unknown"
#endif

namespace snbd {

std::string code_version() { return SNBD_VERSION; }

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

CsvTable::CsvTable(std::vector<std::string> header) : columns_(header.size()) {
  if (header.empty()) throw ShapeError("csv: empty header");
  row(header);
}

CsvTable& CsvTable::row(const std::vector<std::string>& cells) {
  if (cells.size() != columns_) throw ShapeError("csv: row has the wrong number of cells");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) text_ += ',';
    if (cells[i].find_first_of(",\"\n") != std::string::npos) {
      text_ += '"';
      for (char c : cells[i]) {
        if (c == '"') text_ += '"';
        text_ += c;
      }
      text_ += '"';
    } else {
      text_ += cells[i];
    }
  }
  text_ += '\n';
  return *this;
}

CsvTable& CsvTable::row(const std::vector<double>& cells) {
  std::vector<std::string> s;
  s.reserve(cells.size());
  for (double x : cells) s.push_back(format_double(x));
  return row(s);
}

std::string CsvTable::str() const { return text_; }

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}
void put_f64(std::string& out, double x) {
  const auto v = std::bit_cast<std::uint64_t>(x);
  for (int i = 0; i < 8; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}
std::uint64_t get_le(const std::string& in, std::size_t at, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= std::uint64_t(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

}  // namespace

std::string encode_snapshots(const std::vector<ComplexMatrix>& snapshots) {
  const std::size_t dim = snapshots.empty() ? 0 : snapshots.front().dim();
  std::string out = "SNBD";
  put_u32(out, kSnapshotVersion);
  put_u32(out, static_cast<std::uint32_t>(dim));
  put_u32(out, static_cast<std::uint32_t>(snapshots.size()));
  out.reserve(16 + snapshots.size() * dim * dim * 16);
  for (const auto& m : snapshots) {
    if (m.dim() != dim) throw ShapeError("snapshots must share one dimension");
    for (cplx z : m.data()) {
      put_f64(out, z.real());
      put_f64(out, z.imag());
    }
  }
  return out;
}

std::vector<ComplexMatrix> decode_snapshots(const std::string& bytes) {
  if (bytes.size() < 16 || bytes.compare(0, 4, "SNBD") != 0) throw IoError("not an SNBD snapshot file");
  if (get_le(bytes, 4, 4) != kSnapshotVersion) throw IoError("unsupported snapshot version");
  const std::size_t dim = get_le(bytes, 8, 4);
  const std::size_t count = get_le(bytes, 12, 4);
  if (bytes.size() != 16 + count * dim * dim * 16) throw IoError("snapshot file is truncated");
  std::vector<ComplexMatrix> out;
  std::size_t at = 16;
  for (std::size_t c = 0; c < count; ++c) {
    ComplexMatrix m(dim);
    for (auto& z : m.data()) {
      const double re = std::bit_cast<double>(get_le(bytes, at, 8));
      const double im = std::bit_cast<double>(get_le(bytes, at + 8, 8));
      z = {re, im};
      at += 16;
    }
    out.push_back(std::move(m));
  }
  return out;
}

OutputSet::OutputSet(std::filesystem::path directory) : dir_(std::move(directory)) {}

void OutputSet::add(const std::string& name, std::string contents) {
  for (auto& [n, c] : files_)
    if (n == name) {
      c = std::move(contents);
      return;
    }
  files_.emplace_back(name, std::move(contents));
}

std::vector<std::string> OutputSet::names() const {
  std::vector<std::string> out;
  for (const auto& [n, _] : files_) out.push_back(n);
  return out;
}

namespace {

void write_bytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

void OutputSet::commit(const Manifest& manifest) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw IoError("cannot create output directory '" + dir_.string() + "': " + ec.message());

  nlohmann::ordered_json files = nlohmann::ordered_json::array();
  for (const auto& [name, contents] : files_) {
    write_bytes(dir_ / name, contents);
    Fnv1a h;
    h.text(contents);
    files.push_back({{"name", name}, {"bytes", contents.size()}, {"fnv1a64", hex64(h.value())}});
  }
  nlohmann::ordered_json m;
  m["subcommand"] = manifest.subcommand;
  m["status"] = manifest.status;
  m["config_hash"] = hex64(manifest.config_hash);
  m["master_seed"] = manifest.master_seed;
  m["code_version"] = code_version();
  if (!manifest.message.empty()) m["message"] = manifest.message;
  for (const auto& [k, v] : manifest.extra) m[k] = nlohmann::ordered_json::parse(v);
  m["files"] = std::move(files);
  write_bytes(dir_ / "manifest.json", m.dump(2) + "\n");
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace snbd
