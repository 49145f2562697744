#pragma once

// File writers. CSV: UTF-8, header row, 17 significant digits. Density
// snapshots: 16-byte header ("SNBD", version, dim, count as little-endian
// u32) followed by little-endian float64 pairs (re, im), row-major.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "snbd/operator_algebra.hpp"

namespace snbd {

inline constexpr std::uint32_t kSnapshotVersion = 1;

std::string format_double(double x);

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);
  CsvTable& row(const std::vector<std::string>& cells);
  CsvTable& row(const std::vector<double>& cells);
  std::string str() const;
  std::size_t columns() const noexcept { return columns_; }

 private:
  std::size_t columns_;
  std::string text_;
};

std::string encode_snapshots(const std::vector<ComplexMatrix>& snapshots);
std::vector<ComplexMatrix> decode_snapshots(const std::string& bytes);

// Collects output files in memory and writes them from one thread, then the
// manifest. Files reach disk only through commit().
class OutputSet {
 public:
  explicit OutputSet(std::filesystem::path directory);

  void add(const std::string& name, std::string contents);
  const std::filesystem::path& directory() const noexcept { return dir_; }
  std::vector<std::string> names() const;

  struct Manifest {
    std::string subcommand;
    std::uint64_t config_hash = 0;
    std::uint64_t master_seed = 0;
    std::string status;  // complete | incomplete | failed
    std::string message;
    std::vector<std::pair<std::string, std::string>> extra;  // key, JSON value
  };

  // Writes every staged file plus manifest.json. Throws IoError.
  void commit(const Manifest& manifest);

 private:
  std::filesystem::path dir_;
  std::vector<std::pair<std::string, std::string>> files_;
};

std::string code_version();

std::string read_file(const std::filesystem::path& path);

}  // namespace snbd
