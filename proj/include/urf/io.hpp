#pragma once

// CSV/JSON file helpers and content hashing for run manifests.

#include <urf/core.hpp>
#include <urf/dynamics.hpp>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <array>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace urf::io {

namespace fs = std::filesystem;

// Shortest representation that round-trips.
inline std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) throw IoError("format_double: conversion failed");
  return std::string(buf.data(), end);
}

inline std::string sha256_hex(std::string_view content) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(content.data(), content.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw IoError("sha256: digest failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

inline void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw IoError(detail::concat("cannot create output directory '", dir.string(), "': ", ec.message()));
  }
}

inline void write_text(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) ensure_directory(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(detail::concat("cannot open '", path.string(), "' for writing"));
  out << content;
  out.close();
  if (!out) throw IoError(detail::concat("failed writing '", path.string(), "'"));
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(detail::concat("cannot open '", path.string(), "' for reading"));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string dump_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

inline nlohmann::json read_json(const fs::path& path) {
  const std::string text = read_text(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(detail::concat("'", path.string(), "': invalid JSON: ", e.what()));
  }
}

inline std::string csv_row(const std::vector<std::string>& cells) {
  std::string line;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) line.push_back(',');
    line += cells[i];
  }
  line.push_back('\n');
  return line;
}

inline std::vector<std::string> numbered(std::string_view prefix, Eigen::Index count) {
  std::vector<std::string> names;
  for (Eigen::Index i = 0; i < count; ++i) names.push_back(detail::concat(prefix, i));
  return names;
}

// `n, x0..x{p-1}`
inline std::string trajectory_csv(const Trajectory& traj) {
  std::vector<std::string> header{"n"};
  for (auto& name : numbered("x", traj.states.cols())) header.push_back(std::move(name));
  std::string out = csv_row(header);
  for (Eigen::Index n = 0; n < traj.states.rows(); ++n) {
    std::vector<std::string> row{std::to_string(n)};
    for (Eigen::Index c = 0; c < traj.states.cols(); ++c) row.push_back(format_double(traj.states(n, c)));
    out += csv_row(row);
  }
  return out;
}

// `x0..x{d-1}, y0..y{p-1}`
inline std::string dataset_csv(const Matrix& inputs, const Matrix& successors) {
  auto header = numbered("x", inputs.cols());
  for (auto& name : numbered("y", successors.cols())) header.push_back(std::move(name));
  std::string out = csv_row(header);
  for (Eigen::Index t = 0; t < inputs.rows(); ++t) {
    std::vector<std::string> row;
    for (Eigen::Index c = 0; c < inputs.cols(); ++c) row.push_back(format_double(inputs(t, c)));
    for (Eigen::Index c = 0; c < successors.cols(); ++c) row.push_back(format_double(successors(t, c)));
    out += csv_row(row);
  }
  return out;
}

inline std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  for (auto& cell : out) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
  }
  return out;
}

struct DatasetTable {
  Matrix inputs;
  Matrix successors;
};

// Parses a transition table; the header must read x0..x{d-1}, y0..y{d-1}.
inline DatasetTable parse_dataset_csv(const std::string& text, Eigen::Index state_dim,
                                      std::string_view source = "dataset.csv") {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw IoError(detail::concat(source, ": empty file"));
  const auto header = split(line, ',');
  auto expected = numbered("x", state_dim);
  for (auto& name : numbered("y", state_dim)) expected.push_back(std::move(name));
  for (std::size_t c = 0; c < std::max(header.size(), expected.size()); ++c) {
    const std::string got = c < header.size() ? header[c] : "<missing>";
    const std::string want = c < expected.size() ? expected[c] : "<none>";
    if (got != want) {
      throw IoError(detail::concat(source, ": schema mismatch at column ", c, " ('", got, "', expected '",
                                   want, "')"));
    }
  }
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line, ',');
    if (cells.size() != expected.size()) {
      throw IoError(detail::concat(source, ": line ", line_no, " has ", cells.size(), " columns, expected ",
                                   expected.size()));
    }
    std::vector<double> values;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      double v = 0.0;
      const auto* first = cells[c].data();
      const auto* last = first + cells[c].size();
      const auto [ptr, ec] = std::from_chars(first, last, v);
      if (ec != std::errc() || ptr != last) {
        throw IoError(detail::concat(source, ": line ", line_no, " column '", expected[c], "' is not a number"));
      }
      values.push_back(v);
    }
    rows.push_back(std::move(values));
  }
  DatasetTable table{Matrix(static_cast<Eigen::Index>(rows.size()), state_dim),
                     Matrix(static_cast<Eigen::Index>(rows.size()), state_dim)};
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (Eigen::Index c = 0; c < state_dim; ++c) {
      table.inputs(static_cast<Eigen::Index>(r), c) = rows[r][static_cast<std::size_t>(c)];
      table.successors(static_cast<Eigen::Index>(r), c) = rows[r][static_cast<std::size_t>(state_dim + c)];
    }
  }
  return table;
}

// Writes files under one root and remembers their content hashes.
class OutputSet {
 public:
  explicit OutputSet(fs::path root) : root_(std::move(root)) { ensure_directory(root_); }

  const fs::path& root() const { return root_; }

  void write(const std::string& relative, const std::string& content) {
    write_text(root_ / relative, content);
    hashes_[relative] = sha256_hex(content);
  }

  void write_json(const std::string& relative, const nlohmann::json& j) { write(relative, dump_json(j)); }

  const nlohmann::json& hashes() const { return hashes_; }

 private:
  fs::path root_;
  nlohmann::json hashes_ = nlohmann::json::object();
};

}  // namespace urf::io
