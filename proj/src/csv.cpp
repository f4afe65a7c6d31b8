#include "zsl/csv.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "zsl/error.hpp"

namespace zsl {

std::string format_double(double v) {
  char buf[64];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    double back = 0.0;
    std::sscanf(buf, "%lf", &back);
    if (back == v || (back != back && v != v)) return buf;
  }
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& tok, const std::string& context) {
  const char* b = tok.data();
  const char* e = tok.data() + tok.size();
  while (b < e && std::isspace(static_cast<unsigned char>(*b))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(e[-1]))) --e;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc{} || ptr != e) {
    // from_chars does not accept "inf"/"nan" spellings everywhere; fall back.
    std::string s(b, e);
    try {
      size_t pos = 0;
      v = std::stod(s, &pos);
      if (pos == s.size()) return v;
    } catch (...) {
    }
    throw_io("invalid number '" + tok + "' in " + context);
  }
  return v;
}

long parse_long(const std::string& tok, const std::string& context) {
  const char* b = tok.data();
  const char* e = tok.data() + tok.size();
  while (b < e && std::isspace(static_cast<unsigned char>(*b))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(e[-1]))) --e;
  long v = 0;
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc{} || ptr != e)
    throw_io("invalid integer '" + tok + "' in " + context);
  return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

std::vector<std::string> read_lines(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw_io("cannot open file: " + file.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

Eigen::MatrixXd read_csv_matrix(const std::filesystem::path& file) {
  auto lines = read_lines(file);
  if (lines.empty()) throw_io("empty file: " + file.string());
  const auto first = split_csv_line(lines[0]);
  const Eigen::Index cols = static_cast<Eigen::Index>(first.size());
  Eigen::MatrixXd m(static_cast<Eigen::Index>(lines.size()), cols);
  for (size_t r = 0; r < lines.size(); ++r) {
    auto toks = split_csv_line(lines[r]);
    if (static_cast<Eigen::Index>(toks.size()) != cols)
      throw_io(file.string() + ": row " + std::to_string(r) + " has " +
               std::to_string(toks.size()) + " columns, expected " +
               std::to_string(cols));
    for (Eigen::Index c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(r), c) = parse_double(
          toks[static_cast<size_t>(c)],
          file.string() + " row " + std::to_string(r));
  }
  return m;
}

void write_csv_matrix(const std::filesystem::path& file,
                      const Eigen::MatrixXd& m) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw_io("cannot write file: " + file.string());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out << ',';
      out << format_double(m(r, c));
    }
    out << '\n';
  }
}

void write_manifest(const std::filesystem::path& file, const Manifest& m) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw_io("cannot write file: " + file.string());
  for (const auto& [k, v] : m) out << k << '=' << v << '\n';
}

Manifest read_manifest(const std::filesystem::path& file) {
  Manifest m;
  for (const auto& line : read_lines(file)) {
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw_io("malformed manifest line '" + line + "' in " + file.string());
    m[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return m;
}

void write_text_file(const std::filesystem::path& file,
                     const std::string& content) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw_io("cannot write file: " + file.string());
  out << content;
}

}  // namespace zsl
