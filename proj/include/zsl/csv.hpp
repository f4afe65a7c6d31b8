#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace zsl {

// Shortest decimal form that round-trips a double exactly.
std::string format_double(double v);

// Decimal or scientific notation; "inf"/"-inf"/"nan" accepted.
// `context` names the file/row for error messages.
double parse_double(const std::string& tok, const std::string& context);

long parse_long(const std::string& tok, const std::string& context);

// Splits one CSV line on commas. No quoting; numeric payloads only.
std::vector<std::string> split_csv_line(const std::string& line);

// Reads a whole file as lines; strips trailing CR; skips trailing blank lines.
std::vector<std::string> read_lines(const std::filesystem::path& file);

Eigen::MatrixXd read_csv_matrix(const std::filesystem::path& file);
void write_csv_matrix(const std::filesystem::path& file,
                      const Eigen::MatrixXd& m);

// Flat key=value manifest, keys written in sorted order.
using Manifest = std::map<std::string, std::string>;
void write_manifest(const std::filesystem::path& file, const Manifest& m);
Manifest read_manifest(const std::filesystem::path& file);

void write_text_file(const std::filesystem::path& file,
                     const std::string& content);

}  // namespace zsl
