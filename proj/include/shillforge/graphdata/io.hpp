#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include "shillforge/graphdata/graph.hpp"

namespace shillforge::graph {

/// Malformed CSV input; `line()` is 1-based and counts the header.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

struct LoadResult {
  RatingGraph graph;
  /// Rows that repeated an earlier (user, item) pair; the later row wins.
  std::size_t duplicate_rows = 0;
};

/// Reads `user_id,item_id,rating,label`. Users and items are indexed in order of
/// first appearance.
LoadResult load_csv(const std::filesystem::path& path, int levels = 5);
LoadResult parse_csv(std::istream& in, int levels = 5);

void write_csv(const RatingGraph& g, std::ostream& out);

/// Writes to a sibling temp file and renames it over `path`, so readers never
/// observe a partial file.
void atomic_write(const std::filesystem::path& path, const std::string& content);

}  // namespace shillforge::graph
