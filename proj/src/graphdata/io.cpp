#include "shillforge/graphdata/io.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>
#include <vector>

namespace shillforge::graph {

namespace {

bool valid_id(std::string_view id) {
  if (id.empty()) return false;
  for (char c : id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '_';
    if (!ok) return false;
  }
  return true;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? comma : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

LoadResult parse_csv(std::istream& in, int levels) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError(1, "missing header");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "user_id,item_id,rating,label") {
    throw ParseError(line_no, "expected header 'user_id,item_id,rating,label', got '" + line + "'");
  }

  std::vector<std::string> users, items;
  std::vector<UserLabel> labels;
  std::unordered_map<std::string, std::size_t> user_index, item_index;
  // (user, item) -> rating; ordered so edge order is reproducible.
  std::map<std::pair<std::size_t, std::size_t>, int> ratings;
  std::vector<std::pair<std::size_t, std::size_t>> first_seen;
  std::size_t duplicates = 0;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_fields(line);
    if (fields.size() != 4) {
      throw ParseError(line_no, "expected 4 fields, got " + std::to_string(fields.size()));
    }
    if (!valid_id(fields[0]) || !valid_id(fields[1])) {
      throw ParseError(line_no, "ids must be non-empty [A-Za-z0-9_]");
    }
    int rating = 0;
    auto [ptr, ec] = std::from_chars(fields[2].data(), fields[2].data() + fields[2].size(), rating);
    if (ec != std::errc() || ptr != fields[2].data() + fields[2].size()) {
      throw ParseError(line_no, "rating '" + std::string(fields[2]) + "' is not an integer");
    }
    if (rating < 1 || rating > levels) {
      throw ValidationError("line " + std::to_string(line_no) + ": rating " +
                            std::to_string(rating) + " outside [1," + std::to_string(levels) + "]");
    }
    auto label = parse_label(fields[3]);
    if (!label || *label == UserLabel::injected_unlabeled) {
      throw ParseError(line_no, "label must be 'normal' or 'fake'");
    }

    std::string uid(fields[0]), iid(fields[1]);
    auto [uit, new_user] = user_index.try_emplace(uid, users.size());
    if (new_user) {
      users.push_back(uid);
      labels.push_back(*label);
    } else if (labels[uit->second] != *label) {
      throw ValidationError("line " + std::to_string(line_no) + ": inconsistent label for user '" +
                            uid + "'");
    }
    auto [iit, new_item] = item_index.try_emplace(iid, items.size());
    if (new_item) items.push_back(iid);

    auto key = std::pair{uit->second, iit->second};
    auto [rit, fresh] = ratings.try_emplace(key, rating);
    if (fresh) {
      first_seen.push_back(key);
    } else {
      rit->second = rating;
      ++duplicates;
    }
  }

  std::vector<Edge> edges;
  edges.reserve(first_seen.size());
  for (const auto& key : first_seen) edges.push_back({key.first, key.second, ratings[key]});
  return {RatingGraph(std::move(users), std::move(labels), std::move(items), std::move(edges),
                      levels),
          duplicates};
}

LoadResult load_csv(const std::filesystem::path& path, int levels) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  return parse_csv(in, levels);
}

void write_csv(const RatingGraph& g, std::ostream& out) {
  out << "user_id,item_id,rating,label\n";
  for (const Edge& e : g.edges()) {
    UserLabel label = g.label(e.user);
    if (label == UserLabel::injected_unlabeled) label = UserLabel::normal;
    out << g.user_id(e.user) << ',' << g.item_id(e.item) << ',' << e.rating << ','
        << to_string(label) << '\n';
  }
}

void atomic_write(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) {
      out.close();
      std::filesystem::remove(tmp);
      throw std::runtime_error("write failed for '" + tmp.string() + "'");
    }
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace shillforge::graph
