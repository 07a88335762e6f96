#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cpr/graph.hpp"
#include "cpr/log.hpp"
#include "cpr/query.hpp"
#include "cpr/rng.hpp"

namespace testutil {

inline cpr::KnowledgeGraph graph_of(const std::vector<std::vector<std::string>>& triples) {
  cpr::GraphBuilder b;
  for (const auto& t : triples) b.add(t[0], t[1], t[2]);
  return std::move(b).build();
}

inline cpr::Query query_of(const cpr::KnowledgeGraph& g, std::string id, std::string question,
                           const std::vector<std::string>& topics, const std::vector<std::string>& answers) {
  cpr::Query q;
  q.id = std::move(id);
  q.question = std::move(question);
  for (const auto& t : topics) q.topic_entities.push_back(g.entity(t));
  for (const auto& a : answers) q.answers.push_back(g.entity(a));
  cpr::normalize(q);
  return q;
}

/// Random graph over n entities "n0.." and r relations "r0..".
inline cpr::KnowledgeGraph random_graph(cpr::Rng& rng, std::size_t n, std::size_t r, std::size_t triples) {
  cpr::GraphBuilder b;
  for (std::size_t i = 0; i < n; ++i) b.add_entity("n" + std::to_string(i));
  for (std::size_t i = 0; i < triples; ++i) {
    b.add("n" + std::to_string(rng.uniform_index(n)), "r" + std::to_string(rng.uniform_index(r)),
          "n" + std::to_string(rng.uniform_index(n)));
  }
  return std::move(b).build();
}

/// Collects warnings while alive.
class WarningCapture {
 public:
  WarningCapture() {
    previous_ = cpr::set_warning_sink([this](std::string_view m) { messages.emplace_back(m); });
  }
  ~WarningCapture() { cpr::set_warning_sink(previous_); }
  std::vector<std::string> messages;

 private:
  cpr::WarningSink previous_;
};

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("cpr_unit_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace testutil
