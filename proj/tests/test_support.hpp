#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "kgforage/graph_store.hpp"

namespace kgforage::testing {

inline std::string data_path(const std::string& name) {
    return std::string(KGFORAGE_TEST_DATA) + "/" + name;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline const KnowledgeGraph& mini_countries() {
    static const KnowledgeGraph g = load_fixture_file(data_path("mini_countries.jsonl"));
    return g;
}

inline const KnowledgeGraph& acled_graph() {
    static const KnowledgeGraph g = load_fixture_file(data_path("acled_graph.jsonl"));
    return g;
}

}  // namespace kgforage::testing
