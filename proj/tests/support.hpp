#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

#include "fixtures.hpp"

namespace earn::testing {

inline std::filesystem::path golden_path(const std::string& name) {
    return std::filesystem::path(EARN_GOLDEN_DIR) / (name + ".json");
}

inline bool updating_golden() {
    const char* v = std::getenv("EARN_UPDATE_GOLDEN");
    return v != nullptr && std::string(v) != "0";
}

inline nlohmann::json to_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(row);
    }
    return rows;
}

/// Compares `actual` with the stored golden value, bit for bit. With
/// EARN_UPDATE_GOLDEN=1 the file is rewritten instead.
inline void expect_golden(const std::string& name, const nlohmann::json& actual) {
    const auto path = golden_path(name);
    if (updating_golden()) {
        std::filesystem::create_directories(path.parent_path());
        std::ofstream(path) << actual.dump(1) << "\n";
        GTEST_SKIP() << "rewrote " << path;
    }
    std::ifstream in(path);
    ASSERT_TRUE(in) << "missing golden file " << path << " (run with EARN_UPDATE_GOLDEN=1)";
    const nlohmann::json expected = nlohmann::json::parse(in);
    EXPECT_EQ(expected, actual) << "golden mismatch for " << name;
}

}  // namespace earn::testing
