#pragma once
// Versioned binary container of named arrays (64-bit reals and unsigned
// words) plus a JSON metadata block. Round-trips bit-exactly; used for
// checkpoints, embedding exports, and oracle descriptors.

#include "ecoc/common.hpp"
#include "ecoc/linalg.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace ecoc::io {

struct Array {
    enum class Type { f64, u64 };
    Type type = Type::f64;
    std::vector<std::size_t> shape;
    Vec f;
    std::vector<std::uint64_t> u;

    std::size_t count() const {
        std::size_t n = 1;
        for (std::size_t s : shape) n *= s;
        return shape.empty() ? 0 : n;
    }
};

struct Container {
    nlohmann::ordered_json meta = nlohmann::ordered_json::object();
    std::vector<std::pair<std::string, Array>> arrays;

    Array& add_f64(const std::string& name, std::vector<std::size_t> shape);
    Array& add_u64(const std::string& name, std::vector<std::size_t> shape);
    bool has(const std::string& name) const;
    const Array& get(const std::string& name) const;
};

void save_container(const Container& c, const std::string& path);
Container load_container(const std::string& path);

// Deterministic shortest-unambiguous formatting for CSV output.
std::string format_double(double v);

}  // namespace ecoc::io
