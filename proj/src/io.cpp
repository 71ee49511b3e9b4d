#include "ecoc/io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace ecoc::io {

static_assert(std::endian::native == std::endian::little,
              "container format assumes a little-endian host");

namespace {
constexpr char kMagic[8] = {'E', 'C', 'O', 'C', 'A', 'R', 'R', '1'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

Array& Container::add_f64(const std::string& name, std::vector<std::size_t> shape) {
    Array a;
    a.type = Array::Type::f64;
    a.shape = std::move(shape);
    a.f.assign(a.count(), 0.0);
    arrays.emplace_back(name, std::move(a));
    return arrays.back().second;
}

Array& Container::add_u64(const std::string& name, std::vector<std::size_t> shape) {
    Array a;
    a.type = Array::Type::u64;
    a.shape = std::move(shape);
    a.u.assign(a.count(), 0);
    arrays.emplace_back(name, std::move(a));
    return arrays.back().second;
}

bool Container::has(const std::string& name) const {
    for (const auto& [n, a] : arrays)
        if (n == name) return true;
    return false;
}

const Array& Container::get(const std::string& name) const {
    for (const auto& [n, a] : arrays)
        if (n == name) return a;
    throw ValidationError("container is missing array '" + name + "'");
}

void save_container(const Container& c, const std::string& path) {
    nlohmann::ordered_json header;
    header["version"] = kVersion;
    header["meta"] = c.meta;
    nlohmann::ordered_json arrs = nlohmann::ordered_json::array();
    for (const auto& [name, a] : c.arrays) {
        nlohmann::ordered_json ja;
        ja["name"] = name;
        ja["type"] = a.type == Array::Type::f64 ? "f64" : "u64";
        ja["shape"] = a.shape;
        arrs.push_back(std::move(ja));
    }
    header["arrays"] = std::move(arrs);
    const std::string hs = header.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot open for writing: " + path);
    out.write(kMagic, sizeof(kMagic));
    const std::uint64_t hlen = hs.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& [name, a] : c.arrays) {
        if (a.type == Array::Type::f64)
            out.write(reinterpret_cast<const char*>(a.f.data()),
                      static_cast<std::streamsize>(a.f.size() * sizeof(double)));
        else
            out.write(reinterpret_cast<const char*>(a.u.data()),
                      static_cast<std::streamsize>(a.u.size() * sizeof(std::uint64_t)));
    }
    out.flush();
    if (!out) throw ValidationError("write failed: " + path);
}

Container load_container(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open container: " + path);

    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw ValidationError("not a container file: " + path);
    std::uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    if (!in) throw ValidationError("truncated container header: " + path);
    std::string hs(hlen, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw ValidationError("truncated container header: " + path);

    nlohmann::ordered_json header;
    try {
        header = nlohmann::ordered_json::parse(hs);
    } catch (const std::exception& e) {
        throw ValidationError(std::string("corrupt container header: ") + e.what());
    }
    if (header.at("version").get<std::uint32_t>() != kVersion)
        throw ValidationError("unsupported container version in " + path);

    Container c;
    c.meta = header.value("meta", nlohmann::ordered_json::object());
    for (const auto& ja : header.at("arrays")) {
        Array a;
        a.type = ja.at("type").get<std::string>() == "f64" ? Array::Type::f64 : Array::Type::u64;
        a.shape = ja.at("shape").get<std::vector<std::size_t>>();
        const std::size_t n = a.count();
        if (a.type == Array::Type::f64) {
            a.f.resize(n);
            in.read(reinterpret_cast<char*>(a.f.data()),
                    static_cast<std::streamsize>(n * sizeof(double)));
        } else {
            a.u.resize(n);
            in.read(reinterpret_cast<char*>(a.u.data()),
                    static_cast<std::streamsize>(n * sizeof(std::uint64_t)));
        }
        if (!in) throw ValidationError("truncated container payload: " + path);
        c.arrays.emplace_back(ja.at("name").get<std::string>(), std::move(a));
    }
    return c;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace ecoc::io
