#pragma once

// Single binary container used by every on-disk artifact: network weights,
// tabular solutions, transition datasets, learned-dynamics models.
//
// Layout (little-endian):
//   magic   "RSA1" (4 bytes)
//   version u32
//   count   u32
//   entries count times:
//     name_len u32, name bytes
//     n_dims   u32, dims u64[n_dims]
//     payload  f64[prod(dims)] row-major

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "rmppi/core.hpp"

namespace rmppi {

static_assert(std::endian::native == std::endian::little,
              "array file serialization assumes a little-endian host");

struct ArrayEntry {
    std::string name;
    std::vector<std::uint64_t> dims;
    Vec data;

    std::uint64_t element_count() const {
        std::uint64_t n = 1;
        for (auto d : dims) n *= d;
        return n;
    }
};

class ArrayFile {
public:
    static constexpr std::uint32_t kVersion = 1;

    void add(const std::string& name, std::vector<std::uint64_t> dims, Vec data) {
        require(!has(name), "array file: duplicate entry name '" + name + "'");
        ArrayEntry e{name, std::move(dims), std::move(data)};
        require(e.element_count() == e.data.size(),
                "array file: entry '" + name + "' dims do not match payload size");
        entries_.push_back(std::move(e));
    }

    void add_scalar(const std::string& name, double value) { add(name, {1}, Vec{value}); }

    bool has(const std::string& name) const {
        for (const auto& e : entries_)
            if (e.name == name) return true;
        return false;
    }

    const ArrayEntry& get(const std::string& name) const {
        for (const auto& e : entries_)
            if (e.name == name) return e;
        throw IoError("array file: missing entry '" + name + "'");
    }

    double scalar(const std::string& name) const {
        const auto& e = get(name);
        if (e.data.size() != 1) throw IoError("array file: entry '" + name + "' is not a scalar");
        return e.data[0];
    }

    const std::vector<ArrayEntry>& entries() const { return entries_; }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot open '" + path + "' for writing");
        out.write(kMagic, 4);
        write_u32(out, kVersion);
        write_u32(out, static_cast<std::uint32_t>(entries_.size()));
        for (const auto& e : entries_) {
            write_u32(out, static_cast<std::uint32_t>(e.name.size()));
            out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
            write_u32(out, static_cast<std::uint32_t>(e.dims.size()));
            for (auto d : e.dims) write_raw(out, &d, sizeof d);
            write_raw(out, e.data.data(), e.data.size() * sizeof(double));
        }
        if (!out) throw IoError("short write to '" + path + "'");
    }

    static ArrayFile load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open '" + path + "'");
        char magic[4];
        if (!in.read(magic, 4)) throw IoError("'" + path + "': truncated header");
        if (std::memcmp(magic, kMagic, 4) != 0)
            throw IoError("'" + path + "': bad magic, not an array file");
        std::uint32_t version = read_u32(in, path);
        if (version != kVersion)
            throw IoError("'" + path + "': unsupported version " + std::to_string(version));
        std::uint32_t count = read_u32(in, path);
        ArrayFile f;
        for (std::uint32_t i = 0; i < count; ++i) {
            std::uint32_t name_len = read_u32(in, path);
            std::string name(name_len, '\0');
            if (!in.read(name.data(), name_len)) throw IoError("'" + path + "': truncated entry name");
            std::uint32_t n_dims = read_u32(in, path);
            std::vector<std::uint64_t> dims(n_dims);
            for (auto& d : dims)
                if (!in.read(reinterpret_cast<char*>(&d), sizeof d))
                    throw IoError("'" + path + "': truncated dims");
            std::uint64_t n = 1;
            for (auto d : dims) n *= d;
            Vec data(n);
            if (n > 0 &&
                !in.read(reinterpret_cast<char*>(data.data()),
                         static_cast<std::streamsize>(n * sizeof(double))))
                throw IoError("'" + path + "': truncated payload in entry '" + name + "'");
            f.add(name, std::move(dims), std::move(data));
        }
        return f;
    }

private:
    static constexpr const char* kMagic = "RSA1";

    static void write_u32(std::ofstream& out, std::uint32_t v) { write_raw(out, &v, sizeof v); }

    static void write_raw(std::ofstream& out, const void* p, std::size_t n) {
        out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    }

    static std::uint32_t read_u32(std::ifstream& in, const std::string& path) {
        std::uint32_t v;
        if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
            throw IoError("'" + path + "': truncated field");
        return v;
    }

    std::vector<ArrayEntry> entries_;
};

}  // namespace rmppi
