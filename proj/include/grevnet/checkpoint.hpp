#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <zlib.h>

#include "grevnet/tensor.hpp"

namespace grevnet {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

enum class DType : std::uint8_t { f32 = 0, f64 = 1, i64 = 2, u64 = 3, text = 4 };

template <typename T>
constexpr DType dtype_of() {
    if constexpr (std::is_same_v<T, float>) return DType::f32;
    else if constexpr (std::is_same_v<T, double>) return DType::f64;
    else if constexpr (std::is_same_v<T, std::int64_t>) return DType::i64;
    else if constexpr (std::is_same_v<T, std::uint64_t>) return DType::u64;
    else static_assert(sizeof(T) == 0, "unsupported checkpoint dtype");
}

/// Named arrays in insertion order. Serialised as
///   "RGCK" | u32 version | u32 crc32(body) | u64 body length | body
/// where the body is a sequence of records
///   u32 name length | name | u8 dtype | u8 rank | u64 dims[rank] | raw little-endian data.
class Checkpoint {
public:
    static constexpr std::uint32_t version = 1;

    struct Record {
        std::string name;
        DType dtype;
        Shape dims;
        std::vector<unsigned char> data;
    };

    template <typename T>
    void put(const std::string& name, const Tensor<T>& t) {
        add(name, dtype_of<T>(), t.shape(), t.data(), t.size() * sizeof(T));
    }
    template <typename T>
    void put_values(const std::string& name, const std::vector<T>& v) {
        add(name, dtype_of<T>(), {v.size()}, v.data(), v.size() * sizeof(T));
    }
    template <typename T>
    void put_scalar(const std::string& name, T v) {
        add(name, dtype_of<T>(), {}, &v, sizeof(T));
    }
    void put_text(const std::string& name, const std::string& s) {
        add(name, DType::text, {s.size()}, s.data(), s.size());
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    const Record& record(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw CheckpointError("checkpoint: missing record '" + name + "'");
        return records_[it->second];
    }

    template <typename T>
    Tensor<T> get(const std::string& name) const {
        const auto& r = typed(name, dtype_of<T>());
        Tensor<T> t(r.dims.empty() ? Shape{1} : r.dims);
        std::memcpy(t.data(), r.data.data(), r.data.size());
        return t;
    }
    /// Copies a record into an existing tensor of the same shape.
    template <typename T>
    void get_into(const std::string& name, Tensor<T>& out) const {
        const auto& r = typed(name, dtype_of<T>());
        if (r.dims != out.shape())
            throw CheckpointError("checkpoint: '" + name + "' has shape " + shape_string(r.dims) + ", expected " +
                                  shape_string(out.shape()));
        std::memcpy(out.data(), r.data.data(), r.data.size());
    }
    template <typename T>
    std::vector<T> get_values(const std::string& name) const {
        const auto& r = typed(name, dtype_of<T>());
        std::vector<T> v(r.data.size() / sizeof(T));
        std::memcpy(v.data(), r.data.data(), r.data.size());
        return v;
    }
    template <typename T>
    T get_scalar(const std::string& name) const {
        const auto& r = typed(name, dtype_of<T>());
        if (r.data.size() != sizeof(T)) throw CheckpointError("checkpoint: '" + name + "' is not a scalar");
        T v;
        std::memcpy(&v, r.data.data(), sizeof(T));
        return v;
    }
    std::string get_text(const std::string& name) const {
        const auto& r = typed(name, DType::text);
        return std::string(r.data.begin(), r.data.end());
    }

    const std::vector<Record>& records() const { return records_; }

    std::vector<unsigned char> serialize() const {
        std::vector<unsigned char> body;
        for (const auto& r : records_) {
            append<std::uint32_t>(body, std::uint32_t(r.name.size()));
            body.insert(body.end(), r.name.begin(), r.name.end());
            append<std::uint8_t>(body, std::uint8_t(r.dtype));
            append<std::uint8_t>(body, std::uint8_t(r.dims.size()));
            for (auto d : r.dims) append<std::uint64_t>(body, d);
            body.insert(body.end(), r.data.begin(), r.data.end());
        }
        std::vector<unsigned char> out{'R', 'G', 'C', 'K'};
        append<std::uint32_t>(out, version);
        append<std::uint32_t>(out, crc(body));
        append<std::uint64_t>(out, body.size());
        out.insert(out.end(), body.begin(), body.end());
        return out;
    }

    /// Validates magic, version, length and checksum before decoding anything.
    static Checkpoint parse(const std::vector<unsigned char>& bytes, const std::string& what = "checkpoint") {
        if (bytes.size() < 20 || std::memcmp(bytes.data(), "RGCK", 4) != 0)
            throw CheckpointError(what + ": not a checkpoint file");
        std::size_t pos = 4;
        const auto ver = read<std::uint32_t>(bytes, pos, what);
        if (ver != version)
            throw CheckpointError(what + ": version " + std::to_string(ver) + " unsupported (expected " +
                                  std::to_string(version) + ")");
        const auto sum = read<std::uint32_t>(bytes, pos, what);
        const auto len = read<std::uint64_t>(bytes, pos, what);
        if (bytes.size() - pos != len) throw CheckpointError(what + ": truncated or padded file");
        std::vector<unsigned char> body(bytes.begin() + long(pos), bytes.end());
        if (crc(body) != sum) throw CheckpointError(what + ": checksum mismatch");

        Checkpoint c;
        std::size_t p = 0;
        while (p < body.size()) {
            const auto nlen = read<std::uint32_t>(body, p, what);
            need(body, p, nlen, what);
            std::string name(body.begin() + long(p), body.begin() + long(p + nlen));
            p += nlen;
            const auto dt = read<std::uint8_t>(body, p, what);
            if (dt > std::uint8_t(DType::text)) throw CheckpointError(what + ": bad dtype in '" + name + "'");
            const auto rank = read<std::uint8_t>(body, p, what);
            Shape dims;
            for (unsigned i = 0; i < rank; ++i) dims.push_back(read<std::uint64_t>(body, p, what));
            const std::size_t n = (rank ? shape_size(dims) : 1) * element_size(DType(dt));
            need(body, p, n, what);
            c.add(name, DType(dt), dims, body.data() + p, n);
            p += n;
        }
        return c;
    }

    void save(const std::string& path) const {
        const auto bytes = serialize();
        const std::string tmp = path + ".tmp";
        {
            std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
            if (!f) throw CheckpointError("cannot write " + tmp);
            f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
            if (!f) throw CheckpointError("write failed for " + tmp);
        }
        std::filesystem::rename(tmp, path);
    }

    static Checkpoint load(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw CheckpointError("cannot open checkpoint " + path);
        std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
        return parse(bytes, path);
    }

private:
    static std::size_t element_size(DType d) {
        switch (d) {
        case DType::f32: return 4;
        case DType::text: return 1;
        default: return 8;
        }
    }

    void add(const std::string& name, DType dt, const Shape& dims, const void* src, std::size_t n) {
        if (index_.count(name)) throw CheckpointError("checkpoint: duplicate record '" + name + "'");
        Record r{name, dt, dims, std::vector<unsigned char>(n)};
        if (n) std::memcpy(r.data.data(), src, n);
        index_[name] = records_.size();
        records_.push_back(std::move(r));
    }

    const Record& typed(const std::string& name, DType dt) const {
        const auto& r = record(name);
        if (r.dtype != dt) throw CheckpointError("checkpoint: '" + name + "' has a different dtype");
        return r;
    }

    template <typename U>
    static void append(std::vector<unsigned char>& out, U v) {
        unsigned char b[sizeof(U)];
        std::memcpy(b, &v, sizeof(U));
        out.insert(out.end(), b, b + sizeof(U));
    }
    static void need(const std::vector<unsigned char>& b, std::size_t pos, std::size_t n, const std::string& what) {
        if (pos + n > b.size()) throw CheckpointError(what + ": truncated record");
    }
    template <typename U>
    static U read(const std::vector<unsigned char>& b, std::size_t& pos, const std::string& what) {
        need(b, pos, sizeof(U), what);
        U v;
        std::memcpy(&v, b.data() + pos, sizeof(U));
        pos += sizeof(U);
        return v;
    }
    static std::uint32_t crc(const std::vector<unsigned char>& body) {
        uLong c = crc32(0L, Z_NULL, 0);
        for (std::size_t off = 0; off < body.size(); off += 1u << 30) {
            const auto n = std::min<std::size_t>(body.size() - off, 1u << 30);
            c = crc32(c, body.data() + off, uInt(n));
        }
        return std::uint32_t(c);
    }

    std::vector<Record> records_;
    std::map<std::string, std::size_t> index_;
};

} // namespace grevnet
