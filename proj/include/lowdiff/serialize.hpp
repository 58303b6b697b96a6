#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "lowdiff/optimizer.hpp"
#include "lowdiff/tensor.hpp"

// Binary containers, little-endian throughout:
//   TensorFile "LDTN": magic, u32 version, u32 dtype, u32 rank, u64 dims, payload
//   Checkpoint "LDIF": magic, u32 version, u64 config digest, u64 step,
//                      u64 count, then per parameter (sorted by name):
//                      name, dtype, shape, value payload, adam step/m/v payloads

namespace lowdiff {

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

namespace io {

template <class T>
void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is, const char* what) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error(std::string("read: truncated file while reading ") + what);
    return v;
}

inline void write_str(std::ostream& os, const std::string& s) {
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_str(std::istream& is, const char* what) {
    const auto n = read_pod<std::uint32_t>(is, what);
    std::string s(n, '\0');
    is.read(s.data(), n);
    if (!is) throw std::runtime_error(std::string("read: truncated file while reading ") + what);
    return s;
}

template <class T>
void write_payload(std::ostream& os, const Tensor<T>& t) {
    os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(T)));
}

template <class T>
void read_payload(std::istream& is, Tensor<T>& t, const char* what) {
    is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(T)));
    if (is.gcount() != static_cast<std::streamsize>(t.numel() * sizeof(T)))
        throw std::runtime_error(std::string("read: truncated payload in ") + what);
}

template <class T>
void write_tensor_body(std::ostream& os, const Tensor<T>& t) {
    write_pod<std::uint32_t>(os, dtype_traits<T>::code);
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (int i = 0; i < t.rank(); ++i) write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(t.dim(i)));
    write_payload(os, t);
}

template <class T>
Tensor<T> read_tensor_body(std::istream& is, const char* what) {
    const auto code = read_pod<std::uint32_t>(is, what);
    if (code != dtype_traits<T>::code)
        throw std::runtime_error(std::string(what) + ": dtype code " + std::to_string(code) + " does not match " +
                                 dtype_traits<T>::name);
    const auto rank = read_pod<std::uint32_t>(is, what);
    if (rank > 8) throw std::runtime_error(std::string(what) + ": implausible rank " + std::to_string(rank));
    std::vector<std::int64_t> shape(rank);
    for (auto& d : shape) d = static_cast<std::int64_t>(read_pod<std::uint64_t>(is, what));
    Tensor<T> t(std::move(shape));
    read_payload(is, t, what);
    return t;
}

}  // namespace io

// --- TensorFile -------------------------------------------------------------

inline constexpr char kTensorMagic[4] = {'L', 'D', 'T', 'N'};
inline constexpr char kCheckpointMagic[4] = {'L', 'D', 'I', 'F'};
inline constexpr std::uint32_t kFormatVersion = 1;

template <class T>
void write_tensor_file(const std::string& path, const Tensor<T>& t) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("write_tensor_file: cannot open " + path);
    os.write(kTensorMagic, 4);
    io::write_pod<std::uint32_t>(os, kFormatVersion);
    io::write_tensor_body(os, t);
    if (!os) throw std::runtime_error("write_tensor_file: write failed for " + path);
}

namespace io {

inline void check_magic(std::istream& is, const char (&magic)[4], const std::string& path) {
    char got[4] = {};
    is.read(got, 4);
    if (!is || std::memcmp(got, magic, 4) != 0)
        throw std::runtime_error(path + ": bad magic, not a " + std::string(magic, 4) + " file");
    const auto version = read_pod<std::uint32_t>(is, "version");
    if (version != kFormatVersion)
        throw std::runtime_error(path + ": unsupported format version " + std::to_string(version));
}

}  // namespace io

template <class T>
Tensor<T> read_tensor_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("read_tensor_file: cannot open " + path);
    io::check_magic(is, kTensorMagic, path);
    Tensor<T> t = io::read_tensor_body<T>(is, "tensor file");
    if (is.peek() != std::char_traits<char>::eof())
        throw std::runtime_error(path + ": trailing bytes after tensor payload");
    return t;
}

// Reads either dtype and widens to double; the evaluation path is dtype-agnostic.
inline Tensor<double> read_tensor_file_any(const std::string& path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw std::runtime_error("read_tensor_file: cannot open " + path);
    io::check_magic(probe, kTensorMagic, path);
    const auto code = io::read_pod<std::uint32_t>(probe, "dtype");
    probe.close();
    if (code == dtype_traits<double>::code) return read_tensor_file<double>(path);
    if (code == dtype_traits<float>::code) {
        Tensor<float> f = read_tensor_file<float>(path);
        Tensor<double> d(f.shape());
        for (std::int64_t i = 0; i < f.numel(); ++i) d[i] = static_cast<double>(f[i]);
        return d;
    }
    throw std::runtime_error(path + ": unknown dtype code " + std::to_string(code));
}

// --- Checkpoint ---------------------------------------------------------------

template <class T>
void save_checkpoint(const std::string& path, const ParamStore<T>& params, std::uint64_t config_digest,
                     std::int64_t step) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path);
    os.write(kCheckpointMagic, 4);
    io::write_pod<std::uint32_t>(os, kFormatVersion);
    io::write_pod<std::uint64_t>(os, config_digest);
    io::write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(step));
    io::write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(params.size()));
    for (const auto& [name, slot] : params) {
        io::write_str(os, name);
        io::write_tensor_body(os, slot.value);
        io::write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(slot.step));
        io::write_payload(os, slot.m);
        io::write_payload(os, slot.v);
    }
    if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

// Loads into a store already built from the run configuration; names and
// shapes must line up. A digest mismatch is refused unless forced.
template <class T>
std::int64_t load_checkpoint(const std::string& path, ParamStore<T>& params, std::uint64_t expected_digest,
                             bool force = false) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);
    io::check_magic(is, kCheckpointMagic, path);
    const auto digest = io::read_pod<std::uint64_t>(is, "config digest");
    if (digest != expected_digest && !force)
        throw std::runtime_error(path + ": checkpoint config digest mismatch (use force to override)");
    const auto step = static_cast<std::int64_t>(io::read_pod<std::uint64_t>(is, "step"));
    const auto count = io::read_pod<std::uint64_t>(is, "param count");
    if (count != params.size())
        throw std::runtime_error(path + ": checkpoint has " + std::to_string(count) + " parameters, expected " +
                                 std::to_string(params.size()));
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::string name = io::read_str(is, "param name");
        if (!params.has(name)) throw std::runtime_error(path + ": unexpected parameter " + name);
        auto& slot = params.slot(name);
        Tensor<T> value = io::read_tensor_body<T>(is, name.c_str());
        if (!value.same_shape(slot.value))
            throw std::runtime_error(path + ": parameter " + name + " has shape " + shape_str(value.shape()) +
                                     ", expected " + shape_str(slot.value.shape()));
        slot.value = std::move(value);
        slot.step = static_cast<std::int64_t>(io::read_pod<std::uint64_t>(is, "adam step"));
        io::read_payload(is, slot.m, "adam m");
        io::read_payload(is, slot.v, "adam v");
    }
    if (is.peek() != std::char_traits<char>::eof())
        throw std::runtime_error(path + ": trailing bytes after checkpoint payload");
    return step;
}

}  // namespace lowdiff
