#include "panoseg/ptns.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace panoseg::io {

namespace {

constexpr char kMagic[4] = {'P', 'T', 'N', 'S'};
constexpr std::size_t kFixedHeader = 7;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
           static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

DType checked_dtype(std::uint8_t code) {
    if (code > 2) throw FormatError("ptns: unknown dtype code " + std::to_string(code));
    return static_cast<DType>(code);
}

}  // namespace

std::size_t dtype_size(DType t) {
    switch (t) {
        case DType::f32: return 4;
        case DType::u16: return 2;
        case DType::u8: return 1;
    }
    throw FormatError("ptns: bad dtype");
}

std::string to_string(DType t) {
    switch (t) {
        case DType::f32: return "f32";
        case DType::u16: return "u16";
        case DType::u8: return "u8";
    }
    return "?";
}

std::size_t RawTensor::numel() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

std::vector<double> RawTensor::values() const {
    const std::size_t n = numel();
    std::vector<double> out(n);
    const std::uint8_t* p = payload.data();
    for (std::size_t i = 0; i < n; ++i) {
        switch (dtype) {
            case DType::f32: out[i] = static_cast<double>(std::bit_cast<float>(get_u32(p + 4 * i))); break;
            case DType::u16: out[i] = static_cast<double>(p[2 * i] | (p[2 * i + 1] << 8)); break;
            case DType::u8: out[i] = static_cast<double>(p[i]); break;
        }
    }
    return out;
}

nn::Tensor RawTensor::to_tensor() const {
    return nn::Tensor::from_data(nn::Shape(dims.begin(), dims.end()), values());
}

Grid<std::int32_t> RawTensor::to_grid() const {
    if (dims.size() != 2 || dtype == DType::f32) throw FormatError("ptns: expected a 2-D integer tensor");
    Grid<std::int32_t> g(dims[0], dims[1]);
    const auto v = values();
    for (std::size_t i = 0; i < v.size(); ++i) g.values[i] = static_cast<std::int32_t>(v[i]);
    return g;
}

Mask RawTensor::to_mask() const {
    const auto g = to_grid();
    Mask m(g.height, g.width);
    for (std::size_t i = 0; i < g.size(); ++i) m.values[i] = g.values[i] != 0;
    return m;
}

RawTensor make_raw(DType dtype, const nn::Shape& dims, const std::vector<double>& values) {
    if (dims.empty() || dims.size() > 255) throw FormatError("ptns: rank must be in [1,255]");
    RawTensor t;
    t.dtype = dtype;
    for (auto d : dims) {
        if (d == 0 || d > 0xffffffffu) throw FormatError("ptns: extent out of range");
        t.dims.push_back(static_cast<std::uint32_t>(d));
    }
    if (t.numel() != values.size()) throw FormatError("ptns: value count does not match dims");
    t.payload.reserve(values.size() * dtype_size(dtype));
    for (double v : values) {
        switch (dtype) {
            case DType::f32: {
                const auto f = static_cast<float>(v);
                if (!std::isfinite(f)) throw FormatError("ptns: non-finite f32 value");
                const auto bits = std::bit_cast<std::uint32_t>(f);
                for (int i = 0; i < 4; ++i) t.payload.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
                break;
            }
            case DType::u16:
            case DType::u8: {
                const double limit = dtype == DType::u16 ? 65535.0 : 255.0;
                if (!(v >= 0.0 && v <= limit) || v != std::floor(v)) {
                    throw FormatError("ptns: value does not fit " + to_string(dtype));
                }
                const auto u = static_cast<std::uint32_t>(v);
                t.payload.push_back(static_cast<std::uint8_t>(u & 0xff));
                if (dtype == DType::u16) t.payload.push_back(static_cast<std::uint8_t>(u >> 8));
                break;
            }
        }
    }
    return t;
}

std::vector<std::uint8_t> encode(const RawTensor& t) {
    if (t.payload.size() != t.numel() * dtype_size(t.dtype)) throw FormatError("ptns: payload size does not match dims");
    std::vector<std::uint8_t> out(kMagic, kMagic + 4);
    out.push_back(kPtnsVersion);
    out.push_back(static_cast<std::uint8_t>(t.dtype));
    out.push_back(static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims) put_u32(out, d);
    out.insert(out.end(), t.payload.begin(), t.payload.end());
    return out;
}

RawTensor decode(const std::uint8_t* data, std::size_t size, std::size_t* consumed) {
    if (size < 4) throw TruncatedError("ptns: file shorter than its magic");
    if (std::memcmp(data, kMagic, 4) != 0) throw BadMagicError("ptns: bad magic");
    if (size < kFixedHeader) throw TruncatedError("ptns: truncated header");
    if (data[4] != kPtnsVersion) throw BadVersionError("ptns: unsupported version " + std::to_string(data[4]));
    RawTensor t;
    t.dtype = checked_dtype(data[5]);
    const std::size_t ndim = data[6];
    if (ndim == 0) throw FormatError("ptns: rank 0");
    if (size < kFixedHeader + 4 * ndim) throw TruncatedError("ptns: truncated dims");
    for (std::size_t i = 0; i < ndim; ++i) {
        const auto d = get_u32(data + kFixedHeader + 4 * i);
        if (d == 0) throw FormatError("ptns: zero extent");
        t.dims.push_back(d);
    }
    const std::size_t header = kFixedHeader + 4 * ndim;
    const std::size_t bytes = t.numel() * dtype_size(t.dtype);
    if (size - header < bytes) throw TruncatedError("ptns: truncated payload");
    t.payload.assign(data + header, data + header + bytes);
    if (consumed) *consumed = header + bytes;
    return t;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void write_raw(const std::filesystem::path& path, const RawTensor& t) { write_file_atomic(path, encode(t)); }

RawTensor read_raw(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    return decode(bytes.data(), bytes.size());
}

void write_tensor(const std::filesystem::path& path, const nn::Tensor& t, DType dtype) {
    write_raw(path, make_raw(dtype, t.shape(), std::vector<double>(t.data().begin(), t.data().end())));
}

void write_tensor(const std::filesystem::path& path, const Grid<std::int32_t>& g, DType dtype) {
    write_raw(path, make_raw(dtype, {g.height, g.width}, std::vector<double>(g.values.begin(), g.values.end())));
}

void write_tensor(const std::filesystem::path& path, const Mask& m) {
    write_raw(path, make_raw(DType::u8, {m.height, m.width}, std::vector<double>(m.values.begin(), m.values.end())));
}

nn::Tensor read_tensor(const std::filesystem::path& path) { return read_raw(path).to_tensor(); }

Grid<std::int32_t> read_grid(const std::filesystem::path& path) { return read_raw(path).to_grid(); }

}  // namespace panoseg::io
