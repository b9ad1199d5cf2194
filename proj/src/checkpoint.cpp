#include "panoseg/checkpoint.hpp"

#include <algorithm>
#include <cstring>

#include "panoseg/ptns.hpp"

namespace panoseg::io {

namespace {

constexpr char kMagic[4] = {'P', 'C', 'K', 'P'};
constexpr std::uint8_t kVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& b, std::size_t& pos) {
    if (pos + 4 > b.size()) throw TruncatedError("checkpoint: truncated");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[pos + i]) << (8 * i);
    pos += 4;
    return v;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const nn::NamedParams& params) {
    std::vector<std::uint8_t> out(kMagic, kMagic + 4);
    out.push_back(kVersion);
    put_u32(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& [name, t] : params) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        const auto rec = encode(make_raw(DType::f32, t.shape(), {t.data().begin(), t.data().end()}));
        out.insert(out.end(), rec.begin(), rec.end());
    }
    return out;
}

void save_checkpoint(const std::filesystem::path& path, const nn::NamedParams& params) {
    write_file_atomic(path, encode_checkpoint(params));
}

void load_checkpoint(const std::filesystem::path& path, const nn::NamedParams& params) {
    const auto b = read_file(path);
    if (b.size() < 5 || std::memcmp(b.data(), kMagic, 4) != 0) throw BadMagicError("checkpoint: bad magic");
    if (b[4] != kVersion) throw BadVersionError("checkpoint: unsupported version");
    std::size_t pos = 5;
    const auto count = get_u32(b, pos);
    if (count != params.size()) {
        throw CheckpointMismatch("checkpoint holds " + std::to_string(count) + " parameters, model has " +
                                 std::to_string(params.size()));
    }
    for (const auto& [name, t] : params) {
        const auto len = get_u32(b, pos);
        if (pos + len > b.size()) throw TruncatedError("checkpoint: truncated name");
        const std::string stored(b.begin() + static_cast<std::ptrdiff_t>(pos), b.begin() + static_cast<std::ptrdiff_t>(pos + len));
        pos += len;
        if (stored != name) throw CheckpointMismatch("checkpoint parameter '" + stored + "' where model expects '" + name + "'");
        std::size_t used = 0;
        const auto raw = decode(b.data() + pos, b.size() - pos, &used);
        pos += used;
        const nn::Shape shape(raw.dims.begin(), raw.dims.end());
        if (shape != t.shape()) {
            throw CheckpointMismatch("checkpoint shape " + nn::to_string(shape) + " for '" + name + "', model has " +
                                     nn::to_string(t.shape()));
        }
        const auto values = raw.values();
        auto dst = const_cast<nn::Tensor&>(t).data_mut();
        std::copy(values.begin(), values.end(), dst.begin());
    }
    if (pos != b.size()) throw CheckpointMismatch("checkpoint has trailing bytes");
}

}  // namespace panoseg::io
