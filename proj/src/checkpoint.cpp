#include "voxadv/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "voxadv/error.hpp"

namespace voxadv {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename U>
void put_le(std::vector<unsigned char>& out, U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

template <typename U>
U get_le(const unsigned char* p) {
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
    return v;
}

template <typename T>
constexpr EntryType type_of() {
    if constexpr (std::is_same_v<T, float>) return EntryType::f32;
    else if constexpr (std::is_same_v<T, double>) return EntryType::f64;
    else return EntryType::i64;
}

template <typename T>
using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;

class Reader {
public:
    Reader(const unsigned char* data, std::size_t size) : p_(data), end_(data + size) {}
    template <typename U>
    U read() {
        need(sizeof(U));
        U v = get_le<U>(p_);
        p_ += sizeof(U);
        return v;
    }
    const unsigned char* take(std::size_t n) {
        need(n);
        const unsigned char* r = p_;
        p_ += n;
        return r;
    }
    [[nodiscard]] bool done() const { return p_ == end_; }

private:
    void need(std::size_t n) const {
        if (static_cast<std::size_t>(end_ - p_) < n) throw IoError("checkpoint is truncated");
    }
    const unsigned char* p_;
    const unsigned char* end_;
};

std::size_t element_size(EntryType t) { return t == EntryType::f32 ? 4 : t == EntryType::text ? 1 : 8; }

}  // namespace

void Checkpoint::put_text(const std::string& name, const std::string& value) {
    Entry e{EntryType::text, {value.size()}, std::vector<unsigned char>(value.begin(), value.end())};
    entries_[name] = std::move(e);
}

void Checkpoint::put_int(const std::string& name, std::int64_t value) {
    put_array<std::int64_t>(name, {1}, {value});
}

template <typename T>
void Checkpoint::put_array(const std::string& name, const std::vector<std::uint64_t>& dims, const std::vector<T>& values) {
    std::uint64_t n = 1;
    for (auto d : dims) n *= d;
    if (n != values.size()) throw ShapeError("checkpoint entry '" + name + "' dims do not match value count");
    Entry e{type_of<T>(), dims, {}};
    e.payload.reserve(values.size() * sizeof(T));
    for (T v : values) put_le<Bits<T>>(e.payload, std::bit_cast<Bits<T>>(v));
    entries_[name] = std::move(e);
}

template <typename T>
void Checkpoint::put_params(const std::string& ns, const ParamSet<T>& ps) {
    for (const auto& p : ps) {
        std::vector<std::uint64_t> dims(p.shape.begin(), p.shape.end());
        put_array<T>(ns + "/" + p.name, dims, p.values);
    }
}

const Checkpoint::Entry& Checkpoint::require(const std::string& name, EntryType type) const {
    const auto it = entries_.find(name);
    if (it == entries_.end()) throw IoError("checkpoint has no entry '" + name + "'");
    if (it->second.type != type) throw IoError("checkpoint entry '" + name + "' has an unexpected element type");
    return it->second;
}

std::string Checkpoint::get_text(const std::string& name) const {
    const Entry& e = require(name, EntryType::text);
    return std::string(e.payload.begin(), e.payload.end());
}

std::int64_t Checkpoint::get_int(const std::string& name) const {
    const auto v = get_array<std::int64_t>(name);
    if (v.size() != 1) throw IoError("checkpoint entry '" + name + "' is not a scalar");
    return v[0];
}

template <typename T>
std::vector<T> Checkpoint::get_array(const std::string& name, std::vector<std::uint64_t>* dims) const {
    const Entry& e = require(name, type_of<T>());
    std::vector<T> out(e.payload.size() / sizeof(T));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::bit_cast<T>(get_le<Bits<T>>(e.payload.data() + i * sizeof(T)));
    if (dims != nullptr) *dims = e.dims;
    return out;
}

template <typename T>
void Checkpoint::get_params(const std::string& ns, ParamSet<T>& ps) const {
    for (auto& p : ps) {
        std::vector<std::uint64_t> dims;
        auto values = get_array<T>(ns + "/" + p.name, &dims);
        if (!std::equal(dims.begin(), dims.end(), p.shape.begin(), p.shape.end())) {
            throw IoError("checkpoint entry '" + ns + "/" + p.name + "' has a different shape");
        }
        p.values = std::move(values);
    }
}

std::vector<unsigned char> Checkpoint::serialize() const {
    std::vector<unsigned char> out{'V', 'X', 'C', 'K'};
    put_le<std::uint32_t>(out, kCheckpointVersion);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(entries_.size()));
    for (const auto& [name, e] : entries_) {
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        out.push_back(static_cast<unsigned char>(e.type));
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.dims.size()));
        for (auto d : e.dims) put_le<std::uint64_t>(out, d);
        out.insert(out.end(), e.payload.begin(), e.payload.end());
    }
    const auto crc = static_cast<std::uint32_t>(crc32(0L, out.data(), static_cast<uInt>(out.size())));
    put_le<std::uint32_t>(out, crc);
    return out;
}

Checkpoint Checkpoint::parse(const std::vector<unsigned char>& bytes) {
    if (bytes.size() < 16 || std::memcmp(bytes.data(), "VXCK", 4) != 0) throw IoError("not a checkpoint file (bad magic)");
    const std::size_t body = bytes.size() - 4;
    const auto stored = get_le<std::uint32_t>(bytes.data() + body);
    const auto actual = static_cast<std::uint32_t>(crc32(0L, bytes.data(), static_cast<uInt>(body)));
    Reader r(bytes.data() + 4, body - 4);
    const auto version = r.read<std::uint32_t>();
    if (version != kCheckpointVersion) {
        throw IoError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
    }
    if (stored != actual) throw IoError("checkpoint checksum mismatch (file truncated or corrupted)");
    Checkpoint ck;
    const auto count = r.read<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto len = r.read<std::uint32_t>();
        const unsigned char* np = r.take(len);
        std::string name(reinterpret_cast<const char*>(np), len);
        Entry e;
        const auto type = r.read<std::uint8_t>();
        if (type > 3) throw IoError("checkpoint entry '" + name + "' has unknown type");
        e.type = static_cast<EntryType>(type);
        const auto ndim = r.read<std::uint32_t>();
        std::uint64_t n = 1;
        for (std::uint32_t d = 0; d < ndim; ++d) {
            e.dims.push_back(r.read<std::uint64_t>());
            n *= e.dims.back();
        }
        const std::size_t bytes_n = static_cast<std::size_t>(n) * element_size(e.type);
        const unsigned char* pp = r.take(bytes_n);
        e.payload.assign(pp, pp + bytes_n);
        ck.entries_[name] = std::move(e);
    }
    if (!r.done()) throw IoError("checkpoint has trailing bytes");
    return ck;
}

void Checkpoint::save(const std::filesystem::path& path) const {
    const auto bytes = serialize();
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw IoError("cannot write checkpoint " + path.string());
        f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!f) throw IoError("failed writing checkpoint " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse(bytes);
}

template void Checkpoint::put_array(const std::string&, const std::vector<std::uint64_t>&, const std::vector<float>&);
template void Checkpoint::put_array(const std::string&, const std::vector<std::uint64_t>&, const std::vector<double>&);
template void Checkpoint::put_array(const std::string&, const std::vector<std::uint64_t>&, const std::vector<std::int64_t>&);
template std::vector<float> Checkpoint::get_array(const std::string&, std::vector<std::uint64_t>*) const;
template std::vector<double> Checkpoint::get_array(const std::string&, std::vector<std::uint64_t>*) const;
template std::vector<std::int64_t> Checkpoint::get_array(const std::string&, std::vector<std::uint64_t>*) const;
template void Checkpoint::put_params(const std::string&, const ParamSet<float>&);
template void Checkpoint::put_params(const std::string&, const ParamSet<double>&);
template void Checkpoint::get_params(const std::string&, ParamSet<float>&) const;
template void Checkpoint::get_params(const std::string&, ParamSet<double>&) const;

}  // namespace voxadv
