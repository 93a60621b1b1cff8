#pragma once

// Checkpoint container, format version 1. All integers little-endian.
//
//   magic    4 bytes  "VXCK"
//   version  u32
//   count    u32      number of entries
//   entries  count x {
//     name_len u32, name bytes (UTF-8, e.g. "student/backbone/enc1.conv")
//     dtype    u8     0 = f32, 1 = f64, 2 = i64, 3 = utf-8 string
//     ndim     u32, dims u64 x ndim    (strings: ndim = 1, dims[0] = byte length)
//     payload  prod(dims) elements, IEEE-754 / two's complement little-endian
//   }
//   crc32    u32      zlib CRC-32 of every preceding byte

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "voxadv/params.hpp"

namespace voxadv {

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class EntryType : std::uint8_t { f32 = 0, f64 = 1, i64 = 2, text = 3 };

class Checkpoint {
public:
    struct Entry {
        EntryType type = EntryType::f32;
        std::vector<std::uint64_t> dims;
        std::vector<unsigned char> payload;  // little-endian element bytes
    };

    void put_text(const std::string& name, const std::string& value);
    void put_int(const std::string& name, std::int64_t value);
    template <typename T>
    void put_array(const std::string& name, const std::vector<std::uint64_t>& dims, const std::vector<T>& values);
    /// Stores every tensor of `ps` as `<ns>/<tensor name>`.
    template <typename T>
    void put_params(const std::string& ns, const ParamSet<T>& ps);

    [[nodiscard]] bool has(const std::string& name) const { return entries_.count(name) != 0; }
    [[nodiscard]] std::string get_text(const std::string& name) const;
    [[nodiscard]] std::int64_t get_int(const std::string& name) const;
    template <typename T>
    [[nodiscard]] std::vector<T> get_array(const std::string& name, std::vector<std::uint64_t>* dims = nullptr) const;
    /// Fills an existing layout from `<ns>/...`; names, shapes and element type must match.
    template <typename T>
    void get_params(const std::string& ns, ParamSet<T>& ps) const;

    [[nodiscard]] const std::map<std::string, Entry>& entries() const { return entries_; }

    [[nodiscard]] std::vector<unsigned char> serialize() const;
    /// Throws IoError on bad magic, version mismatch, truncation or checksum failure.
    static Checkpoint parse(const std::vector<unsigned char>& bytes);

    void save(const std::filesystem::path& path) const;
    static Checkpoint load(const std::filesystem::path& path);

private:
    const Entry& require(const std::string& name, EntryType type) const;
    std::map<std::string, Entry> entries_;
};

}  // namespace voxadv
