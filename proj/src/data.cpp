#include "voxadv/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "json.hpp"
#include "voxadv/error.hpp"
#include "voxadv/fusion.hpp"

namespace voxadv {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'V', 'X', 'V', 'L'};
constexpr std::uint8_t kDtypeF32 = 0;
constexpr std::uint8_t kDtypeU8 = 1;

class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const char*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    [[nodiscard]] const std::string& str() const { return buf_; }

private:
    std::string buf_;
};

class Reader {
public:
    Reader(std::string data, std::string what) : data_(std::move(data)), what_(std::move(what)) {}
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) throw IoError(what_ + ": truncated volume file");
    }
    void bytes(void* p, std::size_t n) {
        need(n);
        std::memcpy(p, data_.data() + pos_, n);
        pos_ += n;
    }
    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(data_[pos_++]);
    }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }
    [[nodiscard]] bool done() const { return pos_ == data_.size(); }

private:
    std::string data_;
    std::string what_;
    std::size_t pos_ = 0;
};

void write_header(Writer& w, const Extent3& e, const Spacing& s, std::uint8_t dtype) {
    w.bytes(kMagic, 4);
    w.u32(kVolumeFormatVersion);
    w.u32(static_cast<std::uint32_t>(e.h));
    w.u32(static_cast<std::uint32_t>(e.w));
    w.u32(static_cast<std::uint32_t>(e.d));
    w.f64(s.h);
    w.f64(s.w);
    w.f64(s.d);
    w.u8(dtype);
}

struct Header {
    Extent3 extent;
    Spacing spacing;
    std::uint8_t dtype;
};

Header read_header(Reader& r, const std::string& what) {
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw IoError(what + ": not a volume file (bad magic)");
    const std::uint32_t version = r.u32();
    if (version != kVolumeFormatVersion)
        throw IoError(what + ": unsupported volume format version " + std::to_string(version));
    Header h{};
    const std::uint32_t dims[3] = {r.u32(), r.u32(), r.u32()};
    for (auto d : dims)
        if (d == 0 || d > (1u << 16)) throw IoError(what + ": implausible dimension " + std::to_string(d));
    h.extent = {static_cast<int>(dims[0]), static_cast<int>(dims[1]), static_cast<int>(dims[2])};
    h.spacing = {r.f64(), r.f64(), r.f64()};
    h.dtype = r.u8();
    if (h.dtype != kDtypeF32 && h.dtype != kDtypeU8) throw IoError(what + ": unknown element type");
    return h;
}

void write_file(const fs::path& path, const std::string& bytes) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

void write_volume(const fs::path& path, const Volume& v) {
    Writer w;
    write_header(w, v.extent(), v.spacing, kDtypeF32);
    for (float x : v.voxels.values()) w.f32(x);
    write_file(path, w.str());
}

Volume read_volume(const fs::path& path) {
    const std::string what = path.string();
    Reader r(read_file(path), what);
    const Header h = read_header(r, what);
    if (h.dtype != kDtypeF32) throw IoError(what + ": expected an intensity volume");
    Volume v(h.extent, h.spacing);
    r.need(h.extent.voxels() * 4);
    for (float& x : v.voxels.values()) x = r.f32();
    if (!r.done()) throw IoError(what + ": trailing bytes");
    return v;
}

void write_mask(const fs::path& path, const LabelMask& m, const Spacing& spacing) {
    m.validate();
    Writer w;
    write_header(w, m.extent, spacing, kDtypeU8);
    w.bytes(m.labels.data(), m.labels.size());
    write_file(path, w.str());
}

LabelMask read_mask(const fs::path& path, int num_classes) {
    const std::string what = path.string();
    Reader r(read_file(path), what);
    const Header h = read_header(r, what);
    if (h.dtype != kDtypeU8) throw IoError(what + ": expected a label volume");
    LabelMask m(h.extent, num_classes);
    r.bytes(m.labels.data(), m.labels.size());
    if (!r.done()) throw IoError(what + ": trailing bytes");
    m.validate();
    return m;
}

std::string to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::labeled: return "labeled";
        case Split::unlabeled: return "unlabeled";
        case Split::test: return "test";
    }
    return "?";
}

Split parse_split(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "labeled") return Split::labeled;
    if (s == "unlabeled") return Split::unlabeled;
    if (s == "test") return Split::test;
    throw ConfigError("unknown split '" + s + "'");
}

std::vector<const CaseEntry*> DatasetManifest::with_split(Split s) const {
    std::vector<const CaseEntry*> out;
    for (const auto& c : cases)
        if (c.split == s) out.push_back(&c);
    return out;
}

void DatasetManifest::validate() const {
    if (num_classes < 2) throw DomainError("manifest num_classes must be >= 2");
    std::set<std::string> ids;
    for (const auto& c : cases) {
        if (!ids.insert(c.id).second) throw DomainError("duplicate case id '" + c.id + "'");
        if ((c.split == Split::labeled || c.split == Split::test) && !c.mask)
            throw DomainError("case '" + c.id + "' is " + to_string(c.split) + " but has no mask");
    }
}

void save_manifest(const fs::path& path, const DatasetManifest& m) {
    m.validate();
    nlohmann::ordered_json j;
    j["format"] = "voxadv-dataset";
    j["version"] = 1;
    j["num_classes"] = m.num_classes;
    j["extent"] = {m.extent.h, m.extent.w, m.extent.d};
    j["generation_seed"] = m.generation_seed ? nlohmann::ordered_json(*m.generation_seed) : nullptr;
    j["labeled_fraction"] = m.labeled_fraction ? nlohmann::ordered_json(*m.labeled_fraction) : nullptr;
    j["split_seed"] = m.split_seed ? nlohmann::ordered_json(*m.split_seed) : nullptr;
    auto& cases = j["cases"] = nlohmann::ordered_json::array();
    for (const auto& c : m.cases) {
        nlohmann::ordered_json e;
        e["id"] = c.id;
        e["volume"] = c.volume;
        e["mask"] = c.mask ? nlohmann::ordered_json(*c.mask) : nullptr;
        e["split"] = to_string(c.split);
        cases.push_back(std::move(e));
    }
    const fs::path tmp = path.string() + ".tmp";
    write_file(tmp, j.dump(2) + "\n");
    fs::rename(tmp, path);
}

DatasetManifest load_manifest(const fs::path& path) {
    DatasetManifest m;
    try {
        const auto j = nlohmann::json::parse(read_file(path));
        if (j.value("format", "") != "voxadv-dataset") throw IoError(path.string() + ": not a dataset manifest");
        if (j.at("version").get<int>() != 1) throw IoError(path.string() + ": unsupported manifest version");
        m.num_classes = j.at("num_classes").get<int>();
        const auto& e = j.at("extent");
        m.extent = {e.at(0).get<int>(), e.at(1).get<int>(), e.at(2).get<int>()};
        if (!j.at("generation_seed").is_null()) m.generation_seed = j["generation_seed"].get<std::uint64_t>();
        if (!j.at("labeled_fraction").is_null()) m.labeled_fraction = j["labeled_fraction"].get<double>();
        if (!j.at("split_seed").is_null()) m.split_seed = j["split_seed"].get<std::uint64_t>();
        for (const auto& c : j.at("cases")) {
            CaseEntry ce;
            ce.id = c.at("id").get<std::string>();
            ce.volume = c.at("volume").get<std::string>();
            if (!c.at("mask").is_null()) ce.mask = c["mask"].get<std::string>();
            ce.split = parse_split(c.at("split").get<std::string>());
            m.cases.push_back(std::move(ce));
        }
    } catch (const nlohmann::json::exception& ex) {
        throw IoError(path.string() + ": malformed manifest: " + ex.what());
    }
    m.root = path.parent_path();
    m.validate();
    return m;
}

SyntheticCase generate_case(std::uint64_t seed, int case_index, int size, int num_classes, const SyntheticParams& p) {
    if (size <= 0 || size % 8 != 0) throw DomainError("synthetic size must be a positive multiple of 8 (got " + std::to_string(size) + ")");
    if (num_classes < 2 || num_classes > 255) throw DomainError("synthetic num_classes must be in [2, 255]");
    Rng rng(derive_seed(seed, {0x5157ULL, static_cast<std::uint64_t>(case_index)}));
    const Extent3 e{size, size, size};
    const int fg = num_classes - 1;
    const double scale = std::cbrt(1.0 / fg);
    const double offset = rng.uniform(-p.case_offset, p.case_offset);
    const double contrast = rng.uniform(p.contrast_low, p.contrast_high);

    struct Ellipsoid {
        double c[3];
        double r[3];
    };
    std::vector<Ellipsoid> shapes;
    const double min_sep = 0.25 * size * scale;
    for (int k = 0; k < fg; ++k) {
        Ellipsoid el{};
        for (int attempt = 0;; ++attempt) {
            for (int a = 0; a < 3; ++a) el.c[a] = rng.uniform(0.3, 0.7) * size;
            bool ok = true;
            for (const auto& o : shapes) {
                const double dy = el.c[0] - o.c[0], dx = el.c[1] - o.c[1], dz = el.c[2] - o.c[2];
                if (std::sqrt(dy * dy + dx * dx + dz * dz) < min_sep) ok = false;
            }
            if (ok || attempt > 1000) break;
        }
        for (int a = 0; a < 3; ++a) el.r[a] = rng.uniform(p.radius_low, p.radius_high) * size * scale;
        shapes.push_back(el);
    }

    SyntheticCase out{Volume(e, Spacing{}, 0.0f), LabelMask(e, num_classes, 0)};
    std::vector<double> intensity(e.voxels(), p.background_mean + offset);
    for (int k = 0; k < fg; ++k) {
        const auto& el = shapes[static_cast<std::size_t>(k)];
        const double mean = p.background_mean + offset + (k + 1) * contrast;
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x)
                for (int z = 0; z < size; ++z) {
                    const double u = (y + 0.5 - el.c[0]) / el.r[0];
                    const double v = (x + 0.5 - el.c[1]) / el.r[1];
                    const double w = (z + 0.5 - el.c[2]) / el.r[2];
                    const double rho = std::sqrt(u * u + v * v + w * w);
                    const std::size_t i = e.index(y, x, z);
                    const double occ = 1.0 / (1.0 + std::exp(-p.edge_sharpness * (1.0 - rho)));
                    intensity[i] = intensity[i] * (1.0 - occ) + mean * occ;
                    if (rho <= 1.0) out.mask.labels[i] = static_cast<std::uint8_t>(k + 1);
                }
    }
    auto vals = out.volume.voxels.values();
    for (std::size_t i = 0; i < vals.size(); ++i)
        vals[i] = static_cast<float>(std::clamp(intensity[i] + p.noise_sigma * rng.normal(), 0.0, 1.0));
    return out;
}

DatasetManifest generate_synthetic(const fs::path& dir, std::uint64_t seed, int n_train, int n_test, int size,
                                   int num_classes, const SyntheticParams& p) {
    if (n_train < 0 || n_test < 0 || n_train + n_test == 0) throw DomainError("synthetic dataset needs at least one case");
    fs::create_directories(dir);
    DatasetManifest m;
    m.num_classes = num_classes;
    m.extent = {size, size, size};
    m.generation_seed = seed;
    m.root = dir;
    const int n = n_train + n_test;
    for (int i = 0; i < n; ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "case_%03d", i);
        const SyntheticCase c = generate_case(seed, i, size, num_classes, p);
        CaseEntry ce{id, std::string(id) + "_img.vxv", std::string(id) + "_seg.vxv", i < n_train ? Split::train : Split::test};
        write_volume(dir / ce.volume, c.volume);
        write_mask(dir / *ce.mask, c.mask, c.volume.spacing);
        m.cases.push_back(std::move(ce));
    }
    save_manifest(dir / kManifestName, m);
    return m;
}

Volume normalize_unit_range(const Volume& v) {
    v.validate();
    const auto vals = v.voxels.values();
    const double n = static_cast<double>(vals.size());
    double mean = 0.0;
    for (float x : vals) mean += x;
    mean /= n;
    double var = 0.0;
    for (float x : vals) var += (x - mean) * (x - mean);
    var /= n;
    Volume out = v;
    auto o = out.voxels.values();
    if (!(var > 0.0)) {
        std::fill(o.begin(), o.end(), 0.5f);
        return out;
    }
    const double sd = std::sqrt(var);
    std::vector<double> z(vals.size());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = (vals[i] - mean) / sd;
    const auto [lo, hi] = std::minmax_element(z.begin(), z.end());
    const double zlo = *lo, range = *hi - *lo;
    if (!(range > 0.0)) {
        std::fill(o.begin(), o.end(), 0.5f);
        return out;
    }
    for (std::size_t i = 0; i < z.size(); ++i) o[i] = static_cast<float>((z[i] - zlo) / range);
    return out;
}

Volume resample_trilinear(const Volume& v, const Extent3& target) {
    if (v.extent() == target) return v;
    const Extent3& e = v.extent();
    Volume out;
    out.voxels = trilinear_resize(v.voxels, target);
    out.spacing = {v.spacing.h * e.h / target.h, v.spacing.w * e.w / target.w, v.spacing.d * e.d / target.d};
    return out;
}

LabelMask resample_nearest(const LabelMask& m, const Extent3& target) {
    if (m.extent == target) return m;
    LabelMask out(target, m.num_classes);
    auto src = [](int i, int n_out, int n_in) {
        const double s = (i + 0.5) * n_in / static_cast<double>(n_out) - 0.5;
        return std::clamp(static_cast<int>(std::lround(s)), 0, n_in - 1);
    };
    for (int y = 0; y < target.h; ++y) {
        const int sy = src(y, target.h, m.extent.h);
        for (int x = 0; x < target.w; ++x) {
            const int sx = src(x, target.w, m.extent.w);
            for (int z = 0; z < target.d; ++z) {
                const std::size_t si = m.extent.index(sy, sx, src(z, target.d, m.extent.d));
                const std::size_t di = target.index(y, x, z);
                out.labels[di] = m.labels[si];
                out.valid[di] = m.valid[si];
            }
        }
    }
    return out;
}

Volume preprocess(const Volume& v, Preset preset) {
    v.validate();
    switch (preset) {
        case Preset::synthetic: return v;
        case Preset::la: return normalize_unit_range(v);
        case Preset::mo: {
            Volume w = v;
            for (float& x : w.voxels.values()) x = std::clamp(x, -200.0f, 250.0f);
            return normalize_unit_range(resample_trilinear(w, Extent3{128, 128, 64}));
        }
    }
    return v;
}

DatasetManifest make_split(const DatasetManifest& m, double labeled_fraction, std::uint64_t seed,
                           std::optional<int> labeled_count) {
    if (!(labeled_fraction > 0.0 && labeled_fraction <= 1.0))
        throw DomainError("labeled fraction must be in (0, 1] (got " + std::to_string(labeled_fraction) + ")");
    DatasetManifest out = m;
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < out.cases.size(); ++i)
        if (out.cases[i].split != Split::test) pool.push_back(i);
    Rng rng(derive_seed(seed, {0x5b17ULL}));
    for (std::size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[rng.index(i)]);
    const std::size_t n = pool.size();
    std::size_t n_labeled = static_cast<std::size_t>(std::ceil(labeled_fraction * static_cast<double>(n) - 1e-9));
    if (labeled_count) {
        if (*labeled_count < 0 || static_cast<std::size_t>(*labeled_count) > n)
            throw DomainError("labeled count out of range");
        n_labeled = static_cast<std::size_t>(*labeled_count);
    }
    for (std::size_t k = 0; k < n; ++k) out.cases[pool[k]].split = k < n_labeled ? Split::labeled : Split::unlabeled;
    out.labeled_fraction = labeled_fraction;
    out.split_seed = seed;
    out.validate();
    return out;
}

Patch augment_patch(const Volume& v, const LabelMask* mask, const Extent3& patch, bool flip, Rng& rng) {
    const Extent3& e = v.extent();
    if (patch.h > e.h || patch.w > e.w || patch.d > e.d)
        throw ShapeError("patch " + to_string(patch) + " larger than volume " + to_string(e));
    if (mask && !(mask->extent == e)) throw ShapeError("mask extent differs from volume extent");
    const int oy = static_cast<int>(rng.index(static_cast<std::uint64_t>(e.h - patch.h + 1)));
    const int ox = static_cast<int>(rng.index(static_cast<std::uint64_t>(e.w - patch.w + 1)));
    const int oz = static_cast<int>(rng.index(static_cast<std::uint64_t>(e.d - patch.d + 1)));
    bool fy = false, fx = false, fz = false;
    if (flip) {
        fy = rng.uniform() < 0.5;
        fx = rng.uniform() < 0.5;
        fz = rng.uniform() < 0.5;
    }
    Patch out{Volume(patch, v.spacing), std::nullopt};
    if (mask) out.mask = LabelMask(patch, mask->num_classes);
    for (int y = 0; y < patch.h; ++y)
        for (int x = 0; x < patch.w; ++x)
            for (int z = 0; z < patch.d; ++z) {
                const int sy = oy + (fy ? patch.h - 1 - y : y);
                const int sx = ox + (fx ? patch.w - 1 - x : x);
                const int sz = oz + (fz ? patch.d - 1 - z : z);
                out.volume(y, x, z) = v(sy, sx, sz);
                if (mask) {
                    const std::size_t si = e.index(sy, sx, sz), di = patch.index(y, x, z);
                    out.mask->labels[di] = mask->labels[si];
                    out.mask->valid[di] = mask->valid[si];
                }
            }
    return out;
}

}  // namespace voxadv
