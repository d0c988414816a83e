#include "wiseft/checkpoint.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_set>

#include <json.hpp>

#include "wiseft/errors.hpp"

namespace wiseft {

ParamLayout::ParamLayout(std::vector<LayoutEntry> entries) : entries_(std::move(entries)) {
    std::unordered_set<std::string> seen;
    std::size_t offset = 0;
    for (auto& e : entries_) {
        if (!seen.insert(e.name).second)
            throw StructuralError("duplicate layout entry name: " + e.name);
        for (std::size_t s : e.shape)
            if (s == 0) throw StructuralError("zero dimension in layout entry: " + e.name);
        e.offset = offset;
        offset += e.size();
    }
    total_length_ = offset;
}

const LayoutEntry& ParamLayout::entry(const std::string& name) const {
    for (const auto& e : entries_)
        if (e.name == name) return e;
    throw StructuralError("no layout entry named: " + name);
}

bool ParamLayout::has(const std::string& name) const {
    for (const auto& e : entries_)
        if (e.name == name) return true;
    return false;
}

bool ParamLayout::operator==(const ParamLayout& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const auto& a = entries_[i];
        const auto& b = other.entries_[i];
        if (a.name != b.name || a.shape != b.shape || a.offset != b.offset) return false;
    }
    return true;
}

void Checkpoint::validate() const {
    if (values.size() != layout.total_length())
        throw StructuralError("checkpoint value count does not match layout length");
    for (double v : values)
        if (!std::isfinite(v)) throw NumericError("checkpoint contains non-finite values");
}

double* Checkpoint::param(const std::string& name) {
    return values.data() + layout.entry(name).offset;
}

const double* Checkpoint::param(const std::string& name) const {
    return values.data() + layout.entry(name).offset;
}

Checkpoint interpolate(const Checkpoint& c0, const Checkpoint& c1, double alpha) {
    if (!(c0.layout == c1.layout))
        throw StructuralError("interpolate: checkpoint layouts differ");
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw DomainError("interpolate: alpha outside [0,1]");
    Checkpoint out;
    out.layout = c0.layout;
    out.values.resize(c0.values.size());
    for (std::size_t i = 0; i < out.values.size(); ++i)
        out.values[i] = (1.0 - alpha) * c0.values[i] + alpha * c1.values[i];
    out.meta = c0.meta;
    out.meta.tag = "interpolate(alpha=" + std::to_string(alpha) + ")";
    return out;
}

double param_distance(const Checkpoint& c0, const Checkpoint& c1) {
    if (!(c0.layout == c1.layout))
        throw StructuralError("param_distance: checkpoint layouts differ");
    double sum = 0.0;
    for (std::size_t i = 0; i < c0.values.size(); ++i) {
        const double d = c0.values[i] - c1.values[i];
        sum += d * d;
    }
    return std::sqrt(sum);
}

EmaState::EmaState(EmaVariant variant, double decay, const Checkpoint& init_ref)
    : variant_(variant), decay_(decay), layout_(init_ref.layout), ref_meta_(init_ref.meta) {
    if (!(decay >= 0.0 && decay < 1.0))
        throw DomainError("ema: decay must lie in [0,1)");
    if (variant == EmaVariant::InitBiased) {
        accumulator_ = init_ref.values;
    } else {
        accumulator_.assign(init_ref.values.size(), 0.0);
    }
}

void EmaState::update(const Checkpoint& theta_t) {
    if (theta_t.values.size() != accumulator_.size())
        throw StructuralError("ema_update: parameter length mismatch");
    for (std::size_t i = 0; i < accumulator_.size(); ++i)
        accumulator_[i] = decay_ * accumulator_[i] + (1.0 - decay_) * theta_t.values[i];
    ++step_;
}

Checkpoint EmaState::final() const {
    if (step_ == 0) throw StateError("ema_final: no updates accumulated");
    Checkpoint out;
    out.layout = layout_;
    out.meta = ref_meta_;
    out.meta.step = step_;
    if (variant_ == EmaVariant::ZeroInitDebiased) {
        const double debias = 1.0 - std::pow(decay_, static_cast<double>(step_));
        out.values.resize(accumulator_.size());
        for (std::size_t i = 0; i < accumulator_.size(); ++i)
            out.values[i] = accumulator_[i] / debias;
        out.meta.tag = "ema(debiased)";
    } else {
        out.values = accumulator_;
        out.meta.tag = "ema(init-biased)";
    }
    return out;
}

namespace {

constexpr char kMagic[4] = {'W', 'S', 'F', 'T'};
constexpr std::uint8_t kVersion = 1;

void put_u64_le(std::ostream& os, std::uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t get_u64_le(std::istream& is) {
    unsigned char buf[8];
    is.read(reinterpret_cast<char*>(buf), 8);
    if (is.gcount() != 8) throw CodecError("checkpoint file truncated in header");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
}

}  // namespace

void save(const Checkpoint& c, const std::filesystem::path& path) {
    c.validate();
    nlohmann::json header;
    header["meta"] = {{"seed", c.meta.seed}, {"step", c.meta.step}, {"tag", c.meta.tag}};
    auto& layout = header["layout"] = nlohmann::json::array();
    for (const auto& e : c.layout.entries())
        layout.push_back({{"name", e.name}, {"shape", e.shape}});
    header["total_length"] = c.layout.total_length();
    const std::string header_str = header.dump();

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw CodecError("cannot open for writing: " + path.string());
    os.write(kMagic, 4);
    os.put(static_cast<char>(kVersion));
    put_u64_le(os, header_str.size());
    os.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    static_assert(sizeof(double) == 8);
    // Raw little-endian f64; this codebase only targets little-endian hosts.
    os.write(reinterpret_cast<const char*>(c.values.data()),
             static_cast<std::streamsize>(c.values.size() * 8));
    if (!os) throw CodecError("write failed: " + path.string());
}

Checkpoint load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CodecError("cannot open for reading: " + path.string());
    char magic[4];
    is.read(magic, 4);
    if (is.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
        throw CodecError("bad checkpoint magic: " + path.string());
    const int version = is.get();
    if (version != kVersion) throw CodecError("unsupported checkpoint version");
    const std::uint64_t header_len = get_u64_le(is);
    std::string header_str(header_len, '\0');
    is.read(header_str.data(), static_cast<std::streamsize>(header_len));
    if (static_cast<std::uint64_t>(is.gcount()) != header_len)
        throw CodecError("checkpoint file truncated in JSON header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_str);
    } catch (const nlohmann::json::exception& e) {
        throw CodecError(std::string("malformed checkpoint header: ") + e.what());
    }

    Checkpoint c;
    std::vector<LayoutEntry> entries;
    for (const auto& e : header.at("layout")) {
        LayoutEntry le;
        le.name = e.at("name").get<std::string>();
        le.shape = e.at("shape").get<std::vector<std::size_t>>();
        entries.push_back(std::move(le));
    }
    c.layout = ParamLayout(std::move(entries));
    if (header.at("total_length").get<std::uint64_t>() != c.layout.total_length())
        throw CodecError("checkpoint header total_length mismatches layout");
    c.meta.seed = header.at("meta").at("seed").get<std::uint64_t>();
    c.meta.step = header.at("meta").at("step").get<std::uint64_t>();
    c.meta.tag = header.at("meta").at("tag").get<std::string>();

    c.values.resize(c.layout.total_length());
    is.read(reinterpret_cast<char*>(c.values.data()),
            static_cast<std::streamsize>(c.values.size() * 8));
    if (static_cast<std::uint64_t>(is.gcount()) != c.values.size() * 8)
        throw CodecError("checkpoint file truncated in value block");
    if (is.peek() != std::char_traits<char>::eof())
        throw CodecError("trailing bytes after checkpoint values");
    for (double v : c.values)
        if (!std::isfinite(v)) throw CodecError("checkpoint contains non-finite values");
    return c;
}

}  // namespace wiseft
