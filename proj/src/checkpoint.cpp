// SPDX-License-Identifier: Apache-2.0
#include "ftsmoe/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "ftsmoe/config_json.hpp"
#include "ftsmoe/error.hpp"

namespace ftsmoe {

namespace {

constexpr char kMagic[8] = {'F', 'T', 'S', 'M', 'O', 'E', 'C', 'K'};
constexpr std::uint8_t kDtypeF64 = 1;

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n) {
    std::uint64_t h = 1469598103934665603ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= 1099511628211ULL;
    }
    return h;
}

class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    std::vector<std::uint8_t>& buffer() { return buf_; }

private:
    std::vector<std::uint8_t> buf_;
};

class Reader {
public:
    Reader(const std::vector<std::uint8_t>& buf, std::size_t end, std::string path)
        : buf_(buf), end_(end), path_(std::move(path)) {}

    const std::uint8_t* take(std::size_t n) {
        if (n > end_ - pos_) corrupt("truncated");
        const std::uint8_t* p = buf_.data() + pos_;
        pos_ += n;
        return p;
    }
    std::uint8_t u8() { return *take(1); }
    std::uint32_t u32() {
        const auto* p = take(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        const auto* p = take(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        const std::uint32_t n = u32();
        const auto* p = take(n);
        return {reinterpret_cast<const char*>(p), n};
    }
    bool done() const { return pos_ == end_; }

    [[noreturn]] void corrupt(const std::string& what) const {
        throw Error(ErrorCode::CorruptCheckpoint, "corrupt checkpoint: " + what, path_);
    }

private:
    const std::vector<std::uint8_t>& buf_;
    std::size_t end_;
    std::size_t pos_ = 0;
    std::string path_;
};

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path, const nlohmann::json& metadata) {
    check_shapes(model);
    Writer w;
    w.bytes(kMagic, sizeof kMagic);
    w.u32(kCheckpointVersion);
    const nlohmann::json header{{"config", to_json(model.config)}, {"metadata", metadata}};
    const std::string text = header.dump();
    w.u64(text.size());
    w.bytes(text.data(), text.size());

    const auto views = tensors(model.params);
    w.u32(static_cast<std::uint32_t>(views.size()));
    for (const auto& t : views) {
        w.str(t.name);
        w.u32(static_cast<std::uint32_t>(t.shape.size()));
        for (std::size_t d : t.shape) w.u64(d);
        w.u8(kDtypeF64);
        for (double x : t.values) w.f64(x);
    }
    auto& buf = w.buffer();
    const std::uint64_t sum = fnv1a(buf.data(), buf.size());
    w.u64(sum);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot open checkpoint for writing", path.string());
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw Error(ErrorCode::IoError, "failed writing checkpoint", path.string());
}

LoadedCheckpoint load_checkpoint_full(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open checkpoint", path.string());
    const std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    Reader head(buf, buf.size(), path.string());
    if (buf.size() < sizeof kMagic + 4) head.corrupt("truncated");
    if (!std::equal(kMagic, kMagic + sizeof kMagic, head.take(sizeof kMagic))) head.corrupt("bad magic");
    const std::uint32_t version = head.u32();
    if (version != kCheckpointVersion) {
        throw Error(ErrorCode::VersionMismatch,
                    "checkpoint format version " + std::to_string(version) + ", expected " +
                        std::to_string(kCheckpointVersion),
                    path.string());
    }
    if (buf.size() < sizeof kMagic + 4 + 8) head.corrupt("truncated");
    const std::size_t body_end = buf.size() - 8;
    Reader tail(buf, buf.size(), path.string());
    tail.take(body_end);
    if (tail.u64() != fnv1a(buf.data(), body_end)) head.corrupt("checksum mismatch or truncated");

    Reader r(buf, body_end, path.string());
    r.take(sizeof kMagic + 4);
    const std::uint64_t header_len = r.u64();
    const auto* hp = r.take(header_len);
    LoadedCheckpoint out;
    try {
        const auto header = nlohmann::json::parse(hp, hp + header_len);
        apply_json(header.at("config"), out.model.config);
        out.metadata = header.value("metadata", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
        r.corrupt(std::string("bad header: ") + e.what());
    } catch (const Error& e) {
        r.corrupt(std::string("bad config: ") + e.what());
    }

    // Build the expected layout from the config, then fill it tensor by tensor.
    try {
        out.model = Model{out.model.config, init_model(out.model.config, 0).params};
    } catch (const Error& e) {
        r.corrupt(std::string("bad config: ") + e.what());
    }
    auto views = tensors(out.model.params);
    if (r.u32() != views.size()) r.corrupt("tensor count differs from config");
    for (auto& t : views) {
        if (r.str() != t.name) r.corrupt("unexpected tensor order at '" + t.name + "'");
        const std::uint32_t ndim = r.u32();
        if (ndim != t.shape.size()) r.corrupt("rank mismatch for '" + t.name + "'");
        for (std::size_t d : t.shape) {
            if (r.u64() != d) r.corrupt("shape mismatch for '" + t.name + "'");
        }
        if (r.u8() != kDtypeF64) r.corrupt("unsupported dtype for '" + t.name + "'");
        for (double& x : t.values) x = r.f64();
    }
    if (!r.done()) r.corrupt("trailing bytes");
    return out;
}

Model load_checkpoint(const std::filesystem::path& path) { return load_checkpoint_full(path).model; }

}  // namespace ftsmoe
