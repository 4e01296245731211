#include "dwp/serialize.hpp"

#include <cstring>
#include <filesystem>

#include "dwp/unet.hpp"

namespace dwp {

const char* kCodeVersion = "0.1.0";

BinWriter::BinWriter(const std::string& path) : out_(path, std::ios::binary), path_(path) {
    if (!out_) throw IoError("cannot open '" + path + "' for writing");
}

void BinWriter::bytes(const void* p, size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!out_) throw IoError("write failure on '" + path_ + "'");
}

void BinWriter::u8(uint8_t v) { bytes(&v, 1); }
void BinWriter::u32(uint32_t v) { bytes(&v, 4); }
void BinWriter::u64(uint64_t v) { bytes(&v, 8); }
void BinWriter::f32(float v) { bytes(&v, 4); }
void BinWriter::f64(double v) { bytes(&v, 8); }

void BinWriter::str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    bytes(s.data(), s.size());
}

void BinWriter::tensor_f32(const Tensor& t) {
    u8(static_cast<uint8_t>(t.ndim()));
    for (int i = 0; i < t.ndim(); ++i) u64(static_cast<uint64_t>(t.dim(i)));
    std::vector<float> buf(t.v.size());
    for (size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(t.v[i]);
    bytes(buf.data(), buf.size() * 4);
}

BinReader::BinReader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw IoError("cannot open '" + path + "' for reading");
}

void BinReader::bytes(void* p, size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in_.gcount()) != n)
        throw IoError("truncated file '" + path_ + "'");
}

uint8_t BinReader::u8() { uint8_t v; bytes(&v, 1); return v; }
uint32_t BinReader::u32() { uint32_t v; bytes(&v, 4); return v; }
uint64_t BinReader::u64() { uint64_t v; bytes(&v, 8); return v; }
float BinReader::f32() { float v; bytes(&v, 4); return v; }
double BinReader::f64() { double v; bytes(&v, 8); return v; }

std::string BinReader::str() {
    uint32_t n = u32();
    if (n > (1u << 20)) throw IoError("corrupt string length in '" + path_ + "'");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
}

Tensor BinReader::tensor_f32() {
    const int nd = u8();
    if (nd > 8) throw IoError("corrupt tensor rank in '" + path_ + "'");
    std::vector<int64_t> dims(static_cast<size_t>(nd));
    for (auto& d : dims) {
        d = static_cast<int64_t>(u64());
        if (d < 0 || d > (int64_t(1) << 32)) throw IoError("corrupt tensor dim in '" + path_ + "'");
    }
    Tensor t(dims);
    std::vector<float> buf(t.v.size());
    bytes(buf.data(), buf.size() * 4);
    for (size_t i = 0; i < buf.size(); ++i) t.v[i] = static_cast<double>(buf[i]);
    return t;
}

uint32_t BinReader::header(const char magic[4], uint32_t max_version) {
    char got[4];
    bytes(got, 4);
    if (std::memcmp(got, magic, 4) != 0)
        throw VersionError("'" + path_ + "': bad magic, expected " + std::string(magic, 4));
    const uint32_t version = u32();
    if (version == 0 || version > max_version)
        throw VersionError("'" + path_ + "': unsupported format version " + std::to_string(version));
    return version;
}

void save_checkpoint(const UNet& net, const std::string& path) {
    BinWriter w(path);
    w.bytes("DWPC", 4);
    w.u32(kCheckpointVersion);
    const auto& sp = net.spec();
    w.u8(sp.mode == NetMode::variational ? 1 : 0);
    w.u32(static_cast<uint32_t>(sp.in_channels));
    w.u32(static_cast<uint32_t>(sp.out_channels));
    for (int i = 0; i < 3; ++i) w.u32(static_cast<uint32_t>(sp.base_widths[i]));

    uint32_t n_arrays = 0;
    for (const auto& L : net.layers()) n_arrays += sp.mode == NetMode::variational ? 2 : 1;
    w.u32(n_arrays);
    for (const auto& L : net.layers()) {
        if (sp.mode == NetMode::variational) {
            w.str(L.id + ".mu");
            w.tensor_f32(L.mu);
            w.str(L.id + ".log_sigma");
            w.tensor_f32(L.log_sigma);
        } else {
            w.str(L.id + ".w");
            w.tensor_f32(L.w);
        }
    }
}

UNet load_checkpoint(const std::string& path) {
    BinReader r(path);
    r.header("DWPC", kCheckpointVersion);
    NetworkSpec sp;
    sp.mode = r.u8() ? NetMode::variational : NetMode::deterministic;
    sp.in_channels = static_cast<int>(r.u32());
    sp.out_channels = static_cast<int>(r.u32());
    for (int i = 0; i < 3; ++i) sp.base_widths[i] = static_cast<int>(r.u32());
    UNet net(sp);

    const uint32_t n_arrays = r.u32();
    for (uint32_t i = 0; i < n_arrays; ++i) {
        const std::string name = r.str();
        Tensor t = r.tensor_f32();
        const auto dot = name.rfind('.');
        if (dot == std::string::npos) throw IoError("checkpoint '" + path + "': bad array name " + name);
        const std::string layer_id = name.substr(0, dot);
        const std::string field = name.substr(dot + 1);
        ConvLayer& L = net.layer(layer_id);
        Tensor* dst = nullptr;
        if (field == "w")
            dst = &L.w;
        else if (field == "mu")
            dst = &L.mu;
        else if (field == "log_sigma")
            dst = &L.log_sigma;
        else
            throw IoError("checkpoint '" + path + "': unknown field " + field);
        if (dst->dims != t.dims)
            throw IoError("checkpoint '" + path + "': shape mismatch for " + name);
        *dst = std::move(t);
    }
    return net;
}

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<uint64_t>(static_cast<unsigned char>(c));
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(uint64_t v) {
    static const char* d = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<size_t>(i)] = d[v & 0xf];
        v >>= 4;
    }
    return s;
}

void write_repro_record(const std::string& out_dir_or_file, const std::string& config_text,
                        uint64_t seed) {
    namespace fs = std::filesystem;
    fs::path p(out_dir_or_file);
    fs::path rec = fs::is_directory(p) ? p / "run_record.json"
                                       : p.parent_path() / (p.filename().string() + ".repro.json");
    std::ofstream out(rec);
    if (!out) throw IoError("cannot write reproducibility record " + rec.string());
    out << "{\n  \"config_hash\": \"" << hex64(fnv1a(config_text)) << "\",\n  \"seed\": " << seed
        << ",\n  \"code_version\": \"" << kCodeVersion << "\"\n}\n";
}

}  // namespace dwp
