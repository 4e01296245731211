#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "dwp/errors.hpp"
#include "dwp/tensor.hpp"

namespace dwp {

// Little-endian binary container primitives shared by all file formats.
// Arrays are stored as float32 regardless of the in-memory precision.

class BinWriter {
public:
    explicit BinWriter(const std::string& path);
    void u8(uint8_t v);
    void u32(uint32_t v);
    void u64(uint64_t v);
    void f32(float v);
    void f64(double v);
    void str(const std::string& s);
    void tensor_f32(const Tensor& t);
    void bytes(const void* p, size_t n);

private:
    std::ofstream out_;
    std::string path_;
};

class BinReader {
public:
    explicit BinReader(const std::string& path);
    uint8_t u8();
    uint32_t u32();
    uint64_t u64();
    float f32();
    double f64();
    std::string str();
    Tensor tensor_f32();
    void bytes(void* p, size_t n);
    /// Reads and checks a 4-byte magic + u32 version.
    uint32_t header(const char magic[4], uint32_t max_version);

private:
    std::ifstream in_;
    std::string path_;
};

class UNet;
struct NetworkSpec;

/// Checkpoint container: header (spec fields, mode, format version) plus
/// named float32 arrays, one per layer parameter. Round-trips bit-exactly.
void save_checkpoint(const UNet& net, const std::string& path);
UNet load_checkpoint(const std::string& path);

constexpr uint32_t kCheckpointVersion = 1;
constexpr uint32_t kVolumeVersion = 1;
constexpr uint32_t kBankVersion = 1;
constexpr uint32_t kBundleVersion = 1;
constexpr uint32_t kResultsVersion = 1;

/// FNV-1a of a string, used for config hashes in reproducibility records.
uint64_t fnv1a(const std::string& s);
std::string hex64(uint64_t v);

extern const char* kCodeVersion;

/// Writes `<stem>.repro.json` (or `dir/run_record.json`) with config hash,
/// seed and code version.
void write_repro_record(const std::string& out_dir_or_file, const std::string& config_text,
                        uint64_t seed);

}  // namespace dwp
