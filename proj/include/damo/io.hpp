#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "damo/model.hpp"
#include "damo/trainer.hpp"

namespace damo {

// Grayscale portable-float-map: "Pf", dims, negative scale (little-endian),
// then float32 rows in bottom-to-top order. Values quantize to float32 on
// write; everything in memory stays float64.
void write_pfm(const std::string& path, const Tensor2& image);
Tensor2 read_pfm(const std::string& path);

// Binary PPM, 8-bit, values clamp(round(255 * linear)), rows top-to-bottom.
void write_ppm(const std::string& path, const Tensor4& rgb);
Tensor4 read_ppm(const std::string& path);

// Checkpoint: magic, config block, then named tensors as
// (name length, name, dims, raw little-endian float64). Bit-exact round trip.
void save_checkpoint(const std::string& path, const ModelState& model);
ModelState load_checkpoint(const std::string& path);

void write_loss_csv(const std::string& path, const std::vector<EpochRecord>& history);

struct ManifestEntry {
    std::uint64_t seed = 0;
    std::string rgb;
    std::string depth;
};

struct DatasetManifest {
    int height = 0;
    int width = 0;
    std::vector<ManifestEntry> scenes;
};

void write_manifest(const std::string& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::string& path);

// Loads every manifest pair from the dataset directory; masks are all-ones.
std::vector<TrainSample> load_dataset(const std::string& dir);

}  // namespace damo
