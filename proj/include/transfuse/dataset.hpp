#pragma once

#include <filesystem>
#include <vector>

#include "transfuse/image.hpp"

namespace transfuse {

struct ManifestEntry {
    std::filesystem::path path;
    int width = 0;
    int height = 0;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;                // lexicographic by path
    std::vector<std::filesystem::path> skipped;        // undecodable files
    int target_size = 256;
};

// Resize to target x target. target < 8 is rejected.
Image preprocess(const Image& img, int target);

// Lists all decodable .png/.pgm images under dir (non-recursive), sorted by
// path. Undecodable image files land in `skipped`. Throws EmptyDatasetError
// when nothing decodes.
DatasetManifest scan_dataset(const std::filesystem::path& dir, int target);

}  // namespace transfuse
