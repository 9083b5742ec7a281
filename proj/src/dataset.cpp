#include "transfuse/dataset.hpp"

#include <algorithm>

#include "transfuse/image_io.hpp"

namespace transfuse {

Image preprocess(const Image& img, int target) {
    if (target < 8) throw ConfigError("preprocess: target size must be >= 8");
    return bilinear_resize(img, target, target);
}

DatasetManifest scan_dataset(const std::filesystem::path& dir, int target) {
    if (!std::filesystem::is_directory(dir))
        throw NotFoundError("no such directory: " + dir.string());

    DatasetManifest manifest;
    manifest.target_size = target;

    std::vector<std::filesystem::path> candidates;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        if (ext == ".png" || ext == ".pgm") candidates.push_back(entry.path());
    }
    std::sort(candidates.begin(), candidates.end(),
              [](const auto& a, const auto& b) { return a.string() < b.string(); });

    for (const auto& path : candidates) {
        try {
            const Image img = load_image(path);
            manifest.entries.push_back({path, img.width, img.height});
        } catch (const DecodeError&) {
            manifest.skipped.push_back(path);
        }
    }

    if (manifest.entries.empty())
        throw EmptyDatasetError("no decodable images in " + dir.string());
    return manifest;
}

}  // namespace transfuse
