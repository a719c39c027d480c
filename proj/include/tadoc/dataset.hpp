#pragma once

#include <string>
#include <vector>

#include "tadoc/backward_map.hpp"
#include "tadoc/image.hpp"
#include "tadoc/layout.hpp"

namespace tadoc {

// One training/evaluation unit: the flat page, its photographed distortion,
// the document mask, the exact backward map (f_T), layout ground truth and
// the reference text.
struct DocumentSample {
    RasterImage flat;       // RGB
    RasterImage distorted;  // RGB
    RasterImage mask;       // 1-channel, 1 inside the document
    BackwardMap gt_map;     // distorted -> flat backward map, distorted dims
    std::vector<LayoutRegion> layout;
    std::string text;
};

struct ManifestEntry {
    std::string id;
    std::string distorted, flat, mask, map, layout, text;  // paths relative to the manifest
};

// JSON lines, one object per sample: {id, distorted, flat, mask, map, layout, text}
void save_manifest(const std::vector<ManifestEntry>& entries, const std::string& path);
std::vector<ManifestEntry> load_manifest(const std::string& path);

void save_sample_files(const DocumentSample& s, const std::string& dir,
                       const ManifestEntry& entry);
DocumentSample load_sample(const std::string& manifest_dir, const ManifestEntry& entry);

}  // namespace tadoc
