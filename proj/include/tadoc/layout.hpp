#pragma once

#include <string>
#include <vector>

namespace tadoc {

// Categorized, confidence-scored box in normalized page coordinates.
struct LayoutRegion {
    std::string category;                    // "text", "title", "figure"
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;   // normalized, x0 < x1, y0 < y1
    double confidence = 1.0;

    void validate() const;
    double area() const { return (x1 - x0) * (y1 - y0); }
};

double region_iou(const LayoutRegion& a, const LayoutRegion& b);

// JSON schema: [{"category": str, "bbox": [x0,y0,x1,y1], "confidence": num}, ...]
std::string layout_to_json(const std::vector<LayoutRegion>& regions);
std::vector<LayoutRegion> layout_from_json(const std::string& json_text);
void save_layout(const std::vector<LayoutRegion>& regions, const std::string& path);
std::vector<LayoutRegion> load_layout(const std::string& path);

}  // namespace tadoc
