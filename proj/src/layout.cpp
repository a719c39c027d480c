#include "tadoc/layout.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace tadoc {

void LayoutRegion::validate() const {
    auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in01(x0) || !in01(y0) || !in01(x1) || !in01(y1))
        throw std::invalid_argument("LayoutRegion: coordinates outside [0,1]");
    if (!(x0 < x1) || !(y0 < y1))
        throw std::invalid_argument("LayoutRegion: corners not well-ordered");
    if (!(confidence >= 0.0 && confidence <= 1.0))
        throw std::invalid_argument("LayoutRegion: confidence outside [0,1]");
}

double region_iou(const LayoutRegion& a, const LayoutRegion& b) {
    double ix0 = std::max(a.x0, b.x0), iy0 = std::max(a.y0, b.y0);
    double ix1 = std::min(a.x1, b.x1), iy1 = std::min(a.y1, b.y1);
    double iw = std::max(0.0, ix1 - ix0), ih = std::max(0.0, iy1 - iy0);
    double inter = iw * ih;
    double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

std::string layout_to_json(const std::vector<LayoutRegion>& regions) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : regions) {
        arr.push_back({{"category", r.category},
                       {"bbox", {r.x0, r.y0, r.x1, r.y1}},
                       {"confidence", r.confidence}});
    }
    return arr.dump();
}

std::vector<LayoutRegion> layout_from_json(const std::string& json_text) {
    nlohmann::json arr;
    try {
        arr = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error(std::string("layout JSON: ") + e.what());
    }
    if (!arr.is_array()) throw std::runtime_error("layout JSON: expected an array");
    std::vector<LayoutRegion> out;
    for (const auto& item : arr) {
        LayoutRegion r;
        r.category = item.at("category").get<std::string>();
        const auto& bb = item.at("bbox");
        if (!bb.is_array() || bb.size() != 4)
            throw std::runtime_error("layout JSON: bbox must have 4 entries");
        r.x0 = bb[0].get<double>();
        r.y0 = bb[1].get<double>();
        r.x1 = bb[2].get<double>();
        r.y1 = bb[3].get<double>();
        r.confidence = item.value("confidence", 1.0);
        r.validate();
        out.push_back(std::move(r));
    }
    return out;
}

void save_layout(const std::vector<LayoutRegion>& regions, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    f << layout_to_json(regions) << "\n";
}

std::vector<LayoutRegion> load_layout(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open: " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return layout_from_json(text);
}

}  // namespace tadoc
