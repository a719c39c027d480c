#include "tadoc/dataset.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "tadoc/image_io.hpp"

namespace tadoc {

namespace fs = std::filesystem;

void save_manifest(const std::vector<ManifestEntry>& entries, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    for (const auto& e : entries) {
        nlohmann::json obj{{"id", e.id},         {"distorted", e.distorted},
                           {"flat", e.flat},     {"mask", e.mask},
                           {"map", e.map},       {"layout", e.layout},
                           {"text", e.text}};
        f << obj.dump() << "\n";
    }
    if (!f) throw std::runtime_error("write failed: " + path);
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open: " + path);
    std::vector<ManifestEntry> entries;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw std::runtime_error("manifest " + path + " line " + std::to_string(lineno) +
                                     ": " + e.what());
        }
        ManifestEntry e;
        e.id = obj.at("id").get<std::string>();
        e.distorted = obj.at("distorted").get<std::string>();
        e.flat = obj.at("flat").get<std::string>();
        e.mask = obj.at("mask").get<std::string>();
        e.map = obj.at("map").get<std::string>();
        e.layout = obj.at("layout").get<std::string>();
        e.text = obj.at("text").get<std::string>();
        entries.push_back(std::move(e));
    }
    return entries;
}

void save_sample_files(const DocumentSample& s, const std::string& dir,
                       const ManifestEntry& entry) {
    auto p = [&](const std::string& rel) { return (fs::path(dir) / rel).string(); };
    save_image(s.distorted, p(entry.distorted));
    save_image(s.flat, p(entry.flat));
    save_image(s.mask, p(entry.mask));
    save_bmap(s.gt_map, p(entry.map));
    save_layout(s.layout, p(entry.layout));
    std::ofstream t(p(entry.text));
    if (!t) throw std::runtime_error("cannot open for write: " + p(entry.text));
    t << s.text;
}

DocumentSample load_sample(const std::string& manifest_dir, const ManifestEntry& entry) {
    auto p = [&](const std::string& rel) { return (fs::path(manifest_dir) / rel).string(); };
    DocumentSample s;
    s.distorted = load_image(p(entry.distorted));
    s.flat = load_image(p(entry.flat));
    s.mask = load_image(p(entry.mask));
    s.gt_map = load_bmap(p(entry.map));
    s.layout = load_layout(p(entry.layout));
    std::ifstream t(p(entry.text));
    if (!t) throw std::runtime_error("cannot open: " + p(entry.text));
    s.text.assign((std::istreambuf_iterator<char>(t)), std::istreambuf_iterator<char>());
    return s;
}

}  // namespace tadoc
