#include "toothseg/io.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace toothseg {

static_assert(std::endian::native == std::endian::little,
              "container payloads are little-endian");

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string raw_path_for(const std::string& json_path) {
    fs::path p(json_path);
    p.replace_extension(".raw");
    return p.string();
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::invalid_argument("malformed JSON in " + path + ": " + e.what());
    }
    return j;
}

void create_parent_dirs(const std::string& path) {
    const fs::path parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
}

void write_json_file(const std::string& path, const json& j) {
    create_parent_dirs(path);
    std::ofstream out(path);
    if (!out) throw std::invalid_argument("cannot open " + path + " for writing");
    out << j.dump(2) << "\n";
}

void expect_keys(const json& j, std::initializer_list<const char*> keys,
                 const std::string& what) {
    for (const char* k : keys)
        if (!j.contains(k))
            throw std::invalid_argument(what + ": missing key \"" + k + "\"");
    for (const auto& [key, value] : j.items()) {
        bool known = false;
        for (const char* k : keys) known |= key == k;
        if (!known) throw std::invalid_argument(what + ": unknown key \"" + key + "\"");
    }
}

template <typename T>
void write_raw(const std::string& path, const std::vector<T>& data) {
    create_parent_dirs(path);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::invalid_argument("cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(T)));
}

template <typename T>
std::vector<T> read_raw(const std::string& path, std::size_t count) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw std::invalid_argument("cannot open " + path);
    const auto bytes = static_cast<std::size_t>(in.tellg());
    if (bytes != count * sizeof(T))
        throw std::invalid_argument("payload " + path + " has " + std::to_string(bytes) +
                                    " bytes, expected " + std::to_string(count * sizeof(T)));
    std::vector<T> data(count);
    in.seekg(0);
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes));
    return data;
}

json grid_header(const GridGeom& g, const char* dtype, const std::string& raw_name) {
    json j;
    j["dims"] = {g.dims.nx, g.dims.ny, g.dims.nz};
    j["spacing_mm"] = {g.spacing.x, g.spacing.y, g.spacing.z};
    j["origin_mm"] = {g.origin.x, g.origin.y, g.origin.z};
    j["dtype"] = dtype;
    j["order"] = "x-fastest";
    j["endian"] = "little";
    j["data"] = raw_name;
    return j;
}

GridGeom parse_grid_header(const json& j, const char* dtype, const std::string& what) {
    expect_keys(j, {"dims", "spacing_mm", "origin_mm", "dtype", "order", "endian", "data"}, what);
    if (j["dtype"] != dtype)
        throw std::invalid_argument(what + ": dtype " + j["dtype"].get<std::string>() +
                                    ", expected " + dtype);
    if (j["order"] != "x-fastest" || j["endian"] != "little")
        throw std::invalid_argument(what + ": unsupported order/endian");
    GridGeom g;
    g.dims = {j["dims"][0].get<int>(), j["dims"][1].get<int>(), j["dims"][2].get<int>()};
    g.spacing = {j["spacing_mm"][0], j["spacing_mm"][1], j["spacing_mm"][2]};
    g.origin = {j["origin_mm"][0], j["origin_mm"][1], j["origin_mm"][2]};
    g.validate();
    return g;
}

std::string sidecar(const std::string& json_path, const json& j) {
    return (fs::path(json_path).parent_path() / j["data"].get<std::string>()).string();
}

template <typename GridT, typename Elem>
void write_grid(const std::string& json_path, const GridT& grid, const char* dtype) {
    grid.validate();
    const std::string raw = raw_path_for(json_path);
    write_json_file(json_path, grid_header(grid.geom, dtype, fs::path(raw).filename().string()));
    write_raw<Elem>(raw, grid.data);
}

template <typename GridT, typename Elem>
GridT read_grid(const std::string& json_path, const char* dtype, const std::string& what) {
    const json j = read_json_file(json_path);
    GridT grid(parse_grid_header(j, dtype, what));
    grid.data = read_raw<Elem>(sidecar(json_path, j), grid.geom.voxel_count());
    return grid;
}

}  // namespace

void write_volume(const std::string& p, const Volume& v) { write_grid<Volume, float>(p, v, "f32"); }
Volume read_volume(const std::string& p) { return read_grid<Volume, float>(p, "f32", "volume"); }

void write_labels(const std::string& p, const LabelMap& m) {
    write_grid<LabelMap, Label>(p, m, "u16");
}
LabelMap read_labels(const std::string& p) {
    return read_grid<LabelMap, Label>(p, "u16", "labels");
}

void write_distance_map(const std::string& p, const DistanceMap& dm) {
    dm.geom.validate();
    const std::string raw = raw_path_for(p);
    write_json_file(p, grid_header(dm.geom, "f32", fs::path(raw).filename().string()));
    write_raw<float>(raw, dm.data);
}
DistanceMap read_distance_map(const std::string& p) {
    const json j = read_json_file(p);
    DistanceMap dm(parse_grid_header(j, "f32", "distance map"));
    dm.data = read_raw<float>(sidecar(p, j), dm.geom.voxel_count());
    return dm;
}

void write_mask(const std::string& p, const BinaryMask& m) {
    write_grid<BinaryMask, std::uint8_t>(p, m, "u8");
}
BinaryMask read_mask(const std::string& p) {
    return read_grid<BinaryMask, std::uint8_t>(p, "u8", "mask");
}

void write_image2d(const std::string& json_path, const Image2D& img) {
    const std::string raw = raw_path_for(json_path);
    json j;
    j["dims"] = {img.nu, img.nv};
    j["dtype"] = "f32";
    j["order"] = "u-fastest";
    j["endian"] = "little";
    j["data"] = fs::path(raw).filename().string();
    write_json_file(json_path, j);
    write_raw<float>(raw, img.data);
}

Image2D read_image2d(const std::string& json_path) {
    const json j = read_json_file(json_path);
    expect_keys(j, {"dims", "dtype", "order", "endian", "data"}, "image2d");
    if (j["dtype"] != "f32" || j["order"] != "u-fastest" || j["endian"] != "little")
        throw std::invalid_argument("image2d: unsupported dtype/order/endian");
    Image2D img(j["dims"][0].get<int>(), j["dims"][1].get<int>());
    img.data = read_raw<float>(sidecar(json_path, j),
                               static_cast<std::size_t>(img.nu) * img.nv);
    return img;
}

namespace {

std::string group_name(ToothGroup g) {
    switch (g) {
        case ToothGroup::Metal: return "metal";
        case ToothGroup::OneRooted: return "one_rooted";
        case ToothGroup::Others: return "others";
    }
    throw std::logic_error("unreachable");
}

ToothGroup group_from(const std::string& s) {
    if (s == "metal") return ToothGroup::Metal;
    if (s == "one_rooted") return ToothGroup::OneRooted;
    if (s == "others") return ToothGroup::Others;
    throw std::invalid_argument("boxes: unknown group \"" + s + "\"");
}

}  // namespace

void write_boxes(const std::string& path, const std::vector<Box3>& boxes) {
    json arr = json::array();
    for (const Box3& b : boxes) {
        json j;
        j["tooth_id"] = b.tooth_id ? json(*b.tooth_id) : json(nullptr);
        j["group"] = b.group ? json(group_name(*b.group)) : json(nullptr);
        j["min_mm"] = {b.min_mm.x, b.min_mm.y, b.min_mm.z};
        j["max_mm"] = {b.max_mm.x, b.max_mm.y, b.max_mm.z};
        j["score"] = b.score ? json(*b.score) : json(nullptr);
        arr.push_back(j);
    }
    write_json_file(path, arr);
}

std::vector<Box3> read_boxes(const std::string& path) {
    const json arr = read_json_file(path);
    if (!arr.is_array()) throw std::invalid_argument("boxes: expected a JSON array");
    std::vector<Box3> boxes;
    for (const auto& j : arr) {
        expect_keys(j, {"tooth_id", "group", "min_mm", "max_mm", "score"}, "boxes");
        Box3 b;
        b.min_mm = {j["min_mm"][0], j["min_mm"][1], j["min_mm"][2]};
        b.max_mm = {j["max_mm"][0], j["max_mm"][1], j["max_mm"][2]};
        if (!j["tooth_id"].is_null()) b.tooth_id = j["tooth_id"].get<int>();
        if (!j["group"].is_null()) b.group = group_from(j["group"].get<std::string>());
        if (!j["score"].is_null()) b.score = j["score"].get<double>();
        b.validate();
        boxes.push_back(b);
    }
    return boxes;
}

void write_poses(const std::string& path, const std::vector<PoseEstimate>& poses) {
    json arr = json::array();
    for (const PoseEstimate& p : poses) {
        json j;
        j["jaw"] = p.jaw == Jaw::Upper ? "upper" : "lower";
        j["point_px"] = {p.point_u, p.point_v};
        j["angle_deg"] = p.angle_deg;
        arr.push_back(j);
    }
    write_json_file(path, arr);
}

std::vector<PoseEstimate> read_poses(const std::string& path) {
    const json arr = read_json_file(path);
    if (!arr.is_array()) throw std::invalid_argument("poses: expected a JSON array");
    std::vector<PoseEstimate> poses;
    for (const auto& j : arr) {
        expect_keys(j, {"jaw", "point_px", "angle_deg"}, "poses");
        PoseEstimate p;
        const std::string jaw = j["jaw"].get<std::string>();
        if (jaw == "upper")
            p.jaw = Jaw::Upper;
        else if (jaw == "lower")
            p.jaw = Jaw::Lower;
        else
            throw std::invalid_argument("poses: unknown jaw \"" + jaw + "\"");
        p.point_u = j["point_px"][0];
        p.point_v = j["point_px"][1];
        p.angle_deg = j["angle_deg"];
        poses.push_back(p);
    }
    return poses;
}

void write_transforms(const std::string& path,
                      const std::vector<std::pair<std::string, VoiResult>>& jaws) {
    json arr = json::array();
    for (const auto& [name, voi] : jaws) {
        json j;
        j["jaw"] = name;
        j["rotation"] = voi.source_to_voi.rotation;
        j["translation_mm"] = {voi.source_to_voi.translation.x, voi.source_to_voi.translation.y,
                               voi.source_to_voi.translation.z};
        const GridGeom& g = voi.voi_geom();
        j["voi_dims"] = {g.dims.nx, g.dims.ny, g.dims.nz};
        j["voi_spacing_mm"] = {g.spacing.x, g.spacing.y, g.spacing.z};
        j["voi_origin_mm"] = {g.origin.x, g.origin.y, g.origin.z};
        j["y_flipped"] = voi.y_flipped;
        arr.push_back(j);
    }
    write_json_file(path, arr);
}

void write_metrics_report(const std::string& path, const MetricsReport& report, double ap50,
                          double oir_mean, double mean_or) {
    json j;
    j["per_instance"] = json::array();
    for (const auto& im : report.per_instance) {
        json e;
        e["instance"] = im.gt_label;
        e["matched_pred"] = im.matched ? json(im.matched_pred) : json(nullptr);
        e["f1"] = im.f1;
        e["hd_mm"] = im.matched ? json(im.hd_mm) : json(nullptr);
        e["assd_mm"] = im.matched ? json(im.assd_mm) : json(nullptr);
        j["per_instance"].push_back(e);
    }
    json agg;
    agg["f1"] = {{"mean", report.f1_mean}, {"std", report.f1_std}};
    agg["aji"] = report.aji;
    agg["hd_mm"] = report.hd_mm;
    agg["assd_mm"] = report.assd_mm;
    agg["ap50"] = ap50 >= 0 ? json(ap50) : json(nullptr);
    agg["oir"] = oir_mean >= 0 ? json(oir_mean) : json(nullptr);
    agg["mean_or"] = mean_or >= 0 ? json(mean_or) : json(nullptr);
    j["aggregate"] = agg;
    write_json_file(path, j);
}

namespace {

/// Parameters, then batch-norm running stats, in stable order.
std::vector<std::pair<std::string, std::vector<double>*>> checkpoint_buffers(TsnetParams& p) {
    std::vector<std::pair<std::string, std::vector<double>*>> out;
    auto add_block = [&](const std::string& prefix, SkipBlockParams& b) {
        out.emplace_back(prefix + ".bn1.running_mean", &b.bn1.running_mean);
        out.emplace_back(prefix + ".bn1.running_var", &b.bn1.running_var);
        out.emplace_back(prefix + ".bn2.running_mean", &b.bn2.running_mean);
        out.emplace_back(prefix + ".bn2.running_var", &b.bn2.running_var);
    };
    for (std::size_t i = 0; i < p.encoder.size(); ++i)
        add_block("enc" + std::to_string(i), p.encoder[i]);
    for (std::size_t i = 0; i < p.decoder.size(); ++i)
        add_block("dec" + std::to_string(i), p.decoder[i]);
    return out;
}

}  // namespace

void write_checkpoint(const std::string& json_path, TsnetParams& params) {
    const std::string raw = raw_path_for(json_path);
    json arrays = json::array();
    std::vector<double> payload;

    auto append = [&](const std::string& name, const std::vector<int>& shape,
                      const std::vector<double>& data) {
        json e;
        e["name"] = name;
        e["shape"] = shape;
        e["offset"] = payload.size();
        arrays.push_back(e);
        payload.insert(payload.end(), data.begin(), data.end());
    };

    for (auto& [name, t] : params.named_params()) append(name, t.shape(), t.values());
    for (auto& [name, buf] : checkpoint_buffers(params))
        append(name, {static_cast<int>(buf->size())}, *buf);

    json j;
    j["arrays"] = arrays;
    j["dtype"] = "f64";
    j["endian"] = "little";
    j["data"] = fs::path(raw).filename().string();
    write_json_file(json_path, j);
    write_raw<double>(raw, payload);
}

void read_checkpoint(const std::string& json_path, TsnetParams& params) {
    const json j = read_json_file(json_path);
    expect_keys(j, {"arrays", "dtype", "endian", "data"}, "checkpoint");
    if (j["dtype"] != "f64" || j["endian"] != "little")
        throw std::invalid_argument("checkpoint: unsupported dtype/endian");

    std::size_t total = 0;
    for (const auto& e : j["arrays"]) {
        std::size_t n = 1;
        for (const auto& s : e["shape"]) n *= s.get<std::size_t>();
        total = std::max(total, e["offset"].get<std::size_t>() + n);
    }
    const std::vector<double> payload = read_raw<double>(sidecar(json_path, j), total);

    auto named = params.named_params();
    auto buffers = checkpoint_buffers(params);
    for (const auto& e : j["arrays"]) {
        const std::string name = e["name"].get<std::string>();
        std::size_t n = 1;
        for (const auto& s : e["shape"]) n *= s.get<std::size_t>();
        const std::size_t off = e["offset"].get<std::size_t>();

        bool found = false;
        for (auto& [pname, t] : named)
            if (pname == name) {
                if (t.values().size() != n)
                    throw std::invalid_argument("checkpoint: size mismatch for " + name);
                std::copy(payload.begin() + off, payload.begin() + off + n, t.values().begin());
                found = true;
                break;
            }
        if (!found)
            for (auto& [bname, buf] : buffers)
                if (bname == name) {
                    if (buf->size() != n)
                        throw std::invalid_argument("checkpoint: size mismatch for " + name);
                    std::copy(payload.begin() + off, payload.begin() + off + n, buf->begin());
                    found = true;
                    break;
                }
        if (!found) throw std::invalid_argument("checkpoint: unknown array \"" + name + "\"");
    }
}

}  // namespace toothseg
