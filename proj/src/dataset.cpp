#include "synthpipe/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "synthpipe/error.hpp"

namespace synthpipe::data {

namespace fs = std::filesystem;
using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

// Slack for float noise from normalized round-trips; gross violations still
// trip the bounds checks.
constexpr double kEdgeTolerance = 1e-6;

std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return x % n;
}

std::string basename_stem(const std::string& file_name) {
    return fs::path(file_name).stem().string();
}

std::string format_norm(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.12f", v);
    return buf;
}

}  // namespace

void validate_box(const BoundingBox& box, int image_w, int image_h,
                  const std::string& context) {
    auto bad = [&](const std::string& why) {
        std::ostringstream os;
        os << context << ": box [" << box.x << ", " << box.y << ", " << box.w << ", " << box.h
           << "] " << why << " (image " << image_w << "x" << image_h << ")";
        throw ValidationError(os.str());
    };
    if (!(box.w > 0) || !(box.h > 0)) bad("has non-positive size");
    if (box.x < 0 || box.y < 0) bad("has negative origin");
    if (box.x + box.w > image_w || box.y + box.h > image_h) bad("exceeds image bounds");
}

std::string_view to_string(Split split) {
    switch (split) {
        case Split::unassigned: return "unassigned";
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

std::optional<Split> split_from_string(std::string_view name) {
    for (Split s : {Split::unassigned, Split::train, Split::val, Split::test}) {
        if (to_string(s) == name) return s;
    }
    return std::nullopt;
}

void Manifest::add_record(ImageRecord record) {
    if (record.image_id.empty()) throw ValidationError("record has empty image_id");
    if (record.width <= 0 || record.height <= 0) {
        throw ValidationError("record " + record.image_id + ": non-positive dimensions");
    }
    if (record.excluded && record.exclude_reason.empty()) {
        throw ValidationError("record " + record.image_id + ": excluded without a reason");
    }
    if (index_.count(record.image_id)) {
        throw ValidationError("duplicate image_id: " + record.image_id);
    }
    if (record.provenance) {
        auto key = std::pair{record.provenance->prompt_id, record.provenance->quadrant};
        if (!provenance_keys_.insert(key).second) {
            throw ValidationError("duplicate provenance (prompt " + std::to_string(key.first) +
                                  ", quadrant " + std::to_string(key.second) + ")");
        }
    }
    index_[record.image_id] = records_.size();
    records_.push_back(std::move(record));
}

void Manifest::set_annotations(const std::string& image_id, std::vector<BoundingBox> boxes) {
    const ImageRecord* rec = find(image_id);
    if (!rec) throw ValidationError("annotations reference unknown image_id: " + image_id);
    for (const BoundingBox& box : boxes) {
        validate_box(box, rec->width, rec->height, "image " + image_id);
    }
    annotations_[image_id] = std::move(boxes);
}

const ImageRecord* Manifest::find(const std::string& image_id) const {
    auto it = index_.find(image_id);
    return it == index_.end() ? nullptr : &records_[it->second];
}

const std::vector<BoundingBox>& Manifest::annotations(const std::string& image_id) const {
    static const std::vector<BoundingBox> kEmpty;
    auto it = annotations_.find(image_id);
    return it == annotations_.end() ? kEmpty : it->second;
}

std::vector<std::string> Manifest::active_ids() const {
    std::vector<std::string> ids;
    for (const ImageRecord& r : records_) {
        if (r.active()) ids.push_back(r.image_id);
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

ExcludeResult Manifest::exclude(const std::vector<std::string>& image_ids,
                                const std::string& reason) {
    if (reason.empty()) throw ValidationError("exclusion requires a non-empty reason");
    for (const std::string& id : image_ids) {
        if (!find(id)) throw ValidationError("exclude: unknown image_id: " + id);
    }
    ExcludeResult result;
    for (const std::string& id : image_ids) {
        ImageRecord& rec = records_[index_.at(id)];
        if (rec.excluded) {
            result.already_excluded.push_back(id);
            continue;
        }
        rec.excluded = true;
        rec.exclude_reason = reason;
        rec.split = Split::unassigned;
        ++result.newly_excluded;
    }
    return result;
}

void Manifest::assign_splits(const SplitCounts& counts, std::uint64_t seed,
                             bool group_by_prompt) {
    std::vector<std::string> ids = active_ids();
    if (counts.total() != ids.size()) {
        throw ValidationError("split counts sum to " + std::to_string(counts.total()) +
                              " but there are " + std::to_string(ids.size()) +
                              " active records");
    }

    std::mt19937_64 rng(seed);
    std::vector<std::vector<std::string>> groups;
    if (group_by_prompt) {
        std::map<std::string, std::vector<std::string>> by_key;
        for (const std::string& id : ids) {
            const ImageRecord& rec = records_[index_.at(id)];
            const std::string key = rec.provenance
                                        ? "p" + std::to_string(rec.provenance->prompt_id)
                                        : "x" + id;
            by_key[key].push_back(id);
        }
        groups.reserve(by_key.size());
        for (auto& [key, members] : by_key) groups.push_back(std::move(members));
    } else {
        groups.reserve(ids.size());
        for (std::string& id : ids) groups.push_back({std::move(id)});
    }

    for (std::size_t i = 0; i + 1 < groups.size(); ++i) {
        std::size_t j = i + bounded(rng, groups.size() - i);
        std::swap(groups[i], groups[j]);
    }

    const std::array<std::pair<Split, std::uint64_t>, 3> plan = {
        std::pair{Split::train, counts.train},
        std::pair{Split::val, counts.val},
        std::pair{Split::test, counts.test}};
    std::size_t g = 0;
    for (const auto& [split, want] : plan) {
        std::uint64_t assigned = 0;
        while (assigned < want) {
            if (g >= groups.size() || assigned + groups[g].size() > want) {
                throw ValidationError(
                    "split counts are not reachable with group-by-prompt; adjust counts "
                    "to group boundaries");
            }
            for (const std::string& id : groups[g]) {
                records_[index_.at(id)].split = split;
            }
            assigned += groups[g].size();
            ++g;
        }
    }
    split_seed = seed;
}

DatasetStats Manifest::stats() const {
    DatasetStats s;
    s.per_split = {{"train", 0}, {"val", 0}, {"test", 0}, {"unassigned", 0}};
    for (const ImageRecord& r : records_) {
        if (!r.active()) {
            ++s.excluded;
            continue;
        }
        ++s.images;
        const std::uint64_t boxes = annotations(r.image_id).size();
        s.instances += boxes;
        ++s.instances_histogram[boxes];
        ++s.per_split[std::string(to_string(r.split))];
        if (boxes == 0) ++s.unannotated_active;
    }
    s.mean_instances_per_image =
        s.images == 0 ? 0.0 : static_cast<double>(s.instances) / static_cast<double>(s.images);
    return s;
}

std::vector<std::string> Manifest::unannotated_active_ids() const {
    std::vector<std::string> out;
    for (const std::string& id : active_ids()) {
        if (annotations(id).empty()) out.push_back(id);
    }
    return out;
}

nlohmann::ordered_json Manifest::to_json() const {
    ordered_json doc;
    doc["schema_version"] = kSchemaVersion;
    doc["split_seed"] = split_seed;
    ordered_json records = ordered_json::array();
    for (const ImageRecord& r : records_) {
        ordered_json rec;
        rec["image_id"] = r.image_id;
        rec["file"] = r.file;
        rec["width"] = r.width;
        rec["height"] = r.height;
        if (r.provenance) {
            rec["provenance"] = {{"prompt_id", r.provenance->prompt_id},
                                 {"quadrant", r.provenance->quadrant}};
        } else {
            rec["provenance"] = "external";
        }
        if (r.excluded) {
            rec["status"] = ordered_json{{"excluded", r.exclude_reason}};
        } else {
            rec["status"] = "active";
        }
        rec["split"] = std::string(to_string(r.split));
        records.push_back(std::move(rec));
    }
    doc["records"] = std::move(records);
    ordered_json annotations = ordered_json::object();
    for (const auto& [id, boxes] : annotations_) {
        ordered_json arr = ordered_json::array();
        for (const BoundingBox& b : boxes) arr.push_back({b.x, b.y, b.w, b.h});
        annotations[id] = std::move(arr);
    }
    doc["annotations"] = std::move(annotations);
    return doc;
}

Manifest Manifest::from_json(const json& doc) {
    Manifest m;
    try {
        const int version = doc.at("schema_version").get<int>();
        if (version != kSchemaVersion) {
            throw ValidationError("unsupported manifest schema_version " +
                                  std::to_string(version));
        }
        m.split_seed = doc.value("split_seed", 0ULL);
        for (const json& rec : doc.at("records")) {
            ImageRecord r;
            r.image_id = rec.at("image_id").get<std::string>();
            r.file = rec.value("file", "");
            r.width = rec.at("width").get<int>();
            r.height = rec.at("height").get<int>();
            const json& prov = rec.at("provenance");
            if (prov.is_object()) {
                r.provenance = Provenance{prov.at("prompt_id").get<std::uint64_t>(),
                                          prov.at("quadrant").get<int>()};
            } else if (!(prov.is_string() && prov.get<std::string>() == "external")) {
                throw ValidationError("record " + r.image_id + ": bad provenance");
            }
            const json& status = rec.at("status");
            if (status.is_object()) {
                r.excluded = true;
                r.exclude_reason = status.at("excluded").get<std::string>();
            } else if (!(status.is_string() && status.get<std::string>() == "active")) {
                throw ValidationError("record " + r.image_id + ": bad status");
            }
            auto split = split_from_string(rec.value("split", "unassigned"));
            if (!split) throw ValidationError("record " + r.image_id + ": bad split");
            if (r.excluded && *split != Split::unassigned) {
                throw ValidationError("record " + r.image_id + ": excluded but assigned a split");
            }
            r.split = *split;
            m.add_record(std::move(r));
        }
        for (const auto& [id, arr] : doc.at("annotations").items()) {
            std::vector<BoundingBox> boxes;
            for (const json& b : arr) {
                if (!b.is_array() || b.size() != 4) {
                    throw ValidationError("image " + id + ": bad bbox array");
                }
                boxes.push_back(BoundingBox{b[0].get<double>(), b[1].get<double>(),
                                            b[2].get<double>(), b[3].get<double>()});
            }
            m.set_annotations(id, std::move(boxes));
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed manifest: ") + e.what());
    }
    return m;
}

void Manifest::save(const fs::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write manifest: " + path.string());
    out << to_json().dump(2) << '\n';
    if (!out) throw IoError("manifest write failed: " + path.string());
}

Manifest Manifest::load(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open manifest: " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
    return from_json(doc);
}

// --- COCO -------------------------------------------------------------------

CocoImport import_coco(const json& doc, const std::string& class_name) {
    CocoImport out;
    std::map<std::int64_t, std::string> id_to_name;   // COCO image id -> image_id
    std::map<std::string, std::pair<int, int>> dims;  // image_id -> (w, h)
    try {
        for (const json& im : doc.at("images")) {
            ImageRecord rec;
            const std::int64_t coco_id = im.at("id").get<std::int64_t>();
            const std::string file_name = im.value("file_name", "");
            rec.image_id = file_name.empty() ? std::to_string(coco_id) : basename_stem(file_name);
            rec.file = file_name;
            rec.width = im.at("width").get<int>();
            rec.height = im.at("height").get<int>();
            if (id_to_name.count(coco_id)) {
                throw ValidationError("duplicate COCO image id " + std::to_string(coco_id));
            }
            if (dims.count(rec.image_id)) {
                throw ValidationError("duplicate image_id '" + rec.image_id +
                                      "' derived from file names");
            }
            id_to_name[coco_id] = rec.image_id;
            dims[rec.image_id] = {rec.width, rec.height};
            out.records.push_back(std::move(rec));
        }

        std::set<std::int64_t> class_ids;
        for (const json& cat : doc.at("categories")) {
            if (cat.at("name").get<std::string>() == class_name) {
                class_ids.insert(cat.at("id").get<std::int64_t>());
            }
        }

        const json& annotations = doc.at("annotations");
        if (class_ids.empty() && !annotations.empty()) {
            throw ValidationError("no category named '" + class_name + "' in document");
        }

        std::vector<std::string> offenders;
        for (const json& ann : annotations) {
            if (class_ids.count(ann.at("category_id").get<std::int64_t>()) == 0) continue;
            const std::string ann_id = ann.contains("id") ? ann.at("id").dump() : "?";
            const std::int64_t image_ref = ann.at("image_id").get<std::int64_t>();
            auto named = id_to_name.find(image_ref);
            if (named == id_to_name.end()) {
                offenders.push_back("annotation " + ann_id + " references missing image id " +
                                    std::to_string(image_ref));
                continue;
            }
            const json& bbox = ann.at("bbox");
            if (!bbox.is_array() || bbox.size() != 4) {
                offenders.push_back("annotation " + ann_id + " has a malformed bbox");
                continue;
            }
            BoundingBox box{bbox[0].get<double>(), bbox[1].get<double>(),
                            bbox[2].get<double>(), bbox[3].get<double>()};
            const auto [w, h] = dims.at(named->second);
            try {
                validate_box(box, w, h, "annotation " + ann_id);
            } catch (const ValidationError& e) {
                offenders.push_back(e.what());
                continue;
            }
            out.annotations[named->second].push_back(box);
        }
        if (!offenders.empty()) {
            std::string msg = "COCO import: " + std::to_string(offenders.size()) +
                              " invalid annotation(s):";
            for (const std::string& o : offenders) msg += "\n  " + o;
            throw ValidationError(msg);
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed COCO document: ") + e.what());
    }
    return out;
}

ordered_json export_coco(const Manifest& manifest, const std::string& class_name) {
    ordered_json doc;
    doc["images"] = ordered_json::array();
    doc["annotations"] = ordered_json::array();
    doc["categories"] =
        ordered_json::array({ordered_json{{"id", 1}, {"name", class_name}}});

    std::int64_t next_ann_id = 1;
    std::int64_t next_img_id = 1;
    for (const std::string& id : manifest.active_ids()) {
        const ImageRecord& rec = *manifest.find(id);
        std::string ext = fs::path(rec.file).extension().string();
        if (ext.empty()) ext = ".png";
        doc["images"].push_back(ordered_json{{"id", next_img_id},
                                             {"file_name", id + ext},
                                             {"width", rec.width},
                                             {"height", rec.height}});
        for (const BoundingBox& b : manifest.annotations(id)) {
            doc["annotations"].push_back(ordered_json{{"id", next_ann_id++},
                                                      {"image_id", next_img_id},
                                                      {"category_id", 1},
                                                      {"bbox", {b.x, b.y, b.w, b.h}},
                                                      {"area", b.area()},
                                                      {"iscrowd", 0}});
        }
        ++next_img_id;
    }
    return doc;
}

// --- YOLO -------------------------------------------------------------------

std::map<std::string, std::vector<BoundingBox>> import_yolo(const fs::path& label_dir,
                                                            const Manifest& dims,
                                                            int class_id) {
    if (!fs::is_directory(label_dir)) {
        throw IoError("not a label directory: " + label_dir.string());
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(label_dir)) {
        if (entry.path().extension() == ".txt" && entry.path().filename() != "classes.txt") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());

    std::map<std::string, std::vector<BoundingBox>> out;
    for (const fs::path& file : files) {
        const std::string image_id = file.stem().string();
        const ImageRecord* rec = dims.find(image_id);
        if (!rec) {
            throw ValidationError(file.string() + ": no manifest record for image_id '" +
                                  image_id + "'");
        }
        std::ifstream in(file);
        if (!in) throw IoError("cannot open label file: " + file.string());
        std::vector<BoundingBox> boxes;
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            const std::string where = file.string() + ":" + std::to_string(line_no);
            std::istringstream fields(line);
            int cls = 0;
            double cx = 0, cy = 0, w = 0, h = 0;
            if (!(fields >> cls >> cx >> cy >> w >> h)) {
                throw ValidationError(where + ": expected 'class cx cy w h'");
            }
            std::string extra;
            if (fields >> extra) {
                throw ValidationError(where + ": trailing fields after 'class cx cy w h'");
            }
            if (cls != class_id) continue;
            for (double v : {cx, cy, w, h}) {
                if (v < 0.0 || v > 1.0) {
                    throw ValidationError(where + ": coordinate " + std::to_string(v) +
                                          " outside [0,1]");
                }
            }
            BoundingBox box;
            box.x = (cx - w / 2.0) * rec->width;
            box.y = (cy - h / 2.0) * rec->height;
            box.w = w * rec->width;
            box.h = h * rec->height;
            // Absorb float noise at the image edges before validating.
            if (box.x < 0 && box.x > -kEdgeTolerance) box.x = 0;
            if (box.y < 0 && box.y > -kEdgeTolerance) box.y = 0;
            if (box.x + box.w > rec->width && box.x + box.w < rec->width + kEdgeTolerance) {
                box.w = rec->width - box.x;
            }
            if (box.y + box.h > rec->height && box.y + box.h < rec->height + kEdgeTolerance) {
                box.h = rec->height - box.y;
            }
            validate_box(box, rec->width, rec->height, where);
            boxes.push_back(box);
        }
        out[image_id] = std::move(boxes);
    }
    return out;
}

void export_yolo(const Manifest& manifest, const fs::path& out_dir,
                 const std::string& class_name) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create directory: " + out_dir.string());

    for (const std::string& id : manifest.active_ids()) {
        const ImageRecord& rec = *manifest.find(id);
        const fs::path file = out_dir / (id + ".txt");
        std::ofstream out(file, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write label file: " + file.string());
        for (const BoundingBox& b : manifest.annotations(id)) {
            const double cx = (b.x + b.w / 2.0) / rec.width;
            const double cy = (b.y + b.h / 2.0) / rec.height;
            const double nw = b.w / rec.width;
            const double nh = b.h / rec.height;
            out << "0 " << format_norm(cx) << ' ' << format_norm(cy) << ' ' << format_norm(nw)
                << ' ' << format_norm(nh) << '\n';
        }
        if (!out) throw IoError("label write failed: " + file.string());
    }
    std::ofstream names(out_dir / "classes.txt", std::ios::binary | std::ios::trunc);
    if (!names) throw IoError("cannot write classes.txt");
    names << class_name << '\n';
}

// --- glue -------------------------------------------------------------------

std::vector<ImageRecord> records_from_store_index(
    const std::vector<gen::PersistedImage>& index) {
    std::vector<ImageRecord> out;
    out.reserve(index.size());
    for (const gen::PersistedImage& im : index) {
        ImageRecord rec;
        rec.image_id = im.image_id;
        rec.file = im.file;
        rec.width = im.width;
        rec.height = im.height;
        rec.provenance = Provenance{im.prompt_id, im.quadrant};
        out.push_back(std::move(rec));
    }
    return out;
}

void merge_records(Manifest& manifest, std::vector<ImageRecord> records) {
    for (ImageRecord& rec : records) manifest.add_record(std::move(rec));
}

void merge_annotations(Manifest& manifest,
                       const std::map<std::string, std::vector<BoundingBox>>& annotations) {
    for (const auto& [id, boxes] : annotations) manifest.set_annotations(id, boxes);
}

ordered_json stats_to_json(const DatasetStats& stats) {
    ordered_json j;
    j["images"] = stats.images;
    j["instances"] = stats.instances;
    j["mean_instances_per_image"] = stats.mean_instances_per_image;
    ordered_json hist = ordered_json::object();
    for (const auto& [boxes, count] : stats.instances_histogram) {
        hist[std::to_string(boxes)] = count;
    }
    j["instances_histogram"] = std::move(hist);
    j["per_split"] = stats.per_split;
    j["excluded"] = stats.excluded;
    j["unannotated_active"] = stats.unannotated_active;
    return j;
}

}  // namespace synthpipe::data
