#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "synthpipe/orchestrator.hpp"

namespace synthpipe::data {

// Pixel-space box, top-left origin. Doubles because interchange formats carry
// fractional coordinates.
struct BoundingBox {
    double x = 0;
    double y = 0;
    double w = 0;
    double h = 0;

    double area() const { return w * h; }
    bool operator==(const BoundingBox&) const = default;
};

// Throws ValidationError when the box is degenerate or leaves the image.
void validate_box(const BoundingBox& box, int image_w, int image_h,
                  const std::string& context);

struct Provenance {
    std::uint64_t prompt_id = 0;
    int quadrant = 0;
};

enum class Split { unassigned, train, val, test };
std::string_view to_string(Split split);
std::optional<Split> split_from_string(std::string_view name);

struct ImageRecord {
    std::string image_id;
    std::string file;
    int width = 0;
    int height = 0;
    std::optional<Provenance> provenance;  // nullopt for externally sourced images
    bool excluded = false;
    std::string exclude_reason;  // non-empty iff excluded
    Split split = Split::unassigned;

    bool active() const { return !excluded; }
};

struct SplitCounts {
    std::uint64_t train = 0;
    std::uint64_t val = 0;
    std::uint64_t test = 0;
    std::uint64_t total() const { return train + val + test; }
};

struct ExcludeResult {
    std::size_t newly_excluded = 0;
    std::vector<std::string> already_excluded;  // no-ops, reported as warnings
};

struct DatasetStats {
    std::uint64_t images = 0;     // active records only
    std::uint64_t instances = 0;  // boxes on active records
    double mean_instances_per_image = 0.0;
    std::map<std::uint64_t, std::uint64_t> instances_histogram;  // boxes-per-image -> images
    std::map<std::string, std::uint64_t> per_split;
    std::uint64_t excluded = 0;
    std::uint64_t unannotated_active = 0;  // flagged for review, never auto-excluded
};

// The authoritative dataset index. Single-writer: mutations require exclusive
// ownership; reads are pure over the current snapshot.
class Manifest {
public:
    static constexpr int kSchemaVersion = 1;

    void add_record(ImageRecord record);  // rejects duplicate ids / (prompt, quadrant)
    void set_annotations(const std::string& image_id, std::vector<BoundingBox> boxes);

    const ImageRecord* find(const std::string& image_id) const;
    const std::vector<ImageRecord>& records() const { return records_; }
    const std::vector<BoundingBox>& annotations(const std::string& image_id) const;
    std::vector<std::string> active_ids() const;  // sorted

    ExcludeResult exclude(const std::vector<std::string>& image_ids, const std::string& reason);

    // Deterministic seeded shuffle of the sorted active ids, partitioned in
    // order train/val/test. counts must sum to the active-record count.
    // group_by_prompt keeps the four quadrants of one prompt in one split.
    void assign_splits(const SplitCounts& counts, std::uint64_t seed,
                       bool group_by_prompt = false);

    DatasetStats stats() const;
    std::vector<std::string> unannotated_active_ids() const;

    nlohmann::ordered_json to_json() const;
    static Manifest from_json(const nlohmann::json& doc);
    void save(const std::filesystem::path& path) const;
    static Manifest load(const std::filesystem::path& path);

    std::uint64_t split_seed = 0;

private:
    std::vector<ImageRecord> records_;
    std::map<std::string, std::size_t> index_;  // image_id -> records_ position
    std::set<std::pair<std::uint64_t, int>> provenance_keys_;
    std::map<std::string, std::vector<BoundingBox>> annotations_;
};

// --- interchange -----------------------------------------------------------

struct CocoImport {
    std::vector<ImageRecord> records;
    std::map<std::string, std::vector<BoundingBox>> annotations;
};

// COCO object-detection JSON (images / annotations / categories, bbox as
// [x, y, w, h]). Only annotations of `class_name` are imported. Validation
// failures are aggregated: the error lists every offending annotation id.
CocoImport import_coco(const nlohmann::json& doc, const std::string& class_name = "worker");
nlohmann::ordered_json export_coco(const Manifest& manifest,
                                   const std::string& class_name = "worker");

// YOLO label directory: one `<image_id>.txt` per image with lines
// `class cx cy w h`, center-based and normalized to [0,1]. The manifest
// supplies image dimensions. Returns pixel-space annotations.
std::map<std::string, std::vector<BoundingBox>> import_yolo(
    const std::filesystem::path& label_dir, const Manifest& dims, int class_id = 0);

// Writes one label file per active image plus classes.txt declaring class 0.
void export_yolo(const Manifest& manifest, const std::filesystem::path& out_dir,
                 const std::string& class_name = "worker");

// Bootstrap records from a generation campaign's image index.
std::vector<ImageRecord> records_from_store_index(const std::vector<gen::PersistedImage>& index);

// Merge imported records/annotations into the manifest.
void merge_records(Manifest& manifest, std::vector<ImageRecord> records);
void merge_annotations(Manifest& manifest,
                       const std::map<std::string, std::vector<BoundingBox>>& annotations);

nlohmann::ordered_json stats_to_json(const DatasetStats& stats);

}  // namespace synthpipe::data
