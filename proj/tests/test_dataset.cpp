#include <doctest.h>

#include <fstream>
#include <random>
#include <set>

#include "synthpipe/dataset.hpp"
#include "synthpipe/error.hpp"

using namespace synthpipe;
using namespace synthpipe::data;
using nlohmann::json;

namespace {

ImageRecord record(const std::string& id, int w, int h) {
    ImageRecord r;
    r.image_id = id;
    r.file = id + ".png";
    r.width = w;
    r.height = h;
    return r;
}

Manifest random_manifest(std::mt19937_64& rng, int n_images) {
    Manifest m;
    for (int i = 0; i < n_images; ++i) {
        const int w = 50 + static_cast<int>(rng() % 150);
        const int h = 50 + static_cast<int>(rng() % 150);
        const std::string id = "im_" + std::to_string(i);
        m.add_record(record(id, w, h));
        std::vector<BoundingBox> boxes;
        const int n_boxes = static_cast<int>(rng() % 5);
        for (int b = 0; b < n_boxes; ++b) {
            BoundingBox box;
            box.x = static_cast<double>(rng() % (w - 10));
            box.y = static_cast<double>(rng() % (h - 10));
            box.w = 1.0 + static_cast<double>(rng() % static_cast<int>(w - box.x - 1));
            box.h = 1.0 + static_cast<double>(rng() % static_cast<int>(h - box.y - 1));
            boxes.push_back(box);
        }
        m.set_annotations(id, boxes);
    }
    return m;
}

bool boxes_close(const std::vector<BoundingBox>& a, const std::vector<BoundingBox>& b,
                 double tol) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::abs(a[i].x - b[i].x) > tol || std::abs(a[i].y - b[i].y) > tol ||
            std::abs(a[i].w - b[i].w) > tol || std::abs(a[i].h - b[i].h) > tol) {
            return false;
        }
    }
    return true;
}

}  // namespace

TEST_CASE("bounding box validation") {
    CHECK_NOTHROW(validate_box({0, 0, 640, 480}, 640, 480, "t"));
    CHECK_THROWS_AS(validate_box({10, 20, 0, 5}, 640, 480, "t"), ValidationError);
    CHECK_THROWS_AS(validate_box({-1, 0, 5, 5}, 640, 480, "t"), ValidationError);
    CHECK_THROWS_AS(validate_box({636, 0, 5, 5}, 640, 480, "t"), ValidationError);
    CHECK_THROWS_AS(validate_box({0, 476, 5, 5}, 640, 480, "t"), ValidationError);
}

TEST_CASE("import_coco maps fields directly") {
    const json doc = {
        {"images", {{{"id", 1}, {"file_name", "scene.png"}, {"width", 640}, {"height", 480}}}},
        {"annotations",
         {{{"id", 11}, {"image_id", 1}, {"category_id", 5}, {"bbox", {10, 20, 100, 200}}}}},
        {"categories", {{{"id", 5}, {"name", "worker"}}}}};
    CocoImport imported = import_coco(doc);
    REQUIRE(imported.records.size() == 1);
    CHECK(imported.records[0].image_id == "scene");
    CHECK(imported.records[0].width == 640);
    REQUIRE(imported.annotations.at("scene").size() == 1);
    CHECK(imported.annotations.at("scene")[0] == BoundingBox{10, 20, 100, 200});
}

TEST_CASE("import_coco rejects degenerate boxes and lists every offender") {
    const json doc = {
        {"images", {{{"id", 1}, {"file_name", "a.png"}, {"width", 100}, {"height", 100}}}},
        {"annotations",
         {{{"id", 7}, {"image_id", 1}, {"category_id", 1}, {"bbox", {0, 0, 0, 10}}},
          {{"id", 8}, {"image_id", 2}, {"category_id", 1}, {"bbox", {0, 0, 5, 5}}},
          {{"id", 9}, {"image_id", 1}, {"category_id", 1}, {"bbox", {90, 90, 20, 20}}}}},
        {"categories", {{{"id", 1}, {"name", "worker"}}}}};
    try {
        import_coco(doc);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("annotation 7") != std::string::npos);
        CHECK(msg.find("annotation 8") != std::string::npos);
        CHECK(msg.find("annotation 9") != std::string::npos);
        CHECK(msg.find("3 invalid annotation(s)") != std::string::npos);
    }
}

TEST_CASE("import_coco ignores other categories; missing class is an error") {
    json doc = {
        {"images", {{{"id", 1}, {"file_name", "a.png"}, {"width", 100}, {"height", 100}}}},
        {"annotations",
         {{{"id", 1}, {"image_id", 1}, {"category_id", 2}, {"bbox", {0, 0, 5, 5}}},
          {{"id", 2}, {"image_id", 1}, {"category_id", 1}, {"bbox", {1, 1, 4, 4}}}}},
        {"categories", {{{"id", 1}, {"name", "worker"}}, {{"id", 2}, {"name", "truck"}}}}};
    CocoImport imported = import_coco(doc);
    CHECK(imported.annotations.at("a").size() == 1);

    doc["categories"] = json::array({{{"id", 2}, {"name", "truck"}}});
    CHECK_THROWS_WITH_AS(import_coco(doc), doctest::Contains("no category named"),
                         ValidationError);
}

TEST_CASE("coco round-trip preserves the dataset (randomized)") {
    std::mt19937_64 rng(1234);
    for (int trial = 0; trial < 25; ++trial) {
        Manifest m = random_manifest(rng, 1 + static_cast<int>(rng() % 8));
        const json doc = export_coco(m);
        CocoImport back = import_coco(doc);
        REQUIRE(back.records.size() == m.records().size());
        for (const ImageRecord& rec : back.records) {
            const ImageRecord* orig = m.find(rec.image_id);
            REQUIRE(orig != nullptr);
            CHECK(rec.width == orig->width);
            CHECK(rec.height == orig->height);
            CHECK(boxes_close(back.annotations[rec.image_id], m.annotations(rec.image_id),
                              1e-9));
        }
    }
}

TEST_CASE("import_yolo converts center-normalized lines to pixel boxes") {
    Manifest m;
    m.add_record(record("frame", 1000, 800));
    const auto dir = std::filesystem::temp_directory_path() / "synthpipe_yolo_import";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);

    SUBCASE("the arithmetic case") {
        std::ofstream(dir / "frame.txt") << "0 0.5 0.5 0.5 0.5\n";
        auto annotations = import_yolo(dir, m);
        REQUIRE(annotations.at("frame").size() == 1);
        const BoundingBox& box = annotations.at("frame")[0];
        CHECK(box.x == doctest::Approx(250).epsilon(1e-12));
        CHECK(box.y == doctest::Approx(200).epsilon(1e-12));
        CHECK(box.w == doctest::Approx(500).epsilon(1e-12));
        CHECK(box.h == doctest::Approx(400).epsilon(1e-12));
    }

    SUBCASE("box poking out of the image is rejected with file and line") {
        std::ofstream(dir / "frame.txt") << "0 0.5 0.5 0.5 0.5\n0 0.0 0.5 0.5 0.5\n";
        CHECK_THROWS_WITH_AS(import_yolo(dir, m), doctest::Contains("frame.txt:2"),
                             ValidationError);
    }

    SUBCASE("coordinates outside [0,1] are rejected") {
        std::ofstream(dir / "frame.txt") << "0 1.2 0.5 0.1 0.1\n";
        CHECK_THROWS_AS(import_yolo(dir, m), ValidationError);
    }

    SUBCASE("labels for unknown images are rejected") {
        std::ofstream(dir / "ghost.txt") << "0 0.5 0.5 0.1 0.1\n";
        CHECK_THROWS_WITH_AS(import_yolo(dir, m), doctest::Contains("ghost"),
                             ValidationError);
    }

    SUBCASE("other classes are skipped") {
        std::ofstream(dir / "frame.txt") << "1 0.5 0.5 0.1 0.1\n0 0.5 0.5 0.2 0.2\n";
        auto annotations = import_yolo(dir, m);
        CHECK(annotations.at("frame").size() == 1);
    }

    std::filesystem::remove_all(dir);
}

TEST_CASE("yolo round-trip reproduces boxes within 1e-6 (randomized)") {
    std::mt19937_64 rng(777);
    const auto dir = std::filesystem::temp_directory_path() / "synthpipe_yolo_rt";
    for (int trial = 0; trial < 25; ++trial) {
        std::filesystem::remove_all(dir);
        Manifest m = random_manifest(rng, 1 + static_cast<int>(rng() % 6));
        export_yolo(m, dir);
        CHECK(std::filesystem::exists(dir / "classes.txt"));
        auto back = import_yolo(dir, m);
        for (const ImageRecord& rec : m.records()) {
            CHECK(boxes_close(back[rec.image_id], m.annotations(rec.image_id), 1e-6));
        }
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("exclusion bookkeeping") {
    Manifest m;
    for (int i = 0; i < 10; ++i) m.add_record(record("im_" + std::to_string(i), 64, 64));

    ExcludeResult result = m.exclude({"im_1", "im_3"}, "no workers visible");
    CHECK(result.newly_excluded == 2);
    CHECK(m.active_ids().size() == 8);
    CHECK(m.find("im_1")->excluded);
    CHECK(m.find("im_1")->exclude_reason == "no workers visible");

    SUBCASE("already-excluded ids are warnings, not errors") {
        ExcludeResult again = m.exclude({"im_1", "im_5"}, "duplicate flaw");
        CHECK(again.newly_excluded == 1);
        CHECK(again.already_excluded == std::vector<std::string>{"im_1"});
        CHECK(m.find("im_1")->exclude_reason == "no workers visible");  // first reason sticks
    }
    SUBCASE("unknown ids are errors") {
        CHECK_THROWS_AS(m.exclude({"im_99"}, "r"), ValidationError);
    }
    SUBCASE("excluding nothing changes nothing") {
        CHECK(m.exclude({}, "r").newly_excluded == 0);
        CHECK(m.active_ids().size() == 8);
    }
    SUBCASE("a reason is mandatory") {
        CHECK_THROWS_AS(m.exclude({"im_0"}, ""), ValidationError);
    }
    SUBCASE("excluded records lose their split and stay out of stats") {
        m.assign_splits({6, 1, 1}, 9);
        m.exclude({"im_0"}, "flaw");
        CHECK(m.find("im_0")->split == Split::unassigned);
        CHECK(m.stats().images == 7);
    }
}

TEST_CASE("split assignment: exact sizes, disjoint cover, deterministic") {
    Manifest m;
    for (int i = 0; i < 100; ++i) m.add_record(record("im_" + std::to_string(i), 64, 64));
    m.exclude({"im_7"}, "flaw");

    m.assign_splits({80, 10, 9}, 42);
    std::map<Split, std::set<std::string>> buckets;
    for (const ImageRecord& r : m.records()) {
        if (r.active()) buckets[r.split].insert(r.image_id);
    }
    CHECK(buckets[Split::train].size() == 80);
    CHECK(buckets[Split::val].size() == 10);
    CHECK(buckets[Split::test].size() == 9);
    CHECK(buckets[Split::unassigned].empty());

    // Same seed reproduces the same assignment on a rebuilt manifest.
    Manifest m2;
    for (int i = 0; i < 100; ++i) m2.add_record(record("im_" + std::to_string(i), 64, 64));
    m2.exclude({"im_7"}, "flaw");
    m2.assign_splits({80, 10, 9}, 42);
    for (const ImageRecord& r : m.records()) {
        CHECK(m2.find(r.image_id)->split == r.split);
    }

    // A different seed moves things around.
    Manifest m3;
    for (int i = 0; i < 100; ++i) m3.add_record(record("im_" + std::to_string(i), 64, 64));
    m3.exclude({"im_7"}, "flaw");
    m3.assign_splits({80, 10, 9}, 43);
    int moved = 0;
    for (const ImageRecord& r : m.records()) {
        if (r.active() && m3.find(r.image_id)->split != r.split) ++moved;
    }
    CHECK(moved > 0);

    SUBCASE("count mismatch reports both sums") {
        CHECK_THROWS_WITH_AS(m.assign_splits({80, 10, 8}, 1), doctest::Contains("98"),
                             ValidationError);
    }
}

TEST_CASE("split of a single image") {
    Manifest m;
    m.add_record(record("only", 64, 64));
    m.assign_splits({1, 0, 0}, 5);
    CHECK(m.find("only")->split == Split::train);
}

TEST_CASE("group-by-prompt keeps quadrant siblings in one split") {
    Manifest m;
    for (int p = 0; p < 8; ++p) {
        for (int q = 0; q < 4; ++q) {
            ImageRecord r = record(gen::image_file_name(p, q), 32, 32);
            r.provenance = Provenance{static_cast<std::uint64_t>(p), q};
            m.add_record(std::move(r));
        }
    }
    m.assign_splits({24, 4, 4}, 11, /*group_by_prompt=*/true);
    for (int p = 0; p < 8; ++p) {
        const Split s = m.find(gen::image_file_name(p, 0))->split;
        for (int q = 1; q < 4; ++q) {
            CHECK(m.find(gen::image_file_name(p, q))->split == s);
        }
    }
    CHECK_THROWS_WITH_AS(m.assign_splits({25, 4, 3}, 11, true),
                         doctest::Contains("not reachable"), ValidationError);
}

TEST_CASE("stats counts active records only") {
    Manifest m;
    m.add_record(record("a", 100, 100));
    m.add_record(record("b", 100, 100));
    m.set_annotations("a", {{0, 0, 10, 10}, {5, 5, 10, 10}, {20, 20, 5, 5}});

    DatasetStats s = m.stats();
    CHECK(s.images == 2);
    CHECK(s.instances == 3);
    CHECK(s.instances_histogram == std::map<std::uint64_t, std::uint64_t>{{0, 1}, {3, 1}});
    CHECK(s.mean_instances_per_image == doctest::Approx(1.5));
    CHECK(s.unannotated_active == 1);
    CHECK(m.unannotated_active_ids() == std::vector<std::string>{"b"});

    m.exclude({"a"}, "flaw");
    s = m.stats();
    CHECK(s.images == 1);
    CHECK(s.instances == 0);
    CHECK(s.excluded == 1);

    CHECK(Manifest{}.stats().images == 0);
    CHECK(Manifest{}.stats().instances == 0);
}

TEST_CASE("manifest json round-trip and validation") {
    std::mt19937_64 rng(5);
    Manifest m = random_manifest(rng, 6);
    ImageRecord generated = record("img_000001_2", 64, 64);
    generated.provenance = Provenance{1, 2};
    m.add_record(generated);
    m.exclude({"im_2"}, "blurred");
    m.assign_splits({4, 2, 0}, 3);

    Manifest back = Manifest::from_json(m.to_json());
    CHECK(back.records().size() == m.records().size());
    for (const ImageRecord& r : m.records()) {
        const ImageRecord* b = back.find(r.image_id);
        REQUIRE(b != nullptr);
        CHECK(b->excluded == r.excluded);
        CHECK(b->split == r.split);
        CHECK(b->provenance.has_value() == r.provenance.has_value());
        CHECK(boxes_close(back.annotations(r.image_id), m.annotations(r.image_id), 0));
    }
    CHECK(back.split_seed == m.split_seed);

    SUBCASE("save/load") {
        const auto path = std::filesystem::temp_directory_path() / "synthpipe_manifest.json";
        m.save(path);
        Manifest loaded = Manifest::load(path);
        CHECK(loaded.records().size() == m.records().size());
        std::filesystem::remove(path);
    }

    SUBCASE("a manifest can never hold an out-of-bounds box") {
        json doc = m.to_json();
        doc["annotations"]["im_0"] = json::array({json::array({-5, 0, 10, 10})});
        CHECK_THROWS_AS(Manifest::from_json(doc), ValidationError);
    }

    SUBCASE("excluded records must not carry a split") {
        json doc = m.to_json();
        for (auto& rec : doc["records"]) {
            if (rec["image_id"] == "im_2") rec["split"] = "train";
        }
        CHECK_THROWS_AS(Manifest::from_json(doc), ValidationError);
    }

    SUBCASE("duplicate provenance is rejected") {
        ImageRecord dup = record("another", 64, 64);
        dup.provenance = Provenance{1, 2};
        CHECK_THROWS_WITH_AS(m.add_record(dup), doctest::Contains("provenance"),
                             ValidationError);
    }

    SUBCASE("unknown schema version is rejected") {
        json doc = m.to_json();
        doc["schema_version"] = 99;
        CHECK_THROWS_AS(Manifest::from_json(doc), ValidationError);
    }
}
