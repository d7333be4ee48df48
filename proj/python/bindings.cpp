#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <fstream>

#include "synthpipe/backend.hpp"
#include "synthpipe/config.hpp"
#include "synthpipe/dataset.hpp"
#include "synthpipe/error.hpp"
#include "synthpipe/eval.hpp"
#include "synthpipe/image.hpp"
#include "synthpipe/orchestrator.hpp"
#include "synthpipe/prompt_matrix.hpp"

namespace py = pybind11;
using namespace synthpipe;

namespace {

py::bytes to_py_bytes(const std::vector<std::uint8_t>& data) {
    return py::bytes(reinterpret_cast<const char*>(data.data()), data.size());
}

std::vector<std::uint8_t> from_py_bytes(const py::bytes& data) {
    const std::string_view view = data;
    return {view.begin(), view.end()};
}

gen::BackendPolicy make_policy(int max_in_flight, double poll_interval,
                               double per_job_timeout, int max_retries) {
    gen::BackendPolicy policy;
    policy.max_in_flight = max_in_flight;
    policy.poll_interval_s = poll_interval;
    policy.per_job_timeout_s = per_job_timeout;
    policy.max_retries = max_retries;
    return policy;
}

}  // namespace

PYBIND11_MODULE(_synthpipe, m) {
    m.doc() = "Synthetic construction-worker dataset pipeline: prompt matrices, "
              "generation campaigns, dataset bookkeeping, detection metrics.";
    m.attr("__version__") = "0.1.0";

    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);
    py::register_exception<TransportError>(m, "TransportError", PyExc_RuntimeError);

    // --- prompts -------------------------------------------------------------
    py::enum_<prompts::Axis>(m, "Axis")
        .value("location", prompts::Axis::location)
        .value("weather_lighting", prompts::Axis::weather_lighting)
        .value("camera_film", prompts::Axis::camera_film)
        .value("aspect_ratio", prompts::Axis::aspect_ratio);

    py::class_<prompts::ParameterAxis>(m, "ParameterAxis")
        .def(py::init<>())
        .def(py::init([](prompts::Axis name, std::vector<std::string> values) {
                 return prompts::ParameterAxis{name, std::move(values)};
             }),
             py::arg("name"), py::arg("values"))
        .def_readwrite("name", &prompts::ParameterAxis::name)
        .def_readwrite("values", &prompts::ParameterAxis::values);

    py::class_<prompts::PromptTemplate>(m, "PromptTemplate")
        .def(py::init<>())
        .def_readwrite("command_prefix", &prompts::PromptTemplate::command_prefix)
        .def_readwrite("subject_clause", &prompts::PromptTemplate::subject_clause)
        .def_readwrite("axis_order", &prompts::PromptTemplate::axis_order);

    py::class_<prompts::PromptSpec>(m, "PromptSpec")
        .def_readonly("id", &prompts::PromptSpec::id)
        .def_readonly("combo_index", &prompts::PromptSpec::combo_index)
        .def_readonly("values", &prompts::PromptSpec::values)
        .def_readonly("rendered", &prompts::PromptSpec::rendered)
        .def("__repr__", [](const prompts::PromptSpec& s) {
            return "<PromptSpec id=" + std::to_string(s.id) + " '" + s.rendered + "'>";
        });

    m.def("expand_full", &prompts::expand_full, py::arg("template"), py::arg("axes"),
          "Full cartesian product of the four axis vocabularies.");
    m.def("sample", &prompts::sample, py::arg("template"), py::arg("axes"), py::arg("n"),
          py::arg("seed"), "Seeded sample without replacement, ids re-densified.");
    m.def("render", &prompts::render, py::arg("template"), py::arg("values"),
          "Exact command string for one combination (values indexed by Axis).");
    m.def("write_prompt_file", &prompts::write_prompt_file, py::arg("path"), py::arg("specs"));
    m.def("read_prompt_file", &prompts::read_prompt_file, py::arg("path"));

    // --- images --------------------------------------------------------------
    m.def(
        "split_quad_png",
        [](const py::bytes& png) {
            const auto quads = img::split_quad(img::decode_png(from_py_bytes(png)));
            py::list out;
            for (const img::Image& q : quads) out.append(to_py_bytes(img::encode_png(q)));
            return out;
        },
        py::arg("png"),
        "Split a 2x2 composite PNG into four PNGs, row-major from top-left.");
    m.def(
        "png_size",
        [](const py::bytes& png) {
            const img::Image im = img::decode_png(from_py_bytes(png));
            return py::make_tuple(im.width, im.height);
        },
        py::arg("png"), "Decode a PNG and return (width, height).");
    m.def(
        "procedural_quad_png",
        [](std::uint64_t seed, int width, int height) {
            return to_py_bytes(img::encode_png(gen::procedural_quad(seed, width, height)));
        },
        py::arg("seed"), py::arg("width") = 64, py::arg("height") = 64,
        "The mock backend's deterministic composite, as PNG bytes.");

    // --- campaign (mock backend) ----------------------------------------------
    py::class_<gen::CampaignReport>(m, "CampaignReport")
        .def_readonly("prompts_total", &gen::CampaignReport::prompts_total)
        .def_readonly("completed", &gen::CampaignReport::completed)
        .def_readonly("failed", &gen::CampaignReport::failed)
        .def_readonly("images_persisted", &gen::CampaignReport::images_persisted)
        .def_readonly("wall_time_seconds", &gen::CampaignReport::wall_time_s)
        .def("__repr__", [](const gen::CampaignReport& r) {
            return "<CampaignReport completed=" + std::to_string(r.completed) + " failed=" +
                   std::to_string(r.failed) + " images=" + std::to_string(r.images_persisted) +
                   ">";
        });

    m.def(
        "run_mock_campaign",
        [](const std::vector<prompts::PromptSpec>& specs, const std::filesystem::path& store,
           int max_in_flight, double poll_interval, double per_job_timeout, int max_retries,
           int polls_until_ready, int image_width, int image_height) {
            gen::MockBackendConfig mock;
            mock.polls_until_ready = polls_until_ready;
            mock.image_width = image_width;
            mock.image_height = image_height;
            gen::MockBackend backend(mock);
            return gen::run_campaign(
                specs, make_policy(max_in_flight, poll_interval, per_job_timeout, max_retries),
                backend, store);
        },
        py::arg("prompts"), py::arg("store_dir"), py::arg("max_in_flight") = 3,
        py::arg("poll_interval") = 0.002, py::arg("per_job_timeout") = 10.0,
        py::arg("max_retries") = 3, py::arg("polls_until_ready") = 1,
        py::arg("image_width") = 64, py::arg("image_height") = 64,
        py::call_guard<py::gil_scoped_release>(),
        "Drive a campaign against the deterministic in-process mock backend.");
    m.def(
        "resume_mock_campaign",
        [](const std::filesystem::path& store, int max_in_flight, double poll_interval,
           double per_job_timeout, int max_retries, int polls_until_ready, int image_width,
           int image_height) {
            gen::MockBackendConfig mock;
            mock.polls_until_ready = polls_until_ready;
            mock.image_width = image_width;
            mock.image_height = image_height;
            gen::MockBackend backend(mock);
            return gen::resume_campaign(
                store, make_policy(max_in_flight, poll_interval, per_job_timeout, max_retries),
                backend);
        },
        py::arg("store_dir"), py::arg("max_in_flight") = 3, py::arg("poll_interval") = 0.002,
        py::arg("per_job_timeout") = 10.0, py::arg("max_retries") = 3,
        py::arg("polls_until_ready") = 1, py::arg("image_width") = 64,
        py::arg("image_height") = 64, py::call_guard<py::gil_scoped_release>(),
        "Resume an interrupted mock campaign; completed work is never redone.");

    // --- dataset ---------------------------------------------------------------
    py::class_<data::BoundingBox>(m, "BoundingBox")
        .def(py::init<>())
        .def(py::init([](double x, double y, double w, double h) {
                 return data::BoundingBox{x, y, w, h};
             }),
             py::arg("x"), py::arg("y"), py::arg("w"), py::arg("h"))
        .def_readwrite("x", &data::BoundingBox::x)
        .def_readwrite("y", &data::BoundingBox::y)
        .def_readwrite("w", &data::BoundingBox::w)
        .def_readwrite("h", &data::BoundingBox::h)
        .def("area", &data::BoundingBox::area)
        .def("__repr__", [](const data::BoundingBox& b) {
            return "<BoundingBox " + std::to_string(b.x) + "," + std::to_string(b.y) + " " +
                   std::to_string(b.w) + "x" + std::to_string(b.h) + ">";
        });

    py::enum_<data::Split>(m, "Split")
        .value("unassigned", data::Split::unassigned)
        .value("train", data::Split::train)
        .value("val", data::Split::val)
        .value("test", data::Split::test);

    py::class_<data::Manifest>(m, "Manifest")
        .def(py::init<>())
        .def(
            "add_image",
            [](data::Manifest& self, const std::string& image_id, const std::string& file,
               int width, int height) {
                data::ImageRecord rec;
                rec.image_id = image_id;
                rec.file = file;
                rec.width = width;
                rec.height = height;
                self.add_record(std::move(rec));
            },
            py::arg("image_id"), py::arg("file"), py::arg("width"), py::arg("height"))
        .def("set_annotations", &data::Manifest::set_annotations, py::arg("image_id"),
             py::arg("boxes"))
        .def("annotations", &data::Manifest::annotations, py::arg("image_id"))
        .def("active_ids", &data::Manifest::active_ids)
        .def(
            "exclude",
            [](data::Manifest& self, const std::vector<std::string>& ids,
               const std::string& reason) {
                const auto result = self.exclude(ids, reason);
                return py::make_tuple(result.newly_excluded, result.already_excluded);
            },
            py::arg("image_ids"), py::arg("reason"),
            "Returns (newly_excluded, already_excluded_ids).")
        .def(
            "assign_splits",
            [](data::Manifest& self, std::uint64_t train, std::uint64_t val,
               std::uint64_t test, std::uint64_t seed, bool group_by_prompt) {
                self.assign_splits({train, val, test}, seed, group_by_prompt);
            },
            py::arg("train"), py::arg("val"), py::arg("test"), py::arg("seed"),
            py::arg("group_by_prompt") = false)
        .def(
            "split_of",
            [](const data::Manifest& self, const std::string& image_id) {
                const data::ImageRecord* rec = self.find(image_id);
                if (!rec) throw ValidationError("unknown image_id: " + image_id);
                return rec->split;
            },
            py::arg("image_id"))
        .def(
            "stats",
            [](const data::Manifest& self) {
                const data::DatasetStats s = self.stats();
                py::dict out;
                out["images"] = s.images;
                out["instances"] = s.instances;
                out["mean_instances_per_image"] = s.mean_instances_per_image;
                py::dict hist;
                for (const auto& [k, v] : s.instances_histogram) {
                    hist[py::int_(k)] = v;
                }
                out["instances_histogram"] = hist;
                out["per_split"] = s.per_split;
                out["excluded"] = s.excluded;
                out["unannotated_active"] = s.unannotated_active;
                return out;
            })
        .def("save", &data::Manifest::save, py::arg("path"))
        .def_static("load", &data::Manifest::load, py::arg("path"))
        .def(
            "import_store",
            [](data::Manifest& self, const std::filesystem::path& store_dir) {
                gen::CampaignStore store(store_dir);
                std::size_t added = 0;
                for (auto& rec : data::records_from_store_index(store.read_image_index())) {
                    if (self.find(rec.image_id)) continue;
                    self.add_record(std::move(rec));
                    ++added;
                }
                return added;
            },
            py::arg("store_dir"), "Bootstrap records from a campaign store's image index.")
        .def(
            "export_yolo",
            [](const data::Manifest& self, const std::filesystem::path& dir) {
                data::export_yolo(self, dir);
            },
            py::arg("directory"))
        .def(
            "import_yolo",
            [](data::Manifest& self, const std::filesystem::path& dir) {
                data::merge_annotations(self, data::import_yolo(dir, self));
            },
            py::arg("directory"))
        .def(
            "export_coco",
            [](const data::Manifest& self, const std::filesystem::path& path) {
                std::ofstream out(path, std::ios::binary | std::ios::trunc);
                if (!out) throw IoError("cannot write: " + path.string());
                out << data::export_coco(self).dump(2) << '\n';
            },
            py::arg("path"))
        .def(
            "import_coco",
            [](data::Manifest& self, const std::filesystem::path& path) {
                std::ifstream in(path, std::ios::binary);
                if (!in) throw IoError("cannot open: " + path.string());
                nlohmann::json doc;
                try {
                    in >> doc;
                } catch (const nlohmann::json::exception& e) {
                    throw ValidationError(path.string() + ": " + e.what());
                }
                data::CocoImport imported = data::import_coco(doc);
                std::size_t added = 0;
                for (auto& rec : imported.records) {
                    if (self.find(rec.image_id)) continue;
                    self.add_record(std::move(rec));
                    ++added;
                }
                data::merge_annotations(self, imported.annotations);
                return added;
            },
            py::arg("path"), "Returns the number of newly added image records.");

    // --- evaluation -------------------------------------------------------------
    py::class_<eval::Detection>(m, "Detection")
        .def(py::init<>())
        .def(py::init([](std::string image_id, data::BoundingBox box, double confidence) {
                 return eval::Detection{std::move(image_id), box, confidence};
             }),
             py::arg("image_id"), py::arg("box"), py::arg("confidence"))
        .def_readwrite("image_id", &eval::Detection::image_id)
        .def_readwrite("box", &eval::Detection::box)
        .def_readwrite("confidence", &eval::Detection::confidence);

    py::class_<eval::ThresholdEval>(m, "ThresholdEval")
        .def_readonly("threshold", &eval::ThresholdEval::threshold)
        .def_readonly("ap", &eval::ThresholdEval::ap)
        .def_readonly("tp", &eval::ThresholdEval::tp)
        .def_readonly("fp", &eval::ThresholdEval::fp)
        .def_readonly("fn", &eval::ThresholdEval::fn)
        .def_property_readonly("interpolated_precision", [](const eval::ThresholdEval& t) {
            return std::vector<double>(t.curve.interpolated.begin(),
                                       t.curve.interpolated.end());
        });

    py::class_<eval::EvalReport>(m, "EvalReport")
        .def_readonly("ap_at_50", &eval::EvalReport::ap_at_50)
        .def_readonly("ap_50_95", &eval::EvalReport::ap_50_95)
        .def_readonly("per_threshold", &eval::EvalReport::per_threshold)
        .def_readonly("gt_total", &eval::EvalReport::gt_total)
        .def_readonly("detection_total", &eval::EvalReport::detection_total)
        .def("__repr__", [](const eval::EvalReport& r) {
            return "<EvalReport ap@0.5=" + std::to_string(r.ap_at_50) + " ap@[0.5:0.95]=" +
                   std::to_string(r.ap_50_95) + ">";
        });

    m.def("iou", &eval::iou, py::arg("a"), py::arg("b"),
          "Intersection over union of two axis-aligned boxes.");
    m.def(
        "average_precision",
        [](const std::map<std::string, std::vector<data::BoundingBox>>& ground_truth,
           const std::vector<eval::Detection>& detections, double threshold) {
            return eval::average_precision({ground_truth, detections}, threshold);
        },
        py::arg("ground_truth"), py::arg("detections"), py::arg("threshold") = 0.5,
        "AP at one IoU threshold (101-point interpolation).");
    m.def(
        "ap_range",
        [](const std::map<std::string, std::vector<data::BoundingBox>>& ground_truth,
           const std::vector<eval::Detection>& detections) {
            return eval::ap_range({ground_truth, detections});
        },
        py::arg("ground_truth"), py::arg("detections"),
        "Full report: AP at 0.50..0.95 plus their mean.");
    m.def("read_detections", &eval::read_detections, py::arg("path"));
    m.def("write_detections", &eval::write_detections, py::arg("path"), py::arg("detections"));
}
