// synthpipe: synthetic dataset pipeline CLI.
//
// Subcommands follow the pipeline stages: prompts expand|sample,
// generate run|resume, dataset import|exclude|split|stats|export, eval run.
// Machine-readable output is JSON on stdout; diagnostics go to stderr.
// Exit codes: 0 success, 1 validation error, 2 runtime/IO error.

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "synthpipe/config.hpp"
#include "synthpipe/dataset.hpp"
#include "synthpipe/error.hpp"
#include "synthpipe/eval.hpp"
#include "synthpipe/orchestrator.hpp"
#include "synthpipe/prompt_matrix.hpp"

namespace sp = synthpipe;
namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

struct GlobalOpts {
    std::string config_path = "config/default.toml";
    std::string output_path;  // empty: stdout
    bool json = true;         // stdout is always JSON; kept as an explicit flag
};

void emit(const GlobalOpts& opts, const std::string& payload) {
    if (opts.output_path.empty()) {
        std::cout << payload << '\n';
        return;
    }
    std::ofstream out(opts.output_path, std::ios::binary | std::ios::trunc);
    if (!out) throw sp::IoError("cannot write output file: " + opts.output_path);
    out << payload << '\n';
    if (!out) throw sp::IoError("write failed: " + opts.output_path);
}

std::vector<std::string> split_csv(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

// --- prompts ----------------------------------------------------------------

int cmd_prompts(const GlobalOpts& opts, bool sample_mode, std::uint64_t n,
                std::uint64_t seed) {
    const sp::PipelineConfig cfg = sp::PipelineConfig::load(opts.config_path);
    std::vector<sp::prompts::PromptSpec> specs =
        sample_mode ? sp::prompts::sample(cfg.prompt_template, cfg.axes, n, seed)
                    : sp::prompts::expand_full(cfg.prompt_template, cfg.axes);

    const fs::path target =
        opts.output_path.empty() ? cfg.prompts_file : fs::path(opts.output_path);
    sp::prompts::write_prompt_file(target, specs);
    std::cerr << "wrote " << specs.size() << " prompts to " << target.string() << '\n';

    ordered_json j;
    j["prompts"] = specs.size();
    j["file"] = target.string();
    std::cout << j.dump() << '\n';
    return 0;
}

// --- generate ---------------------------------------------------------------

int cmd_generate(const GlobalOpts& opts, bool resume, bool allow_failures) {
    const sp::PipelineConfig cfg = sp::PipelineConfig::load(opts.config_path);
    auto backend = cfg.make_backend();

    sp::gen::CampaignReport report;
    if (resume) {
        report = sp::gen::resume_campaign(cfg.store_dir, cfg.policy, *backend);
    } else {
        const auto specs = sp::prompts::read_prompt_file(cfg.prompts_file);
        report = sp::gen::run_campaign(specs, cfg.policy, *backend, cfg.store_dir);
    }

    emit(opts, sp::gen::report_to_json(report));
    if (report.failed > 0 && !allow_failures) {
        std::cerr << report.failed << " job(s) failed\n";
        return 2;
    }
    return 0;
}

// --- dataset ----------------------------------------------------------------

sp::data::Manifest load_or_new_manifest(const fs::path& path) {
    if (fs::exists(path)) return sp::data::Manifest::load(path);
    return {};
}

int cmd_dataset_import(const GlobalOpts& opts, const std::string& format,
                       const std::string& source, const std::string& class_name) {
    const sp::PipelineConfig cfg = sp::PipelineConfig::load(opts.config_path);
    sp::data::Manifest manifest = load_or_new_manifest(cfg.manifest_path);

    std::size_t new_records = 0;
    std::size_t annotated_images = 0;
    if (format == "store") {
        const fs::path dir = source.empty() ? cfg.store_dir : fs::path(source);
        sp::gen::CampaignStore store(dir);
        for (sp::data::ImageRecord& rec :
             sp::data::records_from_store_index(store.read_image_index())) {
            if (manifest.find(rec.image_id)) continue;  // idempotent re-import
            manifest.add_record(std::move(rec));
            ++new_records;
        }
    } else if (format == "coco") {
        if (source.empty()) throw sp::ValidationError("import coco: missing <source> file");
        std::ifstream in(source, std::ios::binary);
        if (!in) throw sp::IoError("cannot open COCO file: " + source);
        nlohmann::json doc;
        try {
            in >> doc;
        } catch (const nlohmann::json::exception& e) {
            throw sp::ValidationError(source + ": " + e.what());
        }
        sp::data::CocoImport imported = sp::data::import_coco(doc, class_name);
        for (sp::data::ImageRecord& rec : imported.records) {
            if (manifest.find(rec.image_id)) continue;
            manifest.add_record(std::move(rec));
            ++new_records;
        }
        annotated_images = imported.annotations.size();
        sp::data::merge_annotations(manifest, imported.annotations);
    } else if (format == "yolo") {
        if (source.empty()) throw sp::ValidationError("import yolo: missing <source> directory");
        auto annotations = sp::data::import_yolo(source, manifest);
        annotated_images = annotations.size();
        sp::data::merge_annotations(manifest, annotations);
    } else {
        throw sp::ValidationError("unknown import format '" + format + "'");
    }

    manifest.save(cfg.manifest_path);
    std::cerr << "manifest: +" << new_records << " records, " << annotated_images
              << " images annotated\n";
    ordered_json j;
    j["new_records"] = new_records;
    j["annotated_images"] = annotated_images;
    j["manifest"] = cfg.manifest_path.string();
    std::cout << j.dump() << '\n';
    return 0;
}

int cmd_dataset_exclude(const GlobalOpts& opts, const std::string& ids_csv,
                        const std::string& ids_file, const std::string& reason) {
    const sp::PipelineConfig cfg = sp::PipelineConfig::load(opts.config_path);
    sp::data::Manifest manifest = sp::data::Manifest::load(cfg.manifest_path);

    std::vector<std::string> ids = split_csv(ids_csv);
    if (!ids_file.empty()) {
        std::ifstream in(ids_file);
        if (!in) throw sp::IoError("cannot open ids file: " + ids_file);
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty()) ids.push_back(line);
        }
    }
    if (ids.empty()) throw sp::ValidationError("exclude: no image ids given");

    const sp::data::ExcludeResult result = manifest.exclude(ids, reason);
    manifest.save(cfg.manifest_path);
    for (const std::string& id : result.already_excluded) {
        std::cerr << "warning: " << id << " was already excluded\n";
    }
    ordered_json j;
    j["newly_excluded"] = result.newly_excluded;
    j["already_excluded"] = result.already_excluded;
    std::cout << j.dump() << '\n';
    return 0;
}

int cmd_dataset_split(const GlobalOpts& opts, std::int64_t train, std::int64_t val,
                      std::int64_t test, std::int64_t seed, bool group_by_prompt) {
    const sp::PipelineConfig cfg = sp::PipelineConfig::load(opts.config_path);
    sp::data::Manifest manifest = sp::data::Manifest::load(cfg.manifest_path);

    sp::data::SplitCounts counts = cfg.split_counts;
    if (train >= 0) counts.train = static_cast<std::uint64_t>(train);
    if (val >= 0) counts.val = static_cast<std::uint64_t>(val);
    if (test >= 0) counts.test = static_cast<std::uint64_t>(test);
    const std::uint64_t use_seed =
        seed >= 0 ? static_cast<std::uint64_t>(seed) : cfg.split_seed;

    manifest.assign_splits(counts, use_seed, group_by_prompt || cfg.split_group_by_prompt);
    manifest.save(cfg.manifest_path);

    ordered_json j;
    j["train"] = counts.train;
    j["val"] = counts.val;
    j["test"] = counts.test;
    j["seed"] = use_seed;
    std::cout << j.dump() << '\n';
    return 0;
}

int cmd_dataset_stats(const GlobalOpts& opts) {
    const sp::PipelineConfig cfg = sp::PipelineConfig::load(opts.config_path);
    const sp::data::Manifest manifest = sp::data::Manifest::load(cfg.manifest_path);
    emit(opts, sp::data::stats_to_json(manifest.stats()).dump(2));
    return 0;
}

int cmd_dataset_export(const GlobalOpts& opts, const std::string& format,
                       const std::string& out, const std::string& class_name) {
    const sp::PipelineConfig cfg = sp::PipelineConfig::load(opts.config_path);
    const sp::data::Manifest manifest = sp::data::Manifest::load(cfg.manifest_path);

    if (format == "coco") {
        std::ofstream file(out, std::ios::binary | std::ios::trunc);
        if (!file) throw sp::IoError("cannot write: " + out);
        file << sp::data::export_coco(manifest, class_name).dump(2) << '\n';
        if (!file) throw sp::IoError("write failed: " + out);
    } else if (format == "yolo") {
        sp::data::export_yolo(manifest, out, class_name);
    } else {
        throw sp::ValidationError("unknown export format '" + format + "'");
    }
    std::cerr << "exported " << format << " to " << out << '\n';
    ordered_json j;
    j["format"] = format;
    j["path"] = out;
    std::cout << j.dump() << '\n';
    return 0;
}

// --- eval -------------------------------------------------------------------

int cmd_eval(const GlobalOpts& opts, const std::string& detections_path,
             const std::string& split_name, const std::string& pr_csv) {
    const sp::PipelineConfig cfg = sp::PipelineConfig::load(opts.config_path);
    const sp::data::Manifest manifest = sp::data::Manifest::load(cfg.manifest_path);

    std::optional<sp::data::Split> split_filter;
    if (split_name != "all") {
        split_filter = sp::data::split_from_string(split_name);
        if (!split_filter || *split_filter == sp::data::Split::unassigned) {
            throw sp::ValidationError("eval: --split must be all|train|val|test");
        }
    }

    sp::eval::EvalInput input;
    std::set<std::string> in_scope;
    for (const std::string& id : manifest.active_ids()) {
        const sp::data::ImageRecord& rec = *manifest.find(id);
        if (split_filter && rec.split != *split_filter) continue;
        in_scope.insert(id);
        input.ground_truth[id] = manifest.annotations(id);
    }

    std::size_t dropped = 0;
    for (sp::eval::Detection& det : sp::eval::read_detections(detections_path)) {
        const sp::data::ImageRecord* rec = manifest.find(det.image_id);
        if (!rec) {
            throw sp::ValidationError("detections reference unknown image_id: " +
                                      det.image_id);
        }
        if (!in_scope.count(det.image_id)) {
            ++dropped;  // excluded or outside the selected split
            continue;
        }
        sp::data::validate_box(det.box, rec->width, rec->height,
                               "detection on " + det.image_id);
        input.detections.push_back(std::move(det));
    }
    if (dropped > 0) {
        std::cerr << "note: " << dropped << " detection(s) outside the evaluated split\n";
    }

    const sp::eval::EvalReport report = sp::eval::ap_range(input);
    if (!pr_csv.empty()) sp::eval::write_pr_csv(report, pr_csv);
    emit(opts, sp::eval::report_to_json(report).dump(2));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"synthetic dataset pipeline: prompts, generation, dataset, evaluation"};
    app.require_subcommand(1);
    app.fallthrough();  // accept global flags after the subcommand

    GlobalOpts opts;
    app.add_option("--config", opts.config_path, "pipeline config file (TOML)")
        ->envname("SYNTHPIPE_CONFIG");
    app.add_option("--output", opts.output_path, "write the primary result here instead of stdout");
    app.add_flag("--json", opts.json, "emit machine-readable JSON on stdout (default)");

    // prompts
    auto* prompts_cmd = app.add_subcommand("prompts", "expand or sample the prompt matrix");
    prompts_cmd->require_subcommand(1);
    auto* expand_cmd = prompts_cmd->add_subcommand("expand", "full cartesian product");
    std::uint64_t sample_n = 0;
    std::uint64_t sample_seed = 0;
    auto* sample_cmd = prompts_cmd->add_subcommand("sample", "seeded sample without replacement");
    sample_cmd->add_option("-n,--count", sample_n, "number of prompts")->required();
    sample_cmd->add_option("--seed", sample_seed, "RNG seed")->required();

    // generate
    auto* generate_cmd = app.add_subcommand("generate", "drive a generation campaign");
    generate_cmd->require_subcommand(1);
    bool allow_failures = false;
    auto* run_cmd = generate_cmd->add_subcommand("run", "start a new campaign");
    auto* resume_cmd = generate_cmd->add_subcommand("resume", "resume an interrupted campaign");
    for (auto* cmd : {run_cmd, resume_cmd}) {
        cmd->add_flag("--allow-failures", allow_failures,
                      "exit 0 even when some jobs failed");
    }

    // dataset
    auto* dataset_cmd = app.add_subcommand("dataset", "manage the dataset manifest");
    dataset_cmd->require_subcommand(1);
    std::string import_format = "store";
    std::string import_source;
    std::string class_name = "worker";
    auto* import_cmd = dataset_cmd->add_subcommand("import", "ingest records or annotations");
    import_cmd->add_option("--format", import_format, "store|coco|yolo")->required();
    import_cmd->add_option("source", import_source, "file or directory to import");
    import_cmd->add_option("--class", class_name, "class name (default worker)");

    std::string exclude_ids;
    std::string exclude_ids_file;
    std::string exclude_reason;
    auto* exclude_cmd = dataset_cmd->add_subcommand("exclude", "mark flawed images");
    exclude_cmd->add_option("--ids", exclude_ids, "comma-separated image ids");
    exclude_cmd->add_option("--ids-file", exclude_ids_file, "file with one image id per line");
    exclude_cmd->add_option("--reason", exclude_reason, "why these images are excluded")
        ->required();

    std::int64_t split_train = -1, split_val = -1, split_test = -1, split_seed = -1;
    bool group_by_prompt = false;
    auto* split_cmd = dataset_cmd->add_subcommand("split", "assign train/val/test splits");
    split_cmd->add_option("--train", split_train, "train count (default from config)");
    split_cmd->add_option("--val", split_val, "val count");
    split_cmd->add_option("--test", split_test, "test count");
    split_cmd->add_option("--seed", split_seed, "shuffle seed");
    split_cmd->add_flag("--group-by-prompt", group_by_prompt,
                        "keep the four quadrants of one prompt in one split");

    auto* stats_cmd = dataset_cmd->add_subcommand("stats", "dataset statistics as JSON");

    std::string export_format;
    std::string export_out;
    auto* export_cmd = dataset_cmd->add_subcommand("export", "write annotations");
    export_cmd->add_option("--format", export_format, "coco|yolo")->required();
    export_cmd->add_option("--out", export_out, "output file (coco) or directory (yolo)")
        ->required();
    export_cmd->add_option("--class", class_name, "class name (default worker)");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "score detections against the manifest");
    eval_cmd->require_subcommand(1);
    std::string detections_path;
    std::string eval_split = "all";
    std::string pr_csv;
    auto* eval_run_cmd = eval_cmd->add_subcommand("run", "compute AP@0.5 and AP@[0.5:0.95]");
    eval_run_cmd->add_option("--detections", detections_path, "detections NDJSON file")
        ->required();
    eval_run_cmd->add_option("--split", eval_split, "all|train|val|test (default all)");
    eval_run_cmd->add_option("--pr-csv", pr_csv, "also write the PR grid as CSV");

    CLI11_PARSE(app, argc, argv);

    try {
        if (expand_cmd->parsed()) return cmd_prompts(opts, false, 0, 0);
        if (sample_cmd->parsed()) return cmd_prompts(opts, true, sample_n, sample_seed);
        if (run_cmd->parsed()) return cmd_generate(opts, false, allow_failures);
        if (resume_cmd->parsed()) return cmd_generate(opts, true, allow_failures);
        if (import_cmd->parsed()) {
            return cmd_dataset_import(opts, import_format, import_source, class_name);
        }
        if (exclude_cmd->parsed()) {
            return cmd_dataset_exclude(opts, exclude_ids, exclude_ids_file, exclude_reason);
        }
        if (split_cmd->parsed()) {
            return cmd_dataset_split(opts, split_train, split_val, split_test, split_seed,
                                     group_by_prompt);
        }
        if (stats_cmd->parsed()) return cmd_dataset_stats(opts);
        if (export_cmd->parsed()) {
            return cmd_dataset_export(opts, export_format, export_out, class_name);
        }
        if (eval_run_cmd->parsed()) return cmd_eval(opts, detections_path, eval_split, pr_csv);
        std::cerr << "no subcommand\n";
        return 1;
    } catch (const sp::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
