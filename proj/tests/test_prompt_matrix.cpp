#include <doctest.h>

#include <random>
#include <regex>
#include <set>

#include "synthpipe/error.hpp"
#include "synthpipe/prompt_matrix.hpp"

using namespace synthpipe;
using namespace synthpipe::prompts;

namespace {

std::vector<ParameterAxis> axes_of_sizes(int nl, int nw, int nc, int na) {
    auto make = [](Axis axis, const char* stem, int n) {
        ParameterAxis a;
        a.name = axis;
        for (int i = 0; i < n; ++i) a.values.push_back(std::string(stem) + std::to_string(i));
        return a;
    };
    std::vector<ParameterAxis> axes;
    axes.push_back(make(Axis::location, "loc", nl));
    axes.push_back(make(Axis::weather_lighting, "sky", nw));
    axes.push_back(make(Axis::camera_film, "cam", nc));
    ParameterAxis ar;
    ar.name = Axis::aspect_ratio;
    for (int i = 0; i < na; ++i) ar.values.push_back(std::to_string(i + 1) + ":9");
    axes.push_back(ar);
    return axes;
}

}  // namespace

TEST_CASE("render produces the exact command string") {
    PromptTemplate tmpl;
    AxisValues values;
    values[static_cast<int>(Axis::location)] = "on a highway bridge";
    values[static_cast<int>(Axis::weather_lighting)] = "at sunset";
    values[static_cast<int>(Axis::camera_film)] = "shot on 35mm film";
    values[static_cast<int>(Axis::aspect_ratio)] = "16:9";
    const std::string expected =
        "/imagine prompt: three construction workers at work on a highway bridge, "
        "at sunset, shot on 35mm film --ar 16:9";
    CHECK(render(tmpl, values) == expected);
    CHECK(render(tmpl, values) == render(tmpl, values));  // pure

    values[static_cast<int>(Axis::aspect_ratio)] = "0:9";
    CHECK_THROWS_AS(render(tmpl, values), ValidationError);
}

TEST_CASE("aspect ratio pattern") {
    validate_aspect_ratio("16:9");
    validate_aspect_ratio("1:1");
    for (const char* bad : {"0:9", "9:0", "16", ":9", "16:", "a:9", "16:9 ", "-1:9", "1:2:3"}) {
        CAPTURE(bad);
        CHECK_THROWS_AS(validate_aspect_ratio(bad), ValidationError);
    }
}

TEST_CASE("expand_full cardinality and ids") {
    PromptTemplate tmpl;

    SUBCASE("2x2x2x1 gives 8 dense ids") {
        auto specs = expand_full(tmpl, axes_of_sizes(2, 2, 2, 1));
        REQUIRE(specs.size() == 8);
        for (std::size_t i = 0; i < specs.size(); ++i) {
            CHECK(specs[i].id == i);
            CHECK(specs[i].combo_index == i);
        }
    }

    SUBCASE("1x1x1x1 is the identity case") {
        auto specs = expand_full(tmpl, axes_of_sizes(1, 1, 1, 1));
        REQUIRE(specs.size() == 1);
        CHECK(specs[0].values[static_cast<int>(Axis::location)] == "loc0");
        CHECK(specs[0].values[static_cast<int>(Axis::aspect_ratio)] == "1:9");
    }

    SUBCASE("10x10x10x3 yields 3000 combinations") {
        auto specs = expand_full(tmpl, axes_of_sizes(10, 10, 10, 3));
        CHECK(specs.size() == 3000);
    }

    SUBCASE("last axis in axis_order varies fastest") {
        auto specs = expand_full(tmpl, axes_of_sizes(2, 1, 1, 2));
        REQUIRE(specs.size() == 4);
        CHECK(specs[0].values[static_cast<int>(Axis::aspect_ratio)] == "1:9");
        CHECK(specs[1].values[static_cast<int>(Axis::aspect_ratio)] == "2:9");
        CHECK(specs[0].values[static_cast<int>(Axis::location)] == "loc0");
        CHECK(specs[2].values[static_cast<int>(Axis::location)] == "loc1");
    }
}

TEST_CASE("expand_full validation names the offending axis") {
    PromptTemplate tmpl;
    auto axes = axes_of_sizes(2, 2, 2, 2);

    SUBCASE("missing axis") {
        axes.pop_back();
        CHECK_THROWS_WITH_AS(expand_full(tmpl, axes), doctest::Contains("aspect_ratio"),
                             ValidationError);
    }
    SUBCASE("duplicate axis") {
        axes.push_back(axes[0]);
        CHECK_THROWS_WITH_AS(expand_full(tmpl, axes), doctest::Contains("duplicate"),
                             ValidationError);
    }
    SUBCASE("empty axis") {
        axes[1].values.clear();
        CHECK_THROWS_WITH_AS(expand_full(tmpl, axes), doctest::Contains("weather_lighting"),
                             ValidationError);
    }
    SUBCASE("blank value") {
        axes[0].values.push_back("   ");
        CHECK_THROWS_AS(expand_full(tmpl, axes), ValidationError);
    }
    SUBCASE("duplicate value after trimming") {
        axes[0].values.push_back("loc0 ");
        CHECK_THROWS_AS(expand_full(tmpl, axes), ValidationError);
    }
    SUBCASE("comma in value") {
        axes[0].values.push_back("a, b");
        CHECK_THROWS_AS(expand_full(tmpl, axes), ValidationError);
    }
    SUBCASE("--ar marker in value") {
        axes[2].values.push_back("x --ar y");
        CHECK_THROWS_AS(expand_full(tmpl, axes), ValidationError);
    }
}

TEST_CASE("cardinality equals the axis-size product (randomized)") {
    std::mt19937_64 rng(424242);
    PromptTemplate tmpl;
    for (int trial = 0; trial < 40; ++trial) {
        const int nl = 1 + static_cast<int>(rng() % 4);
        const int nw = 1 + static_cast<int>(rng() % 4);
        const int nc = 1 + static_cast<int>(rng() % 4);
        const int na = 1 + static_cast<int>(rng() % 3);
        auto axes = axes_of_sizes(nl, nw, nc, na);
        CHECK(product_cardinality(axes) ==
              static_cast<std::uint64_t>(nl) * nw * nc * na);
        CHECK(expand_full(tmpl, axes).size() == product_cardinality(axes));
    }
}

TEST_CASE("every rendered prompt matches the template grammar") {
    const std::regex grammar(
        R"(^/imagine prompt: three construction workers at work .+, .+, .+ --ar \d+:\d+$)");
    PromptTemplate tmpl;
    for (const auto& spec : expand_full(tmpl, axes_of_sizes(3, 2, 2, 2))) {
        CAPTURE(spec.rendered);
        CHECK(std::regex_match(spec.rendered, grammar));
    }
}

TEST_CASE("distinct combinations render to distinct strings") {
    PromptTemplate tmpl;
    auto specs = expand_full(tmpl, axes_of_sizes(3, 3, 3, 2));
    std::set<std::string> rendered;
    for (const auto& spec : specs) rendered.insert(spec.rendered);
    CHECK(rendered.size() == specs.size());
}

TEST_CASE("sample: deterministic, without replacement, dense ids") {
    PromptTemplate tmpl;
    auto axes = axes_of_sizes(3, 3, 3, 2);  // 54 combinations

    SUBCASE("same seed, same output") {
        auto a = sample(tmpl, axes, 10, 99);
        auto b = sample(tmpl, axes, 10, 99);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].rendered == b[i].rendered);
            CHECK(a[i].combo_index == b[i].combo_index);
            CHECK(a[i].id == i);
        }
    }

    SUBCASE("different seeds differ") {
        auto a = sample(tmpl, axes, 20, 1);
        auto b = sample(tmpl, axes, 20, 2);
        bool same = true;
        for (std::size_t i = 0; i < a.size(); ++i) same &= a[i].combo_index == b[i].combo_index;
        CHECK_FALSE(same);
    }

    SUBCASE("full-size sample is a permutation of expand_full") {
        auto full = expand_full(tmpl, axes);
        auto s = sample(tmpl, axes, full.size(), 7);
        std::set<std::uint64_t> seen;
        for (const auto& spec : s) seen.insert(spec.combo_index);
        CHECK(seen.size() == full.size());
    }

    SUBCASE("n beyond cardinality reports both numbers") {
        CHECK_THROWS_WITH_AS(sample(tmpl, axes, 55, 7), doctest::Contains("54"),
                             ValidationError);
    }
}

TEST_CASE("prompt file round-trip") {
    PromptTemplate tmpl;
    auto specs = sample(tmpl, axes_of_sizes(3, 2, 2, 2), 6, 5);
    const auto path = std::filesystem::temp_directory_path() / "synthpipe_prompts_test.ndjson";
    write_prompt_file(path, specs);
    auto loaded = read_prompt_file(path);
    REQUIRE(loaded.size() == specs.size());
    for (std::size_t i = 0; i < specs.size(); ++i) {
        CHECK(loaded[i].id == specs[i].id);
        CHECK(loaded[i].combo_index == specs[i].combo_index);
        CHECK(loaded[i].rendered == specs[i].rendered);
        CHECK(loaded[i].values == specs[i].values);
    }
    std::filesystem::remove(path);
}
