#include <doctest.h>

#include "synthpipe/error.hpp"
#include "synthpipe/toml.hpp"

using namespace synthpipe;

TEST_CASE("toml: tables, scalars, arrays") {
    const char* text = R"(
# header comment
top = "value"

[backend]
type = "mock"           # trailing comment
retries = 3
interval = 2.5
enabled = true

[axes]
names = ["a", "b", "c#not-a-comment"]
empty = []
nums = [1, 2, 3]
)";
    toml::Table t = toml::parse(text);
    CHECK(t.get_string("top") == "value");
    CHECK(t.get_string("backend.type") == "mock");
    CHECK(t.get_int("backend.retries") == 3);
    CHECK(t.get_double("backend.interval") == doctest::Approx(2.5));
    CHECK(t.get_bool("backend.enabled", false));
    CHECK(t.get_string_array("axes.names") ==
          std::vector<std::string>{"a", "b", "c#not-a-comment"});
    CHECK(t.get_string_array("axes.empty").empty());
    CHECK(t.at("axes.nums").array.size() == 3);
}

TEST_CASE("toml: multi-line arrays") {
    const char* text = R"(
[axes]
location = [
  "on a bridge",   # one per line
  "at a site",
]
count = 2
)";
    toml::Table t = toml::parse(text);
    CHECK(t.get_string_array("axes.location") ==
          std::vector<std::string>{"on a bridge", "at a site"});
    CHECK(t.get_int("axes.count") == 2);
}

TEST_CASE("toml: string escapes") {
    toml::Table t = toml::parse(R"(s = "a\"b\\c\nd")");
    CHECK(t.get_string("s") == "a\"b\\c\nd");
}

TEST_CASE("toml: errors carry line numbers") {
    CHECK_THROWS_WITH_AS(toml::parse("x = ", "f.toml"),
                         doctest::Contains("f.toml:1"), ValidationError);
    CHECK_THROWS_WITH_AS(toml::parse("a = 1\nb ~ 2", "f.toml"),
                         doctest::Contains("f.toml:2"), ValidationError);
    CHECK_THROWS_AS(toml::parse("a = 1\na = 2"), ValidationError);
    CHECK_THROWS_AS(toml::parse("a = [1, 2"), ValidationError);
    CHECK_THROWS_AS(toml::parse("a = \"unterminated"), ValidationError);
}

TEST_CASE("toml: type mismatches are validation errors") {
    toml::Table t = toml::parse("x = 5\ns = \"y\"");
    CHECK_THROWS_AS(t.get_string("x"), ValidationError);
    CHECK_THROWS_AS(t.get_int("s"), ValidationError);
    CHECK_THROWS_AS(t.get_string("missing"), ValidationError);
    CHECK(t.get_int("missing", 9) == 9);
}
