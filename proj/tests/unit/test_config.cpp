#include <doctest.h>

#include <array>
#include <filesystem>
#include <fstream>

#include "cncreg/config.hpp"
#include "cncreg/errors.hpp"

using namespace cncreg;

TEST_CASE("config parses keys, comments, and blank lines") {
    const Config c = Config::parse_string("# leading comment\n"
                                          "a.b = 3\n"
                                          "\n"
                                          "name = hello world # trailing\n"
                                          "flag = true\n"
                                          "ratio = 2.5\n"
                                          "list = 2, 2, 1\n");
    CHECK(c.get_int("a.b", 0) == 3);
    CHECK(c.get_string("name", "") == "hello world");
    CHECK(c.get_bool("flag", false));
    CHECK(c.get_double("ratio", 0.0) == 2.5);
    CHECK(c.get_int_list("list", {}) == std::vector<int>{2, 2, 1});
    CHECK(c.get_int("missing", 17) == 17);
    CHECK(c.has("a.b"));
    CHECK_FALSE(c.has("a.c"));
}

TEST_CASE("config rejects malformed input") {
    CHECK_THROWS_AS(Config::parse_string("a.b = 1\na.b = 2\n"), ValueError);
    CHECK_THROWS_AS(Config::parse_string("novalue\n"), ValueError);
    CHECK_THROWS_AS(Config::parse_string(" = 3\n"), ValueError);
    const Config c = Config::parse_string("x = notanumber\n");
    CHECK_THROWS_AS(c.get_int("x", 0), ValueError);
    CHECK_THROWS_AS(c.get_double("x", 0.0), ValueError);
}

TEST_CASE("hash is stable under reordering and comments only") {
    const Config a = Config::parse_string("x = 1\ny = 2\n");
    const Config b = Config::parse_string("# different text\ny = 2\nx = 1\n");
    CHECK(a.hash() == b.hash());
    const Config c = Config::parse_string("x = 1\ny = 3\n");
    CHECK(a.hash() != c.hash());
    // setting a key changes the hash deterministically
    Config d = Config::parse_string("x = 1\ny = 2\n");
    d.set("y", "3");
    CHECK(d.hash() == c.hash());
}

TEST_CASE("unknown keys are rejected against an allow list") {
    const Config c = Config::parse_string("known = 1\nbogus.key = 2\n");
    const std::array<std::string_view, 1> allowed = {"known"};
    CHECK_THROWS_WITH_AS(c.check_allowed(allowed),
                         doctest::Contains("bogus.key"), ValueError);
}

TEST_CASE("parse_file reads what was written") {
    const auto path =
        std::filesystem::temp_directory_path() / "cncreg_config_test.txt";
    {
        std::ofstream f(path);
        f << "alpha = 0.25\n# comment\nname = run1\n";
    }
    const Config c = Config::parse_file(path.string());
    CHECK(c.get_double("alpha", 0.0) == 0.25);
    CHECK(c.get_string("name", "") == "run1");
    CHECK_THROWS_AS(Config::parse_file("/nonexistent/cncreg.cfg"), IoError);
}
