#include <doctest.h>

#include <filesystem>

#include "structural_checks.hpp"

TEST_SUITE("structural") {
  TEST_CASE("structural properties hold") {
    for (const auto& check : nadlab::checks::all(NADLAB_CLI_PATH, std::filesystem::temp_directory_path() /
                                                                     "nadlab_property_suite")) {
      const nadlab::checks::Check c = check();
      INFO(c.name << " violation " << c.violation << " limit " << c.limit);
      CHECK(c.ok());
    }
  }
}
