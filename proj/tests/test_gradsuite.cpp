#include <doctest.h>

#include "sm/gradsuite.hpp"

using namespace sm;

TEST_CASE("gradient suite covers every block and passes on two seeds") {
    CHECK(gradsuite::all_blocks().size() == 12);
    auto results = gradsuite::run_all(2, 1e-4);
    CHECK(results.size() == 24);
    for (const auto& r : results) {
        INFO(r.block, " seed ", r.seed, " max_rel_err ", r.max_rel_err);
        CHECK(r.pass);
    }
}

TEST_CASE("gradient suite rejects unknown blocks") { CHECK_THROWS(gradsuite::run_block("nope", 1)); }
