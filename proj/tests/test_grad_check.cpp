#include <doctest.h>

#include "grad_suite.hpp"

// Every differentiable op family: 100 randomized shape/value configurations,
// analytic gradients vs central finite differences of an independent
// double-precision forward, relative error within 1e-4.

TEST_CASE("op gradients match finite differences across random configurations") {
    for (const auto& fam : gradcheck::all_families()) {
        CAPTURE(fam.name);
        auto r = fam.run(100);
        CHECK(r.checked > 0);
        CHECK_MESSAGE(r.max_err <= 1e-4,
                      fam.name << ": max relative error " << r.max_err << " over "
                               << r.checked << " partials");
    }
}
