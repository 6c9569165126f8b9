#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "n2n/errors.hpp"
#include "n2n/rng.hpp"
#include "n2n/transport.hpp"
#include "test_util.hpp"

using namespace n2n;
using namespace n2n::transport;

namespace {

// Exhaustive minimum over all m! bijections; keeps the lexicographically
// first optimum.
std::pair<double, std::vector<uint32_t>> brute_force(std::span<const Vec3> a,
                                                     std::span<const Vec3> b) {
    std::vector<uint32_t> perm(a.size());
    std::iota(perm.begin(), perm.end(), 0u);
    std::vector<uint32_t> best_perm = perm;
    double best = std::numeric_limits<double>::infinity();
    do {
        double total = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) total += norm(a[i] - b[perm[i]]);
        if (total < best) {
            best = total;
            best_perm = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return {best, best_perm};
}

PointCloud random_batch(Rng& rng, std::size_t m) {
    PointCloud out(m);
    for (auto& p : out) p = testutil::random_unit_cube_point(rng);
    return out;
}

}  // namespace

TEST_CASE("identical batches assign at zero cost via the identity") {
    Rng rng(1);
    for (std::size_t m : {1u, 3u, 7u, 20u}) {
        const PointCloud a = random_batch(rng, m);
        const auto asg = min_cost_assignment(a, a);
        CHECK(asg.total_cost == 0.0);
        for (std::size_t i = 0; i < m; ++i) CHECK(asg.perm[i] == i);
    }
}

TEST_CASE("single pair distance is the plain Euclidean distance") {
    const PointCloud a = {{0, 0, 0}};
    const PointCloud b = {{3, 4, 0}};
    const auto asg = min_cost_assignment(a, b);
    CHECK(asg.total_cost == doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("matches the brute-force minimum exactly for small batches") {
    Rng rng(42);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t m = 1 + rng.below(6);
        const PointCloud a = random_batch(rng, m);
        const PointCloud b = random_batch(rng, m);
        const auto asg = min_cost_assignment(a, b);
        const auto [best, best_perm] = brute_force(a, b);
        CHECK(asg.total_cost == best);
        CHECK(asg.perm == best_perm);
    }
}

TEST_CASE("equal-cost ties break to the lex-smallest permutation") {
    // Four corners of a square matched to themselves rotated: many optima.
    const PointCloud a = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}};
    PointCloud b = a;
    std::rotate(b.begin(), b.begin() + 1, b.end());
    const auto asg = min_cost_assignment(a, b);
    const auto [best, best_perm] = brute_force(a, b);
    CHECK(asg.total_cost == best);
    CHECK(asg.perm == best_perm);
}

TEST_CASE("size mismatch is a contract violation") {
    const PointCloud a = {{0, 0, 0}, {1, 1, 1}};
    const PointCloud b = {{0, 0, 0}};
    CHECK_THROWS_AS((void)min_cost_assignment(a, b), ContractError);
    CHECK_THROWS_AS((void)emd_loss(a, b), ContractError);
}

TEST_CASE("emd metric axioms hold on random triples") {
    Rng rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t m = 2 + rng.below(4);
        const PointCloud a = random_batch(rng, m);
        const PointCloud b = random_batch(rng, m);
        const PointCloud c = random_batch(rng, m);
        const double ab = emd_loss(a, b).value;
        const double ba = emd_loss(b, a).value;
        const double ac = emd_loss(a, c).value;
        const double bc = emd_loss(b, c).value;
        CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
        CHECK(ac <= ab + bc + 1e-12);
        CHECK(ab >= 0.0);
    }
}

TEST_CASE("emd vanishes exactly on permutations and only there") {
    Rng rng(12);
    const PointCloud a = random_batch(rng, 9);
    PointCloud b = a;
    for (std::size_t i = b.size() - 1; i > 0; --i)
        std::swap(b[i], b[rng.below(i + 1)]);
    CHECK(emd_loss(a, b).value == 0.0);
    for (const Vec3& g : emd_loss(a, b).grad) CHECK(norm(g) == 0.0);

    b[3].x += 1e-3;
    CHECK(emd_loss(a, b).value > 0.0);
}

TEST_CASE("translating one batch costs exactly the translation length") {
    Rng rng(3);
    const PointCloud a = random_batch(rng, 12);
    const Vec3 t{0.2, -0.1, 0.05};
    PointCloud shifted = a;
    for (auto& p : shifted) p += t;
    CHECK(emd_loss(shifted, a).value == doctest::Approx(norm(t)).epsilon(1e-12));
}

TEST_CASE("emd subgradient matches finite differences away from ties") {
    Rng rng(99);
    const std::size_t m = 5;
    const PointCloud a0 = random_batch(rng, m);
    const PointCloud b = random_batch(rng, m);
    const auto loss = emd_loss(a0, b);
    const double h = 1e-6;
    for (std::size_t i = 0; i < m; ++i)
        for (int axis = 0; axis < 3; ++axis) {
            PointCloud up = a0, dn = a0;
            up[i][axis] += h;
            dn[i][axis] -= h;
            const double fd = (emd_loss(up, b).value - emd_loss(dn, b).value) / (2.0 * h);
            CHECK(testutil::rel_err(loss.grad[i][axis], fd) < 1e-3);
        }
}

TEST_CASE("coincident matched pairs contribute a zero subgradient") {
    const PointCloud a = {{0.5, 0.5, 0.5}, {0, 0, 0}};
    const PointCloud b = {{0.5, 0.5, 0.5}, {1, 0, 0}};
    const auto loss = emd_loss(a, b);
    CHECK(norm(loss.grad[0]) == 0.0);
    CHECK(norm(loss.grad[1]) > 0.0);
}

TEST_CASE("auction fallback lands on the exact optimum at small sizes") {
    Rng rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t m = 2 + rng.below(8);
        const PointCloud a = random_batch(rng, m);
        const PointCloud b = random_batch(rng, m);
        const auto exact = min_cost_assignment(a, b);
        const auto approx = auction_assignment(a, b);
        CHECK(approx.total_cost <= exact.total_cost * (1.0 + 1e-6) + 1e-9);
        CHECK(approx.total_cost >= exact.total_cost - 1e-12);
    }
}
