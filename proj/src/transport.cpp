#include "n2n/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "n2n/errors.hpp"

namespace n2n::transport {

namespace {

constexpr double INF = std::numeric_limits<double>::infinity();

struct CostMatrix {
    std::vector<double> c;
    std::size_t n = 0;
    double operator()(std::size_t i, std::size_t j) const { return c[i * n + j]; }
};

CostMatrix build_costs(std::span<const Vec3> a, std::span<const Vec3> b) {
    CostMatrix m;
    m.n = a.size();
    m.c.resize(m.n * m.n);
    for (std::size_t i = 0; i < m.n; ++i)
        for (std::size_t j = 0; j < m.n; ++j) m.c[i * m.n + j] = norm(a[i] - b[j]);
    return m;
}

// Exact Hungarian via shortest augmenting paths with potentials, O(n^3).
std::vector<uint32_t> hungarian(const CostMatrix& cost) {
    const int n = static_cast<int>(cost.n);
    std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<double> v(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<int> p(static_cast<std::size_t>(n) + 1, 0);
    std::vector<int> way(static_cast<std::size_t>(n) + 1, 0);
    std::vector<double> minv(static_cast<std::size_t>(n) + 1);
    std::vector<char> used(static_cast<std::size_t>(n) + 1);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::fill(minv.begin(), minv.end(), INF);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[static_cast<std::size_t>(j0)] = 1;
            const int i0 = p[static_cast<std::size_t>(j0)];
            int j1 = 0;
            double delta = INF;
            for (int j = 1; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) continue;
                const double cur = cost(static_cast<std::size_t>(i0 - 1),
                                        static_cast<std::size_t>(j - 1)) -
                                   u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
                if (cur < minv[static_cast<std::size_t>(j)]) {
                    minv[static_cast<std::size_t>(j)] = cur;
                    way[static_cast<std::size_t>(j)] = j0;
                }
                if (minv[static_cast<std::size_t>(j)] < delta) {
                    delta = minv[static_cast<std::size_t>(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) {
                    u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
                    v[static_cast<std::size_t>(j)] -= delta;
                } else {
                    minv[static_cast<std::size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (p[static_cast<std::size_t>(j0)] != 0);
        do {
            const int j1 = way[static_cast<std::size_t>(j0)];
            p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
            j0 = j1;
        } while (j0);
    }
    std::vector<uint32_t> perm(static_cast<std::size_t>(n));
    for (int j = 1; j <= n; ++j)
        perm[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] =
            static_cast<uint32_t>(j - 1);
    return perm;
}

double perm_cost(const CostMatrix& cost, const std::vector<uint32_t>& perm) {
    double total = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i) total += cost(i, perm[i]);
    return total;
}

// Swap-neutral refinement: exchange targets between pairs whenever that
// leaves the total cost bit-identical and lowers the permutation
// lexicographically. Handles the common degenerate ties deterministically.
void lex_refine_swaps(const CostMatrix& cost, std::vector<uint32_t>& perm) {
    const std::size_t n = perm.size();
    for (std::size_t pass = 0; pass < n; ++pass) {
        bool changed = false;
        for (std::size_t i = 0; i + 1 < n; ++i)
            for (std::size_t k = i + 1; k < n; ++k) {
                if (perm[k] >= perm[i]) continue;
                const double before = cost(i, perm[i]) + cost(k, perm[k]);
                const double after = cost(i, perm[k]) + cost(k, perm[i]);
                if (after == before) {
                    std::swap(perm[i], perm[k]);
                    changed = true;
                }
            }
        if (!changed) break;
    }
}

// Exact lexicographic minimum over all optimal assignments, affordable only
// for small batches: fix targets row by row, accepting the smallest column
// whose forced completion still reaches the optimal total.
void lex_refine_exact(const CostMatrix& cost, std::vector<uint32_t>& perm) {
    const std::size_t n = perm.size();
    const double best = perm_cost(cost, perm);
    std::vector<uint32_t> fixed(n, UINT32_MAX);
    std::vector<char> col_used(n, 0);
    double prefix = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (uint32_t j = 0; j < n; ++j) {
            if (col_used[j]) continue;
            if (j >= perm[i] && fixed[i] == UINT32_MAX) {
                // The incumbent already uses the smallest feasible column.
                break;
            }
            // Solve the remainder with (i, j) forced.
            std::vector<std::size_t> rows, cols;
            for (std::size_t r = i + 1; r < n; ++r) rows.push_back(r);
            for (uint32_t c = 0; c < n; ++c)
                if (!col_used[c] && c != j) cols.push_back(c);
            double total = prefix + cost(i, j);
            if (!rows.empty()) {
                CostMatrix sub;
                sub.n = rows.size();
                sub.c.resize(sub.n * sub.n);
                for (std::size_t r = 0; r < rows.size(); ++r)
                    for (std::size_t c = 0; c < cols.size(); ++c)
                        sub.c[r * sub.n + c] = cost(rows[r], cols[c]);
                const auto sub_perm = hungarian(sub);
                // Re-sum in global row order for an exact comparison.
                std::vector<uint32_t> candidate = perm;
                candidate[i] = j;
                for (std::size_t r = 0; r < rows.size(); ++r)
                    candidate[rows[r]] = static_cast<uint32_t>(cols[sub_perm[r]]);
                for (std::size_t r = 0; r < i; ++r) candidate[r] = fixed[r];
                total = perm_cost(cost, candidate);
                if (total <= best && j < perm[i]) {
                    perm = candidate;
                    break;
                }
            } else if (total <= best && j < perm[i]) {
                perm[i] = j;
                break;
            }
        }
        fixed[i] = perm[i];
        col_used[perm[i]] = 1;
        prefix += cost(i, perm[i]);
    }
}

}  // namespace

Assignment min_cost_assignment(std::span<const Vec3> a, std::span<const Vec3> b) {
    if (a.size() != b.size())
        throw ContractError("min_cost_assignment: batches must have equal size");
    if (a.empty()) throw ContractError("min_cost_assignment: empty batch");
    const CostMatrix cost = build_costs(a, b);
    Assignment out;
    out.perm = hungarian(cost);
    lex_refine_swaps(cost, out.perm);
    if (a.size() <= 16) lex_refine_exact(cost, out.perm);
    out.total_cost = perm_cost(cost, out.perm);
    return out;
}

Assignment auction_assignment(std::span<const Vec3> a, std::span<const Vec3> b,
                              double epsilon_scale) {
    if (a.size() != b.size())
        throw ContractError("auction_assignment: batches must have equal size");
    if (a.empty()) throw ContractError("auction_assignment: empty batch");
    const std::size_t n = a.size();
    const CostMatrix cost = build_costs(a, b);

    double cmax = 0.0;
    for (double c : cost.c) cmax = std::max(cmax, c);
    std::vector<double> price(n, 0.0);
    std::vector<int> owner(n, -1);     // column -> row
    std::vector<int> assigned(n, -1);  // row -> column

    double eps = std::max(cmax * epsilon_scale, 1e-12);
    const double eps_final = std::max(cmax, 1.0) * 1e-9 / static_cast<double>(n);
    while (true) {
        std::fill(owner.begin(), owner.end(), -1);
        std::fill(assigned.begin(), assigned.end(), -1);
        std::vector<std::size_t> queue(n);
        for (std::size_t i = 0; i < n; ++i) queue[i] = i;
        while (!queue.empty()) {
            const std::size_t i = queue.back();
            queue.pop_back();
            // Bid on the best column under value = -cost - price.
            double best = -INF, second = -INF;
            std::size_t bj = 0;
            for (std::size_t j = 0; j < n; ++j) {
                const double v = -cost(i, j) - price[j];
                if (v > best) {
                    second = best;
                    best = v;
                    bj = j;
                } else if (v > second) {
                    second = v;
                }
            }
            if (second == -INF) second = best;
            price[bj] += best - second + eps;
            if (owner[bj] >= 0) {
                assigned[static_cast<std::size_t>(owner[bj])] = -1;
                queue.push_back(static_cast<std::size_t>(owner[bj]));
            }
            owner[bj] = static_cast<int>(i);
            assigned[i] = static_cast<int>(bj);
        }
        if (eps <= eps_final) break;
        eps /= 5.0;
    }
    Assignment out;
    out.perm.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.perm[i] = static_cast<uint32_t>(assigned[i]);
    out.total_cost = perm_cost(cost, out.perm);
    return out;
}

EmdLoss emd_loss(std::span<const Vec3> a, std::span<const Vec3> b) {
    Assignment asg = min_cost_assignment(a, b);
    EmdLoss out;
    const double inv_m = 1.0 / static_cast<double>(a.size());
    out.value = asg.total_cost * inv_m;
    out.perm = std::move(asg.perm);
    out.grad.resize(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        const Vec3 d = a[i] - b[out.perm[i]];
        const double len = norm(d);
        out.grad[i] = len > 0.0 ? d * (inv_m / len) : Vec3{0, 0, 0};
    }
    return out;
}

}  // namespace n2n::transport
