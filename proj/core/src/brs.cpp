#include "histreg/brs.hpp"

#include "histreg/error.hpp"
#include "histreg/features.hpp"
#include "histreg/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <limits>
#include <ostream>

namespace histreg {

int SubvolumePartition::total() const {
    int n = 0;
    for (const auto& r : ranges) n += r.count();
    return n;
}

SubvolumePartition partition_stack(int slice_count, int target_size) {
    if (slice_count < 1) throw Error("slice count must be >= 1");
    if (target_size < 2) throw Error("subvolume size must be >= 2");
    SubvolumePartition p;
    for (int first = 1; first <= slice_count; first += target_size)
        p.ranges.push_back({first, std::min(slice_count, first + target_size - 1)});
    if (p.ranges.size() > 1 && 2 * p.ranges.back().count() < target_size) {
        const int last = p.ranges.back().last;
        p.ranges.pop_back();
        p.ranges.back().last = last;
    }
    return p;
}

bool prefer_index(int a, int b, int first, int last) {
    // Doubled distances keep even-sized subvolumes exact.
    const int da = std::abs(2 * a - (first + last));
    const int db = std::abs(2 * b - (first + last));
    if (da != db) return da < db;
    return a < b;
}

BrsReport select_from_scores(const std::vector<double>& entropies, const std::vector<std::optional<double>>& mse,
                             int first_index, int max_entropy_slice, BrsMode mode) {
    if (entropies.size() != mse.size()) throw Error("score table size mismatch");
    const int n = static_cast<int>(entropies.size());
    const int last_index = first_index + n - 1;
    BrsReport rep;
    rep.mode = mode;
    rep.max_entropy_slice = max_entropy_slice;
    const double ej = entropies[static_cast<std::size_t>(max_entropy_slice - first_index)];

    int best = 0;
    double best_mse = 0;
    for (int k = 0; k < n; ++k) {
        BrsEntry e;
        e.slice = first_index + k;
        e.entropy = entropies[static_cast<std::size_t>(k)];
        e.mse = mse[static_cast<std::size_t>(k)];
        if (e.slice != max_entropy_slice && e.mse) {
            // log(E_j / MSE) with natural log; a perfect match scores +inf.
            e.score = *e.mse > 0 ? std::log(ej / *e.mse) : std::numeric_limits<double>::infinity();
            // argmax of the score == argmin of MSE since E_j is fixed.
            if (best == 0 || *e.mse < best_mse ||
                (*e.mse == best_mse && prefer_index(e.slice, best, first_index, last_index))) {
                best = e.slice;
                best_mse = *e.mse;
            }
        }
        rep.entries.push_back(e);
    }
    if (mode == BrsMode::max_entropy) {
        rep.chosen = max_entropy_slice;
    } else {
        if (best == 0) throw Error("no viable reference");
        rep.chosen = best;
    }
    for (auto& e : rep.entries) e.chosen = e.slice == rep.chosen;
    return rep;
}

BrsReport select_brs(const std::vector<Image>& slices, int first_index, const RegistrationConfig& cfg, BrsMode mode,
                     int subvolume, unsigned threads) {
    if (slices.size() < 2) throw Error("subvolume needs at least 2 slices");
    const int n = static_cast<int>(slices.size());
    const int last_index = first_index + n - 1;

    std::vector<double> entropies(slices.size());
    for (std::size_t k = 0; k < slices.size(); ++k) entropies[k] = entropy(slices[k]);

    int j = first_index;
    for (int k = 1; k < n; ++k) {
        const int idx = first_index + k;
        const double e = entropies[static_cast<std::size_t>(k)];
        const double ebest = entropies[static_cast<std::size_t>(j - first_index)];
        if (e > ebest || (e == ebest && prefer_index(idx, j, first_index, last_index))) j = idx;
    }

    std::vector<std::optional<double>> mse(slices.size());
    std::vector<std::string> failures(slices.size());
    if (mode == BrsMode::eq7) {
        const Image& target = slices[static_cast<std::size_t>(j - first_index)];
        parallel_for(slices.size(), threads, [&](std::size_t k) {
            if (static_cast<int>(k) + first_index == j) return;
            try {
                mse[k] = register_affine(slices[k], target, cfg).final_mse;
            } catch (const Error& e) {
                failures[k] = e.what();
            }
        });
    }

    BrsReport rep = select_from_scores(entropies, mse, first_index, j, mode);
    rep.subvolume = subvolume;
    for (std::size_t k = 0; k < failures.size(); ++k)
        if (!failures[k].empty())
            rep.warnings.push_back("slice " + std::to_string(first_index + static_cast<int>(k)) +
                                   " excluded: " + failures[k]);
    return rep;
}

void write_brs_csv(std::ostream& os, const std::vector<BrsReport>& reports) {
    os << "subvolume,slice,entropy,mse,score,chosen\n";
    os << std::setprecision(17);
    for (const auto& r : reports) {
        for (const auto& e : r.entries) {
            os << r.subvolume << ',' << e.slice << ',' << e.entropy << ',';
            if (e.mse) os << *e.mse;
            os << ',';
            if (e.score) os << *e.score;
            os << ',' << (e.chosen ? 1 : 0) << '\n';
        }
    }
}

std::string to_string(BrsMode mode) { return mode == BrsMode::eq7 ? "eq7" : "max_entropy"; }

BrsMode parse_brs_mode(const std::string& s) {
    if (s == "eq7") return BrsMode::eq7;
    if (s == "max_entropy") return BrsMode::max_entropy;
    throw Error("unknown brs_mode '" + s + "' (expected eq7 or max_entropy)");
}

} // namespace histreg
