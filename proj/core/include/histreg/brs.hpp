#pragma once

#include "histreg/image.hpp"
#include "histreg/register.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace histreg {

/// Contiguous 1-based inclusive slice ranges covering 1..M.
struct SubvolumePartition {
    struct Range {
        int first = 1;
        int last = 1;
        int count() const noexcept { return last - first + 1; }
        bool contains(int i) const noexcept { return i >= first && i <= last; }
    };
    std::vector<Range> ranges;

    int total() const;
};

inline constexpr int kDefaultSubvolumeSize = 25;

/// Chunks of `target_size`; a trailing remainder smaller than target_size/2 is
/// merged into the previous chunk.
SubvolumePartition partition_stack(int slice_count, int target_size);

enum class BrsMode { eq7, max_entropy };

struct BrsEntry {
    int slice = 0; ///< 1-based global index
    double entropy = 0;
    std::optional<double> mse; ///< MSE_{i,j*}; empty for j* and excluded slices
    std::optional<double> score;
    bool chosen = false;
};

struct BrsReport {
    int subvolume = 0;          ///< 1-based
    int max_entropy_slice = 0;  ///< j*
    int chosen = 0;             ///< BRS index
    BrsMode mode = BrsMode::eq7;
    std::vector<BrsEntry> entries;
    std::vector<std::string> warnings;
};

/// Tie-break order used by every argmax in this module: nearest to the
/// subvolume centre, then lower index. Returns true if a is preferred to b.
bool prefer_index(int a, int b, int first, int last);

/// Selects the best reference slice of one subvolume. `slices` must be the
/// standardized images for global indices first..first+size-1.
BrsReport select_brs(const std::vector<Image>& slices, int first_index, const RegistrationConfig& cfg,
                     BrsMode mode = BrsMode::eq7, int subvolume = 1, unsigned threads = 1);

/// Reference selection on precomputed entropies and MSEs (`mse[k]` empty for the
/// max-entropy slice or an excluded slice). Exposed for reuse and testing.
BrsReport select_from_scores(const std::vector<double>& entropies, const std::vector<std::optional<double>>& mse,
                             int first_index, int max_entropy_slice, BrsMode mode);

/// CSV header `subvolume,slice,entropy,mse,score,chosen`.
void write_brs_csv(std::ostream& os, const std::vector<BrsReport>& reports);

std::string to_string(BrsMode mode);
BrsMode parse_brs_mode(const std::string& s);

} // namespace histreg
