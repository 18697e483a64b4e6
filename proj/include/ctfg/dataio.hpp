#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ctfg/array.hpp"
#include "ctfg/rng.hpp"

namespace ctfg {

// One contiguous multi-channel record for a single user: samples is T x d,
// labels holds one activity id (>= 1) per row.
struct Recording {
    int user = 0;
    double sample_rate = 0.0;
    Array samples;
    std::vector<int> labels;
    std::string source;
};

// A fixed-length window cut from a recording. group is the transfer-split
// tag; it stays empty until a split plan assigns it.
struct SensorWindow {
    Array x;  // l x d
    int y = -1;
    int user = 0;
    std::string group;
};

// Named, disjoint user groups plus the one held out for transfer.
struct SplitPlan {
    std::vector<std::pair<std::string, std::vector<int>>> groups;
    std::string heldout;
};

struct BatchSpec {
    int per_cell = 2;  // windows drawn per (user, class) cell
};

// Column layout and grouping for a CSV dataset, read from a key=value
// descriptor file:
//   channels=acc_x,acc_y,acc_z   label=activity   user=subject
//   rate=25   delimiter=,   group.A=1,2   group.B=3,4
struct SchemaDescriptor {
    std::vector<std::string> channels;
    std::string label_col;
    std::string user_col;
    double sample_rate = 0.0;
    char delimiter = ',';
    SplitPlan plan;
};

SchemaDescriptor load_schema(const std::string& path);

// Reads one CSV and splits rows by user (row order preserved per user).
// Missing channel values ("", "nan", "NaN", "NA") are repaired by linear
// interpolation inside the recording; runs touching either end take the
// nearest defined value. Missing labels or users are errors.
std::vector<Recording> load_recordings(const std::string& path,
                                       const SchemaDescriptor& schema);

// stride = floor(window_len * (1 - overlap)); windows start at multiples of
// the stride while they fit. A window keeps the modal row label when it
// covers at least half the rows and is the unique mode; otherwise the window
// is dropped.
std::vector<SensorWindow> make_windows(const Recording& rec, std::size_t window_len,
                                       double overlap);

// Expected number of raw (pre-label-filter) window positions.
std::size_t window_count(std::size_t total_rows, std::size_t window_len, double overlap);

// In-place per-(user, channel) standardization over all of that user's
// windows, population std clamped below by 1e-8. An exactly constant channel
// becomes all zeros and logs a warning to stderr.
void zscore_per_user(std::vector<SensorWindow>& windows);

// Tags every window with its group and splits off the held-out group.
// Errors: unknown held-out name, overlapping groups, a window whose user is
// in no group. Returns {train, heldout}.
std::pair<std::vector<SensorWindow>, std::vector<SensorWindow>> split_logo(
    const std::vector<SensorWindow>& windows, const SplitPlan& plan);

// Draws per_cell windows from every (user, class) cell: without replacement
// when the cell is large enough, with replacement otherwise. The assembled
// batch is shuffled. Cell iteration order is sorted, so equal seeds give
// equal batches.
std::vector<SensorWindow> stratified_batch(const std::vector<SensorWindow>& windows,
                                           const BatchSpec& spec, Rng& rng);

// Window cache on the checkpoint container: tensors "x" (N x l x d),
// "y" (N), "user" (N). Group tags are not cached; reassign via split_logo.
void save_window_cache(const std::string& path, const std::vector<SensorWindow>& windows);
std::vector<SensorWindow> load_window_cache(const std::string& path);

}  // namespace ctfg
