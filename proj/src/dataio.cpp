#include "ctfg/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "ctfg/checkpoint.hpp"

namespace ctfg {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char delim) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == delim) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

bool is_missing(const std::string& cell) {
    return cell.empty() || cell == "nan" || cell == "NaN" || cell == "NAN" || cell == "NA";
}

double parse_double(const std::string& cell, const std::string& where) {
    double v{};
    const char* b = cell.data();
    const char* e = b + cell.size();
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e) fail("cannot parse number '" + cell + "' in " + where);
    return v;
}

long parse_int(const std::string& cell, const std::string& where) {
    long v{};
    const char* b = cell.data();
    const char* e = b + cell.size();
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e) fail("cannot parse integer '" + cell + "' in " + where);
    return v;
}

std::vector<int> parse_int_list(const std::string& value, const std::string& where) {
    std::vector<int> out;
    for (const std::string& part : split(value, ',')) {
        std::string t = trim(part);
        if (t.empty()) continue;
        out.push_back(static_cast<int>(parse_int(t, where)));
    }
    return out;
}

// Fills NaN runs by linear interpolation between the neighbouring defined
// values; runs touching an end copy the nearest defined value.
void repair_channel(std::vector<double>& col, const std::string& where) {
    std::size_t n = col.size();
    std::size_t i = 0;
    while (i < n && std::isnan(col[i])) ++i;
    if (i == n) fail("channel entirely missing in " + where);
    for (std::size_t j = 0; j < i; ++j) col[j] = col[i];
    while (i < n) {
        if (!std::isnan(col[i])) {
            ++i;
            continue;
        }
        std::size_t lo = i - 1;  // defined
        std::size_t hi = i;
        while (hi < n && std::isnan(col[hi])) ++hi;
        if (hi == n) {
            for (std::size_t j = i; j < n; ++j) col[j] = col[lo];
            return;
        }
        double span = static_cast<double>(hi - lo);
        for (std::size_t j = i; j < hi; ++j) {
            double t = static_cast<double>(j - lo) / span;
            col[j] = col[lo] + t * (col[hi] - col[lo]);
        }
        i = hi;
    }
}

}  // namespace

SchemaDescriptor load_schema(const std::string& path) {
    std::ifstream is(path);
    if (!is) fail("cannot open schema '" + path + "'");
    SchemaDescriptor s;
    bool have_channels = false, have_label = false, have_user = false, have_rate = false;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            fail("schema '" + path + "' line " + std::to_string(lineno) + ": expected key=value");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        std::string where = path + ":" + std::to_string(lineno);
        if (key == "channels") {
            for (const std::string& c : split(value, ',')) {
                std::string name = trim(c);
                if (!name.empty()) s.channels.push_back(name);
            }
            have_channels = !s.channels.empty();
        } else if (key == "label") {
            s.label_col = value;
            have_label = true;
        } else if (key == "user") {
            s.user_col = value;
            have_user = true;
        } else if (key == "rate") {
            s.sample_rate = parse_double(value, where);
            have_rate = true;
        } else if (key == "delimiter") {
            if (value.size() != 1) fail("schema delimiter must be one character at " + where);
            s.delimiter = value[0];
        } else if (key.rfind("group.", 0) == 0) {
            s.plan.groups.emplace_back(key.substr(6), parse_int_list(value, where));
        } else {
            fail("schema '" + path + "': unknown key '" + key + "'");
        }
    }
    if (!have_channels || !have_label || !have_user || !have_rate)
        fail("schema '" + path + "' must define channels, label, user, and rate");
    if (s.sample_rate <= 0.0) fail("schema '" + path + "': rate must be positive");
    return s;
}

std::vector<Recording> load_recordings(const std::string& path,
                                       const SchemaDescriptor& schema) {
    std::ifstream is(path);
    if (!is) fail("cannot open data file '" + path + "'");
    std::string header;
    if (!std::getline(is, header)) fail("'" + path + "' is empty");
    std::vector<std::string> cols = split(trim(header), schema.delimiter);
    auto col_index = [&](const std::string& name) {
        for (std::size_t i = 0; i < cols.size(); ++i)
            if (trim(cols[i]) == name) return i;
        fail("'" + path + "': column '" + name + "' not found");
    };
    std::vector<std::size_t> chan_idx;
    for (const std::string& c : schema.channels) chan_idx.push_back(col_index(c));
    std::size_t label_idx = col_index(schema.label_col);
    std::size_t user_idx = col_index(schema.user_col);

    struct Rows {
        std::vector<std::vector<double>> chans;  // [channel][row]
        std::vector<int> labels;
    };
    std::map<int, Rows> by_user;
    std::string line;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        std::vector<std::string> cells = split(line, schema.delimiter);
        if (cells.size() != cols.size())
            fail("'" + path + "' line " + std::to_string(lineno) + ": expected " +
                 std::to_string(cols.size()) + " cells, got " + std::to_string(cells.size()));
        std::string where = path + ":" + std::to_string(lineno);
        std::string user_cell = trim(cells[user_idx]);
        std::string label_cell = trim(cells[label_idx]);
        if (is_missing(user_cell)) fail("missing user id at " + where);
        if (is_missing(label_cell)) fail("missing label at " + where);
        int user = static_cast<int>(parse_int(user_cell, where));
        int label = static_cast<int>(parse_int(label_cell, where));
        if (label < 1) fail("label must be >= 1 at " + where);
        Rows& r = by_user[user];
        if (r.chans.empty()) r.chans.resize(chan_idx.size());
        for (std::size_t c = 0; c < chan_idx.size(); ++c) {
            std::string cell = trim(cells[chan_idx[c]]);
            r.chans[c].push_back(is_missing(cell) ? std::nan("")
                                                  : parse_double(cell, where));
        }
        r.labels.push_back(label);
    }
    if (by_user.empty()) fail("'" + path + "' has no data rows");

    std::vector<Recording> out;
    for (auto& [user, rows] : by_user) {
        std::size_t t = rows.labels.size();
        std::size_t d = rows.chans.size();
        for (std::size_t c = 0; c < d; ++c)
            repair_channel(rows.chans[c], "user " + std::to_string(user) + " channel " +
                                              schema.channels[c] + " of '" + path + "'");
        std::vector<double> data(t * d);
        for (std::size_t r = 0; r < t; ++r)
            for (std::size_t c = 0; c < d; ++c) data[r * d + c] = rows.chans[c][r];
        Recording rec;
        rec.user = user;
        rec.sample_rate = schema.sample_rate;
        rec.samples = Array(Shape{t, d}, std::move(data));
        rec.labels = std::move(rows.labels);
        rec.source = path;
        out.push_back(std::move(rec));
    }
    return out;
}

std::size_t window_count(std::size_t total_rows, std::size_t window_len, double overlap) {
    if (window_len == 0) fail("window length must be positive");
    if (overlap < 0.0 || overlap >= 1.0) fail("overlap must be in [0, 1)");
    auto stride = static_cast<std::size_t>(
        std::floor(static_cast<double>(window_len) * (1.0 - overlap)));
    if (stride == 0) fail("window stride underflows to zero; lower the overlap");
    if (total_rows < window_len) return 0;
    return (total_rows - window_len) / stride + 1;
}

std::vector<SensorWindow> make_windows(const Recording& rec, std::size_t window_len,
                                       double overlap) {
    std::size_t t = rec.samples.rank() == 2 ? rec.samples.shape()[0] : 0;
    std::size_t d = rec.samples.rank() == 2 ? rec.samples.shape()[1] : 0;
    if (t == 0 || d == 0) fail("recording has no samples");
    if (rec.labels.size() != t) fail("label count differs from sample rows");
    auto stride = static_cast<std::size_t>(
        std::floor(static_cast<double>(window_len) * (1.0 - overlap)));
    std::size_t n = window_count(t, window_len, overlap);
    std::vector<SensorWindow> out;
    out.reserve(n);
    for (std::size_t w = 0; w < n; ++w) {
        std::size_t start = w * stride;
        std::map<int, std::size_t> counts;
        for (std::size_t r = start; r < start + window_len; ++r) ++counts[rec.labels[r]];
        int best = -1;
        std::size_t best_count = 0;
        bool tie = false;
        for (const auto& [label, count] : counts) {
            if (count > best_count) {
                best = label;
                best_count = count;
                tie = false;
            } else if (count == best_count) {
                tie = true;
            }
        }
        if (tie || 2 * best_count < window_len) continue;  // no clear majority
        SensorWindow win;
        win.y = best;
        win.user = rec.user;
        std::vector<double> data(window_len * d);
        for (std::size_t r = 0; r < window_len; ++r)
            for (std::size_t c = 0; c < d; ++c)
                data[r * d + c] = rec.samples.at2(start + r, c);
        win.x = Array(Shape{window_len, d}, std::move(data));
        out.push_back(std::move(win));
    }
    return out;
}

void zscore_per_user(std::vector<SensorWindow>& windows) {
    if (windows.empty()) return;
    std::size_t d = windows[0].x.shape()[1];
    std::map<int, std::vector<std::size_t>> by_user;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        if (windows[i].x.shape()[1] != d) fail("windows disagree on channel count");
        by_user[windows[i].user].push_back(i);
    }
    for (const auto& [user, idxs] : by_user) {
        for (std::size_t c = 0; c < d; ++c) {
            double lo = windows[idxs[0]].x.at2(0, c), hi = lo;
            double sum = 0.0;
            std::size_t n = 0;
            for (std::size_t i : idxs) {
                const Array& x = windows[i].x;
                for (std::size_t r = 0; r < x.shape()[0]; ++r) {
                    double v = x.at2(r, c);
                    lo = std::min(lo, v);
                    hi = std::max(hi, v);
                    sum += v;
                    ++n;
                }
            }
            if (n < 2) fail("user " + std::to_string(user) + " has fewer than 2 samples");
            if (lo == hi) {
                std::cerr << "zscore: constant channel " << c << " for user " << user
                          << "; emitting zeros\n";
                for (std::size_t i : idxs) {
                    Array& x = windows[i].x;
                    for (std::size_t r = 0; r < x.shape()[0]; ++r) x.at2(r, c) = 0.0;
                }
                continue;
            }
            double mean = sum / static_cast<double>(n);
            double ss = 0.0;
            for (std::size_t i : idxs) {
                const Array& x = windows[i].x;
                for (std::size_t r = 0; r < x.shape()[0]; ++r) {
                    double dlt = x.at2(r, c) - mean;
                    ss += dlt * dlt;
                }
            }
            double stddev = std::sqrt(ss / static_cast<double>(n));
            stddev = std::max(stddev, 1e-8);
            for (std::size_t i : idxs) {
                Array& x = windows[i].x;
                for (std::size_t r = 0; r < x.shape()[0]; ++r)
                    x.at2(r, c) = (x.at2(r, c) - mean) / stddev;
            }
        }
    }
}

std::pair<std::vector<SensorWindow>, std::vector<SensorWindow>> split_logo(
    const std::vector<SensorWindow>& windows, const SplitPlan& plan) {
    if (plan.groups.empty()) fail("split plan has no groups");
    std::map<int, std::string> user_group;
    bool heldout_found = false;
    for (const auto& [name, users] : plan.groups) {
        if (name == plan.heldout) heldout_found = true;
        for (int u : users) {
            if (user_group.count(u))
                fail("user " + std::to_string(u) + " appears in groups '" + user_group[u] +
                     "' and '" + name + "'");
            user_group[u] = name;
        }
    }
    if (!heldout_found) fail("held-out group '" + plan.heldout + "' is not in the plan");
    std::vector<SensorWindow> train, heldout;
    for (const SensorWindow& w : windows) {
        auto it = user_group.find(w.user);
        if (it == user_group.end())
            fail("window user " + std::to_string(w.user) + " is in no group");
        SensorWindow tagged = w;
        tagged.group = it->second;
        (it->second == plan.heldout ? heldout : train).push_back(std::move(tagged));
    }
    return {std::move(train), std::move(heldout)};
}

std::vector<SensorWindow> stratified_batch(const std::vector<SensorWindow>& windows,
                                           const BatchSpec& spec, Rng& rng) {
    if (spec.per_cell < 1) fail("batch spec needs per_cell >= 1");
    if (windows.empty()) fail("cannot batch zero windows");
    std::map<std::pair<int, int>, std::vector<std::size_t>> cells;
    for (std::size_t i = 0; i < windows.size(); ++i)
        cells[{windows[i].user, windows[i].y}].push_back(i);
    std::vector<SensorWindow> batch;
    auto k = static_cast<std::size_t>(spec.per_cell);
    for (auto& [key, idxs] : cells) {
        if (idxs.size() >= k) {
            // partial Fisher-Yates: k distinct picks
            std::vector<std::size_t> pool = idxs;
            for (std::size_t j = 0; j < k; ++j) {
                std::size_t pick = j + rng.index(pool.size() - j);
                std::swap(pool[j], pool[pick]);
                batch.push_back(windows[pool[j]]);
            }
        } else {
            for (std::size_t j = 0; j < k; ++j)
                batch.push_back(windows[idxs[rng.index(idxs.size())]]);
        }
    }
    rng.shuffle(batch);
    return batch;
}

void save_window_cache(const std::string& path, const std::vector<SensorWindow>& windows) {
    if (windows.empty()) fail("refusing to cache zero windows");
    std::size_t n = windows.size();
    std::size_t l = windows[0].x.shape()[0];
    std::size_t d = windows[0].x.shape()[1];
    std::vector<double> xs(n * l * d), ys(n), us(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Array& x = windows[i].x;
        if (x.shape()[0] != l || x.shape()[1] != d) fail("cache windows disagree on shape");
        std::copy(x.data(), x.data() + l * d, xs.begin() + static_cast<long>(i * l * d));
        ys[i] = windows[i].y;
        us[i] = windows[i].user;
    }
    std::map<std::string, Array> m;
    m.emplace("x", Array(Shape{n, l, d}, std::move(xs)));
    m.emplace("y", Array(Shape{n}, std::move(ys)));
    m.emplace("user", Array(Shape{n}, std::move(us)));
    save_arrays(path, m);
}

std::vector<SensorWindow> load_window_cache(const std::string& path) {
    std::map<std::string, Array> m = load_arrays(path);
    if (!m.count("x") || !m.count("y") || !m.count("user"))
        fail("'" + path + "' is not a window cache");
    const Array& x = m.at("x");
    const Array& y = m.at("y");
    const Array& u = m.at("user");
    if (x.rank() != 3) fail("window cache 'x' must be rank 3");
    std::size_t n = x.shape()[0], l = x.shape()[1], d = x.shape()[2];
    if (y.numel() != n || u.numel() != n) fail("window cache tensor sizes disagree");
    std::vector<SensorWindow> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> data(x.data() + i * l * d, x.data() + (i + 1) * l * d);
        out[i].x = Array(Shape{l, d}, std::move(data));
        out[i].y = static_cast<int>(y.at(i));
        out[i].user = static_cast<int>(u.at(i));
    }
    return out;
}

}  // namespace ctfg
