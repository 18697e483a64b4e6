#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "ctfg/dataio.hpp"
#include "oracle_utils.hpp"

using namespace ctfg;
namespace fs = std::filesystem;

namespace {

// Brute-force count: slide the start index until the window no longer fits.
std::size_t naive_window_count(std::size_t t, std::size_t l, double overlap) {
    auto stride = static_cast<std::size_t>(std::floor(l * (1.0 - overlap)));
    std::size_t n = 0;
    for (std::size_t start = 0; start + l <= t; start += stride) ++n;
    return n;
}

Recording toy_recording(int user, std::size_t t, std::size_t d, int label) {
    Recording rec;
    rec.user = user;
    rec.sample_rate = 25.0;
    Array samples(Shape{t, d});
    for (std::size_t r = 0; r < t; ++r)
        for (std::size_t c = 0; c < d; ++c)
            samples.at2(r, c) = static_cast<double>(r) + 0.1 * static_cast<double>(c);
    rec.samples = samples;
    rec.labels.assign(t, label);
    return rec;
}

fs::path scratch_dir() {
    fs::path dir = fs::temp_directory_path() / "ctfg_dataio_test";
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("window counts match the sliding oracle across random geometries") {
    Rng rng(17);
    for (int rep = 0; rep < 300; ++rep) {
        std::size_t l = 2 + rng.index(200);
        std::size_t t = rng.index(3000);
        double overlap = rng.uniform(0.0, 0.95);
        if (std::floor(l * (1.0 - overlap)) == 0.0) continue;
        CHECK(window_count(t, l, overlap) == naive_window_count(t, l, overlap));
    }
    CHECK(window_count(75, 75, 0.5) == 1);
    CHECK(window_count(74, 75, 0.5) == 0);
    CHECK(window_count(2258, 75, 0.5) == 60);  // 75 + 59 * 37 rows
    CHECK_THROWS_AS(window_count(100, 10, 1.0), Error);
    CHECK_THROWS_AS(window_count(100, 10, 0.95), Error);  // stride underflow
}

TEST_CASE("windows copy the right rows and carry user and label") {
    Recording rec = toy_recording(3, 20, 2, 7);
    auto wins = make_windows(rec, 8, 0.5);  // stride 4: starts 0,4,8,12
    REQUIRE(wins.size() == 4);
    for (std::size_t w = 0; w < wins.size(); ++w) {
        CHECK(wins[w].user == 3);
        CHECK(wins[w].y == 7);
        CHECK(wins[w].group.empty());
        for (std::size_t r = 0; r < 8; ++r)
            for (std::size_t c = 0; c < 2; ++c)
                CHECK(wins[w].x.at2(r, c) == rec.samples.at2(w * 4 + r, c));
    }
}

TEST_CASE("window label needs a unique modal label covering half the rows") {
    Recording rec = toy_recording(1, 75, 1, 2);
    // 38 of 75 rows labeled 3: modal and >= half -> window labeled 3
    for (std::size_t r = 0; r < 38; ++r) rec.labels[r] = 3;
    auto wins = make_windows(rec, 75, 0.5);
    REQUIRE(wins.size() == 1);
    CHECK(wins[0].y == 3);

    // 37 of 75: modal label is 2 with 38 rows
    Recording rec2 = toy_recording(1, 75, 1, 2);
    for (std::size_t r = 0; r < 37; ++r) rec2.labels[r] = 3;
    auto wins2 = make_windows(rec2, 75, 0.5);
    REQUIRE(wins2.size() == 1);
    CHECK(wins2[0].y == 2);

    // three-way split, no label reaching half -> window dropped
    Recording rec3 = toy_recording(1, 75, 1, 1);
    for (std::size_t r = 25; r < 50; ++r) rec3.labels[r] = 2;
    for (std::size_t r = 50; r < 75; ++r) rec3.labels[r] = 3;
    CHECK(make_windows(rec3, 75, 0.5).empty());

    // exact tie at half on an even-length window -> dropped
    Recording rec4 = toy_recording(1, 10, 1, 1);
    for (std::size_t r = 5; r < 10; ++r) rec4.labels[r] = 2;
    CHECK(make_windows(rec4, 10, 0.0).empty());
}

TEST_CASE("zscore standardizes per user and channel") {
    Rng rng(23);
    std::vector<SensorWindow> wins;
    for (int user : {1, 2}) {
        double shift = user * 10.0;
        for (int i = 0; i < 5; ++i) {
            SensorWindow w;
            w.user = user;
            w.y = 1;
            w.x = oracle::random_array(Shape{6, 2}, rng, shift - 1.0, shift + 1.0);
            wins.push_back(w);
        }
    }
    zscore_per_user(wins);
    for (int user : {1, 2}) {
        for (std::size_t c = 0; c < 2; ++c) {
            double sum = 0.0, ss = 0.0;
            std::size_t n = 0;
            for (const auto& w : wins) {
                if (w.user != user) continue;
                for (std::size_t r = 0; r < 6; ++r) {
                    sum += w.x.at2(r, c);
                    ss += w.x.at2(r, c) * w.x.at2(r, c);
                    ++n;
                }
            }
            double mean = sum / n;
            double var = ss / n - mean * mean;
            CHECK(std::fabs(mean) < 1e-12);
            CHECK(std::fabs(var - 1.0) < 1e-9);
        }
    }

    // idempotence: a second pass changes nothing beyond tiny rounding
    auto before = wins;
    zscore_per_user(wins);
    for (std::size_t i = 0; i < wins.size(); ++i)
        for (std::size_t j = 0; j < wins[i].x.numel(); ++j)
            CHECK(std::fabs(wins[i].x.at(j) - before[i].x.at(j)) < 1e-10);
}

TEST_CASE("zscore zeroes constant channels exactly") {
    std::vector<SensorWindow> wins;
    for (int i = 0; i < 3; ++i) {
        SensorWindow w;
        w.user = 9;
        w.y = 1;
        Array x(Shape{4, 2});
        for (std::size_t r = 0; r < 4; ++r) {
            x.at2(r, 0) = 0.1;  // constant channel
            x.at2(r, 1) = static_cast<double>(r + i);
        }
        w.x = x;
        wins.push_back(w);
    }
    zscore_per_user(wins);
    for (const auto& w : wins)
        for (std::size_t r = 0; r < 4; ++r) CHECK(w.x.at2(r, 0) == 0.0);
}

TEST_CASE("logo split tags groups, keeps users disjoint, and rejects bad plans") {
    std::vector<SensorWindow> wins;
    for (int user : {1, 2, 5, 6, 7, 8})
        for (int i = 0; i < 3; ++i) {
            SensorWindow w;
            w.user = user;
            w.y = 1 + i;
            w.x = Array(Shape{2, 1});
            wins.push_back(w);
        }
    SplitPlan plan;
    plan.groups = {{"A", {1, 2}}, {"B", {5, 6}}, {"C", {7, 8}}};
    plan.heldout = "B";
    auto [train, held] = split_logo(wins, plan);
    CHECK(train.size() == 12);
    CHECK(held.size() == 6);
    std::set<int> train_users, held_users;
    for (const auto& w : train) {
        train_users.insert(w.user);
        CHECK((w.group == "A" || w.group == "C"));
    }
    for (const auto& w : held) {
        held_users.insert(w.user);
        CHECK(w.group == "B");
    }
    for (int u : held_users) CHECK(train_users.count(u) == 0);

    SplitPlan missing = plan;
    missing.heldout = "Z";
    CHECK_THROWS_AS(split_logo(wins, missing), Error);

    SplitPlan overlapping = plan;
    overlapping.groups[1].second.push_back(1);
    CHECK_THROWS_AS(split_logo(wins, overlapping), Error);

    SplitPlan incomplete;
    incomplete.groups = {{"A", {1, 2}}};
    incomplete.heldout = "A";
    CHECK_THROWS_AS(split_logo(wins, incomplete), Error);
}

TEST_CASE("stratified batches cover every cell and are seed-deterministic") {
    Rng mk(31);
    std::vector<SensorWindow> wins;
    for (int user : {1, 2, 3})
        for (int cls : {1, 2}) {
            int count = (user == 3 && cls == 2) ? 1 : 6;  // one undersized cell
            for (int i = 0; i < count; ++i) {
                SensorWindow w;
                w.user = user;
                w.y = cls;
                w.x = oracle::random_array(Shape{2, 1}, mk);
                wins.push_back(w);
            }
        }
    BatchSpec spec;
    spec.per_cell = 2;
    Rng r1(99), r2(99), r3(100);
    auto b1 = stratified_batch(wins, spec, r1);
    auto b2 = stratified_batch(wins, spec, r2);
    CHECK(b1.size() == 12);  // 6 cells x 2
    std::map<std::pair<int, int>, int> cell_counts;
    for (const auto& w : b1) ++cell_counts[{w.user, w.y}];
    CHECK(cell_counts.size() == 6);
    for (const auto& [cell, count] : cell_counts) CHECK(count == 2);

    REQUIRE(b1.size() == b2.size());
    for (std::size_t i = 0; i < b1.size(); ++i) {
        CHECK(b1[i].user == b2[i].user);
        CHECK(b1[i].y == b2[i].y);
        CHECK(oracle::bits_equal(b1[i].x, b2[i].x));
    }
    auto b3 = stratified_batch(wins, spec, r3);
    bool any_diff = false;
    for (std::size_t i = 0; i < b1.size(); ++i)
        if (!oracle::bits_equal(b1[i].x, b3[i].x)) any_diff = true;
    CHECK(any_diff);

    // undersized cell sampled with replacement still contributes per_cell
    CHECK(cell_counts.at({3, 2}) == 2);
}

TEST_CASE("schema and csv loading with missing-value repair") {
    fs::path dir = scratch_dir();
    fs::path schema_path = dir / "toy.schema";
    fs::path csv_path = dir / "toy.csv";
    {
        std::ofstream os(schema_path);
        os << "# toy dataset layout\n"
           << "channels = ax, ay\n"
           << "label = act\n"
           << "user = subject\n"
           << "rate = 50\n"
           << "group.A = 1\n"
           << "group.B = 2\n";
    }
    {
        std::ofstream os(csv_path);
        os << "subject,act,ax,ay,extra\n";
        // user 1: ax has an interior gap (rows 2-3) and a leading gap on ay
        os << "1,1,0.0,NaN,9\n";
        os << "1,1,1.0,5.0,9\n";
        os << "1,1,nan,6.0,9\n";
        os << "1,1,NA,7.0,9\n";
        os << "1,2,4.0,8.0,9\n";
        // user 2 rows interleaved with user 1 are grouped by user
        os << "2,1,10.0,1.0,9\n";
        os << "2,1,11.0,,9\n";
        os << "2,1,12.0,3.0,9\n";
    }
    SchemaDescriptor schema = load_schema(schema_path.string());
    CHECK(schema.channels == std::vector<std::string>{"ax", "ay"});
    CHECK(schema.sample_rate == 50.0);
    CHECK(schema.plan.groups.size() == 2);

    auto recs = load_recordings(csv_path.string(), schema);
    REQUIRE(recs.size() == 2);
    const Recording& r1 = recs[0];
    CHECK(r1.user == 1);
    CHECK(r1.samples.shape() == Shape{5, 2});
    // interior gap: linear interpolation 1.0 -> 4.0 over rows 1..4
    CHECK(r1.samples.at2(2, 0) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(r1.samples.at2(3, 0) == doctest::Approx(3.0).epsilon(1e-12));
    // leading gap: nearest defined value
    CHECK(r1.samples.at2(0, 1) == 5.0);
    const Recording& r2 = recs[1];
    CHECK(r2.user == 2);
    // interior single gap on ay: midpoint of 1 and 3
    CHECK(r2.samples.at2(1, 1) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(r2.labels == std::vector<int>{1, 1, 1});

    // malformed rows are rejected
    fs::path bad_csv = dir / "bad.csv";
    {
        std::ofstream os(bad_csv);
        os << "subject,act,ax,ay,extra\n1,0,1.0,1.0,9\n";  // label < 1
    }
    CHECK_THROWS_AS(load_recordings(bad_csv.string(), schema), Error);
    {
        std::ofstream os(bad_csv);
        os << "subject,act,ax,ay,extra\n1,1,1.0\n";  // short row
    }
    CHECK_THROWS_AS(load_recordings(bad_csv.string(), schema), Error);
    {
        std::ofstream os(bad_csv);
        os << "subject,act,ax,ay,extra\n,1,1.0,1.0,9\n";  // missing user
    }
    CHECK_THROWS_AS(load_recordings(bad_csv.string(), schema), Error);

    fs::path bad_schema = dir / "bad.schema";
    {
        std::ofstream os(bad_schema);
        os << "channels = ax\nlabel = act\nuser = subject\n";  // rate missing
    }
    CHECK_THROWS_AS(load_schema(bad_schema.string()), Error);
    {
        std::ofstream os(bad_schema);
        os << "channels = ax\nlabel = act\nuser = subject\nrate = 50\nbogus = 1\n";
    }
    CHECK_THROWS_AS(load_schema(bad_schema.string()), Error);
    fs::remove_all(dir);
}

TEST_CASE("window cache round-trips windows bit-exactly") {
    fs::path dir = scratch_dir();
    std::string path = (dir / "cache.ctfg").string();
    Rng rng(41);
    std::vector<SensorWindow> wins;
    for (int i = 0; i < 7; ++i) {
        SensorWindow w;
        w.user = 1 + i % 3;
        w.y = 1 + i % 2;
        w.x = oracle::random_array(Shape{5, 3}, rng, -2.0, 2.0);
        wins.push_back(w);
    }
    save_window_cache(path, wins);
    auto loaded = load_window_cache(path);
    REQUIRE(loaded.size() == wins.size());
    for (std::size_t i = 0; i < wins.size(); ++i) {
        CHECK(loaded[i].user == wins[i].user);
        CHECK(loaded[i].y == wins[i].y);
        CHECK(oracle::bits_equal(loaded[i].x, wins[i].x));
    }
    fs::remove_all(dir);
}
