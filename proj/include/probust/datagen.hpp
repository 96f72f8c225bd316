#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "probust/common.hpp"
#include "probust/network.hpp"
#include "probust/rng.hpp"

// Deterministic synthetic 2-D datasets and a flat CSV format
// (header `label,f0,f1,...`, shortest round-trip decimals).

namespace probust {

struct Dataset {
    std::vector<LabeledPoint> points;
    int dim = 0;
    int class_count = 0;
    std::uint64_t seed = 0;
    std::string kind;

    void validate() const {
        if (points.empty()) throw ConfigError("dataset is empty");
        for (const auto& p : points) {
            if (static_cast<int>(p.features.size()) != dim)
                throw ConfigError("dataset point dimension mismatch");
            if (p.label < 0 || p.label >= class_count)
                throw ConfigError("dataset label out of range");
            if (!all_finite(p.features)) throw ConfigError("dataset point not finite");
        }
    }
};

// Two interleaved half-circles, shifted so both arcs sit inside
// [-1.5, 1.5]^2. Class 0 gets ceil(n/2) points.
inline Dataset make_moons(std::int64_t n, double noise_sd, std::uint64_t seed) {
    if (n < 2) throw ConfigError("make_moons requires n >= 2");
    Dataset ds;
    ds.dim = 2;
    ds.class_count = 2;
    ds.seed = seed;
    ds.kind = "moons";
    const std::int64_t n0 = (n + 1) / 2, n1 = n / 2;
    const RngKey key{seed, 0};
    PhiloxStream noise(key.sub(0xd001), 0);
    for (std::int64_t i = 0; i < n0; ++i) {
        const double t = M_PI * static_cast<double>(i) / static_cast<double>(std::max<std::int64_t>(1, n0 - 1));
        Vec x = {std::cos(t) - 0.5, std::sin(t) - 0.25};
        if (noise_sd > 0.0)
            for (double& v : x) v += noise_sd * noise.next_gaussian();
        ds.points.push_back({std::move(x), 0});
    }
    for (std::int64_t i = 0; i < n1; ++i) {
        const double t = M_PI * static_cast<double>(i) / static_cast<double>(std::max<std::int64_t>(1, n1 - 1));
        Vec x = {0.5 - std::cos(t), 0.25 - std::sin(t)};
        if (noise_sd > 0.0)
            for (double& v : x) v += noise_sd * noise.next_gaussian();
        ds.points.push_back({std::move(x), 1});
    }
    ds.validate();
    return ds;
}

// Concentric circles with inner radius = factor. Class 0 gets ceil(n/2).
inline Dataset make_circles(std::int64_t n, double factor, double noise_sd, std::uint64_t seed) {
    if (n < 2) throw ConfigError("make_circles requires n >= 2");
    if (!(factor > 0.0 && factor < 1.0)) throw ConfigError("factor must lie in (0,1)");
    Dataset ds;
    ds.dim = 2;
    ds.class_count = 2;
    ds.seed = seed;
    ds.kind = "circles";
    const std::int64_t n0 = (n + 1) / 2, n1 = n / 2;
    const RngKey key{seed, 0};
    PhiloxStream noise(key.sub(0xd002), 0);
    for (std::int64_t i = 0; i < n0; ++i) {
        const double t = 2.0 * M_PI * static_cast<double>(i) / static_cast<double>(n0);
        Vec x = {std::cos(t), std::sin(t)};
        if (noise_sd > 0.0)
            for (double& v : x) v += noise_sd * noise.next_gaussian();
        ds.points.push_back({std::move(x), 0});
    }
    for (std::int64_t i = 0; i < n1; ++i) {
        const double t = 2.0 * M_PI * static_cast<double>(i) / static_cast<double>(n1);
        Vec x = {factor * std::cos(t), factor * std::sin(t)};
        if (noise_sd > 0.0)
            for (double& v : x) v += noise_sd * noise.next_gaussian();
        ds.points.push_back({std::move(x), 1});
    }
    ds.validate();
    return ds;
}

// Gaussian blobs, one class per center, points distributed round-robin.
inline Dataset make_blobs(std::int64_t n, const std::vector<Vec>& centers, double sd,
                          std::uint64_t seed) {
    if (centers.size() < 2) throw ConfigError("make_blobs requires at least 2 centers");
    if (n < static_cast<std::int64_t>(centers.size()))
        throw ConfigError("make_blobs requires n >= number of centers");
    const int d = static_cast<int>(centers[0].size());
    for (const auto& c : centers)
        if (static_cast<int>(c.size()) != d) throw ConfigError("blob centers differ in dimension");
    Dataset ds;
    ds.dim = d;
    ds.class_count = static_cast<int>(centers.size());
    ds.seed = seed;
    ds.kind = "blobs";
    const RngKey key{seed, 0};
    PhiloxStream noise(key.sub(0xd003), 0);
    for (std::int64_t i = 0; i < n; ++i) {
        const int c = static_cast<int>(i % centers.size());
        Vec x = centers[c];
        for (double& v : x) v += sd * noise.next_gaussian();
        ds.points.push_back({std::move(x), c});
    }
    ds.validate();
    return ds;
}

// Deterministic Fisher-Yates shuffle, then a head/tail split.
inline std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction,
                                         std::uint64_t seed) {
    ds.validate();
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ConfigError("train_fraction must lie in (0,1)");
    const std::int64_t n = static_cast<std::int64_t>(ds.points.size());
    std::vector<std::int64_t> idx(n);
    for (std::int64_t i = 0; i < n; ++i) idx[i] = i;
    PhiloxStream rng(RngKey{seed, 0}.sub(0xd004), 0);
    for (std::int64_t i = n - 1; i > 0; --i)
        std::swap(idx[i], idx[rng.next_below(static_cast<std::uint64_t>(i + 1))]);
    const std::int64_t cut = static_cast<std::int64_t>(std::floor(train_fraction * n));
    if (cut == 0 || cut == n) throw ConfigError("split produces an empty part");
    Dataset train = ds, test = ds;
    train.points.clear();
    test.points.clear();
    for (std::int64_t i = 0; i < n; ++i)
        (i < cut ? train : test).points.push_back(ds.points[idx[i]]);
    return {train, test};
}

namespace detail {

inline std::string dec_shortest(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace detail

inline void write_csv(const Dataset& ds, std::ostream& sink) {
    ds.validate();
    sink << "label";
    for (int i = 0; i < ds.dim; ++i) sink << ",f" << i;
    sink << '\n';
    for (const auto& p : ds.points) {
        sink << p.label;
        for (double v : p.features) sink << ',' << detail::dec_shortest(v);
        sink << '\n';
    }
}

inline void write_csv(const Dataset& ds, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot open csv for writing: " + path);
    write_csv(ds, f);
}

inline Dataset read_csv(std::istream& source) {
    Dataset ds;
    std::string line;
    if (!std::getline(source, line)) throw ConfigError("csv is empty");
    std::int64_t cols = std::count(line.begin(), line.end(), ',');
    if (cols < 1 || line.rfind("label,", 0) != 0) throw ConfigError("csv header must be label,f0,...");
    ds.dim = static_cast<int>(cols);
    int max_label = 0;
    while (std::getline(source, line)) {
        if (line.empty()) continue;
        LabeledPoint p;
        const char* ptr = line.data();
        const char* end = line.data() + line.size();
        auto res = std::from_chars(ptr, end, p.label);
        if (res.ec != std::errc() || res.ptr == end || *res.ptr != ',')
            throw ConfigError("malformed csv row: " + line);
        ptr = res.ptr;
        while (ptr != end && *ptr == ',') {
            ++ptr;
            double v = 0.0;
            auto r = std::from_chars(ptr, end, v);
            if (r.ec != std::errc()) throw ConfigError("malformed csv value in row: " + line);
            p.features.push_back(v);
            ptr = r.ptr;
        }
        if (static_cast<int>(p.features.size()) != ds.dim)
            throw ConfigError("csv row has wrong arity: " + line);
        max_label = std::max(max_label, p.label);
        ds.points.push_back(std::move(p));
    }
    ds.class_count = std::max(2, max_label + 1);
    ds.kind = "csv";
    ds.validate();
    return ds;
}

inline Dataset read_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open csv: " + path);
    return read_csv(f);
}

}  // namespace probust
