#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <cstdio>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "drgrade/image_io.hpp"
#include "drgrade/objectives.hpp"
#include "drgrade/rng.hpp"

namespace drgrade {

enum class Laterality { left, right, unknown };

inline const char* to_string(Laterality l)
{
    switch (l) {
    case Laterality::left: return "left";
    case Laterality::right: return "right";
    case Laterality::unknown: return "unknown";
    }
    return "unknown";
}

inline Laterality parse_laterality(const std::string& s)
{
    if (s == "left" || s == "L" || s == "l") return Laterality::left;
    if (s == "right" || s == "R" || s == "r") return Laterality::right;
    return Laterality::unknown;
}

struct ManifestRow {
    std::string image; ///< path as written in the CSV (relative to the manifest directory)
    Grade grade = 0;
    std::string patient_id;
    Laterality laterality = Laterality::unknown;
    std::string laterality_text; ///< original spelling, kept for round trips

    friend bool operator==(const ManifestRow&, const ManifestRow&) = default;
};

/// One split of a dataset. CSV header: image,grade,patient_id,laterality.
struct Manifest {
    std::string split = "train";
    fs::path base_dir;
    std::vector<ManifestRow> rows;

    std::size_t size() const { return rows.size(); }
    fs::path image_path(std::size_t i) const { return base_dir / rows.at(i).image; }

    std::vector<Grade> labels() const
    {
        std::vector<Grade> out;
        out.reserve(rows.size());
        for (const auto& r : rows) out.push_back(r.grade);
        return out;
    }

    /// Index of each row's partner eye, or the row itself if unpaired.
    std::vector<std::size_t> partners(std::vector<bool>* self_paired = nullptr) const
    {
        std::map<std::pair<std::string, Laterality>, std::size_t> by_key;
        for (std::size_t i = 0; i < rows.size(); ++i)
            if (rows[i].laterality != Laterality::unknown) by_key[{rows[i].patient_id, rows[i].laterality}] = i;
        std::vector<std::size_t> out(rows.size());
        if (self_paired) self_paired->assign(rows.size(), false);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            out[i] = i;
            if (rows[i].laterality == Laterality::unknown) {
                if (self_paired) (*self_paired)[i] = true;
                continue;
            }
            const Laterality other = rows[i].laterality == Laterality::left ? Laterality::right : Laterality::left;
            auto it = by_key.find({rows[i].patient_id, other});
            if (it != by_key.end()) out[i] = it->second;
            else if (self_paired) (*self_paired)[i] = true;
        }
        return out;
    }

    friend bool operator==(const Manifest& a, const Manifest& b) { return a.split == b.split && a.rows == b.rows; }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (char ch : line) {
        if (ch == '"') quoted = !quoted;
        else if (ch == ',' && !quoted) {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') cur.push_back(ch);
    }
    fields.push_back(cur);
    return fields;
}

inline std::string trim(std::string s)
{
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

} // namespace detail

inline std::string split_from_path(const fs::path& path)
{
    const std::string stem = path.stem().string();
    if (stem == "train" || stem == "validation" || stem == "test") return stem;
    if (stem == "val") return "validation";
    return "train";
}

inline Manifest parse_manifest(std::istream& in, const std::string& split, const fs::path& base_dir,
                               const std::string& source = "<stream>")
{
    Manifest m;
    m.split = split;
    m.base_dir = base_dir;
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) fail(ErrorKind::parse, source + ": empty manifest");
    ++line_no;
    auto header = detail::split_csv_line(line);
    for (auto& h : header) h = detail::trim(h);
    const std::vector<std::string> expected{"image", "grade", "patient_id", "laterality"};
    if (header != expected)
        fail(ErrorKind::parse, source + ":1: header must be image,grade,patient_id,laterality");
    std::set<std::pair<std::string, std::string>> seen;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const std::string where = source + ":" + std::to_string(line_no);
        auto f = detail::split_csv_line(line);
        if (f.size() != 4) fail(ErrorKind::parse, where + ": expected 4 fields, got " + std::to_string(f.size()));
        for (auto& x : f) x = detail::trim(x);
        ManifestRow row;
        row.image = f[0];
        if (row.image.empty()) fail(ErrorKind::parse, where + ": empty image path");
        try {
            std::size_t used = 0;
            row.grade = std::stoi(f[1], &used);
            if (used != f[1].size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            fail(ErrorKind::parse, where + ": grade '" + f[1] + "' is not an integer");
        }
        if (row.grade < 0 || row.grade > 4)
            fail(ErrorKind::parse, where + ": grade " + std::to_string(row.grade) + " outside 0..4");
        row.patient_id = f[2];
        row.laterality_text = f[3];
        row.laterality = parse_laterality(f[3]);
        if (row.laterality != Laterality::unknown && !seen.insert({row.patient_id, to_string(row.laterality)}).second)
            fail(ErrorKind::parse, where + ": duplicate (patient, eye) = (" + row.patient_id + ", " + f[3] + ")");
        m.rows.push_back(std::move(row));
    }
    return m;
}

inline Manifest load_manifest(const fs::path& path, std::string split = {})
{
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot open manifest '" + path.string() + "'");
    if (split.empty()) split = split_from_path(path);
    return parse_manifest(in, split, path.parent_path(), path.string());
}

inline void write_manifest(std::ostream& out, const Manifest& m)
{
    out << "image,grade,patient_id,laterality\n";
    for (const auto& r : m.rows)
        out << r.image << ',' << r.grade << ',' << r.patient_id << ','
            << (r.laterality_text.empty() ? to_string(r.laterality) : r.laterality_text) << '\n';
}

inline void write_manifest(const fs::path& path, const Manifest& m)
{
    std::ofstream out(path);
    if (!out) fail(ErrorKind::io, "cannot write manifest '" + path.string() + "'");
    write_manifest(out, m);
}

// ---------------------------------------------------------------------------
// Synthetic paired-eye fundus data
//
// Each image is a circular field of view on a black background with an optic
// disc on the nasal side (mirrored between eyes). Grade g carries a
// g-dependent number of small lesions: bright yellow exudates and dark
// haemorrhages, never overlapping. Both eyes of a patient share the patient's
// grade except for a small fraction of pairs where one eye differs by 1.

/// Largest and smallest per-class training counts of the reference dataset.
constexpr double kReferenceMajority = 25810.0;
constexpr double kReferenceMinority = 708.0;

/// Lesion count range [min, max] per grade.
constexpr std::array<std::array<int, 2>, 5> kLesionCounts{{{0, 0}, {1, 2}, {3, 5}, {6, 9}, {10, 14}}};

/// Per-grade counts summing to `total`, geometric between the reference
/// extremes (grade 0 : grade 4 = 25810 : 708). Counts are rounded to even numbers
/// so that every patient contributes two eyes.
inline std::array<int, 5> default_class_counts(int total)
{
    require(total >= 10, "default_class_counts: total must be >= 10");
    std::array<double, 5> w{};
    double sum = 0.0;
    for (int g = 0; g < 5; ++g) {
        w[static_cast<std::size_t>(g)] = std::pow(kReferenceMinority / kReferenceMajority, g / 4.0);
        sum += w[static_cast<std::size_t>(g)];
    }
    std::array<int, 5> counts{};
    int assigned = 0;
    for (int g = 1; g < 5; ++g) {
        const double share = total * w[static_cast<std::size_t>(g)] / sum;
        counts[static_cast<std::size_t>(g)] = std::max(2, 2 * static_cast<int>(std::lround(share / 2.0)));
        assigned += counts[static_cast<std::size_t>(g)];
    }
    counts[0] = std::max(2, total - assigned);
    if (counts[0] % 2) ++counts[0];
    return counts;
}

struct SyntheticSpec {
    int image_side = 64;
    std::array<int, 5> train_counts = default_class_counts(2000);
    int validation_total = 500;
    int test_total = 500;
    double pair_grade_jitter = 0.04; ///< probability that one eye of a pair differs by exactly 1
    double corrupt_fraction = 0.0;   ///< fraction of images blurred (at most one eye per pair)
    double corrupt_blur_sigma = 2.5; ///< in pixels at side 64
    double lesion_radius_min = 1.2;  ///< in pixels at side 64
    double lesion_radius_max = 1.8;
    std::uint64_t seed = 1;

    void validate() const
    {
        require(image_side >= 16, "synthetic: image_side must be >= 16");
        int total = 0;
        for (int c : train_counts) {
            require(c >= 0, "synthetic: class counts must be >= 0");
            total += c;
        }
        require(total > 0, "synthetic: at least one class must be non-empty");
        require(validation_total >= 0 && test_total >= 0, "synthetic: split sizes must be >= 0");
        require(pair_grade_jitter >= 0.0 && pair_grade_jitter <= 0.05, "synthetic: pair jitter must lie in [0, 0.05]");
        require(corrupt_fraction >= 0.0 && corrupt_fraction <= 0.5, "synthetic: corrupt_fraction must lie in [0, 0.5]");
        require(lesion_radius_min > 0.0 && lesion_radius_max >= lesion_radius_min, "synthetic: invalid lesion radii");
    }
};

struct Lesion {
    double y, x, radius;
    bool bright; ///< exudate (bright) or haemorrhage (dark)
};

struct SyntheticEye {
    Grade grade = 0;
    Laterality laterality = Laterality::left;
    bool corrupted = false;
    std::vector<Lesion> lesions;
};

inline constexpr std::array<double, 3> kExudateColor{250.0, 235.0, 60.0};
inline constexpr std::array<double, 3> kHaemorrhageColor{45.0, 6.0, 6.0};

/// Renders one eye in the 8-bit domain.
inline Image render_eye(const SyntheticSpec& spec, SyntheticEye& eye, Rng& rng)
{
    const int s = spec.image_side;
    const double unit = s / 64.0;
    const double cy = 0.5 * (s - 1) + rng_uniform(rng, -1.5, 1.5) * unit;
    const double cx = 0.5 * (s - 1) + rng_uniform(rng, -1.5, 1.5) * unit;
    const double radius = (0.45 + rng_uniform(rng, -0.02, 0.02)) * s;
    const double illum = rng_uniform(rng, 0.75, 1.15);
    const std::array<double, 3> base{190.0 * illum, 90.0 * illum, 40.0 * illum};
    const double disc_side = eye.laterality == Laterality::left ? -1.0 : 1.0;
    const double disc_y = cy + rng_uniform(rng, -0.08, 0.08) * radius;
    const double disc_x = cx + disc_side * 0.55 * radius;
    const double disc_r = 0.16 * radius;

    Image img({3, static_cast<std::size_t>(s), static_cast<std::size_t>(s)});
    for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x) {
            const double d = std::hypot(y - cy, x - cx);
            if (d > radius) continue;
            const double vignette = 1.0 - 0.35 * (d / radius) * (d / radius);
            const double dd = std::hypot(y - disc_y, x - disc_x);
            const double disc = std::exp(-(dd * dd) / (2.0 * disc_r * disc_r));
            for (std::size_t c = 0; c < 3; ++c) {
                const double disc_color = std::array<double, 3>{230.0, 150.0, 110.0}[c];
                double v = base[c] * vignette * (1.0 - disc) + disc_color * disc;
                v += rng_normal(rng, 0.0, 3.0);
                img.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = std::clamp(v, 12.0, 255.0);
            }
        }

    const int lo = kLesionCounts[static_cast<std::size_t>(eye.grade)][0];
    const int hi = kLesionCounts[static_cast<std::size_t>(eye.grade)][1];
    const int count = lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
    eye.lesions.clear();
    int attempts = 0;
    while (static_cast<int>(eye.lesions.size()) < count && attempts < 10000) {
        ++attempts;
        const double r = rng_uniform(rng, spec.lesion_radius_min, spec.lesion_radius_max) * unit;
        const double ang = rng_uniform(rng, 0.0, 2.0 * std::numbers::pi);
        const double rad = std::sqrt(rng.uniform01()) * 0.78 * radius;
        const Lesion l{cy + rad * std::sin(ang), cx + rad * std::cos(ang), r, rng.uniform01() < 0.5};
        if (std::hypot(l.y - disc_y, l.x - disc_x) < disc_r * 2.2 + r) continue;
        bool clear = true;
        for (const auto& o : eye.lesions)
            if (std::hypot(l.y - o.y, l.x - o.x) < l.radius + o.radius + 3.0 * unit) clear = false;
        if (clear) eye.lesions.push_back(l);
    }
    for (const auto& l : eye.lesions) {
        const auto& color = l.bright ? kExudateColor : kHaemorrhageColor;
        const int y0 = std::max(0, static_cast<int>(std::floor(l.y - l.radius)));
        const int y1 = std::min(s - 1, static_cast<int>(std::ceil(l.y + l.radius)));
        const int x0 = std::max(0, static_cast<int>(std::floor(l.x - l.radius)));
        const int x1 = std::min(s - 1, static_cast<int>(std::ceil(l.x + l.radius)));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x)
                if (std::hypot(y - l.y, x - l.x) <= l.radius)
                    for (std::size_t c = 0; c < 3; ++c)
                        img.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = color[c];
    }
    if (eye.corrupted) {
        // blur inside the field of view only so the black border stays detectable
        const Image sharp = img;
        img = gaussian_blur(img, spec.corrupt_blur_sigma * unit);
        const std::size_t plane = img.size() / 3;
        for (std::size_t i = 0; i < img.size(); ++i)
            if (sharp[i % plane] == 0.0) img[i] = 0.0;
    }
    return img;
}

struct SyntheticDataset {
    std::map<std::string, Manifest> splits; ///< "train", "validation", "test"
    std::map<std::string, std::vector<SyntheticEye>> eyes;
};

namespace detail {

inline std::array<int, 5> scaled_counts(const std::array<int, 5>& reference, int total)
{
    int ref_total = 0;
    for (int c : reference) ref_total += c;
    std::array<int, 5> out{};
    int assigned = 0;
    for (std::size_t g = 1; g < 5; ++g) {
        out[g] = 2 * static_cast<int>(std::lround(total * static_cast<double>(reference[g]) / ref_total / 2.0));
        assigned += out[g];
    }
    out[0] = std::max(0, total - assigned);
    out[0] += out[0] % 2;
    return out;
}

} // namespace detail

/// Generates all splits under `root` (images at <root>/<split>/<patient>_<eye>.png,
/// manifests at <root>/<split>.csv). Pass an empty root to keep images in memory only.
inline SyntheticDataset generate_synthetic(const SyntheticSpec& spec, const fs::path& root,
                                           std::map<std::string, std::vector<Image>>* images_out = nullptr)
{
    spec.validate();
    SyntheticDataset ds;
    const std::vector<std::pair<std::string, std::array<int, 5>>> plan{
        {"train", spec.train_counts},
        {"validation", detail::scaled_counts(spec.train_counts, spec.validation_total)},
        {"test", detail::scaled_counts(spec.train_counts, spec.test_total)},
    };
    std::uint64_t split_index = 0;
    for (const auto& [split, counts] : plan) {
        ++split_index;
        Rng rng = Rng::derive(spec.seed, {split_index});
        std::vector<Grade> patient_grades;
        for (int g = 0; g < 5; ++g)
            for (int k = 0; k < (counts[static_cast<std::size_t>(g)] + 1) / 2; ++k) patient_grades.push_back(g);
        for (std::size_t i = patient_grades.size(); i > 1; --i)
            std::swap(patient_grades[i - 1], patient_grades[rng.below(i)]);

        Manifest m;
        m.split = split;
        m.base_dir = root;
        std::vector<SyntheticEye> eyes;
        std::vector<Image> imgs;
        if (!root.empty()) fs::create_directories(root / split);
        for (std::size_t p = 0; p < patient_grades.size(); ++p) {
            std::array<Grade, 2> grades{patient_grades[p], patient_grades[p]};
            if (rng.uniform01() < spec.pair_grade_jitter) {
                const std::size_t which = rng.below(2);
                int delta = rng.uniform01() < 0.5 ? -1 : 1;
                if (grades[which] + delta < 0 || grades[which] + delta > 4) delta = -delta;
                grades[which] += delta;
            }
            std::array<bool, 2> corrupt{false, false};
            if (rng.uniform01() < 2.0 * spec.corrupt_fraction) corrupt[rng.below(2)] = true;
            char pid[32];
            std::snprintf(pid, sizeof pid, "%c%05zu", split[0], p);
            for (std::size_t e = 0; e < 2; ++e) {
                SyntheticEye eye;
                eye.grade = grades[e];
                eye.laterality = e == 0 ? Laterality::left : Laterality::right;
                eye.corrupted = corrupt[e];
                Rng eye_rng = Rng::derive(spec.seed, {split_index, p, e});
                Image img = render_eye(spec, eye, eye_rng);
                const std::string rel = split + "/" + pid + "_" + to_string(eye.laterality) + ".png";
                if (!root.empty()) write_png(root / rel, img);
                m.rows.push_back({rel, eye.grade, pid, eye.laterality, to_string(eye.laterality)});
                eyes.push_back(std::move(eye));
                if (images_out) imgs.push_back(std::move(img));
            }
        }
        if (!root.empty()) write_manifest(root / (split + ".csv"), m);
        ds.splits[split] = std::move(m);
        ds.eyes[split] = std::move(eyes);
        if (images_out) (*images_out)[split] = std::move(imgs);
    }
    return ds;
}

} // namespace drgrade
