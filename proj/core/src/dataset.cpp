#include "emofuse/dataset.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace emofuse {

namespace {

// Minimal CSV splitter with double-quote support (quotes may wrap any field;
// doubled quotes inside a quoted field decode to one quote).
std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool in_quotes = false;
    for (size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            in_quotes = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    fields.push_back(std::move(cur));
    if (in_quotes) throw Error("unterminated quote");
    return fields;
}

int parse_int(const std::string& s) {
    int v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw Error("not an integer: '" + s + "'");
    return v;
}

double parse_double(const std::string& s) {
    double v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw Error("not a number: '" + s + "'");
    return v;
}

std::string format_double(double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw Error("cannot format number");
    return std::string(buf, p);
}

DiscreteLabel parse_categories(const std::string& joined) {
    DiscreteLabel label;
    if (joined.empty()) return label;
    std::stringstream ss(joined);
    std::string name;
    while (std::getline(ss, name, ';')) {
        if (!name.empty()) label.bits[category_index(name)] = 1;
    }
    return label;
}

std::string join_categories(const DiscreteLabel& label) {
    std::string out;
    const auto& names = category_names();
    for (int i = 0; i < kNumCategories; ++i) {
        if (!label.bits[i]) continue;
        if (!out.empty()) out += ';';
        out += names[i];
    }
    return out;
}

PersonAnnotation parse_row(const std::vector<std::string>& f) {
    if (f.size() != 12) throw Error("expected 12 fields, got " + std::to_string(f.size()));
    PersonAnnotation a;
    a.image_id = f[0];
    a.body_box = {parse_int(f[1]), parse_int(f[2]), parse_int(f[3]), parse_int(f[4])};
    a.gender = parse_gender(f[5]);
    a.age = parse_age(f[6]);
    a.discrete = parse_categories(f[7]);
    a.vad = {parse_double(f[8]), parse_double(f[9]), parse_double(f[10])};
    a.split = parse_split(f[11]);
    return a;
}

}  // namespace

std::map<Split, int> AnnotationTable::split_counts() const {
    std::map<Split, int> counts;
    for (const auto& r : rows) counts[r.split]++;
    return counts;
}

std::vector<int> AnnotationTable::row_indices(Split s) const {
    std::vector<int> idx;
    for (int i = 0; i < static_cast<int>(rows.size()); ++i)
        if (rows[i].split == s) idx.push_back(i);
    return idx;
}

LoadResult load_annotations(const std::filesystem::path& csv_path) {
    std::ifstream in(csv_path);
    if (!in) throw Error("cannot open annotation file: " + csv_path.string());

    std::string header;
    if (!std::getline(in, header)) throw Error("empty annotation file: " + csv_path.string());
    if (!header.empty() && header.back() == '\r') header.pop_back();
    if (header != kAnnotationCsvHeader)
        throw Error("malformed header in " + csv_path.string() + ": '" + header + "'");

    LoadResult result;
    std::string line;
    int line_no = 1;
    int data_rows = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++data_rows;
        PersonAnnotation a;
        try {
            a = parse_row(split_csv_line(line));
        } catch (const Error& e) {
            result.unparseable_rows.push_back({line_no, e.what()});
            continue;
        }
        auto violations = validate_annotation(a);
        if (has_hard_violation(violations)) {
            std::string msg;
            for (const auto& v : violations) {
                if (!v.hard) continue;
                if (!msg.empty()) msg += "; ";
                msg += v.message;
            }
            result.rejected_rows.push_back({line_no, msg});
            continue;
        }
        if (!a.discrete.any()) result.zero_label_rows++;
        result.table.rows.push_back(std::move(a));
    }

    if (!result.unparseable_rows.empty() &&
        result.unparseable_rows.size() * 100 > static_cast<size_t>(data_rows)) {
        std::string msg = std::to_string(result.unparseable_rows.size()) + " of " +
                          std::to_string(data_rows) + " rows unparseable in " +
                          csv_path.string() + ":";
        const size_t shown = std::min<size_t>(result.unparseable_rows.size(), 5);
        for (size_t i = 0; i < shown; ++i)
            msg += " [line " + std::to_string(result.unparseable_rows[i].line) + ": " +
                   result.unparseable_rows[i].message + "]";
        throw Error(msg);
    }
    return result;
}

void save_annotations(const AnnotationTable& table, const std::filesystem::path& csv_path) {
    std::ofstream out(csv_path, std::ios::binary);
    if (!out) throw Error("cannot write annotation file: " + csv_path.string());
    out << kAnnotationCsvHeader << "\n";
    for (const auto& a : table.rows) {
        out << a.image_id << ',' << a.body_box.x1 << ',' << a.body_box.y1 << ','
            << a.body_box.x2 << ',' << a.body_box.y2 << ',' << to_string(a.gender) << ','
            << to_string(a.age) << ",\"" << join_categories(a.discrete) << "\","
            << format_double(a.vad.valence) << ',' << format_double(a.vad.arousal) << ','
            << format_double(a.vad.dominance) << ',' << to_string(a.split) << "\n";
    }
}

CategoryFrequencies compute_frequencies(const AnnotationTable& table) {
    int n_train = 0;
    std::array<int, kNumCategories> counts{};
    for (const auto& r : table.rows) {
        if (r.split != Split::train) continue;
        ++n_train;
        for (int i = 0; i < kNumCategories; ++i)
            if (r.discrete.bits[i]) counts[i]++;
    }
    if (n_train == 0) throw Error("compute_frequencies: empty train split");
    CategoryFrequencies freq;
    for (int i = 0; i < kNumCategories; ++i)
        freq.p[i] = static_cast<double>(counts[i]) / n_train;
    return freq;
}

Image crop_body(const Image& image, const BoundingBox& box) {
    const BoundingBox clipped = box.clipped(image.width, image.height);
    if (!clipped.valid())
        throw Error("degenerate crop: box lies outside the image");
    return crop(image, clipped);
}

Image ImageStore::load(const std::string& image_id) const {
    Image img = load_image(root_ / image_id);
    if (img.height < 1 || img.width < 1 || img.channels != 3)
        throw Error("image store: bad raster for " + image_id);
    return img;
}

}  // namespace emofuse
