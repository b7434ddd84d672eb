#include "cal/data.hpp"

#include "cal/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace cal {

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IngestionError("cannot open '" + path.string() + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) {
        return {};
    }
    auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

// Splits one CSV record; double quotes protect commas, "" escapes a quote.
std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(trim(cur));
    return out;
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') {
            out += "\"\"";
        } else {
            out.push_back(c);
        }
    }
    return out + "\"";
}

std::string format_double(double v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    return ss.str();
}

}  // namespace

std::vector<std::size_t> FeatureSchema::continuous_columns() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (columns[i].kind == ColumnKind::continuous) {
            out.push_back(i);
        }
    }
    return out;
}

std::vector<std::size_t> FeatureSchema::categorical_columns() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (columns[i].kind == ColumnKind::categorical) {
            out.push_back(i);
        }
    }
    return out;
}

std::optional<std::size_t> FeatureSchema::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (columns[i].name == name) {
            return i;
        }
    }
    return std::nullopt;
}

void FeatureSchema::validate() const {
    if (label.empty()) {
        throw IngestionError("schema: label column name is empty");
    }
    if (columns.empty()) {
        throw IngestionError("schema: no feature columns");
    }
    std::unordered_set<std::string> seen{label};
    for (const auto& c : columns) {
        if (!seen.insert(c.name).second) {
            throw IngestionError("schema: duplicate column '" + c.name + "'");
        }
        if (c.kind == ColumnKind::categorical) {
            if (c.categories.size() < 2) {
                throw IngestionError("schema: categorical column '" + c.name + "' needs at least 2 categories");
            }
            std::unordered_set<std::string> cats(c.categories.begin(), c.categories.end());
            if (cats.size() != c.categories.size()) {
                throw IngestionError("schema: duplicate category in column '" + c.name + "'");
            }
        }
    }
}

nlohmann::json FeatureSchema::to_json() const {
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& c : columns) {
        nlohmann::json jc{{"name", c.name}, {"kind", c.kind == ColumnKind::continuous ? "continuous" : "categorical"}};
        if (c.kind == ColumnKind::categorical) {
            jc["categories"] = c.categories;
        }
        cols.push_back(jc);
    }
    if (!label_categories.empty()) {
        cols.push_back({{"name", label}, {"kind", "categorical"}, {"categories", label_categories}});
    }
    return {{"columns", cols}, {"label", label}};
}

FeatureSchema FeatureSchema::from_json(const nlohmann::json& j) {
    FeatureSchema s;
    try {
        s.label = j.value("label", std::string("class"));
        for (const auto& jc : j.at("columns")) {
            ColumnSpec c;
            c.name = jc.at("name").get<std::string>();
            auto kind = jc.value("kind", std::string("continuous"));
            if (kind == "continuous") {
                c.kind = ColumnKind::continuous;
            } else if (kind == "categorical") {
                c.kind = ColumnKind::categorical;
                c.categories = jc.at("categories").get<std::vector<std::string>>();
            } else {
                throw IngestionError("schema: unknown column kind '" + kind + "' for '" + c.name + "'");
            }
            if (c.name == s.label) {
                if (c.kind != ColumnKind::categorical) {
                    throw IngestionError("schema: label column '" + c.name + "' must be categorical when listed");
                }
                s.label_categories = c.categories;
                continue;
            }
            s.columns.push_back(std::move(c));
        }
    } catch (const nlohmann::json::exception& e) {
        throw IngestionError(std::string("schema: ") + e.what());
    }
    s.validate();
    return s;
}

FeatureSchema load_schema(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw IngestionError("schema '" + path.string() + "': " + e.what());
    }
    return FeatureSchema::from_json(j);
}

void save_schema(const FeatureSchema& schema, const std::filesystem::path& path) {
    std::ofstream out(path);
    out << schema.to_json().dump(2) << '\n';
}

std::vector<std::size_t> Dataset::class_counts() const {
    std::vector<std::size_t> counts(n_classes(), 0);
    for (int l : labels) {
        ++counts[static_cast<std::size_t>(l)];
    }
    return counts;
}

Dataset Dataset::subset(std::span<const RowId> ids) const {
    Dataset d;
    d.name = name;
    d.schema = schema;
    d.class_names = class_names;
    d.rows.resize(static_cast<Eigen::Index>(ids.size()), rows.cols());
    d.labels.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        d.rows.row(static_cast<Eigen::Index>(i)) = rows.row(static_cast<Eigen::Index>(ids[i]));
        d.labels.push_back(labels[ids[i]]);
    }
    return d;
}

Dataset parse_dataset(const std::string& csv_text, const FeatureSchema& schema) {
    schema.validate();
    std::istringstream in(csv_text);
    std::string line;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        if (!trim(line).empty()) {
            header = split_csv_line(line);
            break;
        }
    }
    if (header.empty()) {
        throw IngestionError("csv: missing header row");
    }
    if (!header.empty() && header[0].starts_with("\xEF\xBB\xBF")) {
        header[0] = header[0].substr(3);
    }

    std::unordered_map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < header.size(); ++i) {
        pos[header[i]] = i;
    }
    std::vector<std::size_t> col_pos;
    for (const auto& c : schema.columns) {
        auto it = pos.find(c.name);
        if (it == pos.end()) {
            throw IngestionError("csv: missing column '" + c.name + "'");
        }
        col_pos.push_back(it->second);
    }
    auto label_it = pos.find(schema.label);
    if (label_it == pos.end()) {
        throw IngestionError("csv: missing label column '" + schema.label + "'");
    }

    std::vector<std::unordered_map<std::string, int>> cat_index(schema.columns.size());
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
        const auto& cats = schema.columns[c].categories;
        for (std::size_t v = 0; v < cats.size(); ++v) {
            cat_index[c][cats[v]] = static_cast<int>(v);
        }
    }

    std::vector<std::vector<double>> values;
    std::vector<std::string> raw_labels;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        auto cells = split_csv_line(line);
        if (cells.size() != header.size()) {
            throw IngestionError("csv row " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                                 " cells, found " + std::to_string(cells.size()));
        }
        std::vector<double> row(schema.columns.size());
        for (std::size_t c = 0; c < schema.columns.size(); ++c) {
            const auto& cell = cells[col_pos[c]];
            const auto& spec = schema.columns[c];
            if (cell.empty()) {
                throw IngestionError("csv row " + std::to_string(line_no) + ", column '" + spec.name + "': missing value");
            }
            if (spec.kind == ColumnKind::categorical) {
                auto it = cat_index[c].find(cell);
                if (it == cat_index[c].end()) {
                    throw IngestionError("csv row " + std::to_string(line_no) + ", column '" + spec.name +
                                         "': unknown category '" + cell + "'");
                }
                row[c] = it->second;
            } else {
                std::size_t consumed = 0;
                double v = 0.0;
                try {
                    v = std::stod(cell, &consumed);
                } catch (const std::exception&) {
                    consumed = 0;
                }
                if (consumed != cell.size() || !std::isfinite(v)) {
                    throw IngestionError("csv row " + std::to_string(line_no) + ", column '" + spec.name +
                                         "': non-numeric value '" + cell + "'");
                }
                row[c] = v;
            }
        }
        const auto& lab = cells[label_it->second];
        if (lab.empty()) {
            throw IngestionError("csv row " + std::to_string(line_no) + ", column '" + schema.label + "': missing label");
        }
        values.push_back(std::move(row));
        raw_labels.push_back(lab);
    }
    if (values.empty()) {
        throw IngestionError("csv: no data rows");
    }

    Dataset d;
    d.schema = schema;
    if (!schema.label_categories.empty()) {
        d.class_names = schema.label_categories;
    } else {
        std::set<std::string> uniq(raw_labels.begin(), raw_labels.end());
        d.class_names.assign(uniq.begin(), uniq.end());
    }
    std::unordered_map<std::string, int> class_index;
    for (std::size_t i = 0; i < d.class_names.size(); ++i) {
        class_index[d.class_names[i]] = static_cast<int>(i);
    }
    d.rows.resize(static_cast<Eigen::Index>(values.size()), static_cast<Eigen::Index>(schema.columns.size()));
    for (std::size_t r = 0; r < values.size(); ++r) {
        for (std::size_t c = 0; c < schema.columns.size(); ++c) {
            d.rows(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = values[r][c];
        }
        auto it = class_index.find(raw_labels[r]);
        if (it == class_index.end()) {
            throw IngestionError("csv row " + std::to_string(r + 2) + ", column '" + schema.label + "': unknown class '" +
                                 raw_labels[r] + "'");
        }
        d.labels.push_back(it->second);
    }
    return d;
}

Dataset load_dataset(const std::filesystem::path& csv_path, const std::filesystem::path& schema_path) {
    auto schema = load_schema(schema_path);
    auto d = parse_dataset(read_file(csv_path), schema);
    d.name = csv_path.stem().string();
    return d;
}

void save_dataset_csv(const Dataset& d, const std::filesystem::path& csv_path) {
    std::ofstream out(csv_path);
    if (!out) {
        throw Error("cannot write '" + csv_path.string() + "'");
    }
    for (const auto& c : d.schema.columns) {
        out << csv_escape(c.name) << ',';
    }
    out << csv_escape(d.schema.label) << '\n';
    for (std::size_t r = 0; r < d.size(); ++r) {
        for (std::size_t c = 0; c < d.schema.columns.size(); ++c) {
            double v = d.rows(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
            const auto& spec = d.schema.columns[c];
            if (spec.kind == ColumnKind::categorical) {
                out << csv_escape(spec.categories.at(static_cast<std::size_t>(v)));
            } else {
                out << format_double(v);
            }
            out << ',';
        }
        out << csv_escape(d.class_names.at(static_cast<std::size_t>(d.labels[r]))) << '\n';
    }
}

double row_distance_sq(const FeatureSchema& schema, std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
        if (schema.columns[c].kind == ColumnKind::continuous) {
            double d = a[c] - b[c];
            s += d * d;
        } else if (a[c] != b[c]) {
            s += 2.0;
        }
    }
    return s;
}

nlohmann::json ZScoreStats::to_json() const {
    return {{"method", "zscore-population"}, {"mean", mean}, {"std", stddev}};
}

ZScoreStats zscore_fit(const Dataset& train) {
    ZScoreStats st;
    auto d = train.schema.columns.size();
    st.mean.assign(d, 0.0);
    st.stddev.assign(d, 0.0);
    auto n = static_cast<double>(train.size());
    for (std::size_t c = 0; c < d; ++c) {
        if (train.schema.columns[c].kind != ColumnKind::continuous) {
            continue;
        }
        auto col = train.rows.col(static_cast<Eigen::Index>(c));
        double mean = col.sum() / n;
        double var = (col.array() - mean).square().sum() / n;
        st.mean[c] = mean;
        st.stddev[c] = var > 0.0 ? std::sqrt(var) : 0.0;
    }
    return st;
}

void zscore_apply(const ZScoreStats& stats, Dataset& d) {
    for (std::size_t c = 0; c < d.schema.columns.size(); ++c) {
        if (d.schema.columns[c].kind != ColumnKind::continuous) {
            continue;
        }
        auto col = d.rows.col(static_cast<Eigen::Index>(c));
        col.array() -= stats.mean[c];
        if (stats.stddev[c] > 0.0) {
            col.array() /= stats.stddev[c];
        }
    }
}

NormalizedSets zscore_fit_apply(const Dataset& train, const std::vector<Dataset>& others) {
    NormalizedSets out{train, others, zscore_fit(train)};
    zscore_apply(out.stats, out.train);
    for (auto& o : out.others) {
        zscore_apply(out.stats, o);
    }
    return out;
}

std::vector<RowId> FoldSplit::test_ids(std::size_t fold) const {
    std::vector<RowId> ids;
    for (std::size_t i = 0; i < assignments.size(); ++i) {
        if (assignments[i] == fold) {
            ids.push_back(i);
        }
    }
    return ids;
}

std::vector<RowId> FoldSplit::train_ids(std::size_t fold) const {
    std::vector<RowId> ids;
    for (std::size_t i = 0; i < assignments.size(); ++i) {
        if (assignments[i] != fold) {
            ids.push_back(i);
        }
    }
    return ids;
}

FoldSplit stratified_kfold(const Dataset& d, std::size_t k, std::uint64_t seed) {
    if (k < 2) {
        throw Error("stratified_kfold: k must be at least 2");
    }
    auto counts = d.class_counts();
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] == 0) {
            continue;
        }
        if (counts[c] < k) {
            throw Error("stratified_kfold: class '" + d.class_names[c] + "' has " + std::to_string(counts[c]) +
                        " rows, cannot stratify into " + std::to_string(k) + " folds");
        }
    }
    FoldSplit split{k, std::vector<std::size_t>(d.size(), 0), seed};
    std::mt19937_64 rng(seed);
    // Round-robin within each class; the offset carries over between classes so
    // fold sizes stay balanced overall.
    std::size_t offset = 0;
    for (std::size_t c = 0; c < counts.size(); ++c) {
        std::vector<RowId> ids;
        for (std::size_t i = 0; i < d.size(); ++i) {
            if (static_cast<std::size_t>(d.labels[i]) == c) {
                ids.push_back(i);
            }
        }
        std::shuffle(ids.begin(), ids.end(), rng);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            split.assignments[ids[i]] = (offset + i) % k;
        }
        offset = (offset + ids.size()) % k;
    }
    return split;
}

void save_folds_csv(const FoldSplit& split, const std::filesystem::path& path) {
    std::ofstream out(path);
    out << "row_index,fold\n";
    for (std::size_t i = 0; i < split.assignments.size(); ++i) {
        out << i << ',' << split.assignments[i] << '\n';
    }
}

FoldData make_fold(const Dataset& d, const FoldSplit& split, std::size_t fold) {
    if (fold >= split.k) {
        throw Error("make_fold: fold " + std::to_string(fold) + " out of range");
    }
    auto train_ids = split.train_ids(fold);
    auto test_ids = split.test_ids(fold);
    auto norm = zscore_fit_apply(d.subset(train_ids), {d.subset(test_ids)});
    return FoldData{std::move(norm.train), std::move(norm.others.front()), std::move(norm.stats), fold};
}

PoolState::PoolState(std::size_t n_train) : n_train_(n_train) {
    for (RowId i = 0; i < n_train; ++i) {
        unlabeled_.insert(unlabeled_.end(), i);
    }
}

void PoolState::set_label(RowId id, int label) {
    if (id >= n_train_) {
        throw Error("pool: row " + std::to_string(id) + " is not a training row");
    }
    auto [it, inserted] = acquired_.insert_or_assign(id, label);
    if (inserted) {
        labeled_.push_back(id);
        unlabeled_.erase(id);
    }
}

std::vector<RowId> select_initial(const Dataset& train, std::size_t n_init, const MixtureModel& mixture,
                                  std::uint64_t seed) {
    auto n = train.size();
    if (n_init > n) {
        throw Error("init_pool: n_init " + std::to_string(n_init) + " exceeds " + std::to_string(n) + " training rows");
    }
    std::vector<RowId> chosen;
    if (n_init == 0) {
        return chosen;
    }
    // Work in log space: log density + log distance, so tiny densities stay comparable.
    std::vector<double> log_dens(n);
    for (std::size_t i = 0; i < n; ++i) {
        log_dens[i] = mixture.log_density(row_span(train.rows, static_cast<Eigen::Index>(i)));
    }
    std::mt19937_64 rng(seed);
    auto pick = [&](const std::vector<double>& score) {
        double best = -std::numeric_limits<double>::infinity();
        std::vector<RowId> ties;
        for (std::size_t i = 0; i < n; ++i) {
            if (score[i] > best) {
                best = score[i];
                ties.assign(1, i);
            } else if (score[i] == best && best != -std::numeric_limits<double>::infinity()) {
                ties.push_back(i);
            }
        }
        if (ties.empty()) {
            return RowId{n};
        }
        if (ties.size() == 1) {
            return ties.front();
        }
        std::uniform_int_distribution<std::size_t> u(0, ties.size() - 1);
        return ties[u(rng)];
    };

    chosen.push_back(pick(log_dens));
    std::vector<double> min_dist(n, std::numeric_limits<double>::infinity());
    while (chosen.size() < n_init) {
        auto last = chosen.back();
        std::vector<double> score(n, -std::numeric_limits<double>::infinity());
        for (std::size_t i = 0; i < n; ++i) {
            double d2 = row_distance_sq(train.schema, row_span(train.rows, static_cast<Eigen::Index>(i)),
                                        row_span(train.rows, static_cast<Eigen::Index>(last)));
            min_dist[i] = std::min(min_dist[i], d2);
            if (min_dist[i] > 0.0) {
                score[i] = log_dens[i] + 0.5 * std::log(min_dist[i]);
            }
        }
        auto next = pick(score);
        if (next == n) {
            // Remaining rows duplicate chosen ones; take the lowest unchosen ids.
            for (RowId i = 0; i < n && chosen.size() < n_init; ++i) {
                if (std::find(chosen.begin(), chosen.end(), i) == chosen.end()) {
                    chosen.push_back(i);
                }
            }
            break;
        }
        chosen.push_back(next);
    }
    return chosen;
}

}  // namespace cal
