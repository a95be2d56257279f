#include "mildl/mil_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "mildl/random.hpp"

namespace mildl {

namespace {

constexpr int kUspsFeatureDim = 256;

bool parse_double(const std::string& tok, double& out) {
    try {
        std::size_t pos = 0;
        out = std::stod(tok, &pos);
        return pos == tok.size();
    } catch (const std::exception&) {
        return false;
    }
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

Index MILDataset::num_instances() const {
    Index n = 0;
    for (const auto& b : bags) n += b.size();
    return n;
}

Index MILDataset::num_positive_instances() const {
    Index n = 0;
    for (const auto& b : bags)
        if (b.label == 1) n += b.size();
    return n;
}

Index MILDataset::num_negative_instances() const {
    Index n = 0;
    for (const auto& b : bags)
        if (b.label == 0) n += b.size();
    return n;
}

void MILDataset::validate(bool require_both_labels) const {
    if (feature_dim <= 0) throw validation_error("dataset: feature_dim must be positive");
    bool has_pos = false, has_neg = false;
    for (std::size_t j = 0; j < bags.size(); ++j) {
        const Bag& b = bags[j];
        if (b.label != 0 && b.label != 1)
            throw validation_error("bag " + std::to_string(j) + ": label must be 0 or 1");
        if (b.size() < 1)
            throw validation_error("bag " + std::to_string(j) + ": empty bag");
        if (b.instances.rows() != feature_dim)
            throw validation_error("bag " + std::to_string(j) + ": feature dimension " +
                                   std::to_string(b.instances.rows()) + " != " +
                                   std::to_string(feature_dim));
        if (!b.instances.allFinite())
            throw validation_error("bag " + std::to_string(j) + ": non-finite feature value");
        (b.label == 1 ? has_pos : has_neg) = true;
    }
    if (require_both_labels && !(has_pos && has_neg))
        throw validation_error("dataset: need at least one positive and one negative bag");
}

void SynthSpec::validate() const {
    if (d <= 0 || T_true <= 0 || M_true <= 0)
        throw validation_error("synth: d, T_true, M_true must be positive");
    if (T_true + M_true > d)
        throw validation_error("synth: T_true + M_true must not exceed d");
    if (bags_pos <= 0 || bags_neg <= 0 || bag_size <= 0)
        throw validation_error("synth: bag counts and bag_size must be positive");
    if (targets_per_pos_bag < 1 || targets_per_pos_bag > bag_size)
        throw validation_error("synth: targets_per_pos_bag must be in [1, bag_size]");
    if (noise_sigma < 0.0) throw validation_error("synth: noise_sigma must be >= 0");
    if (sparsity < 1 || sparsity > M_true)
        throw validation_error("synth: sparsity must be in [1, M_true]");
}

LabeledInstances load_usps(const std::string& path,
                           const std::vector<int>& digits) {
    std::ifstream in(path);
    if (!in) throw validation_error("cannot open '" + path + "'");

    std::vector<double> values;
    std::vector<int> labels;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        std::istringstream ls(line);
        std::string tok;
        std::vector<double> row;
        row.reserve(kUspsFeatureDim + 1);
        while (ls >> tok) {
            double v;
            if (!parse_double(tok, v))
                throw validation_error(path + ":" + std::to_string(line_no) +
                                       ": not a number: '" + tok + "'");
            row.push_back(v);
        }
        if (int(row.size()) != kUspsFeatureDim + 1)
            throw validation_error(path + ":" + std::to_string(line_no) + ": expected " +
                                   std::to_string(kUspsFeatureDim + 1) + " fields, got " +
                                   std::to_string(row.size()));
        const double lab = row[0];
        if (lab != std::floor(lab))
            throw validation_error(path + ":" + std::to_string(line_no) +
                                   ": non-integer class label");
        labels.push_back(int(lab));
        values.insert(values.end(), row.begin() + 1, row.end());
    }
    if (labels.empty()) throw validation_error(path + ": no instances");

    LabeledInstances table;
    table.features.resize(kUspsFeatureDim, Index(labels.size()));
    for (Index i = 0; i < Index(labels.size()); ++i)
        for (Index r = 0; r < kUspsFeatureDim; ++r)
            table.features(r, i) = values[std::size_t(i) * kUspsFeatureDim + std::size_t(r)];
    table.labels = std::move(labels);

    // Rescale gray levels to [0, 1] from the file's own range.
    const double lo = table.features.minCoeff();
    const double hi = table.features.maxCoeff();
    if (hi > lo) table.features = (table.features.array() - lo) / (hi - lo);

    if (!digits.empty()) {
        std::set<int> keep(digits.begin(), digits.end());
        std::vector<Index> cols;
        for (Index i = 0; i < table.size(); ++i)
            if (keep.count(table.labels[std::size_t(i)])) cols.push_back(i);
        LabeledInstances sub;
        sub.features.resize(kUspsFeatureDim, Index(cols.size()));
        sub.labels.reserve(cols.size());
        for (Index j = 0; j < Index(cols.size()); ++j) {
            sub.features.col(j) = table.features.col(cols[std::size_t(j)]);
            sub.labels.push_back(table.labels[std::size_t(cols[std::size_t(j)])]);
        }
        return sub;
    }
    return table;
}

LabeledInstances load_csv_instances(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw validation_error("cannot open '" + path + "'");

    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split_csv_line(line);
        std::vector<double> row(fields.size());
        bool numeric = true;
        for (std::size_t f = 0; f < fields.size(); ++f) {
            if (!parse_double(trim(fields[f]), row[f])) {
                numeric = false;
                break;
            }
        }
        if (!numeric) {
            if (line_no == 1) continue;  // header row
            throw validation_error(path + ":" + std::to_string(line_no) +
                                   ": non-numeric field");
        }
        if (!rows.empty() && rows.front().size() != row.size())
            throw validation_error(path + ":" + std::to_string(line_no) + ": expected " +
                                   std::to_string(rows.front().size()) + " fields, got " +
                                   std::to_string(row.size()));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw validation_error(path + ": no instances");

    LabeledInstances table;
    const Index d = Index(rows.front().size());
    table.features.resize(d, Index(rows.size()));
    for (Index i = 0; i < Index(rows.size()); ++i)
        for (Index r = 0; r < d; ++r)
            table.features(r, i) = rows[std::size_t(i)][std::size_t(r)];
    table.labels.assign(rows.size(), 0);
    return table;
}

MILDataset load_csv_dataset(const std::string& instances_path,
                            const std::string& bags_path) {
    const LabeledInstances table = load_csv_instances(instances_path);

    std::ifstream in(bags_path);
    if (!in) throw validation_error("cannot open '" + bags_path + "'");

    struct Assignment {
        Index row;
        long bag_id;
        int label;
    };
    std::vector<Assignment> assign;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != 3)
            throw validation_error(bags_path + ":" + std::to_string(line_no) +
                                   ": expected row_index,bag_id,bag_label");
        double a, b, c;
        if (!parse_double(trim(fields[0]), a) || !parse_double(trim(fields[1]), b) ||
            !parse_double(trim(fields[2]), c)) {
            if (line_no == 1) continue;  // header row
            throw validation_error(bags_path + ":" + std::to_string(line_no) +
                                   ": non-numeric field");
        }
        if (c != 0.0 && c != 1.0)
            throw validation_error(bags_path + ":" + std::to_string(line_no) +
                                   ": bag_label must be 0 or 1");
        if (a < 0 || a >= double(table.size()) || a != std::floor(a))
            throw validation_error(bags_path + ":" + std::to_string(line_no) +
                                   ": row_index out of range");
        assign.push_back({Index(a), long(b), int(c)});
    }
    if (assign.empty()) throw validation_error(bags_path + ": no assignments");

    // Bags in order of first appearance of their id.
    std::vector<long> order;
    for (const auto& a : assign)
        if (std::find(order.begin(), order.end(), a.bag_id) == order.end())
            order.push_back(a.bag_id);

    MILDataset data;
    data.feature_dim = table.features.rows();
    for (long id : order) {
        std::vector<Index> rows;
        int label = -1;
        for (const auto& a : assign) {
            if (a.bag_id != id) continue;
            if (label >= 0 && label != a.label)
                throw validation_error(bags_path + ": bag " + std::to_string(id) +
                                       " has conflicting labels");
            label = a.label;
            rows.push_back(a.row);
        }
        Bag bag;
        bag.label = label;
        bag.instances.resize(data.feature_dim, Index(rows.size()));
        for (Index j = 0; j < Index(rows.size()); ++j)
            bag.instances.col(j) = table.features.col(rows[std::size_t(j)]);
        data.bags.push_back(std::move(bag));
    }
    data.validate(false);
    return data;
}

void save_csv_dataset(const std::string& instances_path,
                      const std::string& bags_path, const MILDataset& data) {
    std::ofstream fi(instances_path);
    std::ofstream fb(bags_path);
    if (!fi) throw validation_error("cannot write '" + instances_path + "'");
    if (!fb) throw validation_error("cannot write '" + bags_path + "'");
    fi.precision(17);
    fb << "row_index,bag_id,bag_label\n";
    Index row = 0;
    for (std::size_t j = 0; j < data.bags.size(); ++j) {
        const Bag& bag = data.bags[j];
        for (Index i = 0; i < bag.size(); ++i, ++row) {
            for (Index r = 0; r < data.feature_dim; ++r)
                fi << (r ? "," : "") << bag.instances(r, i);
            fi << "\n";
            fb << row << "," << j << "," << bag.label << "\n";
        }
    }
}

MILDataset make_bags(const LabeledInstances& table, int target_class,
                     int pos_bags, int neg_bags, int bag_size,
                     int targets_per_pos_bag, std::uint64_t seed,
                     int neg_bag_size) {
    if (neg_bag_size <= 0) neg_bag_size = bag_size;
    if (pos_bags <= 0 || neg_bags <= 0 || bag_size <= 0)
        throw validation_error("make_bags: bag counts and sizes must be positive");
    if (targets_per_pos_bag < 1 || targets_per_pos_bag > bag_size)
        throw validation_error("make_bags: targets_per_pos_bag must be in [1, bag_size]");

    std::vector<Index> target_pool, other_pool;
    for (Index i = 0; i < table.size(); ++i)
        (table.labels[std::size_t(i)] == target_class ? target_pool : other_pool)
            .push_back(i);
    if (target_pool.empty())
        throw validation_error("make_bags: class " + std::to_string(target_class) +
                               " absent from instance table");
    const int fill = bag_size - targets_per_pos_bag;
    if (Index(targets_per_pos_bag) > Index(target_pool.size()))
        throw validation_error("make_bags: not enough target-class instances for one bag");
    if (Index(std::max(fill, neg_bag_size)) > Index(other_pool.size()))
        throw validation_error("make_bags: not enough non-target instances for one bag");

    Rng rng(seed);
    MILDataset data;
    data.feature_dim = table.features.rows();

    auto pick = [&](const std::vector<Index>& pool, int k) {
        const auto sel = rng.sample_without_replacement(Index(pool.size()), k);
        std::vector<Index> out(sel.size());
        for (std::size_t s = 0; s < sel.size(); ++s)
            out[s] = pool[std::size_t(sel[s])];
        return out;
    };

    for (int b = 0; b < pos_bags; ++b) {
        Bag bag;
        bag.label = 1;
        bag.instances.resize(data.feature_dim, bag_size);
        const auto tsel = pick(target_pool, targets_per_pos_bag);
        const auto osel = pick(other_pool, fill);
        Index c = 0;
        for (Index i : tsel) bag.instances.col(c++) = table.features.col(i);
        for (Index i : osel) bag.instances.col(c++) = table.features.col(i);
        data.bags.push_back(std::move(bag));
    }
    for (int b = 0; b < neg_bags; ++b) {
        Bag bag;
        bag.label = 0;
        bag.instances.resize(data.feature_dim, neg_bag_size);
        const auto osel = pick(other_pool, neg_bag_size);
        Index c = 0;
        for (Index i : osel) bag.instances.col(c++) = table.features.col(i);
        data.bags.push_back(std::move(bag));
    }
    data.validate();
    return data;
}

SynthProblem synth_generate(const SynthSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);

    SynthProblem prob;
    prob.target_atoms.resize(spec.d, spec.T_true);
    prob.background_atoms.resize(spec.d, spec.M_true);
    auto draw_atom = [&](auto&& col) {
        do {
            for (Index r = 0; r < spec.d; ++r) col[r] = rng.normal();
        } while (col.norm() == 0.0);
        col /= col.norm();
    };
    for (Index t = 0; t < spec.T_true; ++t) draw_atom(prob.target_atoms.col(t));
    for (Index k = 0; k < spec.M_true; ++k) draw_atom(prob.background_atoms.col(k));

    prob.data.feature_dim = spec.d;
    auto make_instance = [&](bool is_target) {
        Vector x = Vector::Zero(spec.d);
        const auto bg = rng.sample_without_replacement(spec.M_true, spec.sparsity);
        for (Index k : bg)
            x += (0.5 + rng.uniform01()) * prob.background_atoms.col(k);
        if (is_target) {
            const Index t = Index(rng.next_below(std::uint64_t(spec.T_true)));
            x += (0.5 + rng.uniform01()) * prob.target_atoms.col(t);
        }
        if (spec.noise_sigma > 0.0)
            for (Index r = 0; r < spec.d; ++r) x[r] += spec.noise_sigma * rng.normal();
        return x;
    };

    for (int b = 0; b < spec.bags_pos; ++b) {
        Bag bag;
        bag.label = 1;
        bag.instances.resize(spec.d, spec.bag_size);
        const auto slots =
            rng.sample_without_replacement(spec.bag_size, spec.targets_per_pos_bag);
        std::vector<std::uint8_t> is_target(std::size_t(spec.bag_size), 0);
        for (Index s : slots) is_target[std::size_t(s)] = 1;
        for (Index i = 0; i < spec.bag_size; ++i) {
            bag.instances.col(i) = make_instance(is_target[std::size_t(i)] != 0);
            prob.z.push_back(is_target[std::size_t(i)]);
        }
        prob.data.bags.push_back(std::move(bag));
    }
    for (int b = 0; b < spec.bags_neg; ++b) {
        Bag bag;
        bag.label = 0;
        bag.instances.resize(spec.d, spec.bag_size);
        for (Index i = 0; i < spec.bag_size; ++i) {
            bag.instances.col(i) = make_instance(false);
            prob.z.push_back(0);
        }
        prob.data.bags.push_back(std::move(bag));
    }
    prob.data.validate();
    return prob;
}

}  // namespace mildl
