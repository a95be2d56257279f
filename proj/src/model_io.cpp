#include "mildl/model_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace mildl {

namespace {

using json = nlohmann::json;

constexpr const char* kModelFormat = "mildl-model";
constexpr int kModelVersion = 1;

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const json& j) {
    if (!j.is_array() || j.empty()) throw validation_error("model file: bad matrix");
    const Index rows = Index(j.size()), cols = Index(j[0].size());
    Matrix m(rows, cols);
    for (Index r = 0; r < rows; ++r) {
        if (Index(j[std::size_t(r)].size()) != cols)
            throw validation_error("model file: ragged matrix");
        for (Index c = 0; c < cols; ++c)
            m(r, c) = j[std::size_t(r)][std::size_t(c)].get<double>();
    }
    return m;
}

}  // namespace

void save_model(const std::string& path, const Dictionary& dict,
                const Hyperparams& hp, const std::vector<IterStats>& trace) {
    dict.validate();
    json j;
    j["format"] = kModelFormat;
    j["version"] = kModelVersion;
    j["feature_dim"] = dict.dim();
    j["num_target_atoms"] = dict.num_target();
    j["num_background_atoms"] = dict.num_background();
    j["hyperparams"] = {
        {"T", hp.T},           {"M", hp.M},
        {"lambda", hp.lambda}, {"Gamma", hp.Gamma},
        {"beta", hp.beta},     {"psi", hp.psi},
        {"inner_iters", hp.inner_iters},
        {"max_em_iters", hp.max_em_iters},
        {"rel_tol", hp.rel_tol},
        {"seed", hp.seed},
    };
    j["target_atoms"] = matrix_to_json(dict.target_atoms);
    j["background_atoms"] = matrix_to_json(dict.background_atoms);
    json tr = json::array();
    for (const auto& s : trace)
        tr.push_back({{"iteration", s.iteration},
                      {"expected_objective", s.expected_objective},
                      {"max_atom_change", s.max_atom_change}});
    j["trace"] = std::move(tr);

    std::ofstream out(path);
    if (!out) throw validation_error("cannot write '" + path + "'");
    out << j.dump(1) << "\n";
}

LoadedModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw validation_error("cannot open '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw validation_error("model file '" + path + "': not valid JSON: " + e.what());
    }
    if (!j.contains("format") || j["format"] != kModelFormat)
        throw validation_error("model file '" + path + "': missing or wrong format tag "
                               "(expected '" + std::string(kModelFormat) + "')");
    if (!j.contains("version") || !j["version"].is_number_integer() ||
        j["version"].get<int>() != kModelVersion)
        throw validation_error("model file '" + path + "': unsupported version (expected " +
                               std::to_string(kModelVersion) + ")");

    LoadedModel m;
    try {
        m.dict.target_atoms = matrix_from_json(j.at("target_atoms"));
        m.dict.background_atoms = matrix_from_json(j.at("background_atoms"));
        const auto& h = j.at("hyperparams");
        m.hp.T = h.at("T").get<int>();
        m.hp.M = h.at("M").get<int>();
        m.hp.lambda = h.at("lambda").get<double>();
        m.hp.Gamma = h.at("Gamma").get<double>();
        m.hp.beta = h.at("beta").get<double>();
        m.hp.psi = h.at("psi").get<double>();
        m.hp.inner_iters = h.at("inner_iters").get<int>();
        m.hp.max_em_iters = h.at("max_em_iters").get<int>();
        m.hp.rel_tol = h.at("rel_tol").get<double>();
        m.hp.seed = h.at("seed").get<std::uint64_t>();
        for (const auto& s : j.at("trace"))
            m.trace.push_back({s.at("iteration").get<int>(),
                               s.at("expected_objective").get<double>(),
                               s.at("max_atom_change").get<double>()});
    } catch (const json::exception& e) {
        throw validation_error("model file '" + path + "': " + e.what());
    }
    m.dict.validate();
    if (m.dict.num_target() != m.hp.T || m.dict.num_background() != m.hp.M)
        throw validation_error("model file '" + path + "': atom counts disagree with "
                               "hyperparams");
    return m;
}

void write_trace_csv(const std::string& path, const std::vector<IterStats>& trace) {
    std::ofstream out(path);
    if (!out) throw validation_error("cannot write '" + path + "'");
    out.precision(17);
    out << "iteration,expected_objective,max_atom_change\n";
    for (const auto& s : trace)
        out << s.iteration << "," << s.expected_objective << "," << s.max_atom_change
            << "\n";
}

namespace {

void append_tile(std::vector<unsigned char>& canvas, Index canvas_w,
                 const Vector& image, int img_h, int img_w, Index row0,
                 Index col0) {
    const double lo = image.minCoeff(), hi = image.maxCoeff();
    const double span = hi > lo ? hi - lo : 1.0;
    for (int r = 0; r < img_h; ++r)
        for (int c = 0; c < img_w; ++c) {
            const double v = (image[Index(r) * img_w + c] - lo) / span;
            canvas[std::size_t((row0 + r) * canvas_w + (col0 + c))] =
                (unsigned char)std::lround(v * 255.0);
        }
}

void write_pgm(const std::string& path, const std::vector<unsigned char>& pix,
               Index w, Index h) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw validation_error("cannot write '" + path + "'");
    out << "P5\n" << w << " " << h << "\n255\n";
    out.write(reinterpret_cast<const char*>(pix.data()), std::streamsize(pix.size()));
}

}  // namespace

void write_pgm_grid(const std::string& path, const Matrix& atoms, int img_h,
                    int img_w) {
    if (Index(img_h) * img_w != atoms.rows())
        throw validation_error("pgm grid: img_h * img_w != atom dimension");
    const Index n = atoms.cols();
    const Index cols = Index(std::ceil(std::sqrt(double(n))));
    const Index rows = (n + cols - 1) / cols;
    const Index w = cols * (img_w + 1) - 1, h = rows * (img_h + 1) - 1;
    std::vector<unsigned char> pix(std::size_t(w * h), 0);
    for (Index a = 0; a < n; ++a)
        append_tile(pix, w, atoms.col(a), img_h, img_w, (a / cols) * (img_h + 1),
                    (a % cols) * (img_w + 1));
    write_pgm(path, pix, w, h);
}

void write_pgm_image(const std::string& path, const Vector& image, int img_h,
                     int img_w) {
    if (Index(img_h) * img_w != image.size())
        throw validation_error("pgm image: img_h * img_w != vector length");
    std::vector<unsigned char> pix(std::size_t(image.size()), 0);
    append_tile(pix, img_w, image, img_h, img_w, 0, 0);
    write_pgm(path, pix, img_w, img_h);
}

Matrix load_matrix_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw validation_error("cannot open '" + path + "'");
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        std::vector<double> row;
        std::string tok;
        for (std::size_t p = 0; p <= line.size(); ++p) {
            if (p == line.size() || line[p] == ',') {
                try {
                    row.push_back(std::stod(tok));
                } catch (const std::exception&) {
                    throw validation_error(path + ":" + std::to_string(line_no) +
                                           ": non-numeric field");
                }
                tok.clear();
            } else if (line[p] != '\r') {
                tok += line[p];
            }
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw validation_error(path + ":" + std::to_string(line_no) +
                                   ": inconsistent row width");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw validation_error(path + ": empty matrix");
    Matrix m(Index(rows.size()), Index(rows.front().size()));
    for (Index r = 0; r < m.rows(); ++r)
        for (Index c = 0; c < m.cols(); ++c)
            m(r, c) = rows[std::size_t(r)][std::size_t(c)];
    return m;
}

void save_matrix_csv(const std::string& path, const Matrix& m) {
    std::ofstream out(path);
    if (!out) throw validation_error("cannot write '" + path + "'");
    out.precision(17);
    for (Index r = 0; r < m.rows(); ++r) {
        for (Index c = 0; c < m.cols(); ++c) out << (c ? "," : "") << m(r, c);
        out << "\n";
    }
}

}  // namespace mildl
