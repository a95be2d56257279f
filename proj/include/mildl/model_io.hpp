#pragma once

#include <string>
#include <vector>

#include "mildl/types.hpp"

namespace mildl {

struct LoadedModel {
    Dictionary dict;
    Hyperparams hp;
    std::vector<IterStats> trace;
};

// Versioned JSON container with the atom matrices, hyperparameters and the
// per-iteration E[F] trace. Doubles round-trip exactly.
void save_model(const std::string& path, const Dictionary& dict,
                const Hyperparams& hp, const std::vector<IterStats>& trace);
LoadedModel load_model(const std::string& path);

// iteration,expected_objective,max_atom_change
void write_trace_csv(const std::string& path,
                     const std::vector<IterStats>& trace);

// Atoms tiled into one binary PGM (P5), each tile min/max normalized,
// 1-pixel separators. Each column of `atoms` is one img_h x img_w image in
// row-major order.
void write_pgm_grid(const std::string& path, const Matrix& atoms, int img_h,
                    int img_w);
void write_pgm_image(const std::string& path, const Vector& image, int img_h,
                     int img_w);

// Plain numeric CSV, one row per line.
Matrix load_matrix_csv(const std::string& path);
void save_matrix_csv(const std::string& path, const Matrix& m);

}  // namespace mildl
