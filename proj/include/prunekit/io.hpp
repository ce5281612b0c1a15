#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "prunekit/graph.hpp"
#include "prunekit/tensor.hpp"

namespace prunekit {

/// Generic dense f32 blob; PKT1 on disk: magic "PKT1", u32 rank,
/// rank x u64 dims, little-endian f32 payload, row-major.
struct Blob {
    std::vector<i64> dims;
    std::vector<float> data;
};

void save_blob(const std::filesystem::path& path, const Blob& b);
Blob load_blob(const std::filesystem::path& path);

void save_tensor(const std::filesystem::path& path, const Tensor4& t);
Tensor4 load_tensor(const std::filesystem::path& path);

void save_vector(const std::filesystem::path& path, const std::vector<float>& v);
std::vector<float> load_vector(const std::filesystem::path& path);

void save_matrix(const std::filesystem::path& path, const MatF& m);
MatF load_matrix(const std::filesystem::path& path);

/// Writes <dir>/<stem>.json plus one .pkt blob per tensor.
void save_model(const ModelGraph& g, const std::filesystem::path& dir,
                const std::string& stem = "model");

/// Loads a graph JSON written by save_model; blob paths resolve relative
/// to the JSON's directory.
ModelGraph load_model(const std::filesystem::path& json_path);

} // namespace prunekit
