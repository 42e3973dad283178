#pragma once

#include <filesystem>

#include "pcnssm/geometry/types.hpp"

namespace pcnssm::io {

enum class PlyFormat { Ascii, BinaryLittleEndian };

// PLY (ascii, binary little/big endian) and OBJ. Polygons with more than
// three vertices are fan-triangulated.
TriangleMesh read_mesh(const std::filesystem::path& path);
TriangleMesh read_ply_mesh(const std::filesystem::path& path);
TriangleMesh read_obj(const std::filesystem::path& path);

// Vertex coordinates are written as doubles, so re-reading is bit-exact.
void write_ply(const std::filesystem::path& path, const TriangleMesh& mesh,
               PlyFormat format = PlyFormat::BinaryLittleEndian);
void write_obj(const std::filesystem::path& path, const TriangleMesh& mesh);

// Point clouds: PLY (vertex element only) or whitespace-separated x y z text,
// chosen by extension (.ply vs anything else).
PointCloud read_cloud(const std::filesystem::path& path);
void write_cloud(const std::filesystem::path& path, const PointCloud& cloud,
                 PlyFormat format = PlyFormat::BinaryLittleEndian);
PointCloud read_xyz(const std::filesystem::path& path);
void write_xyz(const std::filesystem::path& path, const PointCloud& cloud);

}  // namespace pcnssm::io
