#include "pcnssm/geometry/io.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "pcnssm/error.hpp"

namespace pcnssm::io {

namespace {

enum class Encoding { Ascii, Little, Big };

enum class Scalar { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

Scalar parse_scalar(const std::string& name, const std::filesystem::path& path) {
  if (name == "char" || name == "int8") return Scalar::Int8;
  if (name == "uchar" || name == "uint8") return Scalar::UInt8;
  if (name == "short" || name == "int16") return Scalar::Int16;
  if (name == "ushort" || name == "uint16") return Scalar::UInt16;
  if (name == "int" || name == "int32") return Scalar::Int32;
  if (name == "uint" || name == "uint32") return Scalar::UInt32;
  if (name == "float" || name == "float32") return Scalar::Float32;
  if (name == "double" || name == "float64") return Scalar::Float64;
  throw IoError(path.string() + ": unknown PLY scalar type '" + name + "'");
}

std::size_t scalar_size(Scalar s) {
  switch (s) {
    case Scalar::Int8:
    case Scalar::UInt8: return 1;
    case Scalar::Int16:
    case Scalar::UInt16: return 2;
    case Scalar::Int32:
    case Scalar::UInt32:
    case Scalar::Float32: return 4;
    case Scalar::Float64: return 8;
  }
  return 0;
}

struct Property {
  std::string name;
  Scalar type = Scalar::Float32;
  bool is_list = false;
  Scalar count_type = Scalar::UInt8;
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> properties;
};

template <typename T>
T load_raw(const char* p, bool swap) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  if (swap) {
    auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    v = std::bit_cast<T>(bytes);
  }
  return v;
}

class PlyReader {
 public:
  explicit PlyReader(const std::filesystem::path& path) : path_(path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    data_ = ss.str();
    parse_header();
  }

  void read(std::vector<Vec3>& vertices,
            std::vector<std::array<std::size_t, 3>>& triangles) {
    for (const Element& e : elements_) {
      if (e.name == "vertex") {
        read_vertices(e, vertices);
      } else if (e.name == "face") {
        read_faces(e, triangles);
      } else {
        for (std::size_t i = 0; i < e.count; ++i) {
          for (const Property& p : e.properties) skip_property(p);
        }
      }
    }
  }

 private:
  void fail(const std::string& msg) const { throw IoError(path_.string() + ": " + msg); }

  std::string next_header_line() {
    const auto end = data_.find('\n', pos_);
    if (end == std::string::npos) fail("unterminated PLY header");
    std::string line = data_.substr(pos_, end - pos_);
    pos_ = end + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  }

  void parse_header() {
    if (next_header_line() != "ply") fail("missing 'ply' magic");
    for (;;) {
      std::istringstream line(next_header_line());
      std::string word;
      line >> word;
      if (word == "end_header") break;
      if (word == "format") {
        std::string fmt;
        line >> fmt;
        if (fmt == "ascii") encoding_ = Encoding::Ascii;
        else if (fmt == "binary_little_endian") encoding_ = Encoding::Little;
        else if (fmt == "binary_big_endian") encoding_ = Encoding::Big;
        else fail("unsupported PLY format '" + fmt + "'");
      } else if (word == "element") {
        Element e;
        line >> e.name >> e.count;
        elements_.push_back(std::move(e));
      } else if (word == "property") {
        if (elements_.empty()) fail("property before element");
        Property p;
        std::string type;
        line >> type;
        if (type == "list") {
          std::string count_type, item_type;
          line >> count_type >> item_type;
          p.is_list = true;
          p.count_type = parse_scalar(count_type, path_);
          p.type = parse_scalar(item_type, path_);
        } else {
          p.type = parse_scalar(type, path_);
        }
        line >> p.name;
        elements_.back().properties.push_back(std::move(p));
      }
      // comment / obj_info lines are ignored
    }
  }

  double scalar(Scalar type) {
    if (encoding_ == Encoding::Ascii) {
      while (pos_ < data_.size() && std::isspace(static_cast<unsigned char>(data_[pos_]))) ++pos_;
      std::size_t end = pos_;
      while (end < data_.size() && !std::isspace(static_cast<unsigned char>(data_[end]))) ++end;
      if (end == pos_) fail("unexpected end of ascii data");
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(data_.data() + pos_, data_.data() + end, v);
      if (ec != std::errc() || ptr != data_.data() + end) fail("malformed number in ascii data");
      pos_ = end;
      return v;
    }
    const std::size_t n = scalar_size(type);
    if (pos_ + n > data_.size()) fail("truncated binary data");
    const char* p = data_.data() + pos_;
    pos_ += n;
    const bool swap = (encoding_ == Encoding::Big) != (std::endian::native == std::endian::big);
    switch (type) {
      case Scalar::Int8: return load_raw<std::int8_t>(p, swap);
      case Scalar::UInt8: return load_raw<std::uint8_t>(p, swap);
      case Scalar::Int16: return load_raw<std::int16_t>(p, swap);
      case Scalar::UInt16: return load_raw<std::uint16_t>(p, swap);
      case Scalar::Int32: return load_raw<std::int32_t>(p, swap);
      case Scalar::UInt32: return load_raw<std::uint32_t>(p, swap);
      case Scalar::Float32: return load_raw<float>(p, swap);
      case Scalar::Float64: return load_raw<double>(p, swap);
    }
    return 0.0;
  }

  void skip_property(const Property& p) {
    if (p.is_list) {
      const auto n = static_cast<std::size_t>(scalar(p.count_type));
      for (std::size_t i = 0; i < n; ++i) scalar(p.type);
    } else {
      scalar(p.type);
    }
  }

  void read_vertices(const Element& e, std::vector<Vec3>& out) {
    int slot[3] = {-1, -1, -1};
    for (std::size_t i = 0; i < e.properties.size(); ++i) {
      const auto& name = e.properties[i].name;
      if (name == "x") slot[0] = static_cast<int>(i);
      if (name == "y") slot[1] = static_cast<int>(i);
      if (name == "z") slot[2] = static_cast<int>(i);
    }
    if (slot[0] < 0 || slot[1] < 0 || slot[2] < 0) fail("vertex element lacks x/y/z");
    out.reserve(e.count);
    for (std::size_t v = 0; v < e.count; ++v) {
      Vec3 p = Vec3::Zero();
      for (std::size_t i = 0; i < e.properties.size(); ++i) {
        const Property& prop = e.properties[i];
        if (prop.is_list) {
          skip_property(prop);
          continue;
        }
        const double value = scalar(prop.type);
        for (int axis = 0; axis < 3; ++axis) {
          if (slot[axis] == static_cast<int>(i)) p[axis] = value;
        }
      }
      out.push_back(p);
    }
  }

  void read_faces(const Element& e, std::vector<std::array<std::size_t, 3>>& out) {
    for (std::size_t f = 0; f < e.count; ++f) {
      for (const Property& prop : e.properties) {
        if (!prop.is_list || (prop.name != "vertex_indices" && prop.name != "vertex_index")) {
          skip_property(prop);
          continue;
        }
        const auto n = static_cast<std::size_t>(scalar(prop.count_type));
        std::vector<std::size_t> poly(n);
        for (auto& idx : poly) {
          const double v = scalar(prop.type);
          if (v < 0) fail("negative vertex index in face " + std::to_string(f));
          idx = static_cast<std::size_t>(v);
        }
        for (std::size_t k = 1; k + 1 < n; ++k) out.push_back({poly[0], poly[k], poly[k + 1]});
      }
    }
  }

  std::filesystem::path path_;
  std::string data_;
  std::size_t pos_ = 0;
  Encoding encoding_ = Encoding::Ascii;
  std::vector<Element> elements_;
};

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

template <typename T>
void put(std::ofstream& out, T v) {
  static_assert(std::endian::native == std::endian::little);
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void write_ply_impl(const std::filesystem::path& path, std::span<const Vec3> vertices,
                    std::span<const std::array<std::size_t, 3>> triangles,
                    PlyFormat format) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out = open_output(tmp);
    out << "ply\n"
        << (format == PlyFormat::Ascii ? "format ascii 1.0\n"
                                       : "format binary_little_endian 1.0\n")
        << "element vertex " << vertices.size() << "\n"
        << "property double x\nproperty double y\nproperty double z\n";
    if (!triangles.empty()) {
      out << "element face " << triangles.size() << "\n"
          << "property list uchar int vertex_indices\n";
    }
    out << "end_header\n";
    if (format == PlyFormat::Ascii) {
      out << std::setprecision(17);
      for (const Vec3& v : vertices) out << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
      for (const auto& t : triangles) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
    } else {
      for (const Vec3& v : vertices) {
        put(out, v.x());
        put(out, v.y());
        put(out, v.z());
      }
      for (const auto& t : triangles) {
        put<std::uint8_t>(out, 3);
        for (std::size_t idx : t) put(out, static_cast<std::int32_t>(idx));
      }
    }
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

bool has_extension(const std::filesystem::path& path, const char* ext) {
  std::string e = path.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e == ext;
}

}  // namespace

TriangleMesh read_ply_mesh(const std::filesystem::path& path) {
  TriangleMesh mesh;
  PlyReader(path).read(mesh.vertices, mesh.triangles);
  return mesh;
}

TriangleMesh read_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  TriangleMesh mesh;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      Vec3 p;
      if (!(ls >> p.x() >> p.y() >> p.z())) {
        throw IoError(path.string() + ":" + std::to_string(line_no) + ": bad vertex");
      }
      mesh.vertices.push_back(p);
    } else if (tag == "f") {
      std::vector<std::size_t> poly;
      std::string token;
      while (ls >> token) {
        const long idx = std::stol(token.substr(0, token.find('/')));
        const long resolved = idx < 0 ? static_cast<long>(mesh.vertices.size()) + idx : idx - 1;
        if (resolved < 0) {
          throw IoError(path.string() + ":" + std::to_string(line_no) + ": bad face index");
        }
        poly.push_back(static_cast<std::size_t>(resolved));
      }
      for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
        mesh.triangles.push_back({poly[0], poly[k], poly[k + 1]});
      }
    }
  }
  return mesh;
}

TriangleMesh read_mesh(const std::filesystem::path& path) {
  TriangleMesh mesh = has_extension(path, ".obj") ? read_obj(path) : read_ply_mesh(path);
  try {
    validate_indices(mesh);
  } catch (const std::invalid_argument& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  return mesh;
}

void write_ply(const std::filesystem::path& path, const TriangleMesh& mesh,
               PlyFormat format) {
  write_ply_impl(path, mesh.vertices, mesh.triangles, format);
}

void write_obj(const std::filesystem::path& path, const TriangleMesh& mesh) {
  std::ofstream out = open_output(path);
  out << std::setprecision(17);
  for (const Vec3& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& t : mesh.triangles) {
    out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  }
}

PointCloud read_xyz(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  PointCloud cloud;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    Vec3 p;
    if (ls >> p.x() >> p.y() >> p.z()) cloud.points.push_back(p);
  }
  return cloud;
}

void write_xyz(const std::filesystem::path& path, const PointCloud& cloud) {
  std::ofstream out = open_output(path);
  out << std::setprecision(17);
  for (const Vec3& v : cloud.points) out << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
}

PointCloud read_cloud(const std::filesystem::path& path) {
  if (has_extension(path, ".ply")) {
    PointCloud cloud;
    std::vector<std::array<std::size_t, 3>> ignored;
    PlyReader(path).read(cloud.points, ignored);
    return cloud;
  }
  return read_xyz(path);
}

void write_cloud(const std::filesystem::path& path, const PointCloud& cloud,
                 PlyFormat format) {
  if (has_extension(path, ".ply")) {
    write_ply_impl(path, cloud.points, {}, format);
  } else {
    write_xyz(path, cloud);
  }
}

}  // namespace pcnssm::io
