#include "n2n/io.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "n2n/errors.hpp"

namespace n2n::io {

namespace {

std::string extension(const std::string& path) {
    const auto dot = path.find_last_of('.');
    if (dot == std::string::npos) return "";
    std::string ext = path.substr(dot + 1);
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    return ext;
}

void format_double(std::string& out, double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
}

double parse_double(const char*& p, const char* end, const std::string& path, long line) {
    while (p < end && (*p == ' ' || *p == '\t' || *p == '\r')) ++p;
    double v = 0.0;
    const auto res = std::from_chars(p, end, v);
    if (res.ec != std::errc()) throw ParseError(path, line, -1, "expected a number");
    p = res.ptr;
    return v;
}

// --- XYZ ---------------------------------------------------------------

PointCloud read_xyz(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ContractError("cannot open point cloud: " + path);
    PointCloud cloud;
    std::string line;
    long lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const char* p = line.data();
        const char* end = line.data() + line.size();
        while (p < end && (*p == ' ' || *p == '\t' || *p == '\r')) ++p;
        if (p == end || *p == '#') continue;
        Vec3 v;
        v.x = parse_double(p, end, path, lineno);
        v.y = parse_double(p, end, path, lineno);
        v.z = parse_double(p, end, path, lineno);
        cloud.push_back(v);  // extra columns ignored
    }
    if (cloud.empty()) throw ContractError("empty point cloud: " + path);
    return cloud;
}

void write_xyz(const PointCloud& cloud, const std::string& path) {
    std::string out;
    out.reserve(cloud.size() * 24);
    for (const Vec3& p : cloud) {
        format_double(out, p.x);
        out.push_back(' ');
        format_double(out, p.y);
        out.push_back(' ');
        format_double(out, p.z);
        out.push_back('\n');
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ContractError("cannot open for writing: " + path);
    os.write(out.data(), static_cast<std::streamsize>(out.size()));
}

// --- PLY ----------------------------------------------------------------

struct PlyProperty {
    std::string name;
    std::string type;
    bool is_list = false;
    std::string count_type;
};

struct PlyElement {
    std::string name;
    std::size_t count = 0;
    std::vector<PlyProperty> properties;
};

struct PlyHeader {
    bool binary = false;
    std::vector<PlyElement> elements;
    std::streampos body;
};

std::size_t type_size(const std::string& t, const std::string& path) {
    if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
    if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
    if (t == "int" || t == "uint" || t == "int32" || t == "uint32" || t == "float" ||
        t == "float32")
        return 4;
    if (t == "double" || t == "float64") return 8;
    throw ParseError(path, -1, -1, "unknown ply property type: " + t);
}

PlyHeader read_ply_header(std::ifstream& is, const std::string& path) {
    std::string line;
    long lineno = 0;
    if (!std::getline(is, line)) throw ParseError(path, 1, 0, "empty file");
    ++lineno;
    if (line.rfind("ply", 0) != 0) throw ParseError(path, 1, 0, "missing ply magic");
    PlyHeader h;
    bool format_seen = false;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (word == "comment" || word == "obj_info" || word.empty()) continue;
        if (word == "format") {
            std::string fmt, version;
            ls >> fmt >> version;
            if (fmt == "ascii")
                h.binary = false;
            else if (fmt == "binary_little_endian")
                h.binary = true;
            else
                throw ParseError(path, lineno, -1, "unsupported ply format: " + fmt);
            format_seen = true;
        } else if (word == "element") {
            PlyElement e;
            ls >> e.name >> e.count;
            h.elements.push_back(e);
        } else if (word == "property") {
            if (h.elements.empty()) throw ParseError(path, lineno, -1, "property before element");
            PlyProperty p;
            std::string t;
            ls >> t;
            if (t == "list") {
                p.is_list = true;
                ls >> p.count_type >> p.type >> p.name;
            } else {
                p.type = t;
                ls >> p.name;
            }
            h.elements.back().properties.push_back(p);
        } else if (word == "end_header") {
            if (!format_seen) throw ParseError(path, lineno, -1, "missing format line");
            h.body = is.tellg();
            return h;
        } else {
            throw ParseError(path, lineno, -1, "unexpected header token: " + word);
        }
    }
    throw ParseError(path, lineno, -1, "unterminated ply header");
}

double read_binary_scalar(std::ifstream& is, const std::string& type, const std::string& path) {
    unsigned char buf[8];
    const std::size_t n = type_size(type, path);
    if (!is.read(reinterpret_cast<char*>(buf), static_cast<std::streamsize>(n)))
        throw ParseError(path, -1, static_cast<long>(is.tellg()), "unexpected end of ply data");
    if (type == "char" || type == "int8") return static_cast<double>(static_cast<int8_t>(buf[0]));
    if (type == "uchar" || type == "uint8") return buf[0];
    if (type == "short" || type == "int16") {
        int16_t v;
        std::memcpy(&v, buf, 2);
        return v;
    }
    if (type == "ushort" || type == "uint16") {
        uint16_t v;
        std::memcpy(&v, buf, 2);
        return v;
    }
    if (type == "int" || type == "int32") {
        int32_t v;
        std::memcpy(&v, buf, 4);
        return v;
    }
    if (type == "uint" || type == "uint32") {
        uint32_t v;
        std::memcpy(&v, buf, 4);
        return v;
    }
    if (type == "float" || type == "float32") {
        float v;
        std::memcpy(&v, buf, 4);
        return v;
    }
    double v;
    std::memcpy(&v, buf, 8);
    return v;
}

struct PlyContents {
    PointCloud vertices;
    std::vector<std::array<uint32_t, 3>> faces;
};

PlyContents read_ply(const std::string& path, bool want_faces) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ContractError("cannot open ply: " + path);
    const PlyHeader h = read_ply_header(is, path);
    PlyContents out;

    auto ascii_tokens = [&](std::vector<double>& values) {
        std::string line;
        do {
            if (!std::getline(is, line))
                throw ParseError(path, -1, static_cast<long>(is.tellg()), "unexpected end of ply");
        } while (line.find_first_not_of(" \t\r") == std::string::npos);
        values.clear();
        const char* p = line.data();
        const char* end = line.data() + line.size();
        while (true) {
            while (p < end && (*p == ' ' || *p == '\t' || *p == '\r')) ++p;
            if (p >= end) break;
            double v = 0.0;
            const auto res = std::from_chars(p, end, v);
            if (res.ec != std::errc())
                throw ParseError(path, -1, -1, "malformed ascii ply value");
            values.push_back(v);
            p = res.ptr;
        }
    };

    for (const PlyElement& e : h.elements) {
        const bool is_vertex = e.name == "vertex";
        const bool is_face = e.name == "face";
        int ix = -1, iy = -1, iz = -1;
        if (is_vertex) {
            for (std::size_t p = 0; p < e.properties.size(); ++p) {
                if (e.properties[p].name == "x") ix = static_cast<int>(p);
                if (e.properties[p].name == "y") iy = static_cast<int>(p);
                if (e.properties[p].name == "z") iz = static_cast<int>(p);
            }
            if (ix < 0 || iy < 0 || iz < 0)
                throw ParseError(path, -1, -1, "ply vertex element lacks x/y/z positions");
            out.vertices.reserve(e.count);
        }
        std::vector<double> row;
        for (std::size_t i = 0; i < e.count; ++i) {
            if (h.binary) {
                row.clear();
                for (const PlyProperty& p : e.properties) {
                    if (p.is_list) {
                        const double n = read_binary_scalar(is, p.count_type, path);
                        row.push_back(n);
                        for (std::size_t k = 0; k < static_cast<std::size_t>(n); ++k)
                            row.push_back(read_binary_scalar(is, p.type, path));
                    } else {
                        row.push_back(read_binary_scalar(is, p.type, path));
                    }
                }
            } else {
                ascii_tokens(row);
            }
            if (is_vertex) {
                // With no list properties before x/y/z the indices line up.
                out.vertices.push_back({row[static_cast<std::size_t>(ix)],
                                        row[static_cast<std::size_t>(iy)],
                                        row[static_cast<std::size_t>(iz)]});
            } else if (is_face && want_faces && !row.empty()) {
                const std::size_t n = static_cast<std::size_t>(row[0]);
                if (row.size() < n + 1)
                    throw ParseError(path, -1, -1, "truncated face row");
                for (std::size_t k = 2; k < n; ++k)
                    out.faces.push_back({static_cast<uint32_t>(row[1]),
                                         static_cast<uint32_t>(row[k]),
                                         static_cast<uint32_t>(row[k + 1])});
            }
        }
    }
    if (out.vertices.empty()) throw ContractError("ply has no vertices: " + path);
    return out;
}

void write_ply_cloud(const PointCloud& cloud, const std::string& path, bool binary) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ContractError("cannot open for writing: " + path);
    os << "ply\nformat " << (binary ? "binary_little_endian" : "ascii")
       << " 1.0\nelement vertex " << cloud.size()
       << "\nproperty double x\nproperty double y\nproperty double z\nend_header\n";
    if (binary) {
        for (const Vec3& p : cloud) {
            const double v[3] = {p.x, p.y, p.z};
            os.write(reinterpret_cast<const char*>(v), 24);
        }
    } else {
        std::string out;
        for (const Vec3& p : cloud) {
            format_double(out, p.x);
            out.push_back(' ');
            format_double(out, p.y);
            out.push_back(' ');
            format_double(out, p.z);
            out.push_back('\n');
        }
        os.write(out.data(), static_cast<std::streamsize>(out.size()));
    }
}

void recompute_normals(surf::Mesh& mesh) {
    mesh.face_normals.resize(mesh.triangles.size());
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        const auto& tri = mesh.triangles[t];
        const Vec3 n = cross(mesh.vertices[tri[1]] - mesh.vertices[tri[0]],
                             mesh.vertices[tri[2]] - mesh.vertices[tri[0]]);
        const double len = norm(n);
        mesh.face_normals[t] = len > 0.0 ? n / len : Vec3{0, 0, 1};
    }
}

surf::Mesh read_obj(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ContractError("cannot open obj: " + path);
    surf::Mesh mesh;
    std::string line;
    long lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (word == "v") {
            Vec3 v;
            if (!(ls >> v.x >> v.y >> v.z)) throw ParseError(path, lineno, -1, "malformed vertex");
            mesh.vertices.push_back(v);
        } else if (word == "f") {
            std::vector<uint32_t> idx;
            std::string tok;
            while (ls >> tok) {
                const auto slash = tok.find('/');
                if (slash != std::string::npos) tok.resize(slash);
                long v = std::strtol(tok.c_str(), nullptr, 10);
                if (v < 0) v = static_cast<long>(mesh.vertices.size()) + v + 1;
                if (v < 1 || static_cast<std::size_t>(v) > mesh.vertices.size())
                    throw ParseError(path, lineno, -1, "face index out of range");
                idx.push_back(static_cast<uint32_t>(v - 1));
            }
            for (std::size_t k = 2; k < idx.size(); ++k)
                mesh.triangles.push_back({idx[0], idx[k - 1], idx[k]});
        }
    }
    if (mesh.vertices.empty()) throw ContractError("obj has no vertices: " + path);
    recompute_normals(mesh);
    return mesh;
}

void write_obj(const surf::Mesh& mesh, const std::string& path) {
    std::string out;
    out.reserve(mesh.vertices.size() * 28 + mesh.triangles.size() * 16);
    for (const Vec3& v : mesh.vertices) {
        out += "v ";
        format_double(out, v.x);
        out.push_back(' ');
        format_double(out, v.y);
        out.push_back(' ');
        format_double(out, v.z);
        out.push_back('\n');
    }
    char buf[64];
    for (const auto& t : mesh.triangles) {
        std::snprintf(buf, sizeof(buf), "f %u %u %u\n", t[0] + 1, t[1] + 1, t[2] + 1);
        out += buf;
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ContractError("cannot open for writing: " + path);
    os.write(out.data(), static_cast<std::streamsize>(out.size()));
}

void write_ply_mesh(const surf::Mesh& mesh, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ContractError("cannot open for writing: " + path);
    os << "ply\nformat binary_little_endian 1.0\nelement vertex " << mesh.vertices.size()
       << "\nproperty double x\nproperty double y\nproperty double z\nelement face "
       << mesh.triangles.size()
       << "\nproperty list uchar uint vertex_indices\nend_header\n";
    for (const Vec3& p : mesh.vertices) {
        const double v[3] = {p.x, p.y, p.z};
        os.write(reinterpret_cast<const char*>(v), 24);
    }
    for (const auto& t : mesh.triangles) {
        const uint8_t n = 3;
        os.write(reinterpret_cast<const char*>(&n), 1);
        os.write(reinterpret_cast<const char*>(t.data()), 12);
    }
}

}  // namespace

PointCloud read_point_cloud(const std::string& path) {
    const std::string ext = extension(path);
    if (ext == "xyz") return read_xyz(path);
    if (ext == "ply") return read_ply(path, false).vertices;
    throw ContractError("unsupported point cloud extension (want .xyz or .ply): " + path);
}

void write_point_cloud(const PointCloud& cloud, const std::string& path, CloudFormat format) {
    if (cloud.empty()) throw ContractError("refusing to write an empty point cloud");
    if (format == CloudFormat::Auto) {
        const std::string ext = extension(path);
        if (ext == "xyz")
            format = CloudFormat::Xyz;
        else if (ext == "ply")
            format = CloudFormat::PlyBinary;
        else
            throw ContractError("unsupported point cloud extension (want .xyz or .ply): " + path);
    }
    switch (format) {
        case CloudFormat::Xyz: write_xyz(cloud, path); break;
        case CloudFormat::PlyBinary: write_ply_cloud(cloud, path, true); break;
        case CloudFormat::PlyAscii: write_ply_cloud(cloud, path, false); break;
        case CloudFormat::Auto: break;
    }
}

surf::Mesh read_mesh(const std::string& path) {
    const std::string ext = extension(path);
    if (ext == "obj") return read_obj(path);
    if (ext == "ply") {
        const PlyContents c = read_ply(path, true);
        surf::Mesh mesh;
        mesh.vertices = c.vertices;
        mesh.triangles = c.faces;
        recompute_normals(mesh);
        return mesh;
    }
    throw ContractError("unsupported mesh extension (want .obj or .ply): " + path);
}

void write_mesh(const surf::Mesh& mesh, const std::string& path) {
    const std::string ext = extension(path);
    if (ext == "obj")
        write_obj(mesh, path);
    else if (ext == "ply")
        write_ply_mesh(mesh, path);
    else
        throw ContractError("unsupported mesh extension (want .obj or .ply): " + path);
}

}  // namespace n2n::io
