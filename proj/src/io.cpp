#include "damo/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace damo {

namespace {

std::ofstream open_out(const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw IoError("cannot open " + path + " for writing");
    }
    return f;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw IoError("cannot open " + path + " for reading");
    }
    return f;
}

// Header tokens are separated by arbitrary whitespace; a single whitespace
// byte ends the header before the raster.
std::string next_token(std::istream& in) {
    std::string tok;
    in >> tok;
    if (tok.empty()) {
        throw IoError("truncated image header");
    }
    return tok;
}

}  // namespace

void write_pfm(const std::string& path, const Tensor2& image) {
    if (image.empty()) {
        throw ShapeError("cannot write an empty float map");
    }
    std::ofstream f = open_out(path);
    f << "Pf\n" << image.w() << " " << image.h() << "\n-1.0\n";
    std::vector<float> row(std::size_t(image.w()));
    for (int i = image.h() - 1; i >= 0; --i) {
        for (int j = 0; j < image.w(); ++j) row[std::size_t(j)] = float(image.at(i, j));
        f.write(reinterpret_cast<const char*>(row.data()),
                std::streamsize(row.size() * sizeof(float)));
    }
    if (!f) {
        throw IoError("failed writing " + path);
    }
}

Tensor2 read_pfm(const std::string& path) {
    std::ifstream f = open_in(path);
    const std::string magic = next_token(f);
    if (magic != "Pf") {
        throw IoError(path + ": not a grayscale PFM (magic '" + magic + "')");
    }
    int w = 0, h = 0;
    double scale = 0.0;
    try {
        w = std::stoi(next_token(f));
        h = std::stoi(next_token(f));
        scale = std::stod(next_token(f));
    } catch (const std::logic_error&) {
        throw IoError(path + ": malformed PFM header");
    }
    if (w < 1 || h < 1) {
        throw IoError(path + ": bad PFM dims");
    }
    f.get();  // the single whitespace byte before the raster

    Tensor2 image(h, w, 0.0);
    std::vector<float> row(static_cast<std::size_t>(w));
    for (int i = h - 1; i >= 0; --i) {
        f.read(reinterpret_cast<char*>(row.data()),
               std::streamsize(row.size() * sizeof(float)));
        if (!f) {
            throw IoError(path + ": truncated PFM raster");
        }
        if (scale > 0.0) {
            // big-endian file; swap each value
            for (float& v : row) {
                char* b = reinterpret_cast<char*>(&v);
                std::swap(b[0], b[3]);
                std::swap(b[1], b[2]);
            }
        }
        for (int j = 0; j < w; ++j) image.at(i, j) = double(row[std::size_t(j)]);
    }
    return image;
}

void write_ppm(const std::string& path, const Tensor4& rgb) {
    if (rgb.n() != 1 || rgb.c() != 3) {
        throw ShapeError("write_ppm expects a (1, 3, h, w) tensor");
    }
    std::ofstream f = open_out(path);
    f << "P6\n" << rgb.w() << " " << rgb.h() << "\n255\n";
    std::vector<unsigned char> row(std::size_t(rgb.w()) * 3);
    for (int i = 0; i < rgb.h(); ++i) {
        for (int j = 0; j < rgb.w(); ++j) {
            for (int c = 0; c < 3; ++c) {
                const double v = std::round(255.0 * rgb.at(0, c, i, j));
                row[std::size_t(j) * 3 + std::size_t(c)] =
                    static_cast<unsigned char>(std::clamp(v, 0.0, 255.0));
            }
        }
        f.write(reinterpret_cast<const char*>(row.data()), std::streamsize(row.size()));
    }
    if (!f) {
        throw IoError("failed writing " + path);
    }
}

Tensor4 read_ppm(const std::string& path) {
    std::ifstream f = open_in(path);
    std::string magic;
    f >> magic;
    if (magic != "P6") {
        throw IoError(path + ": not a binary PPM");
    }
    auto next_header_int = [&]() {
        // skip whitespace and '#' comment lines
        int ch = f.get();
        while (ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r' || ch == '#') {
            if (ch == '#') {
                while (ch != '\n' && ch != EOF) ch = f.get();
            }
            ch = f.get();
        }
        int value = 0;
        bool any = false;
        while (ch >= '0' && ch <= '9') {
            value = value * 10 + (ch - '0');
            any = true;
            ch = f.get();
        }
        if (!any) {
            throw IoError(path + ": malformed PPM header");
        }
        f.unget();
        return value;
    };
    const int w = next_header_int();
    const int h = next_header_int();
    const int maxval = next_header_int();
    if (maxval != 255) {
        throw IoError(path + ": only 8-bit PPM is supported");
    }
    f.get();  // single whitespace before raster

    Tensor4 rgb({1, 3, h, w}, 0.0);
    std::vector<unsigned char> row(std::size_t(w) * 3);
    for (int i = 0; i < h; ++i) {
        f.read(reinterpret_cast<char*>(row.data()), std::streamsize(row.size()));
        if (!f) {
            throw IoError(path + ": truncated PPM raster");
        }
        for (int j = 0; j < w; ++j) {
            for (int c = 0; c < 3; ++c) {
                rgb.at(0, c, i, j) = double(row[std::size_t(j) * 3 + std::size_t(c)]) / 255.0;
            }
        }
    }
    return rgb;
}

namespace {

constexpr char kCheckpointMagic[8] = {'D', 'A', 'M', 'O', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void write_raw(std::ostream& f, const T& v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& f) {
    T v{};
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!f) {
        throw IoError("truncated checkpoint");
    }
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelState& model) {
    std::ofstream f = open_out(path);
    f.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    write_raw(f, kCheckpointVersion);

    const DamoConfig& c = model.config();
    write_raw(f, std::int32_t(c.height));
    write_raw(f, std::int32_t(c.width));
    write_raw(f, std::uint32_t(c.stage_widths.size()));
    for (int w : c.stage_widths) write_raw(f, std::int32_t(w));
    write_raw(f, std::int32_t(c.spm_stages));
    write_raw(f, std::uint8_t(c.spm_stack_all ? 1 : 0));
    write_raw(f, std::uint8_t(c.use_deformable ? 1 : 0));
    write_raw(f, std::uint32_t(c.banks.size()));
    for (const BankSpec& b : c.banks) {
        write_raw(f, std::int32_t(b.kh));
        write_raw(f, std::int32_t(b.kw));
    }
    write_raw(f, std::uint64_t(c.seed));

    const std::vector<ConstParamRef> params = model.params();
    write_raw(f, std::uint32_t(params.size()));
    for (const ConstParamRef& p : params) {
        write_raw(f, std::uint32_t(p.name.size()));
        f.write(p.name.data(), std::streamsize(p.name.size()));
        write_raw(f, std::uint32_t(p.dims.n));
        write_raw(f, std::uint32_t(p.dims.c));
        write_raw(f, std::uint32_t(p.dims.h));
        write_raw(f, std::uint32_t(p.dims.w));
        f.write(reinterpret_cast<const char*>(p.data),
                std::streamsize(p.size * sizeof(double)));
    }
    if (!f) {
        throw IoError("failed writing " + path);
    }
}

ModelState load_checkpoint(const std::string& path) {
    std::ifstream f = open_in(path);
    char magic[8];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
        throw IoError(path + ": bad checkpoint magic");
    }
    const auto version = read_raw<std::uint32_t>(f);
    if (version != kCheckpointVersion) {
        throw IoError(path + ": unsupported checkpoint version " + std::to_string(version));
    }

    DamoConfig c;
    c.height = read_raw<std::int32_t>(f);
    c.width = read_raw<std::int32_t>(f);
    const auto n_stages = read_raw<std::uint32_t>(f);
    c.stage_widths.clear();
    for (std::uint32_t i = 0; i < n_stages; ++i) {
        c.stage_widths.push_back(read_raw<std::int32_t>(f));
    }
    c.spm_stages = read_raw<std::int32_t>(f);
    c.spm_stack_all = read_raw<std::uint8_t>(f) != 0;
    c.use_deformable = read_raw<std::uint8_t>(f) != 0;
    const auto n_banks = read_raw<std::uint32_t>(f);
    c.banks.clear();
    for (std::uint32_t i = 0; i < n_banks; ++i) {
        BankSpec b;
        b.kh = read_raw<std::int32_t>(f);
        b.kw = read_raw<std::int32_t>(f);
        c.banks.push_back(b);
    }
    c.seed = read_raw<std::uint64_t>(f);

    ModelState model = ModelState::build(c);
    std::vector<ParamRef> params = model.params();
    const auto n_params = read_raw<std::uint32_t>(f);
    if (n_params != params.size()) {
        throw IoError(path + ": checkpoint parameter count mismatch");
    }
    for (ParamRef& p : params) {
        const auto name_len = read_raw<std::uint32_t>(f);
        std::string name(name_len, '\0');
        f.read(name.data(), std::streamsize(name_len));
        Shape4 dims;
        dims.n = int(read_raw<std::uint32_t>(f));
        dims.c = int(read_raw<std::uint32_t>(f));
        dims.h = int(read_raw<std::uint32_t>(f));
        dims.w = int(read_raw<std::uint32_t>(f));
        if (!f || name != p.name || dims != p.dims) {
            throw IoError(path + ": checkpoint tensor '" + name +
                          "' does not match expected '" + p.name + "'");
        }
        f.read(reinterpret_cast<char*>(p.data), std::streamsize(p.size * sizeof(double)));
        if (!f) {
            throw IoError(path + ": truncated checkpoint tensor data");
        }
    }
    return model;
}

void write_loss_csv(const std::string& path, const std::vector<EpochRecord>& history) {
    std::ofstream f = open_out(path);
    f << "epoch,mean_loss,lr\n";
    char buf[96];
    for (const EpochRecord& r : history) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g\n", r.epoch, r.mean_loss, r.lr);
        f << buf;
    }
    if (!f) {
        throw IoError("failed writing " + path);
    }
}

void write_manifest(const std::string& path, const DatasetManifest& manifest) {
    nlohmann::json j;
    j["height"] = manifest.height;
    j["width"] = manifest.width;
    j["scenes"] = nlohmann::json::array();
    for (const ManifestEntry& e : manifest.scenes) {
        j["scenes"].push_back({{"seed", e.seed}, {"rgb", e.rgb}, {"depth", e.depth}});
    }
    std::ofstream f = open_out(path);
    f << j.dump(2) << "\n";
    if (!f) {
        throw IoError("failed writing " + path);
    }
}

DatasetManifest read_manifest(const std::string& path) {
    std::ifstream f = open_in(path);
    nlohmann::json j;
    try {
        f >> j;
        DatasetManifest m;
        m.height = j.at("height").get<int>();
        m.width = j.at("width").get<int>();
        for (const auto& e : j.at("scenes")) {
            ManifestEntry entry;
            entry.seed = e.at("seed").get<std::uint64_t>();
            entry.rgb = e.at("rgb").get<std::string>();
            entry.depth = e.at("depth").get<std::string>();
            m.scenes.push_back(std::move(entry));
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path + ": malformed manifest: " + e.what());
    }
}

std::vector<TrainSample> load_dataset(const std::string& dir) {
    const DatasetManifest manifest = read_manifest(dir + "/manifest.json");
    std::vector<TrainSample> samples;
    for (const ManifestEntry& e : manifest.scenes) {
        TrainSample s;
        s.rgb = read_ppm(dir + "/" + e.rgb);
        s.depth.depth = read_pfm(dir + "/" + e.depth);
        if (s.rgb.h() != manifest.height || s.rgb.w() != manifest.width ||
            s.depth.depth.shape() != Shape2{manifest.height, manifest.width}) {
            throw IoError(dir + ": dataset images disagree with the manifest dims");
        }
        s.depth.mask = Tensor2(manifest.height, manifest.width, 1.0);
        samples.push_back(std::move(s));
    }
    return samples;
}

}  // namespace damo
