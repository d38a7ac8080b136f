#include "gansfer/dataset_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

namespace gansfer::io {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::string slice_file(const std::string& channel, int z) {
  std::ostringstream os;
  os << channel << "_z" << std::setw(3) << std::setfill('0') << z << ".png";
  return os.str();
}

}  // namespace

const ChannelVolume& StoredSubject::channel(const std::string& name) const {
  for (const auto& c : channels)
    if (c.name == name) return c;
  throw IoError("stored subject has no channel '" + name + "'");
}

void write_png16(const fs::path& path, int width, int height,
                 const std::vector<std::uint16_t>& pixels) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw IoError("cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng write failed for " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, width, height, 16, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<unsigned char> row(static_cast<std::size_t>(width) * 2);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::uint16_t v = pixels[static_cast<std::size_t>(y) * width + x];
      row[2 * x] = static_cast<unsigned char>(v >> 8);  // PNG is big-endian
      row[2 * x + 1] = static_cast<unsigned char>(v & 0xff);
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

std::vector<std::uint16_t> read_png16(const fs::path& path, int& width, int& height) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw IoError("cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng read failed for " + path.string());
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  width = static_cast<int>(png_get_image_width(png, info));
  height = static_cast<int>(png_get_image_height(png, info));
  if (png_get_bit_depth(png, info) != 16 ||
      png_get_color_type(png, info) != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(path.string() + " is not a 16-bit grayscale PNG");
  }
  std::vector<unsigned char> row(static_cast<std::size_t>(width) * 2);
  std::vector<std::uint16_t> out(static_cast<std::size_t>(width) * height);
  for (int y = 0; y < height; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < width; ++x)
      out[static_cast<std::size_t>(y) * width + x] =
          static_cast<std::uint16_t>((row[2 * x] << 8) | row[2 * x + 1]);
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

void write_stored(const fs::path& dir, const StoredSubject& subject) {
  fs::create_directories(dir);
  nlohmann::json meta = subject.meta;
  meta["channels"] = nlohmann::json::array();
  if (subject.channels.empty()) throw IoError("stored subject has no channels");
  const auto& ref = subject.channels.front().values;
  meta["shape"] = {ref.nx(), ref.ny(), ref.nz()};
  for (const auto& ch : subject.channels) {
    if (!ch.values.same_shape(ref)) throw ShapeMismatch("channel shapes differ");
    double lo = 0.0, hi = 0.0;
    if (ch.values.size() > 0) {
      const auto [mn, mx] = std::minmax_element(ch.values.values().begin(),
                                                ch.values.values().end());
      lo = *mn;
      hi = *mx;
    }
    const double scale = ch.binary ? 1.0 : (hi > lo ? (hi - lo) / 65535.0 : 1.0);
    const double offset = ch.binary ? 0.0 : lo;
    meta["channels"].push_back(
        {{"name", ch.name}, {"binary", ch.binary}, {"offset", offset}, {"scale", scale}});
    std::vector<std::uint16_t> pixels(ref.plane_size());
    for (int z = 0; z < ref.nz(); ++z) {
      const auto plane = ch.values.plane(z);
      for (std::size_t i = 0; i < plane.size(); ++i) {
        if (ch.binary) {
          pixels[i] = plane[i] != 0.0f ? 65535 : 0;
        } else {
          const double q = std::round((plane[i] - offset) / scale);
          pixels[i] = static_cast<std::uint16_t>(std::clamp(q, 0.0, 65535.0));
        }
      }
      write_png16(dir / slice_file(ch.name, z), ref.nx(), ref.ny(), pixels);
    }
  }
  write_json(dir / "meta.json", meta);
}

StoredSubject read_stored(const fs::path& dir) {
  StoredSubject out;
  out.meta = read_json(dir / "meta.json");
  const auto shape = out.meta.at("shape");
  const int nx = shape.at(0), ny = shape.at(1), nz = shape.at(2);
  for (const auto& c : out.meta.at("channels")) {
    ChannelVolume ch;
    ch.name = c.at("name").get<std::string>();
    ch.binary = c.at("binary").get<bool>();
    const double offset = c.at("offset").get<double>();
    const double scale = c.at("scale").get<double>();
    ch.values = Volume(nx, ny, nz);
    for (int z = 0; z < nz; ++z) {
      int w = 0, h = 0;
      const auto pixels = read_png16(dir / slice_file(ch.name, z), w, h);
      if (w != nx || h != ny) throw ShapeMismatch("slice image size differs from meta shape");
      Image plane(nx, ny);
      for (std::size_t i = 0; i < plane.size(); ++i)
        plane[i] = ch.binary ? (pixels[i] > 0 ? 1.0f : 0.0f)
                             : static_cast<float>(offset + scale * pixels[i]);
      ch.values.set_plane(z, plane);
    }
    out.channels.push_back(std::move(ch));
  }
  return out;
}

void write_labelled(const fs::path& dir, const data::LabelledSample& sample,
                    const nlohmann::json& extra) {
  sample.validate();
  StoredSubject stored;
  stored.meta = {{"subject_id", sample.subject_id},
                 {"age", sample.age},
                 {"cdr", data::cdr_value(sample.cdr)},
                 {"is_repeat", sample.is_repeat},
                 {"kind", "labelled"},
                 {"extra", extra}};
  std::vector<int> slices(sample.mr.nz());
  for (int z = 0; z < sample.mr.nz(); ++z) slices[z] = z;
  stored.meta["slices"] = slices;
  stored.channels.push_back({"mr", sample.mr, false});
  for (int s = 0; s < data::kNumStructures; ++s) {
    Volume v(sample.mr.nx(), sample.mr.ny(), sample.mr.nz());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = sample.labels[s][i];
    stored.channels.push_back({std::string(data::kStructureNames[s]), std::move(v), true});
  }
  write_stored(dir, stored);
}

data::LabelledSample read_labelled(const fs::path& dir) {
  const auto stored = read_stored(dir);
  data::LabelledSample s;
  s.subject_id = stored.meta.at("subject_id").get<std::string>();
  s.age = stored.meta.at("age").get<double>();
  s.cdr = data::cdr_from_value(stored.meta.at("cdr").get<double>());
  s.is_repeat = stored.meta.value("is_repeat", false);
  s.mr = stored.channel("mr").values;
  for (int st = 0; st < data::kNumStructures; ++st) {
    const auto& v = stored.channel(std::string(data::kStructureNames[st])).values;
    s.labels[st] = MaskVolume(v.nx(), v.ny(), v.nz());
    for (std::size_t i = 0; i < v.size(); ++i) s.labels[st][i] = v[i] != 0.0f;
  }
  s.validate();
  return s;
}

std::vector<fs::path> list_subjects(const fs::path& root) {
  std::vector<fs::path> out;
  if (!fs::exists(root)) return out;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory() && fs::exists(entry.path() / "meta.json"))
      out.push_back(entry.path());
  std::sort(out.begin(), out.end());
  return out;
}

void write_json(const fs::path& path, const nlohmann::json& value) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << value.dump(2) << '\n';
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path.string());
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
}

std::vector<data::LabelledSample> DirectoryAdapter::load(const fs::path& source) {
  std::vector<data::LabelledSample> out;
  for (const auto& dir : list_subjects(source)) out.push_back(read_labelled(dir));
  return out;
}

}  // namespace gansfer::io
