#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "gansfer/data_model.hpp"

namespace gansfer::io {

namespace fs = std::filesystem;

/// One named channel of a stored subject, as a stack of axial planes.
struct ChannelVolume {
  std::string name;
  Volume values;
  bool binary = false;
};

/// On-disk subject: `<dir>/meta.json` plus one 16-bit grayscale PNG per
/// channel per slice named `<channel>_z<index>.png`.
///
/// Continuous channels are quantized linearly between their minimum and
/// maximum; the mapping is stored in meta.json as (offset, scale) so that
/// value = offset + scale * pixel. Binary channels are stored as 0/65535.
struct StoredSubject {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<ChannelVolume> channels;

  const ChannelVolume& channel(const std::string& name) const;
};

void write_png16(const fs::path& path, int width, int height,
                 const std::vector<std::uint16_t>& pixels);
std::vector<std::uint16_t> read_png16(const fs::path& path, int& width, int& height);

void write_stored(const fs::path& dir, const StoredSubject& subject);
StoredSubject read_stored(const fs::path& dir);

/// Labelled subject with channels "mr" and one binary channel per structure.
void write_labelled(const fs::path& dir, const data::LabelledSample& sample,
                    const nlohmann::json& extra = nlohmann::json::object());
data::LabelledSample read_labelled(const fs::path& dir);

/// Subject directories (those containing meta.json) under root, sorted by name.
std::vector<fs::path> list_subjects(const fs::path& root);

void write_json(const fs::path& path, const nlohmann::json& value);
nlohmann::json read_json(const fs::path& path);
void write_text(const fs::path& path, const std::string& text);

/// Adapter boundary for external volumetric formats.
class IngestionAdapter {
 public:
  virtual ~IngestionAdapter() = default;
  virtual std::vector<data::LabelledSample> load(const fs::path& source) = 0;
};

/// Adapter for the native dataset directory format.
class DirectoryAdapter : public IngestionAdapter {
 public:
  std::vector<data::LabelledSample> load(const fs::path& source) override;
};

}  // namespace gansfer::io
