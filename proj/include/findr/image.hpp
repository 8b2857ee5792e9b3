#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace findr {

/// One manifest row as seen by the pipeline stages. Ground-truth labels are
/// deliberately absent; see load_ground_truth().
struct ImageRecord {
  std::string id;
  std::filesystem::path path;
  std::optional<std::string> synthetic_class;
};

enum class MediaType { jpeg, png };

std::string_view media_type_string(MediaType type);

/// An image whose bytes have been read and verified to decode.
struct LoadedImage {
  ImageRecord record;
  std::string bytes;
  MediaType media_type = MediaType::png;
  std::string digest;  // sha256 of bytes
  int width = 0;
  int height = 0;
};

/// Reads and validates the file. Truncated or undecodable payloads throw an
/// ingestion error naming the path.
LoadedImage load_image(const ImageRecord& record);

/// Axis-aligned crop in source pixel coordinates, optionally mirrored.
struct CropTransform {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;
  bool flip = false;

  friend bool operator==(const CropTransform&, const CropTransform&) = default;
};

CropTransform full_frame(const LoadedImage& image);
bool is_identity(const CropTransform& t, const LoadedImage& image);

/// Applies each transform, center-pads the result to square and resizes it to
/// side x side. Returns PNG-encoded views in input order.
std::vector<std::string> render_views(const LoadedImage& image,
                                      std::span<const CropTransform> transforms, int side);

/// Re-encodes the image (same media type) so its longer side is at most
/// max_side. Returns the original bytes when already small enough.
std::string downscale_for_upload(const LoadedImage& image, int max_side);

}  // namespace findr
