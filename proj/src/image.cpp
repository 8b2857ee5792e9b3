#include "findr/image.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>

#include "findr/error.hpp"
#include "findr/util.hpp"

namespace findr {

namespace {

bool starts_with_bytes(std::string_view data, std::string_view magic) {
  return data.size() >= magic.size() && data.substr(0, magic.size()) == magic;
}

// libjpeg happily decodes a truncated stream (gray fill + warning), so a
// missing end-of-image marker is checked explicitly.
bool jpeg_has_eoi(std::string_view data) {
  std::size_t end = data.size();
  while (end > 0 && (data[end - 1] == '\0' || data[end - 1] == '\n' || data[end - 1] == '\r' ||
                     data[end - 1] == ' ')) {
    --end;
  }
  return end >= 2 && static_cast<unsigned char>(data[end - 2]) == 0xFF &&
         static_cast<unsigned char>(data[end - 1]) == 0xD9;
}

bool png_has_iend(std::string_view data) {
  return data.find("IEND") != std::string_view::npos;
}

cv::Mat decode(const LoadedImage& image) {
  std::vector<uchar> buf(image.bytes.begin(), image.bytes.end());
  cv::Mat m = cv::imdecode(buf, cv::IMREAD_COLOR);
  if (m.empty()) throw Error(ErrorKind::ingestion, "cannot decode image " + image.record.path.string());
  return m;
}

std::string encode(const cv::Mat& m, std::string_view ext) {
  std::vector<uchar> out;
  if (!cv::imencode(std::string(ext), m, out)) throw std::runtime_error("image encode failed");
  return std::string(out.begin(), out.end());
}

cv::Mat pad_to_square(const cv::Mat& m) {
  const int side = std::max(m.cols, m.rows);
  const int top = (side - m.rows) / 2;
  const int left = (side - m.cols) / 2;
  cv::Mat out;
  cv::copyMakeBorder(m, out, top, side - m.rows - top, left, side - m.cols - left,
                     cv::BORDER_CONSTANT, cv::Scalar(0, 0, 0));
  return out;
}

}  // namespace

std::string_view media_type_string(MediaType type) {
  return type == MediaType::jpeg ? "image/jpeg" : "image/png";
}

LoadedImage load_image(const ImageRecord& record) {
  LoadedImage img;
  img.record = record;
  try {
    img.bytes = read_file(record.path);
  } catch (const Error&) {
    throw Error(ErrorKind::ingestion, "unreadable image: " + record.path.string());
  }
  const std::string_view data = img.bytes;
  if (starts_with_bytes(data, "\xFF\xD8\xFF")) {
    img.media_type = MediaType::jpeg;
    if (!jpeg_has_eoi(data)) {
      throw Error(ErrorKind::ingestion, "truncated JPEG: " + record.path.string());
    }
  } else if (starts_with_bytes(data, "\x89PNG\r\n\x1a\n")) {
    img.media_type = MediaType::png;
    if (!png_has_iend(data)) throw Error(ErrorKind::ingestion, "truncated PNG: " + record.path.string());
  } else {
    throw Error(ErrorKind::ingestion, "not a JPEG or PNG image: " + record.path.string());
  }
  const cv::Mat m = decode(img);
  img.width = m.cols;
  img.height = m.rows;
  img.digest = sha256_hex(data);
  return img;
}

CropTransform full_frame(const LoadedImage& image) {
  return CropTransform{0, 0, image.width, image.height, false};
}

bool is_identity(const CropTransform& t, const LoadedImage& image) {
  return t == full_frame(image);
}

std::vector<std::string> render_views(const LoadedImage& image,
                                      std::span<const CropTransform> transforms, int side) {
  const cv::Mat src = decode(image);
  std::vector<std::string> out;
  out.reserve(transforms.size());
  for (const auto& t : transforms) {
    const cv::Rect roi(t.x, t.y, t.width, t.height);
    if ((roi & cv::Rect(0, 0, src.cols, src.rows)) != roi || roi.area() == 0) {
      throw Error(ErrorKind::contract, "crop outside image bounds");
    }
    cv::Mat view = src(roi).clone();
    if (t.flip) cv::flip(view, view, 1);
    cv::Mat resized;
    cv::resize(pad_to_square(view), resized, cv::Size(side, side), 0, 0, cv::INTER_AREA);
    out.push_back(encode(resized, ".png"));
  }
  return out;
}

std::string downscale_for_upload(const LoadedImage& image, int max_side) {
  if (max_side <= 0 || std::max(image.width, image.height) <= max_side) return image.bytes;
  const cv::Mat src = decode(image);
  const double scale = static_cast<double>(max_side) / std::max(src.cols, src.rows);
  cv::Mat small;
  cv::resize(src, small, cv::Size(), scale, scale, cv::INTER_AREA);
  return encode(small, image.media_type == MediaType::jpeg ? ".jpg" : ".png");
}

}  // namespace findr
