// Copyright 2026 The iwv3 Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "iwv3/image.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iterator>
#include <string>

namespace iwv3 {

RgbImage::RgbImage(int width, int height) : width_(width), height_(height) {
  if (width <= 0 || height <= 0) {
    Fail(ErrorCode::kInvalidArgument, "empty image");
  }
  pixels_.assign(static_cast<size_t>(width) * height * 3, 0);
}

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const uint8_t> bytes) : bytes_(bytes) {}

  void SkipWhitespaceAndComments() {
    while (pos_ < bytes_.size()) {
      const uint8_t c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(c)) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  long ReadNumber(const char* what) {
    SkipWhitespaceAndComments();
    long value = 0;
    size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > (1L << 30)) {
        Fail(ErrorCode::kInvalidArgument,
             std::string("PPM ") + what + " too large");
      }
      ++pos_;
      ++digits;
    }
    if (digits == 0) {
      Fail(ErrorCode::kInvalidArgument,
           std::string("malformed PPM header: missing ") + what);
    }
    return value;
  }

  size_t pos() const { return pos_; }
  void Advance() { ++pos_; }

 private:
  std::span<const uint8_t> bytes_;
  size_t pos_ = 0;
};

}  // namespace

RgbImage ReadPpm(std::span<const uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
    Fail(ErrorCode::kInvalidArgument, "malformed magic: expected P6");
  }
  HeaderReader reader(bytes.subspan(2));
  const long width = reader.ReadNumber("width");
  const long height = reader.ReadNumber("height");
  const long maxval = reader.ReadNumber("maxval");
  if (maxval != 255) {
    Fail(ErrorCode::kInvalidArgument,
         "unsupported PPM maxval " + std::to_string(maxval));
  }
  // Exactly one whitespace byte separates the header from the raster.
  size_t offset = 2 + reader.pos();
  if (offset >= bytes.size() || !std::isspace(bytes[offset])) {
    Fail(ErrorCode::kInvalidArgument, "truncated PPM header");
  }
  ++offset;
  RgbImage image(static_cast<int>(width), static_cast<int>(height));
  const size_t need = image.pixels().size();
  if (bytes.size() - offset < need) {
    Fail(ErrorCode::kInvalidArgument,
         "truncated PPM payload: need " + std::to_string(need) +
             " bytes, have " + std::to_string(bytes.size() - offset));
  }
  std::copy_n(bytes.begin() + offset, need, image.pixels().begin());
  return image;
}

std::vector<uint8_t> WritePpm(const RgbImage& image) {
  const std::string header = "P6\n" + std::to_string(image.width()) + " " +
                             std::to_string(image.height()) + "\n255\n";
  std::vector<uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels().begin(), image.pixels().end());
  return out;
}

std::vector<uint8_t> ReadFileBytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  if (in.bad()) Fail(ErrorCode::kIo, "read error on " + path.string());
  return bytes;
}

void WriteFileBytes(const std::filesystem::path& path,
                    std::span<const uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) Fail(ErrorCode::kIo, "cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) Fail(ErrorCode::kIo, "write error on " + path.string());
}

RgbImage ReadPpmFile(const std::filesystem::path& path) {
  return ReadPpm(ReadFileBytes(path));
}

void WritePpmFile(const std::filesystem::path& path, const RgbImage& image) {
  WriteFileBytes(path, WritePpm(image));
}

int PaddedSize(int size, int levels) {
  if (levels < 0) Fail(ErrorCode::kInvalidArgument, "negative level count");
  const int block = 1 << levels;
  return (size + block - 1) / block * block;
}

namespace {

// Index into [0, n) under whole-sample symmetric extension.
int Reflect(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace

template <typename T>
Plane<T> PadSymmetric(const Plane<T>& plane, int levels) {
  if (plane.empty()) Fail(ErrorCode::kInvalidArgument, "plane empty");
  if (levels < 1) Fail(ErrorCode::kInvalidArgument, "levels must be >= 1");
  const int w = PaddedSize(plane.width(), levels);
  const int h = PaddedSize(plane.height(), levels);
  Plane<T> out(w, h);
  for (int y = 0; y < h; ++y) {
    const T* src = plane.Row(Reflect(y, plane.height()));
    T* dst = out.Row(y);
    for (int x = 0; x < w; ++x) dst[x] = src[Reflect(x, plane.width())];
  }
  return out;
}

template <typename T>
Plane<T> Crop(const Plane<T>& plane, int width, int height) {
  if (width > plane.width() || height > plane.height()) {
    Fail(ErrorCode::kInvalidArgument, "crop larger than plane");
  }
  Plane<T> out(width, height);
  for (int y = 0; y < height; ++y) {
    std::copy_n(plane.Row(y), width, out.Row(y));
  }
  return out;
}

template Plane16 PadSymmetric(const Plane16&, int);
template Plane32 PadSymmetric(const Plane32&, int);
template PlaneF PadSymmetric(const PlaneF&, int);
template Plane16 Crop(const Plane16&, int, int);
template Plane32 Crop(const Plane32&, int, int);
template PlaneF Crop(const PlaneF&, int, int);

ImagePlanes ToPlanes(const RgbImage& image, int levels) {
  std::array<Plane16, 3> raw;
  for (auto& p : raw) p = Plane16(image.width(), image.height());
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      const uint8_t* px = image.pixel(x, y);
      const YCoCg c = RgbToYCoCgR(px[0], px[1], px[2]);
      raw[0].at(x, y) = c.y;
      raw[1].at(x, y) = c.co;
      raw[2].at(x, y) = c.cg;
    }
  }
  ImagePlanes out;
  out.true_width = image.width();
  out.true_height = image.height();
  for (int c = 0; c < 3; ++c) out.planes[c] = PadSymmetric(raw[c], levels);
  return out;
}

RgbImage FromPlanes(const ImagePlanes& planes) {
  RgbImage image(planes.true_width, planes.true_height);
  for (int y = 0; y < planes.true_height; ++y) {
    for (int x = 0; x < planes.true_width; ++x) {
      const Rgb rgb = YCoCgRToRgb(planes.planes[0].at(x, y),
                                  planes.planes[1].at(x, y),
                                  planes.planes[2].at(x, y));
      uint8_t* px = image.pixel(x, y);
      px[0] = static_cast<uint8_t>(std::clamp(rgb.r, 0, 255));
      px[1] = static_cast<uint8_t>(std::clamp(rgb.g, 0, 255));
      px[2] = static_cast<uint8_t>(std::clamp(rgb.b, 0, 255));
    }
  }
  return image;
}

}  // namespace iwv3
