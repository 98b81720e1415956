#include "ssdd/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace ssdd {

void write_preview_grid(const std::filesystem::path& path, const Tensor& images, int columns) {
  if (images.ndim() != 4)
    throw ShapeError("write_preview_grid: expects [n,c,h,w], got " + shape_str(images.shape()));
  const int64_t n = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
  if (c != 1 && c != 3)
    throw ContractError("write_preview_grid: previews support 1 or 3 channels");
  const int64_t cols = std::min<int64_t>(columns, n);
  const int64_t rows = (n + cols - 1) / cols;
  const int64_t pad = 1;
  const int64_t grid_h = rows * (h + pad) + pad;
  const int64_t grid_w = cols * (w + pad) + pad;

  double lo = images.data()[0], hi = images.data()[0];
  for (double v : images.data()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double span = hi > lo ? hi - lo : 1.0;

  std::vector<unsigned char> canvas(static_cast<size_t>(grid_h * grid_w * c), 32);
  for (int64_t s = 0; s < n; ++s) {
    const int64_t gr = s / cols, gc = s % cols;
    const int64_t top = pad + gr * (h + pad), left = pad + gc * (w + pad);
    for (int64_t ch = 0; ch < c; ++ch)
      for (int64_t i = 0; i < h; ++i)
        for (int64_t j = 0; j < w; ++j) {
          const double v = images.data()[((s * c + ch) * h + i) * w + j];
          const auto byte = static_cast<unsigned char>(
              std::lround(255.0 * std::clamp((v - lo) / span, 0.0, 1.0)));
          canvas[static_cast<size_t>(((top + i) * grid_w + left + j) * c + ch)] = byte;
        }
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << (c == 1 ? "P5" : "P6") << "\n" << grid_w << " " << grid_h << "\n255\n";
  out.write(reinterpret_cast<const char*>(canvas.data()),
            static_cast<std::streamsize>(canvas.size()));
  if (!out) throw IoError("short write: " + path.string());
}

}  // namespace ssdd
