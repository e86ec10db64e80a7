#pragma once

#include <string>

#include "dagankit/tensor.hpp"

namespace dagankit {

struct ImageIoError : std::runtime_error {
  explicit ImageIoError(const std::string& what) : std::runtime_error(what) {}
};

// 8-bit PNG (gray/RGB/RGBA accepted) -> [3,H,W] in [0,1].
Tensor read_png(const std::string& path);

// [3,H,W] or [1,H,W] in [0,1] -> 8-bit RGB PNG.
void write_png(const std::string& path, const Tensor& image);

}  // namespace dagankit
