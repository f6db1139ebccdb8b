/* Copyright 2026 The JDND Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// 8-bit RGB image files: PNG, and binary PPM (P6) as a fallback.

#ifndef JDND_IMAGE_IO_HPP_
#define JDND_IMAGE_IO_HPP_

#include <cstdint>
#include <string>

#include "jdnd/tensor.hpp"

namespace jdnd {

/// Loads a PNG (gray, RGB, with or without alpha, 8 or 16 bit) or a P6 PPM
/// into an [H, W, 3] tensor in [0, 1]. Throws IoError.
Tensor<float> read_image(const std::string& path);

/// Writes an [H, W, 3] tensor, clipped and rounded to 8 bits. The format is
/// picked from the extension (.ppm → PPM, anything else → PNG). The output is
/// a deterministic function of the pixel values.
void write_image(const Tensor<float>& image, const std::string& path);

/// Quantizes to 8-bit levels and back, as a save/load round trip would.
Tensor<float> quantize_8bit(const Tensor<float>& image);

}  // namespace jdnd

#endif  // JDND_IMAGE_IO_HPP_
