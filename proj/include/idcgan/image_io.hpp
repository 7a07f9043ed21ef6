#pragma once

#include <string>

#include "idcgan/tensor.hpp"

namespace idcgan {

// Decodes a PNG (8-bit RGB/RGBA, alpha dropped, non-interlaced) or binary
// PPM (P6, maxval 255) into an RGB tensor [3,H,W] with values byte/255.
Tensor<float> decode_image(const std::string& path);

// Encodes [3,H,W] values in [0,1] to PNG or PPM picked by file extension.
// Bytes are produced by round-half-away-from-zero of value*255.
void encode_image(const Tensor<float>& img, const std::string& path);

// Largest centered square crop.
Tensor<float> center_crop_square(const Tensor<float>& img);

// Bilinear resampling to oh x ow (pixel-center aligned).
Tensor<float> resize_bilinear(const Tensor<float>& img, int oh, int ow);

}  // namespace idcgan
