#ifndef SAN_DATASET_HPP
#define SAN_DATASET_HPP

#include <string>
#include <vector>

#include "san/prng.hpp"
#include "san/tensor.hpp"

namespace san {

// One image/mask/label triple. Masks are strictly binary, labels 1-based.
struct SaliencySample {
  std::string id;
  Tensor image;  // (1, 3, h, w) in [0,1]
  Tensor mask;   // (1, 1, h, w) in {0,1}
  int label = 0; // 1..L

  void validate(int num_classes) const;
};

struct DatasetMeta {
  int num_classes = 0;
  std::vector<std::string> class_names;
  i64 size = 0;
};

struct Dataset {
  std::vector<SaliencySample> samples;
  DatasetMeta meta;
};

// Nearest-neighbor resize; the only resize in the engine because it keeps
// binary masks binary.
Tensor resize_nearest(const Tensor& t, i64 out_h, i64 out_w);

// Synthetic shapes at desk scale: textured background, one flat
// contrasting foreground shape per image, class determined by geometry
// (1 disc, 2 square, 3 triangle, 4 diamond, 5 cross). Shape area lands in
// [5%, 30%] of the image. Deterministic under the seed.
Dataset gen_synthetic_dataset(i64 n, int num_classes, i64 size, Prng& prng);

// Directory layout shared by gen-data and the loader:
//   root/images/<id>.ppm   P6 color
//   root/masks/<id>.pgm    P5, pixel value = class index (0 = background)
//   root/labels.txt        id<TAB>label, sorted by id
void save_voc_style(const Dataset& ds, const std::string& root);

// labels.txt defines the sample roster and L (its maximum label); the
// per-sample label is recomputed from the mask as the class with the
// largest pixel area. All-background masks are rejected. resize_to = 0
// keeps native resolution.
Dataset load_voc_style(const std::string& root, i64 resize_to);

}  // namespace san

#endif  // SAN_DATASET_HPP
