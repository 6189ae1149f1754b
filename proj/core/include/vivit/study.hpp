#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vivit/tensor.hpp"

namespace vivit {

struct ModalityVolume {
  std::string modality;
  Tensor volume;  // [1,H,W,D], normalized
};

// One subject's in-memory study: a variable set of contrasts plus an
// optional segmentation target [num_classes,H,W,D] with values in {0,1}.
struct StudyTensors {
  std::string id;
  std::vector<ModalityVolume> volumes;
  std::optional<Tensor> label;

  std::vector<std::string> modality_names() const {
    std::vector<std::string> out;
    for (const auto& v : volumes) out.push_back(v.modality);
    return out;
  }
};

}  // namespace vivit
