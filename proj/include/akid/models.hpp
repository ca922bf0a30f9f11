#pragma once

#include <memory>
#include <string>

#include "akid/brain.hpp"

namespace akid::models {

// conv1 (5x5, 32, SAME) -> relu1 -> pool1 (5x5 stride 5, SAME) -> ip1 (10)
// -> loss (softmax over ip1:0 with labels from system_in:1).
Json one_layer_brain_config(const std::string& name = "brain");

// conv1 (5x5, 20) -> relu -> pool (2x2/2) -> conv2 (5x5, 50) -> relu -> pool
// -> ip1 (500) -> relu -> ip2 (class_num) -> loss. Uniform init ranges are
// sqrt(3 / fan_in) per layer.
Json lenet_config(const std::string& name = "brain", std::size_t in_channels = 1, std::size_t class_num = 10);

inline std::unique_ptr<Brain> one_layer_brain(const std::string& name = "brain") {
  return Brain::from_config(one_layer_brain_config(name));
}
inline std::unique_ptr<Brain> lenet(const std::string& name = "brain", std::size_t in_channels = 1,
                                    std::size_t class_num = 10) {
  return Brain::from_config(lenet_config(name, in_channels, class_num));
}

}  // namespace akid::models
