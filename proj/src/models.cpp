#include "akid/models.hpp"

#include <cmath>

namespace akid::models {

namespace {

Json uniform(double fan_in) { return Json{{"name", "uniform"}, {"range", std::sqrt(3.0 / fan_in)}}; }

}  // namespace

Json one_layer_brain_config(const std::string& name) {
  return Json{{"name", name},
              {"blocks",
               Json::array({
                   Json{{"type", "convolution"},
                        {"name", "conv1"},
                        {"ksize", {5, 5}},
                        {"strides", {1, 1, 1, 1}},
                        {"padding", "SAME"},
                        {"out_channel_num", 32}},
                   Json{{"type", "relu"}, {"name", "relu1"}},
                   Json{{"type", "pooling"},
                        {"name", "pool1"},
                        {"ksize", {1, 5, 5, 1}},
                        {"strides", {1, 5, 5, 1}},
                        {"padding", "SAME"}},
                   Json{{"type", "inner_product"}, {"name", "ip1"}, {"out_channel_num", 10}},
                   Json{{"type", "softmax_with_loss"},
                        {"name", "loss"},
                        {"class_num", 10},
                        {"inputs", Json::array({Json{{"name", "ip1"}, {"idxs", {0}}},
                                                Json{{"name", kSystemIn}, {"idxs", {1}}}})}},
               })}};
}

Json lenet_config(const std::string& name, std::size_t in_channels, std::size_t class_num) {
  const Json wd{{"type", "l2"}, {"scale", 0.0005}};
  const double c = static_cast<double>(in_channels);
  return Json{
      {"name", name},
      {"blocks",
       Json::array({
           Json{{"type", "convolution"}, {"name", "conv1"}, {"ksize", {5, 5}}, {"padding", "SAME"},
                {"out_channel_num", 20}, {"init_para", uniform(25 * c)}, {"wd", wd}},
           Json{{"type", "relu"}, {"name", "relu1"}},
           Json{{"type", "pooling"}, {"name", "pool1"}, {"ksize", {2, 2}}, {"strides", {2, 2}}, {"padding", "SAME"}},
           Json{{"type", "convolution"}, {"name", "conv2"}, {"ksize", {5, 5}}, {"padding", "SAME"},
                {"out_channel_num", 50}, {"init_para", uniform(25 * 20)}, {"wd", wd}},
           Json{{"type", "relu"}, {"name", "relu2"}},
           Json{{"type", "pooling"}, {"name", "pool2"}, {"ksize", {2, 2}}, {"strides", {2, 2}}, {"padding", "SAME"}},
           Json{{"type", "inner_product"}, {"name", "ip1"}, {"out_channel_num", 500},
                {"init_para", uniform(7 * 7 * 50)}, {"wd", wd}},
           Json{{"type", "relu"}, {"name", "relu3"}},
           Json{{"type", "inner_product"}, {"name", "ip2"}, {"out_channel_num", class_num},
                {"init_para", uniform(500)}, {"wd", wd}},
           Json{{"type", "softmax_with_loss"},
                {"name", "loss"},
                {"class_num", class_num},
                {"inputs", Json::array({Json{{"name", "ip2"}, {"idxs", {0}}}, Json{{"name", kSystemIn}, {"idxs", {1}}}})}},
       })}};
}

}  // namespace akid::models
