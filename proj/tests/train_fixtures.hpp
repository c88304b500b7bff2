#pragma once

// Small models and datasets for fast training tests.

#include "semdisc/dataset_io.hpp"
#include "semdisc/trainer.hpp"

namespace fixtures {

inline semdisc::Dataset scene_data(std::size_t n, std::size_t size, std::size_t classes, std::uint64_t seed) {
  using namespace semdisc;
  return make_dataset(SemanticMode::kScene, size, size, classes,
                      generate_examples({SemanticMode::kScene, n, size, size, classes, seed}));
}

inline semdisc::Dataset keypoint_data(std::size_t n, std::size_t size, std::size_t keys, std::uint64_t seed) {
  using namespace semdisc;
  return make_dataset(SemanticMode::kKeypoint, size, size, keys,
                      generate_examples({SemanticMode::kKeypoint, n, size, size, keys, seed}));
}

inline semdisc::ModelConfig tiny_model(std::size_t size, std::size_t classes, std::size_t scales,
                                       semdisc::SemanticMode mode = semdisc::SemanticMode::kScene) {
  semdisc::ModelConfig m = semdisc::default_model_config(mode, size, size, classes);
  m.generator = {classes, 4, 1};
  m.disc.widths = {4, 8, 8, 8};
  m.num_scales = scales;
  return m;
}

inline semdisc::TrainConfig tiny_train() {
  semdisc::TrainConfig t;
  t.epochs = 4;
  t.warmup_epochs = 2;
  t.batch_size = 4;
  t.seed = 11;
  return t;
}

}  // namespace fixtures
