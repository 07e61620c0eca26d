#pragma once

// Small worlds and models shared by the pipeline-level tests.

#include "mtid/pipeline.hpp"
#include "mtid/synthworld.hpp"

namespace mtid::testing {

inline synthworld::Dataset tiny_dataset(std::uint64_t seed = 3) {
  synthworld::WorldSpec spec;
  spec.num_tasks = 2;
  spec.num_actions = 8;
  spec.obs_dim = 6;
  spec.actions_per_task = 3;
  spec.plans_per_task = 12;
  spec.seed = seed;
  synthworld::Dataset d;
  d.world = synthworld::generate_world(spec);
  d.split = synthworld::split_dataset(d.world, 0.7, seed);
  return d;
}

inline pipeline::ModelConfig tiny_model() {
  pipeline::ModelConfig m;
  m.unet.levels = 2;
  m.unet.multipliers = {1, 2};
  m.unet.blocks_per_level = 1;
  m.unet.middle_blocks = 1;
  m.unet.base_width = 8;
  m.unet.max_groups = 4;
  m.interp.refiner_layers = 1;
  m.interp.refiner_heads = 2;
  m.classifier.embed_dim = 8;
  m.classifier.layers = 1;
  m.classifier.heads = 2;
  m.classifier.ff_dim = 16;
  m.classifier.head_widths = {8};
  return m;
}

inline pipeline::TrainConfig tiny_train(std::uint64_t seed = 1) {
  pipeline::TrainConfig t;
  t.total_steps = 20;
  t.warmup_steps = 4;
  t.peak_lr = 1e-3;
  t.batch_size = 4;
  t.seed = seed;
  t.diffusion_steps = 10;
  t.ddim_steps = 5;
  return t;
}

inline denoiser::Dims dims_of(const synthworld::Dataset& d, int horizon) {
  return {d.world.spec.num_tasks, d.world.spec.num_actions, d.world.spec.obs_dim, horizon};
}

}  // namespace mtid::testing
