#pragma once

#include <cstdint>
#include <random>

#include "bmtl/model.hpp"

namespace instances {

using Gen = std::mt19937_64;

Eigen::MatrixXd random_spd(Gen& g, Eigen::Index n, double floor = 0.3);

// T tasks with n_t in [min_n, max_n] rows of N(0, 1) features and labels
// containing both classes.
bmtl::MultitaskDataset random_dataset(Gen& g, std::size_t T, Eigen::Index d, int min_n, int max_n);

bmtl::Hyperparameters random_hyper(Gen& g, std::size_t T);

// A valid but otherwise arbitrary variational state.
bmtl::VariationalState random_state(Gen& g, std::size_t T, Eigen::Index d);

bmtl::LatentSample random_latent(Gen& g, std::size_t T, Eigen::Index d);

}  // namespace instances
