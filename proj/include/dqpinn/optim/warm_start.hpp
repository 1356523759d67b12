#pragma once

#include <cstdint>

#include "dqpinn/errors.hpp"
#include "dqpinn/pinn/model.hpp"

namespace dqpinn::optim {

// Initial guess for the next subdomain from the previous subdomain's parameters. With a different feature map,
// every layer of matching shape is copied, the time-feature columns of the input layer are redrawn from `seed`,
// and the occupation columns and input bias are kept.
inline pinn::Model warm_start_transfer(const pinn::Model& prev, double t_start, double t_end,
                                       const pinn::FeatureMap& features, std::uint64_t seed) {
  if (!(t_end > t_start)) throw ConfigError("warm start: empty subdomain interval");
  pinn::Model next = prev;
  next.t_start = t_start;
  next.t_end = t_end;
  if (features == prev.features) return next;

  pinn::Shape shape = prev.shape;
  shape.n_features = static_cast<int>(features.size());
  const pinn::Model fresh = pinn::init_model(shape, features, seed);
  const int nb = shape.n_bits;
  next.shape = shape;
  next.features = features;
  next.W[0] = fresh.W[0];
  next.W[0].leftCols(nb) = prev.W[0].leftCols(nb);
  next.b[0] = prev.b[0];
  return next;
}

// Architecture check used before transferring a checkpoint into a configured network.
inline void require_compatible(const pinn::Shape& a, const pinn::Shape& b) {
  if (a.n_bits != b.n_bits || a.hidden != b.hidden || a.layers != b.layers)
    throw ConfigError("warm start: architecture mismatch beyond the input layer");
}

}  // namespace dqpinn::optim
