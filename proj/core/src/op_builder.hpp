#pragma once

#include <functional>
#include <memory>

#include "ssdd/tensor.hpp"

namespace ssdd::opb {

// Central op constructor: interior nodes inherit requires_grad from their
// inputs and drop the backward closure entirely when nothing upstream needs
// gradients, so inference-only passes retain no tape.
inline Tensor make_op(Shape shape, std::vector<double> value, const char* op,
                      std::initializer_list<Tensor> inputs,
                      std::function<void(detail::Node&)> backward) {
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->op = op;
  bool needs = false;
  for (const Tensor& t : inputs) needs = needs || t.requires_grad();
  if (needs) {
    n->requires_grad = true;
    for (const Tensor& t : inputs) n->inputs.push_back(t.node());
    n->backward = std::move(backward);
  }
  return Tensor::wrap(std::move(n));
}

}  // namespace ssdd::opb
