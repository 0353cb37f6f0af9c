// Copyright 2026 The imc Authors.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>

#include <fmt/format.h>

#include "imc/error.hpp"
#include "imc/runtime.hpp"

namespace imc {

namespace {

template <typename T>
Addr place(Device& dev, const std::vector<T>& values, std::size_t words, const std::string& name) {
  const Addr base = dev.allocate(Region::kNonVolatile, std::max<std::size_t>(words, 1), name);
  for (std::size_t k = 0; k < values.size(); ++k) {
    dev.memory().poke(Region::kNonVolatile, base + static_cast<Addr>(k), static_cast<Word>(values[k]));
  }
  return base;
}

}  // namespace

NetImage NetImage::load(Device& dev, const Network& net, const FixedTensor& input) {
  if (!net.validated()) throw ContractViolation("network must be validated before loading");
  if (input.size() != element_count(net.input_shape)) {
    throw ValidationError(fmt::format("input has {} values, network '{}' expects {}", input.size(), net.name,
                                      element_count(net.input_shape)));
  }
  NetImage img;
  img.input = place(dev, input.data, input.size(), "net.input");

  std::size_t act_words = 1;
  for (const Stage* st : net.stages()) act_words = std::max(act_words, element_count(st->out_shape));
  img.act[0] = dev.allocate(Region::kNonVolatile, act_words, "net.act0");
  img.act[1] = dev.allocate(Region::kNonVolatile, act_words, "net.act1");

  std::size_t s = 0;
  for (const auto& layer : net.layers) {
    for (const auto& st : layer.stages) {
      StageImage si;
      si.index = s;
      si.stage = &st;
      si.layer = layer.name;
      si.plan = plan_stage(st);
      const std::string tag = fmt::format("net.{}.{}", layer.name, s);
      if (st.kind == StageKind::kSparse) {
        si.offsets = place(dev, st.sparse.offsets, st.sparse.offsets.size(), tag + ".offsets");
        si.columns = place(dev, st.sparse.columns, st.sparse.columns.size(), tag + ".columns");
        si.weights = place(dev, st.sparse.values, st.sparse.values.size(), tag + ".values");
      } else {
        si.weights = place(dev, st.weights.data, st.weights.size(), tag + ".weights");
      }
      si.bias = place(dev, st.bias, static_cast<std::size_t>(st.out_channels()), tag + ".bias");
      si.input = s == 0 ? img.input : img.act[(s - 1) % 2];
      si.output = img.act[s % 2];
      std::uint64_t base = 0;
      for (int g = 0; g < si.plan.groups; ++g) {
        si.group_base.push_back(base);
        base += static_cast<std::uint64_t>(si.plan.passes(g)) * si.plan.outputs;
      }
      img.max_outputs = std::max(img.max_outputs, static_cast<std::size_t>(si.plan.outputs));
      img.stages.push_back(std::move(si));
      ++s;
    }
  }
  if (img.stages.empty()) {
    img.output = img.input;
    img.output_words = input.size();
  } else {
    img.output = img.stages.back().output;
    img.output_words = element_count(img.stages.back().stage->out_shape);
  }
  img.output_shape = net.output_shape();
  img.output_scale = net.output_scale();
  return img;
}

FixedTensor NetImage::read_output(const Device& dev) const {
  FixedTensor out(output_shape, output_scale);
  for (std::size_t k = 0; k < output_words; ++k) {
    out.data[k] = static_cast<q15>(dev.memory().peek(Region::kNonVolatile, output + static_cast<Addr>(k)));
  }
  return out;
}

}  // namespace imc
