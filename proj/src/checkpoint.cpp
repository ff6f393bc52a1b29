// Copyright 2026 The sess-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <cmath>
#include <map>
#include <sstream>

#include "sess/detector.hpp"

namespace sess {

namespace {

constexpr const char* kMagic = "sess-forge-checkpoint";

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

[[noreturn]] void fail(std::size_t line, const std::string& what) {
  throw CheckpointError("checkpoint line " + std::to_string(line) + ": " + what);
}

}  // namespace

std::string format_checkpoint(const Checkpoint& ckpt) {
  const DetectorConfig& c = ckpt.config;
  std::ostringstream out;
  out << kMagic << " 1\n";
  out << "config hidden_width=" << c.hidden_width << " proposal_count=" << c.proposal_count
      << " class_count=" << c.class_count << " positive_radius=" << g17(c.positive_radius)
      << " group_radius=" << g17(c.group_radius) << " group_size=" << c.group_size
      << " inside_margin=" << g17(c.inside_margin) << " w_objectness=" << g17(c.loss_weights.objectness)
      << " w_center=" << g17(c.loss_weights.center) << " w_size=" << g17(c.loss_weights.size)
      << " w_class=" << g17(c.loss_weights.cls) << '\n';
  const auto& slots = ckpt.params.layout.slots();
  out << "tensors " << slots.size() << '\n';
  for (const auto& s : slots) out << s.name << ' ' << s.offset << ' ' << s.length << '\n';
  out << "values " << ckpt.params.values.size() << '\n';
  for (double v : ckpt.params.values) out << g17(v) << '\n';
  return out.str();
}

Checkpoint parse_checkpoint(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  auto next = [&](const char* what) {
    if (!std::getline(in, line)) fail(line_no + 1, std::string("unexpected end of file, expected ") + what);
    ++line_no;
    return std::istringstream(line);
  };

  {
    auto ls = next("header");
    std::string magic;
    int version = 0;
    if (!(ls >> magic >> version) || magic != kMagic || version != 1) fail(line_no, "not a version 1 checkpoint");
  }

  Checkpoint ckpt;
  {
    auto ls = next("config line");
    std::string tag;
    ls >> tag;
    if (tag != "config") fail(line_no, "expected 'config'");
    std::map<std::string, std::string> kv;
    std::string tok;
    while (ls >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) fail(line_no, "malformed config entry '" + tok + "'");
      kv[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    auto get = [&](const char* key) -> const std::string& {
      auto it = kv.find(key);
      if (it == kv.end()) fail(line_no, std::string("missing config key '") + key + "'");
      return it->second;
    };
    try {
      DetectorConfig& c = ckpt.config;
      c.hidden_width = std::stoi(get("hidden_width"));
      c.proposal_count = std::stoi(get("proposal_count"));
      c.class_count = std::stoi(get("class_count"));
      c.positive_radius = std::stod(get("positive_radius"));
      c.group_radius = std::stod(get("group_radius"));
      c.group_size = std::stoi(get("group_size"));
      c.inside_margin = std::stod(get("inside_margin"));
      c.loss_weights.objectness = std::stod(get("w_objectness"));
      c.loss_weights.center = std::stod(get("w_center"));
      c.loss_weights.size = std::stod(get("w_size"));
      c.loss_weights.cls = std::stod(get("w_class"));
      c.validate();
    } catch (const CheckpointError&) {
      throw;
    } catch (const std::exception& e) {
      fail(line_no, std::string("bad config value: ") + e.what());
    }
  }

  std::size_t tensor_count = 0;
  {
    auto ls = next("tensor count");
    std::string tag;
    if (!(ls >> tag >> tensor_count) || tag != "tensors") fail(line_no, "expected 'tensors <count>'");
  }
  // The layout is implied by the config; the listed map must agree with it.
  const ParamLayout layout(ckpt.config);
  if (tensor_count != layout.slots().size()) fail(line_no, "tensor count does not match the detector config");
  for (const auto& expected : layout.slots()) {
    auto ls = next("tensor entry");
    TensorSlot slot;
    if (!(ls >> slot.name >> slot.offset >> slot.length)) fail(line_no, "malformed tensor entry");
    if (slot.name != expected.name || slot.offset != expected.offset || slot.length != expected.length)
      fail(line_no, "tensor '" + slot.name + "' does not match the detector config layout");
  }

  std::size_t value_count = 0;
  {
    auto ls = next("value count");
    std::string tag;
    if (!(ls >> tag >> value_count) || tag != "values") fail(line_no, "expected 'values <count>'");
    if (value_count != layout.total()) fail(line_no, "value count does not match layout total");
  }
  ckpt.params = ParamVector(layout);
  for (std::size_t i = 0; i < value_count; ++i) {
    next("parameter value");
    char* end = nullptr;
    const double v = std::strtod(line.c_str(), &end);
    if (end == line.c_str() || *end != '\0' || !std::isfinite(v)) fail(line_no, "bad parameter value");
    ckpt.params.values[i] = v;
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  out << format_checkpoint(ckpt);
  if (!out) throw CheckpointError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

}  // namespace sess
