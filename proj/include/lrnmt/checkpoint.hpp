#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "lrnmt/adam.hpp"
#include "lrnmt/model_build.hpp"

namespace lrnmt {

// Checkpoint errors are distinct so callers can tell a malformed file from a
// structurally incompatible one.
struct CheckpointError : IoError {
  using IoError::IoError;
};
struct CheckpointFormatError : CheckpointError {
  using CheckpointError::CheckpointError;
};
struct CheckpointIntegrityError : CheckpointError {
  using CheckpointError::CheckpointError;
};
struct CheckpointMissingTensorError : CheckpointError {
  using CheckpointError::CheckpointError;
};
struct CheckpointShapeError : CheckpointError {
  using CheckpointError::CheckpointError;
};

namespace detail {

template <typename T>
constexpr const char* dtype_name() {
  if constexpr (std::is_same_v<T, float>) return "f32";
  else return "f64";
}

struct TensorEntry {
  std::string name;
  std::string dtype;
  Shape shape;
  std::int64_t offset = 0;
};

}  // namespace detail

// File layout (version 1):
//   line 1:  "lrnmt-checkpoint v1"
//   header:  key = value lines (meta.*, model.*, scheme.*, optim.*)
//   then:    "tensors <count>" followed by one line per tensor:
//            "tensor <name> <dtype> <rank> <dims...> <byte-offset>"
//   then:    "payload <bytes>" and the raw little-endian IEEE-754 payload.
// Writes go to a temp file renamed into place.
template <typename T>
void save_checkpoint(SeqModel<T>& model, const Adam<T>* optimizer, std::int64_t step,
                     const std::string& path) {
  auto params = model.params();

  KvDoc header;
  header.set_int("meta.step", step);
  header.set("meta.dtype", detail::dtype_name<T>());
  model.config().to_doc(header);
  model.scheme().to_doc(header);
  header.set_bool("optim.present", optimizer != nullptr);
  if (optimizer) {
    header.set_int("optim.steps", optimizer->step_count());
    header.set_double("optim.beta1", optimizer->options().beta1);
    header.set_double("optim.beta2", optimizer->options().beta2);
    header.set_double("optim.eps", optimizer->options().eps);
  }

  struct Block {
    std::string name, dtype;
    Shape shape;
    const void* data;
    std::size_t bytes;
  };
  std::vector<Block> blocks;
  for (auto& p : params)
    blocks.push_back({p.name, detail::dtype_name<T>(), p.tensor->shape(), p.tensor->data(),
                      static_cast<std::size_t>(p.tensor->size()) * sizeof(T)});
  if (optimizer) {
    auto* opt = const_cast<Adam<T>*>(optimizer);
    for (auto& [name, buf] : opt->moment1())
      blocks.push_back({"optim.m." + name, "f64", {static_cast<std::int64_t>(buf.size())},
                        buf.data(), buf.size() * sizeof(double)});
    for (auto& [name, buf] : opt->moment2())
      blocks.push_back({"optim.v." + name, "f64", {static_cast<std::int64_t>(buf.size())},
                        buf.data(), buf.size() * sizeof(double)});
  }

  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + tmp);
    out << "lrnmt-checkpoint v1\n";
    out << header.emit();
    out << "tensors " << blocks.size() << "\n";
    std::int64_t offset = 0;
    for (const auto& b : blocks) {
      out << "tensor " << b.name << " " << b.dtype << " " << b.shape.size();
      for (auto d : b.shape) out << " " << d;
      out << " " << offset << "\n";
      offset += static_cast<std::int64_t>(b.bytes);
    }
    out << "payload " << offset << "\n";
    for (const auto& b : blocks) out.write(static_cast<const char*>(b.data), static_cast<std::streamsize>(b.bytes));
    if (!out) throw IoError("failed writing checkpoint payload: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

template <typename T>
struct LoadedCheckpoint {
  std::unique_ptr<SeqModel<T>> model;
  Adam<T> optimizer;
  bool has_optimizer = false;
  std::int64_t step = 0;
  KvDoc header;
};

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "lrnmt-checkpoint v1")
    throw CheckpointFormatError("not a checkpoint file (bad magic): " + path);

  std::string header_text;
  std::vector<detail::TensorEntry> entries;
  std::int64_t payload_bytes = -1;
  std::size_t tensor_count = 0;
  while (std::getline(in, line)) {
    if (line.rfind("tensors ", 0) == 0) {
      tensor_count = static_cast<std::size_t>(std::stoll(line.substr(8)));
      for (std::size_t i = 0; i < tensor_count; ++i) {
        if (!std::getline(in, line) || line.rfind("tensor ", 0) != 0)
          throw CheckpointFormatError("truncated tensor table in " + path);
        std::istringstream ls(line);
        std::string tag;
        detail::TensorEntry e;
        int rank = 0;
        ls >> tag >> e.name >> e.dtype >> rank;
        for (int d = 0; d < rank; ++d) {
          std::int64_t v = 0;
          ls >> v;
          e.shape.push_back(v);
        }
        ls >> e.offset;
        if (!ls) throw CheckpointFormatError("malformed tensor line in " + path + ": " + line);
        entries.push_back(std::move(e));
      }
      if (!std::getline(in, line) || line.rfind("payload ", 0) != 0)
        throw CheckpointFormatError("missing payload marker in " + path);
      payload_bytes = std::stoll(line.substr(8));
      break;
    }
    header_text += line;
    header_text += "\n";
  }
  if (payload_bytes < 0) throw CheckpointFormatError("missing tensor table in " + path);

  KvDoc header = KvDoc::parse(header_text);
  if (header.get_or("meta.dtype", "?") != detail::dtype_name<T>())
    throw CheckpointFormatError("checkpoint dtype " + header.get_or("meta.dtype", "?") +
                                " does not match requested " + detail::dtype_name<T>());

  std::vector<char> payload(static_cast<std::size_t>(payload_bytes));
  in.read(payload.data(), payload_bytes);
  if (in.gcount() != payload_bytes)
    throw CheckpointIntegrityError("checkpoint payload truncated: expected " +
                                   std::to_string(payload_bytes) + " bytes, got " +
                                   std::to_string(in.gcount()));

  LoadedCheckpoint<T> out;
  out.header = header;
  out.step = header.get_int_or("meta.step", 0);
  ModelConfig cfg = ModelConfig::from_doc(header);
  FactorizationScheme scheme = FactorizationScheme::from_doc(header);
  out.model = build_model<T>(cfg, scheme, 0);

  auto read_block = [&](const detail::TensorEntry& e, void* dst, std::size_t bytes) {
    if (e.offset < 0 || e.offset + static_cast<std::int64_t>(bytes) > payload_bytes)
      throw CheckpointIntegrityError("tensor " + e.name + " extends past payload");
    std::memcpy(dst, payload.data() + e.offset, bytes);
  };

  std::map<std::string, const detail::TensorEntry*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e;

  for (auto& p : out.model->params()) {
    auto it = by_name.find(p.name);
    if (it == by_name.end())
      throw CheckpointMissingTensorError("checkpoint is missing tensor " + p.name);
    const auto& e = *it->second;
    if (e.shape != p.tensor->shape())
      throw CheckpointShapeError("tensor " + p.name + " has shape " + shape_str(e.shape) +
                                 " but the model expects " + shape_str(p.tensor->shape()));
    read_block(e, p.tensor->data(), static_cast<std::size_t>(p.tensor->size()) * sizeof(T));
  }

  out.has_optimizer = header.get_bool_or("optim.present", false);
  if (out.has_optimizer) {
    AdamOptions opts;
    opts.beta1 = header.get_double_or("optim.beta1", opts.beta1);
    opts.beta2 = header.get_double_or("optim.beta2", opts.beta2);
    opts.eps = header.get_double_or("optim.eps", opts.eps);
    out.optimizer = Adam<T>(opts);
    out.optimizer.set_step_count(header.get_int_or("optim.steps", 0));
    for (const auto& e : entries) {
      bool m1 = e.name.rfind("optim.m.", 0) == 0;
      bool m2 = e.name.rfind("optim.v.", 0) == 0;
      if (!m1 && !m2) continue;
      std::vector<double> buf(static_cast<std::size_t>(numel(e.shape)));
      read_block(e, buf.data(), buf.size() * sizeof(double));
      auto& table = m1 ? out.optimizer.moment1() : out.optimizer.moment2();
      table[e.name.substr(8)] = std::move(buf);
    }
  }
  return out;
}

}  // namespace lrnmt
