#ifndef MCNF_CHECKPOINT_HPP
#define MCNF_CHECKPOINT_HPP

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "mcnf/layers.hpp"

namespace mcnf {

// Checkpoint format: a text header carrying the layer plan and seed,
// followed by row-major parameter arrays as hexfloats so the round trip
// is bit-exact.
//
//   mcnf-checkpoint 1
//   seed <u64>
//   layers <n>
//   <plan line per layer>
//   block <count>
//   <hexfloat per line>
//   ...
//   end

namespace detail {

inline std::string to_hexfloat(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%a", v);
  return std::string(buf);
}

inline double from_hexfloat(const std::string& s) {
  return std::strtod(s.c_str(), nullptr);
}

}  // namespace detail

inline void save_network(std::ostream& os, Network& net,
                         std::uint64_t seed) {
  os << "mcnf-checkpoint 1\n";
  os << "seed " << seed << "\n";
  const auto plan = net.plan();
  os << "layers " << plan.size() << "\n";
  for (const auto& line : plan) os << line << "\n";
  for (std::size_t i = 0; i < net.size(); ++i) {
    for (auto* blk : net.layer(i).param_blocks()) {
      os << "block " << blk->size() << "\n";
      for (double v : *blk) os << detail::to_hexfloat(v) << "\n";
    }
    for (auto* blk : net.layer(i).state_blocks()) {
      os << "block " << blk->size() << "\n";
      for (double v : *blk) os << detail::to_hexfloat(v) << "\n";
    }
  }
  os << "end\n";
}

inline void save_network(const std::string& path, Network& net,
                         std::uint64_t seed) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open checkpoint for write: " + path);
  save_network(os, net, seed);
}

// Rebuilds the network from the stored plan and fills in parameters.
inline Network load_network(std::istream& is, std::uint64_t* seed_out = nullptr) {
  std::string tag;
  int version = 0;
  is >> tag >> version;
  if (tag != "mcnf-checkpoint" || version != 1)
    throw std::runtime_error("not an mcnf checkpoint");
  std::uint64_t seed = 0;
  is >> tag >> seed;
  if (tag != "seed") throw std::runtime_error("checkpoint: missing seed");
  if (seed_out) *seed_out = seed;
  std::size_t nlayers = 0;
  is >> tag >> nlayers;
  if (tag != "layers") throw std::runtime_error("checkpoint: missing layers");
  std::getline(is, tag);  // eat rest of line

  Network net;
  Rng dummy = make_rng(0);
  for (std::size_t i = 0; i < nlayers; ++i) {
    std::string line;
    if (!std::getline(is, line))
      throw std::runtime_error("checkpoint: truncated plan");
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "dense") {
      std::size_t in = 0, out = 0;
      ls >> in >> out;
      net.add<DenseLayer>(in, out, dummy, true);
    } else if (kind == "relu") {
      net.add<ReluLayer>();
    } else if (kind == "dropout") {
      double rate = 0.0;
      ls >> rate;
      net.add<DropoutLayer>(rate);
    } else if (kind == "batchnorm") {
      std::size_t w = 0;
      double mom = 0.1, eps = 1e-5;
      ls >> w >> mom >> eps;
      net.add<BatchNormLayer>(w, mom, eps);
    } else {
      throw std::runtime_error("checkpoint: unknown layer kind '" + kind + "'");
    }
  }
  for (std::size_t i = 0; i < net.size(); ++i) {
    auto blocks = net.layer(i).param_blocks();
    for (auto* blk : net.layer(i).state_blocks()) blocks.push_back(blk);
    for (auto* blk : blocks) {
      std::string kw;
      std::size_t count = 0;
      is >> kw >> count;
      if (kw != "block" || count != blk->size())
        throw std::runtime_error("checkpoint: block shape mismatch");
      for (std::size_t j = 0; j < count; ++j) {
        std::string v;
        is >> v;
        (*blk)[j] = detail::from_hexfloat(v);
      }
    }
  }
  std::string kw;
  is >> kw;
  if (kw != "end") throw std::runtime_error("checkpoint: missing end marker");
  return net;
}

inline Network load_network(const std::string& path,
                            std::uint64_t* seed_out = nullptr) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  return load_network(is, seed_out);
}

}  // namespace mcnf

#endif
