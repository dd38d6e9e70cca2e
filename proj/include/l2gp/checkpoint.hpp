#ifndef L2GP_CHECKPOINT_HPP_
#define L2GP_CHECKPOINT_HPP_

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "l2gp/error.hpp"
#include "l2gp/model.hpp"

/*
 * Checkpoint text format, one record per line:
 *
 *   l2gp-checkpoint 1
 *   spec <input_dim> <n_classes> <input_bn 0|1> <seed> <n_hidden> <w_0> ... <w_n-1>
 *   bn_settings <eps> <momentum>
 *   tensor <group> <name> <rank> <d_0> ... <d_r-1> <v_0> ... <v_m-1>
 *
 * Groups are W, H1, H2 (trainable, in parameter order) and bn.mean / bn.var
 * (one record per BN layer, named by layer index). Reals use %.17g, which
 * round-trips doubles exactly, so identical models give identical bytes.
 */
namespace l2gp {

namespace detail {

inline void write_real(std::ostream& os, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  os << buf;
}

inline void write_tensor(std::ostream& os, const std::string& group, const std::string& name, const Tensor& t) {
  os << "tensor " << group << ' ' << name << ' ' << t.rank();
  for (std::size_t d : t.shape()) os << ' ' << d;
  for (double v : t.data()) {
    os << ' ';
    write_real(os, v);
  }
  os << '\n';
}

}  // namespace detail

inline std::string checkpoint_to_string(const DualHeadModel& m) {
  std::ostringstream os;
  os << "l2gp-checkpoint 1\n";
  os << "spec " << m.spec.input_dim << ' ' << m.spec.n_classes << ' ' << (m.spec.input_bn ? 1 : 0) << ' '
     << m.spec.seed << ' ' << m.spec.hidden.size();
  for (std::size_t w : m.spec.hidden) os << ' ' << w;
  os << "\nbn_settings ";
  detail::write_real(os, m.bn_settings.eps);
  os << ' ';
  detail::write_real(os, m.bn_settings.momentum);
  os << '\n';
  const std::pair<const char*, const ParamSet*> groups[] = {{"W", &m.W}, {"H1", &m.H1}, {"H2", &m.H2}};
  for (const auto& [group, set] : groups) {
    for (std::size_t i = 0; i < set->size(); ++i) detail::write_tensor(os, group, set->name(i), (*set)[i].value());
  }
  for (std::size_t l = 0; l < m.bn.size(); ++l) {
    detail::write_tensor(os, "bn.mean", std::to_string(l), m.bn[l].mean);
    detail::write_tensor(os, "bn.var", std::to_string(l), m.bn[l].var);
  }
  return os.str();
}

inline DualHeadModel checkpoint_from_string(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto next_line = [&](const char* what) {
    if (!std::getline(in, line)) throw ParseError(std::string("unexpected end of checkpoint, expected ") + what, lineno + 1);
    ++lineno;
    return std::istringstream(line);
  };

  {
    auto ls = next_line("header");
    std::string magic;
    int version = 0;
    if (!(ls >> magic >> version) || magic != "l2gp-checkpoint" || version != 1) {
      throw ParseError("not an l2gp checkpoint", lineno);
    }
  }
  ModelSpec spec;
  {
    auto ls = next_line("spec");
    std::string tag;
    int input_bn = 0;
    std::size_t n_hidden = 0;
    if (!(ls >> tag >> spec.input_dim >> spec.n_classes >> input_bn >> spec.seed >> n_hidden) || tag != "spec") {
      throw ParseError("malformed spec record", lineno);
    }
    spec.input_bn = input_bn != 0;
    spec.hidden.assign(n_hidden, 0);
    for (auto& w : spec.hidden) {
      if (!(ls >> w)) throw ParseError("malformed hidden widths", lineno);
    }
  }
  DualHeadModel m = build_model(spec);
  {
    auto ls = next_line("bn_settings");
    std::string tag;
    if (!(ls >> tag >> m.bn_settings.eps >> m.bn_settings.momentum) || tag != "bn_settings") {
      throw ParseError("malformed bn_settings record", lineno);
    }
  }

  auto read_tensor = [&](const std::string& group, const std::string& name, const Tensor::Shape& expect) {
    auto ls = next_line("tensor");
    std::string tag, g, n;
    std::size_t rank = 0;
    if (!(ls >> tag >> g >> n >> rank) || tag != "tensor") throw ParseError("malformed tensor record", lineno);
    if (g != group || n != name) throw ParseError("expected tensor " + group + " " + name + ", got " + g + " " + n, lineno);
    Tensor::Shape shape(rank);
    for (auto& d : shape) {
      if (!(ls >> d)) throw ParseError("malformed tensor shape", lineno);
    }
    if (shape != expect) throw ParseError("shape mismatch for " + name, lineno);
    std::vector<double> data(Tensor::element_count(shape));
    for (auto& v : data) {
      std::string tok;
      if (!(ls >> tok)) throw ParseError("truncated tensor values for " + name, lineno);
      char* end = nullptr;
      v = std::strtod(tok.c_str(), &end);
      if (end != tok.c_str() + tok.size()) throw ParseError("bad real '" + tok + "'", lineno);
    }
    return Tensor(shape, std::move(data));
  };

  for (auto [group, set] : {std::pair<const char*, ParamSet*>{"W", &m.W}, {"H1", &m.H1}, {"H2", &m.H2}}) {
    for (std::size_t i = 0; i < set->size(); ++i) {
      (*set)[i].assign(read_tensor(group, set->name(i), (*set)[i].shape()));
    }
  }
  for (std::size_t l = 0; l < m.bn.size(); ++l) {
    m.bn[l].mean = read_tensor("bn.mean", std::to_string(l), m.bn[l].mean.shape());
    m.bn[l].var = read_tensor("bn.var", std::to_string(l), m.bn[l].var.shape());
  }
  return m;
}

inline void save_checkpoint(const DualHeadModel& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint " + path.string());
  out << checkpoint_to_string(m);
}

inline DualHeadModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_string(ss.str());
}

}  // namespace l2gp

#endif  // L2GP_CHECKPOINT_HPP_
