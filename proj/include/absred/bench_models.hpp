#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "absred/errors.hpp"
#include "absred/lft.hpp"
#include "absred/ss_io.hpp"
#include "absred/state_space.hpp"

namespace absred {

// ============================================================================
// Deterministic generator of coupled structural-dynamics-style benchmarks:
// components in modal form with collocated force-in/displacement-out channels,
// coupled by a static symmetric spring matrix, with selected external I/O.
// ============================================================================

struct ComponentSpec {
  std::string name;
  int n_modes = 1;
  double freq_lo_hz = 10.0;
  double freq_hi_hz = 1000.0;
  double damping = 0.05;
  int io_points = 1;
  // Mass-normalized mode-shape magnitude at the channels. Structures attached
  // through stiff springs have small modal displacements at the interface
  // points; this sets the component's interface stiffness relative to the
  // springs and with it the conditioning of the coupled model.
  double mode_scale = 1.0;
  // Exponential decay of mode participation with frequency order: higher
  // modes localize away from the sampled points. Governs how fast the Hankel
  // spectrum falls off, i.e. how reducible the component is.
  double mode_decay = 0.0;
  // The last free_points channels carry no springs or external I/O in the
  // reference layouts; modes alternate between interface-dominant and
  // free-dominant shapes with the given contrast, so open-loop and coupled
  // relevance rankings genuinely disagree (free sensor points see modes the
  // interconnection never excites).
  int free_points = 0;
  double shape_contrast = 1.0;

  void validate() const {
    if (n_modes < 1 || io_points < 1)
      throw ParseError("ComponentSpec '" + name + "': counts must be positive");
    if (!(freq_lo_hz > 0.0) || !(freq_hi_hz > freq_lo_hz))
      throw ParseError("ComponentSpec '" + name + "': need 0 < freq_lo < freq_hi");
    if (!(damping > 0.0) || !(damping < 1.0))
      throw ParseError("ComponentSpec '" + name + "': damping must be in (0,1)");
    if (!(mode_scale > 0.0))
      throw ParseError("ComponentSpec '" + name + "': mode_scale must be positive");
    if (free_points < 0 || free_points >= io_points)
      throw ParseError("ComponentSpec '" + name + "': free_points must be in [0, io_points)");
    if (!(shape_contrast >= 1.0))
      throw ParseError("ComponentSpec '" + name + "': shape_contrast must be >= 1");
  }
};

/// Modal-form component: n_modes second-order modes, mode shapes sampled at
/// io_points collocated channels. Transfer matrix is symmetric by construction.
inline StateSpace generate_component(const ComponentSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g;

  const int q = spec.n_modes, io = spec.io_points;
  std::vector<double> w(q);
  const double wlo = 2.0 * M_PI * spec.freq_lo_hz, whi = 2.0 * M_PI * spec.freq_hi_hz;
  // Log-even spacing with jitter: structural eigenfrequencies spread over the
  // range without accidental near-coincidences (which would entangle the
  // modal pairs in any Gramian-based coordinates).
  for (int k = 0; k < q; ++k) {
    const double t = (k + 0.5 + 0.6 * (u(rng) - 0.5)) / q;
    w[k] = wlo * std::pow(whi / wlo, t);
  }
  std::sort(w.begin(), w.end());

  Matrix A = Matrix::Zero(2 * q, 2 * q);
  Matrix B = Matrix::Zero(2 * q, io);
  Matrix C = Matrix::Zero(io, 2 * q);
  const int n_free = spec.free_points;
  const int n_int = io - n_free;
  for (int k = 0; k < q; ++k) {
    const double participation =
        spec.mode_scale * std::exp(-spec.mode_decay * static_cast<double>(k) / q);
    const bool free_dominant = (n_free > 0) && (k % 2 == 1);
    const double int_scale = free_dominant ? 1.0 / spec.shape_contrast : 1.0;
    const double free_scale = free_dominant ? spec.shape_contrast : 1.0 / spec.shape_contrast;
    Vector phi(io);
    for (int j = 0; j < io; ++j) {
      const double chan = (j < n_int) ? int_scale : free_scale;
      phi[j] = participation * chan * g(rng);
    }
    A(2 * k, 2 * k + 1) = 1.0;
    A(2 * k + 1, 2 * k) = -w[k] * w[k];
    A(2 * k + 1, 2 * k + 1) = -2.0 * spec.damping * w[k];
    B.row(2 * k + 1) = phi.transpose();
    C.col(2 * k) = phi;
  }
  return StateSpace(A, B, C, Matrix::Zero(io, io));
}

// ============================================================================
// Scenario description and assembly
// ============================================================================

struct SpringLink {
  std::string a, b;  // "component.point"; b empty for ground springs
  double stiffness = 0.0;
};

struct ScenarioConfig {
  std::uint64_t seed = 1;
  std::vector<ComponentSpec> components;
  std::vector<SpringLink> springs;          // component-to-component and ground
  std::vector<std::string> external_io;     // collocated external channels
};

struct InterconnectScenario {
  std::vector<StateSpace> components;
  std::vector<std::string> names;
  std::vector<Eigen::Index> channel_offset;  // per component, into global channels
  Matrix coupling;                           // symmetric stiffness matrix K
  std::vector<Eigen::Index> external;        // global channel indices
  std::uint64_t seed = 0;
  ScenarioConfig config;

  Eigen::Index total_channels() const { return coupling.rows(); }
  Eigen::Index total_order() const {
    Eigen::Index n = 0;
    for (const auto& c : components) n += c.n();
    return n;
  }
  Eigen::Index component_index(const std::string& name) const {
    for (std::size_t j = 0; j < names.size(); ++j)
      if (names[j] == name) return static_cast<Eigen::Index>(j);
    throw ParseError("scenario: unknown component '" + name + "'");
  }
  Eigen::Index state_offset(Eigen::Index j) const {
    Eigen::Index n = 0;
    for (Eigen::Index i = 0; i < j; ++i) n += components[i].n();
    return n;
  }
};

namespace detail {

inline std::pair<std::string, int> split_channel_ref(const std::string& ref) {
  const auto dot = ref.rfind('.');
  if (dot == std::string::npos || dot + 1 >= ref.size())
    throw ParseError("scenario: channel reference '" + ref + "' must be component.point");
  int pt;
  try {
    pt = std::stoi(ref.substr(dot + 1));
  } catch (const std::exception&) {
    throw ParseError("scenario: bad point index in '" + ref + "'");
  }
  return {ref.substr(0, dot), pt};
}

}  // namespace detail

inline StateSpace assemble(const InterconnectScenario& scn,
                           const std::vector<StateSpace>* replace = nullptr);

/// Deterministic scenario from the config's seed; component seeds are derived
/// from the scenario seed and the component index.
inline InterconnectScenario build_scenario(const ScenarioConfig& cfg,
                                           double stability_margin = 1e-8) {
  if (cfg.components.empty()) throw ParseError("build_scenario: no components");
  InterconnectScenario scn;
  scn.seed = cfg.seed;
  scn.config = cfg;

  Eigen::Index channels = 0;
  for (std::size_t j = 0; j < cfg.components.size(); ++j) {
    const auto& spec = cfg.components[j];
    spec.validate();
    scn.names.push_back(spec.name);
    scn.channel_offset.push_back(channels);
    scn.components.push_back(
        generate_component(spec, cfg.seed * 1000003ull + 17ull * (j + 1)));
    channels += spec.io_points;
  }

  auto channel_of = [&](const std::string& ref) -> Eigen::Index {
    auto [name, pt] = detail::split_channel_ref(ref);
    const Eigen::Index j = scn.component_index(name);
    if (pt < 0 || pt >= scn.components[j].m())
      throw ParseError("scenario: point out of range in '" + ref + "'");
    return scn.channel_offset[j] + pt;
  };

  Matrix K = Matrix::Zero(channels, channels);
  for (const auto& link : cfg.springs) {
    if (!(link.stiffness > 0.0))
      throw ParseError("scenario: spring stiffness must be positive");
    const Eigen::Index ia = channel_of(link.a);
    if (link.b.empty()) {  // ground spring
      K(ia, ia) += link.stiffness;
    } else {
      const Eigen::Index ib = channel_of(link.b);
      if (ia == ib) throw ParseError("scenario: spring endpoints coincide");
      K(ia, ia) += link.stiffness;
      K(ib, ib) += link.stiffness;
      K(ia, ib) -= link.stiffness;
      K(ib, ia) -= link.stiffness;
    }
  }
  scn.coupling = K;

  for (const auto& ref : cfg.external_io) scn.external.push_back(channel_of(ref));
  if (scn.external.empty()) throw ParseError("scenario: no external I/O selected");

  StateSpace full = assemble(scn);
  const double mre = max_real_eig(full.A);
  if (!(mre < -stability_margin))
    throw UnstableScenario(
        "build_scenario: assembled model not stable within margin (max Re = " +
        std::to_string(mre) + "); choose a different seed or softer springs");
  return scn;
}

/// Assembles the interconnected model on the external channels, optionally
/// substituting replacement component models (same I/O sizes). State ordering
/// is the component concatenation; ISBR's sub-Gramian extraction relies on it.
inline StateSpace assemble(const InterconnectScenario& scn,
                           const std::vector<StateSpace>* replace) {
  const std::vector<StateSpace>& comps = replace ? *replace : scn.components;
  if (comps.size() != scn.components.size())
    throw DimensionMismatch("assemble: component count mismatch");
  const Eigen::Index ch = scn.total_channels();
  const Eigen::Index mC = static_cast<Eigen::Index>(scn.external.size());
  Matrix Ry = -scn.coupling;
  Matrix Rw = Matrix::Zero(ch, mC);
  Matrix Sy = Matrix::Zero(mC, ch);
  for (Eigen::Index k = 0; k < mC; ++k) {
    Rw(scn.external[k], k) = 1.0;
    Sy(k, scn.external[k]) = 1.0;
  }
  return interconnect(comps, Ry, Rw, Sy, Matrix::Zero(mC, mC));
}

/// (Sigma_j, E_j): subsystem j and its environment, with E partitioned as
/// [z; u] = E [w; y]. F_l(E_j, Sigma_j) reproduces assemble(scn) exactly.
inline std::pair<StateSpace, PartitionedSystem> environment_of(
    const InterconnectScenario& scn, Eigen::Index j,
    const std::vector<StateSpace>* replace = nullptr) {
  const std::vector<StateSpace>& comps = replace ? *replace : scn.components;
  if (j < 0 || j >= static_cast<Eigen::Index>(comps.size()))
    throw DimensionMismatch("environment_of: component index out of range");

  const Eigen::Index ch = scn.total_channels();
  const Eigen::Index mC = static_cast<Eigen::Index>(scn.external.size());
  const Eigen::Index pj = scn.components[static_cast<std::size_t>(j)].m();
  const Eigen::Index off_j = scn.channel_offset[static_cast<std::size_t>(j)];

  // Global channel indices of j and of the rest (in order).
  std::vector<Eigen::Index> idx_j, idx_r;
  for (Eigen::Index c = 0; c < ch; ++c) {
    if (c >= off_j && c < off_j + pj)
      idx_j.push_back(c);
    else
      idx_r.push_back(c);
  }
  const Eigen::Index chR = static_cast<Eigen::Index>(idx_r.size());

  Matrix Krr(chR, chR), Krj(chR, pj), Kjr(pj, chR), Kjj(pj, pj);
  for (Eigen::Index a = 0; a < chR; ++a) {
    for (Eigen::Index b = 0; b < chR; ++b) Krr(a, b) = scn.coupling(idx_r[a], idx_r[b]);
    for (Eigen::Index b = 0; b < pj; ++b) Krj(a, b) = scn.coupling(idx_r[a], idx_j[b]);
  }
  for (Eigen::Index a = 0; a < pj; ++a) {
    for (Eigen::Index b = 0; b < chR; ++b) Kjr(a, b) = scn.coupling(idx_j[a], idx_r[b]);
    for (Eigen::Index b = 0; b < pj; ++b) Kjj(a, b) = scn.coupling(idx_j[a], idx_j[b]);
  }

  std::vector<StateSpace> rest;
  for (std::size_t i = 0; i < comps.size(); ++i)
    if (static_cast<Eigen::Index>(i) != j) rest.push_back(comps[i]);

  // Environment inputs [w (mC); y (pj)], outputs [z (pC = mC); u (pj forces)].
  Matrix Ry = -Krr;
  Matrix Rw = Matrix::Zero(chR, mC + pj);
  Matrix Sy = Matrix::Zero(mC + pj, chR);
  Matrix Sw = Matrix::Zero(mC + pj, mC + pj);
  // rest forces: -Krr q_R - Krj y + external inputs landing on rest channels
  Rw.rightCols(pj) = -Krj;
  for (Eigen::Index k = 0; k < mC; ++k) {
    const Eigen::Index c = scn.external[k];
    auto it = std::find(idx_r.begin(), idx_r.end(), c);
    if (it != idx_r.end()) {
      Rw(static_cast<Eigen::Index>(it - idx_r.begin()), k) = 1.0;
    }
  }
  // z rows: external displacements (from rest channels or passed through y)
  for (Eigen::Index k = 0; k < mC; ++k) {
    const Eigen::Index c = scn.external[k];
    auto it = std::find(idx_r.begin(), idx_r.end(), c);
    if (it != idx_r.end()) {
      Sy(k, static_cast<Eigen::Index>(it - idx_r.begin())) = 1.0;
    } else {
      Sw(k, mC + (c - off_j)) = 1.0;  // channel sits on component j: z = y there
    }
  }
  // u rows: forces into j = -Kjr q_R - Kjj y + external inputs landing on j
  Sy.bottomRows(pj) = -Kjr;
  Sw.bottomRightCorner(pj, pj) = -Kjj;
  for (Eigen::Index k = 0; k < mC; ++k) {
    const Eigen::Index c = scn.external[k];
    if (c >= off_j && c < off_j + pj) Sw(mC + (c - off_j), k) = 1.0;
  }

  StateSpace Esys = interconnect(rest, Ry, Rw, Sy, Sw);
  PartitionedSystem E(std::move(Esys), mC, pj, mC, pj);
  return {comps[static_cast<std::size_t>(j)], E};
}

// ============================================================================
// Scenario config text format
//   seed = N
//   [component NAME]   with keys n_modes, freq_lo_hz, freq_hi_hz, damping, io_points
//   [coupling]         lines: spring A.i B.j K   |   ground A.i K
//   [external]         lines: io A.i
// ============================================================================

inline ScenarioConfig parse_scenario_config(std::istream& in) {
  ScenarioConfig cfg;
  std::string line, section;
  ComponentSpec* cur = nullptr;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string tok;
    if (!(ls >> tok)) continue;

    auto fail = [&](const std::string& msg) {
      throw ParseError("scenario config line " + std::to_string(lineno) + ": " + msg);
    };

    if (tok == "[component") {
      std::string name;
      if (!(ls >> name) || name.empty() || name.back() != ']')
        fail("expected [component NAME]");
      name.pop_back();
      cfg.components.push_back(ComponentSpec{});
      cfg.components.back().name = name;
      cur = &cfg.components.back();
      section = "component";
      continue;
    }
    if (tok == "[coupling]") {
      section = "coupling";
      cur = nullptr;
      continue;
    }
    if (tok == "[external]") {
      section = "external";
      cur = nullptr;
      continue;
    }

    if (section == "coupling") {
      if (tok == "spring") {
        SpringLink link;
        if (!(ls >> link.a >> link.b >> link.stiffness)) fail("expected: spring A.i B.j K");
        cfg.springs.push_back(link);
      } else if (tok == "ground") {
        SpringLink link;
        if (!(ls >> link.a >> link.stiffness)) fail("expected: ground A.i K");
        cfg.springs.push_back(link);
      } else {
        fail("unknown coupling entry '" + tok + "'");
      }
      continue;
    }
    if (section == "external") {
      if (tok != "io") fail("expected: io A.i");
      std::string ref;
      if (!(ls >> ref)) fail("expected: io A.i");
      cfg.external_io.push_back(ref);
      continue;
    }

    // key = value lines (top level or inside a component section)
    std::string eq, value;
    if (!(ls >> eq >> value) || eq != "=") fail("expected 'key = value'");
    try {
      if (section.empty() && tok == "seed") {
        cfg.seed = std::stoull(value);
      } else if (cur != nullptr) {
        if (tok == "n_modes")
          cur->n_modes = std::stoi(value);
        else if (tok == "freq_lo_hz")
          cur->freq_lo_hz = std::stod(value);
        else if (tok == "freq_hi_hz")
          cur->freq_hi_hz = std::stod(value);
        else if (tok == "damping")
          cur->damping = std::stod(value);
        else if (tok == "io_points")
          cur->io_points = std::stoi(value);
        else if (tok == "mode_scale")
          cur->mode_scale = std::stod(value);
        else if (tok == "mode_decay")
          cur->mode_decay = std::stod(value);
        else if (tok == "free_points")
          cur->free_points = std::stoi(value);
        else if (tok == "shape_contrast")
          cur->shape_contrast = std::stod(value);
        else
          fail("unknown component key '" + tok + "'");
      } else {
        fail("unknown key '" + tok + "'");
      }
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception&) {
      fail("bad value '" + value + "' for key '" + tok + "'");
    }
  }
  return cfg;
}

inline ScenarioConfig load_scenario_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open scenario config: " + path);
  return parse_scenario_config(in);
}

inline void write_scenario_config(std::ostream& out, const ScenarioConfig& cfg) {
  out << "seed = " << cfg.seed << "\n\n";
  for (const auto& c : cfg.components) {
    out << "[component " << c.name << "]\n";
    out << "n_modes = " << c.n_modes << "\n";
    out << "freq_lo_hz = " << format_double(c.freq_lo_hz) << "\n";
    out << "freq_hi_hz = " << format_double(c.freq_hi_hz) << "\n";
    out << "damping = " << format_double(c.damping) << "\n";
    out << "io_points = " << c.io_points << "\n";
    out << "mode_scale = " << format_double(c.mode_scale) << "\n";
    out << "mode_decay = " << format_double(c.mode_decay) << "\n";
    out << "free_points = " << c.free_points << "\n";
    out << "shape_contrast = " << format_double(c.shape_contrast) << "\n\n";
  }
  out << "[coupling]\n";
  for (const auto& s : cfg.springs) {
    if (s.b.empty())
      out << "ground " << s.a << ' ' << format_double(s.stiffness) << "\n";
    else
      out << "spring " << s.a << ' ' << s.b << ' ' << format_double(s.stiffness) << "\n";
  }
  out << "\n[external]\n";
  for (const auto& ref : cfg.external_io) out << "io " << ref << "\n";
}

/// Desk-scale analog of the five-component benchmark: orders (40, 36, 100,
/// 20, 16), plate-to-ground springs, a beam frame linking every component,
/// and two external collocated channels at the thin-plate and bridge
/// interfaces on the frame.
inline ScenarioConfig default_scenario_config(std::uint64_t seed = 42) {
  ScenarioConfig cfg;
  cfg.seed = seed;
  cfg.components = {
      {"thin_plate", 20, 40.0, 1800.0, 0.05, 4, 0.01, 3.0},
      {"thick_plate", 18, 60.0, 2200.0, 0.05, 4, 0.01, 3.0},
      {"beam_frame", 50, 30.0, 1500.0, 0.05, 12, 0.01, 3.0},
      {"bridge", 10, 80.0, 2500.0, 0.05, 6, 0.01, 3.0},
      {"optics_frame", 8, 120.0, 3000.0, 0.05, 4, 0.01, 3.0},
  };
  const double kc = 1e8;
  cfg.springs = {
      {"thin_plate.2", "beam_frame.0", kc},  {"thin_plate.3", "beam_frame.1", kc},
      {"thick_plate.2", "beam_frame.2", kc}, {"thick_plate.3", "beam_frame.3", kc},
      {"bridge.0", "beam_frame.4", kc},      {"bridge.1", "beam_frame.5", kc},
      {"bridge.2", "beam_frame.6", kc},      {"optics_frame.0", "beam_frame.7", kc},
      {"optics_frame.1", "beam_frame.8", kc},
      {"thin_plate.0", "", 1e10},            {"thin_plate.1", "", 1e5},
      {"thick_plate.0", "", 1e10},           {"thick_plate.1", "", 1e5},
  };
  cfg.external_io = {"beam_frame.0", "beam_frame.4"};
  return cfg;
}

}  // namespace absred
