#ifndef MIMOWF_NETWORK_IO_HPP
#define MIMOWF_NETWORK_IO_HPP

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mimowf/channel.hpp"
#include "mimowf/network.hpp"

namespace mimowf {

// JSON topology schema
// {
//   "sources":      [ {"antennas": 4}, ... ],
//   "destinations": [ {"antennas": 4, "noise_sigma2": 1.0 | "noise": "<matrix>"} ],
//   "signals":      [ {"source": 0}, ... ],
//   "links": [
//     {"source": 0, "destination": 0, "desired_signal": 0,
//      "channel": "<matrix text>" | {"file": "h.mat"} |
//                 {"kronecker": {"r_t":0.4,"r_r":0.5,"sigma_e2":0.05,"seed":1}},
//      "r_t": "<matrix text>", "r_r": "<matrix text>"}            // optional
//   ],
//   "constraints": [
//     {"source": 0, "per_antenna": [1.6, 1.2, 0.8, 0.4]} |
//     {"source": 0, "omega": "<matrix text>", "p": 2.0}
//   ]
// }
// Matrices use the repo-wide text format ("m n" header then re+imj rows).
// A kronecker channel spec yields the estimated channel and scaled error
// factors; explicit r_t/r_r entries override them.

namespace io_detail {

inline CMat matrix_from_json(const nlohmann::json& j) {
  if (j.is_string()) return parse_matrix(j.get<std::string>());
  if (j.is_object() && j.contains("file")) {
    std::ifstream in(j["file"].get<std::string>());
    if (!in) throw InvalidInput("cannot open matrix file " +
                                j["file"].get<std::string>());
    return parse_matrix(in);
  }
  throw InvalidInput("matrix entries must be inline text or a file reference");
}

}  // namespace io_detail

inline NetworkTopology topology_from_json(const nlohmann::json& j) {
  NetworkTopology net;
  net.n_sources = static_cast<int>(j.at("sources").size());
  net.n_destinations = static_cast<int>(j.at("destinations").size());

  std::vector<int> dest_antennas;
  for (const auto& d : j.at("destinations")) {
    const int n = d.at("antennas").get<int>();
    dest_antennas.push_back(n);
    if (d.contains("noise"))
      net.noise.push_back(hermitize(io_detail::matrix_from_json(d["noise"])));
    else
      net.noise.push_back(d.value("noise_sigma2", 1.0) *
                          CMat::Identity(n, n));
  }

  for (const auto& s : j.at("signals"))
    net.signals.push_back({s.at("source").get<int>()});

  net.constraints.assign(net.n_sources, {});
  for (const auto& c : j.at("constraints")) {
    const int s = c.at("source").get<int>();
    if (s < 0 || s >= net.n_sources)
      throw InvalidInput("constraint references an undeclared source");
    if (c.contains("per_antenna")) {
      const auto limits = c["per_antenna"].get<std::vector<double>>();
      RVec v(limits.size());
      for (std::size_t i = 0; i < limits.size(); ++i) v(i) = limits[i];
      for (auto& pc : per_antenna_constraints(v))
        net.constraints[s].push_back(pc);
    } else {
      net.constraints[s].push_back(
          {hermitize(io_detail::matrix_from_json(c.at("omega"))),
           c.at("p").get<double>()});
    }
  }

  for (const auto& l : j.at("links")) {
    LinkSpec link;
    link.source = l.at("source").get<int>();
    link.dest = l.at("destination").get<int>();
    link.desired_signal = l.value("desired_signal", -1);
    const auto& ch = l.at("channel");
    if (ch.is_object() && ch.contains("kronecker")) {
      const auto& k = ch["kronecker"];
      KroneckerSpec spec;
      spec.r_t = k.value("r_t", 0.0);
      spec.r_r = k.value("r_r", 0.0);
      spec.sigma_e2 = k.value("sigma_e2", 0.0);
      spec.seed = k.value("seed", 0ull);
      spec.rx_dim = dest_antennas.at(link.dest);
      spec.tx_dim = k.value("tx", 0);
      if (spec.tx_dim == 0 && !net.constraints[link.source].empty())
        spec.tx_dim =
            static_cast<int>(net.constraints[link.source][0].Omega.rows());
      const GeneratedChannel g = generate_channel(spec);
      link.H_hat = g.H_hat;
      link.R_T = g.R_T;
      link.R_R = g.R_R;
    } else {
      link.H_hat = io_detail::matrix_from_json(ch);
    }
    if (l.contains("r_t")) link.R_T = hermitize(io_detail::matrix_from_json(l["r_t"]));
    if (l.contains("r_r")) link.R_R = hermitize(io_detail::matrix_from_json(l["r_r"]));
    if (l.contains("transmitted_signals"))
      link.transmitted_signals = l["transmitted_signals"].get<std::vector<int>>();
    else  // default: a link carries everything its source emits
      link.transmitted_signals = signals_of_source(net, link.source);
    net.links.push_back(link);
  }
  return net;
}

inline NetworkTopology load_topology(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open topology file " + path);
  nlohmann::json j;
  in >> j;
  return topology_from_json(j);
}

}  // namespace mimowf

#endif  // MIMOWF_NETWORK_IO_HPP
