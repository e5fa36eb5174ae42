#pragma once

#include <iosfwd>
#include <string>

#include "gridlearn/grid_model.hpp"
#include "gridlearn/lcpf.hpp"
#include "gridlearn/missing_learner.hpp"

namespace gridlearn {

// Network JSON:
//   {"nodes": [{"id": 1, "role": "substation"|"load"}, ...],
//    "lines": [{"a": 1, "b": 2, "r": 0.01, "x": 0.02, "status": "operational"|"open"}, ...]}
Network read_network(std::istream& in);
void write_network(std::ostream& out, const Network& network);

// Injection JSON, keyed by node id:
//   {"distribution": "gaussian"|"uniform",
//    "loads": [{"id": 2, "mu_p": ..., "mu_q": ..., "var_p": ..., "var_q": ..., "cov_pq": ...}, ...]}
InjectionModel read_injections(std::istream& in, const NodeIndex& index);
void write_injections(std::ostream& out, const InjectionModel& model, const NodeIndex& index);

// {"hidden": [id, ...]}
MissingSpec read_missing_spec(std::istream& in, const NodeIndex& index);
void write_missing_spec(std::ostream& out, const MissingSpec& spec, const NodeIndex& index);

// CSV with header `sample,node,eps,theta`, one row per (sample, load).
// Rows may come in any order; the theta column may be empty for every row.
VoltageSamples read_samples(std::istream& in, const NodeIndex& index);
void write_samples(std::ostream& out, const VoltageSamples& samples, const NodeIndex& index);

/// Forest as a network: its lines operational, nothing open.
Network forest_network(const RadialForest& forest);

/// Loads per substation in the order given by `forest`.
std::string describe_forest(const RadialForest& forest);

}  // namespace gridlearn
