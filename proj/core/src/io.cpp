#include "gridlearn/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace gridlearn {

namespace {

using nlohmann::json;

json parse(std::istream& in) {
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, e.what());
    }
}

template <typename T>
T field(const json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) throw Error(ErrorCode::ParseError, std::string("missing field '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("field '") + key + "': " + e.what());
    }
}

const json& array_field(const json& j, const char* key) {
    if (!j.is_object() || !j.contains(key) || !j.at(key).is_array()) {
        throw Error(ErrorCode::ParseError, std::string("expected array '") + key + "'");
    }
    return j.at(key);
}

int load_of(const NodeIndex& index, std::int64_t id) {
    const auto ref = index.find(id);
    if (!ref) throw Error(ErrorCode::UnknownNode, "node id " + std::to_string(id));
    if (!ref->is_load()) throw Error(ErrorCode::InvalidArgument, "node id " + std::to_string(id) + " is a substation");
    return ref->index;
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_double(const std::string& s, int line) {
    double v = 0.0;
    const auto* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc{} || ptr != end) {
        throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": bad number '" + s + "'");
    }
    return v;
}

std::int64_t parse_int(const std::string& s, int line) {
    std::int64_t v = 0;
    const auto* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc{} || ptr != end) {
        throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": bad integer '" + s + "'");
    }
    return v;
}

}  // namespace

Network read_network(std::istream& in) {
    const json j = parse(in);
    Network net;
    for (const auto& n : array_field(j, "nodes")) {
        const auto role = field<std::string>(n, "role");
        if (role != "substation" && role != "load") throw Error(ErrorCode::ParseError, "unknown role '" + role + "'");
        net.nodes.push_back({field<std::int64_t>(n, "id"), role == "substation" ? NodeRole::substation : NodeRole::load});
    }
    for (const auto& l : array_field(j, "lines")) {
        Line line{field<std::int64_t>(l, "a"), field<std::int64_t>(l, "b"), field<double>(l, "r"), field<double>(l, "x")};
        const auto status = l.value("status", std::string("operational"));
        if (status == "open") {
            line.status = LineStatus::open;
        } else if (status != "operational") {
            throw Error(ErrorCode::ParseError, "unknown line status '" + status + "'");
        }
        net.lines.push_back(line);
    }
    return net;
}

void write_network(std::ostream& out, const Network& network) {
    json j;
    j["nodes"] = json::array();
    for (const auto& n : network.nodes) {
        j["nodes"].push_back({{"id", n.id}, {"role", n.role == NodeRole::substation ? "substation" : "load"}});
    }
    j["lines"] = json::array();
    for (const auto& l : network.lines) {
        j["lines"].push_back({{"a", l.a},
                              {"b", l.b},
                              {"r", l.r},
                              {"x", l.x},
                              {"status", l.status == LineStatus::open ? "open" : "operational"}});
    }
    out << j.dump(2) << '\n';
}

InjectionModel read_injections(std::istream& in, const NodeIndex& index) {
    const json j = parse(in);
    const int n = index.num_loads();
    InjectionModel m = InjectionModel::zeros(n);
    const auto dist = j.value("distribution", std::string("gaussian"));
    if (dist == "uniform") {
        m.distribution = InjectionDistribution::uniform;
    } else if (dist != "gaussian") {
        throw Error(ErrorCode::ParseError, "unknown distribution '" + dist + "'");
    }
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    for (const auto& e : array_field(j, "loads")) {
        const int a = load_of(index, field<std::int64_t>(e, "id"));
        if (seen[static_cast<std::size_t>(a)]) throw Error(ErrorCode::ParseError, "load listed twice in injections");
        seen[static_cast<std::size_t>(a)] = 1;
        m.mu_p(a) = field<double>(e, "mu_p");
        m.mu_q(a) = field<double>(e, "mu_q");
        m.var_p(a) = field<double>(e, "var_p");
        m.var_q(a) = field<double>(e, "var_q");
        m.cov_pq(a) = field<double>(e, "cov_pq");
    }
    for (int a = 0; a < n; ++a) {
        if (!seen[static_cast<std::size_t>(a)]) {
            throw Error(ErrorCode::ParseError, "no injection entry for node " + std::to_string(index.id_of(NodeRef::load(a))));
        }
    }
    check_cauchy_schwarz(m);
    return m;
}

void write_injections(std::ostream& out, const InjectionModel& model, const NodeIndex& index) {
    json j;
    j["distribution"] = model.distribution == InjectionDistribution::uniform ? "uniform" : "gaussian";
    j["loads"] = json::array();
    for (int a = 0; a < model.size(); ++a) {
        j["loads"].push_back({{"id", index.id_of(NodeRef::load(a))},
                              {"mu_p", model.mu_p(a)},
                              {"mu_q", model.mu_q(a)},
                              {"var_p", model.var_p(a)},
                              {"var_q", model.var_q(a)},
                              {"cov_pq", model.cov_pq(a)}});
    }
    out << j.dump(2) << '\n';
}

MissingSpec read_missing_spec(std::istream& in, const NodeIndex& index) {
    const json j = parse(in);
    MissingSpec spec;
    // Entries are either bare ids or {"id", "var_p", "var_q", "cov_pq"} objects, not mixed.
    const auto& list = array_field(j, "hidden");
    for (const auto& e : list) {
        if (e.is_number_integer()) {
            if (spec.has_stats()) throw Error(ErrorCode::ParseError, "mixed hidden entry forms");
            spec.hidden.push_back(load_of(index, e.get<std::int64_t>()));
            continue;
        }
        if (!spec.hidden.empty() && !spec.has_stats()) throw Error(ErrorCode::ParseError, "mixed hidden entry forms");
        spec.hidden.push_back(load_of(index, field<std::int64_t>(e, "id")));
        spec.var_p.push_back(field<double>(e, "var_p"));
        spec.var_q.push_back(field<double>(e, "var_q"));
        spec.cov_pq.push_back(field<double>(e, "cov_pq"));
    }
    return spec;
}

void write_missing_spec(std::ostream& out, const MissingSpec& spec, const NodeIndex& index) {
    json j;
    j["hidden"] = json::array();
    for (std::size_t i = 0; i < spec.hidden.size(); ++i) {
        const auto id = index.id_of(NodeRef::load(spec.hidden[i]));
        if (spec.has_stats()) {
            j["hidden"].push_back({{"id", id}, {"var_p", spec.var_p[i]}, {"var_q", spec.var_q[i]}, {"cov_pq", spec.cov_pq[i]}});
        } else {
            j["hidden"].push_back(id);
        }
    }
    out << j.dump(2) << '\n';
}

VoltageSamples read_samples(std::istream& in, const NodeIndex& index) {
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, "empty sample file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "sample,node,eps,theta") throw Error(ErrorCode::ParseError, "unexpected header '" + line + "'");

    struct Row {
        std::int64_t sample;
        int node;
        double eps;
        double theta;
        bool has_theta;
    };
    std::vector<Row> rows;
    std::int64_t max_sample = -1;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (line.back() == ',') cells.emplace_back();
        if (cells.size() != 4) throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": expected 4 columns");
        Row r{parse_int(cells[0], line_no), load_of(index, parse_int(cells[1], line_no)), parse_double(cells[2], line_no),
              0.0, !cells[3].empty()};
        if (r.has_theta) r.theta = parse_double(cells[3], line_no);
        if (r.sample < 0) throw Error(ErrorCode::ParseError, "negative sample number");
        max_sample = std::max(max_sample, r.sample);
        rows.push_back(r);
    }
    const int n = index.num_loads();
    const auto m = max_sample + 1;
    if (static_cast<std::int64_t>(rows.size()) != m * n) {
        throw Error(ErrorCode::DimensionMismatch, "expected one row per (sample, load)");
    }
    const bool phase = !rows.empty() && rows.front().has_theta;
    VoltageSamples s;
    s.eps = Eigen::MatrixXd::Constant(m, n, std::numeric_limits<double>::quiet_NaN());
    if (phase) s.theta.resize(m, n);
    for (const auto& r : rows) {
        if (r.has_theta != phase) throw Error(ErrorCode::ParseError, "theta column filled on some rows only");
        if (!std::isnan(s.eps(r.sample, r.node))) throw Error(ErrorCode::ParseError, "duplicate (sample, node) row");
        s.eps(r.sample, r.node) = r.eps;
        if (phase) s.theta(r.sample, r.node) = r.theta;
    }
    return s;
}

void write_samples(std::ostream& out, const VoltageSamples& samples, const NodeIndex& index) {
    out << "sample,node,eps,theta\n";
    for (int j = 0; j < samples.count(); ++j) {
        for (int a = 0; a < samples.num_loads(); ++a) {
            out << j << ',' << index.id_of(NodeRef::load(a)) << ',' << format_double(samples.eps(j, a)) << ',';
            if (samples.has_phase()) out << format_double(samples.theta(j, a));
            out << '\n';
        }
    }
}

Network forest_network(const RadialForest& forest) {
    const auto& index = forest.index();
    Network net;
    for (auto id : index.substation_ids()) net.nodes.push_back({id, NodeRole::substation});
    for (auto id : index.load_ids()) net.nodes.push_back({id, NodeRole::load});
    for (int a = 0; a < forest.num_loads(); ++a) {
        const auto& z = forest.impedance(a);
        net.lines.push_back({index.id_of(NodeRef::load(a)), index.id_of(forest.parent(a)), z.r, z.x});
    }
    return net;
}

std::string describe_forest(const RadialForest& forest) {
    const auto& index = forest.index();
    std::ostringstream os;
    for (int k = 0; k < forest.num_substations(); ++k) {
        os << "substation " << index.id_of(NodeRef::substation(k)) << ':';
        std::vector<std::pair<int, int>> stack;
        const auto top = forest.children(NodeRef::substation(k));
        for (auto it = top.rbegin(); it != top.rend(); ++it) stack.emplace_back(*it, 1);
        while (!stack.empty()) {
            const auto [a, depth] = stack.back();
            stack.pop_back();
            os << '\n' << std::string(static_cast<std::size_t>(2 * depth), ' ') << index.id_of(NodeRef::load(a));
            const auto kids = forest.children(NodeRef::load(a));
            for (auto it = kids.rbegin(); it != kids.rend(); ++it) stack.emplace_back(*it, depth + 1);
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace gridlearn
