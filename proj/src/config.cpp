#include "vlroute/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace vlroute {

namespace pt = boost::property_tree;

std::string_view to_string(SweptParam p) {
  switch (p) {
    case SweptParam::Sessions: return "sessions";
    case SweptParam::SevereFraction: return "severe_fraction";
    case SweptParam::EstimationError: return "estimation_error";
  }
  return "?";
}

std::optional<SweptParam> parse_swept_param(std::string_view s) {
  if (s == "sessions") return SweptParam::Sessions;
  if (s == "severe_fraction" || s == "blockage") return SweptParam::SevereFraction;
  if (s == "estimation_error" || s == "error") return SweptParam::EstimationError;
  return std::nullopt;
}

void SweepSpec::validate() const {
  if (values.empty()) throw std::invalid_argument("sweep needs at least one value");
  if (seeds < 1) throw std::invalid_argument("sweep needs at least one seed");
  if (protocols.empty()) throw std::invalid_argument("sweep needs at least one protocol");
  base.validate();
}

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> s{
      {"topology", {"kind", "rows", "cols", "nodes", "area_side", "range", "sinks", "sink_ids", "sectors"}},
      {"traffic", {"sessions", "packets_per_session", "data_bytes", "control_bytes", "ack_bytes", "link_rate_bps"}},
      {"mac", {"cw", "acn_window", "cms_per_slot", "b_max", "retry_limit", "csma_cw_max", "backoff_u_ref"}},
      {"channel", {"p_error_mean", "p_error_spread", "severe_fraction", "p_severe", "p_mild", "estimation_error"}},
      {"run", {"protocol", "seed", "topology_seed", "duration_cap_s", "warmup_max_superslots", "warmup_superslots"}},
      {"sweep", {"param", "values", "seeds", "first_seed", "protocols"}},
  };
  return s;
}

pt::ptree parse_tree(const std::string& text) {
  pt::ptree tree;
  std::istringstream is(text);
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw std::runtime_error("config: " + std::string(e.message()) + " at line " + std::to_string(e.line()));
  }
  for (const auto& [section, body] : tree) {
    const auto it = schema().find(section);
    if (it == schema().end() || body.empty()) throw std::runtime_error("config: unknown section [" + section + "]");
    for (const auto& [key, _] : body) {
      if (!it->second.count(key)) throw std::runtime_error("config: unknown key " + section + "." + key);
    }
  }
  return tree;
}

template <class T>
void get(const pt::ptree& tree, const std::string& path, T& out) {
  const auto v = tree.get_optional<std::string>(path);
  if (!v) return;
  try {
    if constexpr (std::is_same_v<T, double>) {
      std::size_t pos = 0;
      out = std::stod(*v, &pos);
      if (trim(v->substr(pos)).size()) throw std::invalid_argument("trailing");
    } else {
      std::size_t pos = 0;
      const long long x = std::stoll(*v, &pos);
      if (trim(v->substr(pos)).size()) throw std::invalid_argument("trailing");
      if (x < 0 && std::is_unsigned_v<T>) throw std::invalid_argument("negative");
      out = static_cast<T>(x);
    }
  } catch (const std::exception&) {
    throw std::runtime_error("config: bad value for " + path + ": '" + *v + "'");
  }
}

void fill_scenario(const pt::ptree& tree, ScenarioConfig& c) {
  auto& t = c.topology;
  if (auto kind = tree.get_optional<std::string>("topology.kind")) {
    if (*kind == "grid") t.kind = TopologyKind::Grid;
    else if (*kind == "random") t.kind = TopologyKind::Random;
    else throw std::runtime_error("config: topology.kind must be grid or random");
  }
  get(tree, "topology.rows", t.rows);
  get(tree, "topology.cols", t.cols);
  get(tree, "topology.nodes", t.n_nodes);
  get(tree, "topology.area_side", t.area_side);
  get(tree, "topology.range", t.range);
  get(tree, "topology.sinks", t.n_sinks);
  get(tree, "topology.sectors", t.n_sectors);
  if (auto ids = tree.get_optional<std::string>("topology.sink_ids")) {
    t.sinks.clear();
    for (const auto& s : split(*ids, ',')) {
      try {
        t.sinks.push_back(static_cast<NodeId>(std::stoul(s)));
      } catch (const std::exception&) {
        throw std::runtime_error("config: bad sink id '" + s + "'");
      }
    }
  }
  get(tree, "traffic.sessions", c.sessions);
  get(tree, "traffic.packets_per_session", c.packets_per_session);
  get(tree, "traffic.data_bytes", c.data_bytes);
  get(tree, "traffic.control_bytes", c.control_bytes);
  get(tree, "traffic.ack_bytes", c.ack_bytes);
  get(tree, "traffic.link_rate_bps", c.link_rate_bps);
  get(tree, "mac.cw", c.cw);
  get(tree, "mac.acn_window", c.acn_window);
  get(tree, "mac.cms_per_slot", c.cms_per_slot);
  get(tree, "mac.b_max", c.b_max);
  get(tree, "mac.retry_limit", c.retry_limit);
  get(tree, "mac.csma_cw_max", c.csma_cw_max);
  get(tree, "mac.backoff_u_ref", c.backoff_u_ref);
  get(tree, "channel.p_error_mean", c.p_error_mean);
  get(tree, "channel.p_error_spread", c.p_error_spread);
  get(tree, "channel.severe_fraction", c.severe_fraction);
  get(tree, "channel.p_severe", c.p_severe);
  get(tree, "channel.p_mild", c.p_mild);
  get(tree, "channel.estimation_error", c.estimation_error);
  if (auto p = tree.get_optional<std::string>("run.protocol")) {
    const auto proto = parse_protocol(trim(*p));
    if (!proto) throw std::runtime_error("config: unknown protocol '" + *p + "'");
    c.protocol = *proto;
  }
  get(tree, "run.seed", c.seed);
  if (tree.get_optional<std::string>("run.topology_seed")) {
    std::uint64_t ts = 0;
    get(tree, "run.topology_seed", ts);
    c.topology_seed = ts;
  }
  get(tree, "run.duration_cap_s", c.duration_cap_s);
  get(tree, "run.warmup_max_superslots", c.warmup_max_superslots);
  get(tree, "run.warmup_superslots", c.warmup_fixed_superslots);
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("config: ") + e.what());
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::vector<double> parse_value_list(const std::string& s) {
  std::vector<double> out;
  const auto t = trim(s);
  if (t.find(':') != std::string::npos) {
    const auto parts = split(t, ':');
    if (parts.size() != 3) throw std::runtime_error("range must be start:stop:step");
    double a, b, step;
    try {
      a = std::stod(parts[0]);
      b = std::stod(parts[1]);
      step = std::stod(parts[2]);
    } catch (const std::exception&) {
      throw std::runtime_error("bad range '" + s + "'");
    }
    if (step <= 0 || b < a) throw std::runtime_error("range needs step > 0 and stop >= start");
    const auto n = static_cast<long>(std::floor((b - a) / step + 1e-9));
    for (long i = 0; i <= n; ++i) out.push_back(a + static_cast<double>(i) * step);
    return out;
  }
  for (const auto& item : split(t, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw std::runtime_error("bad value '" + item + "'");
    }
  }
  return out;
}

ScenarioConfig parse_scenario(const std::string& text) {
  const auto tree = parse_tree(text);
  ScenarioConfig c;
  fill_scenario(tree, c);
  return c;
}

ScenarioConfig load_scenario(const std::string& path) { return parse_scenario(read_file(path)); }

SweepSpec parse_sweep(const std::string& text) {
  const auto tree = parse_tree(text);
  SweepSpec s;
  fill_scenario(tree, s.base);
  if (auto p = tree.get_optional<std::string>("sweep.param")) {
    const auto sp = parse_swept_param(trim(*p));
    if (!sp) throw std::runtime_error("config: unknown sweep.param '" + *p + "'");
    s.param = *sp;
  }
  if (auto v = tree.get_optional<std::string>("sweep.values")) s.values = parse_value_list(*v);
  get(tree, "sweep.seeds", s.seeds);
  get(tree, "sweep.first_seed", s.first_seed);
  if (auto p = tree.get_optional<std::string>("sweep.protocols")) {
    s.protocols.clear();
    for (const auto& name : split(*p, ',')) {
      const auto proto = parse_protocol(name);
      if (!proto) throw std::runtime_error("config: unknown protocol '" + name + "'");
      s.protocols.push_back(*proto);
    }
  }
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("config: ") + e.what());
  }
  return s;
}

SweepSpec load_sweep(const std::string& path) { return parse_sweep(read_file(path)); }

std::string scenario_to_ini(const ScenarioConfig& c) {
  std::ostringstream os;
  os.precision(17);
  const auto& t = c.topology;
  os << "[topology]\nkind = " << (t.kind == TopologyKind::Grid ? "grid" : "random") << "\nrows = " << t.rows
     << "\ncols = " << t.cols << "\nnodes = " << t.n_nodes << "\narea_side = " << t.area_side
     << "\nrange = " << t.range << "\nsinks = " << t.n_sinks << "\nsectors = " << t.n_sectors << "\n";
  if (!t.sinks.empty()) {
    os << "sink_ids = ";
    for (std::size_t i = 0; i < t.sinks.size(); ++i) os << (i ? "," : "") << t.sinks[i];
    os << "\n";
  }
  os << "\n[traffic]\nsessions = " << c.sessions << "\npackets_per_session = " << c.packets_per_session
     << "\ndata_bytes = " << c.data_bytes << "\ncontrol_bytes = " << c.control_bytes
     << "\nack_bytes = " << c.ack_bytes << "\nlink_rate_bps = " << c.link_rate_bps << "\n";
  os << "\n[mac]\ncw = " << c.cw << "\nacn_window = " << c.acn_window << "\ncms_per_slot = " << c.cms_per_slot
     << "\nb_max = " << c.b_max << "\nretry_limit = " << c.retry_limit << "\ncsma_cw_max = " << c.csma_cw_max
     << "\nbackoff_u_ref = " << c.backoff_u_ref << "\n";
  os << "\n[channel]\np_error_mean = " << c.p_error_mean << "\np_error_spread = " << c.p_error_spread
     << "\nsevere_fraction = " << c.severe_fraction << "\np_severe = " << c.p_severe << "\np_mild = " << c.p_mild
     << "\nestimation_error = " << c.estimation_error << "\n";
  os << "\n[run]\nprotocol = " << to_string(c.protocol) << "\nseed = " << c.seed << "\n";
  if (c.topology_seed) os << "topology_seed = " << *c.topology_seed << "\n";
  os << "duration_cap_s = " << c.duration_cap_s << "\nwarmup_max_superslots = " << c.warmup_max_superslots
     << "\nwarmup_superslots = " << c.warmup_fixed_superslots << "\n";
  return os.str();
}

}  // namespace vlroute
