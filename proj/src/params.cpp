#include "mrss/params.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "mrss/error.hpp"

namespace mrss {

NetLayout make_layout(const NetConfig& cfg) {
  if (cfg.obs_dim == 0 || cfg.hidden == 0 || cfg.feature == 0 || cfg.action_dim == 0 ||
      cfg.critic_input == 0)
    throw InvalidArgument("network widths must be positive");
  NetLayout l;
  auto add = [&](const std::string& name, std::size_t rows, std::size_t cols) {
    Section s{name, l.total, rows, cols};
    l.total += s.size();
    l.sections.push_back(s);
    return s;
  };
  auto dense = [&](const std::string& name, std::size_t in, std::size_t out) {
    return DenseLayer{add(name + ".w", out, in), add(name + ".b", out, 1)};
  };
  l.encoder[0] = dense("enc0", cfg.obs_dim, cfg.hidden);
  l.encoder[1] = dense("enc1", cfg.hidden, cfg.hidden);
  l.encoder[2] = dense("enc2", cfg.hidden, cfg.feature);
  l.actor = dense("actor", cfg.feature, cfg.action_dim);
  l.log_std = add("actor.log_std", cfg.action_dim, 1);
  std::size_t in = cfg.critic_input;
  for (std::size_t i = 0; i < cfg.critic_hidden.size(); ++i) {
    l.critic.push_back(dense("critic" + std::to_string(i), in, cfg.critic_hidden[i]));
    in = cfg.critic_hidden[i];
  }
  l.critic.push_back(dense("critic_out", in, 1));
  return l;
}

ParamSet::ParamSet(NetConfig cfg) : cfg_(std::move(cfg)), layout_(make_layout(cfg_)) {
  values_.assign(layout_.total, 0.0);
}

const Section& ParamSet::section(const std::string& name) const {
  for (const auto& s : layout_.sections)
    if (s.name == name) return s;
  throw InvalidArgument("no parameter section '" + name + "'");
}

void ParamSet::unflatten(std::span<const double> flat) {
  if (flat.size() != values_.size()) throw InvalidArgument("flat parameter length mismatch");
  values_.assign(flat.begin(), flat.end());
}

bool ParamSet::all_finite() const {
  for (double v : values_)
    if (!std::isfinite(v)) return false;
  return true;
}

ParamSet init_params(const NetConfig& cfg, Rng& rng) {
  ParamSet p(cfg);
  const auto& l = p.layout();
  auto glorot = [&](const DenseLayer& layer, double gain) {
    double lim = gain * std::sqrt(6.0 / double(layer.weight.rows + layer.weight.cols));
    for (double& w : p.view(layer.weight)) w = uniform(rng, -lim, lim);
  };
  for (const auto& layer : l.encoder) glorot(layer, 1.0);
  glorot(l.actor, 0.01);
  for (double& v : p.view(l.log_std)) v = cfg.init_log_std;
  for (const auto& layer : l.critic) glorot(layer, 1.0);
  return p;
}

namespace {

std::string hex(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double parse_hex(const std::string& s) {
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw ParseError(0, "bad number '" + s + "'");
  return v;
}

std::string next_token(std::istream& is, const char* what) {
  std::string t;
  if (!(is >> t)) throw ParseError(0, std::string("unexpected end of checkpoint, expected ") + what);
  return t;
}

std::size_t next_size(std::istream& is, const char* what) {
  auto t = next_token(is, what);
  try {
    return std::stoull(t);
  } catch (const std::logic_error&) {
    throw ParseError(0, std::string("bad ") + what + " '" + t + "'");
  }
}

void expect(std::istream& is, const std::string& word) {
  auto t = next_token(is, word.c_str());
  if (t != word) throw ParseError(0, "expected '" + word + "', got '" + t + "'");
}

}  // namespace

void write_vector(std::ostream& os, const std::string& name, std::span<const double> v) {
  os << "vector " << name << ' ' << v.size() << "\n";
  for (std::size_t i = 0; i < v.size(); ++i) os << hex(v[i]) << ((i + 1) % 8 == 0 ? '\n' : ' ');
  os << "\n";
}

std::vector<double> read_vector(std::istream& is, const std::string& name) {
  expect(is, "vector");
  expect(is, name);
  std::size_t n = next_size(is, "vector length");
  std::vector<double> v(n);
  for (auto& x : v) x = parse_hex(next_token(is, "vector value"));
  return v;
}

void write_params(std::ostream& os, const ParamSet& p) {
  const auto& c = p.config();
  os << "mrss-params 1\n";
  if (p.empty()) {
    os << "empty\n";
    return;
  }
  os << "net " << c.obs_dim << ' ' << c.hidden << ' ' << c.feature << ' ' << c.action_dim << ' '
     << c.critic_input << ' ' << hex(c.init_log_std) << ' ' << c.critic_hidden.size();
  for (auto h : c.critic_hidden) os << ' ' << h;
  os << "\n";
  for (const auto& s : p.layout().sections) write_vector(os, s.name, p.view(s));
}

ParamSet read_params(std::istream& is) {
  expect(is, "mrss-params");
  if (next_token(is, "version") != "1") throw ParseError(0, "unsupported parameter version");
  auto t = next_token(is, "net");
  if (t == "empty") return {};
  if (t != "net") throw ParseError(0, "expected 'net', got '" + t + "'");
  NetConfig c;
  c.obs_dim = next_size(is, "obs_dim");
  c.hidden = next_size(is, "hidden");
  c.feature = next_size(is, "feature");
  c.action_dim = next_size(is, "action_dim");
  c.critic_input = next_size(is, "critic_input");
  c.init_log_std = parse_hex(next_token(is, "init_log_std"));
  c.critic_hidden.resize(next_size(is, "critic depth"));
  for (auto& h : c.critic_hidden) h = next_size(is, "critic width");
  ParamSet p(c);
  for (const auto& s : p.layout().sections) {
    auto v = read_vector(is, s.name);
    if (v.size() != s.size()) throw ParseError(0, "section " + s.name + " has wrong length");
    std::copy(v.begin(), v.end(), p.view(s).begin());
  }
  return p;
}

}  // namespace mrss
