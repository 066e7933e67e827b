#include <fstream>
#include <sstream>

#include "ditto/errors.hpp"
#include "ditto/model.hpp"
#include "ditto/numfmt.hpp"

namespace ditto {
namespace {

constexpr const char* kMagic = "ditto-checkpoint 1";

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  return out;
}

std::size_t to_size(const std::string& s, const std::string& src, std::size_t line) {
  auto v = parse_int(s);
  if (!v || *v < 0) throw ParseError(src, line, "expected a non-negative integer, got '" + s + "'");
  return static_cast<std::size_t>(*v);
}

}  // namespace

void write_params(std::ostream& os, const ParamStore& params) {
  os << "params " << params.size() << '\n';
  for (const auto& [name, p] : params) {
    os << name << ' ' << p.value.rows() << ' ' << p.value.cols() << '\n';
    const auto data = p.value.data();
    for (std::size_t k = 0; k < data.size(); ++k) {
      os << (k ? " " : "") << format_double(data[k]);
    }
    os << '\n';
  }
}

ParamStore read_params(std::istream& is, const std::string& src) {
  std::size_t line_no = 0;
  std::string line;
  auto next = [&]() {
    if (!std::getline(is, line)) throw ParseError(src, line_no + 1, "unexpected end of checkpoint");
    ++line_no;
    return line;
  };
  std::istringstream head(next());
  std::string tag, count_s;
  head >> tag >> count_s;
  if (tag != "params") throw ParseError(src, line_no, "expected 'params <count>'");
  const std::size_t count = to_size(count_s, src, line_no);

  ParamStore store;
  for (std::size_t i = 0; i < count; ++i) {
    std::istringstream hdr(next());
    std::string name, r_s, c_s, extra;
    hdr >> name >> r_s >> c_s;
    if (name.empty() || c_s.empty() || (hdr >> extra)) {
      throw ParseError(src, line_no, "expected '<name> <rows> <cols>'");
    }
    const std::size_t rows = to_size(r_s, src, line_no), cols = to_size(c_s, src, line_no);
    std::istringstream vals(next());
    std::vector<double> data;
    data.reserve(rows * cols);
    std::string tok;
    while (vals >> tok) {
      auto v = parse_double(tok);
      if (!v) throw ParseError(src, line_no, "bad number '" + tok + "'");
      data.push_back(*v);
    }
    if (data.size() != rows * cols) {
      throw ParseError(src, line_no, "expected " + std::to_string(rows * cols) + " values for " + name);
    }
    try {
      store.add(name, Tensor(rows, cols, std::move(data)));
    } catch (const ParamError& e) {
      throw ParseError(src, line_no, e.what());
    }
  }
  return store;
}

void save_checkpoint(const ModelBundle& bundle, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw InputError("cannot write checkpoint " + path.string());
  const auto& spec = bundle.spec();
  os << kMagic << '\n';
  os << "input_dim " << spec.input_dim << '\n';
  os << "hidden";
  for (auto h : spec.hidden_dims) os << ' ' << h;
  os << '\n';
  os << "activation " << to_string(spec.activation) << '\n';
  os << "num_classes " << bundle.num_classes() << '\n';
  os << "disc_hidden " << bundle.disc_hidden() << '\n';
  os << "targets";
  for (const auto& t : bundle.targets()) os << ' ' << t;
  os << '\n';
  write_params(os, bundle.params());
  if (!os) throw InputError("failed writing checkpoint " + path.string());
}

ModelBundle load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open checkpoint " + path.string());
  const std::string src = path.string();
  std::string line;
  std::size_t line_no = 0;
  auto field = [&](const std::string& key) {
    if (!std::getline(is, line)) throw ParseError(src, line_no + 1, "missing '" + key + "'");
    ++line_no;
    auto parts = split(line, ' ');
    if (parts.empty() || parts[0] != key) throw ParseError(src, line_no, "expected '" + key + "'");
    parts.erase(parts.begin());
    return parts;
  };
  if (!std::getline(is, line) || line != kMagic) throw ParseError(src, 1, "not a checkpoint file");
  ++line_no;

  EncoderSpec spec;
  auto one = [&](const std::string& key) {
    auto v = field(key);
    if (v.size() != 1) throw ParseError(src, line_no, "expected one value for " + key);
    return v[0];
  };
  // Read the field before its line number is used.
  auto size_field = [&](const std::string& key) {
    const std::string v = one(key);
    return to_size(v, src, line_no);
  };
  spec.input_dim = size_field("input_dim");
  spec.hidden_dims.clear();
  const auto hidden = field("hidden");
  for (const auto& h : hidden) spec.hidden_dims.push_back(to_size(h, src, line_no));
  spec.activation = parse_activation(one("activation"));
  const std::size_t classes = size_field("num_classes");
  const std::size_t disc_hidden = size_field("disc_hidden");
  auto targets = field("targets");
  ParamStore params = read_params(is, src);
  return ModelBundle::from_params(spec, classes, std::move(targets), disc_hidden, std::move(params));
}

}  // namespace ditto
