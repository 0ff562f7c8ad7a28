#include "gradmdm/checkpoint.hpp"

#include <fmt/format.h>

#include <fstream>
#include <sstream>
#include <vector>

namespace gradmdm {

namespace {

constexpr const char* kMagic = "GRADMDM-CKPT v1";

[[noreturn]] void fail(CheckpointErrorKind kind, const std::string& msg) {
  throw CheckpointError(kind, "checkpoint: " + msg);
}

std::string fmt_value(double v) { return fmt::format("{:.9g}", static_cast<double>(static_cast<float>(v))); }

// Reads the next line and checks its keyword. End of input means truncation.
std::istringstream expect_line(std::istream& is, const std::string& keyword) {
  std::string line;
  if (!std::getline(is, line)) fail(CheckpointErrorKind::truncated, "missing '" + keyword + "' line");
  std::istringstream ss(line);
  std::string key;
  ss >> key;
  if (key != keyword) fail(CheckpointErrorKind::malformed, "expected '" + keyword + "', found '" + key + "'");
  return ss;
}

template <class T>
T read_field(std::istringstream& ss, const std::string& what) {
  T v{};
  if (!(ss >> v)) fail(CheckpointErrorKind::malformed, "bad or missing field: " + what);
  return v;
}

DenseLayer empty_dense(std::size_t in, std::size_t out) { return DenseLayer{Tensor({out, in}), Tensor({out, 1})}; }

}  // namespace

void save_checkpoint(const DynamicNet& net, std::ostream& os) {
  net.validate();
  os << kMagic << '\n';
  os << "input";
  for (auto d : net.input_shape) os << ' ' << d;
  os << '\n';
  os << "stem " << net.stem.fan_in() << ' ' << net.stem.fan_out() << '\n';
  for (const auto& b : net.blocks) {
    os << "block " << block_kind_name(b.kind) << ' ' << b.branch.fan_in() << ' ' << b.branch.fan_out() << ' '
       << fmt::format("{:.17g}", b.cost) << ' ' << b.layer << '\n';
  }
  os << "head " << net.head.fan_in() << ' ' << net.head.fan_out() << '\n';
  os << "tau " << fmt::format("{:.17g}", net.tau) << '\n';
  const auto params = net.named_parameters();
  os << "tensors " << params.size() << '\n';
  for (const auto& [name, t] : params) {
    os << name << ' ' << t->shape().size();
    for (auto d : t->shape()) os << ' ' << d;
    for (double v : t->data()) os << ' ' << fmt_value(v);
    os << '\n';
  }
  if (!os) fail(CheckpointErrorKind::io, "write failed");
}

void save_checkpoint(const DynamicNet& net, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) fail(CheckpointErrorKind::io, "cannot open '" + path.string() + "' for writing");
  save_checkpoint(net, os);
}

DynamicNet load_checkpoint(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kMagic) fail(CheckpointErrorKind::not_a_checkpoint, "not a checkpoint");

  DynamicNet net;
  {
    auto ss = expect_line(is, "input");
    net.input_shape.clear();
    std::size_t d;
    while (ss >> d) net.input_shape.push_back(d);
    if (net.input_shape.empty()) fail(CheckpointErrorKind::malformed, "empty input shape");
  }
  {
    auto ss = expect_line(is, "stem");
    const auto in = read_field<std::size_t>(ss, "stem in");
    const auto out = read_field<std::size_t>(ss, "stem out");
    net.stem = empty_dense(in, out);
  }
  // Block lines until "head".
  while (true) {
    if (!std::getline(is, line)) fail(CheckpointErrorKind::truncated, "missing 'head' line");
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key == "head") {
      const auto in = read_field<std::size_t>(ss, "head in");
      const auto out = read_field<std::size_t>(ss, "head out");
      net.head = empty_dense(in, out);
      break;
    }
    if (key != "block") fail(CheckpointErrorKind::malformed, "expected 'block' or 'head', found '" + key + "'");
    GatedBlock b;
    try {
      b.kind = parse_block_kind(read_field<std::string>(ss, "block kind"));
    } catch (const std::invalid_argument& e) {
      fail(CheckpointErrorKind::malformed, e.what());
    }
    const auto in = read_field<std::size_t>(ss, "block in");
    const auto out = read_field<std::size_t>(ss, "block out");
    b.cost = read_field<double>(ss, "block cost");
    b.layer = read_field<std::size_t>(ss, "block layer");
    b.gate = empty_dense(in, 1);
    b.branch = empty_dense(in, out);
    net.blocks.push_back(std::move(b));
  }
  {
    auto ss = expect_line(is, "tau");
    net.tau = read_field<double>(ss, "tau");
  }
  try {
    net.validate();
  } catch (const std::invalid_argument& e) {
    fail(CheckpointErrorKind::structure, e.what());
  }

  auto params = net.named_parameters();
  {
    auto ss = expect_line(is, "tensors");
    const auto count = read_field<std::size_t>(ss, "tensor count");
    if (count != params.size()) {
      fail(CheckpointErrorKind::structure, "architecture needs " + std::to_string(params.size()) + " tensors, header says " +
                                               std::to_string(count));
    }
  }
  for (auto& [name, t] : params) {
    if (!std::getline(is, line)) fail(CheckpointErrorKind::truncated, "missing tensor '" + name + "'");
    std::istringstream ss(line);
    const auto found = read_field<std::string>(ss, "tensor name");
    if (found != name) fail(CheckpointErrorKind::structure, "expected tensor '" + name + "', found '" + found + "'");
    const auto rank = read_field<std::size_t>(ss, name + " rank");
    Shape shape;
    for (std::size_t r = 0; r < rank; ++r) shape.push_back(read_field<std::size_t>(ss, name + " dim"));
    if (shape != t->shape()) {
      fail(CheckpointErrorKind::structure,
           "tensor '" + name + "' has dims " + shape_string(shape) + ", expected " + shape_string(t->shape()));
    }
    for (std::size_t e = 0; e < t->size(); ++e) {
      double v;
      if (!(ss >> v)) {
        if (ss.eof()) fail(CheckpointErrorKind::truncated, "tensor '" + name + "' payload ends early");
        fail(CheckpointErrorKind::malformed, "tensor '" + name + "' has a non-numeric value");
      }
      (*t)[e] = static_cast<float>(v);  // stored at single precision
    }
    std::string extra;
    if (ss >> extra) fail(CheckpointErrorKind::structure, "tensor '" + name + "' has trailing values");
    if (!t->all_finite()) fail(CheckpointErrorKind::malformed, "tensor '" + name + "' holds non-finite values");
  }
  return net;
}

DynamicNet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(CheckpointErrorKind::io, "cannot open '" + path.string() + "'");
  return load_checkpoint(is);
}

}  // namespace gradmdm
