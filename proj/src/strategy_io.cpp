#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "sepctl/solver.hpp"

namespace sepctl {

namespace {

constexpr const char* kHeader = "sepctl-strategy 1";

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_matrix(std::ostream& os, const char* tag, const MatrixXd& M) {
  os << tag << ' ' << M.rows() << ' ' << M.cols();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) os << ' ' << fmt(M(i, j));
  }
  os << '\n';
}

class LineReader {
 public:
  explicit LineReader(std::istream& is) : is_(is) {}

  std::istringstream next(const std::string& tag) {
    std::string line;
    while (std::getline(is_, line)) {
      ++line_no_;
      if (line.empty() || line[0] == '#') continue;
      std::istringstream ls(line);
      std::string got;
      ls >> got;
      if (got != tag) error("expected '" + tag + "', got '" + got + "'");
      return ls;
    }
    error("unexpected end of input, expected '" + tag + "'");
    return {};
  }

  [[noreturn]] void error(const std::string& msg) const {
    fail(ErrorKind::kConfig,
         "strategy line " + std::to_string(line_no_) + ": " + msg);
  }

 private:
  std::istream& is_;
  int line_no_ = 0;
};

template <typename T>
T read_value(std::istringstream& ls, const LineReader& reader) {
  T v{};
  if (!(ls >> v)) reader.error("malformed number");
  return v;
}

MatrixXd read_matrix(LineReader& reader, const std::string& tag) {
  std::istringstream ls = reader.next(tag);
  const long rows = read_value<long>(ls, reader);
  const long cols = read_value<long>(ls, reader);
  if (rows < 0 || cols < 0) reader.error("negative shape");
  MatrixXd M(rows, cols);
  for (long i = 0; i < rows; ++i) {
    for (long j = 0; j < cols; ++j) M(i, j) = read_value<double>(ls, reader);
  }
  return M;
}

}  // namespace

void write_strategy(std::ostream& os, const SeparatedStrategy& strategy) {
  const Dims& d = strategy.dims;
  os << kHeader << '\n';
  os << "dims " << d.n << ' ' << d.m << ' ' << d.p << ' ' << d.r << ' ' << d.s
     << ' ' << d.T << '\n';
  os << "mode " << (strategy.bound() ? "bound" : "parameterized") << '\n';
  for (std::size_t t = 0; t < strategy.steps.size(); ++t) {
    const StrategyStep& s = strategy.steps[t];
    const bool deficient =
        t < strategy.rank_deficient.size() && strategy.rank_deficient[t];
    os << "t " << t << ' ' << (deficient ? 1 : 0) << '\n';
    write_matrix(os, "K", s.K);
    write_matrix(os, "L", s.L);
    write_matrix(os, "J", s.J);
    write_matrix(os, "k", s.k);
  }
}

SeparatedStrategy read_strategy(std::istream& is) {
  LineReader reader(is);
  std::string header;
  while (std::getline(is, header) && header.empty()) {
  }
  if (header != kHeader) {
    fail(ErrorKind::kConfig, "not a strategy document (bad header)");
  }
  SeparatedStrategy out;
  {
    std::istringstream ls = reader.next("dims");
    Dims& d = out.dims;
    d.n = read_value<int>(ls, reader);
    d.m = read_value<int>(ls, reader);
    d.p = read_value<int>(ls, reader);
    d.r = read_value<int>(ls, reader);
    d.s = read_value<int>(ls, reader);
    d.T = read_value<int>(ls, reader);
    d.validate();
  }
  {
    std::istringstream ls = reader.next("mode");
    const std::string mode = read_value<std::string>(ls, reader);
    if (mode == "bound") {
      out.mode = BindingMode::kBound;
    } else if (mode == "parameterized") {
      out.mode = BindingMode::kParameterized;
    } else {
      reader.error("unknown mode '" + mode + "'");
    }
  }
  const Dims& d = out.dims;
  for (int t = 0; t < d.T; ++t) {
    std::istringstream ls = reader.next("t");
    if (read_value<int>(ls, reader) != t) reader.error("steps out of order");
    out.rank_deficient.push_back(read_value<int>(ls, reader) != 0);
    StrategyStep s;
    s.K = read_matrix(reader, "K");
    s.L = read_matrix(reader, "L");
    s.J = read_matrix(reader, "J");
    const MatrixXd k = read_matrix(reader, "k");
    const long slots = out.bound() ? 0 : static_cast<long>(d.T - t) * d.n;
    if (s.K.rows() != d.m || s.K.cols() != d.n || s.L.rows() != d.m ||
        s.L.cols() != slots || s.J.rows() != d.m ||
        s.J.cols() != static_cast<long>(d.T - t) * d.r || k.rows() != d.m ||
        k.cols() != 1) {
      reader.error("matrix shape inconsistent with dims at t=" +
                   std::to_string(t));
    }
    s.k = k.col(0);
    out.steps.push_back(std::move(s));
  }
  return out;
}

}  // namespace sepctl
