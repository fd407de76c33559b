#include "hybens/field_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace hybens {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_field_csv(std::ostream& os, const Field& f) {
  const Grid& g = *f.grid();
  for (int a = 0; a < g.rank(); ++a) {
    const Axis& ax = g.axis(a);
    os << "# axis" << a << "=" << ax.name << " min=" << format_double(ax.min)
       << " max=" << format_double(ax.max) << " count=" << ax.count
       << " boundary=" << (ax.boundary == Boundary::periodic ? 'p' : 'c')
       << "\n";
  }
  for (std::int64_t p = 0; p < g.size(); ++p) {
    const auto idx = g.unflatten(p);
    for (int a = 0; a < g.rank(); ++a) {
      os << idx[static_cast<std::size_t>(a)] << ',';
    }
    os << format_double(f[p]) << "\n";
  }
}

void write_field_csv(const std::filesystem::path& path, const Field& f) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_field_csv(os, f);
  if (!os) throw IoError("write failed: " + path.string());
}

namespace {

double parse_double(const std::string& s, const std::string& what) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw IoError("bad numeric value '" + s + "' in " + what);
  }
  return v;
}

// Pulls "key=value" tokens out of an axis header line.
std::string header_token(const std::string& line, const std::string& key) {
  const std::string pat = key + "=";
  auto pos = line.find(pat);
  if (pos == std::string::npos) {
    throw IoError("field CSV header missing '" + key + "'");
  }
  pos += pat.size();
  auto end = line.find(' ', pos);
  if (end == std::string::npos) end = line.size();
  return line.substr(pos, end - pos);
}

}  // namespace

Field read_field_csv(std::istream& is) {
  std::vector<Axis> axes;
  std::string line;
  // Axis headers come first.
  while (is.peek() == '#') {
    std::getline(is, line);
    Axis ax;
    ax.name = header_token(line, "axis" + std::to_string(axes.size()));
    ax.min = parse_double(header_token(line, "min"), "axis header");
    ax.max = parse_double(header_token(line, "max"), "axis header");
    ax.count = static_cast<int>(parse_double(header_token(line, "count"), "axis header"));
    const std::string b = header_token(line, "boundary");
    if (b == "p") {
      ax.boundary = Boundary::periodic;
    } else if (b == "c") {
      ax.boundary = Boundary::clamped;
    } else {
      throw IoError("field CSV header has unknown boundary '" + b + "'");
    }
    axes.push_back(ax);
  }
  if (axes.empty()) throw IoError("field CSV has no axis headers");
  GridPtr grid = Grid::make(axes);

  Field f(grid);
  std::vector<int> idx(axes.size());
  std::int64_t rows = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      if (!std::getline(ss, cell, ',')) throw IoError("field CSV row too short");
      idx[a] = static_cast<int>(parse_double(cell, "index"));
    }
    if (!std::getline(ss, cell)) throw IoError("field CSV row missing value");
    f[grid->flatten(idx)] = parse_double(cell, "value");
    ++rows;
  }
  if (rows != grid->size()) {
    throw IoError("field CSV has " + std::to_string(rows) + " rows, expected " +
                  std::to_string(grid->size()));
  }
  return f;
}

Field read_field_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  return read_field_csv(is);
}

}  // namespace hybens
