#include "piml/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>

#include "piml/error.hpp"

namespace piml {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_io("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail_io("cannot write " + path);
  out << text;
  if (!out) fail_io("write failed for " + path);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

// A parsed CSV: header fields plus data rows tagged with their file line.
struct Csv {
  std::vector<std::string> header;
  std::vector<std::pair<std::size_t, std::vector<std::string_view>>> rows;
};

Csv parse_csv(std::string_view text) {
  Csv csv;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool have_header = false;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    auto fields = split_fields(line);
    if (!have_header) {
      for (auto f : fields) csv.header.emplace_back(f);
      have_header = true;
      continue;
    }
    if (fields.size() != csv.header.size()) {
      fail_validation("line " + std::to_string(line_no) + ": expected " +
                      std::to_string(csv.header.size()) + " fields, found " +
                      std::to_string(fields.size()));
    }
    csv.rows.emplace_back(line_no, std::move(fields));
  }
  if (csv.rows.empty()) fail_validation("no data rows");
  return csv;
}

std::optional<std::size_t> find_column(const Csv& csv, const std::string& name) {
  const auto it = std::find(csv.header.begin(), csv.header.end(), name);
  if (it == csv.header.end()) return std::nullopt;
  return static_cast<std::size_t>(it - csv.header.begin());
}

std::size_t require_column(const Csv& csv, const std::string& name) {
  const auto c = find_column(csv, name);
  if (!c) fail_validation("missing column '" + name + "'");
  return *c;
}

double parse_number(std::string_view cell, std::size_t line, const std::string& column) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  if (cell.empty() || res.ec != std::errc{} || res.ptr != last || !std::isfinite(v)) {
    fail_validation("line " + std::to_string(line) + ": non-numeric value '" +
                    std::string(cell) + "' in column '" + column + "'");
  }
  return v;
}

int parse_id(std::string_view cell, std::size_t line, const std::string& column) {
  int v = 0;
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (cell.empty() || res.ec != std::errc{} || res.ptr != cell.data() + cell.size()) {
    fail_validation("line " + std::to_string(line) + ": non-integer id '" + std::string(cell) +
                    "' in column '" + column + "'");
  }
  return v;
}

}  // namespace

MacroBounds MacroscopicDataset::bounds() const {
  if (rows.empty()) fail_validation("no data rows");
  MacroBounds b{rows[0].t, rows[0].t, rows[0].x, rows[0].x, rows[0].rho, rows[0].q};
  for (const auto& r : rows) {
    b.t_min = std::min(b.t_min, r.t);
    b.t_max = std::max(b.t_max, r.t);
    b.x_min = std::min(b.x_min, r.x);
    b.x_max = std::max(b.x_max, r.x);
    b.rho_max = std::max(b.rho_max, r.rho);
    b.q_max = std::max(b.q_max, r.q);
  }
  return b;
}

MacroscopicDataset parse_macroscopic(const std::string& text, const MacroSchema& schema) {
  const Csv csv = parse_csv(text);
  const auto c_id = find_column(csv, schema.sensor_id);
  const std::size_t cx = require_column(csv, schema.x);
  const std::size_t ct = require_column(csv, schema.t);
  const std::size_t cq = require_column(csv, schema.q);
  const std::size_t crho = require_column(csv, schema.rho);
  const std::size_t cu = require_column(csv, schema.u);

  MacroscopicDataset data;
  for (const auto& [line, f] : csv.rows) {
    MacroRow r;
    r.sensor_id = c_id ? parse_id(f[*c_id], line, schema.sensor_id) : 0;
    r.x = parse_number(f[cx], line, schema.x);
    r.t = parse_number(f[ct], line, schema.t);
    r.q = parse_number(f[cq], line, schema.q);
    r.rho = parse_number(f[crho], line, schema.rho);
    r.u = parse_number(f[cu], line, schema.u);
    const double implied = r.u * r.rho;
    const double ref = std::max(std::abs(r.q), std::abs(implied));
    if (ref > 0.0 && std::abs(implied - r.q) > kFlowConsistencyTol * ref) {
      data.flags.push_back({line, "u * rho differs from q by more than 5%"});
    }
    data.rows.push_back(r);
  }
  return data;
}

MacroscopicDataset load_macroscopic(const std::string& path, const MacroSchema& schema) {
  return parse_macroscopic(read_file(path), schema);
}

std::string format_macroscopic(const MacroscopicDataset& data) {
  const MacroSchema s;
  std::string out = s.sensor_id + "," + s.x + "," + s.t + "," + s.q + "," + s.rho + "," + s.u + "\n";
  for (const auto& r : data.rows) {
    out += std::to_string(r.sensor_id) + "," + format_double(r.x) + "," + format_double(r.t) +
           "," + format_double(r.q) + "," + format_double(r.rho) + "," + format_double(r.u) + "\n";
  }
  return out;
}

void write_macroscopic(const std::string& path, const MacroscopicDataset& data) {
  write_file(path, format_macroscopic(data));
}

void MacroSynthConfig::validate() const {
  if (!(fd.v_free > 0.0) || !(fd.rho_jam > 0.0)) fail_validation("FD parameters must be positive");
  if (!(road_length > 0.0) || !(horizon > 0.0) || !(sample_every > 0.0)) {
    fail_validation("road length, horizon and sampling period must be positive");
  }
  if (cells < 2 || sensors < 1 || sensors > cells) fail_validation("need 2+ cells and 1..cells sensors");
  if (!(noise >= 0.0)) fail_validation("noise must be nonnegative");
}

MacroscopicDataset generate_synthetic_macro(const MacroSynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const auto n = static_cast<std::size_t>(cfg.cells);
  const double dx = cfg.road_length / static_cast<double>(cfg.cells);
  const double jam = cfg.fd.rho_jam;
  std::vector<double> rho(n);
  // background plus two queues of random position, height and width
  struct Bump {
    double center, height, width;
  };
  std::vector<Bump> bumps;
  for (int k = 0; k < 2; ++k) {
    bumps.push_back({unit(rng) * cfg.road_length, (0.35 + 0.3 * unit(rng)) * jam,
                     (0.05 + 0.07 * unit(rng)) * cfg.road_length});
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double x = (static_cast<double>(i) + 0.5) * dx;
    double r = 0.2 * jam;
    for (const auto& b : bumps) {
      double d = std::abs(x - b.center);
      d = std::min(d, cfg.road_length - d);
      r += b.height * std::exp(-(d / b.width) * (d / b.width));
    }
    rho[i] = std::min(r, 0.95 * jam);
  }

  const GreenshieldsFd& fd = cfg.fd;
  const double rc = fd.critical_density();
  const auto demand = [&](double r) { return fd.flow(std::min(r, rc)); };
  const auto supply = [&](double r) { return fd.flow(std::max(r, rc)); };
  const double dt_max = 0.9 * dx / fd.v_free;

  MacroscopicDataset data;
  std::vector<double> flux(n);
  double t = 0.0;
  const auto samples = static_cast<int>(std::floor(cfg.horizon / cfg.sample_every + 1e-9));
  for (int s = 0; s <= samples; ++s) {
    const double target = s * cfg.sample_every;
    while (t < target - 1e-12) {
      const double dt = std::min(dt_max, target - t);
      for (std::size_t i = 0; i < n; ++i) {
        flux[i] = std::min(demand(rho[i]), supply(rho[(i + 1) % n]));  // interface i+1/2
      }
      for (std::size_t i = 0; i < n; ++i) {
        rho[i] -= dt / dx * (flux[i] - flux[(i + n - 1) % n]);
      }
      t += dt;
    }
    for (int j = 0; j < cfg.sensors; ++j) {
      const double x = (j + 0.5) * cfg.road_length / cfg.sensors;
      const auto cell = std::min(n - 1, static_cast<std::size_t>(x / dx));
      MacroRow r;
      r.sensor_id = j;
      r.x = x;
      r.t = target;
      r.rho = rho[cell] * (1.0 + cfg.noise * gauss(rng));
      r.u = fd.speed(rho[cell]) * (1.0 + cfg.noise * gauss(rng));
      r.q = r.rho * r.u;
      data.rows.push_back(r);
    }
  }
  return data;
}

double CfTrajectory::dt() const {
  if (t.size() < 2) fail_validation("trajectory needs at least two samples");
  return (t.back() - t.front()) / static_cast<double>(t.size() - 1);
}

void CfTrajectory::validate() const {
  const std::size_t n = t.size();
  if (n < 2) fail_validation("trajectory " + std::to_string(id) + " needs at least two samples");
  if (leader_x.size() != n || leader_v.size() != n || follower_x.size() != n ||
      follower_v.size() != n || accel.size() != n) {
    fail_validation("trajectory " + std::to_string(id) + " has columns of different length");
  }
  const double step = dt();
  for (std::size_t i = 1; i < n; ++i) {
    const double d = t[i] - t[i - 1];
    if (!(d > 0.0)) {
      fail_validation("trajectory " + std::to_string(id) + ": time is not strictly increasing");
    }
    if (std::abs(d - step) > 1e-6 * step) {
      fail_validation("trajectory " + std::to_string(id) + ": time step is not constant");
    }
  }
  if (!(spacing(0) > 0.0)) {
    fail_validation("trajectory " + std::to_string(id) + ": nonpositive spacing at t0");
  }
}

std::vector<double> central_difference_accel(const std::vector<double>& v, double dt) {
  const std::size_t n = v.size();
  if (n < 2) fail_validation("need at least two speed samples");
  std::vector<double> a(n);
  a[0] = (v[1] - v[0]) / dt;
  a[n - 1] = (v[n - 1] - v[n - 2]) / dt;
  for (std::size_t i = 1; i + 1 < n; ++i) a[i] = (v[i + 1] - v[i - 1]) / (2.0 * dt);
  return a;
}

std::vector<CfTrajectory> parse_trajectories(const std::string& text, const CfSchema& schema) {
  const Csv csv = parse_csv(text);
  const std::size_t cid = require_column(csv, schema.traj_id);
  const std::size_t ct = require_column(csv, schema.t);
  const std::size_t clx = require_column(csv, schema.leader_x);
  const std::size_t clv = require_column(csv, schema.leader_v);
  const std::size_t cfx = require_column(csv, schema.follower_x);
  const std::size_t cfv = require_column(csv, schema.follower_v);
  const auto ch = find_column(csv, schema.h);
  const auto cdv = find_column(csv, schema.dv);
  const auto cacc = find_column(csv, schema.acc);

  std::vector<CfTrajectory> trajs;
  std::map<int, std::size_t> index;
  std::vector<std::size_t> first_line;
  for (const auto& [line, f] : csv.rows) {
    const int id = parse_id(f[cid], line, schema.traj_id);
    auto it = index.find(id);
    if (it == index.end()) {
      it = index.emplace(id, trajs.size()).first;
      trajs.push_back(CfTrajectory{.id = id});
      first_line.push_back(line);
    }
    CfTrajectory& tr = trajs[it->second];
    const double t = parse_number(f[ct], line, schema.t);
    if (!tr.t.empty() && !(t > tr.t.back())) {
      fail_validation("line " + std::to_string(line) + ": time not increasing in trajectory " +
                      std::to_string(id));
    }
    tr.t.push_back(t);
    tr.leader_x.push_back(parse_number(f[clx], line, schema.leader_x));
    tr.leader_v.push_back(parse_number(f[clv], line, schema.leader_v));
    tr.follower_x.push_back(parse_number(f[cfx], line, schema.follower_x));
    tr.follower_v.push_back(parse_number(f[cfv], line, schema.follower_v));
    const std::size_t i = tr.t.size() - 1;
    if (ch && std::abs(parse_number(f[*ch], line, schema.h) - tr.spacing(i)) > kDerivedTol) {
      fail_validation("line " + std::to_string(line) + ": stored spacing disagrees with positions");
    }
    if (cdv &&
        std::abs(parse_number(f[*cdv], line, schema.dv) - tr.approach_rate(i)) > kDerivedTol) {
      fail_validation("line " + std::to_string(line) + ": stored dv disagrees with speeds");
    }
    if (cacc) tr.accel.push_back(parse_number(f[*cacc], line, schema.acc));
  }
  for (std::size_t k = 0; k < trajs.size(); ++k) {
    auto& tr = trajs[k];
    if (tr.t.size() < 2) {
      fail_validation("line " + std::to_string(first_line[k]) + ": trajectory " +
                      std::to_string(tr.id) + " has fewer than two samples");
    }
    if (!cacc) tr.accel = central_difference_accel(tr.follower_v, tr.dt());
    tr.validate();
  }
  return trajs;
}

std::vector<CfTrajectory> load_trajectories(const std::string& path, const CfSchema& schema) {
  return parse_trajectories(read_file(path), schema);
}

std::string format_trajectories(const std::vector<CfTrajectory>& trajs) {
  const CfSchema s;
  std::string out = s.traj_id + "," + s.t + "," + s.leader_x + "," + s.leader_v + "," +
                    s.follower_x + "," + s.follower_v + "," + s.h + "," + s.dv + "," + s.acc +
                    "\n";
  for (const auto& tr : trajs) {
    for (std::size_t i = 0; i < tr.size(); ++i) {
      out += std::to_string(tr.id) + "," + format_double(tr.t[i]) + "," +
             format_double(tr.leader_x[i]) + "," + format_double(tr.leader_v[i]) + "," +
             format_double(tr.follower_x[i]) + "," + format_double(tr.follower_v[i]) + "," +
             format_double(tr.spacing(i)) + "," + format_double(tr.approach_rate(i)) + "," +
             format_double(tr.accel[i]) + "\n";
    }
  }
  return out;
}

void write_trajectories(const std::string& path, const std::vector<CfTrajectory>& trajs) {
  write_file(path, format_trajectories(trajs));
}

const char* to_string(LeaderProfile p) {
  switch (p) {
    case LeaderProfile::constant: return "constant";
    case LeaderProfile::stop_and_go: return "stop_and_go";
    case LeaderProfile::sinusoidal: return "sinusoidal";
  }
  return "unknown";
}

LeaderProfile leader_profile_from_string(const std::string& s) {
  if (s == "constant") return LeaderProfile::constant;
  if (s == "stop_and_go") return LeaderProfile::stop_and_go;
  if (s == "sinusoidal") return LeaderProfile::sinusoidal;
  fail_validation("unknown leader profile '" + s + "'");
}

void CfSynthConfig::validate() const {
  idm.validate();
  if (count < 1) fail_validation("need at least one trajectory");
  if (!(dt > 0.0) || !(horizon >= dt)) fail_validation("horizon must cover at least one step");
  if (!(noise >= 0.0)) fail_validation("noise must be nonnegative");
}

namespace {

double equilibrium_spacing(const IdmParams& p, double v) {
  const double free = 1.0 - std::pow(std::min(v, 0.95 * p.v0) / p.v0, p.delta);
  return (p.s0 + v * p.T0) / std::sqrt(free);
}

}  // namespace

std::vector<CfTrajectory> generate_synthetic_cf(const CfSynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto n = static_cast<std::size_t>(std::lround(cfg.horizon / cfg.dt)) + 1;
  constexpr double kTwoPi = 2.0 * std::numbers::pi;

  std::vector<CfTrajectory> out;
  for (int k = 0; k < cfg.count; ++k) {
    const double mean = 6.0 + 6.0 * unit(rng);
    const double amp = 0.2 + 0.3 * unit(rng);
    const double period = 25.0 + 25.0 * unit(rng);
    const double phase = kTwoPi * unit(rng);
    const auto leader_speed = [&](double t) {
      switch (cfg.profile) {
        case LeaderProfile::constant: return 2.0 * mean;
        case LeaderProfile::sinusoidal: return 2.0 * mean * (1.0 + amp * std::sin(kTwoPi * t / period + phase));
        case LeaderProfile::stop_and_go: break;
      }
      return mean * (1.0 + std::cos(kTwoPi * t / period + phase));
    };

    CfTrajectory tr{.id = k};
    tr.t.resize(n);
    tr.leader_x.resize(n);
    tr.leader_v.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      tr.t[i] = static_cast<double>(i) * cfg.dt;
      tr.leader_v[i] = leader_speed(tr.t[i]);
    }
    const double v_start = tr.leader_v[0];
    tr.leader_x[0] = equilibrium_spacing(cfg.idm, v_start) * (1.0 + 0.3 * unit(rng));
    for (std::size_t i = 1; i < n; ++i) {
      tr.leader_x[i] = tr.leader_x[i - 1] + 0.5 * (tr.leader_v[i - 1] + tr.leader_v[i]) * cfg.dt;
    }

    const auto model = [&](const CfState& s) {
      return idm_acceleration(s, cfg.idm) + cfg.noise * gauss(rng);
    };
    const RolloutResult r = rollout(0.0, v_start, tr.leader_x, tr.leader_v, model, cfg.dt);
    if (r.collision) fail_numerical("synthetic follower collided in trajectory " + std::to_string(k));
    tr.follower_x = r.x;
    tr.follower_v = r.v;
    tr.accel.resize(n);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      tr.accel[i] = (tr.follower_v[i + 1] - tr.follower_v[i]) / cfg.dt;
    }
    const double a_last = model(tr.state(n - 1));
    tr.accel[n - 1] = (std::max(0.0, tr.follower_v[n - 1] + a_last * cfg.dt) - tr.follower_v[n - 1]) / cfg.dt;
    tr.validate();
    out.push_back(std::move(tr));
  }
  return out;
}

std::vector<CalibrationSample> calibration_samples(const std::vector<CfTrajectory>& trajs) {
  std::vector<CalibrationSample> out;
  for (const auto& tr : trajs) {
    for (std::size_t i = 0; i < tr.size(); ++i) {
      if (tr.spacing(i) > 0.0) out.push_back({tr.state(i), tr.accel[i]});
    }
  }
  return out;
}

namespace {

template <typename T>
Split<T> split_items(const std::vector<T>& items, double ratio, std::uint64_t seed) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) fail_validation("split ratio must lie in [0, 1]");
  std::vector<std::size_t> idx(items.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(items.size())));
  std::vector<std::size_t> train(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  Split<T> out;
  for (const auto i : train) out.train.push_back(items[i]);
  for (const auto i : test) out.test.push_back(items[i]);
  return out;
}

}  // namespace

Split<MacroRow> split(const std::vector<MacroRow>& rows, double ratio, std::uint64_t seed) {
  return split_items(rows, ratio, seed);
}

Split<CfTrajectory> split(const std::vector<CfTrajectory>& trajs, double ratio,
                          std::uint64_t seed) {
  return split_items(trajs, ratio, seed);
}

}  // namespace piml
