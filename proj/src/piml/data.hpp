#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "piml/physics.hpp"

namespace piml {

// ---------------------------------------------------------------------------
// Macroscopic loop-detector style data

struct MacroRow {
  int sensor_id = 0;
  double x = 0.0;    // m
  double t = 0.0;    // s
  double q = 0.0;    // veh/s
  double rho = 0.0;  // veh/m
  double u = 0.0;    // m/s

  friend bool operator==(const MacroRow&, const MacroRow&) = default;
};

struct RowFlag {
  std::size_t line = 0;  // 1-based file line, header is line 1
  std::string message;
};

struct MacroBounds {
  double t_min = 0.0;
  double t_max = 0.0;
  double x_min = 0.0;
  double x_max = 0.0;
  double rho_max = 0.0;
  double q_max = 0.0;
};

struct MacroscopicDataset {
  std::vector<MacroRow> rows;
  std::vector<RowFlag> flags;  // rows where u * rho differs from q by more than 5%

  MacroBounds bounds() const;
};

/// Column names for each field. Defaults are the canonical headers.
struct MacroSchema {
  std::string sensor_id = "sensor_id";
  std::string x = "x_m";
  std::string t = "t_s";
  std::string q = "q_vps";
  std::string rho = "rho_vpm";
  std::string u = "u_mps";
};

inline constexpr double kFlowConsistencyTol = 0.05;

MacroscopicDataset load_macroscopic(const std::string& path, const MacroSchema& schema = {});
MacroscopicDataset parse_macroscopic(const std::string& text, const MacroSchema& schema = {});
void write_macroscopic(const std::string& path, const MacroscopicDataset& data);
std::string format_macroscopic(const MacroscopicDataset& data);

struct GreenshieldsFd {
  double v_free = 25.0;   // m/s
  double rho_jam = 0.15;  // veh/m

  double flow(double rho) const { return v_free * rho * (1.0 - rho / rho_jam); }
  double speed(double rho) const { return v_free * (1.0 - rho / rho_jam); }
  double critical_density() const { return 0.5 * rho_jam; }
  double capacity() const { return flow(critical_density()); }
};

struct MacroSynthConfig {
  GreenshieldsFd fd;
  double road_length = 5000.0;  // m, ring road
  double horizon = 600.0;       // s
  int cells = 250;
  int sensors = 20;
  double sample_every = 10.0;   // s
  double noise = 0.02;          // relative noise on density and speed
  std::uint64_t seed = 1;

  void validate() const;
};

/// Godunov solution of the LWR equation with a Greenshields FD on a ring
/// road, sampled at equally spaced sensors. Density and speed carry
/// multiplicative Gaussian noise; flow is their product.
MacroscopicDataset generate_synthetic_macro(const MacroSynthConfig& cfg);

// ---------------------------------------------------------------------------
// Car-following trajectories

struct CfTrajectory {
  int id = 0;
  std::vector<double> t;
  std::vector<double> leader_x;
  std::vector<double> leader_v;
  std::vector<double> follower_x;
  std::vector<double> follower_v;
  std::vector<double> accel;  // observed follower acceleration

  std::size_t size() const { return t.size(); }
  double dt() const;
  double spacing(std::size_t i) const { return leader_x[i] - follower_x[i]; }
  double approach_rate(std::size_t i) const { return follower_v[i] - leader_v[i]; }
  CfState state(std::size_t i) const { return {follower_v[i], approach_rate(i), spacing(i)}; }
  void validate() const;

  friend bool operator==(const CfTrajectory&, const CfTrajectory&) = default;
};

struct CfSchema {
  std::string traj_id = "traj_id";
  std::string t = "t_s";
  std::string leader_x = "leader_x_m";
  std::string leader_v = "leader_v_mps";
  std::string follower_x = "follower_x_m";
  std::string follower_v = "follower_v_mps";
  std::string h = "h_m";        // optional
  std::string dv = "dv_mps";    // optional
  std::string acc = "acc_mps2"; // optional
};

inline constexpr double kDerivedTol = 1e-9;

/// Rows are grouped by trajectory id in order of first appearance. Without
/// an acceleration column it is the central difference of follower speed.
std::vector<CfTrajectory> load_trajectories(const std::string& path, const CfSchema& schema = {});
std::vector<CfTrajectory> parse_trajectories(const std::string& text, const CfSchema& schema = {});
void write_trajectories(const std::string& path, const std::vector<CfTrajectory>& trajs);
std::string format_trajectories(const std::vector<CfTrajectory>& trajs);

/// Central differences inside, one-sided at the ends.
std::vector<double> central_difference_accel(const std::vector<double>& v, double dt);

enum class LeaderProfile { constant, stop_and_go, sinusoidal };

const char* to_string(LeaderProfile p);
LeaderProfile leader_profile_from_string(const std::string& s);

struct CfSynthConfig {
  IdmParams idm;
  LeaderProfile profile = LeaderProfile::stop_and_go;
  int count = 20;
  double horizon = 60.0;  // s
  double dt = 0.1;        // s
  double noise = 0.0;     // std of Gaussian noise on the applied acceleration
  std::uint64_t seed = 1;

  void validate() const;
};

/// Followers driven by the IDM (plus noise) behind a generated leader. The
/// stored acceleration is the one actually applied over each step.
std::vector<CfTrajectory> generate_synthetic_cf(const CfSynthConfig& cfg);

std::vector<CalibrationSample> calibration_samples(const std::vector<CfTrajectory>& trajs);

// ---------------------------------------------------------------------------
// Splitting

template <typename T>
struct Split {
  std::vector<T> train;
  std::vector<T> test;
};

/// Shuffled, disjoint and exhaustive; round(ratio * n) items go to train.
/// For car-following the items are whole trajectories.
Split<MacroRow> split(const std::vector<MacroRow>& rows, double ratio, std::uint64_t seed);
Split<CfTrajectory> split(const std::vector<CfTrajectory>& trajs, double ratio,
                          std::uint64_t seed);

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

}  // namespace piml
