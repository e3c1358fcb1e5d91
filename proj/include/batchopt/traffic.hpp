#pragma once

// Neighbor vehicles: IDM car-following, CSV trace playback and the
// constant-velocity prediction handed to the optimizer.

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "batchopt/basis.hpp"

namespace batchopt {

/// Straight multi-lane road in the road-aligned frame. Lane 0 is the
/// rightmost lane, centered at y = width / 2.
struct LaneGeometry {
  int num_lanes = 4;
  double width = 4.0;

  double center(int lane) const { return width * (lane + 0.5); }
  /// Nearest lane index, clamped to the road.
  int lane_of(double y) const;
};

struct VehicleState {
  int id = 0;
  double x = 0.0, y = 0.0;
  double vx = 0.0, vy = 0.0;
  int lane = 0;
};

struct IdmParams {
  double v0 = 15.0;
  double T = 1.5;
  double s0 = 2.0;
  double a_idm = 1.5;
  double b_idm = 2.0;
  /// Bumper-to-bumper gap is center distance minus this.
  double length = 5.0;
  /// Braking never exceeds this, including the overlapping-gap case.
  double hard_decel = 9.0;
};

/// Standard IDM acceleration. The gap is measured bumper to bumper along x;
/// the interaction term is floored at zero so a faster leader never pulls.
double idm_accel(const VehicleState& follower, const std::optional<VehicleState>& leader,
                 const IdmParams& p);

/// Recorded trajectories, rows (t, id, x, y, vx, vy) at a fixed period.
class TraceTable {
 public:
  struct Row {
    double t, x, y, vx, vy;
  };

  static TraceTable load_csv(const std::string& path);
  void save_csv(const std::string& path) const;

  /// Rows must arrive in increasing time per id; throws on duplicates or
  /// time going backwards.
  void add(int id, const Row& row);

  std::vector<int> ids() const;
  const std::vector<Row>& rows(int id) const;
  double period() const { return period_; }
  void set_period(double p) { period_ = p; }
  double end_time() const;

  /// Linear interpolation between samples. Before the first sample the
  /// first row is held; after the last the vehicle keeps its last velocity.
  VehicleState query(int id, double t, const LaneGeometry& lanes) const;

 private:
  std::map<int, std::vector<Row>> rows_;
  double period_ = 0.1;
};

/// Ego footprint as seen by the traffic, kept minimal so traffic does not
/// depend on the planner.
struct EgoPose {
  double x = 0.0, y = 0.0, vx = 0.0, vy = 0.0;
};

class World {
 public:
  enum class Kind { Idm, Trace };
  struct Vehicle {
    VehicleState state;
    Kind kind = Kind::Idm;
    IdmParams idm;
  };

  World(LaneGeometry lanes, std::optional<TraceTable> traces = std::nullopt);

  void add_idm(VehicleState s, const IdmParams& p);
  /// Adds every id of the trace table as a trace vehicle.
  void add_trace_vehicles();

  /// Advances all vehicles by dt. IDM vehicles follow the nearest vehicle
  /// ahead in their lane; the ego counts as a leader when its y is within
  /// `ego_reach` of the lane centerline.
  void step(double dt, const std::optional<EgoPose>& ego = std::nullopt);

  double time() const { return t_; }
  const std::vector<Vehicle>& vehicles() const { return vehicles_; }
  std::vector<VehicleState> states() const;
  const LaneGeometry& lanes() const { return lanes_; }

  double ego_reach = 3.1;

 private:
  LaneGeometry lanes_;
  std::optional<TraceTable> traces_;
  std::vector<Vehicle> vehicles_;
  double t_ = 0.0;
};

/// The m vehicles closest to (x, y), by Euclidean distance with ties to the
/// lower id. Missing slots are filled with stationary virtual obstacles
/// `pad_distance` ahead of and beside the query point.
std::vector<VehicleState> select_nearest(const std::vector<VehicleState>& vehicles, double x,
                                         double y, int m, double pad_distance = 1e4);

/// xi_j(t_k) = pos_j + vel_j (t_k - t0), flattened obstacle-major to row
/// j * n + k.
void predict_constant_velocity(const std::vector<VehicleState>& vehicles, const TimeGrid& grid,
                               Eigen::VectorXd& xi_x, Eigen::VectorXd& xi_y);

struct SyntheticTraceSpec {
  LaneGeometry lanes;
  int vehicles_per_lane = 6;
  /// Per-lane desired speed range for the IDM vehicles that generate the
  /// trace, indexed by lane (last entry reused for higher lanes).
  std::vector<double> lane_speed_lo{11.0, 13.0, 15.0, 17.0};
  std::vector<double> lane_speed_hi{13.0, 15.0, 18.0, 20.0};
  double x_start = -60.0;
  double mean_spacing = 35.0;
  double duration = 75.0;
  double period = 0.1;
  /// Probability per vehicle of a braking episode during the run.
  double brake_probability = 0.3;
  std::uint64_t seed = 1;
};

/// Dense-traffic trace produced by a seeded IDM simulation with occasional
/// braking episodes, sampled every `period` seconds.
TraceTable generate_synthetic_trace(const SyntheticTraceSpec& spec);

}  // namespace batchopt
