#pragma once

// Optimal-path functionals: last passage (Model 1) by level sweep, first
// passage (Model 2) by Dijkstra, restricted variants and brute-force oracles.

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ldp/lattice.hpp"
#include "ldp/weights.hpp"

namespace ldp {

class PassageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a brute-force oracle would enumerate more than its cap.
class EnumerationCapError : public PassageError {
 public:
  using PassageError::PassageError;
};

struct PassageResult {
  Model model = Model::M1;
  double value = 0.0;
  /// Sites along the optimal path, start first. Model 2 sites have n = 0.
  std::vector<Site> path;
  Site start;
  std::string end_condition;
};

/// Sum of field weights along a path (Model 1 or Model 2 adjacency).
double path_value(const EdgeField& field, const std::vector<Site>& path);
/// Throws PassageError unless consecutive sites are adjacent in `model`.
void check_path(Model model, const std::vector<Site>& path);

nlohmann::json to_json(const PassageResult& r);

/// Model 1 restrictions. Absent members mean: start at the origin, no
/// spatial confinement beyond the forward cone, any terminal site.
struct PathConstraint {
  /// Spatial box every site of the path must lie in.
  std::optional<Box> box;
  /// Admissible start sites, all on one level.
  std::vector<Site> starts;
  /// Admissible terminal points (spatial box at the final level).
  std::optional<Box> end_box;
};

/// Model 1: Z_n = max over directed n-step paths of V(gamma). Ties go to the
/// lexicographically smallest next site, and to the smallest start.
PassageResult last_passage(const EdgeField& field, int n,
                           const PathConstraint& constraint = {});

/// Model 2: a_n, origin to (n, 0, ..., 0) inside the field window.
PassageResult first_passage_point(const EdgeField& field, int n);
/// Model 2 point-to-point passage time inside the field window.
PassageResult first_passage_between(const EdgeField& field, const Point& from,
                                    const Point& to);

/// Model 2: G_n, sources {0} x [-n, n]^{d-1} (clipped to the window, which
/// must hold the origin), target hyperplane x_1 = n, paths confined to the
/// field window.
PassageResult first_passage_plane(const EdgeField& field, int n);

/// Model 2, d = 2: a_{delta,2^N} over the class Psi_{delta,2^N}; x_1 is the
/// progress axis and every site keeps 0 <= x_1 <= 2^N.
PassageResult restricted_first_passage(const EdgeField& field, int N,
                                       double delta);

/// Vertex and step admissibility of Psi_{delta,2^N}, with L = 2^N and
/// w = delta L.
bool psi_vertex_ok(const Point& p, int L, int w);
bool psi_step_ok(const Point& from, const Point& to, int L, int w);

struct MinimaxResult {
  double value = 0.0;
  /// Entry site attaining the outer minimum.
  Site argmin;
  /// Its best block-confined path.
  PassageResult best_path;
  /// Best confined value from every entry site.
  std::map<Site, double> per_start;
};

/// Y = min over entry sites x at level b.level_lo of the max over paths from
/// x to level b.level_hi confined to b.space.
MinimaxResult minimax_block_value(const EdgeField& field, const Block& b);

/// For each site y at `to_level` reachable inside `strip`, the minimum of
/// sum_e X_e^- over strip-confined paths ending at y. Paths start at any cone
/// site of `from_level` inside the strip at zero cost (the origin when
/// from_level = 0).
std::map<Site, double> min_negative_part_paths(const EdgeField& field,
                                               int from_level, int to_level,
                                               const Box& strip);

/// Model 1: for every site y at level n, the best value over paths from the
/// origin ending at y.
std::map<Site, double> last_passage_to_sites(const EdgeField& field, int n);

/// Model 2: passage times from `source` to every point of `region` along
/// paths confined to the region (which must lie in the field window).
/// Unreachable points map to infinity.
std::map<Point, double> first_passage_distances(const EdgeField& field,
                                                const Point& source,
                                                const Box& region);

// ---- brute-force oracles -------------------------------------------------

inline constexpr std::int64_t kOraclePathCap = std::int64_t{1} << 12;

/// Explicit enumeration of every directed n-step path from the origin.
PassageResult exhaustive_last_passage(const EdgeField& field, int n,
                                      std::int64_t cap = kOraclePathCap);

/// Depth-first enumeration of self-avoiding paths from the origin to the
/// target inside the field window, up to `max_length` edges.
PassageResult exhaustive_first_passage_point(const EdgeField& field, int n,
                                             int max_length,
                                             std::int64_t cap = 1 << 20);
PassageResult exhaustive_first_passage_plane(const EdgeField& field, int n,
                                             int max_length,
                                             std::int64_t cap = 1 << 20);

/// Self-avoiding enumeration of Psi_{delta,2^N}; feasible for N <= 2 only.
double exhaustive_restricted_first_passage(const EdgeField& field, int N,
                                           double delta,
                                           std::int64_t cap = 1 << 20);
/// Label-correcting relaxation over all admissible walks of the class.
double bellman_ford_restricted_first_passage(const EdgeField& field, int N,
                                             double delta);

}  // namespace ldp
