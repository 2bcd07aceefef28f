#pragma once

#include "bh/cell_problems.hpp"
#include "bh/geometry.hpp"
#include "bh/macro_solver.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace bh {

// Analytic data presets. All vanish on the boundary of the unit square/cube.
enum class Preset { Zero, SinProduct, GaussianBump };
const char* preset_name(Preset p);
Preset parse_preset(const std::string& s);
SpaceFunction preset_function(Preset p, int dim);
/// Time-independent source built from a preset; empty for Zero.
SpaceTimeFunction preset_source(Preset p, int dim);

struct RunConfig {
    GeometrySpec geometry;
    Coefficients coeffs;
    double k = 1.0;
    double kernel_horizon = 0.5;
    double kernel_dt = 0.01;
    double macro_horizon = 0.5;
    double macro_dt = 0.01;
    int macro_n = 16;
    Preset u0 = Preset::SinProduct;
    Preset f = Preset::Zero;
    std::vector<double> eps_list{0.5, 0.25, 0.125};
    std::vector<double> eta_list{0.2, 0.1, 0.05};
    double membrane_eps = 0.5;
    bool strip_boundary_inclusions = true;
    std::string output_dir = "bh_out";

    TimeGrid kernel_grid() const { return TimeGrid::from_horizon(kernel_horizon, kernel_dt); }
    TimeGrid macro_grid() const { return TimeGrid::from_horizon(macro_horizon, macro_dt); }
    /// k = 1 picks the connected/disconnected branch for Disk2D; otherwise by k.
    Regime regime() const;

    /// Canonical key = value text of every field except the output directory.
    std::string canonical() const;
    std::string hash() const;
};

/// Reads the INI schema documented in docs/config.md. Unknown keys, bad numbers and
/// out-of-range values throw ConfigInvalid.
RunConfig parse_config(std::istream& is);
RunConfig load_config(const std::filesystem::path& path);

/// Enforces the invariants (positive coefficients, steps, eps reciprocals of integers, ...).
void validate_config(const RunConfig& c);

}  // namespace bh
