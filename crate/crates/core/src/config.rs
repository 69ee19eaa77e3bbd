//! Tunables for the range pipeline.
//!
//! Every section deserializes with defaults for missing fields, so a system
//! file's `"solver"` object may override any subset.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct SwarmConfig {
    pub particle_count: usize,
    pub max_iterations: usize,
    /// Cognitive acceleration coefficient.
    pub c1: f64,
    /// Social acceleration coefficient.
    pub c2: f64,
    pub inertia: f64,
    /// Velocity clamp as a fraction of each box width.
    pub max_velocity: f64,
    pub niche_stagnation_window: usize,
    pub niche_variance_threshold: f64,
    pub merge_radius_factor: f64,
    pub absorb_radius_factor: f64,
    /// Roots must satisfy `h <= root_tolerance` after polishing.
    pub root_tolerance: f64,
    pub polish_iterations: usize,
    /// Roots closer than this (relative to the box diagonal) are one root.
    pub dedupe_radius: f64,
    /// A subswarm whose best fitness has not improved by a relative
    /// `1e-6` for this many iterations stops moving.
    pub stall_iterations: usize,
    pub lambda_bound: f64,
    /// Coordinate box half-width is `box_factor * largest fixed length`...
    pub box_factor: f64,
    /// ...but at least this.
    pub box_min: f64,
    /// Start the Faure sequence at `b^4 - 1` instead of 1.
    pub faure_quality_skip: bool,
}

impl Default for SwarmConfig {
    fn default() -> Self {
        SwarmConfig {
            particle_count: 2000,
            max_iterations: 500,
            c1: 1.496,
            c2: 1.496,
            inertia: 0.7298,
            max_velocity: 0.5,
            niche_stagnation_window: 3,
            niche_variance_threshold: 1e-6,
            merge_radius_factor: 1.0,
            absorb_radius_factor: 1.0,
            root_tolerance: 1e-8,
            polish_iterations: 200,
            dedupe_radius: 1e-7,
            stall_iterations: 30,
            lambda_bound: 100.0,
            box_factor: 10.0,
            box_min: 100.0,
            faure_quality_skip: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct EndpointConfig {
    /// Threshold for a singularity factor, in squared length units.
    pub delta: f64,
    /// Candidate values closer than this are one candidate.
    pub dedupe: f64,
    /// Nesting depth of singular analysis; at most 2.
    pub singular_depth: usize,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            delta: 1e-6,
            dedupe: 1e-4,
            singular_depth: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct FeasibilityConfig {
    pub starts: usize,
    /// Solvable iff the best sum of squares is below this.
    pub efeas: f64,
    pub max_iterations: usize,
}

impl Default for FeasibilityConfig {
    fn default() -> Self {
        FeasibilityConfig {
            starts: 64,
            efeas: 1e-10,
            max_iterations: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct ValidationConfig {
    /// Right-unbounded intervals are probed at `lo + probe_factor * scale`.
    pub probe_factor: f64,
    /// Also probe at 2, 4 and 8 times the system scale past `lo`.
    pub paranoid: bool,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            probe_factor: 10.0,
            paranoid: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct Config {
    pub swarm: SwarmConfig,
    pub endpoints: EndpointConfig,
    pub feasibility: FeasibilityConfig,
    pub validation: ValidationConfig,
    pub gauge: GaugeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct GaugeConfig {
    /// Pin rigid motions of ungrounded systems.
    pub enabled: bool,
    /// Check that pinning the second point's `y` keeps `G` solvable.
    pub probe: bool,
}

impl Default for GaugeConfig {
    fn default() -> Self {
        GaugeConfig {
            enabled: true,
            probe: true,
        }
    }
}
