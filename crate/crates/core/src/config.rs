//! Run configuration: one structured text file per run, validated on load,
//! with a stable content hash for provenance tracking.
//!
//! Resolution defaults are derived from the interface width so that the
//! longest mesh edge stays at or below half the width; fixing a resolution in
//! the file overrides that per-width choice.

use crate::error::{Error, Result};
use crate::potential::Potential;
use crate::surface::{build, SurfaceMesh};
use serde::{Deserialize, Serialize};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Icosphere edge-length constant: the longest edge after `l` subdivisions of
/// the unit icosahedron, midpoints projected to the sphere, approaches
/// `1.3231 / 2^l` from below (measured; projection stretches the edges near
/// face centers well beyond the flat subdivision length).
const ICOSPHERE_EDGE: f64 = 1.324;

/// FNV-1a over the raw bytes of the configuration text. Stable across runs
/// and platforms, so reports produced from the same file carry the same tag.
pub fn config_hash(text: &str) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in text.as_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub potential: PotentialConfig,
    pub surface: SurfaceConfig,
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub minmax: MinMaxConfig,
    #[serde(default)]
    pub spectrum: SpectrumConfig,
    #[serde(default)]
    pub varifold: VarifoldConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    /// `quartic`, or `polynomial` with explicit coefficients.
    pub kind: String,
    #[serde(default)]
    pub coeffs: Vec<f64>,
    /// Well-neighborhood half-width for hypothesis checks.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Convexity lower bound on the well neighborhoods.
    #[serde(default = "default_kappa")]
    pub kappa: f64,
}

fn default_alpha() -> f64 {
    0.3
}

fn default_kappa() -> f64 {
    0.4
}

impl PotentialConfig {
    pub fn build(&self) -> Result<Potential> {
        match self.kind.as_str() {
            "quartic" => Ok(Potential::quartic()),
            "polynomial" => {
                Potential::polynomial("polynomial", self.coeffs.clone(), self.alpha, self.kappa)
            }
            other => Err(Error::Validation(format!(
                "unknown potential kind {other:?}, expected quartic or polynomial"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SurfaceConfig {
    Sphere {
        radius: f64,
        #[serde(default)]
        subdivisions: Option<u32>,
    },
    Ellipsoid {
        a: f64,
        b: f64,
        c: f64,
        #[serde(default)]
        subdivisions: Option<u32>,
    },
    TorusOfRevolution {
        major_radius: f64,
        minor_radius: f64,
        #[serde(default)]
        n_major: Option<usize>,
        #[serde(default)]
        n_minor: Option<usize>,
    },
    FlatTorus {
        side: f64,
        #[serde(default)]
        n: Option<usize>,
    },
    PlanarBox {
        half_width: f64,
        #[serde(default)]
        n: Option<usize>,
    },
}

/// Smallest subdivision level whose longest edge is at most `epsilon / 2` on
/// a sphere-like surface of the given extent, clamped to a practical range.
fn auto_subdivisions(extent: f64, epsilon: f64) -> u32 {
    let target = (2.0 * ICOSPHERE_EDGE * extent / epsilon).log2().ceil();
    (target.max(2.0) as u32).min(8)
}

/// Smallest grid count whose longest edge (the cell diagonal) is at most
/// `epsilon / 2` for a periodic or boxed grid of the given span.
fn auto_grid(span: f64, epsilon: f64) -> usize {
    let n = (2.0 * std::f64::consts::SQRT_2 * span / epsilon).ceil() as usize;
    n.max(16)
}

impl SurfaceConfig {
    /// Mesh for one interface width, using the configured resolution when
    /// pinned and the width-derived default otherwise.
    pub fn build_mesh(&self, epsilon: f64) -> Result<SurfaceMesh> {
        match *self {
            SurfaceConfig::Sphere {
                radius,
                subdivisions,
            } => build::sphere(
                radius,
                subdivisions.unwrap_or_else(|| auto_subdivisions(radius, epsilon)),
            ),
            SurfaceConfig::Ellipsoid {
                a,
                b,
                c,
                subdivisions,
            } => build::ellipsoid(
                a,
                b,
                c,
                subdivisions.unwrap_or_else(|| auto_subdivisions(a.max(b).max(c), epsilon)),
            ),
            SurfaceConfig::TorusOfRevolution {
                major_radius,
                minor_radius,
                n_major,
                n_minor,
            } => build::torus_of_revolution(
                major_radius,
                minor_radius,
                n_major.unwrap_or_else(|| {
                    auto_grid(2.0 * std::f64::consts::PI * major_radius, epsilon).max(8)
                }),
                n_minor.unwrap_or_else(|| {
                    auto_grid(2.0 * std::f64::consts::PI * minor_radius, epsilon).max(8)
                }),
            ),
            SurfaceConfig::FlatTorus { side, n } => {
                build::flat_torus(side, n.unwrap_or_else(|| auto_grid(side, epsilon)))
            }
            SurfaceConfig::PlanarBox { half_width, n } => build::planar_box(
                half_width,
                n.unwrap_or_else(|| auto_grid(2.0 * half_width, epsilon)),
            ),
        }
    }

    /// Whether meshes at different widths are nested by icosphere refinement,
    /// so fields transfer by subdivision prolongation.
    pub fn supports_prolongation(&self) -> bool {
        matches!(
            self,
            SurfaceConfig::Sphere { .. } | SurfaceConfig::Ellipsoid { .. }
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    /// Interface widths, strictly decreasing.
    pub epsilons: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MinMaxConfig {
    /// Path nodes for the sweep at the first width.
    pub nodes: usize,
    pub seed: u64,
    pub max_sweeps: usize,
    pub residual_tol: f64,
}

impl Default for MinMaxConfig {
    fn default() -> Self {
        MinMaxConfig {
            nodes: 33,
            seed: 7,
            max_sweeps: 400,
            residual_tol: 1e-8,
        }
    }
}

impl MinMaxConfig {
    pub fn to_options(&self) -> crate::minmax::MinMaxOptions {
        let mut opts = crate::minmax::MinMaxOptions::default();
        opts.max_sweeps = self.max_sweeps;
        opts.residual_tol = self.residual_tol;
        opts.newton.tol = self.residual_tol;
        opts
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumConfig {
    /// Eigenpairs to resolve per width.
    pub modes: usize,
    /// Half-width of the zero band; unset falls back to a scale-derived one.
    pub zero_tol: Option<f64>,
    pub seed: u64,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        SpectrumConfig {
            modes: 8,
            zero_tol: None,
            seed: 11,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VarifoldConfig {
    /// Level whose set is extracted per width.
    pub level: f64,
    /// Exponential weight in the almost-monotonicity diagnostic.
    pub monotonicity_m: f64,
}

impl Default for VarifoldConfig {
    fn default() -> Self {
        VarifoldConfig {
            level: 0.0,
            monotonicity_m: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::Validation(format!(
                "config schema_version {} is not supported (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let eps = &self.schedule.epsilons;
        if eps.is_empty() {
            return Err(Error::Validation("schedule has no interface widths".into()));
        }
        for &e in eps {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::Validation(format!(
                    "interface widths must be positive numbers, got {e}"
                )));
            }
        }
        for w in eps.windows(2) {
            if w[1] >= w[0] {
                return Err(Error::Validation(format!(
                    "interface widths must decrease strictly, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if self.minmax.nodes < 3 {
            return Err(Error::Validation(format!(
                "a sweep path needs at least 3 nodes, got {}",
                self.minmax.nodes
            )));
        }
        if !(self.minmax.residual_tol > 0.0 && self.minmax.residual_tol.is_finite()) {
            return Err(Error::Validation(format!(
                "residual tolerance must be positive, got {}",
                self.minmax.residual_tol
            )));
        }
        if self.spectrum.modes < 3 {
            return Err(Error::Validation(format!(
                "need at least 3 spectral modes, got {}",
                self.spectrum.modes
            )));
        }
        if let Some(t) = self.spectrum.zero_tol {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::Validation(format!(
                    "zero band half-width must be nonnegative, got {t}"
                )));
            }
        }
        if !self.varifold.level.is_finite() {
            return Err(Error::Validation("level must be finite".into()));
        }
        if !self.varifold.monotonicity_m.is_finite() || self.varifold.monotonicity_m < 0.0 {
            return Err(Error::Validation(format!(
                "monotonicity weight must be nonnegative, got {}",
                self.varifold.monotonicity_m
            )));
        }
        if self.output.dir.trim().is_empty() {
            return Err(Error::Validation("output directory must be set".into()));
        }
        self.potential.build()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
schema_version = 1

[potential]
kind = "quartic"

[surface]
kind = "sphere"
radius = 1.0

[schedule]
epsilons = [0.2, 0.1, 0.05]

[output]
dir = "out"
"#;

    #[test]
    fn sample_config_parses_with_defaults() {
        let cfg = RunConfig::from_toml_str(SAMPLE).unwrap();
        assert_eq!(cfg.minmax.nodes, 33);
        assert_eq!(cfg.spectrum.modes, 8);
        assert_eq!(cfg.varifold.level, 0.0);
        assert_eq!(cfg.schedule.epsilons.len(), 3);
        cfg.potential.build().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = SAMPLE.replace("[output]", "[output]\ntypo = 3\n");
        // Move the stray key inside the output table.
        let text = text.replace("dir = \"out\"", "dir = \"out\"");
        assert!(RunConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn schedules_must_decrease() {
        let text = SAMPLE.replace("[0.2, 0.1, 0.05]", "[0.1, 0.2]");
        assert!(RunConfig::from_toml_str(&text).is_err());
        let text = SAMPLE.replace("[0.2, 0.1, 0.05]", "[]");
        assert!(RunConfig::from_toml_str(&text).is_err());
        let text = SAMPLE.replace("[0.2, 0.1, 0.05]", "[0.2, -0.1]");
        assert!(RunConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn width_derived_sphere_resolution_halves_edge_per_octave() {
        let cfg = RunConfig::from_toml_str(SAMPLE).unwrap();
        for &(eps, expect) in &[(0.2, 4u32), (0.1414, 5), (0.1, 5), (0.0707, 6), (0.05, 6)] {
            let mesh = cfg.surface.build_mesh(eps).unwrap();
            assert_eq!(
                mesh.ref_id(),
                format!("sphere(r=1,sub={expect})"),
                "eps = {eps}"
            );
            assert!(mesh.h_max() <= eps / 2.0 + 1e-12, "eps = {eps}");
        }
    }

    #[test]
    fn pinned_resolution_wins() {
        let text = SAMPLE.replace("radius = 1.0", "radius = 1.0\nsubdivisions = 3");
        let cfg = RunConfig::from_toml_str(&text).unwrap();
        let mesh = cfg.surface.build_mesh(0.05).unwrap();
        assert_eq!(mesh.ref_id(), "sphere(r=1,sub=3)");
    }

    #[test]
    fn grid_surfaces_parse_and_build() {
        let text = SAMPLE
            .replace(
                "kind = \"sphere\"\nradius = 1.0",
                "kind = \"flat_torus\"\nside = 1.0",
            )
            .replace("[0.2, 0.1, 0.05]", "[0.2]");
        let cfg = RunConfig::from_toml_str(&text).unwrap();
        let mesh = cfg.surface.build_mesh(0.2).unwrap();
        assert!(mesh.h_max() <= 0.1 + 1e-12);
        assert!(!cfg.surface.supports_prolongation());
    }

    #[test]
    fn content_hash_is_stable_and_sensitive() {
        let a = config_hash(SAMPLE);
        assert_eq!(a, config_hash(SAMPLE));
        assert_ne!(a, config_hash(&SAMPLE.replace("0.05", "0.04")));
        assert_eq!(a.len(), 16);
    }
}
