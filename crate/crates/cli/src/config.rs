//! JSON run configuration. Unknown keys are rejected and every semantic
//! check reports the dotted path of the offending key.

use std::fs::File;
use std::path::{Path, PathBuf};

use desorb_core::flux::{
    DirectionLaw, FluxModel, OutgasPreset, QuadratureOrders, RateField, Spectrum, TableSites, TabulatedSpectrum,
};
use desorb_core::geometry::{parse_obj, BodySpec, Shape};
use desorb_core::quadrature::LEBEDEV_ORDERS;
use desorb_core::Rotation;
use nalgebra::{Matrix3, Vector3};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub body: Option<BodyConfig>,
    pub flux: Option<FluxConfig>,
    pub atom: Option<AtomConfig>,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default)]
    pub seed: u64,
    pub locmap: Option<LocmapConfig>,
    pub simulate: Option<SimulateConfig>,
    pub outgas: Option<OutgasConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyConfig {
    pub shape: ShapeConfig,
    pub mass_kg: f64,
    /// Overrides the uniform-density centroid.
    pub center_of_mass: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeConfig {
    Sphere {
        radius: f64,
    },
    Cylinder {
        radius: f64,
        half_length: f64,
        #[serde(default = "yes")]
        capped: bool,
    },
    Box {
        half_extents: [f64; 3],
    },
    Mesh {
        path: PathBuf,
    },
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FluxConfig {
    CosineLaw {
        spectrum: SpectrumConfig,
        rate_per_m2: RateConfig,
    },
    Isotropic {
        spectrum: SpectrumConfig,
        rate_per_m2: RateConfig,
    },
    SingleSite {
        position: [f64; 3],
        law: LawConfig,
        spectrum: SpectrumConfig,
        rate_hz: f64,
    },
    Tabulated {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SpectrumConfig {
    Monoenergetic { energy_j: f64 },
    MaxwellBoltzmann { temperature_k: f64 },
    Tabulated { path: PathBuf },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum RateConfig {
    Uniform(f64),
    Polynomial {
        base: f64,
        #[serde(default)]
        gradient: [f64; 3],
        #[serde(default)]
        quadratic: [[f64; 3]; 3],
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum LawConfig {
    Isotropic,
    Cosine { axis: [f64; 3] },
    Directed { axis: [f64; 3] },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    pub mass_kg: f64,
    #[serde(default)]
    pub species: String,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    pub surface_resolution: Option<usize>,
    pub polar_nodes: Option<usize>,
    pub lebedev_order: Option<u32>,
    pub energy_nodes: Option<usize>,
    pub energy_cutoff_kt: Option<f64>,
    pub tolerance: Option<f64>,
    pub max_refinements: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocmapConfig {
    #[serde(default)]
    pub times: Vec<f64>,
    #[serde(default)]
    pub pairs: Vec<PairConfig>,
    /// Translations along a line with both orientations at identity.
    pub line: Option<LineConfig>,
    pub max_polar_nodes: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairConfig {
    pub delta_x: [f64; 3],
    /// Rotation vectors (axis times angle) of the two orientations.
    #[serde(default)]
    pub rotation: [f64; 3],
    #[serde(default)]
    pub rotation_prime: [f64; 3],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineConfig {
    pub direction: [f64; 3],
    pub min_m: f64,
    pub max_m: f64,
    pub count: usize,
    #[serde(default)]
    pub log_spacing: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub times: Vec<f64>,
    pub n_traj: usize,
    #[serde(default)]
    pub free_rotation: bool,
    pub blocks: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutgasConfig {
    pub preset: Option<PresetName>,
    pub specific_rate_torr_l_per_cm2_s: Option<f64>,
    pub specific_rate_pa_m3_per_s_m2: Option<f64>,
    pub area_m2: Option<f64>,
    pub temperature_k: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetName {
    Gold,
    Silica,
}

impl From<PresetName> for OutgasPreset {
    fn from(p: PresetName) -> Self {
        match p {
            PresetName::Gold => OutgasPreset::Gold,
            PresetName::Silica => OutgasPreset::Silica,
        }
    }
}

/// Raw text plus the directory that relative paths refer to.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub text: String,
    pub base_dir: PathBuf,
}

pub fn load(path: &Path) -> Result<LoadedConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse(&text, base_dir)
}

pub fn parse(text: &str, base_dir: PathBuf) -> Result<LoadedConfig, CliError> {
    let config: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))?;
    Ok(LoadedConfig {
        config,
        text: text.to_string(),
        base_dir,
    })
}

fn positive(key: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Config(format!("{key} must be positive, got {v}")))
    }
}

fn finite3(key: &str, v: [f64; 3]) -> Result<Vector3<f64>, CliError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(Vector3::from(v))
    } else {
        Err(CliError::Config(format!("{key} must be finite")))
    }
}

fn unit3(key: &str, v: [f64; 3]) -> Result<Vector3<f64>, CliError> {
    let v = finite3(key, v)?;
    if v.norm() == 0.0 {
        return Err(CliError::Config(format!("{key} must be nonzero")));
    }
    Ok(v.normalize())
}

fn missing(key: &str) -> CliError {
    CliError::Config(format!("missing key `{key}`"))
}

fn open(base: &Path, key: &str, path: &Path) -> Result<File, CliError> {
    let full = base.join(path);
    File::open(&full).map_err(|e| CliError::Config(format!("{key}: cannot open {}: {e}", full.display())))
}

/// Resolved numerical settings after `--resolution-scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resolution {
    pub surface: usize,
    pub orders: QuadratureOrders,
    pub tolerance: f64,
    pub max_refinements: usize,
}

impl LoadedConfig {
    fn cfg(&self) -> &RunConfig {
        &self.config
    }

    pub fn body(&self) -> Result<BodySpec, CliError> {
        let b = self.cfg().body.as_ref().ok_or_else(|| missing("body"))?;
        let shape = match &b.shape {
            ShapeConfig::Sphere { radius } => Shape::Sphere {
                radius: positive("body.shape.sphere.radius", *radius)?,
            },
            ShapeConfig::Cylinder {
                radius,
                half_length,
                capped,
            } => Shape::Cylinder {
                radius: positive("body.shape.cylinder.radius", *radius)?,
                half_length: positive("body.shape.cylinder.half_length", *half_length)?,
                capped: *capped,
            },
            ShapeConfig::Box { half_extents } => {
                for (i, h) in half_extents.iter().enumerate() {
                    positive(&format!("body.shape.box.half_extents[{i}]"), *h)?;
                }
                Shape::Box {
                    half_extents: Vector3::from(*half_extents),
                }
            }
            ShapeConfig::Mesh { path } => {
                let full = self.base_dir.join(path);
                let text = std::fs::read_to_string(&full)
                    .map_err(|e| CliError::Config(format!("body.shape.mesh.path: cannot read {}: {e}", full.display())))?;
                parse_obj(&text).map_err(|e| CliError::Config(format!("body.shape.mesh.path: {e}")))?
            }
        };
        let mass = positive("body.mass_kg", b.mass_kg)?;
        let mut spec = BodySpec::uniform(shape, mass).map_err(|e| CliError::Config(format!("body: {e}")))?;
        if let Some(c) = b.center_of_mass {
            spec = spec.with_center_of_mass(finite3("body.center_of_mass", c)?);
        }
        Ok(spec)
    }

    pub fn atom_mass(&self) -> Result<f64, CliError> {
        let a = self.cfg().atom.as_ref().ok_or_else(|| missing("atom"))?;
        positive("atom.mass_kg", a.mass_kg)
    }

    fn spectrum(&self, key: &str, s: &SpectrumConfig) -> Result<Spectrum, CliError> {
        Ok(match s {
            SpectrumConfig::Monoenergetic { energy_j } => Spectrum::Monoenergetic {
                energy: positive(&format!("{key}.monoenergetic.energy_j"), *energy_j)?,
            },
            SpectrumConfig::MaxwellBoltzmann { temperature_k } => Spectrum::MaxwellBoltzmannFlux {
                temperature: positive(&format!("{key}.maxwell_boltzmann.temperature_k"), *temperature_k)?,
            },
            SpectrumConfig::Tabulated { path } => {
                let key = format!("{key}.tabulated.path");
                let file = open(&self.base_dir, &key, path)?;
                Spectrum::Tabulated(TabulatedSpectrum::from_csv(file).map_err(|e| CliError::Config(format!("{key}: {e}")))?)
            }
        })
    }

    fn rate(key: &str, r: &RateConfig) -> Result<RateField, CliError> {
        match r {
            RateConfig::Uniform(v) => {
                if *v >= 0.0 && v.is_finite() {
                    Ok(RateField::Uniform(*v))
                } else {
                    Err(CliError::Config(format!("{key}.uniform must be nonnegative, got {v}")))
                }
            }
            RateConfig::Polynomial {
                base,
                gradient,
                quadratic,
            } => {
                let quad = Matrix3::from_row_slice(&quadratic.concat());
                if !base.is_finite() || !quad.iter().all(|x| x.is_finite()) {
                    return Err(CliError::Config(format!("{key}.polynomial must be finite")));
                }
                Ok(RateField::Polynomial {
                    base: *base,
                    gradient: finite3(&format!("{key}.polynomial.gradient"), *gradient)?,
                    quadratic: quad,
                })
            }
        }
    }

    pub fn flux(&self) -> Result<FluxModel, CliError> {
        let f = self.cfg().flux.as_ref().ok_or_else(|| missing("flux"))?;
        let model = match f {
            FluxConfig::CosineLaw { spectrum, rate_per_m2 } => FluxModel::CosineLaw {
                spectrum: self.spectrum("flux.cosine_law.spectrum", spectrum)?,
                rate: Self::rate("flux.cosine_law.rate_per_m2", rate_per_m2)?,
            },
            FluxConfig::Isotropic { spectrum, rate_per_m2 } => FluxModel::Isotropic {
                spectrum: self.spectrum("flux.isotropic.spectrum", spectrum)?,
                rate: Self::rate("flux.isotropic.rate_per_m2", rate_per_m2)?,
            },
            FluxConfig::SingleSite {
                position,
                law,
                spectrum,
                rate_hz,
            } => {
                let law = match law {
                    LawConfig::Isotropic => DirectionLaw::Isotropic,
                    LawConfig::Cosine { axis } => DirectionLaw::Cosine {
                        axis: unit3("flux.single_site.law.cosine.axis", *axis)?,
                    },
                    LawConfig::Directed { axis } => DirectionLaw::Directed {
                        axis: unit3("flux.single_site.law.directed.axis", *axis)?,
                    },
                };
                if !(*rate_hz >= 0.0 && rate_hz.is_finite()) {
                    return Err(CliError::Config(format!(
                        "flux.single_site.rate_hz must be nonnegative, got {rate_hz}"
                    )));
                }
                FluxModel::SingleSite {
                    position: finite3("flux.single_site.position", *position)?,
                    law,
                    spectrum: self.spectrum("flux.single_site.spectrum", spectrum)?,
                    rate: *rate_hz,
                }
            }
            FluxConfig::Tabulated { path } => {
                let file = open(&self.base_dir, "flux.tabulated.path", path)?;
                FluxModel::Tabulated(
                    TableSites::from_csv(file).map_err(|e| CliError::Config(format!("flux.tabulated.path: {e}")))?,
                )
            }
        };
        model.validate().map_err(|e| CliError::Config(format!("flux: {e}")))?;
        Ok(model)
    }

    pub fn resolution(&self, body: Option<&BodySpec>, scale: f64) -> Result<Resolution, CliError> {
        positive("--resolution-scale", scale)?;
        let q = &self.cfg().quadrature;
        let d = QuadratureOrders::default();
        let scaled = |v: usize| ((v as f64 * scale).round() as usize).max(1);
        let base_surface = q
            .surface_resolution
            .or_else(|| body.map(|b| b.shape.default_resolution()))
            .unwrap_or(1);
        let order = q.lebedev_order.unwrap_or(d.lebedev_order);
        if !LEBEDEV_ORDERS.contains(&order) {
            return Err(CliError::Config(format!(
                "quadrature.lebedev_order must be one of {LEBEDEV_ORDERS:?}, got {order}"
            )));
        }
        let target = order as f64 * scale;
        let lebedev_order = LEBEDEV_ORDERS
            .iter()
            .copied()
            .find(|&o| o as f64 >= target - 1e-9)
            .unwrap_or(*LEBEDEV_ORDERS.last().unwrap());
        for (key, v) in [
            ("quadrature.surface_resolution", q.surface_resolution),
            ("quadrature.polar_nodes", q.polar_nodes),
            ("quadrature.energy_nodes", q.energy_nodes),
        ] {
            if v == Some(0) {
                return Err(CliError::Config(format!("{key} must be at least 1")));
            }
        }
        let cutoff = positive("quadrature.energy_cutoff_kt", q.energy_cutoff_kt.unwrap_or(d.energy_cutoff_kt))?;
        let tolerance = positive("quadrature.tolerance", q.tolerance.unwrap_or(1e-6))?;
        Ok(Resolution {
            surface: scaled(base_surface),
            orders: QuadratureOrders {
                polar_nodes: scaled(q.polar_nodes.unwrap_or(d.polar_nodes)),
                lebedev_order,
                energy_nodes: scaled(q.energy_nodes.unwrap_or(d.energy_nodes)),
                energy_cutoff_kt: cutoff,
            },
            tolerance,
            max_refinements: q.max_refinements.unwrap_or(2),
        })
    }
}

/// Rotation vector → rotation about its direction by its length.
pub fn rotation_from_vector(key: &str, v: [f64; 3]) -> Result<Rotation, CliError> {
    let v = finite3(key, v)?;
    Ok(Rotation::from_axis_angle(&v, v.norm()))
}

impl LocmapConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        for (i, t) in self.times.iter().enumerate() {
            if !(*t >= 0.0 && t.is_finite()) {
                return Err(CliError::Config(format!("locmap.times[{i}] must be nonnegative, got {t}")));
            }
        }
        if self.pairs.is_empty() && self.line.is_none() {
            return Err(CliError::Config("locmap needs `pairs` or `line`".into()));
        }
        if let Some(l) = &self.line {
            unit3("locmap.line.direction", l.direction)?;
            if l.count == 0 {
                return Err(CliError::Config("locmap.line.count must be at least 1".into()));
            }
            if !(l.min_m.is_finite() && l.max_m.is_finite() && l.max_m >= l.min_m) {
                return Err(CliError::Config("locmap.line needs finite min_m <= max_m".into()));
            }
            if l.log_spacing && l.min_m <= 0.0 {
                return Err(CliError::Config("locmap.line.min_m must be positive with log_spacing".into()));
            }
        }
        if self.max_polar_nodes == Some(0) {
            return Err(CliError::Config("locmap.max_polar_nodes must be at least 1".into()));
        }
        Ok(())
    }
}

impl SimulateConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.n_traj < 2 {
            return Err(CliError::Config(format!("simulate.n_traj must be at least 2, got {}", self.n_traj)));
        }
        if self.times.is_empty() {
            return Err(CliError::Config("simulate.times must not be empty".into()));
        }
        for (i, t) in self.times.iter().enumerate() {
            if !(*t >= 0.0 && t.is_finite()) {
                return Err(CliError::Config(format!("simulate.times[{i}] must be nonnegative, got {t}")));
            }
        }
        if self.times.windows(2).any(|w| w[1] < w[0]) {
            return Err(CliError::Config("simulate.times must be ascending".into()));
        }
        if matches!(self.blocks, Some(b) if b < 2) {
            return Err(CliError::Config("simulate.blocks must be at least 2".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_str(s: &str) -> Result<LoadedConfig, CliError> {
        parse(s, PathBuf::new())
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse_str(r#"{"body": {"shape": {"sphere": {"radius": 1e-7}}, "mass_kg": 1e-18, "colour": 1}}"#).unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
    }

    #[test]
    fn negative_radius_is_named() {
        let c = parse_str(r#"{"body": {"shape": {"sphere": {"radius": -1e-7}}, "mass_kg": 1e-18}}"#).unwrap();
        let err = c.body().unwrap_err();
        assert!(err.to_string().contains("body.shape.sphere.radius"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn flux_variants_parse() {
        let c = parse_str(
            r#"{"flux": {"single_site": {"position": [0,0,0], "law": {"directed": {"axis": [0,0,2]}},
                 "spectrum": {"monoenergetic": {"energy_j": 1e-21}}, "rate_hz": 3}}}"#,
        )
        .unwrap();
        match c.flux().unwrap() {
            FluxModel::SingleSite { law: DirectionLaw::Directed { axis }, .. } => assert_eq!(axis, Vector3::z()),
            other => panic!("{other:?}"),
        }
        let c = parse_str(
            r#"{"flux": {"cosine_law": {"spectrum": {"maxwell_boltzmann": {"temperature_k": 300}},
                 "rate_per_m2": {"polynomial": {"base": 1, "gradient": [0,0,1]}}}}}"#,
        )
        .unwrap();
        assert!(matches!(c.flux().unwrap(), FluxModel::CosineLaw { rate: RateField::Polynomial { .. }, .. }));
    }

    #[test]
    fn resolution_scale_rounds_up_lebedev() {
        let c = parse_str("{}").unwrap();
        let r = c.resolution(None, 2.0).unwrap();
        assert_eq!(r.orders.polar_nodes, 16);
        assert!(r.orders.lebedev_order >= 70);
        assert!(c.resolution(None, -1.0).is_err());
    }
}
