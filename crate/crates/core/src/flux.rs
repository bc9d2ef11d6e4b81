//! Spectral particle flux density Φ(n, s, E) in the body frame: evaluation,
//! discretization, sampling, and conversion of empirical outgassing data.
//!
//! Units: Φ is a rate per solid angle, per surface area and per energy,
//! 1/(sr·m²·s·J). Single emission sites carry a rate in 1/s instead of a rate
//! per area.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Read;

use nalgebra::{Matrix3, Vector3};
use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::SurfaceQuadrature;
use crate::quadrature::{
    gauss_legendre_interval, hemisphere_rule, lebedev_covering, pairwise_sum, polar_product_rule,
    tangent_frame, AngularRule,
};
use crate::types::{Rotation, KB};

/// Tolerance on |n| for direction arguments.
pub const UNIT_TOLERANCE: f64 = 1e-9;

/// Quadrature settings shared by the integrating operations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOrders {
    /// Gauss–Legendre nodes in cos θ for hemisphere and product rules;
    /// the azimuth uses twice as many points.
    pub polar_nodes: usize,
    /// Algebraic order of the Lebedev rule used for full-sphere laws.
    pub lebedev_order: u32,
    /// Gauss–Legendre nodes for the energy integral.
    pub energy_nodes: usize,
    /// Upper energy limit for thermal spectra, in units of k_B T.
    pub energy_cutoff_kt: f64,
}

impl Default for QuadratureOrders {
    fn default() -> Self {
        QuadratureOrders {
            polar_nodes: 8,
            lebedev_order: 35,
            energy_nodes: 40,
            energy_cutoff_kt: 30.0,
        }
    }
}

impl QuadratureOrders {
    /// Every sub-rule refined by roughly a factor of two.
    pub fn refined(&self) -> Self {
        let lebedev_order = crate::quadrature::LEBEDEV_ORDERS
            .iter()
            .copied()
            .find(|&o| o >= 2 * self.lebedev_order)
            .unwrap_or(131);
        QuadratureOrders {
            polar_nodes: 2 * self.polar_nodes,
            lebedev_order,
            energy_nodes: 2 * self.energy_nodes,
            energy_cutoff_kt: self.energy_cutoff_kt,
        }
    }
}

/// Normalized energy distribution of emitted atoms.
#[derive(Debug, Clone, PartialEq)]
pub enum Spectrum {
    Monoenergetic { energy: f64 },
    /// Effusive flux spectrum ∝ E·exp(−E/k_B T).
    MaxwellBoltzmannFlux { temperature: f64 },
    Tabulated(TabulatedSpectrum),
}

/// Piecewise-linear spectral density, normalized to unit integral.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedSpectrum {
    energies: Vec<f64>,
    density: Vec<f64>,
    cdf: Vec<f64>,
}

impl TabulatedSpectrum {
    pub fn new(energies: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if energies.len() < 2 || energies.len() != values.len() {
            return Err(Error::InvalidInput(
                "tabulated spectrum needs at least two (E, value) pairs".into(),
            ));
        }
        if energies[0] < 0.0 || energies.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput(
                "spectrum energies must be nonnegative and strictly ascending".into(),
            ));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput("spectrum values must be nonnegative".into()));
        }
        let mut cdf = vec![0.0];
        for i in 1..energies.len() {
            let seg = 0.5 * (values[i] + values[i - 1]) * (energies[i] - energies[i - 1]);
            cdf.push(cdf[i - 1] + seg);
        }
        let total = *cdf.last().unwrap();
        if !(total > 0.0) {
            return Err(Error::InvalidInput("spectrum integrates to zero".into()));
        }
        Ok(TabulatedSpectrum {
            density: values.iter().map(|v| v / total).collect(),
            cdf: cdf.iter().map(|c| c / total).collect(),
            energies,
        })
    }

    /// Reads `E_joule,value` rows (header required).
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::InvalidInput(format!("spectrum CSV lacks column '{name}'")))
        };
        let (ie, iv) = (col("E_joule")?, col("value")?);
        if headers.len() != 2 {
            return Err(Error::InvalidInput(
                "spectrum CSV must have exactly the columns E_joule,value".into(),
            ));
        }
        let mut energies = Vec::new();
        let mut values = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec?;
            energies.push(parse_field(&rec, ie, k + 2)?);
            values.push(parse_field(&rec, iv, k + 2)?);
        }
        Self::new(energies, values)
    }

    fn density(&self, e: f64) -> f64 {
        interp_linear(&self.energies, &self.density, e)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let i = match self.cdf.partition_point(|&c| c <= u) {
            0 => 1,
            i if i >= self.cdf.len() => self.cdf.len() - 1,
            i => i,
        };
        let (e0, e1) = (self.energies[i - 1], self.energies[i]);
        let (d0, d1) = (self.density[i - 1], self.density[i]);
        let target = u - self.cdf[i - 1];
        let h = e1 - e0;
        let slope = (d1 - d0) / h;
        // solve d0·x + slope·x²/2 = target on [0, h]
        let x = if slope.abs() * h < 1e-12 * d0.max(1e-300) {
            target / d0
        } else {
            let disc = (d0 * d0 + 2.0 * slope * target).max(0.0);
            2.0 * target / (d0 + disc.sqrt())
        };
        e0 + x.clamp(0.0, h)
    }
}

fn parse_field(rec: &csv::StringRecord, i: usize, line: usize) -> Result<f64> {
    let raw = rec.get(i).unwrap_or("").trim();
    raw.parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("'{raw}' is not a number"),
    })
}

/// Linear interpolation with zero extrapolation.
fn interp_linear(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if xs.is_empty() || x < xs[0] || x > xs[xs.len() - 1] {
        return 0.0;
    }
    if xs.len() == 1 {
        return ys[0];
    }
    let i = xs.partition_point(|&v| v <= x).clamp(1, xs.len() - 1);
    let t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
    ys[i - 1] + t * (ys[i] - ys[i - 1])
}

impl Spectrum {
    pub fn validate(&self) -> Result<()> {
        match self {
            Spectrum::Monoenergetic { energy } if !(*energy > 0.0 && energy.is_finite()) => Err(
                Error::InvalidInput(format!("monoenergetic energy must be positive, got {energy}")),
            ),
            Spectrum::MaxwellBoltzmannFlux { temperature } if !(*temperature > 0.0 && temperature.is_finite()) => {
                Err(Error::InvalidInput(format!("temperature must be positive, got {temperature}")))
            }
            _ => Ok(()),
        }
    }

    /// Spectral density (1/J). For a monoenergetic spectrum the delta is
    /// integrated out: 1 at exactly `E₀`, 0 elsewhere.
    pub fn density(&self, e: f64) -> f64 {
        match self {
            Spectrum::Monoenergetic { energy } => {
                if e == *energy {
                    1.0
                } else {
                    0.0
                }
            }
            Spectrum::MaxwellBoltzmannFlux { temperature } => {
                if e < 0.0 {
                    return 0.0;
                }
                let kt = KB * temperature;
                e / (kt * kt) * (-e / kt).exp()
            }
            Spectrum::Tabulated(t) => t.density(e),
        }
    }

    pub fn mean_energy(&self) -> f64 {
        match self {
            Spectrum::Monoenergetic { energy } => *energy,
            Spectrum::MaxwellBoltzmannFlux { temperature } => 2.0 * KB * temperature,
            Spectrum::Tabulated(_) => {
                let rule = self.energy_rule(&QuadratureOrders::default());
                let terms: Vec<f64> = rule.iter().map(|(e, w)| e * w).collect();
                pairwise_sum(&terms)
            }
        }
    }

    /// Upper end of the energy support used by the quadratures.
    pub fn max_energy(&self, orders: &QuadratureOrders) -> f64 {
        match self {
            Spectrum::Monoenergetic { energy } => *energy,
            Spectrum::MaxwellBoltzmannFlux { temperature } => {
                orders.energy_cutoff_kt * KB * temperature
            }
            Spectrum::Tabulated(t) => *t.energies.last().unwrap(),
        }
    }

    /// Nodes and weights with Σ w g(E) ≈ ∫ dE σ(E) g(E).
    pub fn energy_rule(&self, orders: &QuadratureOrders) -> Vec<(f64, f64)> {
        self.energy_rule_with(orders.energy_nodes, orders)
    }

    /// As [`Spectrum::energy_rule`] with about `nodes` nodes. Nodes are
    /// Gauss–Legendre in √E, so they are uniform in momentum.
    pub fn energy_rule_with(&self, nodes: usize, orders: &QuadratureOrders) -> Vec<(f64, f64)> {
        let breaks = match self {
            Spectrum::Monoenergetic { energy } => return vec![(*energy, 1.0)],
            Spectrum::MaxwellBoltzmannFlux { .. } => vec![0.0, self.max_energy(orders)],
            Spectrum::Tabulated(t) => t.energies.clone(),
        };
        sqrt_energy_rule(&breaks, nodes)
            .into_iter()
            .map(|(e, w)| (e, w * self.density(e)))
            .collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Spectrum::Monoenergetic { energy } => *energy,
            Spectrum::MaxwellBoltzmannFlux { temperature } => {
                // Gamma(2, k_B T) as the sum of two exponentials
                let u1: f64 = 1.0 - rng.random::<f64>();
                let u2: f64 = 1.0 - rng.random::<f64>();
                -KB * temperature * (u1.ln() + u2.ln())
            }
            Spectrum::Tabulated(t) => t.sample(rng),
        }
    }
}

/// dE weights from Gauss–Legendre nodes in u = √E over each interval of the
/// energy `breaks`; about `total` nodes overall, at least four per interval.
fn sqrt_energy_rule(breaks: &[f64], total: usize) -> Vec<(f64, f64)> {
    let intervals = breaks.len().saturating_sub(1).max(1);
    let per = total.div_ceil(intervals).max(4);
    let mut out = Vec::new();
    for w in breaks.windows(2) {
        let (u, wt) = gauss_legendre_interval(per, w[0].sqrt(), w[1].sqrt());
        out.extend(u.into_iter().zip(wt).map(|(u, w)| (u * u, 2.0 * u * w)));
    }
    out
}

/// Emission rate per unit area as a function of the body-frame surface point.
#[derive(Debug, Clone, PartialEq)]
pub enum RateField {
    Uniform(f64),
    /// `max(0, base + gradient·s + sᵀ quadratic s)`.
    Polynomial {
        base: f64,
        gradient: Vector3<f64>,
        quadratic: Matrix3<f64>,
    },
}

impl RateField {
    pub fn at(&self, s: &Vector3<f64>) -> f64 {
        match self {
            RateField::Uniform(r) => *r,
            RateField::Polynomial {
                base,
                gradient,
                quadratic,
            } => (base + gradient.dot(s) + s.dot(&(quadratic * s))).max(0.0),
        }
    }

    fn rotated(&self, q: &Rotation) -> Self {
        match self {
            RateField::Uniform(r) => RateField::Uniform(*r),
            RateField::Polynomial {
                base,
                gradient,
                quadratic,
            } => RateField::Polynomial {
                base: *base,
                gradient: q.apply(gradient),
                quadratic: q.matrix() * quadratic * q.matrix().transpose(),
            },
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            RateField::Uniform(r) => *r >= 0.0 && r.is_finite(),
            RateField::Polynomial {
                base,
                gradient,
                quadratic,
            } => base.is_finite() && gradient.iter().chain(quadratic.iter()).all(|x| x.is_finite()),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput("rate field must be finite and nonnegative".into()))
        }
    }
}

/// Angular emission law of a single point source.
#[derive(Debug, Clone, PartialEq)]
pub enum DirectionLaw {
    /// Uniform over the full sphere.
    Isotropic,
    /// cos θ/π about `axis` on the outward hemisphere.
    Cosine { axis: Vector3<f64> },
    /// All atoms leave along `axis`.
    Directed { axis: Vector3<f64> },
}

impl DirectionLaw {
    fn axis(&self) -> Vector3<f64> {
        match self {
            DirectionLaw::Isotropic => Vector3::z(),
            DirectionLaw::Cosine { axis } | DirectionLaw::Directed { axis } => *axis,
        }
    }

    fn rotated(&self, q: &Rotation) -> Self {
        match self {
            DirectionLaw::Isotropic => DirectionLaw::Isotropic,
            DirectionLaw::Cosine { axis } => DirectionLaw::Cosine { axis: q.apply(axis) },
            DirectionLaw::Directed { axis } => DirectionLaw::Directed { axis: q.apply(axis) },
        }
    }
}

/// Tabulated Φ(cos θ, E) on a rectangular grid, bilinear, zero outside.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxTable {
    cos_theta: Vec<f64>,
    energies: Vec<f64>,
    /// `values[i * energies.len() + j]` at (cos_theta[i], energies[j]).
    values: Vec<f64>,
}

impl FluxTable {
    pub fn new(cos_theta: Vec<f64>, energies: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let ascending = |v: &[f64]| v.windows(2).all(|w| w[1] > w[0]);
        if cos_theta.len() < 2 || energies.len() < 2 || !ascending(&cos_theta) || !ascending(&energies) {
            return Err(Error::InvalidInput(
                "flux table needs at least two strictly ascending cos_theta and E values".into(),
            ));
        }
        if cos_theta[0] < -1.0 || *cos_theta.last().unwrap() > 1.0 || energies[0] < 0.0 {
            return Err(Error::InvalidInput(
                "flux table cos_theta must lie in [-1, 1] and energies must be nonnegative".into(),
            ));
        }
        if values.len() != cos_theta.len() * energies.len() {
            return Err(Error::InvalidInput("flux table is not a complete grid".into()));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput("flux table values must be nonnegative".into()));
        }
        Ok(FluxTable {
            cos_theta,
            energies,
            values,
        })
    }

    pub fn eval(&self, cos_theta: f64, e: f64) -> f64 {
        let (c, en) = (&self.cos_theta, &self.energies);
        if cos_theta < c[0] || cos_theta > c[c.len() - 1] || e < en[0] || e > en[en.len() - 1] {
            return 0.0;
        }
        let i = c.partition_point(|&v| v <= cos_theta).clamp(1, c.len() - 1);
        let j = en.partition_point(|&v| v <= e).clamp(1, en.len() - 1);
        let tc = (cos_theta - c[i - 1]) / (c[i] - c[i - 1]);
        let te = (e - en[j - 1]) / (en[j] - en[j - 1]);
        let ne = en.len();
        let v = |a: usize, b: usize| self.values[a * ne + b];
        (1.0 - tc) * ((1.0 - te) * v(i - 1, j - 1) + te * v(i - 1, j))
            + tc * ((1.0 - te) * v(i, j - 1) + te * v(i, j))
    }

    fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// How tabulated flux is assigned to surface points.
#[derive(Debug, Clone, PartialEq)]
pub enum TableSites {
    /// One table for the whole surface.
    Uniform(FluxTable),
    /// Tables for specific quadrature node indices; other nodes emit nothing.
    Nodes(BTreeMap<usize, FluxTable>),
    /// Tables at body-frame points; each node uses the nearest one.
    Positions(Vec<(Vector3<f64>, FluxTable)>),
}

impl TableSites {
    fn table_for(&self, node: usize, s: &Vector3<f64>) -> Option<&FluxTable> {
        match self {
            TableSites::Uniform(t) => Some(t),
            TableSites::Nodes(map) => map.get(&node),
            TableSites::Positions(list) => list
                .iter()
                .min_by(|a, b| (a.0 - s).norm_squared().total_cmp(&(b.0 - s).norm_squared()))
                .map(|(_, t)| t),
        }
    }

    /// Reads rows with columns `[node_index | s_x,s_y,s_z,] cos_theta, E_joule, value`.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let find = |name: &str| headers.iter().position(|h| h == name);
        let (ic, ie, iv) = match (find("cos_theta"), find("E_joule"), find("value")) {
            (Some(c), Some(e), Some(v)) => (c, e, v),
            _ => {
                return Err(Error::InvalidInput(
                    "flux CSV needs columns cos_theta, E_joule and value".into(),
                ))
            }
        };
        #[derive(PartialEq)]
        enum Key {
            None,
            Node(usize),
            Pos([usize; 3]),
        }
        let key = match (find("node_index"), find("s_x"), find("s_y"), find("s_z")) {
            (Some(i), None, None, None) => Key::Node(i),
            (None, Some(x), Some(y), Some(z)) => Key::Pos([x, y, z]),
            (None, None, None, None) => Key::None,
            _ => {
                return Err(Error::InvalidInput(
                    "flux CSV must key sites by node_index or by s_x,s_y,s_z, not both".into(),
                ))
            }
        };
        let expected = 3 + match key {
            Key::None => 0,
            Key::Node(_) => 1,
            Key::Pos(_) => 3,
        };
        if headers.len() != expected {
            return Err(Error::InvalidInput(format!(
                "flux CSV has unexpected columns: {}",
                headers.join(",")
            )));
        }
        // site key (as bit patterns for positions) -> rows
        let mut groups: BTreeMap<Vec<u64>, Vec<(f64, f64, f64)>> = BTreeMap::new();
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = k + 2;
            let site: Vec<u64> = match key {
                Key::None => vec![],
                Key::Node(i) => {
                    let raw = rec.get(i).unwrap_or("").trim();
                    vec![raw.parse::<u64>().map_err(|_| Error::Parse {
                        line,
                        message: format!("bad node_index '{raw}'"),
                    })?]
                }
                Key::Pos(cols) => cols
                    .iter()
                    .map(|&c| parse_field(&rec, c, line).map(f64::to_bits))
                    .collect::<Result<_>>()?,
            };
            let row = (
                parse_field(&rec, ic, line)?,
                parse_field(&rec, ie, line)?,
                parse_field(&rec, iv, line)?,
            );
            groups.entry(site).or_default().push(row);
        }
        if groups.is_empty() {
            return Err(Error::InvalidInput("flux CSV has no rows".into()));
        }
        let mut tables = Vec::new();
        for (site, rows) in groups {
            tables.push((site, table_from_rows(rows)?));
        }
        Ok(match key {
            Key::None => TableSites::Uniform(tables.pop().unwrap().1),
            Key::Node(_) => TableSites::Nodes(
                tables
                    .into_iter()
                    .map(|(k, t)| (k[0] as usize, t))
                    .collect(),
            ),
            Key::Pos(_) => TableSites::Positions(
                tables
                    .into_iter()
                    .map(|(k, t)| {
                        (
                            Vector3::new(f64::from_bits(k[0]), f64::from_bits(k[1]), f64::from_bits(k[2])),
                            t,
                        )
                    })
                    .collect(),
            ),
        })
    }

    fn rotated(&self, q: &Rotation) -> Self {
        match self {
            TableSites::Positions(list) => {
                TableSites::Positions(list.iter().map(|(p, t)| (q.apply(p), t.clone())).collect())
            }
            other => other.clone(),
        }
    }
}

fn table_from_rows(rows: Vec<(f64, f64, f64)>) -> Result<FluxTable> {
    let mut cos: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let mut en: Vec<f64> = rows.iter().map(|r| r.1).collect();
    cos.sort_by(f64::total_cmp);
    cos.dedup();
    en.sort_by(f64::total_cmp);
    en.dedup();
    let mut values = vec![f64::NAN; cos.len() * en.len()];
    for (c, e, v) in rows {
        let i = cos.partition_point(|&x| x < c);
        let j = en.partition_point(|&x| x < e);
        values[i * en.len() + j] = v;
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidInput(
            "flux CSV rows do not form a complete (cos_theta, E) grid".into(),
        ));
    }
    FluxTable::new(cos, en, values)
}

/// Φ(n, s, E) in the body frame.
#[derive(Debug, Clone, PartialEq)]
pub enum FluxModel {
    /// `rate(s)·(n·n_s)·Θ(n·n_s)·σ(E)/π`; `rate` is in atoms per area per second.
    CosineLaw { spectrum: Spectrum, rate: RateField },
    /// `rate(s)·σ(E)/(4π)` on the outward hemisphere only.
    Isotropic { spectrum: Spectrum, rate: RateField },
    /// A point source at `position` emitting `rate` atoms per second.
    SingleSite {
        position: Vector3<f64>,
        law: DirectionLaw,
        spectrum: Spectrum,
        rate: f64,
    },
    Tabulated(TableSites),
}

/// A point at which atoms are emitted, with its quadrature weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmissionSite {
    /// Index into the surface quadrature (0 for a single site).
    pub index: usize,
    pub position: Vector3<f64>,
    /// Outward normal, or the emission axis of a single site.
    pub normal: Vector3<f64>,
    /// Area weight (m²); 1 for a single site.
    pub weight: f64,
}

/// Discretized emission measure of one site: Σᵢⱼ w[i][j] g(nᵢ, Eⱼ)
/// ≈ ∫dE ∫d²n Φ(n, s, E) g(n, E) (per unit area for surface sites).
#[derive(Debug, Clone)]
pub struct SiteMeasure {
    pub directions: Vec<Vector3<f64>>,
    pub energies: Vec<f64>,
    weights: MeasureWeights,
}

#[derive(Debug, Clone)]
enum MeasureWeights {
    Separable { angular: Vec<f64>, spectral: Vec<f64> },
    Full(Vec<f64>),
}

impl SiteMeasure {
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        match &self.weights {
            MeasureWeights::Separable { angular, spectral } => angular[i] * spectral[j],
            MeasureWeights::Full(w) => w[i * self.energies.len() + j],
        }
    }

    /// `cᵢ = Σⱼ w[i][j] h(Eⱼ)` for every direction.
    pub fn direction_weights(&self, h: impl Fn(f64) -> f64) -> Vec<f64> {
        let ne = self.energies.len();
        match &self.weights {
            MeasureWeights::Separable { angular, spectral } => {
                let terms: Vec<f64> = spectral
                    .iter()
                    .zip(&self.energies)
                    .map(|(w, &e)| w * h(e))
                    .collect();
                let e_sum = pairwise_sum(&terms);
                angular.iter().map(|a| a * e_sum).collect()
            }
            MeasureWeights::Full(w) => (0..self.directions.len())
                .map(|i| {
                    let terms: Vec<f64> = (0..ne).map(|j| w[i * ne + j] * h(self.energies[j])).collect();
                    pairwise_sum(&terms)
                })
                .collect(),
        }
    }

    pub fn total(&self) -> f64 {
        pairwise_sum(&self.direction_weights(|_| 1.0))
    }
}

impl FluxModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            FluxModel::CosineLaw { spectrum, rate } | FluxModel::Isotropic { spectrum, rate } => {
                spectrum.validate()?;
                rate.validate()
            }
            FluxModel::SingleSite {
                law,
                spectrum,
                rate,
                position,
            } => {
                spectrum.validate()?;
                if !(*rate >= 0.0 && rate.is_finite()) {
                    return Err(Error::InvalidInput(format!("site rate must be nonnegative, got {rate}")));
                }
                if position.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidInput("site position must be finite".into()));
                }
                let axis = law.axis();
                if (axis.norm() - 1.0).abs() > UNIT_TOLERANCE {
                    return Err(Error::NotUnit(axis.norm()));
                }
                Ok(())
            }
            FluxModel::Tabulated(_) => Ok(()),
        }
    }

    pub fn spectrum(&self) -> Option<&Spectrum> {
        match self {
            FluxModel::CosineLaw { spectrum, .. }
            | FluxModel::Isotropic { spectrum, .. }
            | FluxModel::SingleSite { spectrum, .. } => Some(spectrum),
            FluxModel::Tabulated(_) => None,
        }
    }

    /// The same emitter after rotating the body (and its flux) by `q`.
    pub fn rotated(&self, q: &Rotation) -> Self {
        match self {
            FluxModel::CosineLaw { spectrum, rate } => FluxModel::CosineLaw {
                spectrum: spectrum.clone(),
                rate: rate.rotated(q),
            },
            FluxModel::Isotropic { spectrum, rate } => FluxModel::Isotropic {
                spectrum: spectrum.clone(),
                rate: rate.rotated(q),
            },
            FluxModel::SingleSite {
                position,
                law,
                spectrum,
                rate,
            } => FluxModel::SingleSite {
                position: q.apply(position),
                law: law.rotated(q),
                spectrum: spectrum.clone(),
                rate: *rate,
            },
            FluxModel::Tabulated(t) => FluxModel::Tabulated(t.rotated(q)),
        }
    }

    /// Emission sites: the surface nodes, or the single point source.
    pub fn sites(&self, q: &SurfaceQuadrature) -> Vec<EmissionSite> {
        match self {
            FluxModel::SingleSite { position, law, .. } => vec![EmissionSite {
                index: 0,
                position: *position,
                normal: law.axis(),
                weight: 1.0,
            }],
            _ => q
                .nodes
                .iter()
                .enumerate()
                .map(|(index, n)| EmissionSite {
                    index,
                    position: n.position,
                    normal: n.normal,
                    weight: n.weight,
                })
                .collect(),
        }
    }

    /// Pointwise density with the spectral factor stripped for separable
    /// models: Φ(n, s, E) = kernel(n) σ(E). Tabulated models return Φ itself.
    /// `n` is a body-frame unit vector. Directed single sites have no
    /// pointwise density and return `None`.
    pub fn kernel(&self, site: &EmissionSite, n: &Vector3<f64>, e: f64) -> Option<f64> {
        let c = n.dot(&site.normal);
        Some(match self {
            FluxModel::CosineLaw { rate, .. } => rate.at(&site.position) * c.max(0.0) / PI,
            FluxModel::Isotropic { rate, .. } => {
                if c > 0.0 {
                    rate.at(&site.position) / (4.0 * PI)
                } else {
                    0.0
                }
            }
            FluxModel::SingleSite { law, rate, .. } => match law {
                DirectionLaw::Isotropic => rate / (4.0 * PI),
                DirectionLaw::Cosine { .. } => rate * c.max(0.0) / PI,
                DirectionLaw::Directed { .. } => return None,
            },
            FluxModel::Tabulated(t) => t
                .table_for(site.index, &site.position)
                .map_or(0.0, |table| table.eval(c, e)),
        })
    }

    /// Upper end of the energy support used by the quadratures.
    pub fn max_energy(&self, orders: &QuadratureOrders) -> f64 {
        match self {
            FluxModel::Tabulated(sites) => table_energy_grid(sites).last().copied().unwrap_or(0.0),
            _ => self.spectrum().map_or(0.0, |s| s.max_energy(orders)),
        }
    }

    pub fn is_separable(&self) -> bool {
        !matches!(self, FluxModel::Tabulated(_))
    }

    /// Energy nodes and weights for pointwise integration: spectral weights
    /// for separable models, plain dE weights for tabulated ones.
    pub fn pointwise_energy_rule(&self, nodes: usize, orders: &QuadratureOrders) -> Vec<(f64, f64)> {
        match self {
            FluxModel::Tabulated(sites) => sqrt_energy_rule(&table_energy_grid(sites), nodes),
            _ => self
                .spectrum()
                .map(|s| s.energy_rule_with(nodes, orders))
                .unwrap_or_default(),
        }
    }

    /// Discrete emission measure of one site.
    pub fn site_measure(&self, site: &EmissionSite, orders: &QuadratureOrders) -> Result<SiteMeasure> {
        let separable = |rule: AngularRule, scale: f64, spectrum: &Spectrum| {
            let (energies, spectral): (Vec<f64>, Vec<f64>) = spectrum.energy_rule(orders).into_iter().unzip();
            SiteMeasure {
                directions: rule.directions,
                energies,
                weights: MeasureWeights::Separable {
                    angular: rule.weights.iter().map(|w| w * scale).collect(),
                    spectral,
                },
            }
        };
        Ok(match self {
            FluxModel::CosineLaw { spectrum, rate } => {
                let rule = hemisphere_rule(&site.normal, orders.polar_nodes);
                let r = rate.at(&site.position);
                let scaled = AngularRule {
                    weights: rule
                        .iter()
                        .map(|(n, w)| w * n.dot(&site.normal).max(0.0) / PI)
                        .collect(),
                    directions: rule.directions,
                };
                separable(scaled, r, spectrum)
            }
            FluxModel::Isotropic { spectrum, rate } => {
                let rule = hemisphere_rule(&site.normal, orders.polar_nodes);
                let r = rate.at(&site.position) / (4.0 * PI);
                separable(rule, r, spectrum)
            }
            FluxModel::SingleSite {
                law, spectrum, rate, ..
            } => match law {
                DirectionLaw::Isotropic => {
                    let rule = lebedev_covering(orders.lebedev_order)?.rule;
                    separable(rule, rate / (4.0 * PI), spectrum)
                }
                DirectionLaw::Cosine { axis } => {
                    let rule = hemisphere_rule(axis, orders.polar_nodes);
                    let scaled = AngularRule {
                        weights: rule.iter().map(|(n, w)| w * n.dot(axis).max(0.0) / PI).collect(),
                        directions: rule.directions,
                    };
                    separable(scaled, *rate, spectrum)
                }
                DirectionLaw::Directed { axis } => separable(
                    AngularRule {
                        directions: vec![*axis],
                        weights: vec![1.0],
                    },
                    *rate,
                    spectrum,
                ),
            },
            FluxModel::Tabulated(sites) => {
                let Some(table) = sites.table_for(site.index, &site.position) else {
                    return Ok(SiteMeasure {
                        directions: vec![],
                        energies: vec![],
                        weights: MeasureWeights::Full(vec![]),
                    });
                };
                let breaks: Vec<f64> = table.cos_theta.clone();
                let rule = polar_product_rule(&site.normal, &breaks, orders.polar_nodes, 2 * orders.polar_nodes);
                let (energies, ew): (Vec<f64>, Vec<f64>) =
                    sqrt_energy_rule(&table.energies, orders.energy_nodes).into_iter().unzip();
                let mut weights = Vec::with_capacity(rule.len() * energies.len());
                for (n, wa) in rule.iter() {
                    let c = n.dot(&site.normal);
                    for (e, we) in energies.iter().zip(&ew) {
                        weights.push(wa * we * table.eval(c, *e));
                    }
                }
                SiteMeasure {
                    directions: rule.directions,
                    energies,
                    weights: MeasureWeights::Full(weights),
                }
            }
        })
    }
}

fn table_energy_grid(sites: &TableSites) -> Vec<f64> {
    let mut all: Vec<f64> = match sites {
        TableSites::Uniform(t) => t.energies.clone(),
        TableSites::Nodes(m) => m.values().flat_map(|t| t.energies.iter().copied()).collect(),
        TableSites::Positions(l) => l.iter().flat_map(|(_, t)| t.energies.iter().copied()).collect(),
    };
    all.sort_by(f64::total_cmp);
    all.dedup();
    all
}

fn check_unit(n: &Vector3<f64>) -> Result<()> {
    let norm = n.norm();
    if (norm - 1.0).abs() > UNIT_TOLERANCE || !norm.is_finite() {
        return Err(Error::NotUnit(norm));
    }
    Ok(())
}

/// Φ(n, s, E) for a body-frame direction `n` at surface point `s` with normal `n_s`.
///
/// For a single site the result is nonzero only at its own position and is
/// the rate per solid angle and energy (the surface delta is integrated out).
/// A monoenergetic spectrum contributes 1 at exactly its energy and 0
/// elsewhere (the energy delta is integrated out).
pub fn flux_eval(model: &FluxModel, n: &Vector3<f64>, s: &Vector3<f64>, n_s: &Vector3<f64>, e: f64) -> Result<f64> {
    check_unit(n)?;
    if e < 0.0 {
        return Err(Error::NegativeEnergy(e));
    }
    let site = EmissionSite {
        index: 0,
        position: *s,
        normal: *n_s,
        weight: 1.0,
    };
    match model {
        FluxModel::SingleSite { position, spectrum, .. } => {
            if (position - s).norm() > 1e-12 * position.norm().max(1e-30) && position != s {
                return Ok(0.0);
            }
            let site = EmissionSite {
                normal: match model {
                    FluxModel::SingleSite { law, .. } => law.axis(),
                    _ => unreachable!(),
                },
                ..site
            };
            let k = model
                .kernel(&site, n, e)
                .ok_or_else(|| Error::Unsupported("a directed site has no pointwise density".into()))?;
            Ok(k * spectrum.density(e))
        }
        FluxModel::Tabulated(_) => Ok(model.kernel(&site, n, e).unwrap_or(0.0)),
        FluxModel::CosineLaw { spectrum, .. } | FluxModel::Isotropic { spectrum, .. } => {
            Ok(model.kernel(&site, n, e).unwrap_or(0.0) * spectrum.density(e))
        }
    }
}

/// Per-site emission rates (1/s) on the quadrature, in site order.
pub fn site_rates(model: &FluxModel, q: &SurfaceQuadrature, orders: &QuadratureOrders) -> Result<Vec<f64>> {
    model
        .sites(q)
        .iter()
        .map(|site| Ok(model.site_measure(site, orders)?.total() * site.weight))
        .collect()
}

/// ∫dE ∮d²s ∫d²n Φ, atoms per second.
pub fn total_rate(model: &FluxModel, q: &SurfaceQuadrature) -> Result<f64> {
    total_rate_with(model, q, &QuadratureOrders::default())
}

pub fn total_rate_with(model: &FluxModel, q: &SurfaceQuadrature, orders: &QuadratureOrders) -> Result<f64> {
    Ok(pairwise_sum(&site_rates(model, q, orders)?))
}

/// One emission event in the body frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub site: usize,
    pub position: Vector3<f64>,
    pub direction: Vector3<f64>,
    pub energy: f64,
}

enum SiteSelection {
    /// Candidate drawn ∝ area, accepted with probability rate(s)/max_rate.
    Thinning { rates: Vec<f64>, max_rate: f64 },
    /// Drawn ∝ the site's total emission (tabulated sites).
    Direct,
}

/// Draws emission events (n, s, E) distributed according to Φ.
pub struct EventSampler {
    model: FluxModel,
    sites: Vec<EmissionSite>,
    /// Cumulative (normalized) candidate weights.
    cdf: Vec<f64>,
    selection: SiteSelection,
    table_envelopes: Vec<f64>,
    total_rate: f64,
}

impl EventSampler {
    pub fn new(model: &FluxModel, q: &SurfaceQuadrature) -> Result<Self> {
        Self::with_orders(model, q, &QuadratureOrders::default())
    }

    pub fn with_orders(model: &FluxModel, q: &SurfaceQuadrature, orders: &QuadratureOrders) -> Result<Self> {
        model.validate()?;
        let sites = model.sites(q);
        if sites.is_empty() {
            return Err(Error::InvalidInput("no emission sites".into()));
        }
        let total_rate = total_rate_with(model, q, orders)?;
        let (candidate, selection, table_envelopes) = match model {
            FluxModel::CosineLaw { rate, .. } | FluxModel::Isotropic { rate, .. } => {
                let rates: Vec<f64> = sites.iter().map(|s| rate.at(&s.position)).collect();
                let max_rate = rates.iter().copied().fold(0.0, f64::max);
                (
                    sites.iter().map(|s| s.weight).collect::<Vec<_>>(),
                    SiteSelection::Thinning { rates, max_rate },
                    vec![],
                )
            }
            FluxModel::SingleSite { .. } => (vec![1.0], SiteSelection::Direct, vec![]),
            FluxModel::Tabulated(t) => {
                let per_site = site_rates(model, q, orders)?;
                let env = sites
                    .iter()
                    .map(|s| t.table_for(s.index, &s.position).map_or(0.0, FluxTable::max_value))
                    .collect();
                (per_site, SiteSelection::Direct, env)
            }
        };
        let mut cdf = Vec::with_capacity(candidate.len());
        let mut acc = 0.0;
        for w in &candidate {
            acc += w;
            cdf.push(acc);
        }
        if !(acc > 0.0) {
            return Err(Error::InvalidInput("flux model has zero total emission".into()));
        }
        for c in &mut cdf {
            *c /= acc;
        }
        Ok(EventSampler {
            model: model.clone(),
            sites,
            cdf,
            selection,
            table_envelopes,
            total_rate,
        })
    }

    pub fn total_rate(&self) -> f64 {
        self.total_rate
    }

    pub fn sites(&self) -> &[EmissionSite] {
        &self.sites
    }

    fn pick_candidate<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Event {
        let idx = loop {
            let k = self.pick_candidate(rng);
            match &self.selection {
                SiteSelection::Thinning { rates, max_rate } => {
                    if rates[k] >= *max_rate || rng.random::<f64>() * max_rate < rates[k] {
                        break k;
                    }
                }
                SiteSelection::Direct => break k,
            }
        };
        let site = self.sites[idx];
        let (direction, energy) = match &self.model {
            FluxModel::CosineLaw { spectrum, .. } => (sample_cosine(&site.normal, rng), spectrum.sample(rng)),
            FluxModel::Isotropic { spectrum, .. } => (sample_hemisphere(&site.normal, rng), spectrum.sample(rng)),
            FluxModel::SingleSite { law, spectrum, .. } => {
                let n = match law {
                    DirectionLaw::Isotropic => sample_sphere(rng),
                    DirectionLaw::Cosine { axis } => sample_cosine(axis, rng),
                    DirectionLaw::Directed { axis } => *axis,
                };
                (n, spectrum.sample(rng))
            }
            FluxModel::Tabulated(t) => {
                let table = t
                    .table_for(site.index, &site.position)
                    .expect("selected sites always carry a table");
                sample_table(table, &site.normal, self.table_envelopes[idx], rng)
            }
        };
        Event {
            site: idx,
            position: site.position,
            direction,
            energy,
        }
    }
}

/// Draws a single event; builds the sampler on every call, so prefer
/// [`EventSampler`] for repeated draws.
pub fn sample_event<R: Rng + ?Sized>(model: &FluxModel, q: &SurfaceQuadrature, rng: &mut R) -> Result<Event> {
    Ok(EventSampler::new(model, q)?.sample(rng))
}

fn local_direction(pole: &Vector3<f64>, cos_theta: f64, phi: f64) -> Vector3<f64> {
    let (t1, t2) = tangent_frame(pole);
    let sin_theta = (1.0 - cos_theta * cos_theta).max(0.0).sqrt();
    pole * cos_theta + t1 * (sin_theta * phi.cos()) + t2 * (sin_theta * phi.sin())
}

fn sample_cosine<R: Rng + ?Sized>(pole: &Vector3<f64>, rng: &mut R) -> Vector3<f64> {
    let c = rng.random::<f64>().sqrt();
    local_direction(pole, c, 2.0 * PI * rng.random::<f64>())
}

fn sample_hemisphere<R: Rng + ?Sized>(pole: &Vector3<f64>, rng: &mut R) -> Vector3<f64> {
    let c = rng.random::<f64>();
    local_direction(pole, c, 2.0 * PI * rng.random::<f64>())
}

fn sample_sphere<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    let c = 2.0 * rng.random::<f64>() - 1.0;
    local_direction(&Vector3::z(), c, 2.0 * PI * rng.random::<f64>())
}

fn sample_table<R: Rng + ?Sized>(table: &FluxTable, normal: &Vector3<f64>, envelope: f64, rng: &mut R) -> (Vector3<f64>, f64) {
    let (c0, c1) = (table.cos_theta[0], *table.cos_theta.last().unwrap());
    let (e0, e1) = (table.energies[0], *table.energies.last().unwrap());
    loop {
        let c = c0 + (c1 - c0) * rng.random::<f64>();
        let e = e0 + (e1 - e0) * rng.random::<f64>();
        if rng.random::<f64>() * envelope < table.eval(c, e) {
            return (local_direction(normal, c, 2.0 * PI * rng.random::<f64>()), e);
        }
    }
}

/// Pa·m³/(s·m²) per Torr·l/(cm²·s): (101325/760 Pa/Torr)·(1e-3 m³/l)·(1e4 cm²/m²).
pub const TORR_L_PER_CM2_S: f64 = 101_325.0 / 760.0 * 1e-3 * 1e4;

pub fn torr_l_per_cm2_s_to_si(value: f64) -> f64 {
    value * TORR_L_PER_CM2_S
}

pub fn si_to_torr_l_per_cm2_s(value: f64) -> f64 {
    value / TORR_L_PER_CM2_S
}

/// Ideal-gas conversion of a specific outgassing throughput (Pa·m³/(s·m²))
/// from `area` (m²) at gas temperature `t_gas` (K) into atoms per second.
pub fn outgas_rate(specific_rate: f64, area: f64, t_gas: f64) -> Result<f64> {
    for (name, v) in [("specific_rate", specific_rate), ("area", area), ("t_gas", t_gas)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(specific_rate * area / (KB * t_gas))
}

/// Literature outgassing inputs for a sphere of 150 nm diameter at 295 K.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutgasPreset {
    /// Untreated bulk gold, 8.5e-8 Torr·l/(cm²·s).
    Gold,
    /// Bulk silica 30 h after baking, 6.6e-9 Pa·m³/(s·m²).
    Silica,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutgasEstimate {
    pub specific_rate_si: f64,
    pub area: f64,
    pub temperature: f64,
    pub rate_hz: f64,
    /// Literature value the preset is compared with, Hz.
    pub reference_hz: f64,
    pub note: &'static str,
}

pub const PRESET_DIAMETER: f64 = 150e-9;
pub const PRESET_TEMPERATURE: f64 = 295.0;

impl OutgasPreset {
    pub fn specific_rate_si(self) -> f64 {
        match self {
            OutgasPreset::Gold => torr_l_per_cm2_s_to_si(8.5e-8),
            OutgasPreset::Silica => 6.6e-9,
        }
    }

    /// Emitting area π d² (full sphere surface).
    pub fn area(self) -> f64 {
        PI * PRESET_DIAMETER * PRESET_DIAMETER
    }

    pub fn estimate(self) -> OutgasEstimate {
        let area = self.area();
        let specific = self.specific_rate_si();
        let rate_hz = outgas_rate(specific, area, PRESET_TEMPERATURE).expect("preset inputs are positive");
        let (reference_hz, note) = match self {
            OutgasPreset::Gold => (2.0e3, "literature estimate: about 2 kHz"),
            OutgasPreset::Silica => (
                0.33,
                "literature estimate: 0.33 Hz; the ideal-gas conversion at 295 K over the full \
                 sphere surface gives about 0.115 Hz, the temperature/area convention behind \
                 0.33 Hz is not stated",
            ),
        };
        OutgasEstimate {
            specific_rate_si: specific,
            area,
            temperature: PRESET_TEMPERATURE,
            rate_hz,
            reference_hz,
            note,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_quadrature, BodySpec, Shape};
    use crate::quadrature::lebedev;
    use crate::rng::{stream, Purpose};
    use approx::assert_relative_eq;

    fn mb(t: f64) -> Spectrum {
        Spectrum::MaxwellBoltzmannFlux { temperature: t }
    }

    fn sphere_q(r: f64, res: usize) -> SurfaceQuadrature {
        build_quadrature(&BodySpec::uniform(Shape::Sphere { radius: r }, 1e-18).unwrap(), res).unwrap()
    }

    #[test]
    fn cosine_flux_values() {
        let model = FluxModel::CosineLaw {
            spectrum: mb(300.0),
            rate: RateField::Uniform(2.0e15),
        };
        let ns = Vector3::new(0.0, 0.6, 0.8);
        let e = 1.3 * KB * 300.0;
        let along = flux_eval(&model, &ns, &ns, &ns, e).unwrap();
        assert_relative_eq!(along, 2.0e15 * mb(300.0).density(e) / PI, max_relative = 1e-15);
        let behind = flux_eval(&model, &-ns, &ns, &ns, e).unwrap();
        assert_eq!(behind, 0.0);
        assert!(matches!(
            flux_eval(&model, &(ns * 1.01), &ns, &ns, e),
            Err(Error::NotUnit(_))
        ));
    }

    #[test]
    fn cosine_flux_solid_angle_integral() {
        // oracle: Lebedev quadrature of the cosine lobe over the full sphere
        let model = FluxModel::CosineLaw {
            spectrum: mb(300.0),
            rate: RateField::Uniform(1.0),
        };
        let ns = Vector3::new(1.0, 2.0, -2.0) / 3.0;
        let e = KB * 300.0;
        let rule = lebedev(131).unwrap().rule;
        let integral = rule.integrate(|n| flux_eval(&model, n, &ns, &ns, e).unwrap());
        // the Θ kink limits Lebedev accuracy to a few 1e-4
        assert_relative_eq!(integral, mb(300.0).density(e), max_relative = 2e-3);
        let hemi = hemisphere_rule(&ns, 6).integrate(|n| flux_eval(&model, n, &ns, &ns, e).unwrap());
        assert_relative_eq!(hemi, mb(300.0).density(e), max_relative = 1e-13);
    }

    #[test]
    fn spectra_are_normalized() {
        let orders = QuadratureOrders::default();
        let w: f64 = mb(300.0).energy_rule(&orders).iter().map(|x| x.1).sum();
        assert_relative_eq!(w, 1.0, epsilon = 1e-9);
        let tab = Spectrum::Tabulated(TabulatedSpectrum::new(vec![0.0, 1e-21, 3e-21], vec![0.0, 2.0, 1.0]).unwrap());
        let w: f64 = tab.energy_rule(&orders).iter().map(|x| x.1).sum();
        assert_relative_eq!(w, 1.0, epsilon = 1e-12);
        let w: f64 = mb(300.0).energy_rule_with(60, &orders).iter().map(|x| x.1).sum();
        assert_relative_eq!(w, 1.0, epsilon = 1e-9);
        // oracle: ∫E σ dE = 2 k_B T and ∫E² σ dE = 6 (k_B T)²
        let kt = KB * 300.0;
        let m1: f64 = mb(300.0).energy_rule(&orders).iter().map(|(e, w)| e * w).sum();
        let m2: f64 = mb(300.0).energy_rule(&orders).iter().map(|(e, w)| e * e * w).sum();
        assert_relative_eq!(m1, 2.0 * kt, max_relative = 1e-10);
        assert_relative_eq!(m2, 6.0 * kt * kt, max_relative = 1e-10);
    }

    #[test]
    fn total_rate_examples() {
        let q = sphere_q(75e-9, 16);
        let gamma = 1234.5;
        let model = FluxModel::CosineLaw {
            spectrum: mb(300.0),
            rate: RateField::Uniform(gamma / q.total_area),
        };
        assert_relative_eq!(total_rate(&model, &q).unwrap(), gamma, max_relative = 1e-6);
        let site = FluxModel::SingleSite {
            position: Vector3::zeros(),
            law: DirectionLaw::Isotropic,
            spectrum: Spectrum::Monoenergetic { energy: 1e-21 },
            rate: 5.0,
        };
        assert_relative_eq!(total_rate(&site, &q).unwrap(), 5.0, max_relative = 1e-12);
    }

    #[test]
    fn total_rate_is_rotation_invariant() {
        let body = BodySpec::uniform(
            Shape::Box {
                half_extents: Vector3::new(1e-7, 2e-7, 0.5e-7),
            },
            1e-18,
        )
        .unwrap();
        let q = build_quadrature(&body, 6).unwrap();
        let model = FluxModel::Isotropic {
            spectrum: mb(400.0),
            rate: RateField::Polynomial {
                base: 1e16,
                gradient: Vector3::new(1e22, -3e22, 2e22),
                quadratic: Matrix3::identity() * 1e29,
            },
        };
        let rot = Rotation::from_axis_angle(&Vector3::new(0.2, 1.0, -0.4), 1.1);
        let a = total_rate(&model, &q).unwrap();
        let b = total_rate(&model.rotated(&rot), &q.rotated(&rot)).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-9);
    }

    #[test]
    fn single_site_samples_from_its_position() {
        let s0 = Vector3::new(1e-8, 0.0, 2e-8);
        let model = FluxModel::SingleSite {
            position: s0,
            law: DirectionLaw::Isotropic,
            spectrum: mb(300.0),
            rate: 3.0,
        };
        let q = sphere_q(1e-7, 4);
        let sampler = EventSampler::new(&model, &q).unwrap();
        let mut rng = stream(1, Purpose::Test, 0);
        for _ in 0..100 {
            let ev = sampler.sample(&mut rng);
            assert_eq!(ev.position, s0);
            assert!((ev.direction.norm() - 1.0).abs() < 1e-12);
        }
        assert!(flux_eval(&model, &Vector3::z(), &Vector3::zeros(), &Vector3::z(), 1e-21).unwrap() == 0.0);
    }

    #[test]
    fn cosine_sampling_mean_cosine() {
        let q = sphere_q(1e-7, 8);
        let model = FluxModel::CosineLaw {
            spectrum: mb(300.0),
            rate: RateField::Uniform(1e15),
        };
        let sampler = EventSampler::new(&model, &q).unwrap();
        let mut rng = stream(2, Purpose::Test, 0);
        let n = 1_000_000;
        let (mut sum, mut sum2) = (0.0, 0.0);
        for _ in 0..n {
            let ev = sampler.sample(&mut rng);
            let c = ev.direction.dot(&q.nodes[ev.site].normal);
            sum += c;
            sum2 += c * c;
        }
        let mean = sum / n as f64;
        let se = ((sum2 / n as f64 - mean * mean) / n as f64).sqrt();
        // oracle: ∫cos² / ∫cos over the hemisphere = 2/3
        assert!((mean - 2.0 / 3.0).abs() < 3.0 * se, "{mean} ± {se}");
    }

    #[test]
    fn maxwell_boltzmann_sampling_mean() {
        let spec = mb(300.0);
        let mut rng = stream(3, Purpose::Test, 0);
        let n = 1_000_000;
        let (mut sum, mut sum2) = (0.0, 0.0);
        for _ in 0..n {
            let e = spec.sample(&mut rng);
            sum += e;
            sum2 += e * e;
        }
        let mean = sum / n as f64;
        let se = ((sum2 / n as f64 - mean * mean) / n as f64).sqrt();
        // oracle: ∫E² e^{−E/kT} / ∫E e^{−E/kT} = 2kT
        assert!((mean - 2.0 * KB * 300.0).abs() < 3.0 * se);
    }

    #[test]
    fn tabulated_spectrum_sampling_matches_density() {
        let t = TabulatedSpectrum::new(vec![1.0, 2.0, 4.0], vec![1.0, 3.0, 0.0]).unwrap();
        let spec = Spectrum::Tabulated(t);
        let mut rng = stream(4, Purpose::Test, 0);
        let n = 200_000;
        let mean: f64 = (0..n).map(|_| spec.sample(&mut rng)).sum::<f64>() / n as f64;
        // oracle: ∫E·ρ(E) dE of the piecewise-linear density by hand:
        // total = 2 + 3 = 5; ∫₁² E(2E−1) dE = 19/6; ∫₂⁴ E(6 − 1.5E) dE = 8
        let expect = (19.0 / 6.0 + 8.0) / 5.0;
        assert!((mean - expect).abs() < 0.01, "{mean} vs {expect}");
    }

    #[test]
    fn tabulated_flux_from_csv() {
        let csv = "cos_theta,E_joule,value\n0,1e-21,0\n0,2e-21,0\n1,1e-21,4\n1,2e-21,4\n";
        let sites = TableSites::from_csv(csv.as_bytes()).unwrap();
        let model = FluxModel::Tabulated(sites);
        let ns = Vector3::z();
        let v = flux_eval(&model, &Vector3::new(0.6, 0.0, 0.8), &ns, &ns, 1.5e-21).unwrap();
        assert_relative_eq!(v, 3.2, epsilon = 1e-12);
        assert_eq!(flux_eval(&model, &-ns, &ns, &ns, 1.5e-21).unwrap(), 0.0);
        assert_eq!(flux_eval(&model, &ns, &ns, &ns, 3e-21).unwrap(), 0.0);
        // per-area rate: ∫dE ∫d²n 4 cosθ = 1e-21 · 4π
        let q = sphere_q(1.0, 4);
        let rate = total_rate(&model, &q).unwrap();
        assert_relative_eq!(rate, q.total_area * 1e-21 * 4.0 * PI, max_relative = 1e-12);
    }

    #[test]
    fn tabulated_flux_csv_errors() {
        assert!(TableSites::from_csv("cos_theta,E_joule\n0,1\n".as_bytes()).is_err());
        assert!(TableSites::from_csv("cos_theta,E_joule,value\n0,1,1\n1,2,1\n".as_bytes()).is_err());
        assert!(TableSites::from_csv("node_index,s_x,s_y,s_z,cos_theta,E_joule,value\n".as_bytes()).is_err());
        let bad = "cos_theta,E_joule,value\n0,1,x\n";
        assert!(matches!(TableSites::from_csv(bad.as_bytes()), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn outgassing_estimates() {
        let gold = OutgasPreset::Gold.estimate();
        assert_relative_eq!(gold.specific_rate_si, 1.13324e-4, max_relative = 1e-5);
        assert_relative_eq!(gold.rate_hz, 1.97e3, max_relative = 5e-3);
        let silica = OutgasPreset::Silica.estimate();
        // hand conversion: 6.6e-9 · π(150e-9)² / (k_B · 295) = 0.11454 Hz
        assert_relative_eq!(silica.rate_hz, 0.11454, max_relative = 1e-3);
        let a = outgas_rate(1e-6, 1e-12, 300.0).unwrap();
        let b = outgas_rate(2e-6, 1e-12, 300.0).unwrap();
        assert_eq!(b, 2.0 * a);
        let x = 8.5e-8;
        assert_relative_eq!(si_to_torr_l_per_cm2_s(torr_l_per_cm2_s_to_si(x)), x, max_relative = 1e-12);
        assert!(outgas_rate(-1.0, 1.0, 1.0).is_err());
    }
}
