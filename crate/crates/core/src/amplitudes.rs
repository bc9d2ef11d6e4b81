//! Amplitudes of emission, normalized jump-operator magnitudes, and the
//! polar decomposition of the desorption jump.
//!
//! Directions are body-frame unit vectors unless stated otherwise. Angles of
//! tabulated amplitudes follow n = (sin θ cos φ, sin θ sin φ, cos θ).

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Read;

use nalgebra::Vector3;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::flux::{EmissionSite, FluxModel};
use crate::quadrature::{gauss_legendre, lebedev, pairwise_sum, AngularRule};
use crate::types::{momentum_from_energy, Pose, HBAR};

fn check_unit(n: &Vector3<f64>) -> Result<()> {
    let norm = n.norm();
    if (norm - 1.0).abs() > crate::flux::UNIT_TOLERANCE || !norm.is_finite() {
        return Err(Error::NotUnit(norm));
    }
    Ok(())
}

/// A₀ = m/(2πħ²)·exp(−i p n·s/ħ) at the reference orientation.
pub fn transparent_amplitude(n: &Vector3<f64>, s: &Vector3<f64>, e: f64, m_atom: f64) -> Result<Complex64> {
    check_unit(n)?;
    let p = momentum_from_energy(e, m_atom)?;
    let modulus = m_atom / (2.0 * PI * HBAR * HBAR);
    Ok(Complex64::from_polar(modulus, -p * n.dot(s) / HBAR))
}

/// Outgoing free-space Green function −(2m/ħ²)/(4π)·exp(i p |r−s|/ħ)/|r−s|.
pub fn free_green(r: &Vector3<f64>, s: &Vector3<f64>, e: f64, m_atom: f64) -> Result<Complex64> {
    let dist = (r - s).norm();
    if dist == 0.0 {
        return Err(Error::CoincidentPoints);
    }
    let p = momentum_from_energy(e, m_atom)?;
    let modulus = 2.0 * m_atom / (HBAR * HBAR) / (4.0 * PI) / dist;
    Ok(-Complex64::from_polar(modulus, p * dist / HBAR))
}

/// −r·exp(−i p r/ħ)·G₀(r n, s, E): the far-field coefficient estimated at a
/// finite radius `r`.
pub fn radial_extraction(n: &Vector3<f64>, s: &Vector3<f64>, r: f64, e: f64, m_atom: f64) -> Result<Complex64> {
    let p = momentum_from_energy(e, m_atom)?;
    let g = free_green(&(n * r), s, e, m_atom)?;
    Ok(-g * Complex64::from_polar(r, -p * r / HBAR))
}

/// One emitting site with a sharp energy and its total rate Γ(s, E) (1/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceSite {
    pub index: usize,
    pub position: Vector3<f64>,
    pub energy: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SourceSpec {
    pub sites: Vec<SourceSite>,
}

impl SourceSpec {
    pub fn validate(&self) -> Result<()> {
        for site in &self.sites {
            if !(site.rate > 0.0 && site.rate.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "site {} rate must be positive, got {}",
                    site.index, site.rate
                )));
            }
            if !(site.energy > 0.0) {
                return Err(Error::NegativeEnergy(site.energy));
            }
        }
        Ok(())
    }
}

/// A⁺(n, s, E). Implementations are called from several threads at once.
pub trait EmissionAmplitude: Sync {
    fn eval(&self, site: &SourceSite, n: &Vector3<f64>) -> Complex64;

    /// Rule used for ∫d²n |A|²; the default is the 5810-point Lebedev rule.
    fn angular_rule(&self, _site: &SourceSite) -> AngularRule {
        lebedev(131).expect("order 131 exists").rule
    }
}

/// The transparent emitter for an atom of mass `m_atom`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransparentEmitter {
    pub m_atom: f64,
}

impl EmissionAmplitude for TransparentEmitter {
    fn eval(&self, site: &SourceSite, n: &Vector3<f64>) -> Complex64 {
        transparent_amplitude(&n.normalize(), &site.position, site.energy, self.m_atom).unwrap_or_default()
    }
}

/// Complex amplitude on a (θ, φ) grid for one energy, bilinear in angle and
/// periodic in φ.
#[derive(Debug, Clone, PartialEq)]
struct AngleGrid {
    theta: Vec<f64>,
    phi: Vec<f64>,
    values: Vec<Complex64>,
}

impl AngleGrid {
    fn eval(&self, theta: f64, phi: f64) -> Complex64 {
        let (th, ph) = (&self.theta, &self.phi);
        let i = th.partition_point(|&v| v <= theta).clamp(1, th.len() - 1);
        let tt = ((theta - th[i - 1]) / (th[i] - th[i - 1])).clamp(0.0, 1.0);
        let phi = phi.rem_euclid(2.0 * PI);
        let np = ph.len();
        // cell j spans phi[j]..phi[j + 1], the last one wraps to phi[0] + 2π
        let j = ph.partition_point(|&v| v <= phi);
        let (j0, j1, lo, hi) = if j == 0 {
            (np - 1, 0, ph[np - 1] - 2.0 * PI, ph[0])
        } else if j == np {
            (np - 1, 0, ph[np - 1], ph[0] + 2.0 * PI)
        } else {
            (j - 1, j, ph[j - 1], ph[j])
        };
        let tp = if hi > lo { (phi - lo) / (hi - lo) } else { 0.0 };
        let v = |a: usize, b: usize| self.values[a * np + b];
        (v(i - 1, j0) * (1.0 - tp) + v(i - 1, j1) * tp) * (1.0 - tt) + (v(i, j0) * (1.0 - tp) + v(i, j1) * tp) * tt
    }

    /// Gauss–Legendre in θ and φ inside every grid cell, `k` nodes each way,
    /// with weights sin θ dθ dφ.
    fn cell_rule(&self, k: usize) -> AngularRule {
        let (x, w) = gauss_legendre(k);
        let mut phi_breaks = self.phi.clone();
        phi_breaks.push(self.phi[0] + 2.0 * PI);
        let mut rule = AngularRule::default();
        for tb in self.theta.windows(2) {
            let (ht, mt) = (0.5 * (tb[1] - tb[0]), 0.5 * (tb[1] + tb[0]));
            for (xt, wt) in x.iter().zip(&w) {
                let theta = mt + ht * xt;
                let (st, ct) = theta.sin_cos();
                for pb in phi_breaks.windows(2) {
                    let (hp, mp) = (0.5 * (pb[1] - pb[0]), 0.5 * (pb[1] + pb[0]));
                    for (xp, wp) in x.iter().zip(&w) {
                        let phi = mp + hp * xp;
                        rule.directions.push(Vector3::new(st * phi.cos(), st * phi.sin(), ct));
                        rule.weights.push(wt * ht * wp * hp * st);
                    }
                }
            }
        }
        rule
    }
}

/// Tabulated amplitudes per (site, energy), linear between tabulated
/// energies of the same site and zero outside them.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedAmplitude {
    sites: BTreeMap<usize, Vec<(f64, AngleGrid)>>,
}

/// Gauss–Legendre nodes per cell and axis used for the normalization.
const CELL_NODES: usize = 8;

type GridPoint = (f64, f64, Complex64);

impl TabulatedAmplitude {
    /// Rows are (site_index, E_joule, theta, phi, re, im). Each (site, E)
    /// block must be a complete grid with θ from 0 to π and φ in [0, 2π).
    pub fn from_rows(rows: &[(usize, f64, f64, f64, f64, f64)]) -> Result<Self> {
        let mut blocks: BTreeMap<(usize, u64), Vec<GridPoint>> = BTreeMap::new();
        for &(site, e, th, ph, re, im) in rows {
            if !(e > 0.0) {
                return Err(Error::NegativeEnergy(e));
            }
            if ![th, ph, re, im].iter().all(|x| x.is_finite()) {
                return Err(Error::InvalidInput("amplitude rows must be finite".into()));
            }
            blocks
                .entry((site, e.to_bits()))
                .or_default()
                .push((th, ph, Complex64::new(re, im)));
        }
        let mut sites: BTreeMap<usize, Vec<(f64, AngleGrid)>> = BTreeMap::new();
        for ((site, ebits), pts) in blocks {
            let e = f64::from_bits(ebits);
            sites.entry(site).or_default().push((e, grid_from_points(site, e, pts)?));
        }
        for list in sites.values_mut() {
            list.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
        if sites.is_empty() {
            return Err(Error::InvalidInput("amplitude table has no rows".into()));
        }
        Ok(TabulatedAmplitude { sites })
    }

    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let expected = ["site_index", "E_joule", "theta", "phi", "re", "im"];
        if headers != expected {
            return Err(Error::InvalidInput(format!(
                "amplitude CSV columns must be {}",
                expected.join(",")
            )));
        }
        let mut rows = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = k + 2;
            let field = |i: usize| -> Result<f64> {
                let raw = rec.get(i).unwrap_or("").trim();
                raw.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("'{raw}' is not a number"),
                })
            };
            let raw = rec.get(0).unwrap_or("").trim();
            let site = raw.parse::<usize>().map_err(|_| Error::Parse {
                line,
                message: format!("bad site_index '{raw}'"),
            })?;
            rows.push((site, field(1)?, field(2)?, field(3)?, field(4)?, field(5)?));
        }
        Self::from_rows(&rows)
    }

    fn grids(&self, site: usize) -> Option<&[(f64, AngleGrid)]> {
        self.sites.get(&site).map(Vec::as_slice)
    }

    fn nearest(&self, site: &SourceSite) -> Option<&AngleGrid> {
        let grids = self.grids(site.index)?;
        grids
            .iter()
            .min_by(|a, b| (a.0 - site.energy).abs().total_cmp(&(b.0 - site.energy).abs()))
            .map(|g| &g.1)
    }

    /// θ and φ nodes of the grid nearest in energy to `site`.
    pub fn grid(&self, site: &SourceSite) -> Option<(&[f64], &[f64])> {
        self.nearest(site).map(|g| (g.theta.as_slice(), g.phi.as_slice()))
    }
}

fn grid_from_points(site: usize, e: f64, pts: Vec<(f64, f64, Complex64)>) -> Result<AngleGrid> {
    let mut theta: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let mut phi: Vec<f64> = pts.iter().map(|p| p.1).collect();
    theta.sort_by(f64::total_cmp);
    theta.dedup();
    phi.sort_by(f64::total_cmp);
    phi.dedup();
    let bad = |msg: &str| Error::InvalidInput(format!("amplitude grid for site {site} at E = {e}: {msg}"));
    if theta.len() < 2 || theta[0] != 0.0 || (theta[theta.len() - 1] - PI).abs() > 1e-12 {
        return Err(bad("theta must run from 0 to pi"));
    }
    if phi.is_empty() || phi[0] < 0.0 || phi[phi.len() - 1] >= 2.0 * PI {
        return Err(bad("phi must lie in [0, 2pi)"));
    }
    let mut values = vec![None; theta.len() * phi.len()];
    for (t, p, v) in pts {
        let i = theta.partition_point(|&x| x < t);
        let j = phi.partition_point(|&x| x < p);
        values[i * phi.len() + j] = Some(v);
    }
    let values: Option<Vec<Complex64>> = values.into_iter().collect();
    let values = values.ok_or_else(|| bad("not a complete (theta, phi) grid"))?;
    Ok(AngleGrid { theta, phi, values })
}

impl EmissionAmplitude for TabulatedAmplitude {
    fn eval(&self, site: &SourceSite, n: &Vector3<f64>) -> Complex64 {
        let Some(grids) = self.grids(site.index) else {
            return Complex64::default();
        };
        let theta = n.z.clamp(-1.0, 1.0).acos();
        let phi = n.y.atan2(n.x);
        let e = site.energy;
        let k = grids.partition_point(|g| g.0 < e);
        if k < grids.len() && grids[k].0 == e {
            return grids[k].1.eval(theta, phi);
        }
        if k == 0 || k == grids.len() {
            return Complex64::default();
        }
        let (e0, g0) = &grids[k - 1];
        let (e1, g1) = &grids[k];
        let t = (e - e0) / (e1 - e0);
        g0.eval(theta, phi) * (1.0 - t) + g1.eval(theta, phi) * t
    }

    fn angular_rule(&self, site: &SourceSite) -> AngularRule {
        // cells of the grid nearest in energy; the interpolated amplitude is
        // bilinear on the union of both grids, which these cells approximate
        self.nearest(site)
            .map_or_else(AngularRule::default, |g| g.cell_rule(CELL_NODES))
    }
}

/// ∫d²n |A(n, s, E)|² for one site.
pub fn amplitude_norm(a: &dyn EmissionAmplitude, site: &SourceSite) -> f64 {
    a.angular_rule(site).integrate(|n| a.eval(site, n).norm_sqr())
}

/// Normalized |L|² = Γ(s, E)·|A(Rᵀn, s, E)|²/∫d²n' |A|², per site.
pub struct JumpOperator<'a> {
    amplitude: &'a dyn EmissionAmplitude,
    source: SourceSpec,
    norms: Vec<f64>,
}

impl<'a> JumpOperator<'a> {
    pub fn new(amplitude: &'a dyn EmissionAmplitude, source: &SourceSpec) -> Result<Self> {
        source.validate()?;
        let norms = source
            .sites
            .iter()
            .map(|site| {
                let norm = amplitude_norm(amplitude, site);
                if norm > f64::MIN_POSITIVE && norm.is_finite() {
                    Ok(norm)
                } else {
                    Err(Error::ZeroNorm { site: site.index })
                }
            })
            .collect::<Result<_>>()?;
        Ok(JumpOperator {
            amplitude,
            source: source.clone(),
            norms,
        })
    }

    /// |L|² (1/(sr·s)) for the `k`-th site of the source, lab direction `n`.
    pub fn magnitude_squared(&self, k: usize, n: &Vector3<f64>, pose: &Pose) -> Result<f64> {
        check_unit(n)?;
        let site = self
            .source
            .sites
            .get(k)
            .ok_or_else(|| Error::InvalidInput(format!("no site at position {k} in the source")))?;
        let body_n = pose.rotation.apply_inverse(n);
        Ok(site.rate * self.amplitude.eval(site, &body_n).norm_sqr() / self.norms[k])
    }

    /// ∮d²n |L|² for the `k`-th site, on the amplitude's own rule.
    pub fn total(&self, k: usize) -> f64 {
        let site = &self.source.sites[k];
        let rule = self.amplitude.angular_rule(site);
        let terms: Vec<f64> = rule
            .iter()
            .map(|(n, w)| w * self.amplitude.eval(site, n).norm_sqr())
            .collect();
        site.rate * pairwise_sum(&terms) / self.norms[k]
    }
}

/// Single-shot |L|²; prefer [`JumpOperator`] when evaluating many directions.
pub fn jump_magnitude_squared(a: &dyn EmissionAmplitude, source: &SourceSpec, k: usize, n: &Vector3<f64>, pose: &Pose) -> Result<f64> {
    JumpOperator::new(a, source)?.magnitude_squared(k, n, pose)
}

/// Polar decomposition of the desorption jump at classical pose parameters:
/// magnitude √Φ(Rᵀn, s, E) and phase −p n·(X + R s)/ħ.
#[derive(Debug, Clone, Copy)]
pub struct DesorptionJump<'a> {
    pub model: &'a FluxModel,
    pub m_atom: f64,
}

impl<'a> DesorptionJump<'a> {
    pub fn new(model: &'a FluxModel, m_atom: f64) -> Result<Self> {
        model.validate()?;
        if !(m_atom > 0.0) {
            return Err(Error::InvalidInput(format!("atom mass must be positive, got {m_atom}")));
        }
        Ok(DesorptionJump { model, m_atom })
    }

    /// |L|² = Φ(Rᵀn, s, E) for lab direction `n`.
    pub fn magnitude_squared(&self, site: &EmissionSite, n: &Vector3<f64>, e: f64, pose: &Pose) -> Result<f64> {
        let body_n = pose.rotation.apply_inverse(n);
        crate::flux::flux_eval(self.model, &body_n, &site.position, &site.normal, e)
    }

    pub fn phase(&self, s: &Vector3<f64>, n: &Vector3<f64>, e: f64, pose: &Pose) -> Result<f64> {
        let p = momentum_from_energy(e, self.m_atom)?;
        Ok(-p * n.dot(&(pose.position + pose.rotation.apply(s))) / HBAR)
    }

    /// phase(pose) − phase(other) = −p n·(ΔX + (R − R')s)/ħ.
    pub fn phase_difference(&self, s: &Vector3<f64>, n: &Vector3<f64>, e: f64, pose: &Pose, other: &Pose) -> Result<f64> {
        let p = momentum_from_energy(e, self.m_atom)?;
        let v = pose.position - other.position + pose.rotation.apply(s) - other.rotation.apply(s);
        Ok(-p * n.dot(&v) / HBAR)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flux::{RateField, Spectrum};
    use crate::types::{Rotation, ATOMIC_MASS_UNIT};
    use approx::assert_relative_eq;

    const M: f64 = 28.0134 * ATOMIC_MASS_UNIT;
    const E: f64 = 4.1e-21;

    #[test]
    fn transparent_amplitude_examples() {
        let a = transparent_amplitude(&Vector3::z(), &Vector3::zeros(), E, M).unwrap();
        assert_eq!(a.im, 0.0);
        assert_relative_eq!(a.re, M / (2.0 * PI * HBAR * HBAR), max_relative = 1e-15);
        let d = 3e-9;
        let s = Vector3::new(0.0, 0.0, d);
        let p = momentum_from_energy(E, M).unwrap();
        let b = transparent_amplitude(&Vector3::z(), &s, E, M).unwrap();
        let expect = Complex64::from_polar(a.re, -p * d / HBAR);
        assert!((b - expect).norm() < 1e-12 * a.re);
        let c = transparent_amplitude(&Vector3::new(0.6, 0.0, 0.8), &s, E, M).unwrap();
        assert_relative_eq!(c.norm(), a.re, max_relative = 1e-14);
        assert!(transparent_amplitude(&(Vector3::z() * 2.0), &s, E, M).is_err());
    }

    #[test]
    fn free_green_examples() {
        let s = Vector3::new(1e-9, 0.0, 0.0);
        let r = Vector3::new(0.0, 4e-9, 0.0);
        let g = free_green(&r, &s, E, M).unwrap();
        let dist = (r - s).norm();
        assert_relative_eq!(g.norm(), M / (2.0 * PI * HBAR * HBAR) / dist, max_relative = 1e-14);
        assert!(matches!(free_green(&s, &s, E, M), Err(Error::CoincidentPoints)));
        // outgoing: the phase of −G grows as p r/ħ at s = 0
        let p = momentum_from_energy(E, M).unwrap();
        for r in [1e-9, 2.5e-9, 7e-9] {
            let g = free_green(&Vector3::new(0.0, 0.0, r), &Vector3::zeros(), E, M).unwrap();
            let wrapped = ((-g).arg() - p * r / HBAR).rem_euclid(2.0 * PI);
            assert!(wrapped.min(2.0 * PI - wrapped) < 1e-9, "r = {r}");
        }
    }

    #[test]
    fn transparent_jump_is_isotropic_and_normalized() {
        let emitter = TransparentEmitter { m_atom: M };
        let source = SourceSpec {
            sites: vec![SourceSite {
                index: 0,
                position: Vector3::new(2e-8, -1e-8, 5e-8),
                energy: E,
                rate: 3.5,
            }],
        };
        let jump = JumpOperator::new(&emitter, &source).unwrap();
        let pose = Pose::new(Vector3::new(1e-6, 0.0, 0.0), Rotation::from_axis_angle(&Vector3::y(), 0.4));
        for n in [Vector3::x(), Vector3::new(0.0, 0.6, -0.8)] {
            assert_relative_eq!(jump.magnitude_squared(0, &n, &pose).unwrap(), 3.5 / (4.0 * PI), max_relative = 1e-12);
        }
        assert_relative_eq!(jump.total(0), 3.5, max_relative = 1e-12);
    }

    fn random_table(seed: u64) -> TabulatedAmplitude {
        use rand::Rng;
        let mut rng = crate::rng::stream(seed, crate::rng::Purpose::Test, 0);
        let thetas: Vec<f64> = (0..=6).map(|i| PI * i as f64 / 6.0).collect();
        let phis: Vec<f64> = (0..8).map(|j| 2.0 * PI * j as f64 / 8.0).collect();
        let mut rows = Vec::new();
        for &t in &thetas {
            // single-valued at the poles
            let pole = (rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
            for &p in &phis {
                let v = if t == 0.0 || t == PI {
                    pole
                } else {
                    (rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
                };
                rows.push((0, E, t, p, v.0, v.1));
            }
        }
        TabulatedAmplitude::from_rows(&rows).unwrap()
    }

    #[test]
    fn tabulated_jump_is_normalized() {
        let table = random_table(11);
        let source = SourceSpec {
            sites: vec![SourceSite {
                index: 0,
                position: Vector3::zeros(),
                energy: E,
                rate: 2.0,
            }],
        };
        let jump = JumpOperator::new(&table, &source).unwrap();
        assert_relative_eq!(jump.total(0), 2.0, max_relative = 1e-12);
        // independent rule: midpoint lattices aligned with the table cells,
        // Richardson-extrapolated from spacing h and h/2
        let site = source.sites[0];
        let lattice = |nt: usize, np: usize| {
            let (dt, dp) = (PI / nt as f64, 2.0 * PI / np as f64);
            let mut sum = 0.0;
            for i in 0..nt {
                let t = (i as f64 + 0.5) * dt;
                for j in 0..np {
                    let p = (j as f64 + 0.5) * dp;
                    let n = Vector3::new(t.sin() * p.cos(), t.sin() * p.sin(), t.cos());
                    sum += table.eval(&site, &n).norm_sqr() * t.sin() * dt * dp;
                }
            }
            sum
        };
        let midpoint = (4.0 * lattice(1200, 1600) - lattice(600, 800)) / 3.0;
        assert_relative_eq!(midpoint, amplitude_norm(&table, &site), max_relative = 1e-8);
        // rotated pose: |L|²(n; R = Q) = |L|²(Qᵀn; 𝟙)
        let q = Rotation::from_axis_angle(&Vector3::new(1.0, 1.0, 0.0), 0.7);
        let n = Vector3::new(0.48, 0.6, 0.64);
        let a = jump.magnitude_squared(0, &n, &Pose::new(Vector3::zeros(), q)).unwrap();
        let b = jump.magnitude_squared(0, &q.apply_inverse(&n), &Pose::default()).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-12);
    }

    #[test]
    fn zero_amplitude_is_rejected() {
        let rows: Vec<_> = [0.0, PI]
            .iter()
            .flat_map(|&t| [0.0, 3.0].map(|p| (0usize, E, t, p, 0.0, 0.0)))
            .collect();
        let table = TabulatedAmplitude::from_rows(&rows).unwrap();
        let source = SourceSpec {
            sites: vec![SourceSite {
                index: 0,
                position: Vector3::zeros(),
                energy: E,
                rate: 1.0,
            }],
        };
        assert!(matches!(JumpOperator::new(&table, &source), Err(Error::ZeroNorm { site: 0 })));
    }

    #[test]
    fn amplitude_csv_validation() {
        assert!(TabulatedAmplitude::from_csv("site_index,E_joule,theta,phi,re\n".as_bytes()).is_err());
        let incomplete = "site_index,E_joule,theta,phi,re,im\n0,1e-21,0,0,1,0\n0,1e-21,3.141592653589793,1,1,0\n";
        assert!(TabulatedAmplitude::from_csv(incomplete.as_bytes()).is_err());
        let ok = "site_index,E_joule,theta,phi,re,im\n0,1e-21,0,0,1,0\n0,1e-21,3.141592653589793,0,1,0\n";
        assert!(TabulatedAmplitude::from_csv(ok.as_bytes()).is_ok());
    }

    #[test]
    fn desorption_jump_phase_and_magnitude() {
        let model = FluxModel::CosineLaw {
            spectrum: Spectrum::MaxwellBoltzmannFlux { temperature: 300.0 },
            rate: RateField::Uniform(1e16),
        };
        let jump = DesorptionJump::new(&model, M).unwrap();
        let site = EmissionSite {
            index: 0,
            position: Vector3::new(0.0, 0.0, 5e-8),
            normal: Vector3::z(),
            weight: 1.0,
        };
        let n = Vector3::new(0.0, 0.6, 0.8);
        // transparent-emitter phase equals the desorption phase at the reference pose
        let a0 = transparent_amplitude(&n, &site.position, E, M).unwrap();
        let ph = jump.phase(&site.position, &n, E, &Pose::default()).unwrap();
        let diff = (a0.arg() - ph).rem_euclid(2.0 * PI);
        assert!(diff.min(2.0 * PI - diff) < 1e-9);
        // |L|² = Φ(Rᵀn)
        let q = Rotation::from_axis_angle(&Vector3::x(), 0.3);
        let pose = Pose::new(Vector3::zeros(), q);
        let mag = jump.magnitude_squared(&site, &n, E, &pose).unwrap();
        let phi = crate::flux::flux_eval(&model, &q.apply_inverse(&n), &site.position, &site.normal, E).unwrap();
        assert_eq!(mag, phi);
        // phase difference matches the difference of phases
        let other = Pose::new(Vector3::new(1e-9, 0.0, 0.0), Rotation::identity());
        let d = jump.phase_difference(&site.position, &n, E, &pose, &other).unwrap();
        let d2 = jump.phase(&site.position, &n, E, &pose).unwrap() - jump.phase(&site.position, &n, E, &other).unwrap();
        assert_relative_eq!(d, d2, max_relative = 1e-12);
    }
}
