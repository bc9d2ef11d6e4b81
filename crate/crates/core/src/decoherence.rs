//! Complex localization rate F_{R,R'}(ΔX) for pairs of poses and batch
//! coherence maps.
//!
//! Re F = ∫dE ∮d²s ∫d²n [½(√a − √b)² + 2√(ab) sin²(θ/2)] and
//! Im F = ∫dE ∮d²s ∫d²n √(ab) sin θ, with a = Φ(Rᵀn, s, E),
//! b = Φ(R'ᵀn, s, E) and θ = p n·(ΔX + (R − R')s)/ħ. This form of the real
//! part is pointwise nonnegative and vanishes identically at R = R', ΔX = 0.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::Vector3;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flux::{EmissionSite, FluxModel, QuadratureOrders};
use crate::geometry::SurfaceQuadrature;
use crate::quadrature::{gauss_legendre, pairwise_sum, polar_product_rule_with};
use crate::types::{w_from_rotations, Rotation, HBAR};

/// Two classical poses: the translation ΔX = X − X' and both orientations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosePair {
    pub delta_x: Vector3<f64>,
    pub r: Rotation,
    pub r_prime: Rotation,
}

impl PosePair {
    pub fn new(delta_x: Vector3<f64>, r: Rotation, r_prime: Rotation) -> Self {
        PosePair { delta_x, r, r_prime }
    }

    /// (−ΔX, R', R), whose rate is the complex conjugate.
    pub fn swapped(&self) -> Self {
        PosePair {
            delta_x: -self.delta_x,
            r: self.r_prime,
            r_prime: self.r,
        }
    }
}

/// Localization rate, 1/s.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LocalizationRate {
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizationSettings {
    pub orders: QuadratureOrders,
    /// Gauss–Legendre nodes in cos θ when nothing oscillates.
    pub base_polar_nodes: usize,
    /// Azimuthal nodes about the oscillation axis.
    pub azimuth_nodes: usize,
    /// Extra cos θ and energy nodes per radian of the largest phase p_max|v|/ħ.
    pub nodes_per_radian: f64,
    /// Polar node counts above this are refused.
    pub max_polar_nodes: usize,
}

impl Default for LocalizationSettings {
    fn default() -> Self {
        LocalizationSettings {
            orders: QuadratureOrders::default(),
            base_polar_nodes: 24,
            azimuth_nodes: 32,
            nodes_per_radian: 0.75,
            max_polar_nodes: 8192,
        }
    }
}

/// χ(x) = ∫dE σ(E) exp(i p x/ħ) on x ≥ 0, quintic Hermite between nodes;
/// χ(−x) = conj χ(x).
struct CharacteristicTable {
    step: f64,
    values: Vec<Complex64>,
    slopes: Vec<Complex64>,
    curvatures: Vec<Complex64>,
}

impl CharacteristicTable {
    fn new(energies: &[(f64, f64)], m_atom: f64, x_max: f64, step: f64) -> Self {
        let n = if x_max > 0.0 { (x_max / step).ceil() as usize + 2 } else { 1 };
        let ks: Vec<(f64, f64)> = energies
            .iter()
            .map(|&(e, w)| ((2.0 * m_atom * e).sqrt() / HBAR, w))
            .collect();
        let nodes: Vec<[Complex64; 3]> = (0..n)
            .into_par_iter()
            .map(|i| {
                let x = i as f64 * step;
                let mut cols = [(); 6].map(|_| Vec::with_capacity(ks.len()));
                for &(k, w) in &ks {
                    let (s, c) = (k * x).sin_cos();
                    cols[0].push(w * c);
                    cols[1].push(w * s);
                    cols[2].push(-w * k * s);
                    cols[3].push(w * k * c);
                    cols[4].push(-w * k * k * c);
                    cols[5].push(-w * k * k * s);
                }
                let sum = |j: usize| pairwise_sum(&cols[j]);
                [
                    Complex64::new(sum(0), sum(1)),
                    Complex64::new(sum(2), sum(3)),
                    Complex64::new(sum(4), sum(5)),
                ]
            })
            .collect();
        CharacteristicTable {
            step,
            values: nodes.iter().map(|v| v[0]).collect(),
            slopes: nodes.iter().map(|v| v[1]).collect(),
            curvatures: nodes.iter().map(|v| v[2]).collect(),
        }
    }

    fn eval(&self, x: f64) -> Complex64 {
        let ax = x.abs();
        let u = ax / self.step;
        let i = (u.floor() as usize).min(self.values.len().saturating_sub(2));
        let v = if self.values.len() == 1 {
            self.values[0]
        } else {
            let t = u - i as f64;
            let (t2, t3) = (t * t, t * t * t);
            let (t4, t5) = (t3 * t, t3 * t2);
            let h = self.step;
            let b0 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
            let b1 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
            let b2 = 0.5 * t2 - 1.5 * t3 + 1.5 * t4 - 0.5 * t5;
            let b3 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
            let b4 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
            let b5 = 0.5 * t3 - t4 + 0.5 * t5;
            self.values[i] * b0
                + self.slopes[i] * (b1 * h)
                + self.curvatures[i] * (b2 * h * h)
                + self.values[i + 1] * b3
                + self.slopes[i + 1] * (b4 * h)
                + self.curvatures[i + 1] * (b5 * h * h)
        };
        if x < 0.0 {
            v.conj()
        } else {
            v
        }
    }
}

/// Unit vector along ±v with a fixed sign convention, so v and −v share a rule.
fn canonical_axis(v: &Vector3<f64>, fallback: &Vector3<f64>) -> Vector3<f64> {
    let norm = v.norm();
    if norm == 0.0 {
        return *fallback;
    }
    let u = v / norm;
    let first = [u.x, u.y, u.z].into_iter().find(|c| *c != 0.0).unwrap_or(1.0);
    if first < 0.0 {
        -u
    } else {
        u
    }
}

fn kernel(model: &FluxModel, site: &EmissionSite, n: &Vector3<f64>, e: f64) -> Result<f64> {
    model
        .kernel(site, n, e)
        .ok_or_else(|| Error::Unsupported("the localization rate needs a pointwise flux density; directed sites have none".into()))
}

/// Node counts (cos θ, energy) for the largest phase `omega`.
fn node_counts(settings: &LocalizationSettings, omega: f64) -> Result<(usize, usize)> {
    let extra = (settings.nodes_per_radian * omega).ceil();
    if !extra.is_finite() || extra + settings.base_polar_nodes as f64 > settings.max_polar_nodes as f64 {
        return Err(Error::QuadratureNotConverged(format!(
            "phase p_max|v|/ħ = {omega:.3e} needs more than {} polar nodes; in this regime Re F equals the total emission rate",
            settings.max_polar_nodes
        )));
    }
    let extra = extra as usize;
    Ok((settings.base_polar_nodes + extra, settings.orders.energy_nodes + extra))
}

/// Smallest size of the form ⌈base·1.15^k⌉ that is at least `n`, capped.
fn polar_bucket(n: usize, settings: &LocalizationSettings) -> usize {
    let mut b = settings.base_polar_nodes.max(1);
    while b < n {
        b = ((b as f64) * 1.15).ceil() as usize;
    }
    b.min(settings.max_polar_nodes.max(n))
}

pub fn localization_rate(
    pair: &PosePair,
    model: &FluxModel,
    q: &SurfaceQuadrature,
    m_atom: f64,
    settings: &LocalizationSettings,
) -> Result<LocalizationRate> {
    if !(m_atom > 0.0 && m_atom.is_finite()) {
        return Err(Error::InvalidInput(format!("atom mass must be positive, got {m_atom}")));
    }
    if pair.delta_x.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("delta_x must be finite".into()));
    }
    model.validate()?;
    let sites = model.sites(q);
    let (r, rp) = (&pair.r, &pair.r_prime);
    let vs: Vec<Vector3<f64>> = sites
        .iter()
        .map(|s| pair.delta_x + r.apply(&s.position) - rp.apply(&s.position))
        .collect();
    let x_max = vs.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let p_max = (2.0 * m_atom * model.max_energy(&settings.orders)).sqrt();
    let omega = p_max * x_max / HBAR;
    let (_, n_energy) = node_counts(settings, omega)?;
    // per-site cos θ counts, rounded up to a few shared sizes
    let counts: Vec<usize> = vs
        .iter()
        .map(|v| {
            let (n, _) = node_counts(settings, p_max * v.norm() / HBAR).expect("bounded by the largest phase");
            polar_bucket(n, settings)
        })
        .collect();
    let mut sizes = counts.clone();
    sizes.sort_unstable();
    sizes.dedup();
    let legendre: BTreeMap<usize, (Vec<f64>, Vec<f64>)> =
        sizes.par_iter().map(|&n| (n, gauss_legendre(n))).collect();
    let energies = model.pointwise_energy_rule(n_energy, &settings.orders);

    let separable = model.is_separable();
    let table = separable.then(|| {
        let step = if p_max > 0.0 { 0.1 * HBAR / p_max } else { 1.0 };
        CharacteristicTable::new(&energies, m_atom, x_max, step)
    });
    let ks: Vec<(f64, f64, f64)> = energies
        .iter()
        .map(|&(e, w)| (e, (2.0 * m_atom * e).sqrt() / HBAR, w))
        .collect();

    let parts: Vec<(f64, f64)> = sites
        .par_iter()
        .zip(&vs)
        .zip(&counts)
        .map(|((site, v), n_polar)| -> Result<(f64, f64)> {
            let pole = canonical_axis(v, &site.normal);
            let (x, w) = &legendre[n_polar];
            let rule = polar_product_rule_with(&pole, &[-1.0, 1.0], x, w, settings.azimuth_nodes);
            let mut re_terms = Vec::with_capacity(rule.len());
            let mut im_terms = Vec::with_capacity(rule.len());
            for (n, w) in rule.iter() {
                let na = r.apply_inverse(n);
                let nb = rp.apply_inverse(n);
                let x = n.dot(v);
                let (re, im) = if let Some(table) = &table {
                    let ka = kernel(model, site, &na, 0.0)?;
                    let kb = kernel(model, site, &nb, 0.0)?;
                    if ka == 0.0 && kb == 0.0 {
                        continue;
                    }
                    let s0 = table.values[0].re;
                    let chi = table.eval(x);
                    let d = ka.sqrt() - kb.sqrt();
                    let g = (ka * kb).sqrt();
                    (0.5 * d * d * s0 + g * (s0 - chi.re), g * chi.im)
                } else {
                    let mut re = 0.0;
                    let mut im = 0.0;
                    for &(e, k, we) in &ks {
                        let a = kernel(model, site, &na, e)?;
                        let b = kernel(model, site, &nb, e)?;
                        if a == 0.0 && b == 0.0 {
                            continue;
                        }
                        let d = a.sqrt() - b.sqrt();
                        let g = (a * b).sqrt();
                        let half = 0.5 * k * x;
                        let sh = half.sin();
                        re += we * (0.5 * d * d + 2.0 * g * sh * sh);
                        im += we * g * (k * x).sin();
                    }
                    (re, im)
                };
                re_terms.push(w * re);
                im_terms.push(w * im);
            }
            Ok((pairwise_sum(&re_terms) * site.weight, pairwise_sum(&im_terms) * site.weight))
        })
        .collect::<Result<_>>()?;
    let re: Vec<f64> = parts.iter().map(|p| p.0).collect();
    let im: Vec<f64> = parts.iter().map(|p| p.1).collect();
    Ok(LocalizationRate {
        re: pairwise_sum(&re),
        im: pairwise_sum(&im),
    })
}

/// One row of a coherence map; a failed row keeps its error.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceRow {
    pub pair: PosePair,
    pub rate: Result<LocalizationRate>,
    /// exp(−Re F t) for each requested time.
    pub visibility: Vec<f64>,
}

/// Evaluates every pair; rows keep the input order.
pub fn coherence_map(
    pairs: &[PosePair],
    times: &[f64],
    model: &FluxModel,
    q: &SurfaceQuadrature,
    m_atom: f64,
    settings: &LocalizationSettings,
) -> Vec<CoherenceRow> {
    pairs
        .iter()
        .map(|pair| {
            let rate = localization_rate(pair, model, q, m_atom, settings);
            let visibility = match &rate {
                Ok(r) => times.iter().map(|t| (-r.re * t).exp()).collect(),
                Err(_) => vec![f64::NAN; times.len()],
            };
            CoherenceRow {
                pair: *pair,
                rate,
                visibility,
            }
        })
        .collect()
}

/// CSV header for [`write_row`].
pub fn csv_header(times: &[f64]) -> String {
    let mut cols: Vec<String> = ["dx", "dy", "dz", "w_rel_x", "w_rel_y", "w_rel_z", "re_rate_hz", "im_rate_hz"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    cols.extend(times.iter().map(|t| format!("vis_t{t:e}")));
    cols.push("status".into());
    cols.join(",")
}

/// One CSV line; the relative orientation is the rotation vector of RᵀR'
/// (left empty outside its principal branch), numbers carry 17 digits.
pub fn write_row<W: Write + ?Sized>(out: &mut W, row: &CoherenceRow) -> std::io::Result<()> {
    let num = |x: f64| format!("{x:.16e}");
    let mut fields: Vec<String> = row.pair.delta_x.iter().map(|&x| num(x)).collect();
    match w_from_rotations(&row.pair.r, &row.pair.r_prime) {
        Ok(w) => fields.extend(w.vector().iter().map(|&x| num(x))),
        Err(_) => fields.extend(["", "", ""].map(String::from)),
    }
    let status = match &row.rate {
        Ok(r) => {
            fields.push(num(r.re));
            fields.push(num(r.im));
            "ok".to_string()
        }
        Err(e) => {
            fields.push(String::new());
            fields.push(String::new());
            format!("\"error: {}\"", e.to_string().replace('"', "'"))
        }
    };
    fields.extend(row.visibility.iter().map(|&v| if v.is_nan() { String::new() } else { num(v) }));
    fields.push(status);
    writeln!(out, "{}", fields.join(","))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flux::{DirectionLaw, RateField, Spectrum};
    use crate::geometry::{build_quadrature, BodySpec, Shape};
    use crate::types::ATOMIC_MASS_UNIT;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    const M: f64 = 28.0134 * ATOMIC_MASS_UNIT;

    fn point_q() -> SurfaceQuadrature {
        build_quadrature(&BodySpec::uniform(Shape::Sphere { radius: 1e-7 }, 1e-18).unwrap(), 2).unwrap()
    }

    fn isotropic_point(e0: f64, position: Vector3<f64>) -> FluxModel {
        FluxModel::SingleSite {
            position,
            law: DirectionLaw::Isotropic,
            spectrum: Spectrum::Monoenergetic { energy: e0 },
            rate: 10.0,
        }
    }

    #[test]
    fn identical_pair_is_exactly_zero() {
        let q = build_quadrature(&BodySpec::uniform(Shape::Sphere { radius: 5e-8 }, 1e-18).unwrap(), 6).unwrap();
        let model = FluxModel::CosineLaw {
            spectrum: Spectrum::MaxwellBoltzmannFlux { temperature: 300.0 },
            rate: RateField::Uniform(1e15),
        };
        let r = Rotation::from_axis_angle(&Vector3::new(1.0, 2.0, 3.0), 0.8);
        let f = localization_rate(&PosePair::new(Vector3::zeros(), r, r), &model, &q, M, &LocalizationSettings::default()).unwrap();
        assert_eq!(f, LocalizationRate { re: 0.0, im: 0.0 });
    }

    #[test]
    fn isotropic_point_source_ray() {
        // oracle: Re F = Γ (1 − sin(p0 λ/ħ)/(p0 λ/ħ)) for a monoenergetic point source at the origin
        let e0 = 4e-21;
        let p0 = (2.0 * M * e0).sqrt();
        let model = isotropic_point(e0, Vector3::zeros());
        for kl in [0.3, 2.0, 17.0, 150.0] {
            let lambda = kl * HBAR / p0;
            let pair = PosePair::new(Vector3::new(0.0, 0.0, lambda), Rotation::identity(), Rotation::identity());
            let f = localization_rate(&pair, &model, &point_q(), M, &LocalizationSettings::default()).unwrap();
            let expect = 10.0 * (1.0 - kl.sin() / kl);
            assert_relative_eq!(f.re, expect, max_relative = 1e-9);
            assert!(f.im.abs() < 1e-9 * 10.0);
        }
    }

    #[test]
    fn swapped_pair_conjugates() {
        let model = FluxModel::SingleSite {
            position: Vector3::new(3e-9, -1e-9, 2e-9),
            law: DirectionLaw::Cosine { axis: Vector3::new(0.0, 0.6, 0.8) },
            spectrum: Spectrum::MaxwellBoltzmannFlux { temperature: 300.0 },
            rate: 5.0,
        };
        let pair = PosePair::new(
            Vector3::new(1e-10, 2e-10, -1e-10),
            Rotation::from_axis_angle(&Vector3::x(), 0.3),
            Rotation::from_axis_angle(&Vector3::y(), -0.2),
        );
        let s = LocalizationSettings::default();
        let a = localization_rate(&pair, &model, &point_q(), M, &s).unwrap();
        let b = localization_rate(&pair.swapped(), &model, &point_q(), M, &s).unwrap();
        assert_relative_eq!(a.re, b.re, max_relative = 1e-12);
        assert_relative_eq!(a.im, -b.im, max_relative = 1e-9);
        assert!(a.im.abs() > 1e-6 * a.re);
    }

    #[test]
    fn small_momentum_limit() {
        // p → 0: Re F → ½∫(√Φ_R − √Φ_R')², evaluated by a fine (θ, φ) midpoint lattice
        let axis = Vector3::new(0.0, 0.0, 1.0);
        let model = FluxModel::SingleSite {
            position: Vector3::new(0.0, 0.0, 1e-9),
            law: DirectionLaw::Cosine { axis },
            spectrum: Spectrum::Monoenergetic { energy: 1e-40 },
            rate: 1.0,
        };
        let r = Rotation::identity();
        let rp = Rotation::from_axis_angle(&Vector3::x(), 0.9);
        let mut s = LocalizationSettings::default();
        s.base_polar_nodes = 200;
        s.azimuth_nodes = 400;
        let f = localization_rate(&PosePair::new(Vector3::zeros(), r, rp), &model, &point_q(), M, &s).unwrap();
        let (nt, np) = (1000, 2000);
        let mut oracle = 0.0;
        for i in 0..nt {
            let t = (i as f64 + 0.5) * PI / nt as f64;
            for j in 0..np {
                let p = (j as f64 + 0.5) * 2.0 * PI / np as f64;
                let n = Vector3::new(t.sin() * p.cos(), t.sin() * p.sin(), t.cos());
                let a = (n.dot(&axis).max(0.0) / PI).sqrt();
                let b = (rp.apply_inverse(&n).dot(&axis).max(0.0) / PI).sqrt();
                oracle += 0.5 * (a - b).powi(2) * t.sin() * (PI / nt as f64) * (2.0 * PI / np as f64);
            }
        }
        assert_relative_eq!(f.re, oracle, max_relative = 1e-3);
        assert!(f.re > 0.1);
        // recoil-free isotropy: an isotropic point source gives no which-orientation information
        let iso = isotropic_point(1e-40, Vector3::new(0.0, 0.0, 1e-9));
        let g = localization_rate(&PosePair::new(Vector3::zeros(), r, rp), &iso, &point_q(), M, &s).unwrap();
        assert!(g.re < 1e-12 * 10.0);
    }

    #[test]
    fn oscillation_cap_is_enforced() {
        let model = isotropic_point(4e-21, Vector3::zeros());
        let pair = PosePair::new(Vector3::new(0.0, 0.0, 1e-3), Rotation::identity(), Rotation::identity());
        assert!(matches!(
            localization_rate(&pair, &model, &point_q(), M, &LocalizationSettings::default()),
            Err(Error::QuadratureNotConverged(_))
        ));
        let directed = FluxModel::SingleSite {
            position: Vector3::zeros(),
            law: DirectionLaw::Directed { axis: Vector3::z() },
            spectrum: Spectrum::Monoenergetic { energy: 4e-21 },
            rate: 1.0,
        };
        let small = PosePair::new(Vector3::new(0.0, 0.0, 1e-12), Rotation::identity(), Rotation::identity());
        assert!(matches!(
            localization_rate(&small, &directed, &point_q(), M, &LocalizationSettings::default()),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn coherence_map_rows() {
        let model = isotropic_point(4e-21, Vector3::zeros());
        let pairs = vec![
            PosePair::new(Vector3::zeros(), Rotation::identity(), Rotation::identity()),
            PosePair::new(Vector3::new(0.0, 0.0, 1e-10), Rotation::identity(), Rotation::identity()),
            PosePair::new(Vector3::new(0.0, 0.0, 1.0), Rotation::identity(), Rotation::identity()),
        ];
        let rows = coherence_map(&pairs, &[0.0, 0.1], &model, &point_q(), M, &LocalizationSettings::default());
        assert_eq!(rows[0].rate, Ok(LocalizationRate::default()));
        assert_eq!(rows[0].visibility, vec![1.0, 1.0]);
        assert!(rows[1].rate.is_ok());
        assert!(rows[2].rate.is_err());
        let mut buf = Vec::new();
        for row in &rows {
            write_row(&mut buf, row).unwrap();
        }
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[2].ends_with('"') && lines[2].contains("error"));
        let header_cols = csv_header(&[0.0, 0.1]).split(',').count();
        assert_eq!(lines[0].split(',').count(), header_cols);
    }
}
