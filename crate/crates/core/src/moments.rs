//! Diffusive-limit moments: the 6×6 momentum diffusion tensor D₀ and the
//! generalized force F₀ = (force; torque), both in the body frame.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flux::{FluxModel, QuadratureOrders, Spectrum};
use crate::geometry::SurfaceQuadrature;
use crate::quadrature::{pairwise_reduce, pairwise_sum};
use crate::types::{skew, Rotation};

/// Diffusion tensor blocks; translational index first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diffusion6 {
    pub tt: Matrix3<f64>,
    pub tr: Matrix3<f64>,
    pub rt: Matrix3<f64>,
    pub rr: Matrix3<f64>,
}

impl Diffusion6 {
    pub fn zeros() -> Self {
        Self::from_matrix6(&Matrix6::zeros())
    }

    /// Splits a 6×6 matrix into blocks after averaging it with its transpose.
    pub fn from_matrix6(m: &Matrix6<f64>) -> Self {
        let s = (m + m.transpose()) * 0.5;
        Diffusion6 {
            tt: s.fixed_view::<3, 3>(0, 0).into_owned(),
            tr: s.fixed_view::<3, 3>(0, 3).into_owned(),
            rt: s.fixed_view::<3, 3>(3, 0).into_owned(),
            rr: s.fixed_view::<3, 3>(3, 3).into_owned(),
        }
    }

    pub fn matrix6(&self) -> Matrix6<f64> {
        let mut m = Matrix6::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.tt);
        m.fixed_view_mut::<3, 3>(0, 3).copy_from(&self.tr);
        m.fixed_view_mut::<3, 3>(3, 0).copy_from(&self.rt);
        m.fixed_view_mut::<3, 3>(3, 3).copy_from(&self.rr);
        m
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::from_matrix6(&(self.matrix6() * factor))
    }

    /// Blocks after rotating body and flux by `q`: each block becomes Q B Qᵀ.
    pub fn rotated(&self, q: &Rotation) -> Self {
        let r = q.matrix();
        let f = |b: &Matrix3<f64>| r * b * r.transpose();
        Diffusion6 {
            tt: f(&self.tt),
            tr: f(&self.tr),
            rt: f(&self.rt),
            rr: f(&self.rr),
        }
    }

    /// Eigenvalues of the assembled symmetric matrix, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.matrix6().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn is_positive_semidefinite(&self) -> bool {
        let ev = self.eigenvalues();
        let largest = ev.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        ev[0] >= -1e-12 * largest
    }

    /// max |aᵢⱼ − bᵢⱼ| / √(aᵢᵢ aⱼⱼ) over the assembled matrices, where the
    /// diagonal of `self` sets the scale. Diagonal entries that vanish fall
    /// back to the largest diagonal entry of the same block row.
    pub fn max_relative_difference(&self, other: &Diffusion6) -> f64 {
        let a = self.matrix6();
        let b = other.matrix6();
        let diag: Vec<f64> = (0..6)
            .map(|i| {
                let d = a[(i, i)].abs();
                if d > 0.0 {
                    d
                } else {
                    let block = if i < 3 { 0..3 } else { 3..6 };
                    block.map(|j| a[(j, j)].abs()).fold(0.0, f64::max)
                }
            })
            .collect();
        let mut worst = 0.0f64;
        for i in 0..6 {
            for j in 0..6 {
                let scale = (diag[i] * diag[j]).sqrt();
                let diff = (a[(i, j)] - b[(i, j)]).abs();
                let rel = if scale > 0.0 {
                    diff / scale
                } else if diff == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                };
                worst = worst.max(rel);
            }
        }
        worst
    }
}

/// Generalized force: force (N) and torque (N·m) in the body frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceTorque6 {
    pub force: Vector3<f64>,
    pub torque: Vector3<f64>,
}

impl ForceTorque6 {
    pub fn zeros() -> Self {
        ForceTorque6 {
            force: Vector3::zeros(),
            torque: Vector3::zeros(),
        }
    }

    pub fn vector6(&self) -> Vector6<f64> {
        Vector6::new(
            self.force.x,
            self.force.y,
            self.force.z,
            self.torque.x,
            self.torque.y,
            self.torque.z,
        )
    }

    pub fn from_vector6(v: &Vector6<f64>) -> Self {
        ForceTorque6 {
            force: v.fixed_rows::<3>(0).into_owned(),
            torque: v.fixed_rows::<3>(3).into_owned(),
        }
    }

    pub fn rotated(&self, q: &Rotation) -> Self {
        ForceTorque6 {
            force: q.apply(&self.force),
            torque: q.apply(&self.torque),
        }
    }
}

/// Orders plus the refinement-based convergence check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentSettings {
    pub orders: QuadratureOrders,
    /// Largest accepted change between an evaluation and its refinement.
    pub tolerance: f64,
    /// How many times the orders may be doubled before giving up.
    pub max_refinements: usize,
}

impl Default for MomentSettings {
    fn default() -> Self {
        MomentSettings {
            orders: QuadratureOrders::default(),
            tolerance: 1e-6,
            max_refinements: 2,
        }
    }
}

fn check_mass(m_atom: f64) -> Result<()> {
    if m_atom > 0.0 && m_atom.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("atom mass must be positive, got {m_atom}")))
    }
}

/// Raw sums shared by both moments.
#[derive(Clone)]
struct Accumulated {
    d: Matrix6<f64>,
    f: Vector6<f64>,
    /// Σ |w| p, the scale Γ_tot·p̄ of the force.
    force_scale: f64,
    /// Σ |w| p |s|.
    torque_scale: f64,
}

fn accumulate(model: &FluxModel, q: &SurfaceQuadrature, m_atom: f64, orders: &QuadratureOrders) -> Result<Accumulated> {
    check_mass(m_atom)?;
    model.validate()?;
    let sites = model.sites(q);
    let parts: Vec<Accumulated> = sites
        .par_iter()
        .map(|site| {
            let measure = model.site_measure(site, orders)?;
            let c2 = measure.direction_weights(|e| 2.0 * m_atom * e);
            let c1 = measure.direction_weights(|e| (2.0 * m_atom * e).sqrt());
            let mut d = Matrix6::zeros();
            let mut f = Vector6::zeros();
            let mut scale = 0.0;
            for ((n, w2), w1) in measure.directions.iter().zip(&c2).zip(&c1) {
                let r = site.position.cross(n);
                let v = Vector6::new(n.x, n.y, n.z, r.x, r.y, r.z);
                d += v * v.transpose() * *w2;
                f += v * *w1;
                scale += w1.abs();
            }
            let w = site.weight;
            Ok(Accumulated {
                d: d * (0.5 * w),
                f: -f * w,
                force_scale: scale * w,
                torque_scale: scale * w * site.position.norm(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(pairwise_reduce(
        &parts,
        Accumulated {
            d: Matrix6::zeros(),
            f: Vector6::zeros(),
            force_scale: 0.0,
            torque_scale: 0.0,
        },
        |a, b| Accumulated {
            d: a.d + b.d,
            f: a.f + b.f,
            force_scale: a.force_scale + b.force_scale,
            torque_scale: a.torque_scale + b.torque_scale,
        },
    ))
}

/// D₀ at fixed orders, without a convergence check.
pub fn diffusion_tensor_at(model: &FluxModel, q: &SurfaceQuadrature, m_atom: f64, orders: &QuadratureOrders) -> Result<Diffusion6> {
    Ok(Diffusion6::from_matrix6(&accumulate(model, q, m_atom, orders)?.d))
}

/// F₀ at fixed orders, without a convergence check.
pub fn force_torque_at(model: &FluxModel, q: &SurfaceQuadrature, m_atom: f64, orders: &QuadratureOrders) -> Result<ForceTorque6> {
    Ok(ForceTorque6::from_vector6(&accumulate(model, q, m_atom, orders)?.f))
}

/// D₀ and F₀ with the angular and energy orders doubled until two successive
/// evaluations agree within `settings.tolerance`.
///
/// D₀ entries are compared on the scale √(Dᵢᵢ Dⱼⱼ); force and torque on the
/// scales Γ_tot·p̄ and Γ_tot·p̄·|s|.
pub fn moments(model: &FluxModel, q: &SurfaceQuadrature, m_atom: f64, settings: &MomentSettings) -> Result<(Diffusion6, ForceTorque6)> {
    let mut orders = settings.orders;
    let mut current = accumulate(model, q, m_atom, &orders)?;
    let mut last_gap = (f64::NAN, f64::NAN);
    for _ in 0..=settings.max_refinements {
        let finer_orders = orders.refined();
        let finer = accumulate(model, q, m_atom, &finer_orders)?;
        let d_gap = Diffusion6::from_matrix6(&finer.d).max_relative_difference(&Diffusion6::from_matrix6(&current.d));
        let f_gap = force_gap(&current, &finer);
        if d_gap <= settings.tolerance && f_gap <= settings.tolerance {
            return Ok((
                Diffusion6::from_matrix6(&finer.d),
                ForceTorque6::from_vector6(&finer.f),
            ));
        }
        last_gap = (d_gap, f_gap);
        orders = finer_orders;
        current = finer;
    }
    Err(Error::QuadratureNotConverged(format!(
        "moments changed by {:.3e} (diffusion) and {:.3e} (force/torque) on the last refinement, tolerance {:.1e}",
        last_gap.0, last_gap.1, settings.tolerance
    )))
}

fn force_gap(a: &Accumulated, b: &Accumulated) -> f64 {
    let rel = |x: f64, scale: f64| if scale > 0.0 { x / scale } else if x == 0.0 { 0.0 } else { f64::INFINITY };
    let df = (a.f.fixed_rows::<3>(0) - b.f.fixed_rows::<3>(0)).norm();
    let dt = (a.f.fixed_rows::<3>(3) - b.f.fixed_rows::<3>(3)).norm();
    rel(df, b.force_scale).max(rel(dt, b.torque_scale))
}

/// ½ ∫dE ∮d²s ∫d²n Φ p² (n; s×n)(n; s×n)ᵀ with the convergence check.
pub fn diffusion_tensor(model: &FluxModel, q: &SurfaceQuadrature, m_atom: f64, settings: &MomentSettings) -> Result<Diffusion6> {
    moments(model, q, m_atom, settings).map(|m| m.0)
}

/// −∫dE ∮d²s ∫d²n Φ p (n; s×n) with the convergence check.
pub fn force_torque(model: &FluxModel, q: &SurfaceQuadrature, m_atom: f64, settings: &MomentSettings) -> Result<ForceTorque6> {
    moments(model, q, m_atom, settings).map(|m| m.1)
}

/// J₂ = ∫dE Φ₀(E) p²(E) for a cosine law Φ = Φ₀(E) cos θ with a uniform
/// rate per area, i.e. Φ₀ = rate_per_area·σ(E)/π.
pub fn cosine_j2(spectrum: &Spectrum, rate_per_area: f64, m_atom: f64, orders: &QuadratureOrders) -> f64 {
    let terms: Vec<f64> = spectrum
        .energy_rule(orders)
        .iter()
        .map(|(e, w)| w * 2.0 * m_atom * e)
        .collect();
    rate_per_area / PI * pairwise_sum(&terms)
}

/// Closed-form solid-angle integral of D₀ for a cosine law with a
/// site-independent Φ₀: (π/8) J₂ ∮d²s ([𝟙, −[s]×; [s]×, −[s]ײ] + v vᵀ) with
/// v = (n_s; s×n_s).
pub fn analytic_cosine_tensor(q: &SurfaceQuadrature, j2: f64) -> Diffusion6 {
    let parts: Vec<Matrix6<f64>> = q
        .nodes
        .par_iter()
        .map(|node| {
            let s = node.position;
            let n = node.normal;
            let k = skew(&s);
            let mut m = Matrix6::zeros();
            m.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
            m.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-k));
            m.fixed_view_mut::<3, 3>(3, 0).copy_from(&k);
            m.fixed_view_mut::<3, 3>(3, 3).copy_from(&(-(k * k)));
            let r = s.cross(&n);
            let v = Vector6::new(n.x, n.y, n.z, r.x, r.y, r.z);
            (m + v * v.transpose()) * node.weight
        })
        .collect();
    let total = pairwise_reduce(&parts, Matrix6::zeros(), |a, b| a + b);
    Diffusion6::from_matrix6(&(total * (PI / 8.0 * j2)))
}

/// First and second moments of (P, J) in the body frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentState {
    pub mean: Vector6<f64>,
    pub covariance: Matrix6<f64>,
}

impl Default for MomentState {
    fn default() -> Self {
        MomentState {
            mean: Vector6::zeros(),
            covariance: Matrix6::zeros(),
        }
    }
}

/// Covariance grows by 2 D t and the mean drifts by F t.
pub fn predict_moments(d: &Diffusion6, f: &ForceTorque6, t: f64, initial: &MomentState) -> Result<MomentState> {
    if !(t >= 0.0) {
        return Err(Error::InvalidInput(format!("time must be nonnegative, got {t}")));
    }
    Ok(MomentState {
        mean: initial.mean + f.vector6() * t,
        covariance: initial.covariance + d.matrix6() * (2.0 * t),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flux::{DirectionLaw, RateField};
    use crate::geometry::{build_quadrature, BodySpec, Shape};
    use crate::types::{ATOMIC_MASS_UNIT, KB};
    use approx::assert_relative_eq;

    const M_N2: f64 = 28.0134 * ATOMIC_MASS_UNIT;

    fn cosine(rate: f64) -> FluxModel {
        FluxModel::CosineLaw {
            spectrum: Spectrum::MaxwellBoltzmannFlux { temperature: 300.0 },
            rate: RateField::Uniform(rate),
        }
    }

    #[test]
    fn isotropic_point_source() {
        let gamma = 7.0;
        let e0 = 2e-21;
        let p0 = (2.0 * M_N2 * e0).sqrt();
        let model = FluxModel::SingleSite {
            position: Vector3::zeros(),
            law: DirectionLaw::Isotropic,
            spectrum: Spectrum::Monoenergetic { energy: e0 },
            rate: gamma,
        };
        let q = build_quadrature(&BodySpec::uniform(Shape::Sphere { radius: 1e-7 }, 1e-18).unwrap(), 4).unwrap();
        let (d, f) = moments(&model, &q, M_N2, &MomentSettings::default()).unwrap();
        // oracle: ½ Γ p0² ∫ n nᵀ d²n / 4π = Γ p0²/6 𝟙
        let expect = Matrix3::identity() * (gamma * p0 * p0 / 6.0);
        assert!((d.tt - expect).norm() < 1e-12 * expect.norm());
        assert!(d.tr.norm() < 1e-12 * expect.norm() && d.rr.norm() == 0.0);
        assert!(f.force.norm() < 1e-12 * gamma * p0);
    }

    #[test]
    fn directed_point_source_force() {
        let e0 = 3e-21;
        let p0 = (2.0 * M_N2 * e0).sqrt();
        let model = FluxModel::SingleSite {
            position: Vector3::new(0.0, 0.0, 1e-7),
            law: DirectionLaw::Directed { axis: Vector3::z() },
            spectrum: Spectrum::Monoenergetic { energy: e0 },
            rate: 2.0,
        };
        let q = build_quadrature(&BodySpec::uniform(Shape::Sphere { radius: 1e-7 }, 1e-18).unwrap(), 4).unwrap();
        let f = force_torque(&model, &q, M_N2, &MomentSettings::default()).unwrap();
        assert_relative_eq!(f.force, Vector3::new(0.0, 0.0, -2.0 * p0), max_relative = 1e-14);
        assert_eq!(f.torque, Vector3::zeros());
    }

    #[test]
    fn sphere_cosine_closed_form() {
        let r = 75e-9;
        let body = BodySpec::uniform(Shape::Sphere { radius: r }, 1e-18).unwrap();
        let q = build_quadrature(&body, 16).unwrap();
        let gamma = 1.0e3;
        let area = 4.0 * PI * r * r;
        let model = cosine(gamma / area);
        let d = diffusion_tensor(&model, &q, M_N2, &MomentSettings::default()).unwrap();
        // oracle: J₂ = 4 m k_B T Γ/(π A) from ∫E σ dE = 2 k_B T
        let j2 = 4.0 * M_N2 * KB * 300.0 * gamma / (PI * area);
        assert_relative_eq!(cosine_j2(&Spectrum::MaxwellBoltzmannFlux { temperature: 300.0 }, gamma / area, M_N2, &QuadratureOrders::default()), j2, max_relative = 1e-10);
        let tt = 2.0 * PI * PI * r * r / 3.0 * j2;
        let rr = PI * PI * r.powi(4) / 3.0 * j2;
        assert!((d.tt - Matrix3::identity() * tt).norm() < 1e-9 * tt);
        assert!((d.rr - Matrix3::identity() * rr).norm() < 1e-9 * rr);
        assert!(d.tr.norm() < 1e-9 * (tt * rr).sqrt());
        let a = analytic_cosine_tensor(&q, j2);
        assert!(a.max_relative_difference(&d) < 1e-9);
    }

    #[test]
    fn shifted_sphere_closed_form() {
        // oracle, with s = c + R n_s:
        // D_tr = −(2π²R²/3) J₂ [c]×,  D_rr = (π²R²/2) J₂ ((4/3)(|c|² 𝟙 − c cᵀ) + (2/3) R² 𝟙)
        let r = 1.0;
        let c = Vector3::new(0.3, -0.2, 0.5);
        let body = BodySpec::uniform(Shape::Sphere { radius: r }, 1.0)
            .unwrap()
            .with_center_of_mass(-c);
        let q = build_quadrature(&body, 12).unwrap();
        let j2 = 1.0;
        let tr = -skew(&c) * (2.0 * PI * PI * r * r / 3.0 * j2);
        let rr = (Matrix3::identity() * c.norm_squared() - c * c.transpose()) * (4.0 / 3.0)
            + Matrix3::identity() * (2.0 / 3.0 * r * r);
        let rr = rr * (PI * PI * r * r / 2.0 * j2);
        let a = analytic_cosine_tensor(&q, j2);
        assert!((a.tr - tr).norm() < 1e-12);
        assert!((a.rr - rr).norm() < 1e-12);
        // the same through the full quadrature: Φ₀ = rate σ/π, so J₂ = rate·4 m k_B T/π = 1/π
        let m = 1.0 / (4.0 * KB * 300.0);
        let d = diffusion_tensor(&cosine(1.0), &q, m, &MomentSettings::default()).unwrap();
        assert!(a.scaled(1.0 / PI).max_relative_difference(&d) < 1e-9);
    }

    #[test]
    fn predict_moments_is_linear() {
        let d = Diffusion6::from_matrix6(&Matrix6::from_diagonal(&Vector6::new(1.0, 2.0, 3.0, 4.0, 5.0, 6.0)));
        let f = ForceTorque6 {
            force: Vector3::new(1.0, 0.0, 0.0),
            torque: Vector3::zeros(),
        };
        let init = MomentState::default();
        assert_eq!(predict_moments(&d, &f, 0.0, &init).unwrap(), init);
        let later = predict_moments(&d, &f, 1.0, &init).unwrap();
        assert_eq!(later.covariance, d.matrix6() * 2.0);
        assert_eq!(later.mean[0], 1.0);
        assert!(predict_moments(&d, &f, -1.0, &init).is_err());
    }

    #[test]
    fn non_convergence_is_reported() {
        let mut settings = MomentSettings::default();
        settings.tolerance = 0.0;
        settings.max_refinements = 0;
        let model = FluxModel::SingleSite {
            position: Vector3::zeros(),
            law: DirectionLaw::Cosine { axis: Vector3::x() },
            spectrum: Spectrum::MaxwellBoltzmannFlux { temperature: 300.0 },
            rate: 1.0,
        };
        let q = build_quadrature(&BodySpec::uniform(Shape::Sphere { radius: 1e-7 }, 1e-18).unwrap(), 4).unwrap();
        assert!(matches!(
            moments(&model, &q, M_N2, &settings),
            Err(Error::QuadratureNotConverged(_))
        ));
    }
}
