//! Quick built-in cross-checks against closed forms.

use std::f64::consts::PI;
use std::io::Write;

use desorb_core::amplitudes::{amplitude_norm, radial_extraction, transparent_amplitude, SourceSite, TransparentEmitter};
use desorb_core::decoherence::{localization_rate, LocalizationSettings, PosePair};
use desorb_core::flux::{total_rate, FluxModel, OutgasPreset, RateField, Spectrum};
use desorb_core::geometry::{build_quadrature, BodySpec, Shape};
use desorb_core::moments::{cosine_j2, moments, MomentSettings};
use desorb_core::types::{ATOMIC_MASS_UNIT, HBAR};
use desorb_core::Rotation;
use nalgebra::Vector3;

use crate::error::CliError;

pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub limit: f64,
}

impl Check {
    pub fn pass(&self) -> bool {
        self.value <= self.limit
    }
}

const N2: f64 = 28.0134 * ATOMIC_MASS_UNIT;

fn sphere_cosine() -> Result<Vec<Check>, CliError> {
    let r = 75e-9;
    let rate = 1e16;
    let body = BodySpec::uniform(Shape::Sphere { radius: r }, 1e-17)?;
    let q = build_quadrature(&body, 32)?;
    let model = FluxModel::CosineLaw {
        spectrum: Spectrum::MaxwellBoltzmannFlux { temperature: 300.0 },
        rate: RateField::Uniform(rate),
    };
    let settings = MomentSettings::default();
    let (d, f) = moments(&model, &q, N2, &settings)?;
    let j2 = cosine_j2(
        &Spectrum::MaxwellBoltzmannFlux { temperature: 300.0 },
        rate,
        N2,
        &settings.orders,
    );
    let tt = 2.0 * PI * PI * r * r / 3.0 * j2;
    let rr = PI * PI * r.powi(4) / 3.0 * j2;
    let mut err = 0.0f64;
    let m = d.matrix6();
    for i in 0..6 {
        for j in 0..6 {
            let expect = match (i == j, i < 3) {
                (true, true) => tt,
                (true, false) => rr,
                _ => 0.0,
            };
            let scale = (m[(i, i)] * m[(j, j)]).sqrt();
            err = err.max((m[(i, j)] - expect).abs() / scale);
        }
    }
    let gamma = total_rate(&model, &q)?;
    let p_bar = (2.0 * N2 * 1.380_649e-23 * 300.0).sqrt();
    let force = f.force.norm().max(f.torque.norm() / r) / (gamma * p_bar);
    Ok(vec![
        Check {
            name: "sphere cosine tensor vs closed form",
            value: err,
            limit: 1e-6,
        },
        Check {
            name: "sphere cosine force and torque vanish",
            value: force,
            limit: 1e-6,
        },
    ])
}

fn rotation_covariance() -> Result<Check, CliError> {
    let body = BodySpec::uniform(
        Shape::Cylinder {
            radius: 50e-9,
            half_length: 120e-9,
            capped: true,
        },
        1e-17,
    )?;
    let q = build_quadrature(&body, 16)?;
    let model = FluxModel::CosineLaw {
        spectrum: Spectrum::Monoenergetic { energy: 4e-21 },
        rate: RateField::Polynomial {
            base: 1e16,
            gradient: Vector3::new(1e22, 0.0, 3e22),
            quadratic: nalgebra::Matrix3::zeros(),
        },
    };
    let rot = Rotation::from_axis_angle(&Vector3::new(0.3, -1.0, 0.5), 1.1);
    let s = MomentSettings::default();
    let (d, _) = moments(&model, &q, N2, &s)?;
    let (dr, _) = moments(&model.rotated(&rot), &q.rotated(&rot), N2, &s)?;
    Ok(Check {
        name: "diffusion tensor frame covariance",
        value: dr.max_relative_difference(&d.rotated(&rot)),
        limit: 1e-8,
    })
}

fn identical_pair() -> Result<Check, CliError> {
    let body = BodySpec::uniform(Shape::Sphere { radius: 75e-9 }, 1e-17)?;
    let q = build_quadrature(&body, 16)?;
    let model = FluxModel::CosineLaw {
        spectrum: Spectrum::MaxwellBoltzmannFlux { temperature: 300.0 },
        rate: RateField::Uniform(1e16),
    };
    let rot = Rotation::from_axis_angle(&Vector3::x(), 0.4);
    let pair = PosePair::new(Vector3::zeros(), rot, rot);
    let rate = localization_rate(&pair, &model, &q, N2, &LocalizationSettings::default())?;
    let gamma = total_rate(&model, &q)?;
    Ok(Check {
        name: "localization rate of identical poses",
        value: rate.re.abs().max(rate.im.abs()) / gamma,
        limit: 1e-12,
    })
}

fn amplitudes() -> Result<Vec<Check>, CliError> {
    let site = SourceSite {
        index: 0,
        position: Vector3::new(3e-8, -1e-8, 2e-8),
        energy: 4e-21,
        rate: 7.0,
    };
    let a = TransparentEmitter { m_atom: N2 };
    let modulus = N2 / (2.0 * PI * HBAR * HBAR);
    let norm = amplitude_norm(&a, &site);
    let norm_err = (norm / (4.0 * PI * modulus * modulus) - 1.0).abs();

    // far field needs r/|s| well above p|s|/ħ, here about 0.7
    let n = Vector3::new(0.48, 0.6, 0.64);
    let s = Vector3::new(3e-12, -1e-12, 2e-12);
    let exact = transparent_amplitude(&n, &s, site.energy, N2)?;
    let err = |f: f64| -> Result<f64, CliError> {
        Ok((radial_extraction(&n, &s, f * s.norm(), site.energy, N2)? - exact).norm())
    };
    let (e2, e4) = (err(1e2)?, err(1e4)?);
    let order = (e2 / e4).log10() / 2.0;
    Ok(vec![
        Check {
            name: "transparent amplitude normalization",
            value: norm_err,
            limit: 1e-8,
        },
        Check {
            name: "radial extraction order minus one",
            value: (order - 1.0).abs(),
            limit: 0.1,
        },
    ])
}

fn outgas() -> Check {
    let est = OutgasPreset::Gold.estimate();
    Check {
        name: "gold outgassing vs 2 kHz",
        value: (est.rate_hz / est.reference_hz - 1.0).abs(),
        limit: 0.15,
    }
}

pub fn run_checks() -> Result<Vec<Check>, CliError> {
    let mut checks = sphere_cosine()?;
    checks.push(rotation_covariance()?);
    checks.push(identical_pair()?);
    checks.extend(amplitudes()?);
    checks.push(outgas());
    Ok(checks)
}

/// Prints the table; fails with an internal error when a check fails.
pub fn validate(out: &mut dyn Write) -> Result<(), CliError> {
    let checks = run_checks()?;
    writeln!(out, "{:<42} {:>12} {:>10}  result", "check", "value", "limit")?;
    for c in &checks {
        writeln!(
            out,
            "{:<42} {:>12.3e} {:>10.1e}  {}",
            c.name,
            c.value,
            c.limit,
            if c.pass() { "PASS" } else { "FAIL" }
        )?;
    }
    let failed = checks.iter().filter(|c| !c.pass()).count();
    if failed > 0 {
        return Err(CliError::Internal(format!("{failed} validation check(s) failed")));
    }
    Ok(())
}
