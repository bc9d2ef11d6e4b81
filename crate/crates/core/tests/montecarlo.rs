use desorb_core::flux::{total_rate, FluxModel, RateField, Spectrum};
use desorb_core::geometry::{build_quadrature, BodySpec, Shape, SurfaceQuadrature};
use desorb_core::moments::{moments, MomentSettings};
use desorb_core::montecarlo::{compare_to_prediction, simulate_ensemble, SimulationConfig};
use desorb_core::types::ATOMIC_MASS_UNIT;
use nalgebra::{Matrix3, Vector3};
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};

const N2: f64 = 28.0134 * ATOMIC_MASS_UNIT;

fn mb() -> Spectrum {
    Spectrum::MaxwellBoltzmannFlux { temperature: 300.0 }
}

fn sphere() -> SurfaceQuadrature {
    build_quadrature(&BodySpec::uniform(Shape::Sphere { radius: 75e-9 }, 3.5e-15).unwrap(), 16).unwrap()
}

fn cylinder() -> SurfaceQuadrature {
    let shape = Shape::Cylinder {
        radius: 50e-9,
        half_length: 120e-9,
        capped: true,
    };
    build_quadrature(&BodySpec::uniform(shape, 3e-15).unwrap(), 16).unwrap()
}

fn cosine(rate: RateField) -> FluxModel {
    FluxModel::CosineLaw { spectrum: mb(), rate }
}

#[test]
fn event_counts_are_poisson() {
    let q = sphere();
    let model = cosine(RateField::Uniform(1e16));
    let gamma = total_rate(&model, &q).unwrap();
    let t = 6.0 / gamma;
    let n_traj = 20_000;
    let em = simulate_ensemble(&model, &q, N2, &SimulationConfig::new(vec![t], n_traj, 77)).unwrap();
    let lambda = gamma * t;
    let poisson = Poisson::new(lambda).unwrap();
    // bins 0..=k_max with the tail merged into the last one
    let k_max = 14;
    let mut observed = vec![0.0; k_max + 1];
    for &c in &em.event_counts {
        observed[(c as usize).min(k_max)] += 1.0;
    }
    let mut expected: Vec<f64> = (0..k_max).map(|k| n_traj as f64 * poisson.pmf(k as u64)).collect();
    expected.push(n_traj as f64 - expected.iter().sum::<f64>());
    assert!(expected.iter().all(|&e| e >= 5.0));
    let chi2: f64 = observed.iter().zip(&expected).map(|(o, e)| (o - e) * (o - e) / e).sum();
    let p = ChiSquared::new(k_max as f64).unwrap().sf(chi2);
    assert!(p > 1e-3, "chi2 {chi2} p {p}");
}

#[test]
fn scaled_diffusion_is_detected() {
    let q = sphere();
    let model = cosine(RateField::Uniform(1e16));
    let gamma = total_rate(&model, &q).unwrap();
    let t = 12.0 / gamma;
    let em = simulate_ensemble(&model, &q, N2, &SimulationConfig::new(vec![t], 100_000, 5)).unwrap();
    let (d, f) = moments(&model, &q, N2, &MomentSettings::default()).unwrap();
    let good = compare_to_prediction(&em, &d, &f).unwrap();
    assert!(good.pass, "max|z| {} p {}", good.max_abs_z, good.p_value);
    let bad = compare_to_prediction(&em, &d.scaled(1.1), &f).unwrap();
    assert!(!bad.pass);
    // the failure shows on the diagonal covariance entries
    let diag_z = bad
        .entries
        .iter()
        .filter(|e| ["cov_Px_Px", "cov_Py_Py", "cov_Pz_Pz"].contains(&e.label.as_str()))
        .map(|e| e.z.abs())
        .fold(0.0, f64::max);
    assert!(diag_z > 4.0, "{diag_z}");
}

#[test]
fn biased_cylinder_couples_momentum_and_angular_momentum() {
    let q = cylinder();
    let model = cosine(RateField::Polynomial {
        base: 1e16,
        gradient: Vector3::new(0.0, 0.0, 6e22),
        quadratic: Matrix3::zeros(),
    });
    let gamma = total_rate(&model, &q).unwrap();
    let t = 12.0 / gamma;
    let em = simulate_ensemble(&model, &q, N2, &SimulationConfig::new(vec![t], 100_000, 9)).unwrap();
    let (d, f) = moments(&model, &q, N2, &MomentSettings::default()).unwrap();
    assert!(d.tr.norm() > 1e-3 * (d.tt.norm() * d.rr.norm()).sqrt());
    let report = compare_to_prediction(&em, &d, &f).unwrap();
    assert!(report.pass, "max|z| {} p {}", report.max_abs_z, report.p_value);
    // some cross entry is clearly nonzero in the data
    let resolved = (0..3)
        .flat_map(|i| (3..6).map(move |j| (i, j)))
        .any(|(i, j)| em.covariance[0][(i, j)].abs() > 6.0 * em.covariance_stderr[0][(i, j)]);
    assert!(resolved);
}
