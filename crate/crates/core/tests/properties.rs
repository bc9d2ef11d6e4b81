use desorb_core::decoherence::{localization_rate, LocalizationSettings, PosePair};
use desorb_core::flux::{total_rate, DirectionLaw, FluxModel, RateField, Spectrum};
use desorb_core::geometry::{build_quadrature, BodySpec, Shape};
use desorb_core::moments::{moments, MomentSettings};
use desorb_core::types::{rotation_from_w, w_from_rotations, ATOMIC_MASS_UNIT};
use desorb_core::{Rotation, SmallAngle};
use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;

const N2: f64 = 28.0134 * ATOMIC_MASS_UNIT;

fn vector(scale: f64) -> impl Strategy<Value = Vector3<f64>> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64).prop_map(move |(x, y, z)| Vector3::new(x, y, z) * scale)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn log_inverts_exp(w in vector(1.7)) {
        let r = rotation_from_w(&SmallAngle::new(w).unwrap());
        let back = w_from_rotations(&Rotation::identity(), &r).unwrap();
        prop_assert!((back.vector() - w).norm() <= 1e-12);
    }

    #[test]
    fn relative_rotation_is_frame_independent(w in vector(1.0), a in vector(3.0)) {
        let reference = Rotation::from_axis_angle(&a, a.norm());
        let actual = reference.compose(&rotation_from_w(&SmallAngle::new(w).unwrap()));
        let got = w_from_rotations(&reference, &actual).unwrap();
        prop_assert!((got.vector() - w).norm() <= 1e-11);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn localization_rate_stays_within_bounds(dx in vector(3e-10), w in vector(2e-3), a in vector(3.0)) {
        let q = build_quadrature(&BodySpec::uniform(Shape::Sphere { radius: 50e-9 }, 1e-15).unwrap(), 6).unwrap();
        let model = FluxModel::CosineLaw {
            spectrum: Spectrum::Monoenergetic { energy: 2e-21 },
            rate: RateField::Polynomial {
                base: 1e16,
                gradient: Vector3::new(5e22, 0.0, 0.0),
                quadratic: Matrix3::zeros(),
            },
        };
        let gamma = total_rate(&model, &q).unwrap();
        let r = Rotation::from_axis_angle(&a, a.norm());
        let rp = r.compose(&Rotation::from_axis_angle(&w, w.norm()));
        let pair = PosePair::new(dx, r, rp);
        let f = localization_rate(&pair, &model, &q, N2, &LocalizationSettings::default()).unwrap();
        prop_assert!(f.re >= 0.0 && f.re <= 2.0 * gamma + 1e-9);
        let g = localization_rate(&pair.swapped(), &model, &q, N2, &LocalizationSettings::default()).unwrap();
        prop_assert!((f.re - g.re).abs() <= 1e-9 * gamma);
        prop_assert!((f.im + g.im).abs() <= 1e-9 * gamma);
    }

    #[test]
    fn diffusion_tensor_is_positive_semidefinite(pos in vector(1e-7), axis in vector(1.0), e in 1e-22..1e-20f64) {
        prop_assume!(axis.norm() > 0.1);
        let q = build_quadrature(&BodySpec::uniform(Shape::Sphere { radius: 1e-7 }, 1e-15).unwrap(), 2).unwrap();
        let model = FluxModel::SingleSite {
            position: pos,
            law: DirectionLaw::Cosine { axis: axis.normalize() },
            spectrum: Spectrum::Monoenergetic { energy: e },
            rate: 10.0,
        };
        let (d, _) = moments(&model, &q, N2, &MomentSettings::default()).unwrap();
        prop_assert!(d.is_positive_semidefinite());
    }
}
