//! Lebedev–Laikov rules on the unit sphere, expanded from their octahedral
//! orbit generators.

use std::f64::consts::PI;

use nalgebra::Vector3;

use super::lebedev_table::RULES;
use super::AngularRule;
use crate::error::{Error, Result};

/// Algebraic orders available, ascending.
pub const LEBEDEV_ORDERS: [u32; 32] = [
    3, 5, 7, 9, 11, 13, 15, 17, 19, 21, 23, 25, 27, 29, 31, 35, 41, 47, 53, 59, 65, 71, 77, 83,
    89, 95, 101, 107, 113, 119, 125, 131,
];

#[derive(Debug, Clone)]
pub struct LebedevRule {
    /// Highest spherical-harmonic degree integrated exactly.
    pub order: u32,
    pub rule: AngularRule,
}

impl LebedevRule {
    pub fn has_positive_weights(&self) -> bool {
        self.rule.weights.iter().all(|&w| w > 0.0)
    }
}

/// The Lebedev rule of exactly this algebraic order; weights sum to 4π.
pub fn lebedev(order: u32) -> Result<LebedevRule> {
    let (points, _, gens) = RULES
        .iter()
        .find(|(_, o, _)| *o == order)
        .ok_or_else(|| Error::InvalidInput(format!("no Lebedev rule of order {order}")))?;
    let mut rule = AngularRule {
        directions: Vec::with_capacity(*points),
        weights: Vec::with_capacity(*points),
    };
    for &(kind, a, b, v) in gens.iter() {
        expand_orbit(kind, a, b, 4.0 * PI * v, &mut rule);
    }
    debug_assert_eq!(rule.len(), *points);
    Ok(LebedevRule { order, rule })
}

/// Smallest rule with all-positive weights whose order is at least `order`.
pub fn lebedev_covering(order: u32) -> Result<LebedevRule> {
    for &o in LEBEDEV_ORDERS.iter().filter(|&&o| o >= order) {
        let rule = lebedev(o)?;
        if rule.has_positive_weights() {
            return Ok(rule);
        }
    }
    Err(Error::QuadratureNotConverged(format!(
        "requested Lebedev order {order} exceeds the largest available rule (131)"
    )))
}

fn push_signed(rule: &mut AngularRule, p: [f64; 3], w: f64) {
    // every sign combination of the nonzero coordinates
    let mut signs: Vec<[f64; 3]> = vec![p];
    for axis in 0..3 {
        if p[axis] != 0.0 {
            let flipped: Vec<[f64; 3]> = signs
                .iter()
                .map(|q| {
                    let mut q = *q;
                    q[axis] = -q[axis];
                    q
                })
                .collect();
            signs.extend(flipped);
        }
    }
    for q in signs {
        rule.directions.push(Vector3::new(q[0], q[1], q[2]));
        rule.weights.push(w);
    }
}

fn expand_orbit(kind: u8, a: f64, b: f64, w: f64, rule: &mut AngularRule) {
    match kind {
        1 => {
            for p in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] {
                push_signed(rule, p, w);
            }
        }
        2 => {
            let a = 0.5f64.sqrt();
            for p in [[0.0, a, a], [a, 0.0, a], [a, a, 0.0]] {
                push_signed(rule, p, w);
            }
        }
        3 => {
            let a = (1.0f64 / 3.0).sqrt();
            push_signed(rule, [a, a, a], w);
        }
        4 => {
            let c = (1.0 - 2.0 * a * a).sqrt();
            for p in [[a, a, c], [a, c, a], [c, a, a]] {
                push_signed(rule, p, w);
            }
        }
        5 => {
            let c = (1.0 - a * a).sqrt();
            for p in [
                [a, c, 0.0],
                [c, a, 0.0],
                [a, 0.0, c],
                [c, 0.0, a],
                [0.0, a, c],
                [0.0, c, a],
            ] {
                push_signed(rule, p, w);
            }
        }
        6 => {
            let c = (1.0 - a * a - b * b).sqrt();
            for p in [
                [a, b, c],
                [a, c, b],
                [b, a, c],
                [b, c, a],
                [c, a, b],
                [c, b, a],
            ] {
                push_signed(rule, p, w);
            }
        }
        _ => unreachable!("unknown Lebedev orbit type {kind}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // ∫ x^a y^b z^c dΩ for even exponents, via Γ functions:
    // 2 Γ((a+1)/2) Γ((b+1)/2) Γ((c+1)/2) / Γ((a+b+c+3)/2)
    fn monomial_oracle(a: u32, b: u32, c: u32) -> f64 {
        if a % 2 == 1 || b % 2 == 1 || c % 2 == 1 {
            return 0.0;
        }
        let g = |x: f64| statrs::function::gamma::gamma(x);
        2.0 * g((a as f64 + 1.0) / 2.0) * g((b as f64 + 1.0) / 2.0) * g((c as f64 + 1.0) / 2.0)
            / g((a + b + c) as f64 / 2.0 + 1.5)
    }

    #[test]
    fn every_rule_has_unit_directions_and_4pi_weight() {
        for &o in &LEBEDEV_ORDERS {
            let r = lebedev(o).unwrap();
            assert!(r.rule.directions.iter().all(|n| (n.norm() - 1.0).abs() < 1e-14));
            assert!((r.rule.total_weight() - 4.0 * PI).abs() < 1e-12, "order {o}");
        }
    }

    #[test]
    fn rules_integrate_monomials_up_to_their_order() {
        for &o in &[5u32, 11, 17, 35, 59, 131] {
            let r = lebedev(o).unwrap();
            let max = o.min(24);
            for a in 0..=max {
                for b in 0..=(max - a) {
                    let c = max - a - b;
                    let got = r.rule.integrate(|n| n.x.powi(a as i32) * n.y.powi(b as i32) * n.z.powi(c as i32));
                    let exact = monomial_oracle(a, b, c);
                    assert!((got - exact).abs() < 1e-12, "order {o}: x^{a} y^{b} z^{c}: {got} vs {exact}");
                }
            }
        }
    }

    #[test]
    fn covering_skips_negative_weight_rules() {
        let r = lebedev_covering(13).unwrap();
        assert!(r.has_positive_weights());
        assert!(r.order >= 13);
        assert!(lebedev_covering(200).is_err());
    }
}
