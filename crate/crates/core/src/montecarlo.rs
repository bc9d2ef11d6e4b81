//! Classical emission-event simulation: each event kicks the body by
//! ΔP = −p n and ΔJ = −s × p n. Ensembles of trajectories give moment
//! estimates that are compared against D₀ and F₀.

use std::io::Write;

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Vector3, Vector6};
use rand::Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};
use crate::flux::{EventSampler, FluxModel};
use crate::geometry::SurfaceQuadrature;
use crate::moments::{predict_moments, Diffusion6, ForceTorque6, MomentState};
use crate::rng::{stream, Purpose};
use crate::types::{rotation_from_w, Rotation, SmallAngle};

pub const COMPONENTS: [&str; 6] = ["Px", "Py", "Pz", "Jx", "Jy", "Jz"];

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    /// Output times (s), ascending and nonnegative.
    pub times: Vec<f64>,
    pub n_traj: usize,
    pub seed: u64,
    /// Body-frame inertia tensor; when set the body rotates freely between
    /// kicks and kicks are applied in the rotated frame.
    pub free_rotation: Option<Matrix3<f64>>,
    /// Number of jackknife blocks (capped at `n_traj`).
    pub blocks: usize,
}

impl SimulationConfig {
    pub fn new(times: Vec<f64>, n_traj: usize, seed: u64) -> Self {
        SimulationConfig {
            times,
            n_traj,
            seed,
            free_rotation: None,
            blocks: 1000,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_traj < 2 {
            return Err(Error::InvalidInput(format!("n_traj must be at least 2, got {}", self.n_traj)));
        }
        if self.times.is_empty() || self.times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return Err(Error::InvalidInput("output times must be nonnegative and finite".into()));
        }
        if self.times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidInput("output times must be ascending".into()));
        }
        if self.blocks < 2 {
            return Err(Error::InvalidInput("at least two jackknife blocks are needed".into()));
        }
        Ok(())
    }
}

/// Moments of (P, J) at each output time, in the frame of the reference
/// orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleMoments {
    pub times: Vec<f64>,
    pub n_traj: usize,
    pub total_rate: f64,
    pub mean: Vec<Vector6<f64>>,
    pub covariance: Vec<Matrix6<f64>>,
    pub mean_stderr: Vec<Vector6<f64>>,
    pub covariance_stderr: Vec<Matrix6<f64>>,
    /// Events per trajectory up to the last output time.
    pub event_counts: Vec<u64>,
    /// Leave-one-block-out replicates of [`EnsembleMoments::statistics`].
    replicates: Vec<DVector<f64>>,
}

/// Index pairs (i ≤ j) of the 21 unique covariance entries.
pub fn unique_pairs() -> Vec<(usize, usize)> {
    (0..6).flat_map(|i| (i..6).map(move |j| (i, j))).collect()
}

fn statistics_of(mean: &[Vector6<f64>], cov: &[Matrix6<f64>]) -> DVector<f64> {
    let pairs = unique_pairs();
    let mut out = Vec::with_capacity(mean.len() * 27);
    for (m, c) in mean.iter().zip(cov) {
        out.extend(m.iter());
        out.extend(pairs.iter().map(|&(i, j)| c[(i, j)]));
    }
    DVector::from_vec(out)
}

#[derive(Clone)]
struct BlockSums {
    n: f64,
    s1: Vec<Vector6<f64>>,
    s2: Vec<Matrix6<f64>>,
}

impl BlockSums {
    fn zeros(nt: usize) -> Self {
        BlockSums {
            n: 0.0,
            s1: vec![Vector6::zeros(); nt],
            s2: vec![Matrix6::zeros(); nt],
        }
    }

    fn add(&mut self, other: &BlockSums) {
        self.n += other.n;
        for k in 0..self.s1.len() {
            self.s1[k] += other.s1[k];
            self.s2[k] += other.s2[k];
        }
    }

    fn sub(&self, other: &BlockSums) -> BlockSums {
        BlockSums {
            n: self.n - other.n,
            s1: self.s1.iter().zip(&other.s1).map(|(a, b)| a - b).collect(),
            s2: self.s2.iter().zip(&other.s2).map(|(a, b)| a - b).collect(),
        }
    }

    fn moments(&self) -> (Vec<Vector6<f64>>, Vec<Matrix6<f64>>) {
        let n = self.n;
        let mean: Vec<Vector6<f64>> = self.s1.iter().map(|s| s / n).collect();
        let cov = self
            .s2
            .iter()
            .zip(&mean)
            .map(|(s2, m)| {
                let c = (s2 - m * m.transpose() * n) / (n - 1.0);
                (c + c.transpose()) * 0.5
            })
            .collect();
        (mean, cov)
    }
}

/// One trajectory: the (P, J) state at each output time and the event count.
fn run_trajectory(
    sampler: &EventSampler,
    m_atom: f64,
    rate: f64,
    times: &[f64],
    free_rotation: Option<&Matrix3<f64>>,
    rng: &mut impl Rng,
) -> (Vec<Vector6<f64>>, u64) {
    let mut p = Vector3::zeros();
    let mut j = Vector3::zeros();
    let mut orientation = Rotation::identity();
    let mut t = 0.0;
    let mut events = 0u64;
    let mut out = Vec::with_capacity(times.len());
    let t_end = *times.last().unwrap();
    let mut next = if rate > 0.0 { exp_sample(rng) / rate } else { f64::INFINITY };
    let mut k = 0;
    loop {
        // record every output time before the next event
        while k < times.len() && times[k] < next {
            if let Some(inertia) = free_rotation {
                orientation = propagate(&orientation, &j, inertia, times[k] - t);
                t = times[k];
            }
            out.push(Vector6::new(p.x, p.y, p.z, j.x, j.y, j.z));
            k += 1;
        }
        if k == times.len() || next > t_end {
            break;
        }
        if let Some(inertia) = free_rotation {
            orientation = propagate(&orientation, &j, inertia, next - t);
            t = next;
        }
        let ev = sampler.sample(rng);
        let atom_p = (2.0 * ev.energy * m_atom).sqrt();
        let (n, s) = if free_rotation.is_some() {
            (orientation.apply(&ev.direction), orientation.apply(&ev.position))
        } else {
            (ev.direction, ev.position)
        };
        let dp = -n * atom_p;
        let dj = -s.cross(&(n * atom_p));
        debug_assert!((dp + n * atom_p).norm() <= 1e-12 * atom_p);
        debug_assert!((dj + s.cross(&(n * atom_p))).norm() <= 1e-12 * atom_p * s.norm().max(1e-300));
        p += dp;
        j += dj;
        events += 1;
        next += exp_sample(rng) / rate;
    }
    (out, events)
}

fn exp_sample(rng: &mut impl Rng) -> f64 {
    -(1.0 - rng.random::<f64>()).ln()
}

/// Torque-free rotation over `dt` with the lab angular momentum `j` fixed.
fn propagate(r: &Rotation, j: &Vector3<f64>, inertia: &Matrix3<f64>, dt: f64) -> Rotation {
    if dt <= 0.0 || j.norm() == 0.0 {
        return *r;
    }
    let inv = inertia.try_inverse().unwrap_or_else(Matrix3::zeros);
    let mut r = *r;
    let omega0 = (inv * r.apply_inverse(j)).norm();
    let steps = ((omega0 * dt / 0.05).ceil() as usize).clamp(1, 100_000);
    let h = dt / steps as f64;
    for _ in 0..steps {
        let w_body = inv * r.apply_inverse(j) * h;
        let angle = w_body.norm();
        let step = if angle < std::f64::consts::PI - 1e-6 {
            rotation_from_w(&SmallAngle::new(w_body).expect("checked angle"))
        } else {
            Rotation::from_axis_angle(&w_body, angle)
        };
        r = r.compose(&step);
    }
    r
}

/// Simulates `config.n_traj` independent trajectories starting from
/// P = J = 0. Results do not depend on the number of worker threads.
pub fn simulate_ensemble(model: &FluxModel, q: &SurfaceQuadrature, m_atom: f64, config: &SimulationConfig) -> Result<EnsembleMoments> {
    config.validate()?;
    if !(m_atom > 0.0 && m_atom.is_finite()) {
        return Err(Error::InvalidInput(format!("atom mass must be positive, got {m_atom}")));
    }
    let nt = config.times.len();
    let sampler = match EventSampler::new(model, q) {
        Ok(s) => Some(s),
        Err(Error::InvalidInput(msg)) if msg.contains("zero total emission") => None,
        Err(e) => return Err(e),
    };
    let rate = sampler.as_ref().map_or(0.0, EventSampler::total_rate);
    let blocks = config.blocks.min(config.n_traj);
    let bounds: Vec<(usize, usize)> = (0..blocks)
        .map(|b| (b * config.n_traj / blocks, (b + 1) * config.n_traj / blocks))
        .collect();

    let per_block: Vec<(BlockSums, Vec<u64>)> = bounds
        .par_iter()
        .map(|&(lo, hi)| {
            let mut sums = BlockSums::zeros(nt);
            let mut counts = Vec::with_capacity(hi - lo);
            for traj in lo..hi {
                let (states, events) = match &sampler {
                    Some(s) => {
                        let mut rng = stream(config.seed, Purpose::Trajectory, traj as u64);
                        run_trajectory(s, m_atom, rate, &config.times, config.free_rotation.as_ref(), &mut rng)
                    }
                    None => (vec![Vector6::zeros(); nt], 0),
                };
                sums.n += 1.0;
                for (k, x) in states.iter().enumerate() {
                    sums.s1[k] += x;
                    sums.s2[k] += x * x.transpose();
                }
                counts.push(events);
            }
            (sums, counts)
        })
        .collect();

    let mut total = BlockSums::zeros(nt);
    let mut event_counts = Vec::with_capacity(config.n_traj);
    for (sums, counts) in &per_block {
        total.add(sums);
        event_counts.extend_from_slice(counts);
    }
    let (mean, covariance) = total.moments();
    let replicates: Vec<DVector<f64>> = per_block
        .iter()
        .map(|(sums, _)| {
            let (m, c) = total.sub(sums).moments();
            statistics_of(&m, &c)
        })
        .collect();
    let se = jackknife_stderr(&replicates);
    let pairs = unique_pairs();
    let mut mean_stderr = Vec::with_capacity(nt);
    let mut covariance_stderr = Vec::with_capacity(nt);
    for k in 0..nt {
        let base = 27 * k;
        mean_stderr.push(Vector6::from_iterator((0..6).map(|i| se[base + i])));
        let mut c = Matrix6::zeros();
        for (idx, &(i, j)) in pairs.iter().enumerate() {
            c[(i, j)] = se[base + 6 + idx];
            c[(j, i)] = se[base + 6 + idx];
        }
        covariance_stderr.push(c);
    }
    Ok(EnsembleMoments {
        times: config.times.clone(),
        n_traj: config.n_traj,
        total_rate: rate,
        mean,
        covariance,
        mean_stderr,
        covariance_stderr,
        event_counts,
        replicates,
    })
}

fn jackknife_mean(replicates: &[DVector<f64>]) -> DVector<f64> {
    let b = replicates.len() as f64;
    replicates.iter().fold(DVector::zeros(replicates[0].len()), |acc, r| acc + r) / b
}

fn jackknife_stderr(replicates: &[DVector<f64>]) -> DVector<f64> {
    let b = replicates.len() as f64;
    let mean = jackknife_mean(replicates);
    let var = replicates
        .iter()
        .fold(DVector::zeros(mean.len()), |acc, r| acc + (r - &mean).map(|x| x * x));
    (var * ((b - 1.0) / b)).map(f64::sqrt)
}

impl EnsembleMoments {
    /// Means and unique covariance entries of every output time, stacked.
    pub fn statistics(&self) -> DVector<f64> {
        statistics_of(&self.mean, &self.covariance)
    }

    /// Jackknife covariance of [`EnsembleMoments::statistics`].
    pub fn statistics_covariance(&self) -> DMatrix<f64> {
        let b = self.replicates.len() as f64;
        let mean = jackknife_mean(&self.replicates);
        let mut c = DMatrix::zeros(mean.len(), mean.len());
        for r in &self.replicates {
            let d = r - &mean;
            c += &d * d.transpose();
        }
        c * ((b - 1.0) / b)
    }

    pub fn blocks(&self) -> usize {
        self.replicates.len()
    }

    /// Writes `t_s`, 6 means, 21 covariances and their standard errors per row.
    pub fn write_csv<W: Write + ?Sized>(&self, out: &mut W) -> std::io::Result<()> {
        let pairs = unique_pairs();
        let mut header = vec!["t_s".to_string()];
        header.extend(COMPONENTS.iter().map(|c| format!("mean_{c}")));
        header.extend(pairs.iter().map(|&(i, j)| format!("cov_{}_{}", COMPONENTS[i], COMPONENTS[j])));
        header.extend(COMPONENTS.iter().map(|c| format!("se_mean_{c}")));
        header.extend(pairs.iter().map(|&(i, j)| format!("se_cov_{}_{}", COMPONENTS[i], COMPONENTS[j])));
        writeln!(out, "{}", header.join(","))?;
        for k in 0..self.times.len() {
            let mut row = vec![self.times[k]];
            row.extend(self.mean[k].iter());
            row.extend(pairs.iter().map(|&(i, j)| self.covariance[k][(i, j)]));
            row.extend(self.mean_stderr[k].iter());
            row.extend(pairs.iter().map(|&(i, j)| self.covariance_stderr[k][(i, j)]));
            let fields: Vec<String> = row.iter().map(|x| format!("{x:.16e}")).collect();
            writeln!(out, "{}", fields.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntryCheck {
    pub time: f64,
    pub label: String,
    pub measured: f64,
    pub predicted: f64,
    pub stderr: f64,
    /// (measured − predicted)/stderr; 0 for entries with zero spread that match.
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub entries: Vec<EntryCheck>,
    pub max_abs_z: f64,
    /// Hotelling T² of all entries with nonzero spread.
    pub chi2: f64,
    pub dof: usize,
    pub p_value: f64,
    pub pass: bool,
}

/// Thresholds used by [`compare_to_prediction`].
pub const Z_LIMIT: f64 = 4.0;
pub const P_VALUE_LIMIT: f64 = 1e-3;

/// Per-entry z-scores against mean F t and covariance 2 D t, plus a global
/// test of all entries together using the jackknife covariance. The global
/// statistic is Hotelling's T², converted to an F distribution because the
/// covariance is itself estimated from the blocks.
pub fn compare_to_prediction(em: &EnsembleMoments, d: &Diffusion6, f: &ForceTorque6) -> Result<ComparisonReport> {
    let mut pm = Vec::with_capacity(em.times.len());
    let mut pc = Vec::with_capacity(em.times.len());
    for &t in &em.times {
        let state = predict_moments(d, f, t, &MomentState::default())?;
        pm.push(state.mean);
        pc.push(state.covariance);
    }
    let predicted = statistics_of(&pm, &pc);
    let measured = em.statistics();
    let cov = em.statistics_covariance();
    let pairs = unique_pairs();
    let mut entries = Vec::with_capacity(measured.len());
    let mut active = Vec::new();
    let mut max_abs_z = 0.0f64;
    for idx in 0..measured.len() {
        let k = idx / 27;
        let r = idx % 27;
        let label = if r < 6 {
            format!("mean_{}", COMPONENTS[r])
        } else {
            let (i, j) = pairs[r - 6];
            format!("cov_{}_{}", COMPONENTS[i], COMPONENTS[j])
        };
        let se = cov[(idx, idx)].max(0.0).sqrt();
        let diff = measured[idx] - predicted[idx];
        let scale = measured[idx].abs().max(predicted[idx].abs());
        let z = if se > 1e-9 * scale && se > 0.0 {
            active.push(idx);
            diff / se
        } else if diff.abs() <= 1e-9 * scale || diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        max_abs_z = max_abs_z.max(z.abs());
        entries.push(EntryCheck {
            time: em.times[k],
            label,
            measured: measured[idx],
            predicted: predicted[idx],
            stderr: se,
            z,
        });
    }
    let (chi2, dof, p_value) = hotelling(&measured, &predicted, &cov, &active, em.blocks());
    let pass = max_abs_z < Z_LIMIT && p_value > P_VALUE_LIMIT;
    Ok(ComparisonReport {
        entries,
        max_abs_z,
        chi2,
        dof,
        p_value,
        pass,
    })
}

fn hotelling(measured: &DVector<f64>, predicted: &DVector<f64>, cov: &DMatrix<f64>, active: &[usize], blocks: usize) -> (f64, usize, f64) {
    if active.is_empty() {
        return (0.0, 0, 1.0);
    }
    let m = active.len();
    // correlation form keeps the eigenproblem well scaled
    let sd: Vec<f64> = active.iter().map(|&i| cov[(i, i)].sqrt()).collect();
    let corr = DMatrix::from_fn(m, m, |a, b| cov[(active[a], active[b])] / (sd[a] * sd[b]));
    let diff = DVector::from_fn(m, |a, _| (measured[active[a]] - predicted[active[a]]) / sd[a]);
    let eig = corr.symmetric_eigen();
    let largest = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b));
    let mut t2 = 0.0;
    let mut rank = 0usize;
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > 1e-10 * largest {
            let proj = eig.eigenvectors.column(k).dot(&diff);
            t2 += proj * proj / lambda;
            rank += 1;
        }
    }
    let b = blocks as f64;
    let p = rank as f64;
    if blocks <= rank + 1 {
        return (t2, rank, f64::NAN);
    }
    let f_stat = (b - p) / (p * (b - 1.0)) * t2;
    let p_value = FisherSnedecor::new(p, b - p).map_or(f64::NAN, |dist| dist.sf(f_stat));
    (t2, rank, p_value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flux::{DirectionLaw, Spectrum};
    use crate::geometry::{build_quadrature, BodySpec, Shape};
    use crate::moments::{moments, MomentSettings};
    use crate::types::ATOMIC_MASS_UNIT;
    use approx::assert_relative_eq;

    const M: f64 = 28.0134 * ATOMIC_MASS_UNIT;

    fn sphere() -> SurfaceQuadrature {
        build_quadrature(&BodySpec::uniform(Shape::Sphere { radius: 1e-7 }, 1e-18).unwrap(), 4).unwrap()
    }

    fn point(law: DirectionLaw, rate: f64) -> FluxModel {
        FluxModel::SingleSite {
            position: Vector3::zeros(),
            law,
            spectrum: Spectrum::Monoenergetic { energy: 4e-21 },
            rate,
        }
    }

    #[test]
    fn zero_rate_leaves_moments_constant() {
        let em = simulate_ensemble(&point(DirectionLaw::Isotropic, 0.0), &sphere(), M, &SimulationConfig::new(vec![0.0, 1.0], 10, 1)).unwrap();
        assert!(em.mean.iter().all(|m| m.norm() == 0.0));
        assert!(em.covariance.iter().all(|c| c.norm() == 0.0));
        assert!(em.event_counts.iter().all(|&c| c == 0));
    }

    #[test]
    fn directed_source_drifts_against_emission() {
        let gamma = 50.0;
        let model = point(DirectionLaw::Directed { axis: Vector3::x() }, gamma);
        let t = 2.0;
        let em = simulate_ensemble(&model, &sphere(), M, &SimulationConfig::new(vec![t], 4000, 7)).unwrap();
        let p0 = (2.0 * M * 4e-21).sqrt();
        // oracle: Poisson mean count Γt times the kick −p0 x̂
        let expect = -gamma * t * p0;
        assert!((em.mean[0][0] - expect).abs() < 4.0 * em.mean_stderr[0][0]);
        assert_eq!(em.mean[0][1], 0.0);
        let (d, f) = moments(&model, &sphere(), M, &MomentSettings::default()).unwrap();
        assert!(compare_to_prediction(&em, &d, &f).unwrap().pass);
    }

    #[test]
    fn isotropic_source_matches_and_detects_mismatch() {
        let model = point(DirectionLaw::Isotropic, 20.0);
        let q = sphere();
        let config = SimulationConfig::new(vec![0.5, 1.0], 20_000, 3);
        let em = simulate_ensemble(&model, &q, M, &config).unwrap();
        let (d, f) = moments(&model, &q, M, &MomentSettings::default()).unwrap();
        let report = compare_to_prediction(&em, &d, &f).unwrap();
        assert!(report.pass, "max |z| {} p {}", report.max_abs_z, report.p_value);
        // J stays exactly zero for a source at the origin
        assert_eq!(em.covariance[1][(4, 4)], 0.0);
        let wrong = compare_to_prediction(&em, &d.scaled(1.1), &f).unwrap();
        assert!(!wrong.pass);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let model = point(DirectionLaw::Isotropic, 5.0);
        let config = SimulationConfig::new(vec![0.3, 1.0], 500, 42);
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| simulate_ensemble(&model, &sphere(), M, &config).unwrap())
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn free_rotation_conserves_the_total_kick() {
        let model = FluxModel::SingleSite {
            position: Vector3::new(0.0, 0.0, 1e-7),
            law: DirectionLaw::Directed { axis: Vector3::x() },
            spectrum: Spectrum::Monoenergetic { energy: 4e-21 },
            rate: 3.0,
        };
        let mut config = SimulationConfig::new(vec![1.0], 50, 9);
        config.free_rotation = Some(Matrix3::identity() * 1e-33);
        let em = simulate_ensemble(&model, &sphere(), M, &config).unwrap();
        // the momentum magnitude per event is unchanged by rotation
        let p0 = (2.0 * M * 4e-21).sqrt();
        let n_mean = em.event_counts.iter().sum::<u64>() as f64 / 50.0;
        let p_sq = em.covariance[0].fixed_view::<3, 3>(0, 0).trace() * 49.0 / 50.0 + em.mean[0].fixed_rows::<3>(0).norm_squared();
        assert!(p_sq <= (n_mean * p0).powi(2) * 50.0);
        assert!(em.mean[0].iter().all(|x| x.is_finite()));
    }

    #[test]
    fn invalid_configuration() {
        let model = point(DirectionLaw::Isotropic, 5.0);
        assert!(simulate_ensemble(&model, &sphere(), M, &SimulationConfig::new(vec![1.0], 0, 1)).is_err());
        assert!(simulate_ensemble(&model, &sphere(), M, &SimulationConfig::new(vec![], 10, 1)).is_err());
        assert!(simulate_ensemble(&model, &sphere(), M, &SimulationConfig::new(vec![2.0, 1.0], 10, 1)).is_err());
    }

    #[test]
    fn csv_has_expected_columns() {
        let model = point(DirectionLaw::Isotropic, 5.0);
        let em = simulate_ensemble(&model, &sphere(), M, &SimulationConfig::new(vec![0.5, 1.0], 20, 1)).unwrap();
        let mut buf = Vec::new();
        em.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0].split(',').count(), 1 + 6 + 21 + 6 + 21);
        assert!(lines[0].starts_with("t_s,mean_Px"));
        assert_relative_eq!(lines[2].split(',').next().unwrap().parse::<f64>().unwrap(), 1.0);
    }
}
