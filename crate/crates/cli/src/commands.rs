use std::io::Write;

use desorb_core::decoherence::{coherence_map, csv_header, write_row, LocalizationSettings, PosePair};
use desorb_core::flux::{outgas_rate, si_to_torr_l_per_cm2_s, torr_l_per_cm2_s_to_si, total_rate_with, OutgasPreset};
use desorb_core::geometry::build_quadrature;
use desorb_core::moments::{moments, MomentSettings};
use desorb_core::montecarlo::{compare_to_prediction, simulate_ensemble, SimulationConfig};
use desorb_core::Rotation;
use nalgebra::Vector3;
use serde_json::{json, Value};

use crate::config::{rotation_from_vector, LoadedConfig};
use crate::error::CliError;
use crate::output::{num, nums, sha256_hex, to_text, Metadata};

/// Options shared by every command.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Options {
    pub seed: Option<u64>,
    pub resolution_scale: f64,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            seed: None,
            resolution_scale: 1.0,
        }
    }
}

fn metadata(command: &'static str, cfg: &LoadedConfig) -> Metadata {
    Metadata {
        command,
        config_sha256: sha256_hex(&cfg.text),
        seed: None,
        resolution: None,
    }
}

fn rows(m: &nalgebra::Matrix6<f64>) -> Value {
    Value::Array((0..6).map(|i| nums(m.row(i).iter())).collect())
}

/// Diffusion tensor, force/torque and total rate as JSON.
pub fn tensors(cfg: &LoadedConfig, opts: &Options, out: &mut dyn Write) -> Result<(), CliError> {
    let body = cfg.body()?;
    let model = cfg.flux()?;
    let m_atom = cfg.atom_mass()?;
    let res = cfg.resolution(Some(&body), opts.resolution_scale)?;
    let q = build_quadrature(&body, res.surface)?;
    let settings = MomentSettings {
        orders: res.orders,
        tolerance: res.tolerance,
        max_refinements: res.max_refinements,
    };
    let (d, f) = moments(&model, &q, m_atom, &settings)?;
    let total = total_rate_with(&model, &q, &res.orders)?;
    let mut meta = metadata("tensors", cfg);
    meta.resolution = Some(res);
    let doc = json!({
        "metadata": meta.json(),
        "total_rate_hz": num(total),
        "surface_area_m2": num(q.total_area),
        "diffusion": rows(&d.matrix6()),
        "force_n": nums(f.force.iter()),
        "torque_n_m": nums(f.torque.iter()),
    });
    out.write_all(to_text(&doc).as_bytes())?;
    Ok(())
}

fn locmap_pairs(cfg: &LoadedConfig) -> Result<(Vec<PosePair>, Vec<f64>, Option<usize>), CliError> {
    let lm = cfg
        .config
        .locmap
        .as_ref()
        .ok_or_else(|| CliError::Config("missing key `locmap`".into()))?;
    lm.validate()?;
    let mut pairs = Vec::new();
    for (i, p) in lm.pairs.iter().enumerate() {
        let dx = Vector3::from(p.delta_x);
        if !dx.iter().all(|x| x.is_finite()) {
            return Err(CliError::Config(format!("locmap.pairs[{i}].delta_x must be finite")));
        }
        pairs.push(PosePair::new(
            dx,
            rotation_from_vector(&format!("locmap.pairs[{i}].rotation"), p.rotation)?,
            rotation_from_vector(&format!("locmap.pairs[{i}].rotation_prime"), p.rotation_prime)?,
        ));
    }
    if let Some(line) = &lm.line {
        let dir = Vector3::from(line.direction).normalize();
        for k in 0..line.count {
            let frac = if line.count == 1 { 0.0 } else { k as f64 / (line.count - 1) as f64 };
            let d = if line.log_spacing {
                line.min_m * (line.max_m / line.min_m).powf(frac)
            } else {
                line.min_m + (line.max_m - line.min_m) * frac
            };
            pairs.push(PosePair::new(dir * d, Rotation::identity(), Rotation::identity()));
        }
    }
    Ok((pairs, lm.times.clone(), lm.max_polar_nodes))
}

/// Localization-rate CSV, one row per pose pair, written as each is computed.
pub fn locmap(cfg: &LoadedConfig, opts: &Options, out: &mut dyn Write) -> Result<(), CliError> {
    let body = cfg.body()?;
    let model = cfg.flux()?;
    let m_atom = cfg.atom_mass()?;
    let (pairs, times, max_polar) = locmap_pairs(cfg)?;
    let res = cfg.resolution(Some(&body), opts.resolution_scale)?;
    let q = build_quadrature(&body, res.surface)?;
    let mut settings = LocalizationSettings {
        orders: res.orders,
        ..LocalizationSettings::default()
    };
    if let Some(n) = max_polar {
        settings.max_polar_nodes = n;
    }
    let mut meta = metadata("locmap", cfg);
    meta.resolution = Some(res);
    write!(out, "{}", meta.csv_lines())?;
    writeln!(out, "{}", csv_header(&times))?;
    for pair in &pairs {
        let row = coherence_map(std::slice::from_ref(pair), &times, &model, &q, m_atom, &settings);
        write_row(out, &row[0])?;
        out.flush()?;
    }
    Ok(())
}

/// Monte Carlo moments CSV plus the comparison report against D₀ and F₀.
pub fn simulate(cfg: &LoadedConfig, opts: &Options, out: &mut dyn Write, report: &mut dyn Write) -> Result<(), CliError> {
    let sim = cfg
        .config
        .simulate
        .as_ref()
        .ok_or_else(|| CliError::Config("missing key `simulate`".into()))?;
    sim.validate()?;
    let body = cfg.body()?;
    let model = cfg.flux()?;
    let m_atom = cfg.atom_mass()?;
    let res = cfg.resolution(Some(&body), opts.resolution_scale)?;
    let q = build_quadrature(&body, res.surface)?;
    let seed = opts.seed.unwrap_or(cfg.config.seed);
    let mut sc = SimulationConfig::new(sim.times.clone(), sim.n_traj, seed);
    if let Some(b) = sim.blocks {
        sc.blocks = b;
    }
    if sim.free_rotation {
        sc.free_rotation = Some(body.inertia_body);
    }
    let em = simulate_ensemble(&model, &q, m_atom, &sc)?;
    let settings = MomentSettings {
        orders: res.orders,
        tolerance: res.tolerance,
        max_refinements: res.max_refinements,
    };
    let (d, f) = moments(&model, &q, m_atom, &settings)?;
    let cmp = compare_to_prediction(&em, &d, &f)?;

    let mut meta = metadata("simulate", cfg);
    meta.seed = Some(seed);
    meta.resolution = Some(res);
    write!(out, "{}", meta.csv_lines())?;
    em.write_csv(out)?;

    let total_events: u64 = em.event_counts.iter().sum();
    let t_end = *sim.times.last().unwrap();
    let entries: Vec<Value> = cmp
        .entries
        .iter()
        .map(|e| {
            json!({
                "t_s": num(e.time),
                "entry": e.label,
                "measured": num(e.measured),
                "predicted": num(e.predicted),
                "stderr": num(e.stderr),
                "z": num(e.z),
            })
        })
        .collect();
    let doc = json!({
        "metadata": meta.json(),
        "n_traj": sim.n_traj,
        "free_rotation": sim.free_rotation,
        "total_rate_hz": num(em.total_rate),
        "expected_events": num(em.total_rate * t_end * sim.n_traj as f64),
        "total_events": total_events,
        "max_abs_z": num(cmp.max_abs_z),
        "hotelling_t2": num(cmp.chi2),
        "dof": cmp.dof,
        "p_value": num(cmp.p_value),
        "result": if cmp.pass { "PASS" } else { "FAIL" },
        "entries": entries,
    });
    report.write_all(to_text(&doc).as_bytes())?;
    Ok(())
}

/// Outgassing rate from a preset or explicit inputs.
pub fn outgas(cfg: &LoadedConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let og = cfg
        .config
        .outgas
        .as_ref()
        .ok_or_else(|| CliError::Config("missing key `outgas`".into()))?;
    let meta = metadata("outgas", cfg);
    let doc = if let Some(preset) = og.preset {
        if og.specific_rate_torr_l_per_cm2_s.is_some()
            || og.specific_rate_pa_m3_per_s_m2.is_some()
            || og.area_m2.is_some()
            || og.temperature_k.is_some()
        {
            return Err(CliError::Config("outgas.preset cannot be combined with explicit inputs".into()));
        }
        let est = OutgasPreset::from(preset).estimate();
        json!({
            "metadata": meta.json(),
            "preset": format!("{:?}", OutgasPreset::from(preset)).to_lowercase(),
            "specific_rate_pa_m3_per_s_m2": num(est.specific_rate_si),
            "specific_rate_torr_l_per_cm2_s": num(si_to_torr_l_per_cm2_s(est.specific_rate_si)),
            "area_m2": num(est.area),
            "temperature_k": num(est.temperature),
            "rate_hz": num(est.rate_hz),
            "reference_hz": num(est.reference_hz),
            "note": est.note,
        })
    } else {
        let si = match (og.specific_rate_pa_m3_per_s_m2, og.specific_rate_torr_l_per_cm2_s) {
            (Some(v), None) => v,
            (None, Some(v)) => torr_l_per_cm2_s_to_si(v),
            _ => {
                return Err(CliError::Config(
                    "outgas needs exactly one of specific_rate_pa_m3_per_s_m2, specific_rate_torr_l_per_cm2_s".into(),
                ))
            }
        };
        let area = og.area_m2.ok_or_else(|| CliError::Config("missing key `outgas.area_m2`".into()))?;
        let t = og
            .temperature_k
            .ok_or_else(|| CliError::Config("missing key `outgas.temperature_k`".into()))?;
        let rate = outgas_rate(si, area, t).map_err(|e| CliError::Config(format!("outgas: {e}")))?;
        json!({
            "metadata": meta.json(),
            "specific_rate_pa_m3_per_s_m2": num(si),
            "specific_rate_torr_l_per_cm2_s": num(si_to_torr_l_per_cm2_s(si)),
            "area_m2": num(area),
            "temperature_k": num(t),
            "rate_hz": num(rate),
        })
    };
    out.write_all(to_text(&doc).as_bytes())?;
    Ok(())
}
