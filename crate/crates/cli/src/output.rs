//! Number formatting and the metadata block shared by all outputs.

use desorb_core::flux::QuadratureOrders;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::config::Resolution;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// 17 significant digits, which round-trips every f64.
pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

/// A JSON number printed with [`fmt`]; non-finite values become `null`.
pub fn num(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    serde_json::from_str(&fmt(x)).expect("formatted float is valid JSON")
}

pub fn nums<'a>(xs: impl IntoIterator<Item = &'a f64>) -> Value {
    Value::Array(xs.into_iter().map(|&x| num(x)).collect())
}

pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone)]
pub struct Metadata {
    pub command: &'static str,
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub resolution: Option<Resolution>,
}

fn orders_json(o: &QuadratureOrders) -> Value {
    json!({
        "polar_nodes": o.polar_nodes,
        "lebedev_order": o.lebedev_order,
        "energy_nodes": o.energy_nodes,
        "energy_cutoff_kt": num(o.energy_cutoff_kt),
    })
}

impl Metadata {
    pub fn json(&self) -> Value {
        let mut m = Map::new();
        m.insert("tool".into(), json!("desorb"));
        m.insert("version".into(), json!(VERSION));
        m.insert("command".into(), json!(self.command));
        m.insert("config_sha256".into(), json!(self.config_sha256));
        if let Some(seed) = self.seed {
            m.insert("seed".into(), json!(seed));
        }
        if let Some(r) = &self.resolution {
            m.insert("surface_resolution".into(), json!(r.surface));
            m.insert("orders".into(), orders_json(&r.orders));
            m.insert("tolerance".into(), num(r.tolerance));
        }
        Value::Object(m)
    }

    /// `# key=value` lines for CSV outputs.
    pub fn csv_lines(&self) -> String {
        let mut out = format!(
            "# tool=desorb\n# version={VERSION}\n# command={}\n# config_sha256={}\n",
            self.command, self.config_sha256
        );
        if let Some(seed) = self.seed {
            out.push_str(&format!("# seed={seed}\n"));
        }
        if let Some(r) = &self.resolution {
            let o = &r.orders;
            out.push_str(&format!(
                "# surface_resolution={}\n# polar_nodes={}\n# lebedev_order={}\n# energy_nodes={}\n# energy_cutoff_kt={}\n",
                r.surface,
                o.polar_nodes,
                o.lebedev_order,
                o.energy_nodes,
                fmt(o.energy_cutoff_kt)
            ));
        }
        out
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_text(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23] {
            let text = serde_json::to_string(&num(x)).unwrap();
            assert_eq!(text.parse::<f64>().unwrap(), x);
            assert_eq!(text.split('e').next().unwrap().len(), fmt(x).split('e').next().unwrap().len());
        }
        assert_eq!(num(f64::NAN), Value::Null);
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(
            sha256_hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
