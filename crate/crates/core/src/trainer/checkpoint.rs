//! Checkpoint directories: `manifest.txt` plus one raw little-endian `f64`
//! buffer (row-major) per parameter tensor.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{JanusError, Result};
use crate::model::JanusModel;
use crate::tensor::Tensor;

use super::TrainConfig;

const FORMAT: &str = "janus-checkpoint-1";

/// A trained model with everything needed to rebuild its input views.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: JanusModel,
    pub config: TrainConfig,
    pub d_rw: usize,
    pub max_deg: usize,
}

pub fn write_f64_le(path: &Path, values: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 8);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| JanusError::io(path, e))
}

pub fn read_f64_le(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| JanusError::io(path, e))?;
    if bytes.len() % 8 != 0 {
        return Err(JanusError::InvalidInput(format!(
            "{}: length {} is not a multiple of 8",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

pub fn save_checkpoint(dir: &Path, ck: &Checkpoint) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| JanusError::io(dir, e))?;
    let m = &ck.model;
    let mut manifest = String::new();
    let _ = writeln!(manifest, "format = {FORMAT}");
    let _ = writeln!(manifest, "xs_dim = {}", m.xs_dim());
    let _ = writeln!(manifest, "xg_dim = {}", m.xg_dim());
    let _ = writeln!(manifest, "d_rw = {}", ck.d_rw);
    let _ = writeln!(manifest, "max_deg = {}", ck.max_deg);
    for line in ck.config.to_kv_string().lines() {
        let _ = writeln!(manifest, "config.{line}");
    }
    for (name, p) in m.param_names().iter().zip(m.params()) {
        let file = format!("{name}.bin");
        let _ = writeln!(manifest, "param = {name} {} {} {file}", p.rows(), p.cols());
        write_f64_le(&dir.join(&file), p.data())?;
    }
    let path = dir.join("manifest.txt");
    fs::write(&path, manifest).map_err(|e| JanusError::io(&path, e))
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let path = dir.join("manifest.txt");
    let text = fs::read_to_string(&path).map_err(|e| JanusError::io(&path, e))?;
    let bad = |line: usize, message: String| JanusError::Parse {
        path: path.clone(),
        line,
        message,
    };

    let mut config = TrainConfig::default();
    let (mut xs_dim, mut xg_dim, mut d_rw, mut max_deg) = (None, None, None, None);
    let mut format_ok = false;
    let mut params = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let Some((k, v)) = line.split_once('=') else { continue };
        let (k, v) = (k.trim(), v.trim());
        let num = |v: &str| v.parse::<usize>().map_err(|_| bad(i + 1, format!("bad number `{v}`")));
        match k {
            "format" => format_ok = v == FORMAT,
            "xs_dim" => xs_dim = Some(num(v)?),
            "xg_dim" => xg_dim = Some(num(v)?),
            "d_rw" => d_rw = Some(num(v)?),
            "max_deg" => max_deg = Some(num(v)?),
            "param" => {
                let parts: Vec<&str> = v.split_whitespace().collect();
                let [_, rows, cols, file] = parts[..] else {
                    return Err(bad(i + 1, "expected `name rows cols file`".into()));
                };
                let (rows, cols) = (num(rows)?, num(cols)?);
                let data = read_f64_le(&dir.join(file))?;
                params.push(Tensor::new(rows, cols, data)?.requiring_grad());
            }
            key => {
                if let Some(field) = key.strip_prefix("config.") {
                    config.set(field, v)?;
                }
            }
        }
    }
    if !format_ok {
        return Err(bad(1, format!("not a {FORMAT} manifest")));
    }
    let need = |v: Option<usize>, k: &str| v.ok_or_else(|| bad(0, format!("missing `{k}`")));
    let (xs_dim, xg_dim) = (need(xs_dim, "xs_dim")?, need(xg_dim, "xg_dim")?);
    let model = JanusModel::from_params(config.encoder(), xs_dim, xg_dim, params)?;
    Ok(Checkpoint {
        model,
        config,
        d_rw: need(d_rw, "d_rw")?,
        max_deg: need(max_deg, "max_deg")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bitwise() {
        let cfg = TrainConfig {
            layers: 2,
            hidden: 4,
            seed: 5,
            ..TrainConfig::default()
        };
        let model = JanusModel::init(cfg.encoder(), 3, 7, 5).unwrap();
        let ck = Checkpoint {
            model,
            config: cfg,
            d_rw: 3,
            max_deg: 3,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck");
        save_checkpoint(&path, &ck).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, ck);
        let raw = fs::read(path.join("enc_euc_s.0.w.bin")).unwrap();
        assert_eq!(raw.len(), 3 * 4 * 8);
    }

    #[test]
    fn rejects_foreign_manifest() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("manifest.txt"), "format = other\n").unwrap();
        assert!(load_checkpoint(dir.path()).is_err());
    }
}
