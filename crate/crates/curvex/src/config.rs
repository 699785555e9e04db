//! Flat `key = value` configuration files.
//!
//! Keys mirror the generator, training and hybrid parameter names; blank lines
//! and `#` comments are ignored. Command-line flags override file values.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use curvex_core::dataset::GenConfig;
use curvex_core::hybrid::{DEFAULT_HK_LOW, DEFAULT_HK_UP};
use curvex_core::neural::{preset, TrainConfig, HIDDEN_LAYERS};
use curvex_core::preprocess::default_m_iota;

use crate::error::{Error, Result};

pub const GEN_KEYS: [&str; 11] = [
    "eta",
    "hk_min_star",
    "hk_max_star",
    "cph",
    "sph2",
    "keep_every_x",
    "nu",
    "na",
    "nt",
    "ease_mid_max_pr",
    "rng_seed",
];
pub const TRAIN_KEYS: [&str; 10] = [
    "batch_size",
    "max_epochs",
    "lr_init",
    "lr_min",
    "lr_halve_patience",
    "early_stop_patience",
    "l2_factor",
    "seed",
    "hidden_width",
    "m_iota",
];
pub const HYBRID_KEYS: [&str; 2] = ["hk_low", "hk_up"];

/// Parsed entries with the line each came from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, (String, usize)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", n + 1)));
            }
            let known =
                GEN_KEYS.contains(&k) || TRAIN_KEYS.contains(&k) || HYBRID_KEYS.contains(&k);
            if !known {
                return Err(Error::Config(format!("line {}: unknown key `{k}`", n + 1)));
            }
            if entries
                .insert(k.to_string(), (v.to_string(), n + 1))
                .is_some()
            {
                return Err(Error::Config(format!(
                    "line {}: duplicate key `{k}`",
                    n + 1
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse()
                .map(Some)
                .map_err(|e| Error::Config(format!("line {line}: `{key}`: {e}"))),
        }
    }

    fn set<T: FromStr>(&self, key: &str, slot: &mut T) -> Result<()>
    where
        T::Err: Display,
    {
        if let Some(v) = self.get(key)? {
            *slot = v;
        }
        Ok(())
    }
}

/// Everything a command may need, filled from defaults, a file and flags.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settings {
    pub gen: GenConfig,
    pub train: TrainConfig,
    pub widths: [usize; HIDDEN_LAYERS],
    pub m_iota: usize,
    pub hk_low: f64,
    pub hk_up: f64,
}

impl Settings {
    /// Defaults for refinement level `eta`.
    pub fn defaults(eta: u32) -> Self {
        let p = preset(eta);
        let train = TrainConfig {
            l2: p.map_or(5e-6, |p| p.l2),
            ..TrainConfig::default()
        };
        Self {
            gen: GenConfig::new(eta, 0),
            train,
            widths: [p.map_or(130, |p| p.width); HIDDEN_LAYERS],
            m_iota: p.map_or(default_m_iota(eta), |p| p.m_iota),
            hk_low: DEFAULT_HK_LOW,
            hk_up: DEFAULT_HK_UP,
        }
    }

    /// Defaults for the level named by `eta` (flag first, then file, then 6)
    /// overridden by the file's remaining keys.
    pub fn resolve(kv: &KeyValues, eta: Option<u32>) -> Result<Self> {
        let eta = match eta {
            Some(e) => e,
            None => kv.get("eta")?.unwrap_or(6),
        };
        let mut s = Self::defaults(eta);
        let g = &mut s.gen;
        kv.set("hk_min_star", &mut g.hk_min)?;
        kv.set("hk_max_star", &mut g.hk_max)?;
        kv.set("cph", &mut g.cph)?;
        kv.set("sph2", &mut g.sph2)?;
        kv.set("keep_every_x", &mut g.keep_every_x)?;
        kv.set("nu", &mut g.nu)?;
        kv.set("na", &mut g.na)?;
        kv.set("nt", &mut g.nt)?;
        kv.set("ease_mid_max_pr", &mut g.ease_mid_max_pr)?;
        kv.set("rng_seed", &mut g.seed)?;
        let t = &mut s.train;
        kv.set("batch_size", &mut t.batch_size)?;
        kv.set("max_epochs", &mut t.max_epochs)?;
        kv.set("lr_init", &mut t.lr_init)?;
        kv.set("lr_min", &mut t.lr_min)?;
        kv.set("lr_halve_patience", &mut t.lr_patience)?;
        kv.set("early_stop_patience", &mut t.early_stop_patience)?;
        kv.set("l2_factor", &mut t.l2)?;
        kv.set("seed", &mut t.seed)?;
        if let Some(w) = kv.get::<usize>("hidden_width")? {
            s.widths = [w; HIDDEN_LAYERS];
        }
        kv.set("m_iota", &mut s.m_iota)?;
        kv.set("hk_low", &mut s.hk_low)?;
        kv.set("hk_up", &mut s.hk_up)?;
        Ok(s)
    }
}
