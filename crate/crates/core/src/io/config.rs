//! Flat `key = value` run configuration. Keys mirror the CLI flags.

use std::path::{Path, PathBuf};

use serde::Serialize;

use super::mmn::Window;
use crate::error::{Error, Result};
use crate::frames::Method;
use crate::grid::{KGrid, Lattice};
use crate::models::{
    haldane, kane_mele, kane_mele_layered, two_level, BlochModel, HaldaneParams, KaneMeleParams,
};
use crate::tolerances::Tolerances;

/// Environment variable holding the default output directory.
pub const OUT_DIR_ENV: &str = "BLOCHFRAME_OUT";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum InputSource {
    Model(String),
    Mmn(PathBuf),
    Field(PathBuf),
}

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub model: Option<String>,
    pub lambda_nu: Option<f64>,
    pub lambda_r: Option<f64>,
    pub t_z: Option<f64>,
    pub alpha: Option<f64>,
    pub mass: Option<f64>,
    /// Per-eigenvalue windings of the diagonal toy loop.
    pub windings: Option<Vec<i64>>,
    pub mmn: Option<PathBuf>,
    pub eig: Option<PathBuf>,
    pub window: Option<(usize, usize)>,
    pub strict: bool,
    pub input: Option<PathBuf>,
    pub grid: Option<Vec<usize>>,
    pub sizes: Vec<usize>,
    pub reciprocal: Option<Vec<f64>>,
    pub method: Method,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub tol: Tolerances,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: None,
            lambda_nu: None,
            lambda_r: None,
            t_z: None,
            alpha: None,
            mass: None,
            windings: None,
            mmn: None,
            eig: None,
            window: None,
            strict: true,
            input: None,
            grid: None,
            sizes: vec![24, 48, 96, 192],
            reciprocal: None,
            method: Method::Columns,
            seed: 0,
            out: None,
            tol: Tolerances::default(),
        }
    }
}

fn list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split([',', ' '])
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.trim()
                .parse::<T>()
                .map_err(|_| Error::Config(format!("{key}: bad entry `{s}`")))
        })
        .collect()
}

impl RunConfig {
    /// Apply one setting. Keys accept `-` or `_`; `tol.<name>` sets a tolerance.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        let value = value.trim();
        let float = || {
            value
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("{key}: expected a number, got `{value}`")))
        };
        if let Some(name) = key.strip_prefix("tol.") {
            return self.tol.set(name, value).map_err(Error::Config);
        }
        match key.replace('_', "-").as_str() {
            "model" => self.model = Some(value.to_string()),
            "lambda-nu" => self.lambda_nu = Some(float()?),
            "lambda-r" => self.lambda_r = Some(float()?),
            "t-z" => self.t_z = Some(float()?),
            "alpha" => self.alpha = Some(float()?),
            "mass" => self.mass = Some(float()?),
            "windings" => self.windings = Some(list(key, value)?),
            "mmn" => self.mmn = Some(PathBuf::from(value)),
            "eig" => self.eig = Some(PathBuf::from(value)),
            "window" => {
                let w: Window = value.parse()?;
                self.window = Some((w.start, w.end));
            }
            "strict" => {
                self.strict = value.parse().map_err(|_| {
                    Error::Config(format!("strict: expected true or false, got `{value}`"))
                })?
            }
            "input" => self.input = Some(PathBuf::from(value)),
            "grid" => self.grid = Some(value.parse::<KGrid>()?.sizes().to_vec()),
            "sizes" => self.sizes = list(key, value)?,
            "reciprocal" => {
                let r: Vec<f64> = list(key, value)?;
                if ![1, 4, 9].contains(&r.len()) {
                    return Err(Error::Config(format!(
                        "reciprocal: expected d² numbers, got {}",
                        r.len()
                    )));
                }
                self.reciprocal = Some(r);
            }
            "method" => self.method = value.parse()?,
            "seed" => {
                self.seed = value.parse().map_err(|_| {
                    Error::Config(format!("seed: expected an unsigned integer, got `{value}`"))
                })?
            }
            "out" => self.out = Some(PathBuf::from(value)),
            "t-points" => {
                self.tol.t_points = value
                    .parse()
                    .map_err(|_| Error::Config(format!("t-points: `{value}`")))?
            }
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Parse `key = value` lines; `#` starts a comment.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                reason: "expected `key = value`".into(),
            })?;
            self.set(key, value).map_err(|e| Error::Parse {
                line: i + 1,
                reason: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// Exactly one of `model`, `mmn` and `input` must be set.
    pub fn source(&self) -> Result<InputSource> {
        match (&self.model, &self.mmn, &self.input) {
            (Some(m), None, None) => Ok(InputSource::Model(m.clone())),
            (None, Some(p), None) => Ok(InputSource::Mmn(p.clone())),
            (None, None, Some(p)) => Ok(InputSource::Field(p.clone())),
            (None, None, None) => Err(Error::Config(
                "no input: set `model`, `mmn` or `input`".into(),
            )),
            _ => Err(Error::Config(
                "set only one of `model`, `mmn` and `input`".into(),
            )),
        }
    }

    /// Output directory: `out`, else the environment default, else `./out`.
    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn window(&self) -> Result<Window> {
        self.window
            .map(|(start, end)| Window { start, end })
            .ok_or_else(|| {
                Error::Config("ingested overlaps need an explicit band `window` (e.g. 1-4)".into())
            })
    }

    pub fn grid(&self) -> Result<KGrid> {
        let sizes = self
            .grid
            .as_ref()
            .ok_or_else(|| Error::Config("no `grid` given".into()))?;
        KGrid::new(sizes)
    }

    /// The tight-binding model named by `model`.
    pub fn build_model(&self) -> Result<BlochModel> {
        let name = self
            .model
            .as_deref()
            .ok_or_else(|| Error::Config("no `model` given".into()))?;
        let km =
            || KaneMeleParams::new(self.lambda_nu.unwrap_or(6.0), self.lambda_r.unwrap_or(1.0));
        match name {
            "kane-mele" => kane_mele(km()),
            "kane-mele-layered" => kane_mele_layered(km(), self.t_z.unwrap_or(0.5)),
            "haldane" => {
                let mut p = HaldaneParams::default();
                if let Some(m) = self.mass {
                    p.mass = m;
                }
                haldane(p)
            }
            "two-level" => Ok(two_level(self.alpha.unwrap_or(0.6))),
            other => Err(Error::Config(format!(
                "unknown model `{other}` (kane-mele, kane-mele-layered, haldane, two-level)"
            ))),
        }
    }

    /// User-supplied reciprocal vectors (rows), if any.
    pub fn lattice(&self, dim: usize) -> Result<Option<Lattice>> {
        match &self.reciprocal {
            None => Ok(None),
            Some(r) if r.len() == dim * dim => {
                Lattice::new(r.chunks(dim).map(|c| c.to_vec()).collect()).map(Some)
            }
            Some(r) => Err(Error::Config(format!(
                "{} reciprocal components for a {dim}d grid",
                r.len()
            ))),
        }
    }
}
