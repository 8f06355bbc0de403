//! `key = value` run configuration.
//!
//! Lines are `key = value`; `#` starts a comment. Numeric values may be
//! constant expressions such as `2*pi`. Unknown or repeated keys are errors.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::expr::{eval_constant, parse_expr, Expr};
use crate::convergence::{InitialCondition, StudyConfig, StudyMode};
use crate::mesh::{Mesh, NodalFunction, Rect};
use crate::potential::Potential;
use crate::stepper::SchemeParams;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PotentialKind {
    Untruncated,
    Truncated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitialKind {
    /// `0.05 cos x cos y + 0.3` and `0.05 cos 2x cos 2y + 0.5`.
    Exp1,
    /// `phi0` and `c0` expressions.
    Expr,
    /// `phi0`, `c0` plus independent uniform nodal noise of size `perturbation`.
    Random,
}

impl InitialKind {
    fn name(self) -> &'static str {
        match self {
            InitialKind::Exp1 => "paper-exp1",
            InitialKind::Expr => "expr",
            InitialKind::Random => "random",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub nx: usize,
    pub ny: usize,
    pub tau: f64,
    pub eps: f64,
    pub stabilization: f64,
    pub mobility: f64,
    pub final_time: f64,
    pub potential: PotentialKind,
    pub truncation: f64,
    pub coercivity_k1: f64,
    pub coercivity_k2: f64,
    pub initial: InitialKind,
    pub phi0: String,
    pub c0: String,
    pub perturbation: f64,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// 0 disables snapshots.
    pub snapshot_every: usize,
    pub reference_tau: Option<f64>,
    pub reference_cells: Option<usize>,
    pub sweep_tau: Option<Vec<f64>>,
    pub sweep_cells: Option<Vec<usize>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            x0: 0.0,
            x1: 2.0 * std::f64::consts::PI,
            y0: 0.0,
            y1: 2.0 * std::f64::consts::PI,
            nx: 128,
            ny: 128,
            tau: 1e-3,
            eps: 0.3,
            stabilization: 1.0,
            mobility: 1.0,
            final_time: 0.128,
            potential: PotentialKind::Untruncated,
            truncation: 1.5,
            coercivity_k1: 0.125,
            coercivity_k2: 1.0,
            initial: InitialKind::Exp1,
            phi0: "0.05*cos(x)*cos(y) + 0.3".into(),
            c0: "0.05*cos(2*x)*cos(2*y) + 0.5".into(),
            perturbation: 0.05,
            seed: 0,
            output_dir: PathBuf::from("out"),
            snapshot_every: 0,
            reference_tau: None,
            reference_cells: None,
            sweep_tau: None,
            sweep_cells: None,
        }
    }
}

pub const KEYS: &[&str] = &[
    "x0",
    "x1",
    "y0",
    "y1",
    "nx",
    "ny",
    "tau",
    "eps",
    "stabilization",
    "mobility",
    "final_time",
    "potential",
    "truncation",
    "coercivity_k1",
    "coercivity_k2",
    "initial",
    "phi0",
    "c0",
    "perturbation",
    "seed",
    "output_dir",
    "snapshot_every",
    "reference_tau",
    "reference_cells",
    "sweep_tau",
    "sweep_cells",
];

fn number(line: usize, key: &str, value: &str) -> Result<f64> {
    let v = eval_constant(value).map_err(|e| Error::Parse {
        line,
        msg: format!("`{key}` expects a number, got `{value}` ({e})"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            msg: format!("`{key}` evaluates to {v}"),
        });
    }
    Ok(v)
}

fn integer<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("`{key}` expects a non-negative integer, got `{value}`"),
    })
}

fn list<T>(line: usize, key: &str, value: &str, item: impl Fn(usize, &str, &str) -> Result<T>) -> Result<Vec<T>> {
    let items: Vec<&str> = value.split(',').map(str::trim).collect();
    if items.iter().any(|s| s.is_empty()) {
        return Err(Error::Parse {
            line,
            msg: format!("`{key}` expects a comma-separated list, got `{value}`"),
        });
    }
    items.into_iter().map(|s| item(line, key, s)).collect()
}

/// Parse `text` on top of the defaults.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    RunConfig::default().merge(text)
}

impl RunConfig {
    /// Settings of the long-time morphology run: untruncated well, `S = 1`,
    /// `eps = 0.3`, `g = 0.01`, 128x128, `tau = 1e-3`, `T = 1`, noise of size
    /// 0.05 around `phi = 0.3`, `c = 0.5`, snapshots every 400 steps.
    pub fn morphology_preset() -> Self {
        RunConfig {
            mobility: 0.01,
            final_time: 1.0,
            initial: InitialKind::Random,
            phi0: "0.3".into(),
            c0: "0.5".into(),
            perturbation: 0.05,
            seed: 2024,
            output_dir: PathBuf::from("out/morphology"),
            snapshot_every: 400,
            ..RunConfig::default()
        }
    }

    /// A copy with the keys of `text` applied.
    pub fn merge(&self, text: &str) -> Result<RunConfig> {
        let mut cfg = self.clone();
        let mut seen: Vec<&str> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected `key = value`, got `{content}`"),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            let Some(&known) = KEYS.iter().find(|k| **k == key) else {
                return Err(Error::Parse {
                    line,
                    msg: format!("unknown key `{key}`"),
                });
            };
            if seen.contains(&known) {
                return Err(Error::Parse {
                    line,
                    msg: format!("duplicate key `{key}`"),
                });
            }
            seen.push(known);
            if value.is_empty() {
                return Err(Error::Parse {
                    line,
                    msg: format!("missing value for `{key}`"),
                });
            }
            cfg.set(line, known, value)?;
        }
        Ok(cfg)
    }

    fn set(&mut self, line: usize, key: &str, value: &str) -> Result<()> {
        let num = || number(line, key, value);
        match key {
            "x0" => self.x0 = num()?,
            "x1" => self.x1 = num()?,
            "y0" => self.y0 = num()?,
            "y1" => self.y1 = num()?,
            "nx" => self.nx = integer(line, key, value)?,
            "ny" => self.ny = integer(line, key, value)?,
            "tau" => self.tau = num()?,
            "eps" => self.eps = num()?,
            "stabilization" => self.stabilization = num()?,
            "mobility" => self.mobility = num()?,
            "final_time" => self.final_time = num()?,
            "truncation" => self.truncation = num()?,
            "coercivity_k1" => self.coercivity_k1 = num()?,
            "coercivity_k2" => self.coercivity_k2 = num()?,
            "perturbation" => self.perturbation = num()?,
            "seed" => self.seed = integer(line, key, value)?,
            "snapshot_every" => self.snapshot_every = integer(line, key, value)?,
            "potential" => {
                self.potential = match value {
                    "untruncated" => PotentialKind::Untruncated,
                    "truncated" => PotentialKind::Truncated,
                    _ => {
                        return Err(Error::Parse {
                            line,
                            msg: format!("`potential` is `untruncated` or `truncated`, got `{value}`"),
                        })
                    }
                }
            }
            "initial" => {
                self.initial = match value {
                    "paper-exp1" => InitialKind::Exp1,
                    "expr" => InitialKind::Expr,
                    "random" => InitialKind::Random,
                    _ => {
                        return Err(Error::Parse {
                            line,
                            msg: format!("`initial` is `paper-exp1`, `expr` or `random`, got `{value}`"),
                        })
                    }
                }
            }
            "phi0" | "c0" => {
                parse_expr(value).map_err(|e| Error::Parse {
                    line,
                    msg: format!("`{key}`: {e}"),
                })?;
                if key == "phi0" {
                    self.phi0 = value.to_string();
                } else {
                    self.c0 = value.to_string();
                }
            }
            "output_dir" => self.output_dir = PathBuf::from(value),
            "reference_tau" => self.reference_tau = Some(num()?),
            "reference_cells" => self.reference_cells = Some(integer(line, key, value)?),
            "sweep_tau" => self.sweep_tau = Some(list(line, key, value, number)?),
            "sweep_cells" => self.sweep_cells = Some(list(line, key, value, integer)?),
            _ => unreachable!("key list and setter disagree on `{key}`"),
        }
        Ok(())
    }

    /// Every key with its value; floats in shortest round-trip form.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("x0", format!("{:?}", self.x0));
        kv("x1", format!("{:?}", self.x1));
        kv("y0", format!("{:?}", self.y0));
        kv("y1", format!("{:?}", self.y1));
        kv("nx", self.nx.to_string());
        kv("ny", self.ny.to_string());
        kv("tau", format!("{:?}", self.tau));
        kv("eps", format!("{:?}", self.eps));
        kv("stabilization", format!("{:?}", self.stabilization));
        kv("mobility", format!("{:?}", self.mobility));
        kv("final_time", format!("{:?}", self.final_time));
        kv(
            "potential",
            match self.potential {
                PotentialKind::Untruncated => "untruncated",
                PotentialKind::Truncated => "truncated",
            }
            .into(),
        );
        kv("truncation", format!("{:?}", self.truncation));
        kv("coercivity_k1", format!("{:?}", self.coercivity_k1));
        kv("coercivity_k2", format!("{:?}", self.coercivity_k2));
        kv("initial", self.initial.name().into());
        kv("phi0", self.phi0.clone());
        kv("c0", self.c0.clone());
        kv("perturbation", format!("{:?}", self.perturbation));
        kv("seed", self.seed.to_string());
        kv("output_dir", self.output_dir.display().to_string());
        kv("snapshot_every", self.snapshot_every.to_string());
        if let Some(v) = self.reference_tau {
            kv("reference_tau", format!("{v:?}"));
        }
        if let Some(v) = self.reference_cells {
            kv("reference_cells", v.to_string());
        }
        if let Some(v) = &self.sweep_tau {
            kv("sweep_tau", v.iter().map(|t| format!("{t:?}")).collect::<Vec<_>>().join(", "));
        }
        if let Some(v) = &self.sweep_cells {
            kv("sweep_cells", v.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(", "));
        }
        s
    }

    pub fn rect(&self) -> Result<Rect> {
        Rect::new(self.x0, self.x1, self.y0, self.y1)
    }

    pub fn potential(&self) -> Result<Potential> {
        match self.potential {
            PotentialKind::Untruncated => Ok(Potential::Untruncated),
            PotentialKind::Truncated => Potential::truncated(self.truncation),
        }
    }

    pub fn mesh(&self) -> Result<Arc<Mesh>> {
        let r = self.rect()?;
        Mesh::rectangle(r.x0, r.x1, r.y0, r.y1, self.nx, self.ny)
    }

    /// Cheap checks that need no mesh; run before anything is allocated.
    pub fn validate(&self) -> Result<()> {
        self.rect()?;
        self.potential()?;
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::Argument(format!("mesh needs at least one cell per side, got {}x{}", self.nx, self.ny)));
        }
        for (name, v) in [("tau", self.tau), ("eps", self.eps)] {
            if !(v > 0.0) {
                return Err(Error::Argument(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("stabilization", self.stabilization), ("mobility", self.mobility), ("perturbation", self.perturbation)] {
            if !(v >= 0.0) {
                return Err(Error::Argument(format!("{name} must be >= 0, got {v}")));
            }
        }
        crate::stepper::step_count(self.final_time, self.tau)?;
        self.expressions()?;
        Ok(())
    }

    pub fn scheme_params(&self) -> Result<SchemeParams> {
        self.validate()?;
        Ok(SchemeParams::new(self.mesh()?, self.tau, self.eps, self.stabilization, self.final_time)
            .with_potential(self.potential()?)
            .with_mobility(self.mobility)
            .with_coercivity(self.coercivity_k1, self.coercivity_k2))
    }

    fn expressions(&self) -> Result<(Expr, Expr)> {
        let p = |src: &str| parse_expr(src).map_err(|e| Error::Argument(format!("initial condition `{src}`: {e}")));
        Ok((p(&self.phi0)?, p(&self.c0)?))
    }

    /// Smooth initial condition; `None` for random data, which depends on the mesh.
    pub fn initial_condition(&self) -> Result<Option<InitialCondition>> {
        Ok(match self.initial {
            InitialKind::Exp1 => Some(InitialCondition::Exp1),
            InitialKind::Expr => {
                let (fp, fc) = self.expressions()?;
                Some(InitialCondition::Custom(Arc::new(move |x, y| (fp.eval(x, y), fc.eval(x, y)))))
            }
            InitialKind::Random => None,
        })
    }

    /// Nodal initial fields on `mesh`.
    pub fn initial_fields(&self, mesh: &Arc<Mesh>) -> Result<(NodalFunction, NodalFunction)> {
        if let Some(ic) = self.initial_condition()? {
            return ic.fields(mesh);
        }
        let (fp, fc) = self.expressions()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let a = self.perturbation;
        let mut phi = Vec::with_capacity(mesh.node_count());
        let mut c = Vec::with_capacity(mesh.node_count());
        for p in mesh.nodes() {
            phi.push(fp.eval(p[0], p[1]) + a * rng.gen_range(-1.0..=1.0));
            c.push(fc.eval(p[0], p[1]) + a * rng.gen_range(-1.0..=1.0));
        }
        Ok((NodalFunction::new(mesh.clone(), phi)?, NodalFunction::new(mesh.clone(), c)?))
    }

    /// Study settings: the default sweep for `mode` with this file's physics,
    /// domain, initial data and any study keys applied.
    pub fn study_config(&self, mode: StudyMode) -> Result<StudyConfig> {
        let mut cfg = match mode {
            StudyMode::Temporal => StudyConfig::temporal_default(),
            StudyMode::Spatial => StudyConfig::spatial_default(),
        };
        cfg.domain = self.rect()?;
        cfg.eps = self.eps;
        cfg.stabilization = self.stabilization;
        cfg.mobility = self.mobility;
        cfg.potential = self.potential()?;
        cfg.final_time = self.final_time;
        cfg.initial = self.initial_condition()?.ok_or_else(|| Error::Unsupported {
            what: "random initial data in a refinement study",
            why: "nodal noise is not a function of position, so meshes would not see the same data".into(),
        })?;
        if let Some(t) = self.reference_tau {
            cfg.reference_tau = t;
        }
        if let Some(n) = self.reference_cells {
            cfg.reference_cells = n;
        }
        if let Some(t) = &self.sweep_tau {
            cfg.taus = t.clone();
        }
        if let Some(n) = &self.sweep_cells {
            cfg.cells = n.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
