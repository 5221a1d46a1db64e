//! Line-oriented `key = value` configuration.
//!
//! Keys are `section.name`; a `[section]` header lets following lines omit
//! the prefix. `#` starts a comment. Unknown and repeated keys are errors,
//! numbers use the decimal point only, and `time.dt` and `time.t_end` are
//! required.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::coupled::{InitialCondition, Orientation, PhaseInit, RunConfig, SolverSettings, VelocityInit};
use crate::grid::Grid;
use crate::momentum::ModelParams;
use crate::potential::PotentialKind;
use crate::{Error, Result};

/// Every accepted key.
pub const KEYS: &[&str] = &[
    "domain.Lx",
    "domain.Ly",
    "grid.nx",
    "grid.ny",
    "params.rho1",
    "params.rho2",
    "params.nu1",
    "params.nu2",
    "params.theta",
    "params.theta0",
    "potential.kind",
    "time.dt",
    "time.t_end",
    "output.every",
    "output.dir",
    "init.kind",
    "init.mean",
    "init.amplitude",
    "init.modes",
    "init.seed",
    "init.width",
    "init.orientation",
    "init.center_x",
    "init.center_y",
    "init.radius",
    "init.velocity",
    "init.u_magnitude",
    "solver.newton_tol",
    "solver.newton_max",
    "solver.linear_tol",
    "solver.alpha",
    "solver.strict_energy",
    "solver.energy_tol",
    "solver.freeze_velocity",
    "stationary.tol",
    "stationary.snapshot",
    "obstacle.k_list",
    "weakstrong.epsilon",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
    pub rho1: f64,
    pub rho2: f64,
    pub nu1: f64,
    pub nu2: f64,
    pub theta: f64,
    pub theta0: f64,
    pub obstacle: bool,
    pub dt: f64,
    pub t_end: f64,
    pub output_every: usize,
    pub output_dir: PathBuf,
    pub init: InitialCondition,
    pub seed: u64,
    pub solver: SolverSettings,
    pub strict_energy: bool,
    pub energy_tol: f64,
    pub freeze_velocity: bool,
    pub stationary_tol: f64,
    pub stationary_snapshot: Option<PathBuf>,
    pub k_list: Vec<u32>,
    pub weakstrong_epsilon: f64,
}

struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.map.remove(key)
    }

    fn f64(&mut self, key: &str, default: Option<f64>) -> Result<f64> {
        match self.take(key) {
            Some((line, v)) => {
                let x: f64 = v
                    .parse()
                    .map_err(|_| Error::Config(format!("line {line}: {key} = {v:?} is not a number")))?;
                if !x.is_finite() {
                    return Err(Error::Config(format!("line {line}: {key} must be finite")));
                }
                Ok(x)
            }
            None => default.ok_or_else(|| Error::Config(format!("missing required key {key}"))),
        }
    }

    fn positive(&mut self, key: &str, default: Option<f64>) -> Result<f64> {
        let x = self.f64(key, default)?;
        if x > 0.0 {
            Ok(x)
        } else {
            Err(Error::Config(format!("{key} must be positive, got {x}")))
        }
    }

    fn uint(&mut self, key: &str, default: u64) -> Result<u64> {
        match self.take(key) {
            Some((line, v)) => v
                .parse()
                .map_err(|_| Error::Config(format!("line {line}: {key} = {v:?} is not a non-negative integer"))),
            None => Ok(default),
        }
    }

    fn bool(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.take(key) {
            Some((line, v)) => match v.as_str() {
                "true" => Ok(true),
                "false" => Ok(false),
                _ => Err(Error::Config(format!("line {line}: {key} must be true or false, got {v:?}"))),
            },
            None => Ok(default),
        }
    }

    fn word(&mut self, key: &str, default: &str, allowed: &[&str]) -> Result<String> {
        let (line, v) = self.take(key).unwrap_or((0, default.to_string()));
        if allowed.contains(&v.as_str()) {
            Ok(v)
        } else {
            Err(Error::Config(format!(
                "line {line}: {key} = {v:?}, expected one of {}",
                allowed.join(", ")
            )))
        }
    }
}

fn entries(text: &str) -> Result<Entries> {
    let mut map = BTreeMap::new();
    let mut section: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let s = raw.split('#').next().unwrap_or("").trim();
        if s.is_empty() {
            continue;
        }
        if let Some(rest) = s.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| Error::Config(format!("line {line}: malformed section header {s:?}")))?
                .trim();
            section = Some(name.to_string());
            continue;
        }
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {line}: expected key = value, got {s:?}")))?;
        let (k, v) = (k.trim(), v.trim());
        let key = match (&section, k.contains('.')) {
            (_, true) => k.to_string(),
            (Some(sec), false) => format!("{sec}.{k}"),
            (None, false) => return Err(Error::Config(format!("line {line}: key {k:?} has no section"))),
        };
        if !KEYS.contains(&key.as_str()) {
            return Err(Error::Config(format!("line {line}: unknown key {key}")));
        }
        if map.insert(key.clone(), (line, v.to_string())).is_some() {
            return Err(Error::Config(format!("line {line}: repeated key {key}")));
        }
    }
    Ok(Entries { map })
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut e = entries(text)?;
        let lx = e.positive("domain.Lx", Some(6.4))?;
        let ly = e.positive("domain.Ly", Some(6.4))?;
        let nx = e.uint("grid.nx", 64)? as usize;
        let ny = e.uint("grid.ny", 64)? as usize;
        let rho1 = e.positive("params.rho1", Some(3.0))?;
        let rho2 = e.positive("params.rho2", Some(1.0))?;
        let nu1 = e.positive("params.nu1", Some(0.1))?;
        let nu2 = e.positive("params.nu2", Some(0.1))?;
        let theta = e.positive("params.theta", Some(1.0))?;
        let theta0 = e.positive("params.theta0", Some(2.0))?;
        let obstacle = e.word("potential.kind", "flory_huggins", &["flory_huggins", "double_obstacle"])?
            == "double_obstacle";
        let dt = e.positive("time.dt", None)?;
        let t_end = e.positive("time.t_end", None)?;
        let output_every = e.uint("output.every", 100)? as usize;
        if output_every == 0 {
            return Err(Error::Config("output.every must be at least 1".into()));
        }
        let output_dir = PathBuf::from(e.take("output.dir").map_or("output".to_string(), |(_, v)| v));

        let kind = e.word("init.kind", "spinodal", &["constant", "spinodal", "tanh", "bubble"])?;
        let mean = e.f64("init.mean", Some(0.0))?;
        let amplitude = e.f64("init.amplitude", Some(0.05))?;
        let modes = e.uint("init.modes", 0)? as usize;
        let seed = e.uint("init.seed", 0)?;
        let width = e.positive("init.width", Some(1.0))?;
        let orientation = e.word("init.orientation", "x", &["x", "y"])?;
        let cx = e.f64("init.center_x", Some(0.5 * lx))?;
        let cy = e.f64("init.center_y", Some(0.5 * ly))?;
        let radius = e.positive("init.radius", Some(0.25 * lx.min(ly)))?;
        let phase = match kind.as_str() {
            "constant" => PhaseInit::Constant { m: mean },
            "spinodal" => PhaseInit::SeededPerturbation { mean, amplitude, modes },
            "tanh" => PhaseInit::TanhInterface {
                orientation: if orientation == "x" { Orientation::X } else { Orientation::Y },
                width,
            },
            _ => PhaseInit::Bubble {
                center: (cx, cy),
                radius,
                width,
            },
        };
        let velocity = match e.word("init.velocity", "zero", &["zero", "shear"])?.as_str() {
            "zero" => VelocityInit::Zero,
            _ => VelocityInit::ShearLayer {
                magnitude: e.f64("init.u_magnitude", Some(0.1))?,
            },
        };
        if let Some((line, _)) = e.take("init.u_magnitude") {
            return Err(Error::Config(format!("line {line}: init.u_magnitude needs init.velocity = shear")));
        }

        let mut solver = SolverSettings::default();
        solver.newton_tol = e.positive("solver.newton_tol", Some(solver.newton_tol))?;
        solver.newton_max = e.uint("solver.newton_max", solver.newton_max as u64)? as usize;
        solver.linear_tol = e.positive("solver.linear_tol", Some(solver.linear_tol))?;
        solver.alpha = e.f64("solver.alpha", Some(solver.alpha))?;
        if solver.alpha < 0.0 {
            return Err(Error::Config("solver.alpha must be non-negative".into()));
        }
        let strict_energy = e.bool("solver.strict_energy", false)?;
        let energy_tol = e.positive("solver.energy_tol", Some(1e-8))?;
        let freeze_velocity = e.bool("solver.freeze_velocity", false)?;
        let stationary_tol = e.positive("stationary.tol", Some(1e-10))?;
        let stationary_snapshot = e.take("stationary.snapshot").map(|(_, v)| PathBuf::from(v));
        let k_list = match e.take("obstacle.k_list") {
            Some((line, v)) => v
                .split(',')
                .map(|s| s.trim().parse::<u32>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::Config(format!("line {line}: obstacle.k_list must be comma-separated integers")))?,
            None => vec![4, 16, 64, 256],
        };
        let weakstrong_epsilon = e.positive("weakstrong.epsilon", Some(1e-2))?;
        debug_assert!(e.map.is_empty(), "unconsumed keys {:?}", e.map.keys());

        let cfg = Self {
            lx,
            ly,
            nx,
            ny,
            rho1,
            rho2,
            nu1,
            nu2,
            theta,
            theta0,
            obstacle,
            dt,
            t_end,
            output_every,
            output_dir,
            init: InitialCondition { phase, velocity },
            seed,
            solver,
            strict_energy,
            energy_tol,
            freeze_velocity,
            stationary_tol,
            stationary_snapshot,
            k_list,
            weakstrong_epsilon,
        };
        cfg.grid()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.nx, self.ny, self.lx, self.ly).map_err(|e| Error::Config(format!("grid: {e}")))
    }

    pub fn potential(&self) -> PotentialKind {
        if self.obstacle {
            PotentialKind::DoubleObstacle { theta0: self.theta0 }
        } else {
            PotentialKind::FloryHuggins {
                theta: self.theta,
                theta0: self.theta0,
            }
        }
    }

    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::new(self.rho1, self.rho2, self.nu1, self.nu2, self.potential())
            .map_err(|e| Error::Config(format!("params: {e}")))
    }

    pub fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::new(self.grid()?, self.dt, self.t_end, self.init);
        cfg.output_every = self.output_every;
        cfg.seed = self.seed;
        cfg.solver = self.solver;
        cfg.strict_energy = self.strict_energy;
        cfg.energy_tol = self.energy_tol;
        cfg.freeze_velocity = self.freeze_velocity;
        Ok(cfg)
    }

    /// `output.dir`, unless `NSCH_OUTPUT_DIR` is set.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os("NSCH_OUTPUT_DIR") {
            Some(d) if !d.is_empty() => PathBuf::from(d),
            _ => self.output_dir.clone(),
        }
    }
}
