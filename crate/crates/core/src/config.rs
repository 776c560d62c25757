//! Run configuration in TOML.
//!
//! Unknown keys are rejected. The coupling accepts a number or `"inf"`.

use std::path::PathBuf;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::params::{Coupling, ModelParams};
use crate::potential::{double_well, penalised_double_well, Potentials};
use crate::stepper::SolverOptions;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mesh: MeshConfig,
    pub model: ModelConfig,
    pub potential: PotentialConfig,
    pub initial: InitialConfig,
    #[serde(default = "default_output")]
    pub output: OutputConfig,
    #[serde(default = "default_solver")]
    pub solver: SolverConfig,
    #[serde(default = "default_study")]
    pub study: StudyConfig,
}

fn default_output() -> OutputConfig {
    RunConfig::default().output
}

fn default_solver() -> SolverConfig {
    RunConfig::default().solver
}

fn default_study() -> StudyConfig {
    RunConfig::default().study
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    /// Subdivisions per side of the unit square.
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub kappa: f64,
    pub m_bulk: f64,
    pub m_surf: f64,
    pub beta: f64,
    #[serde(serialize_with = "ser_coupling", deserialize_with = "de_coupling")]
    pub coupling: Coupling<f64>,
    pub tau: f64,
    pub t_final: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    DoubleWell,
    Penalised,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    pub kind: PotentialKind,
    /// Penalty scale `δ′`, used by `penalised`.
    pub delta_prime: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisConvention {
    /// Elongations are semi-axes.
    Semi,
    /// Elongations are full axis lengths.
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    Droplet {
        center: [f64; 2],
        a: f64,
        b: f64,
        /// Interface width; `√2 ε` when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        width: Option<f64>,
        axes: AxisConvention,
    },
    Constant {
        value: f64,
    },
    /// Restart file written by an earlier run.
    File {
        path: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Sampling interval in steps for trajectory norms.
    pub sample_every: usize,
    /// VTK snapshot interval in steps; 0 writes only the final state.
    pub vtk_every: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
    pub equivalence_tol: f64,
    pub retry_halved_tau: bool,
    pub max_retries: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyMode {
    Single,
    SweepToZero,
    SweepToInfinity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub mode: StudyMode,
    /// Sweep abscissae: `L` toward zero, `1/L` toward infinity.
    pub values: Vec<f64>,
    /// Worker threads for sweep members.
    pub threads: usize,
}

fn ser_coupling<S: Serializer>(c: &Coupling<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match c {
        Coupling::Infinite => s.serialize_str("inf"),
        Coupling::Finite(v) => s.serialize_f64(*v),
    }
}

fn de_coupling<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Coupling<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Int(i64),
        Text(String),
    }
    let bad = |what: String| serde::de::Error::custom(format!("coupling must be a nonnegative number or \"inf\", got {what}"));
    let v = match Raw::deserialize(d)? {
        Raw::Num(v) => v,
        Raw::Int(v) => v as f64,
        Raw::Text(t) if t.eq_ignore_ascii_case("inf") => return Ok(Coupling::Infinite),
        Raw::Text(t) => return Err(bad(format!("{t:?}"))),
    };
    if v.is_nan() || v < 0.0 {
        return Err(bad(v.to_string()));
    }
    Ok(Coupling::from_f64(v))
}

impl Default for RunConfig {
    /// Desk-scale droplet run.
    fn default() -> Self {
        let p = ModelParams::<f64>::desk();
        let s = SolverOptions::<f64>::default();
        Self {
            mesh: MeshConfig { n: 32 },
            model: ModelConfig {
                epsilon: p.epsilon,
                delta: p.delta,
                kappa: p.kappa,
                m_bulk: p.m_bulk,
                m_surf: p.m_surf,
                beta: p.beta,
                coupling: p.coupling,
                tau: p.tau,
                t_final: p.t_final,
            },
            potential: PotentialConfig {
                kind: PotentialKind::Penalised,
                delta_prime: 1.0 / 250.0,
            },
            initial: InitialConfig::Droplet {
                center: [0.1, 0.5],
                a: 0.6814,
                b: 0.367,
                width: None,
                axes: AxisConvention::Semi,
            },
            output: OutputConfig {
                dir: PathBuf::from("out"),
                sample_every: 17,
                vtk_every: 0,
            },
            solver: SolverConfig {
                tol_abs: s.tol_abs,
                tol_rel: s.tol_rel,
                max_iterations: s.max_iterations,
                max_halvings: s.max_halvings,
                equivalence_tol: s.equivalence_tol,
                retry_halved_tau: s.retry_halved_tau,
                max_retries: s.max_retries,
            },
            study: StudyConfig {
                mode: StudyMode::Single,
                values: vec![1e-4, 2e-4, 4e-4, 8e-4, 1.6e-3],
                threads: 1,
            },
        }
    }
}

impl RunConfig {
    /// Parses and validates.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parses `text`, applies `key.path=value` overrides, then validates.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut tree: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut tree, o)?;
        }
        let cfg: RunConfig = tree.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The default configuration with overrides applied.
    pub fn default_with_overrides(overrides: &[String]) -> Result<Self> {
        Self::from_toml_with_overrides(&Self::default().to_toml()?, overrides)
    }

    pub fn params(&self) -> ModelParams<f64> {
        let m = &self.model;
        ModelParams {
            epsilon: m.epsilon,
            delta: m.delta,
            kappa: m.kappa,
            m_bulk: m.m_bulk,
            m_surf: m.m_surf,
            beta: m.beta,
            coupling: m.coupling,
            tau: m.tau,
            t_final: m.t_final,
        }
    }

    pub fn potentials(&self) -> Result<Potentials<f64>> {
        Ok(match self.potential.kind {
            PotentialKind::DoubleWell => Potentials::same(double_well()),
            PotentialKind::Penalised => Potentials::same(penalised_double_well(self.potential.delta_prime)?),
        })
    }

    pub fn solver_options(&self) -> SolverOptions<f64> {
        let s = &self.solver;
        SolverOptions {
            tol_abs: s.tol_abs,
            tol_rel: s.tol_rel,
            max_iterations: s.max_iterations,
            max_halvings: s.max_halvings,
            equivalence_tol: s.equivalence_tol,
            retry_halved_tau: s.retry_halved_tau,
            max_retries: s.max_retries,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.mesh.n == 0 {
            return bad("mesh.n must be at least 1".into());
        }
        self.params().validate().map_err(|e| Error::Config(e.to_string()))?;
        self.potentials().map_err(|e| Error::Config(e.to_string()))?;
        if let InitialConfig::Droplet { a, b, width, .. } = &self.initial {
            let pos = |v: f64| v.is_finite() && v > 0.0;
            if !pos(*a) || !pos(*b) || width.is_some_and(|w| !pos(w)) {
                return bad("droplet elongations and width must be positive".into());
            }
        }
        if self.output.sample_every == 0 {
            return bad("output.sample_every must be at least 1".into());
        }
        let s = &self.solver;
        if !(s.tol_abs >= 0.0 && s.tol_rel >= 0.0 && s.equivalence_tol > 0.0) || s.max_iterations == 0 {
            return bad("solver tolerances must be nonnegative and max_iterations positive".into());
        }
        if self.study.mode != StudyMode::Single {
            let v = &self.study.values;
            let monotone = v.windows(2).all(|w| w[1] > w[0]) || v.windows(2).all(|w| w[1] < w[0]);
            if v.len() < 2 || !monotone || v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return bad("study.values must hold at least two positive, strictly monotone values".into());
            }
        }
        if self.study.threads == 0 {
            return bad("study.threads must be at least 1".into());
        }
        Ok(())
    }
}

/// `section.key=value`; the value is read as a TOML literal, falling back to
/// a bare string.
fn apply_override(tree: &mut toml::Table, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {spec:?} is not of the form key=value")))?;
    let value = match format!("v = {}", raw.trim()).parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let keys: Vec<&str> = path.trim().split('.').collect();
    let (last, parents) = keys.split_last().expect("split yields at least one item");
    let mut node = tree;
    for k in parents {
        node = node
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override path {path:?}: {k} is not a section")))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}
