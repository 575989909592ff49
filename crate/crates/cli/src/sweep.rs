//! Gain sweep: evaluate many saturated gain sets concurrently, certify each
//! against the actuator limits and rank the admissible ones by settled error.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use phtrack::controller::{saturation_budget, BudgetSampling, ConfigurationBox, Gains, SaturationBudget};
use phtrack::Vector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{GainSpec, RunConfig};
use crate::run::{execute, RunReport};
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub base: BaseSpec,
    pub search: SearchSpec,
    /// Maximum number of candidates evaluated.
    pub budget: usize,
    #[serde(default)]
    pub certification: CertificationSpec,
    /// Worker threads; all available cores when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default = "default_leaderboard")]
    pub leaderboard: PathBuf,
}

fn default_leaderboard() -> PathBuf {
    "leaderboard.csv".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BaseSpec {
    /// A bundled run preset.
    Preset(String),
    /// A run config given inline.
    Config(Box<RunConfig>),
}

/// Candidate values per gain; a gain left out keeps the base value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(deserialize = "T: Deserialize<'de>"))]
pub struct Axes<T> {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kc_diag: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rc_diag: Option<T>,
}

impl<T> Default for Axes<T> {
    fn default() -> Self {
        Self {
            alpha: None,
            beta: None,
            kc_diag: None,
            rc_diag: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SearchSpec {
    /// Cartesian product of per-gain value lists.
    Grid(Axes<Vec<Vec<f64>>>),
    /// Independent uniform draws per axis inside the ranges.
    Random(Axes<Range>),
}

/// Sampling used for the certified input bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertificationSpec {
    pub time_samples: usize,
    pub grid_points: usize,
    /// Box for the gravity supremum; `[-π, π]` per axis when omitted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<f64>>,
}

impl Default for CertificationSpec {
    fn default() -> Self {
        Self {
            time_samples: 4000,
            grid_points: 41,
            lower: None,
            upper: None,
        }
    }
}

/// Per-gain vectors of one candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct GainVectors {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub kc_diag: Vec<f64>,
    pub rc_diag: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Entry {
    pub gains: GainVectors,
    pub config_hash: String,
    pub budget: SaturationBudget,
    pub outcome: Result<RunReport, String>,
}

impl Entry {
    /// Admissible: certified bound within limits and the run completed.
    pub fn feasible(&self) -> bool {
        self.budget.within_limits() && self.outcome.is_ok()
    }

    fn settled_error(&self) -> f64 {
        self.outcome
            .as_ref()
            .map_or(f64::INFINITY, |r| r.metrics.settled_error)
    }
}

#[derive(Debug, Clone)]
pub struct Leaderboard {
    pub entries: Vec<Entry>,
    /// Limits used for certification, for the diagnosis.
    pub limit_max: Vector,
}

impl Leaderboard {
    pub fn feasible_count(&self) -> usize {
        self.entries.iter().filter(|e| e.feasible()).count()
    }

    /// Why no candidate was admissible: for each axis, how many candidates it
    /// rejected and the smallest bound seen against the limit.
    pub fn diagnosis(&self) -> String {
        let n = self.limit_max.len();
        let mut out = String::from("no feasible candidate\n");
        for i in 0..n {
            let rejected = self.entries.iter().filter(|e| e.budget.exceeds[i]).count();
            if rejected == 0 {
                continue;
            }
            let best = self
                .entries
                .iter()
                .map(|e| e.budget.bound[i])
                .fold(f64::INFINITY, f64::min);
            let e0 = &self.entries[0].budget;
            writeln!(
                out,
                "  axis {}: bound exceeds the limit {} for {rejected}/{} candidates (smallest bound {best:.4}; \
                 feedforward {:.4} + gravity {:.4} + alpha)",
                i + 1,
                self.limit_max[i],
                self.entries.len(),
                e0.feedforward_sup[i],
                e0.gravity_sup[i],
            )
            .expect("writing to a String cannot fail");
        }
        let failed = self.entries.iter().filter(|e| e.outcome.is_err()).count();
        if failed > 0 {
            writeln!(out, "  {failed} candidate runs did not complete").expect("writing to a String cannot fail");
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let n = self.limit_max.len();
        let mut cols = vec!["rank".to_string(), "feasible".into(), "config_hash".into()];
        for name in ["alpha", "beta", "kc", "rc"] {
            cols.extend((1..=n).map(|i| format!("{name}{i}")));
        }
        cols.push("settled_error".into());
        cols.extend((1..=n).map(|i| format!("peak_control{i}")));
        cols.extend((1..=n).map(|i| format!("bound{i}")));
        cols.push("lyap_violations".into());
        cols.push("binding_axis".into());
        cols.push("error".into());
        let mut out = cols.join(",");
        out.push('\n');
        for (rank, e) in self.entries.iter().enumerate() {
            let mut row: Vec<String> = vec![
                (rank + 1).to_string(),
                e.feasible().to_string(),
                e.config_hash.clone(),
            ];
            for v in [&e.gains.alpha, &e.gains.beta, &e.gains.kc_diag, &e.gains.rc_diag] {
                row.extend(v.iter().map(|x| format!("{x:e}")));
            }
            match &e.outcome {
                Ok(r) => {
                    row.push(format!("{:e}", r.metrics.settled_error));
                    row.extend(r.metrics.peak_control.iter().map(|x| format!("{x:e}")));
                }
                Err(_) => {
                    row.push(String::new());
                    row.extend((0..n).map(|_| String::new()));
                }
            }
            row.extend(e.budget.bound.iter().map(|x| format!("{x:e}")));
            row.push(
                e.outcome
                    .as_ref()
                    .map_or(String::new(), |r| r.metrics.lyap_violations.to_string()),
            );
            row.push(e.budget.binding_axis().map_or(String::new(), |a| (a + 1).to_string()));
            row.push(e.outcome.as_ref().err().map_or(String::new(), |m| m.replace([',', '\n'], ";")));
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

impl SweepSpec {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn base_config(&self) -> Result<RunConfig, CliError> {
        match &self.base {
            BaseSpec::Preset(name) => crate::config::preset(name),
            BaseSpec::Config(cfg) => Ok((**cfg).clone()),
        }
    }

    /// Candidate gain vectors, in a fixed order determined by the spec and seed.
    pub fn candidates(&self, base: &GainVectors, seed: u64) -> Result<Vec<GainVectors>, CliError> {
        if self.budget == 0 {
            return Err(CliError::Config("budget: must be at least 1".into()));
        }
        let n = base.alpha.len();
        let check_len = |field: &str, v: &[f64]| {
            if v.len() == n {
                Ok(())
            } else {
                Err(CliError::Config(format!(
                    "search.{field}: expected {n} entries, got {}",
                    v.len()
                )))
            }
        };
        match &self.search {
            SearchSpec::Grid(axes) => {
                let mut lists: Vec<(&str, Vec<Vec<f64>>)> = Vec::new();
                for (name, values, default) in [
                    ("alpha", &axes.alpha, &base.alpha),
                    ("beta", &axes.beta, &base.beta),
                    ("kc_diag", &axes.kc_diag, &base.kc_diag),
                    ("rc_diag", &axes.rc_diag, &base.rc_diag),
                ] {
                    let list = match values {
                        Some(v) if v.is_empty() => {
                            return Err(CliError::Config(format!("search.grid.{name}: empty list")))
                        }
                        Some(v) => v.clone(),
                        None => vec![default.clone()],
                    };
                    for v in &list {
                        check_len(&format!("grid.{name}"), v)?;
                    }
                    lists.push((name, list));
                }
                let total: usize = lists.iter().map(|(_, l)| l.len()).product();
                let mut out = Vec::with_capacity(total.min(self.budget));
                for idx in 0..total.min(self.budget) {
                    let mut rem = idx;
                    let mut pick = |k: usize| {
                        let l = &lists[k].1;
                        let v = l[rem % l.len()].clone();
                        rem /= l.len();
                        v
                    };
                    let (alpha, beta, kc_diag, rc_diag) = (pick(0), pick(1), pick(2), pick(3));
                    out.push(GainVectors {
                        alpha,
                        beta,
                        kc_diag,
                        rc_diag,
                    });
                }
                Ok(out)
            }
            SearchSpec::Random(axes) => {
                for (name, r) in [
                    ("alpha", &axes.alpha),
                    ("beta", &axes.beta),
                    ("kc_diag", &axes.kc_diag),
                    ("rc_diag", &axes.rc_diag),
                ] {
                    if let Some(r) = r {
                        check_len(&format!("random.{name}.min"), &r.min)?;
                        check_len(&format!("random.{name}.max"), &r.max)?;
                        if r.min.iter().zip(&r.max).any(|(a, b)| !(a <= b) || !a.is_finite() || !b.is_finite()) {
                            return Err(CliError::Config(format!(
                                "search.random.{name}: need finite min ≤ max per axis"
                            )));
                        }
                    }
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut draw = |r: &Option<Range>, default: &Vec<f64>| match r {
                    None => default.clone(),
                    Some(r) => r
                        .min
                        .iter()
                        .zip(&r.max)
                        .map(|(a, b)| if a == b { *a } else { rng.random_range(*a..*b) })
                        .collect(),
                };
                Ok((0..self.budget)
                    .map(|_| GainVectors {
                        alpha: draw(&axes.alpha, &base.alpha),
                        beta: draw(&axes.beta, &base.beta),
                        kc_diag: draw(&axes.kc_diag, &base.kc_diag),
                        rc_diag: draw(&axes.rc_diag, &base.rc_diag),
                    })
                    .collect())
            }
        }
    }
}

fn base_vectors(gains: &Gains) -> Result<GainVectors, CliError> {
    match gains {
        Gains::Saturated(g) => Ok(GainVectors {
            alpha: g.alpha().iter().copied().collect(),
            beta: g.beta().iter().copied().collect(),
            kc_diag: g.kc().diagonal().iter().copied().collect(),
            rc_diag: g.rc().diagonal().iter().copied().collect(),
        }),
        Gains::Unsaturated(_) => Err(CliError::Config(
            "base: the sweep tunes saturated gains; the base config uses unsaturated ones".into(),
        )),
    }
}

fn evaluate(base: &RunConfig, candidate: &GainVectors, spec: &CertificationSpec) -> Result<Entry, CliError> {
    let mut cfg = base.clone();
    cfg.gains = GainSpec::Saturated {
        alpha: candidate.alpha.clone(),
        beta: candidate.beta.clone(),
        kc: crate::config::MatrixSpec::Diag(candidate.kc_diag.clone()),
        rc: crate::config::MatrixSpec::Diag(candidate.rc_diag.clone()),
    };
    let prepared = cfg.prepare()?;
    let g = match &prepared.gains {
        Gains::Saturated(g) => g.clone(),
        Gains::Unsaturated(_) => unreachable!("candidates are saturated"),
    };
    let n = prepared.model.dof();
    let limits = prepared
        .limits
        .clone()
        .ok_or_else(|| CliError::Config("limits: the sweep needs actuator limits".into()))?;
    let mut gravity_box = ConfigurationBox::full_revolution(n, spec.grid_points);
    if let Some(l) = &spec.lower {
        gravity_box.lower = Vector::from_column_slice(l);
    }
    if let Some(u) = &spec.upper {
        gravity_box.upper = Vector::from_column_slice(u);
    }
    let sampling = BudgetSampling {
        horizon: prepared.sim.t_end,
        time_samples: spec.time_samples,
        gravity_box,
    };
    let budget = saturation_budget(prepared.model.as_ref(), &g, prepared.trajectory.as_ref(), &sampling, &limits)?;
    let outcome = execute(&cfg, &prepared)
        .map(|(_, report)| report)
        .map_err(|e| e.to_string());
    Ok(Entry {
        gains: candidate.clone(),
        config_hash: cfg.hash(),
        budget,
        outcome,
    })
}

/// Evaluates every candidate and ranks them: feasible first by settled error,
/// then the rest, ties broken by config hash.
pub fn run_sweep(spec: &SweepSpec, seed: u64) -> Result<Leaderboard, CliError> {
    let base = spec.base_config()?;
    let base_gains = base.gains.build()?;
    let candidates = spec.candidates(&base_vectors(&base_gains)?, seed)?;
    let cert = &spec.certification;
    if let (Some(l), Some(u)) = (&cert.lower, &cert.upper) {
        if l.len() != u.len() || l.iter().zip(u).any(|(a, b)| !(a <= b)) {
            return Err(CliError::Config("certification: need lower ≤ upper per axis".into()));
        }
    }
    let limits = base
        .prepare()?
        .limits
        .ok_or_else(|| CliError::Config("limits: the sweep needs actuator limits".into()))?;

    let work = || -> Result<Vec<Entry>, CliError> {
        candidates.par_iter().map(|c| evaluate(&base, c, cert)).collect()
    };
    let mut entries = match spec.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::Config(format!("threads: {e}")))?
            .install(work)?,
        None => work()?,
    };
    entries.sort_by(|a, b| a.config_hash.cmp(&b.config_hash));
    entries.sort_by(|a, b| {
        b.feasible()
            .cmp(&a.feasible())
            .then(a.settled_error().total_cmp(&b.settled_error()))
    });
    Ok(Leaderboard {
        entries,
        limit_max: limits.max,
    })
}
