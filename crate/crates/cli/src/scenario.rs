//! JSON scenario files.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use eikon_core::funcs::{BranchSelector, FamilySpec, PsiFunction, WFunctions};
use eikon_core::solutions::linear_solution;
use eikon_core::symmetry::RowParams;
use eikon_core::{Family, Linear, Newton, Solution};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.min];
        }
        let span = self.max - self.min;
        (0..self.steps).map(|i| self.min + span * i as f64 / (self.steps - 1) as f64).collect()
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub t: Axis,
    pub x: Vec<Axis>,
}

impl GridSpec {
    /// Points in grid-major order: `t` slowest, then `x1`, …, `xn` fastest.
    pub fn points(&self) -> Vec<(f64, Vec<f64>)> {
        let mut xs: Vec<Vec<f64>> = vec![Vec::new()];
        for axis in &self.x {
            let vals = axis.values();
            xs = xs
                .into_iter()
                .flat_map(|p| {
                    vals.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push(v);
                        q
                    })
                })
                .collect();
        }
        self.t.values().into_iter().flat_map(|t| xs.iter().map(move |x| (t, x.clone()))).collect()
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewtonSpec {
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub damping: Option<f64>,
    pub max_halvings: Option<usize>,
    pub jacobian_cond_max: Option<f64>,
    pub random_seeds: Option<usize>,
    pub perturbation: Option<f64>,
    pub continuation_steps: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearSpec {
    pub c0: f64,
    pub direction: Vec<f64>,
    #[serde(default)]
    pub c_const: f64,
}

fn default_samples() -> usize {
    100
}

fn default_tol() -> f64 {
    1e-9
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSpec {
    pub row: usize,
    pub n: Option<usize>,
    #[serde(default)]
    pub params: RowParams,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub n: Option<usize>,
    pub family: Option<FamilySpec>,
    #[serde(default)]
    pub branch: BranchSelector,
    pub k: Option<usize>,
    pub psi: Option<String>,
    #[serde(default)]
    pub w: Vec<String>,
    pub linear: Option<LinearSpec>,
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub newton: NewtonSpec,
    #[serde(default)]
    pub seeds: Vec<Vec<f64>>,
    #[serde(default)]
    pub rng_seed: u64,
    pub rank_tol: Option<f64>,
    pub table: Option<TableSpec>,
}

/// What gets evaluated on the grid.
pub enum Model {
    Implicit(Solution),
    Linear { family: Family, solution: Linear },
}

impl Model {
    pub fn family(&self) -> &Family {
        match self {
            Model::Implicit(s) => s.family(),
            Model::Linear { family, .. } => family,
        }
    }
}

pub fn load(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).with_context(|| format!("reading scenario {}", path.display()))?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<Scenario> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        anyhow::anyhow!("invalid scenario at `{path}`: {}", e.into_inner())
    })
}

impl Scenario {
    pub fn n(&self) -> Result<usize> {
        match self.n {
            Some(0) => bail!("`n` must be at least 1"),
            Some(n) => Ok(n),
            None => bail!("missing field `n`"),
        }
    }

    pub fn grid(&self) -> Result<&GridSpec> {
        let n = self.n()?;
        let grid = self.grid.as_ref().context("missing field `grid`")?;
        if grid.t.steps == 0 {
            bail!("`grid.t.steps` must be at least 1");
        }
        if grid.x.len() != n {
            bail!("`grid.x` has {} axes but n = {n}", grid.x.len());
        }
        if let Some(i) = grid.x.iter().position(|a| a.steps == 0) {
            bail!("`grid.x[{i}].steps` must be at least 1");
        }
        Ok(grid)
    }

    pub fn newton(&self, seed: u64) -> Newton {
        let d = Newton::default();
        let s = &self.newton;
        Newton {
            tol: s.tol.unwrap_or(d.tol),
            max_iter: s.max_iter.unwrap_or(d.max_iter),
            damping: s.damping.unwrap_or(d.damping),
            max_halvings: s.max_halvings.unwrap_or(d.max_halvings),
            jacobian_cond_max: s.jacobian_cond_max.unwrap_or(d.jacobian_cond_max),
            random_seeds: s.random_seeds.unwrap_or(d.random_seeds),
            perturbation: s.perturbation.unwrap_or(d.perturbation),
            continuation_steps: s.continuation_steps.unwrap_or(d.continuation_steps),
            seeds: self.seeds.clone(),
            rng_seed: seed,
            ..d
        }
    }

    pub fn model(&self) -> Result<Model> {
        let n = self.n()?;
        let family: Family = self
            .family
            .as_ref()
            .context("missing field `family`")?
            .build()
            .context("invalid field `family`")?;
        if let Some(lin) = &self.linear {
            if lin.direction.len() != n {
                bail!("`linear.direction` has {} entries but n = {n}", lin.direction.len());
            }
            let solution = linear_solution(&family, lin.c0, &lin.direction, lin.c_const).context("invalid field `linear`")?;
            return Ok(Model::Linear { family, solution });
        }
        let k = self.k.unwrap_or(n);
        if k > n {
            bail!("k exceeds n (k = {k}, n = {n})");
        }
        if self.w.len() != n - k {
            bail!("`w` has {} entries but n − k = {}", self.w.len(), n - k);
        }
        if let Some(i) = self.seeds.iter().position(|s| s.len() != k) {
            bail!("`seeds[{i}]` has length {} but k = {k}", self.seeds[i].len());
        }
        let psi = PsiFunction::parse(self.psi.as_deref().context("missing field `psi`")?, k).context("invalid field `psi`")?;
        let w = WFunctions::parse(&self.w, k).context("invalid field `w`")?;
        let sol = Solution::new(n, k, family, self.branch, psi, w)?;
        Ok(Model::Implicit(sol))
    }

    pub fn table(&self) -> Result<&TableSpec> {
        let t = self.table.as_ref().context("missing field `table`")?;
        if t.samples == 0 {
            bail!("`table.samples` must be at least 1");
        }
        Ok(t)
    }
}
