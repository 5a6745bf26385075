//! Bounded downhill-simplex search over probe and protocol parameters, and
//! one-dimensional parameter scans.

use std::collections::HashMap;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::experiment::{StorageSetup, PARAM_NAMES};

/// One bounded search variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamBound {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    /// Starting value; the midpoint when absent.
    #[serde(default)]
    pub initial: Option<f64>,
}

impl ParamBound {
    pub fn new(name: &str, lower: f64, upper: f64) -> Self {
        ParamBound {
            name: name.to_string(),
            lower,
            upper,
            initial: None,
        }
    }

    pub fn with_initial(mut self, x: f64) -> Self {
        self.initial = Some(x);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizationSpec {
    pub params: Vec<ParamBound>,
    /// Maximum number of objective evaluations.
    pub budget: usize,
    /// Stop once the simplex diameter, in bound-normalized units, falls
    /// below this.
    pub tolerance: f64,
}

impl OptimizationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.params.is_empty() {
            return Err(invalid("optimization needs at least one parameter"));
        }
        for p in &self.params {
            if !(p.lower.is_finite() && p.upper.is_finite() && p.lower < p.upper) {
                return Err(invalid(format!(
                    "bounds for {} must be finite and ordered, got [{}, {}]",
                    p.name, p.lower, p.upper
                )));
            }
            if let Some(x) = p.initial {
                if !(p.lower..=p.upper).contains(&x) {
                    return Err(invalid(format!("initial {} = {x} outside its bounds", p.name)));
                }
            }
        }
        if self.budget < 20 {
            return Err(invalid("budget must be at least 20 evaluations"));
        }
        if !(self.tolerance > 0.0) {
            return Err(invalid("tolerance must be positive"));
        }
        Ok(())
    }

    pub fn names(&self) -> Vec<String> {
        self.params.iter().map(|p| p.name.clone()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub eval_index: usize,
    pub params: Vec<f64>,
    /// Objective value; `-inf` when the evaluation failed.
    pub value: f64,
    pub best_so_far: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub names: Vec<String>,
    pub entries: Vec<TraceEntry>,
}

impl OptimizationTrace {
    pub fn best(&self) -> Option<&TraceEntry> {
        self.entries
            .iter()
            .fold(None, |best: Option<&TraceEntry>, e| match best {
                Some(b) if b.value >= e.value => Some(b),
                _ => Some(e),
            })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizationOutcome {
    pub best_params: Vec<f64>,
    pub best_value: f64,
    pub trace: OptimizationTrace,
    pub converged: bool,
}

struct Search<'a, F> {
    objective: F,
    lower: Vec<f64>,
    span: Vec<f64>,
    memo: HashMap<Vec<u64>, f64>,
    trace: &'a mut OptimizationTrace,
    best: f64,
    budget: usize,
}

impl<F: FnMut(&[f64]) -> Result<f64>> Search<'_, F> {
    fn to_params(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(&self.lower)
            .zip(&self.span)
            .map(|((u, lo), span)| (lo + u.clamp(0.0, 1.0) * span).clamp(*lo, lo + span))
            .collect()
    }

    fn exhausted(&self) -> bool {
        self.trace.entries.len() >= self.budget
    }

    /// Objective at normalized point `u` (clipped into the unit box).
    fn eval(&mut self, u: &[f64]) -> f64 {
        let x = self.to_params(u);
        let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
        if let Some(v) = self.memo.get(&key) {
            return *v;
        }
        if self.exhausted() {
            return f64::NEG_INFINITY;
        }
        let value = match (self.objective)(&x) {
            Ok(v) if !v.is_nan() => v,
            Ok(_) => {
                warn!("objective returned NaN at {x:?}");
                f64::NEG_INFINITY
            }
            Err(e) => {
                warn!("objective failed at {x:?}: {e}");
                f64::NEG_INFINITY
            }
        };
        self.best = self.best.max(value);
        self.trace.entries.push(TraceEntry {
            eval_index: self.trace.entries.len(),
            params: x,
            value,
            best_so_far: self.best,
        });
        self.memo.insert(key, value);
        value
    }
}

/// Maximizes `objective` inside the bounds of `spec` with a Nelder-Mead
/// simplex in bound-normalized coordinates; every trial point is clipped to
/// the box. Failed evaluations score `-inf` and the search continues.
pub fn maximize<F>(spec: &OptimizationSpec, seed: u64, objective: F) -> Result<OptimizationOutcome>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    spec.validate()?;
    let n = spec.params.len();
    let mut trace = OptimizationTrace {
        names: spec.names(),
        entries: Vec::new(),
    };
    let mut search = Search {
        objective,
        lower: spec.params.iter().map(|p| p.lower).collect(),
        span: spec.params.iter().map(|p| p.upper - p.lower).collect(),
        memo: HashMap::new(),
        trace: &mut trace,
        best: f64::NEG_INFINITY,
        budget: spec.budget,
    };

    // seed-dependent start: small jitter around the initial point and the
    // orientation of each edge
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start: Vec<f64> = spec
        .params
        .iter()
        .map(|p| {
            let x = p.initial.unwrap_or(0.5 * (p.lower + p.upper));
            let u = (x - p.lower) / (p.upper - p.lower);
            (u + rng.random_range(-0.02..0.02)).clamp(0.0, 1.0)
        })
        .collect();
    let mut simplex = vec![start.clone()];
    for i in 0..n {
        let mut v = start.clone();
        let step = 0.25 * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        v[i] = if (0.0..=1.0).contains(&(v[i] + step)) {
            v[i] + step
        } else {
            v[i] - step
        };
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| search.eval(v)).collect();

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut converged = false;
    let max_iterations = 20 * spec.budget;
    for _ in 0..max_iterations {
        // best first; ties keep their index order
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let diameter = simplex
            .iter()
            .skip(1)
            .map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if diameter < spec.tolerance {
            converged = true;
            break;
        }
        if search.exhausted() {
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst)
                .map(|(c, w)| (c + t * (c - w)).clamp(0.0, 1.0))
                .collect()
        };

        let reflected = along(alpha);
        let f_r = search.eval(&reflected);
        if f_r > values[0] {
            let expanded = along(gamma);
            let f_e = search.eval(&expanded);
            if f_e > f_r {
                simplex[n] = expanded;
                values[n] = f_e;
            } else {
                simplex[n] = reflected;
                values[n] = f_r;
            }
            continue;
        }
        if f_r > values[n - 1] {
            simplex[n] = reflected;
            values[n] = f_r;
            continue;
        }
        // outside contraction must beat the reflection, inside the worst
        let (t, threshold) = if f_r > values[n] {
            (rho * alpha, f_r)
        } else {
            (-rho, values[n])
        };
        let contracted = along(t);
        let f_c = search.eval(&contracted);
        if f_c >= threshold && f_c > f64::NEG_INFINITY {
            simplex[n] = contracted;
            values[n] = f_c;
            continue;
        }
        // shrink toward the best vertex
        for i in 1..=n {
            let v: Vec<f64> = simplex[0]
                .iter()
                .zip(&simplex[i])
                .map(|(b, x)| b + sigma * (x - b))
                .collect();
            values[i] = search.eval(&v);
            simplex[i] = v;
        }
    }
    drop(search);

    let best = trace
        .best()
        .cloned()
        .ok_or_else(|| invalid("optimizer made no evaluations"))?;
    Ok(OptimizationOutcome {
        best_params: best.params,
        best_value: best.value,
        trace,
        converged,
    })
}

/// Result of [`optimize`] on a storage setup.
#[derive(Clone, Debug, PartialEq)]
pub struct PulseOptimization {
    pub names: Vec<String>,
    pub best_params: Vec<f64>,
    /// Best efficiency found on the search grid.
    pub best_se: f64,
    /// The best point re-evaluated on the setup's own grid.
    pub best_se_full: f64,
    pub best_setup: StorageSetup,
    pub trace: OptimizationTrace,
    pub converged: bool,
}

/// Maximizes storage efficiency over the parameters named in `spec`. With
/// `coarse_search` the simplex runs on a half-resolution grid and the best
/// point is re-run at full resolution.
pub fn optimize(
    base: &StorageSetup,
    spec: &OptimizationSpec,
    seed: u64,
    coarse_search: bool,
) -> Result<PulseOptimization> {
    let names = spec.names();
    if let Some(n) = names.iter().find(|n| !PARAM_NAMES.contains(&n.as_str())) {
        return Err(invalid(format!(
            "unknown parameter {n:?}; expected one of {}",
            PARAM_NAMES.join(", ")
        )));
    }
    let mut search_base = *base;
    if coarse_search {
        search_base.grid = base.grid.coarsened();
    }
    let outcome = maximize(spec, seed, |x| search_base.with_params(&names, x)?.se())?;
    let best_setup = base.with_params(&names, &outcome.best_params)?;
    let best_se_full = best_setup.se()?;
    Ok(PulseOptimization {
        names,
        best_params: outcome.best_params,
        best_se: outcome.best_value,
        best_se_full,
        best_setup,
        trace: outcome.trace,
        converged: outcome.converged,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanPoint {
    pub value: f64,
    pub od: Option<f64>,
    pub se: Option<f64>,
    pub error: Option<String>,
}

/// One run per value of `param`, evaluated in parallel; output order
/// follows `values`. Failed points keep their error and the scan goes on.
pub fn scan(base: &StorageSetup, param: &str, values: &[f64]) -> Result<Vec<ScanPoint>> {
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(invalid(format!("scan value {v} is not finite")));
    }
    if !PARAM_NAMES.contains(&param) {
        return Err(invalid(format!(
            "unknown parameter {param:?}; expected one of {}",
            PARAM_NAMES.join(", ")
        )));
    }
    Ok(values
        .par_iter()
        .map(|&value| {
            let outcome = base.with_param(param, value).and_then(|s| {
                let od = s.od()?;
                Ok((od, s.se()?))
            });
            match outcome {
                Ok((od, se)) => ScanPoint {
                    value,
                    od: Some(od),
                    se: Some(se),
                    error: None,
                },
                Err(e) => ScanPoint {
                    value,
                    od: None,
                    se: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn quad_spec() -> OptimizationSpec {
        OptimizationSpec {
            params: vec![ParamBound::new("x", 0.0, 1.0)],
            budget: 100,
            tolerance: 1e-6,
        }
    }

    #[test]
    fn quadratic_optimum() {
        let out = maximize(&quad_spec(), 7, |x| Ok(-(x[0] - 0.3).powi(2))).unwrap();
        assert!((out.best_params[0] - 0.3).abs() < 0.005, "{:?}", out.best_params);
    }

    #[test]
    fn optimum_on_the_boundary() {
        let out = maximize(&quad_spec(), 1, |x| Ok(x[0])).unwrap();
        assert!(out.best_params[0] > 0.995);
        assert!(out.trace.entries.iter().all(|e| (0.0..=1.0).contains(&e.params[0])));
    }

    #[test]
    fn failures_score_negative_infinity() {
        let out = maximize(&quad_spec(), 3, |x| {
            if x[0] > 0.6 {
                Err(Error::InvalidArgument("out of domain".into()))
            } else {
                Ok(-(x[0] - 0.5).powi(2))
            }
        })
        .unwrap();
        assert!(out.trace.entries.iter().any(|e| e.value == f64::NEG_INFINITY));
        assert!((out.best_params[0] - 0.5).abs() < 0.01);
    }

    #[test]
    fn budget_and_trace_invariants() {
        let spec = OptimizationSpec {
            params: vec![ParamBound::new("a", -2.0, 2.0), ParamBound::new("b", -1.0, 3.0)],
            budget: 40,
            tolerance: 1e-12,
        };
        let out = maximize(&spec, 11, |x| Ok(-(x[0] - 1.0).powi(2) - 3.0 * (x[1] - 0.5).powi(2))).unwrap();
        assert!(out.trace.entries.len() <= 40);
        let mut best = f64::NEG_INFINITY;
        for e in &out.trace.entries {
            best = best.max(e.value);
            assert_eq!(e.best_so_far, best);
        }
        let again = maximize(&spec, 11, |x| Ok(-(x[0] - 1.0).powi(2) - 3.0 * (x[1] - 0.5).powi(2))).unwrap();
        assert_eq!(out.trace, again.trace);
    }

    #[test]
    fn spec_validation() {
        let mut s = quad_spec();
        s.budget = 10;
        assert!(s.validate().is_err());
        let s = OptimizationSpec {
            params: vec![ParamBound::new("x", 1.0, 0.0)],
            budget: 50,
            tolerance: 1e-3,
        };
        assert!(s.validate().is_err());
    }
}
