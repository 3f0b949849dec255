//! Central finite-difference verification of analytic gradients.

use super::graph::{Graph, Var};
use super::tensor::ParamStore;
use crate::error::{Error, Result};

pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// max over coordinates of |g_a - g_f| / max(1, |g_a|, |g_f|)
    pub max_rel_error: f64,
    pub worst: Option<(String, usize)>,
    pub coordinates: usize,
}

/// Compares the reverse-mode gradient of `f` with central differences over
/// every coordinate of the parameters named in `subset` (all parameters
/// when `subset` is empty). `f` must be deterministic.
pub fn grad_check<F>(store: &ParamStore, subset: &[&str], f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    if !store.all_finite() {
        return Err(Error::NonFinite { op: "grad_check input" });
    }
    let mut graph = Graph::new();
    let loss = f(&mut graph, store)?;
    graph.check_finite()?;
    let grads = graph.backward(loss);

    let names: Vec<String> = if subset.is_empty() {
        store.names().map(str::to_string).collect()
    } else {
        for name in subset {
            store.tensor(name)?;
        }
        subset.iter().map(|s| s.to_string()).collect()
    };

    let eval = |s: &ParamStore| -> Result<f64> {
        let mut g = Graph::new();
        let out = f(&mut g, s)?;
        g.check_finite()?;
        Ok(g.scalar(out))
    };

    let mut scratch = store.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        coordinates: 0,
    };
    for name in &names {
        let n = store.tensor(name)?.len();
        let analytic = grads.get(name);
        for k in 0..n {
            let original = store.tensor(name)?.data()[k];
            scratch.get_mut(name).expect("present").data_mut()[k] = original + FD_STEP;
            let up = eval(&scratch)?;
            scratch.get_mut(name).expect("present").data_mut()[k] = original - FD_STEP;
            let down = eval(&scratch)?;
            scratch.get_mut(name).expect("present").data_mut()[k] = original;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let a = analytic.map_or(0.0, |g| g[k]);
            let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            report.coordinates += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                if err >= report.max_rel_error {
                    report.worst = Some((name.clone(), k));
                }
            }
        }
    }
    Ok(report)
}
