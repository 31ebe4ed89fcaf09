//! Central-difference verification of analytic gradients.

use super::param::{ParamId, ParamStore};
use super::tape::{NodeId, Tape};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Finite-difference step.
    pub step: f64,
    /// Largest acceptable relative error.
    pub tolerance: f64,
    /// Magnitudes below this are compared absolutely rather than relatively.
    pub floor: f64,
    /// Check at most this many entries per parameter (evenly strided).
    pub max_entries: Option<usize>,
    /// Restrict the check to these parameters; all when `None`.
    pub only: Option<Vec<ParamId>>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            tolerance: 1e-4,
            floor: 1e-6,
            max_entries: None,
            only: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub entries_checked: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.failing().next().is_none()
    }

    pub fn failing(&self) -> impl Iterator<Item = &ParamCheck> {
        self.params
            .iter()
            .filter(move |p| !(p.max_rel_error <= self.tolerance))
    }
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for p in &self.params {
            writeln!(
                f,
                "{:<24} entries={:<6} max_rel_err={:.3e} at [{}] (analytic {:.6e}, numeric {:.6e}) {}",
                p.name,
                p.entries_checked,
                p.max_rel_error,
                p.worst_index,
                p.analytic,
                p.numeric,
                if p.max_rel_error <= self.tolerance { "ok" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

/// Compares the tape gradient of the scalar built by `loss_fn` against
/// central differences, parameter by parameter.
///
/// `loss_fn` must record the same deterministic computation on every call.
pub fn grad_check<F>(store: &mut ParamStore, mut loss_fn: F, opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape<'_>) -> Result<NodeId>,
{
    let analytic = {
        let mut tape = Tape::new(store);
        let loss = loss_fn(&mut tape)?;
        let grads = tape.backward(loss)?;
        let ids: Vec<ParamId> = store.ids().collect();
        ids.into_iter()
            .map(|id| grads.dense(id, store))
            .collect::<Vec<_>>()
    };

    let ids: Vec<ParamId> = match &opts.only {
        Some(v) => v.clone(),
        None => store.ids().collect(),
    };
    let mut report = GradCheckReport {
        tolerance: opts.tolerance,
        params: Vec::with_capacity(ids.len()),
    };

    for id in ids {
        let n = store.value(id).len();
        let stride = match opts.max_entries {
            Some(m) if m > 0 && n > m => n.div_ceil(m),
            _ => 1,
        };
        let name = store.get(id).name.clone();
        let mut check = ParamCheck {
            name: name.clone(),
            entries_checked: 0,
            max_rel_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for i in (0..n).step_by(stride) {
            let orig = store.value(id).data()[i];
            store.value_mut(id).data_mut()[i] = orig + opts.step;
            let plus = eval(store, &mut loss_fn);
            store.value_mut(id).data_mut()[i] = orig - opts.step;
            let minus = eval(store, &mut loss_fn);
            store.value_mut(id).data_mut()[i] = orig;
            let (plus, minus) = (plus?, minus?);
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss while perturbing parameter `{name}` entry {i}"
                )));
            }
            let numeric = (plus - minus) / (2.0 * opts.step);
            let a = analytic[id.index()][i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.floor);
            check.entries_checked += 1;
            if rel > check.max_rel_error || check.entries_checked == 1 {
                check.max_rel_error = rel;
                check.worst_index = i;
                check.analytic = a;
                check.numeric = numeric;
            }
        }
        report.params.push(check);
    }
    Ok(report)
}

fn eval<F>(store: &ParamStore, loss_fn: &mut F) -> Result<f64>
where
    F: FnMut(&mut Tape<'_>) -> Result<NodeId>,
{
    let mut tape = Tape::new(store);
    let loss = loss_fn(&mut tape)?;
    Ok(tape.scalar(loss))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{MapFn, Tensor};

    #[test]
    fn quadratic_is_exact() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::vector(vec![0.3, -1.2, 2.5, 0.7]));
        let report = grad_check(
            &mut store,
            |t| {
                let p = t.param(w);
                let d = t.dot(p, p);
                Ok(t.scale(d, 0.5))
            },
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(report.max_rel_error() < 1e-8, "{report}");
    }

    #[test]
    fn wrong_derivative_is_flagged() {
        // Square with a deliberately wrong derivative (x instead of 2x).
        const BAD_SQUARE: MapFn = MapFn {
            name: "bad_square",
            f: |x| x * x,
            df: |x, _| x,
        };
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::vector(vec![0.4, -0.9]));
        let b = store.add("b", Tensor::vector(vec![1.1, 0.2]));
        let report = grad_check(
            &mut store,
            |t| {
                let an = t.param(a);
                let sq = t.map(an, BAD_SQUARE);
                let bn = t.param(b);
                let th = t.tanh(bn);
                let s = t.add(sq, th);
                Ok(t.sum(s))
            },
            &GradCheckOptions::default(),
        )
        .unwrap();
        let failing: Vec<&str> = report.failing().map(|p| p.name.as_str()).collect();
        assert_eq!(failing, vec!["a"]);
    }

    #[test]
    fn non_finite_loss_names_parameter() {
        let mut store = ParamStore::new();
        let a = store.add("near_zero", Tensor::vector(vec![1e-6]));
        let err = grad_check(
            &mut store,
            |t| {
                let an = t.param(a);
                let l = t.ln(an);
                Ok(t.sum(l))
            },
            &GradCheckOptions {
                step: 1e-5,
                ..Default::default()
            },
        );
        match err {
            Err(Error::NonFinite(msg)) => assert!(msg.contains("near_zero"), "{msg}"),
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }
}
