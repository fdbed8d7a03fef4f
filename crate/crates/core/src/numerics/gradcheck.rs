//! Central finite-difference comparison against the tape's analytic
//! gradients.
//!
//! The reported error for each entry is
//! `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`, and the maximum
//! over entries is returned. A non-finite comparison reports `f64::INFINITY`.
//! Inputs sitting exactly on a relu kink are not meaningful here: the
//! subgradient is 0 while the symmetric difference sees half a slope.

use super::{BoundParams, Matrix, ParamStore, Tape, Var};

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let e = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
    if e.is_nan() {
        f64::INFINITY
    } else {
        e
    }
}

fn max_rel_err(analytic: &Matrix, numeric: &Matrix) -> f64 {
    analytic
        .as_slice()
        .iter()
        .zip(numeric.as_slice())
        .map(|(&a, &n)| rel_err(a, n))
        .fold(0.0, f64::max)
}

/// Maximum relative error between the analytic gradient of the scalar
/// function `f` at `x` and its central difference with step `h`.
pub fn grad_check<F, E>(f: F, x: &Matrix, h: f64) -> Result<f64, E>
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> Result<Var<'t>, E>,
{
    assert!(h > 0.0 && h <= 1e-2, "finite-difference step must lie in (0, 1e-2]");
    let tape = Tape::new();
    let xv = tape.leaf(x.clone(), true);
    let loss = f(&tape, xv)?;
    let grads = tape
        .backward(loss)
        .expect("grad_check needs a scalar function");
    let (r, c) = x.shape();
    let analytic = grads.get(&xv).cloned().unwrap_or_else(|| Matrix::zeros(r, c));

    let eval = |m: Matrix| -> Result<f64, E> {
        let t = Tape::new();
        let v = t.leaf(m, false);
        Ok(f(&t, v)?.scalar())
    };
    let mut numeric = Matrix::zeros(r, c);
    for k in 0..x.len() {
        let mut plus = x.clone();
        plus.as_mut_slice()[k] += h;
        let mut minus = x.clone();
        minus.as_mut_slice()[k] -= h;
        numeric.as_mut_slice()[k] = (eval(plus)? - eval(minus)?) / (2.0 * h);
    }
    Ok(max_rel_err(&analytic, &numeric))
}

/// Result of checking one named parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_err: f64,
}

/// Runs the central-difference comparison for every parameter of `store`.
pub fn grad_check_params<F, E>(store: &ParamStore, f: F, h: f64) -> Result<Vec<ParamCheck>, E>
where
    F: for<'t> Fn(&'t Tape, &BoundParams<'t>) -> Result<Var<'t>, E>,
{
    assert!(h > 0.0 && h <= 1e-2, "finite-difference step must lie in (0, 1e-2]");
    let tape = Tape::new();
    let bound = store.bind(&tape);
    let loss = f(&tape, &bound)?;
    let grads = tape
        .backward(loss)
        .expect("grad_check_params needs a scalar function");

    let eval = |s: &ParamStore| -> Result<f64, E> {
        let t = Tape::new();
        let b = s.bind(&t);
        Ok(f(&t, &b)?.scalar())
    };

    let mut out = Vec::with_capacity(store.len());
    let mut work = store.clone();
    for id in store.ids() {
        let p = store.get(id);
        let (r, c) = p.value.shape();
        let analytic = grads
            .get(&bound.var(id))
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(r, c));
        let mut numeric = Matrix::zeros(r, c);
        for k in 0..p.value.len() {
            let orig = p.value.as_slice()[k];
            work.get_mut(id).value.as_mut_slice()[k] = orig + h;
            let fp = eval(&work)?;
            work.get_mut(id).value.as_mut_slice()[k] = orig - h;
            let fm = eval(&work)?;
            work.get_mut(id).value.as_mut_slice()[k] = orig;
            numeric.as_mut_slice()[k] = (fp - fm) / (2.0 * h);
        }
        out.push(ParamCheck {
            name: p.name.clone(),
            max_rel_err: max_rel_err(&analytic, &numeric),
        });
    }
    Ok(out)
}
