//! Central finite-difference checks of reverse-mode gradients.

use rand::Rng;

use super::graph::{Graph, Var};
use super::params::{ParamId, ParamStore};
use crate::error::Result;

/// One compared coordinate.
#[derive(Debug, Clone)]
pub struct Probe {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares backward() against central differences with step `h` on
/// `probes` randomly chosen coordinates of the parameters in `candidates`.
///
/// `build` constructs the scalar loss from the current parameter values.
pub fn check<R, F>(
    store: &ParamStore,
    candidates: &[ParamId],
    probes: usize,
    h: f64,
    rng: &mut R,
    build: F,
) -> Result<Vec<Probe>>
where
    R: Rng,
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let mut work = store.clone();
    work.zero_grad();
    let mut g = Graph::new();
    let loss = build(&mut g, &work)?;
    g.backward(loss, &mut work)?;

    let eval = |s: &ParamStore| -> Result<f64> {
        let mut g = Graph::new();
        let l = build(&mut g, s)?;
        Ok(g.value(l).item())
    };

    let mut out = Vec::with_capacity(probes);
    for k in 0..probes {
        let id = candidates[k % candidates.len()];
        let index = rng.random_range(0..work.value(id).len());
        let analytic = work.grad(id).data()[index];
        let orig = work.value(id).data()[index];
        work.value_mut(id).data_mut()[index] = orig + h;
        let plus = eval(&work)?;
        work.value_mut(id).data_mut()[index] = orig - h;
        let minus = eval(&work)?;
        work.value_mut(id).data_mut()[index] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        out.push(Probe {
            param: work.name(id).to_string(),
            index,
            analytic,
            numeric,
            rel_error: relative_error(analytic, numeric),
        });
    }
    Ok(out)
}

/// Largest relative error of a probe set.
pub fn worst(probes: &[Probe]) -> f64 {
    probes.iter().map(|p| p.rel_error).fold(0.0, f64::max)
}
