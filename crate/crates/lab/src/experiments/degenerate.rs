use cahn_core::degeneracy::{constant_field, constant_solution, degenerate_epsilons, morse_lower_bound};
use cahn_core::operators::Problem;
use cahn_core::Manifold;
use serde_json::json;

use super::{analyze, kernel_dim, potential};
use crate::config::RunConfig;
use crate::error::LabResult;
use crate::record::{Outcome, Table};

/// Degenerate `eps` of the constant solution, with a numerical confirmation
/// of each level on tori.
pub fn degenerate_eps(cfg: &RunConfig, nu: f64, j_max: usize) -> LabResult<Outcome> {
    let mut out = Outcome::default();
    let pot = potential(cfg, &mut out)?;
    let manifold = cfg.manifold()?;
    let (value, lambda) = constant_solution(&pot, nu, &manifold)?;
    let levels = degenerate_epsilons(&pot, nu, &manifold, j_max)?;
    let spectrum = manifold.laplacian_spectrum(j_max)?;
    let mut t = Table::new("degenerate_eps", &["j", "alpha", "multiplicity", "eps", "kernel_dim"]);
    let mut confirmed = Vec::new();
    let mut all_ok = true;
    for (j, ((eps, mult), level)) in levels.iter().zip(&spectrum).enumerate() {
        let kernel = match &manifold {
            Manifold::Torus(torus) => {
                let problem = Problem::new(*eps, torus.clone(), pot.clone())?;
                let (u, _) = constant_field(&pot, nu, torus);
                let k = kernel_dim(&analyze(&problem, &u, cfg)?);
                confirmed.push(format!("j = {}: kernel {k} vs multiplicity {mult}", j + 1));
                all_ok &= k == *mult;
                k.into()
            }
            Manifold::Sphere(_) => "".into(),
        };
        t.push(vec![(j + 1).into(), level.value.into(), (*mult).into(), (*eps).into(), kernel]);
    }
    out.tables.push(t);
    if levels.is_empty() {
        out.note(format!(
            "W''(nu / vol) = {} >= 0: the constant solution is nondegenerate for every eps",
            pot.d2w(value)
        ));
    }
    if matches!(manifold, Manifold::Torus(_)) {
        out.check("criterion_levels_confirmed", all_ok, confirmed.join("; "));
    }
    out.set("constant_value", value);
    out.set("constant_lambda", lambda);
    out.set("volume", manifold.volume());
    out.set("morse_lower_bound", morse_lower_bound(&manifold));
    out.set(
        "predicted",
        levels.iter().map(|&(e, m)| json!({"eps": e, "multiplicity": m})).collect::<Vec<_>>(),
    );
    Ok(out)
}
