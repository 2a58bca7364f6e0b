use crate::data::PointSet;
use crate::error::{Error, Result};
use crate::taskgen::Task;
use crate::training::Predictor;

/// Roughness of the predictive mean around context points: for each context
/// point and axis, `|μ(x+h) − 2μ(x) + μ(x−h)| / h²`, averaged over the
/// axes whose probes fall inside `[lo, hi]`, then over context points.
pub fn artefact_score(predictor: &dyn Predictor, task: &Task, probe_spacing: f64, lo: &[f64], hi: &[f64]) -> Result<f64> {
    if !(probe_spacing > 0.0) {
        return Err(Error::InvalidValue {
            key: "probe_spacing".into(),
            value: probe_spacing.to_string(),
        });
    }
    let dim = task.context.dim;
    let inside = |p: &[f64]| p.iter().enumerate().all(|(d, &x)| x >= lo[d] && x <= hi[d]);
    let mut probes = PointSet::empty(dim);
    // (context index, first probe index) per usable axis; probes are − then + then centre
    let mut crosses: Vec<(usize, usize)> = Vec::new();
    for (i, x) in task.context.points().enumerate() {
        for d in 0..dim {
            let mut minus = x.to_vec();
            let mut plus = x.to_vec();
            minus[d] -= probe_spacing;
            plus[d] += probe_spacing;
            if inside(&minus) && inside(&plus) && inside(x) {
                crosses.push((i, probes.len()));
                probes.push(&minus, 0.0);
                probes.push(&plus, 0.0);
                probes.push(x, 0.0);
            }
        }
    }
    if crosses.is_empty() {
        return Err(Error::config("no context point admits a probe cross inside the domain"));
    }
    let probe_task = Task {
        targets: probes,
        ..task.clone()
    };
    let mu = predictor.predict(&probe_task)?.means;
    let h2 = probe_spacing * probe_spacing;
    let mut per_point: Vec<(f64, usize)> = vec![(0.0, 0); task.context.len()];
    for &(i, k) in &crosses {
        per_point[i].0 += (mu[k + 1] - 2.0 * mu[k + 2] + mu[k]).abs() / h2;
        per_point[i].1 += 1;
    }
    let scored: Vec<f64> = per_point.iter().filter(|(_, n)| *n > 0).map(|(s, n)| s / *n as f64).collect();
    Ok(scored.iter().sum::<f64>() / scored.len() as f64)
}

/// Mean [`artefact_score`] over tasks.
pub fn mean_artefact_score(
    predictor: &dyn Predictor,
    tasks: &[Task],
    probe_spacing: f64,
    lo: &[f64],
    hi: &[f64],
) -> Result<f64> {
    if tasks.is_empty() {
        return Err(Error::config("artefact diagnostic needs at least one task"));
    }
    let mut total = 0.0;
    for t in tasks {
        total += artefact_score(predictor, t, probe_spacing, lo, hi)?;
    }
    Ok(total / tasks.len() as f64)
}
