use super::{Evaluator, SearchConfig};

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

fn clamp(z: Vec<f64>) -> Vec<f64> {
    z.into_iter().map(|v| v.clamp(0.0, 1.0)).collect()
}

fn toward(from: &[f64], to: &[f64], t: f64) -> Vec<f64> {
    clamp(from.iter().zip(to).map(|(a, b)| a + t * (b - a)).collect())
}

/// Nelder-Mead on the unit box; trial points are projected onto the box
/// before evaluation. Returns whether the tolerances were met.
pub(super) fn run<F>(ev: &mut Evaluator<'_, F>, z0: Vec<f64>, f0: f64, cfg: &SearchConfig) -> bool
where
    F: Fn(&[f64]) -> Option<f64> + Sync,
{
    let n = z0.len();
    let mut simplex = vec![z0.clone()];
    for i in 0..n {
        let mut z = z0.clone();
        z[i] += if z[i] + cfg.initial_step <= 1.0 { cfg.initial_step } else { -cfg.initial_step };
        simplex.push(z);
    }
    let mut costs = vec![f0];
    costs.extend(ev.batch(&simplex[1..]));
    if costs.len() < simplex.len() {
        return false;
    }

    loop {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        costs = order.iter().map(|&i| costs[i]).collect();

        let diameter =
            simplex[1..].iter().flat_map(|z| z.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs())).fold(0.0, f64::max);
        let spread = costs[n] - costs[0];
        if diameter <= cfg.x_tolerance && spread <= cfg.f_tolerance * (1.0 + costs[0].abs()) {
            return true;
        }
        if ev.remaining() == 0 {
            return false;
        }
        ev.iteration += 1;

        let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|z| z[j]).sum::<f64>() / n as f64).collect();
        let worst = simplex[n].clone();
        let reflected = toward(&centroid, &worst, -REFLECT);
        let Some(&fr) = ev.batch(std::slice::from_ref(&reflected)).first() else { return false };

        if fr < costs[0] {
            let expanded = toward(&centroid, &worst, -EXPAND);
            let Some(&fe) = ev.batch(std::slice::from_ref(&expanded)).first() else { return false };
            (simplex[n], costs[n]) = if fe < fr { (expanded, fe) } else { (reflected, fr) };
            continue;
        }
        if fr < costs[n - 1] {
            (simplex[n], costs[n]) = (reflected, fr);
            continue;
        }
        let (point, reference) = if fr < costs[n] {
            (toward(&centroid, &reflected, CONTRACT), fr)
        } else {
            (toward(&centroid, &worst, CONTRACT), costs[n])
        };
        let Some(&fc) = ev.batch(std::slice::from_ref(&point)).first() else { return false };
        if fc < reference {
            (simplex[n], costs[n]) = (point, fc);
            continue;
        }

        let shrunk: Vec<Vec<f64>> = simplex[1..].iter().map(|z| toward(&simplex[0], z, SHRINK)).collect();
        let fs = ev.batch(&shrunk);
        for (k, f) in fs.iter().enumerate() {
            simplex[k + 1] = shrunk[k].clone();
            costs[k + 1] = *f;
        }
        if fs.len() < shrunk.len() {
            return false;
        }
    }
}
