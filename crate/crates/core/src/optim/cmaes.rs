use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Evaluator, SearchConfig};

/// (mu/mu_w, lambda) CMA-ES on the unit box with rank-one and rank-mu
/// covariance updates. Samples are projected onto the box, and the update
/// uses the projected steps.
pub(super) fn run<F>(ev: &mut Evaluator<'_, F>, z0: Vec<f64>, cfg: &SearchConfig) -> bool
where
    F: Fn(&[f64]) -> Option<f64> + Sync,
{
    let n = z0.len();
    let nf = n as f64;
    let lambda = cfg.population.unwrap_or(4 + (3.0 * nf.ln()).floor() as usize).max(2);
    let mu = lambda / 2;
    let raw: Vec<f64> = (0..mu).map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - ((i + 1) as f64).ln()).collect();
    let total: f64 = raw.iter().sum();
    let w: Vec<f64> = raw.iter().map(|r| r / total).collect();
    let mu_eff = 1.0 / w.iter().map(|x| x * x).sum::<f64>();

    let cc = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
    let cs = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
    let c1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
    let cmu = (1.0 - c1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
    let damps = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + cs;
    let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut mean = DVector::from_vec(z0);
    let mut sigma = cfg.initial_step;
    let mut c = DMatrix::<f64>::identity(n, n);
    let mut b = DMatrix::<f64>::identity(n, n);
    let mut d = DVector::<f64>::from_element(n, 1.0);
    let mut pc = DVector::<f64>::zeros(n);
    let mut ps = DVector::<f64>::zeros(n);

    loop {
        if ev.remaining() == 0 {
            return false;
        }
        ev.iteration += 1;
        let gen = ev.iteration as f64;

        let mut points = Vec::with_capacity(lambda);
        let mut steps = Vec::with_capacity(lambda);
        for _ in 0..lambda {
            let g = DVector::<f64>::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
            let z = (&mean + sigma * (&b * d.component_mul(&g))).map(|v| v.clamp(0.0, 1.0));
            steps.push((&z - &mean) / sigma);
            points.push(z.as_slice().to_vec());
        }
        let costs = ev.batch(&points);
        if costs.len() < lambda {
            return false;
        }
        let mut order: Vec<usize> = (0..lambda).collect();
        order.sort_by(|&i, &j| costs[i].total_cmp(&costs[j]));

        let y_w: DVector<f64> = order[..mu].iter().zip(&w).map(|(&i, wi)| *wi * &steps[i]).sum();
        mean += sigma * &y_w;

        let inv_sqrt = &b * DMatrix::from_diagonal(&d.map(|v| 1.0 / v)) * b.transpose();
        ps = (1.0 - cs) * &ps + (cs * (2.0 - cs) * mu_eff).sqrt() * (&inv_sqrt * &y_w);
        let hsig = ps.norm() / (1.0 - (1.0 - cs).powf(2.0 * gen)).sqrt() / chi_n < 1.4 + 2.0 / (nf + 1.0);
        pc = (1.0 - cc) * &pc + f64::from(u8::from(hsig)) * (cc * (2.0 - cc) * mu_eff).sqrt() * &y_w;

        let mut rank_mu = DMatrix::<f64>::zeros(n, n);
        for (&i, wi) in order[..mu].iter().zip(&w) {
            rank_mu += *wi * &steps[i] * steps[i].transpose();
        }
        let correction = if hsig { 0.0 } else { c1 * cc * (2.0 - cc) };
        c = (1.0 - c1 - cmu + correction) * &c + c1 * &pc * pc.transpose() + cmu * rank_mu;
        c = 0.5 * (&c + c.transpose());
        sigma *= ((cs / damps) * (ps.norm() / chi_n - 1.0)).exp();
        sigma = sigma.min(1.0);

        let eig = c.clone().symmetric_eigen();
        b = eig.eigenvectors;
        d = eig.eigenvalues.map(|v| v.max(1e-30).sqrt());

        let spread = costs[order[lambda - 1]] - costs[order[0]];
        let step = sigma * d.max();
        if step <= cfg.x_tolerance && spread <= cfg.f_tolerance * (1.0 + costs[order[0]].abs()) {
            return true;
        }
    }
}
