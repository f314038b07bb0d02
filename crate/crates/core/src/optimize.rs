//! Derivative-free minimisation (Nelder–Mead) used by the discord and QCP
//! optimisers.

/// Stopping rules for [`nelder_mead`].
#[derive(Clone, Copy, Debug)]
pub struct NmOptions {
    pub max_iters: usize,
    /// Simplex diameter below which the search stops.
    pub xtol: f64,
    /// Spread of function values below which the search stops.
    pub ftol: f64,
    /// Edge length of the initial simplex.
    pub step: f64,
}

impl Default for NmOptions {
    fn default() -> Self {
        NmOptions {
            max_iters: 2000,
            xtol: 1e-7,
            ftol: 1e-12,
            step: 0.3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct NmResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Standard Nelder–Mead with reflection 1, expansion 2, contraction ½ and
/// shrink ½.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], opts: &NmOptions) -> NmResult
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    if n == 0 {
        return NmResult {
            x: Vec::new(),
            value: f(x0),
            iterations: 0,
            converged: true,
        };
    }
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += opts.step;
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| f(p)).collect();

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iters {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let diameter = simplex[1..]
            .iter()
            .map(|p| {
                p.iter()
                    .zip(&simplex[0])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if diameter <= opts.xtol || (values[n] - values[0]).abs() <= opts.ftol {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for p in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(p) {
                *c += x / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };

        let xr = along(-1.0);
        let fr = f(&xr);
        if fr < values[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[n] {
            let xc = along(-0.5);
            let fc = f(&xc);
            (xc, fc.min(fr).max(fc))
        } else {
            let xc = along(0.5);
            let fc = f(&xc);
            (xc, fc)
        };
        if fc < values[n].min(fr) {
            simplex[n] = xc;
            values[n] = fc;
            continue;
        }
        let best = simplex[0].clone();
        for i in 1..=n {
            for (x, b) in simplex[i].iter_mut().zip(&best) {
                *x = b + 0.5 * (*x - b);
            }
            values[i] = f(&simplex[i]);
        }
    }

    let best = (0..=n)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap();
    NmResult {
        x: simplex[best].clone(),
        value: values[best],
        iterations,
        converged,
    }
}

/// Index of the smallest value; ties go to the lowest index so that merged
/// parallel restarts do not depend on scheduling.
pub fn argmin_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        match best {
            Some(b) if values[b] <= *v => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Index of the largest value with the same tie rule as [`argmin_first`].
pub fn argmax_first(values: &[f64]) -> Option<usize> {
    let neg: Vec<f64> = values.iter().map(|v| -v).collect();
    argmin_first(&neg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimises_rosenbrock() {
        let rosen = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let opts = NmOptions {
            max_iters: 5000,
            xtol: 1e-10,
            ftol: 1e-20,
            step: 0.5,
        };
        let r = nelder_mead(rosen, &[-1.2, 1.0], &opts);
        assert!(r.converged);
        assert!(
            (r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6,
            "{:?}",
            r.x
        );
    }

    #[test]
    fn minimises_quadratic_in_five_dims() {
        let target = [0.3, -1.0, 2.0, 0.0, 0.7];
        let f = |x: &[f64]| {
            x.iter()
                .zip(&target)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        };
        let r = nelder_mead(f, &[0.0; 5], &NmOptions::default());
        assert!(r.value < 1e-10);
    }

    #[test]
    fn argmin_ties_go_low() {
        assert_eq!(argmin_first(&[3.0, 1.0, 1.0, 2.0]), Some(1));
        assert_eq!(argmax_first(&[3.0, 1.0, 3.0]), Some(0));
        assert_eq!(argmin_first(&[f64::NAN, 2.0]), Some(1));
        assert_eq!(argmin_first(&[]), None);
    }
}
