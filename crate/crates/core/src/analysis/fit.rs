use std::f64::consts::PI;

use rustfft::{num_complex::Complex, FftPlanner};

use super::lm::{self, LmSolution};
use super::{DecayModel, FitModel, FitResult};
use crate::error::{Error, Result};

fn sigmas_of(sol: &LmSolution) -> Vec<f64> {
    match &sol.covariance {
        Some(c) => (0..sol.params.len()).map(|i| c[(i, i)].max(0.0).sqrt()).collect(),
        None => vec![f64::INFINITY; sol.params.len()],
    }
}

/// Linear least squares of `y ≈ a·basis + c` for a fixed basis.
fn amplitude_offset(basis: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = y.len() as f64;
    let (mb, my) = (basis.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sbb: f64 = basis.iter().map(|b| (b - mb).powi(2)).sum();
    let sby: f64 = basis.iter().zip(y).map(|(b, v)| (b - mb) * (v - my)).sum();
    let a = if sbb > 0.0 { sby / sbb } else { 0.0 };
    let c = my - a * mb;
    let ssr = basis.iter().zip(y).map(|(b, v)| (a * b + c - v).powi(2)).sum();
    (a, c, ssr)
}

/// Fits `A·exp(-(t/T)^n) + c`. The starting point comes from a log-spaced
/// grid over `T` (and `n` for the stretched model) with `A`, `c` solved
/// linearly.
pub fn fit_decay(t: &[f64], y: &[f64], model: DecayModel) -> Result<FitResult> {
    if t.len() != y.len() {
        return Err(Error::Analysis("x and y lengths differ".into()));
    }
    if t.len() < 5 {
        return Err(Error::Analysis(format!("decay fit needs at least 5 points, got {}", t.len())));
    }
    if y.iter().any(|v| !(-0.1..=1.1).contains(v)) {
        return Err(Error::Analysis("decay data outside [-0.1, 1.1]".into()));
    }
    let tmax = t.iter().cloned().fold(0.0, f64::max);
    let tmin = t.iter().cloned().filter(|&v| v > 0.0).fold(f64::INFINITY, f64::min);
    if !(tmax > 0.0) {
        return Err(Error::Analysis("decay fit needs positive delays".into()));
    }
    let exponents: &[f64] = match model {
        DecayModel::GaussianRamsey => &[2.0],
        DecayModel::StretchedHahn => &[1.0, 1.5, 2.0, 2.5, 3.0, 4.0],
    };
    let (lo, hi) = ((tmin / 3.0).ln(), (10.0 * tmax).ln());
    let mut best = (f64::INFINITY, 0.0, 0.0, 0.0, 2.0);
    for &n in exponents {
        for k in 0..80 {
            let ln_t = lo + (hi - lo) * k as f64 / 79.0;
            let big_t = ln_t.exp();
            let basis: Vec<f64> = t.iter().map(|&ti| (-(ti / big_t).powf(n)).exp()).collect();
            let (a, c, ssr) = amplitude_offset(&basis, y);
            if ssr < best.0 {
                best = (ssr, a, ln_t, c, n);
            }
        }
    }
    let (_, a0, ln_t0, c0, n0) = best;
    let sol = match model {
        DecayModel::GaussianRamsey => {
            let f = |p: &[f64], ti: f64| p[0] * (-(ti / p[1].exp()).powi(2)).exp() + p[2];
            lm::solve(&f, &[a0, ln_t0, c0], t, y)
        }
        DecayModel::StretchedHahn => {
            let f = |p: &[f64], ti: f64| p[0] * (-(ti / p[1].exp()).powf(1.0 + p[3] * p[3])).exp() + p[2];
            lm::solve(&f, &[a0, ln_t0, c0, (n0 - 1.0).sqrt().max(0.05)], t, y)
        }
    };
    let s = sigmas_of(&sol);
    let big_t = sol.params[1].exp();
    let mut names = vec!["A".to_owned(), "T".to_owned(), "c".to_owned()];
    let mut values = vec![sol.params[0], big_t, sol.params[2]];
    let mut sigmas = vec![s[0], big_t * s[1], s[2]];
    if model == DecayModel::StretchedHahn {
        let p = sol.params[3];
        names.push("n".to_owned());
        values.push(1.0 + p * p);
        sigmas.push(2.0 * p.abs() * s[3]);
    }
    let identifiable =
        sol.covariance.is_some() && sigmas[1] < big_t && big_t.is_finite() && values[0].abs() > 3.0 * sigmas[0];
    Ok(FitResult {
        model: model.into(),
        names,
        values,
        sigmas,
        residual_norm: sol.residual_norm,
        converged: sol.converged && identifiable,
        iterations: sol.iterations,
    })
}

/// Excited population after a drive of Rabi frequency `f_r`, detuning
/// `delta` and duration `t`.
pub fn rabi_probability(f_r: f64, delta: f64, t: f64) -> f64 {
    let w2 = f_r * f_r + delta * delta;
    if w2 == 0.0 {
        return 0.0;
    }
    f_r * f_r / w2 * (PI * w2.sqrt() * t).sin().powi(2)
}

fn dominant_frequency(samples: &[f64], dt: f64) -> Option<f64> {
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / samples.len() as f64;
    if var < 1e-10 {
        return None;
    }
    let n = (samples.len().next_power_of_two() * 16).max(256);
    let mut buf: Vec<Complex<f64>> = samples.iter().map(|v| Complex::new(v - mean, 0.0)).collect();
    buf.resize(n, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let k = (1..n / 2).max_by(|&a, &b| buf[a].norm().total_cmp(&buf[b].norm()))?;
    Some(k as f64 / (n as f64 * dt))
}

/// Fits the detuned-Rabi formula `A·P(fR, Δ − f0, t) + c` to a chevron grid.
/// `values[i][j]` is the excited probability at `detunings[i]`, `times[j]`.
pub fn fit_chevron(detunings: &[f64], times: &[f64], values: &[Vec<f64>]) -> Result<FitResult> {
    if values.len() != detunings.len() || values.iter().any(|r| r.len() != times.len()) {
        return Err(Error::Analysis("chevron grid shape does not match axes".into()));
    }
    if times.len() < 4 || detunings.is_empty() {
        return Err(Error::Analysis("chevron grid too small".into()));
    }
    let dt = times[1] - times[0];
    if !(dt > 0.0) || times.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-6 * dt) {
        return Err(Error::Analysis("chevron times must be uniformly spaced".into()));
    }
    let center = (0..detunings.len())
        .max_by(|&a, &b| {
            let m = |i: usize| values[i].iter().sum::<f64>();
            m(a).total_cmp(&m(b))
        })
        .unwrap();
    let row = &values[center];
    let f_fft = dominant_frequency(row, dt).ok_or_else(|| Error::Analysis("no Rabi fringe detected".into()))?;
    // refine the frequency on the brightest row before the global fit
    let mut best = (f64::INFINITY, f_fft, 1.0, 0.0);
    for k in 0..=200 {
        let f = f_fft * (0.5 + k as f64 / 200.0);
        let basis: Vec<f64> = times.iter().map(|&t| rabi_probability(f, 0.0, t)).collect();
        let (a, c, ssr) = amplitude_offset(&basis, row);
        if ssr < best.0 {
            best = (ssr, f, a, c);
        }
    }
    let (_, f_init, a_init, c_init) = best;
    // dimensionless units: frequencies in f_init, times in 1/f_init
    let n_t = times.len();
    let x: Vec<f64> = (0..detunings.len() * n_t).map(|k| k as f64).collect();
    let y: Vec<f64> = values.iter().flatten().cloned().collect();
    let model = |p: &[f64], k: f64| {
        let k = k as usize;
        let (i, j) = (k / n_t, k % n_t);
        p[2] * rabi_probability(p[0], detunings[i] / f_init - p[1], times[j] * f_init) + p[3]
    };
    let sol = lm::solve(&model, &[1.0, detunings[center] / f_init, a_init, c_init], &x, &y);
    let s = sigmas_of(&sol);
    let p = &sol.params;
    Ok(FitResult {
        model: FitModel::Chevron,
        names: ["fR", "f0", "A", "c"].map(String::from).to_vec(),
        values: vec![p[0].abs() * f_init, p[1] * f_init, p[2], p[3]],
        sigmas: vec![s[0] * f_init, s[1] * f_init, s[2], s[3]],
        residual_norm: sol.residual_norm,
        converged: sol.converged && sol.covariance.is_some(),
        iterations: sol.iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_sigma: f64,
    pub intercept_sigma: f64,
    pub residual_norm: f64,
}

/// Ordinary least squares `y = slope·x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let n = x.len();
    if n != y.len() || n < 2 {
        return Err(Error::Analysis("linear fit needs at least 2 paired points".into()));
    }
    let nf = n as f64;
    let (mx, my) = (x.iter().sum::<f64>() / nf, y.iter().sum::<f64>() / nf);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Analysis("linear fit needs distinct x values".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = x.iter().zip(y).map(|(a, b)| (slope * a + intercept - b).powi(2)).sum();
    let s2 = if n > 2 { ssr / (nf - 2.0) } else { 0.0 };
    Ok(LinearFit {
        slope,
        intercept,
        slope_sigma: (s2 / sxx).sqrt(),
        intercept_sigma: (s2 * (1.0 / nf + mx * mx / sxx)).sqrt(),
        residual_norm: ssr.sqrt(),
    })
}

/// Regression of `log10(freq)` on `vj`. Reports `slope` (decades/V),
/// `intercept` (log10 Hz at 0 V) and `v0`, the voltage where the fitted
/// frequency is 1 Hz. Non-positive frequencies are dropped.
pub fn fit_turnon(vj: &[f64], freq: &[f64]) -> Result<FitResult> {
    if vj.len() != freq.len() {
        return Err(Error::Analysis("vj and frequency lengths differ".into()));
    }
    let (x, y): (Vec<f64>, Vec<f64>) = vj
        .iter()
        .zip(freq)
        .filter(|(v, f)| v.is_finite() && f.is_finite() && **f > 0.0)
        .map(|(&v, &f)| (v, f.log10()))
        .unzip();
    if x.len() < 3 {
        return Err(Error::Analysis(format!("turn-on fit needs 3 positive frequencies, got {}", x.len())));
    }
    let l = linear_fit(&x, &y)?;
    let v0 = -l.intercept / l.slope;
    let v0_sigma = if l.slope != 0.0 {
        (l.intercept_sigma.powi(2) / l.slope.powi(2) + (l.intercept * l.slope_sigma).powi(2) / l.slope.powi(4)).sqrt()
    } else {
        f64::INFINITY
    };
    Ok(FitResult {
        model: FitModel::TurnOn,
        names: ["slope", "intercept", "v0"].map(String::from).to_vec(),
        values: vec![l.slope, l.intercept, v0],
        sigmas: vec![l.slope_sigma, l.intercept_sigma, v0_sigma],
        residual_norm: l.residual_norm,
        converged: true,
        iterations: 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, stop: f64) -> Vec<f64> {
        (0..n).map(|i| stop * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn noiseless_gaussian_decay() {
        let t = grid(30, 100e-6);
        let y: Vec<f64> = t.iter().map(|&v| (-(v / 41e-6).powi(2)).exp()).collect();
        let f = fit_decay(&t, &y, DecayModel::GaussianRamsey).unwrap();
        assert!(f.converged);
        assert!((f.value("T") / 41e-6 - 1.0).abs() < 1e-6, "{}", f.value("T"));
    }

    #[test]
    fn noiseless_stretched_decay() {
        let t = grid(25, 3e-3);
        let y: Vec<f64> = t.iter().map(|&v| 0.9 * (-(v / 1.31e-3).powf(1.7)).exp() + 0.05).collect();
        let f = fit_decay(&t, &y, DecayModel::StretchedHahn).unwrap();
        assert!(f.converged);
        assert!((f.value("T") / 1.31e-3 - 1.0).abs() < 1e-6);
        assert!((f.value("n") - 1.7).abs() < 1e-5);
    }

    #[test]
    fn constant_data_is_unidentifiable() {
        let t = grid(10, 1e-4);
        let f = fit_decay(&t, &[0.5; 10], DecayModel::GaussianRamsey).unwrap();
        assert!(!f.converged);
        assert!(f.value("A").abs() < 1e-9);
    }

    #[test]
    fn too_few_points_rejected() {
        assert!(fit_decay(&[0.0, 1.0], &[1.0, 0.5], DecayModel::GaussianRamsey).is_err());
    }

    #[test]
    fn turnon_exact_and_flat() {
        let v: Vec<f64> = (0..6).map(|i| 0.9 + 0.01 * i as f64).collect();
        let f: Vec<f64> = v.iter().map(|x| 1e5 * 10f64.powf(33.69 * (x - 0.9))).collect();
        let r = fit_turnon(&v, &f).unwrap();
        assert!((r.value("slope") - 33.69).abs() < 1e-9);
        let flat = fit_turnon(&v, &[3e5; 6]).unwrap();
        assert!(flat.value("slope").abs() < 1e-9);
        assert!(fit_turnon(&v[..3], &[1.0, 0.0, -1.0]).is_err());
    }

    #[test]
    fn noiseless_chevron_recovery() {
        let fr = 141e3;
        let det: Vec<f64> = (0..21).map(|i| -400e3 + 40e3 * i as f64).collect();
        let times = grid(41, 20e-6);
        let values: Vec<Vec<f64>> =
            det.iter().map(|&d| times.iter().map(|&t| rabi_probability(fr, d - 5e3, t)).collect()).collect();
        let f = fit_chevron(&det, &times, &values).unwrap();
        assert!(f.converged);
        assert!((f.value("fR") / fr - 1.0).abs() < 5e-3);
        assert!((f.value("f0") - 5e3).abs() < 100.0);
    }

    #[test]
    fn flat_chevron_has_no_fringe() {
        let times = grid(10, 1e-5);
        assert!(fit_chevron(&[0.0], &times, &[vec![0.2; 10]]).is_err());
    }
}
