// Shapiro-Wilk W test, Royston's algorithm AS R94 (Applied Statistics 44,
// 1995), following the structure of the reference Fortran/C swilk routine.

use super::distributions::{normal_quantile, normal_sf};
use super::{SampleVector, StatTestResult, StatsError, TestKind};

const MIN_N: usize = 3;
const MAX_N: usize = 5000;
const SMALL: f64 = 1e-19;

const G: [f64; 2] = [-2.273, 0.459];
const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056];
const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
const C3: [f64; 4] = [0.544, -0.39978, 0.025054, -6.714e-4];
const C4: [f64; 4] = [1.3822, -0.77857, 0.062767, -0.0020322];
const C5: [f64; 4] = [-1.5861, -0.31082, -0.083751, 0.0038915];
const C6: [f64; 3] = [-0.4803, -0.082676, 0.0030302];

fn poly(cc: &[f64], x: f64) -> f64 {
    let mut ret = cc[0];
    if cc.len() > 1 {
        let mut p = x * cc[cc.len() - 1];
        for &c in cc[1..cc.len() - 1].iter().rev() {
            p = (p + c) * x;
        }
        ret += p;
    }
    ret
}

/// Half-vector of normalized coefficients, 1-based (`a[0]` unused).
fn coefficients(n: usize) -> Vec<f64> {
    let nn2 = n / 2;
    let mut a = vec![0.0; nn2 + 1];
    if n == 3 {
        a[1] = std::f64::consts::FRAC_1_SQRT_2;
        return a;
    }
    let an = n as f64;
    let an25 = an + 0.25;
    let mut summ2 = 0.0;
    for (i, ai) in a.iter_mut().enumerate().skip(1) {
        *ai = normal_quantile((i as f64 - 0.375) / an25);
        summ2 += *ai * *ai;
    }
    summ2 *= 2.0;
    let ssumm2 = summ2.sqrt();
    let rsn = 1.0 / an.sqrt();
    let a1 = poly(&C1, rsn) - a[1] / ssumm2;

    let (first_scaled, fac) = if n > 5 {
        let a2 = -a[2] / ssumm2 + poly(&C2, rsn);
        let fac = ((summ2 - 2.0 * a[1] * a[1] - 2.0 * a[2] * a[2])
            / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2))
            .sqrt();
        a[2] = a2;
        (3, fac)
    } else {
        let fac = ((summ2 - 2.0 * a[1] * a[1]) / (1.0 - 2.0 * a1 * a1)).sqrt();
        (2, fac)
    };
    a[1] = a1;
    for ai in a.iter_mut().skip(first_scaled) {
        *ai /= -fac;
    }
    a
}

fn sign(d: isize) -> f64 {
    (d.signum()) as f64
}

/// W and its p-value for sorted input with non-zero range.
fn swilk(x: &[f64]) -> (f64, f64) {
    let n = x.len();
    let a = coefficients(n);
    let range = x[n - 1] - x[0];

    let mut sx = x[0] / range;
    let mut sa = -a[1];
    let mut j = n as isize - 1;
    for (idx, xv) in x.iter().enumerate().skip(1) {
        sx += xv / range;
        let i = idx as isize + 1;
        if i != j {
            sa += sign(i - j) * a[i.min(j) as usize];
        }
        j -= 1;
    }
    sa /= n as f64;
    sx /= n as f64;

    let (mut ssa, mut ssx, mut sax) = (0.0, 0.0, 0.0);
    for (i, xv) in x.iter().enumerate() {
        let j = n - 1 - i;
        let asa = if i != j {
            sign(i as isize - j as isize) * a[1 + i.min(j)] - sa
        } else {
            -sa
        };
        let xsx = xv / range - sx;
        ssa += asa * asa;
        ssx += xsx * xsx;
        sax += asa * xsx;
    }

    // w1 = 1 - W, computed this way to limit rounding for W near 1
    let ssassx = (ssa * ssx).sqrt();
    let w1 = (ssassx - sax) * (ssassx + sax) / (ssa * ssx);
    let w = 1.0 - w1;

    if n == 3 {
        // 6/pi * (asin(sqrt(w)) - asin(sqrt(3/4)))
        let pw = 6.0 / std::f64::consts::PI * (w.sqrt().asin() - std::f64::consts::FRAC_PI_3);
        return (w, pw.clamp(0.0, 1.0));
    }

    let an = n as f64;
    let mut y = w1.ln();
    let (m, s) = if n <= 11 {
        let gamma = poly(&G, an);
        if y >= gamma {
            return (w, 1e-99);
        }
        y = -(gamma - y).ln();
        (poly(&C3, an), poly(&C4, an).exp())
    } else {
        let xx = an.ln();
        (poly(&C5, xx), poly(&C6, xx).exp())
    };
    (w, normal_sf((y - m) / s))
}

/// Shapiro-Wilk normality test for 3 ≤ n ≤ 5000.
///
/// The statistic W lies in (0, 1]; values near 1 are consistent with a normal
/// sample. The p-value uses Royston's normalizing transformation of W.
pub fn shapiro_wilk(sample: &SampleVector) -> Result<StatTestResult, StatsError> {
    let n = sample.len();
    if !(MIN_N..=MAX_N).contains(&n) {
        return Err(StatsError::UnsupportedSize {
            label: sample.label().to_string(),
            n,
            min: MIN_N,
            max: MAX_N,
        });
    }
    let mut sorted = sample.values().to_vec();
    sorted.sort_by(f64::total_cmp);
    let range = sorted[n - 1] - sorted[0];
    let scale = sorted[n - 1].abs().max(sorted[0].abs());
    if range <= SMALL || range <= scale * 1e-14 {
        return Err(StatsError::DegenerateSample(sample.label().to_string()));
    }
    let (w, p) = swilk(&sorted);
    Ok(StatTestResult {
        test: TestKind::ShapiroWilk,
        statistic: w,
        p_value: p,
        n: vec![n],
        df: None,
        significant: None,
        degenerate: false,
    })
}
