use super::distributions::student_t_two_sided;
use super::{mean_var, SampleVector, StatTestResult, StatsError, TestKind};

/// Smallest positive double; the p-value reported for a separation that the
/// t statistic cannot express (zero variance on both sides, different means).
const SMALLEST_P: f64 = f64::from_bits(1);

fn require_len(x: &SampleVector, min: usize) -> Result<(), StatsError> {
    if x.len() < min {
        return Err(StatsError::UnsupportedSize {
            label: x.label().to_string(),
            n: x.len(),
            min,
            max: usize::MAX,
        });
    }
    Ok(())
}

/// Paired two-sided t-test on `d = x - y`, pairing by position.
pub fn paired_t_test(x: &SampleVector, y: &SampleVector) -> Result<StatTestResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::UnpairedInput {
            left: x.len(),
            right: y.len(),
        });
    }
    require_len(x, 2)?;
    let n = x.len();
    let diffs: Vec<f64> = x
        .values()
        .iter()
        .zip(y.values())
        .map(|(a, b)| a - b)
        .collect();
    let (mean, var) = mean_var(&diffs);
    let df = (n - 1) as f64;
    if var == 0.0 {
        if mean == 0.0 {
            return Ok(StatTestResult::t_test(
                TestKind::PairedT,
                0.0,
                df,
                1.0,
                vec![n, n],
            ));
        }
        return Err(StatsError::DegenerateDifference(mean));
    }
    let t = mean / (var.sqrt() / (n as f64).sqrt());
    let p = student_t_two_sided(t, df);
    Ok(StatTestResult::t_test(
        TestKind::PairedT,
        t,
        df,
        p,
        vec![n, n],
    ))
}

/// Welch's unequal-variance two-sided t-test with Welch–Satterthwaite degrees
/// of freedom.
pub fn welch_t_test(x: &SampleVector, y: &SampleVector) -> Result<StatTestResult, StatsError> {
    require_len(x, 2)?;
    require_len(y, 2)?;
    let (nx, ny) = (x.len() as f64, y.len() as f64);
    let (mx, vx) = x.mean_var();
    let (my, vy) = y.mean_var();
    let sizes = vec![x.len(), y.len()];
    let (sx, sy) = (vx / nx, vy / ny);
    let se2 = sx + sy;
    if se2 == 0.0 {
        let df = nx + ny - 2.0;
        if mx == my {
            return Ok(StatTestResult::t_test(
                TestKind::WelchT,
                0.0,
                df,
                1.0,
                sizes,
            ));
        }
        let t = if mx > my {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        };
        let mut r = StatTestResult::t_test(TestKind::WelchT, t, df, SMALLEST_P, sizes);
        r.degenerate = true;
        return Ok(r);
    }
    let t = (mx - my) / se2.sqrt();
    let df = se2 * se2 / (sx * sx / (nx - 1.0) + sy * sy / (ny - 1.0));
    let p = student_t_two_sided(t, df);
    Ok(StatTestResult::t_test(TestKind::WelchT, t, df, p, sizes))
}
