use crate::error::{Error, Result};
use serde::Serialize;

/// A Monte-Carlo estimate and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metric {
    pub value: f64,
    pub mc_se: f64,
}

fn nonempty<T>(what: &str, xs: &[T]) -> Result<()> {
    if xs.is_empty() {
        Err(Error::Invalid(format!("{what}: no replicates")))
    } else {
        Ok(())
    }
}

fn mean_and_se(xs: &[f64]) -> Metric {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Metric {
        value: mean,
        mc_se: (var / n).sqrt(),
    }
}

/// mean(estimates) - truth.
pub fn bias(estimates: &[f64], truth: f64) -> Result<Metric> {
    nonempty("bias", estimates)?;
    let m = mean_and_se(estimates);
    Ok(Metric {
        value: m.value - truth,
        mc_se: m.mc_se,
    })
}

/// Mean squared deviation from the truth.
pub fn mse(estimates: &[f64], truth: f64) -> Result<Metric> {
    nonempty("mse", estimates)?;
    let sq: Vec<f64> = estimates.iter().map(|e| (e - truth).powi(2)).collect();
    Ok(mean_and_se(&sq))
}

/// Share of `true` entries. The binomial standard error uses p̂, or
/// (x + ½)/(R + 1) when p̂ is 0 or 1 so the error stays positive.
pub fn proportion(hits: &[bool]) -> Result<Metric> {
    nonempty("proportion", hits)?;
    let r = hits.len() as f64;
    let x = hits.iter().filter(|h| **h).count() as f64;
    let p = x / r;
    let p_se = if x == 0.0 || x == r {
        (x + 0.5) / (r + 1.0)
    } else {
        p
    };
    Ok(Metric {
        value: p,
        mc_se: (p_se * (1.0 - p_se) / r).sqrt(),
    })
}

/// Fraction of intervals containing the truth.
pub fn coverage(contains: &[bool]) -> Result<Metric> {
    proportion(contains)
}

/// MSE(a) / MSE(b) over paired replicates, delta-method standard error.
pub fn mse_ratio(a: &[f64], b: &[f64], truth: f64) -> Result<Metric> {
    nonempty("mse_ratio", a)?;
    if a.len() != b.len() {
        return Err(Error::Invalid("mse_ratio: unpaired replicates".into()));
    }
    let sa: Vec<f64> = a.iter().map(|x| (x - truth).powi(2)).collect();
    let sb: Vec<f64> = b.iter().map(|x| (x - truth).powi(2)).collect();
    let n = sa.len() as f64;
    let ma = sa.iter().sum::<f64>() / n;
    let mb = sb.iter().sum::<f64>() / n;
    if !(mb > 0.0) {
        return Err(Error::Degenerate("mse_ratio: reference MSE is zero".into()));
    }
    let ratio = ma / mb;
    let mc_se = if sa.len() > 1 {
        let lin: Vec<f64> = sa.iter().zip(&sb).map(|(x, y)| x - ratio * y).collect();
        let var = lin.iter().map(|l| l * l).sum::<f64>() / (n - 1.0);
        (var / n).sqrt() / mb
    } else {
        0.0
    };
    Ok(Metric {
        value: ratio,
        mc_se,
    })
}
