use anyhow::{bail, Context, Result};

/// Parses `v` or `lo:hi:steps` (inclusive, evenly spaced).
pub fn parse_values(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').map(str::trim).collect();
    let num = |s: &str| -> Result<f64> {
        let v: f64 = s
            .parse()
            .with_context(|| format!("'{s}' is not a number"))?;
        if !v.is_finite() {
            bail!("'{s}' is not finite");
        }
        Ok(v)
    };
    match parts.as_slice() {
        [v] => Ok(vec![num(v)?]),
        [lo, hi, steps] => {
            let (lo, hi) = (num(lo)?, num(hi)?);
            let n: usize = steps
                .parse()
                .with_context(|| format!("'{steps}' is not a step count"))?;
            match n {
                0 => bail!("range '{spec}' has zero steps"),
                1 if lo != hi => bail!("range '{spec}' needs at least two steps"),
                1 => Ok(vec![lo]),
                _ => Ok((0..n)
                    .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
                    .collect()),
            }
        }
        _ => bail!("expected a value or lo:hi:steps, got '{spec}'"),
    }
}
