use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::radial::BranchPoint;

/// 17 significant digits; round-trips every `f64`.
pub fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}

/// `lambda,sup_u,mu1,iterations,residual`; `mu1` is empty when not computed.
pub fn write_branch_csv(path: &Path, points: &[BranchPoint]) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "lambda,sup_u,mu1,iterations,residual")?;
    for p in points {
        let mu = p.mu1.map(fmt_f).unwrap_or_default();
        writeln!(w, "{},{},{},{},{}", fmt_f(p.lambda), fmt_f(p.sup_u), mu, p.iterations, fmt_f(p.residual))?;
    }
    w.flush()
}

pub fn write_radial_profile(path: &Path, nodes: &[f64], u: &[f64]) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "r,u")?;
    for (r, v) in nodes.iter().zip(u) {
        writeln!(w, "{},{}", fmt_f(*r), fmt_f(*v))?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, 4.444444444444445, 1e-300, -2.5e17] {
            assert_eq!(fmt_f(v).parse::<f64>().unwrap(), v);
        }
    }
}
