//! `--grid` parsing and the flat CSV layout of phase rows.

use anyhow::{anyhow, bail, Context};
use decilab_core::harness::{self, HarnessError};
use decilab_core::phase::{PhaseRow, Regime};
use serde::Serialize;

#[derive(Debug, Default, PartialEq)]
pub struct Axes {
    pub rho: Option<Vec<f64>>,
    pub theta: Option<Vec<f64>>,
}

/// Inclusive range `a:b:s`; a bare number is a single point.
fn range(text: &str) -> anyhow::Result<Vec<f64>> {
    let parts: Vec<f64> = text
        .split(':')
        .map(|p| p.trim().parse::<f64>().with_context(|| format!("bad number {p:?}")))
        .collect::<anyhow::Result<_>>()?;
    match parts[..] {
        [x] => Ok(vec![x]),
        [a, b, s] => {
            if !(s > 0.0) || !(b >= a) || !a.is_finite() || !b.is_finite() {
                bail!("range {text:?} needs a <= b and step > 0");
            }
            let count = ((b - a) / s + 1e-9).floor() as usize + 1;
            if count > 1_000_000 {
                bail!("range {text:?} has {count} points");
            }
            // Snap to 12 decimals so `0.1 + 2·0.1` prints as 0.3.
            Ok((0..count).map(|i| ((a + i as f64 * s) * 1e12).round() / 1e12).collect())
        }
        _ => bail!("range {text:?} is not of the form a:b:s"),
    }
}

pub fn parse(text: &str) -> anyhow::Result<Axes> {
    let mut axes = Axes::default();
    for item in text.split(',').filter(|s| !s.trim().is_empty()) {
        let (name, spec) = item.split_once('=').ok_or_else(|| anyhow!("grid axis {item:?} lacks '='"))?;
        let slot = match name.trim() {
            "rho" => &mut axes.rho,
            "theta" => &mut axes.theta,
            other => bail!("unknown grid axis {other:?}"),
        };
        if slot.is_some() {
            bail!("grid axis {name:?} given twice");
        }
        *slot = Some(range(spec)?);
    }
    Ok(axes)
}

#[derive(Serialize)]
struct FlatRow {
    k: usize,
    rho: f64,
    theta: f64,
    k_theta: f64,
    regime: String,
    symmetric_lower: Option<f64>,
    symmetric_upper: Option<f64>,
    symmetric: bool,
    shattered_lower: Option<f64>,
    shattered_upper: Option<f64>,
    shattered: bool,
    condensed_lower: Option<f64>,
    condensed_upper: Option<f64>,
    condensed: bool,
    forced_lower: Option<f64>,
    forced_upper: Option<f64>,
    forced: bool,
    bp_mismatch_lower: Option<f64>,
    bp_mismatch_upper: Option<f64>,
    bp_mismatch: bool,
    mu: Option<f64>,
    zeta_apx: Option<f64>,
    lambda: Option<f64>,
    gamma: Option<f64>,
    b: Option<f64>,
    rand_poisson_lhs: Option<f64>,
    rand_poisson: Option<bool>,
    count_undecimated: f64,
    count_decimated: f64,
    count_in_range: bool,
}

impl FlatRow {
    fn new(row: &PhaseRow) -> Self {
        let v = &row.verdict;
        let c = |r: Regime| v.check(r);
        let regime = if v.labels.is_empty() {
            Regime::Unclassified.name().to_string()
        } else {
            v.labels.iter().map(|r| r.name()).collect::<Vec<_>>().join("|")
        };
        let mc = row.constants.as_ref();
        Self {
            k: v.point.k,
            rho: v.point.rho,
            theta: v.point.theta,
            k_theta: v.point.k_theta(),
            regime,
            symmetric_lower: c(Regime::Symmetric).lower,
            symmetric_upper: c(Regime::Symmetric).upper,
            symmetric: c(Regime::Symmetric).holds,
            shattered_lower: c(Regime::Shattered).lower,
            shattered_upper: c(Regime::Shattered).upper,
            shattered: c(Regime::Shattered).holds,
            condensed_lower: c(Regime::Condensed).lower,
            condensed_upper: c(Regime::Condensed).upper,
            condensed: c(Regime::Condensed).holds,
            forced_lower: c(Regime::Forced).lower,
            forced_upper: c(Regime::Forced).upper,
            forced: c(Regime::Forced).holds,
            bp_mismatch_lower: c(Regime::BPMismatch).lower,
            bp_mismatch_upper: c(Regime::BPMismatch).upper,
            bp_mismatch: c(Regime::BPMismatch).holds,
            mu: mc.map(|m| m.mu),
            zeta_apx: mc.map(|m| m.zeta_apx),
            lambda: mc.map(|m| m.lambda),
            gamma: mc.map(|m| m.gamma),
            b: mc.map(|m| m.b),
            rand_poisson_lhs: mc.and_then(|m| m.rand_poisson_lhs),
            rand_poisson: mc.map(|m| m.rand_poisson),
            count_undecimated: row.counts.undecimated,
            count_decimated: row.counts.decimated,
            count_in_range: row.counts.in_range,
        }
    }
}

pub fn to_csv(rows: &[&PhaseRow]) -> Result<String, HarnessError> {
    let flat: Vec<FlatRow> = rows.iter().map(|r| FlatRow::new(r)).collect();
    harness::to_csv(&flat)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_are_inclusive() {
        let a = parse("rho=2:3:0.5,theta=0.1:0.3:0.1").unwrap();
        assert_eq!(a.rho.unwrap(), vec![2.0, 2.5, 3.0]);
        assert_eq!(a.theta.unwrap().len(), 3);
        assert_eq!(parse("theta=0.5").unwrap().theta, Some(vec![0.5]));
    }

    #[test]
    fn bad_grids_are_rejected() {
        for g in ["rho=1:0:1", "rho=1:2:0", "k=1:2:1", "rho", "rho=1:2", "rho=1,rho=2"] {
            assert!(parse(g).is_err(), "{g}");
        }
    }
}
