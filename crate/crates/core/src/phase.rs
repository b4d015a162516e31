//! Closed-form rate functions, moment constants and the regime classifier.
//!
//! Densities use `r = m/n` and the rescaled `ρ = k·r/2^k`; `θ = 1 − t/n` is
//! the fraction of free variables. The regime inequalities are all stated on
//! `kθ`.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhaseError {
    #[error("{name} = {value} is outside its domain {domain}")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },
}

fn domain(name: &'static str, value: f64, domain: &'static str) -> PhaseError {
    PhaseError::Domain {
        name,
        value,
        domain,
    }
}

/// `r = ρ·2^k/k`.
pub fn r_from_rho(k: usize, rho: f64) -> f64 {
    rho * 2f64.powi(k as i32) / k as f64
}

/// `ρ = k·r/2^k`.
pub fn rho_from_r(k: usize, r: f64) -> f64 {
    k as f64 * r / 2f64.powi(k as i32)
}

/// `h(x) = −x ln x − (1−x) ln(1−x)` on `[0,1]`, with `h(0) = h(1) = 0`.
pub fn entropy_h(x: f64) -> Result<f64, PhaseError> {
    if !(0.0..=1.0).contains(&x) {
        return Err(domain("x", x, "[0, 1]"));
    }
    let t = |p: f64| if p == 0.0 { 0.0 } else { -p * p.ln() };
    Ok(t(x) + t(1.0 - x))
}

/// `φ(x) = (1+x) ln(1+x) − x` for `x ≥ −1`, with `φ(−1) = 1`.
pub fn chernoff_phi(x: f64) -> Result<f64, PhaseError> {
    if x.is_nan() || x < -1.0 {
        return Err(domain("x", x, "[-1, inf)"));
    }
    if x == -1.0 {
        return Ok(1.0);
    }
    Ok((1.0 + x) * x.ln_1p() - x)
}

/// `ln(1 − (1 − (1−s)^k)/(2^k − 1))` for `s ∈ [0, 1]`.
fn clause_log_factor(s: f64, k: usize) -> f64 {
    let one_minus_q = -(k as f64 * (-s).ln_1p()).exp_m1();
    (-one_minus_q / (2f64.powi(k as i32) - 1.0)).ln_1p()
}

/// `ψ(α) = −αθ ln α − (1−α)θ ln(1−α) + r ln(1 − (1−(1−αθ)^k)/(2^k−1))`.
///
/// Defined for `α ∈ [0,1]` with `αθ ≤ 1`, using the continuous extension at
/// the endpoints. `θ` may exceed 1 as long as `αθ ≤ 1`.
pub fn psi(alpha: f64, theta: f64, k: usize, r: f64) -> Result<f64, PhaseError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(domain("alpha", alpha, "[0, 1]"));
    }
    if theta.is_nan() || theta <= 0.0 {
        return Err(domain("theta", theta, "(0, inf)"));
    }
    if alpha * theta > 1.0 {
        return Err(domain("alpha*theta", alpha * theta, "[0, 1]"));
    }
    if k < 1 {
        return Err(domain("k", k as f64, "[1, inf)"));
    }
    Ok(theta * entropy_h(alpha)? + r * clause_log_factor(alpha * theta, k))
}

/// Log of the first-moment bound on `X_α` and related quantities at finite `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstMomentBound {
    /// Distance `j = round(αθn)` actually used.
    pub j: usize,
    /// `ln C(θn, j) + m·ln(1 − (1 − (1−j/n)^k)/(2^k−1))`.
    pub log_bound: f64,
    /// Same with the exact probability `C(n−j,k)/C(n,k)` in place of `(1−j/n)^k`;
    /// the log of `E X_j` in the planted model with replacement.
    pub log_exact: f64,
    /// `ψ(j/(θn))` and `n·ψ` for comparison.
    pub psi: f64,
    pub n_psi: f64,
}

pub fn first_moment_bound(
    alpha: f64,
    theta: f64,
    k: usize,
    n: usize,
    m: usize,
) -> Result<FirstMomentBound, PhaseError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(domain("alpha", alpha, "[0, 1]"));
    }
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(domain("theta", theta, "(0, 1]"));
    }
    if n < k {
        return Err(domain("n", n as f64, "[k, inf)"));
    }
    let free = (theta * n as f64).round() as u64;
    let j = (alpha * free as f64).round() as u64;
    let ln_choose = statrs::function::factorial::ln_binomial(free, j);
    let s = j as f64 / n as f64;
    let log_bound = ln_choose + m as f64 * clause_log_factor(s, k);
    let keep: f64 = (0..k)
        .map(|i| (n as f64 - j as f64 - i as f64).max(0.0) / (n - i) as f64)
        .product();
    let log_exact = ln_choose + m as f64 * (-(1.0 - keep) / (2f64.powi(k as i32) - 1.0)).ln_1p();
    let a = if free == 0 { 0.0 } else { j as f64 / free as f64 };
    let r = m as f64 / n as f64;
    let p = psi(a, free as f64 / n as f64, k, r)?;
    Ok(FirstMomentBound {
        j: j as usize,
        log_bound,
        log_exact,
        psi: p,
        n_psi: n as f64 * p,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountBounds {
    /// `ln 2 + r ln(1−2^{−k}) − 0.99ρ/2^k`, lower bound on `(1/n) ln |S(Φ)|`.
    pub undecimated: f64,
    /// `θ ln 2 + r ln(1−2^{−k}) − kr/4^k`, lower bound on `(1/n) ln |S(Φ_t)|`.
    pub decimated: f64,
    pub in_range: bool,
    pub warning: Option<String>,
}

/// Lower bounds on the number of solutions; valid for `k ≥ 4`, `ρ ≤ k ln 2 − k²/2^k`.
/// Out-of-range inputs still get values, with a warning.
pub fn count_lower_bound(k: usize, r: f64, theta: f64) -> CountBounds {
    let two_k = 2f64.powi(k as i32);
    let rho = rho_from_r(k, r);
    let base = r * (-1.0 / two_k).ln_1p();
    let limit = k as f64 * LN_2 - (k * k) as f64 / two_k;
    let in_range = k >= 4 && rho <= limit;
    CountBounds {
        undecimated: LN_2 + base - 0.99 * rho / two_k,
        decimated: theta * LN_2 + base - k as f64 * r / (two_k * two_k),
        in_range,
        warning: (!in_range).then(|| {
            format!("outside the valid range (k >= 4, rho <= {limit:.6}): k = {k}, rho = {rho:.6}")
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentConstants {
    /// `μ = ρ·2^k/(2^k−1)`.
    pub mu: f64,
    /// `ρ²/e^ρ`.
    pub zeta_main: f64,
    /// `(1 + μ + μ²/2)/e^μ`, the probability that a Poisson(μ) variable is at most 2.
    pub zeta_apx: f64,
    /// `1 − (1 − 3θζ)^{k−1}` with `ζ = zeta_apx`.
    pub lambda: f64,
    /// `μ(e^{λμ} − 1 − λμ)/((1−ζ)e^μ)`.
    pub gamma: f64,
    /// `θ ln 2 + 2^kρ ln(1−2^{−k})/k − ρ/2^k`.
    pub b: f64,
    /// `θ(ζ ln γ + h(ζ)) + ρ/2^k`; `None` when `γ ≤ 0`.
    pub rand_poisson_lhs: Option<f64>,
    /// `ζ < 1/3` and the left-hand side is negative.
    pub rand_poisson: bool,
    pub degenerate: Option<String>,
}

pub fn moment_constants(k: usize, rho: f64, theta: f64) -> Result<MomentConstants, PhaseError> {
    if !(rho > 0.0) {
        return Err(domain("rho", rho, "(0, inf)"));
    }
    if !(0.0..=1.0).contains(&theta) {
        return Err(domain("theta", theta, "[0, 1]"));
    }
    if k < 2 {
        return Err(domain("k", k as f64, "[2, inf)"));
    }
    let two_k = 2f64.powi(k as i32);
    let mu = rho * two_k / (two_k - 1.0);
    let zeta_main = rho * rho / rho.exp();
    let zeta = (1.0 + mu + mu * mu / 2.0) / mu.exp();
    let base = 1.0 - 3.0 * theta * zeta;
    let mut degenerate = None;
    let lambda = if base < 0.0 {
        degenerate = Some("3*theta*zeta > 1".to_string());
        f64::NAN
    } else {
        -((k - 1) as f64 * (-3.0 * theta * zeta).ln_1p()).exp_m1()
    };
    let lm = lambda * mu;
    let gamma = mu * (lm.exp_m1() - lm) / ((1.0 - zeta) * mu.exp());
    let b = theta * LN_2 + two_k * rho * (-1.0 / two_k).ln_1p() / k as f64 - rho / two_k;
    let lhs = if gamma > 0.0 {
        Some(theta * (zeta * gamma.ln() + entropy_h(zeta)?) + rho / two_k)
    } else {
        degenerate.get_or_insert_with(|| "gamma <= 0".to_string());
        None
    };
    Ok(MomentConstants {
        mu,
        zeta_main,
        zeta_apx: zeta,
        lambda,
        gamma,
        b,
        rand_poisson: zeta < 1.0 / 3.0 && lhs.is_some_and(|l| l < 0.0),
        rand_poisson_lhs: lhs,
        degenerate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub k: usize,
    pub rho: f64,
    pub theta: f64,
}

impl PhasePoint {
    pub fn new(k: usize, rho: f64, theta: f64) -> Result<Self, PhaseError> {
        if !(rho > 0.0) {
            return Err(domain("rho", rho, "(0, inf)"));
        }
        if !(0.0..=1.0).contains(&theta) {
            return Err(domain("theta", theta, "[0, 1]"));
        }
        if k < 2 {
            return Err(domain("k", k as f64, "[2, inf)"));
        }
        Ok(Self { k, rho, theta })
    }

    pub fn r(&self) -> f64 {
        r_from_rho(self.k, self.rho)
    }

    pub fn k_theta(&self) -> f64 {
        self.k as f64 * self.theta
    }

    /// Number of decimated variables `t = (1−θ)n`, rounded.
    pub fn t(&self, n: usize) -> usize {
        ((1.0 - self.theta) * n as f64).round() as usize
    }
}

/// Constants left abstract by the theory. The defaults are placeholders,
/// not derived values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseConfig {
    pub k0: usize,
    pub rho0: f64,
    pub c0: f64,
    pub c: f64,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        Self {
            k0: 20,
            rho0: 3.0,
            c0: 2.0,
            c: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Regime {
    Symmetric,
    Shattered,
    Condensed,
    Forced,
    BPMismatch,
    Unclassified,
}

impl Regime {
    pub const ALL: [Regime; 5] = [
        Self::Symmetric,
        Self::Shattered,
        Self::Condensed,
        Self::Forced,
        Self::BPMismatch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Symmetric => "Symmetric",
            Self::Shattered => "Shattered",
            Self::Condensed => "Condensed",
            Self::Forced => "Forced",
            Self::BPMismatch => "BPMismatch",
            Self::Unclassified => "Unclassified",
        }
    }
}

/// `lower (<|≤) kθ (<|≤) upper`, with both sides evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub regime: Regime,
    pub lower: Option<f64>,
    pub lower_strict: bool,
    pub k_theta: f64,
    pub upper: Option<f64>,
    pub upper_strict: bool,
    pub holds: bool,
}

fn check(regime: Regime, lower: Option<(f64, bool)>, x: f64, upper: Option<(f64, bool)>) -> InequalityCheck {
    let lo_ok = lower.is_none_or(|(l, strict)| if strict { l < x } else { l <= x });
    let hi_ok = upper.is_none_or(|(u, strict)| if strict { x < u } else { x <= u });
    InequalityCheck {
        regime,
        lower: lower.map(|l| l.0),
        lower_strict: lower.is_some_and(|l| l.1),
        k_theta: x,
        upper: upper.map(|u| u.0),
        upper_strict: upper.is_some_and(|u| u.1),
        holds: lo_ok && hi_ok,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeVerdict {
    pub point: PhasePoint,
    pub labels: Vec<Regime>,
    pub checks: Vec<InequalityCheck>,
    pub warnings: Vec<String>,
}

impl RegimeVerdict {
    pub fn has(&self, regime: Regime) -> bool {
        self.labels.contains(&regime)
    }

    pub fn check(&self, regime: Regime) -> &InequalityCheck {
        self.checks.iter().find(|c| c.regime == regime).unwrap()
    }
}

/// Evaluate the five regime inequalities on `kθ`:
///
/// | regime     | condition |
/// |------------|-----------|
/// | Symmetric  | `kθ > exp(ρ(1 + ln ln ρ/ρ + 10/ρ))` |
/// | Shattered  | `ρ/ln 2·(1 + 2ρ^{−2}) ≤ kθ ≤ exp(ρ(1 − ln ρ/ρ − 2/ρ))` |
/// | Condensed  | `ln ρ < kθ < (1 − ρ^{−2})ρ/ln 2` |
/// | Forced     | `0 < kθ < ln ρ·(1 − 10/ln ρ)` |
/// | BPMismatch | `c₀ ln ρ < kθ < ρ/ln 2` |
///
/// No label means `Unclassified`. The `k ≥ k₀`, `ρ ≥ ρ₀` preconditions only
/// produce warnings.
pub fn classify_regime(point: &PhasePoint, config: &PhaseConfig) -> RegimeVerdict {
    let rho = point.rho;
    let x = point.k_theta();
    let ln_rho = rho.ln();
    let checks = vec![
        check(
            Regime::Symmetric,
            Some(((rho * (1.0 + ln_rho.ln() / rho + 10.0 / rho)).exp(), true)),
            x,
            None,
        ),
        check(
            Regime::Shattered,
            Some((rho / LN_2 * (1.0 + 2.0 / (rho * rho)), false)),
            x,
            Some(((rho * (1.0 - ln_rho / rho - 2.0 / rho)).exp(), false)),
        ),
        check(
            Regime::Condensed,
            Some((ln_rho, true)),
            x,
            Some(((1.0 - 1.0 / (rho * rho)) * rho / LN_2, true)),
        ),
        check(
            Regime::Forced,
            Some((0.0, true)),
            x,
            Some((ln_rho * (1.0 - 10.0 / ln_rho), true)),
        ),
        check(
            Regime::BPMismatch,
            Some((config.c0 * ln_rho, true)),
            x,
            Some((rho / LN_2, true)),
        ),
    ];
    let mut labels: Vec<Regime> = checks.iter().filter(|c| c.holds).map(|c| c.regime).collect();
    if labels.is_empty() {
        labels.push(Regime::Unclassified);
    }
    let mut warnings = Vec::new();
    if point.k < config.k0 {
        warnings.push(format!("k = {} is below k0 = {}", point.k, config.k0));
    }
    if rho < config.rho0 {
        warnings.push(format!("rho = {rho} is below rho0 = {}", config.rho0));
    }
    RegimeVerdict {
        point: *point,
        labels,
        checks,
        warnings,
    }
}

/// Uniform grid points used by [`sup_psi`].
pub const SUP_GRID: usize = 10_000;
/// Target resolution in `α` of the golden-section refinement.
pub const SUP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Supremum {
    pub value: f64,
    pub argmax: f64,
}

/// `sup ψ` over `[lo, hi]` (the closure of the interval): a uniform grid plus
/// log-spaced points near `lo`, then golden-section refinement around the
/// best grid point.
pub fn sup_psi(lo: f64, hi: f64, theta: f64, k: usize, r: f64) -> Result<Supremum, PhaseError> {
    if !(lo <= hi) {
        return Err(domain("interval", hi - lo, "lo <= hi"));
    }
    let f = |a: f64| psi(a, theta, k, r);
    let mut grid: Vec<f64> = (0..=SUP_GRID)
        .map(|i| lo + (hi - lo) * i as f64 / SUP_GRID as f64)
        .collect();
    let width = hi - lo;
    if width > 0.0 {
        // Log-spaced offsets from `lo`, resolving maxima near the left end.
        for i in 0..=200 {
            grid.push(lo + width * 10f64.powf(-12.0 + 12.0 * i as f64 / 200.0));
        }
    }
    grid.retain(|&a| a >= lo && a <= hi);
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup();
    let values: Vec<f64> = grid.iter().map(|&a| f(a)).collect::<Result<_, _>>()?;
    let (best, &value) = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap();
    let mut result = Supremum {
        value,
        argmax: grid[best],
    };
    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(grid.len() - 1)]);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while (b - a) > SUP_TOLERANCE * (1.0 + a.abs()) {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d)?;
        }
    }
    for (x, v) in [(c, fc), (d, fd)] {
        if v > result.value {
            result = Supremum { value: v, argmax: x };
        }
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShatterConditions {
    pub a: f64,
    pub psi_a: f64,
    /// `ψ(a) + ρ/2^k < 0`.
    pub psi_a_negative: bool,
    pub sup_below: Supremum,
    pub b: f64,
    /// `sup_{0<α<a} ψ(α) < b`.
    pub sup_below_less_than_b: bool,
    /// Both shattering conditions.
    pub shatters: bool,
    /// `sup_{a<α≤α_max} ψ(α)`, `α_max = min(1, 1/θ)`.
    pub sup_above: Supremum,
    /// `sup_{a<α≤1} ψ(α) + ρ/2^k < 0`.
    pub condensation: bool,
}

/// Evaluate the two shattering conditions and the condensation condition at radius `a`.
/// `θ` may exceed 1; the upper interval then stops at `α = 1/θ`.
pub fn shatter_condensation_conditions(
    k: usize,
    rho: f64,
    theta: f64,
    a: f64,
) -> Result<ShatterConditions, PhaseError> {
    if !(a > 0.0 && a < 1.0) {
        return Err(domain("a", a, "(0, 1)"));
    }
    let r = r_from_rho(k, rho);
    let two_k = 2f64.powi(k as i32);
    let psi_a = psi(a, theta, k, r)?;
    let sup_below = sup_psi(0.0, a, theta, k, r)?;
    let b = theta * LN_2 + two_k * rho * (-1.0 / two_k).ln_1p() / k as f64 - rho / two_k;
    let hi = 1f64.min(1.0 / theta);
    let sup_above = sup_psi(a.min(hi), hi, theta, k, r)?;
    let psi_a_negative = psi_a + rho / two_k < 0.0;
    let sup_below_less_than_b = sup_below.value < b;
    Ok(ShatterConditions {
        a,
        psi_a,
        psi_a_negative,
        sup_below,
        b,
        sup_below_less_than_b,
        shatters: psi_a_negative && sup_below_less_than_b,
        condensation: sup_above.value + rho / two_k < 0.0,
        sup_above,
    })
}

/// One row of the phase diagram: regime checks plus moment constants and count bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRow {
    pub verdict: RegimeVerdict,
    pub constants: Option<MomentConstants>,
    pub counts: CountBounds,
}

pub fn phase_row(point: &PhasePoint, config: &PhaseConfig) -> PhaseRow {
    PhaseRow {
        verdict: classify_regime(point, config),
        constants: moment_constants(point.k, point.rho, point.theta).ok(),
        counts: count_lower_bound(point.k, point.r(), point.theta),
    }
}
