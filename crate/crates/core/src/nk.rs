//! Exponent arithmetic, the outer iteration that chains stages with
//! shrinking smoothing scales, and empirical Holder measurement.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{derivative, holder_seminorm, SymMatrixField2, VectorField2};
use crate::jet::JetPair;
use crate::stage::{run_stage_chi, run_stage_kallen, StageParams, StageReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Kallen,
    Chi,
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kallen" => Ok(Family::Kallen),
            "chi" => Ok(Family::Chi),
            _ => Err(Error::Config(format!("unknown method '{s}' (kallen | chi)"))),
        }
    }
}

fn int(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Exact rational from a finite f64.
pub fn rational(x: f64) -> Result<BigRational> {
    BigRational::from_float(x).ok_or_else(|| Error::Precondition(format!("{x} is not finite")))
}

/// (2^k - 1) / (2^(k+1) - 1)
pub fn chi_exponent_cap(k: u32) -> BigRational {
    let p = BigInt::from(2).pow(k);
    BigRational::new(&p - 1, BigInt::from(2) * &p - 1)
}

/// Largest admissible Holder exponent, exactly.
pub fn exponent_bound_exact(k: u32, beta: &BigRational, family: Family) -> Result<BigRational> {
    if k < 1 {
        return Err(Error::Codimension { k: 0, need: 1 });
    }
    if !(beta > &BigRational::zero() && beta <= &BigRational::one()) {
        return Err(Error::Precondition("beta must lie in (0, 1]".into()));
    }
    let half = beta / int(2);
    let cap = match family {
        Family::Kallen if k < 4 => return Err(Error::Codimension { k: k as usize, need: 4 }),
        Family::Kallen => BigRational::one(),
        Family::Chi => chi_exponent_cap(k),
    };
    Ok(if half < cap { half } else { cap })
}

pub fn exponent_bound(k: u32, beta: f64, family: Family) -> Result<f64> {
    exponent_bound_exact(k, &rational(beta)?, family).map(|r| to_f64(&r))
}

/// Blow-up exponent J, decay exponent S and S / (S + 2J).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateBudget {
    pub j: f64,
    pub s: f64,
    pub alpha_max: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExactRate {
    pub j: BigRational,
    pub s: BigRational,
}

impl ExactRate {
    pub fn j_over_s(&self) -> BigRational {
        &self.j / &self.s
    }
    pub fn alpha_max(&self) -> BigRational {
        &self.s / (&self.s + int(2) * &self.j)
    }
    pub fn to_budget(&self) -> RateBudget {
        RateBudget { j: to_f64(&self.j), s: to_f64(&self.s), alpha_max: to_f64(&self.alpha_max()) }
    }
}

pub fn rate_budget_exact(n: u64, k: u32, family: Family) -> Result<ExactRate> {
    if n < 2 {
        return Err(Error::Precondition(format!("N = {n} must be at least 2")));
    }
    let nn = BigRational::from_integer(BigInt::from(n));
    Ok(match family {
        Family::Kallen => ExactRate { j: BigRational::one(), s: nn },
        Family::Chi => {
            let q = (&nn - int(1)) / (int(2) * (&nn + int(1)));
            let tail = BigRational::one() - q.pow(k as i32);
            let s = int(2) * (&nn * &nn - int(1)) / (&nn + int(3)) * tail;
            ExactRate { j: &nn + int(1), s }
        }
    })
}

pub fn rate_budget(n: u64, k: u32, family: Family) -> Result<RateBudget> {
    rate_budget_exact(n, k, family).map(|r| r.to_budget())
}

/// lim_{N -> inf} J/S for the corrugation family: 2^(k-1) / (2^k - 1).
pub fn chi_ratio_limit(k: u32) -> BigRational {
    let p = BigInt::from(2).pow(k);
    BigRational::new(&p / 2, p - 1)
}

/// lim_{N -> inf} S / (S + 2J) for the corrugation family.
pub fn chi_alpha_limit(k: u32) -> BigRational {
    BigRational::one() / (BigRational::one() + int(2) * chi_ratio_limit(k))
}

/// Scales and frequencies of the outer iteration, lambda_i = b / l_i^a.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NKSchedule {
    pub l_seq: Vec<f64>,
    pub lambda_seq: Vec<f64>,
    /// measured C^2 bounds of the accepted iterates, filled during a run
    pub m_seq: Vec<f64>,
    pub a_exp: f64,
    pub b_coef: f64,
    pub budget: RateBudget,
    pub derivation: String,
}

const DERIVATION: &str = "stage model: |D'| = |D| mu^-S, M' = |D|^(1/2) mu^J / l with mu = lambda l. \
a = 1/(1-gamma) keeps l lambda^(1-gamma) = b^(1-gamma) fixed along the run. \
l_(i+1) = l_i min(1/2, mu_i^(-(S+2J)/2)) makes the predicted |D_i| / (l_i M_i)^2 equal to one at every \
iteration. b = lambda_0 l_0^a.";

impl NKSchedule {
    /// Plan `count` iterations from the first stage's (l0, lambda0).
    pub fn plan(l0: f64, lambda0: f64, gamma: f64, sigma0: f64, budget: RateBudget, count: usize) -> Result<Self> {
        if !(l0 > 0.0 && lambda0 * l0 > 1.0) {
            return Err(Error::Config(format!("need lambda0 l0 > 1, got {}", lambda0 * l0)));
        }
        let a = 1.0 / (1.0 - gamma);
        let b = lambda0 * l0.powf(a);
        let mut l_seq = vec![l0];
        for _ in 1..count {
            let l = *l_seq.last().unwrap();
            let mu = b * l.powf(1.0 - a);
            let theta = (0.5f64).min(mu.powf(-(budget.s + 2.0 * budget.j) / 2.0));
            l_seq.push(l * theta);
        }
        let lambda_seq = l_seq.iter().map(|l| b / l.powf(a)).collect();
        let s = NKSchedule {
            l_seq,
            lambda_seq,
            m_seq: vec![],
            a_exp: a,
            b_coef: b,
            budget,
            derivation: DERIVATION.into(),
        };
        s.validate(gamma, sigma0)?;
        Ok(s)
    }

    pub fn validate(&self, gamma: f64, sigma0: f64) -> Result<()> {
        if self.b_coef.sqrt() < sigma0 {
            return Err(Error::Config(format!("b^(1/2) = {} below sigma0", self.b_coef.sqrt())));
        }
        for (i, (&l, &lam)) in self.l_seq.iter().zip(&self.lambda_seq).enumerate() {
            if l * lam.powf(1.0 - gamma) <= sigma0 {
                return Err(Error::Config(format!("l_{i} lambda_{i}^(1-gamma) = {} not above sigma0", l * lam.powf(1.0 - gamma))));
            }
            if i > 0 && l > self.l_seq[i - 1] / 2.0 * (1.0 + 1e-12) {
                return Err(Error::Config(format!("l_{i} exceeds l_{} / 2", i - 1)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NkConfig {
    pub family: Family,
    pub k: usize,
    /// first stage; l and lambda seed the schedule
    pub stage: StageParams,
    pub alpha: f64,
    pub eps: f64,
    pub max_iterations: usize,
    pub max_preliminary: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NkRecord {
    pub index: usize,
    pub preliminary: bool,
    pub l: f64,
    pub lambda: f64,
    pub defect_sup: f64,
    pub defect_min_eig: f64,
    pub v_hessian_sup: f64,
    pub m_measured: f64,
    pub v_increment_c1: f64,
    pub w_increment_c1: f64,
    /// |D_i| <= (l_i M_i)^2 at the stage input
    pub invariant_ok: bool,
    pub report: StageReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NkLedger {
    pub config: NkConfig,
    pub schedule: NKSchedule,
    pub initial_defect_sup: f64,
    pub records: Vec<NkRecord>,
    /// why the run stopped short of eps, if it did
    pub truncation: Option<String>,
    pub stages_run: usize,
}

impl NkLedger {
    /// ||D_i||_0 for the input and every completed stage.
    pub fn defect_sequence(&self) -> Vec<f64> {
        std::iter::once(self.initial_defect_sup).chain(self.records.iter().map(|r| r.defect_sup)).collect()
    }
}

fn run_one(p: &JetPair, a: &SymMatrixField2, params: &StageParams, cfg: &NkConfig) -> Result<(JetPair, StageReport)> {
    match cfg.family {
        Family::Kallen => run_stage_kallen(p, a, params),
        Family::Chi => run_stage_chi(p, a, params, cfg.k),
    }
}

/// Errors that end a desk-scale run without invalidating what ran.
fn truncating(e: &Error) -> bool {
    matches!(e, Error::Resolution { .. } | Error::InsufficientCollar { .. } | Error::UnderResolvedKernel { .. })
}

pub fn run_nash_kuiper(p0: &JetPair, a: &SymMatrixField2, cfg: &NkConfig) -> Result<(Vec<JetPair>, NkLedger)> {
    cfg.stage.validate()?;
    let k = cfg.k as u32;
    let bound = exponent_bound(k, cfg.stage.beta, cfg.family)?;
    let budget = rate_budget(cfg.stage.n as u64, k, cfg.family)?;
    if !(cfg.alpha > 0.0 && cfg.alpha < bound.min(budget.alpha_max)) {
        return Err(Error::Config(format!(
            "alpha = {} must lie below min(exponent bound {bound}, S/(S+2J) = {})",
            cfg.alpha, budget.alpha_max
        )));
    }
    let d0 = p0.defect(a)?;
    if d0.min_eigenvalue <= 0.0 {
        return Err(Error::Precondition(format!("defect is not positive definite (min eigenvalue {:e})", d0.min_eigenvalue)));
    }
    let schedule =
        NKSchedule::plan(cfg.stage.l, cfg.stage.lambda, cfg.stage.gamma, cfg.stage.sigma0, budget, cfg.max_iterations.max(1))?;
    let mut ledger = NkLedger {
        config: cfg.clone(),
        schedule,
        initial_defect_sup: d0.sup,
        records: vec![],
        truncation: None,
        stages_run: 0,
    };
    let mut seq = vec![p0.clone()];
    if d0.sup <= cfg.eps {
        return Ok((seq, ledger));
    }
    let mut cur = p0.clone();
    let mut delta = d0.sup;
    let step = |cur: &JetPair, delta: f64, params: StageParams, preliminary: bool, ledger: &mut NkLedger| -> Result<Option<JetPair>> {
        let m = cur.c2_bound()?;
        let invariant_ok = delta <= (params.l * m).powi(2);
        let params = StageParams { m_bound: None, ..params };
        match run_one(cur, a, &params, cfg) {
            Ok((next, rep)) => {
                ledger.schedule.m_seq.push(m);
                ledger.records.push(NkRecord {
                    index: ledger.records.len(),
                    preliminary,
                    l: params.l,
                    lambda: params.lambda,
                    defect_sup: rep.defect_out_sup,
                    defect_min_eig: rep.defect_out_min_eig,
                    v_hessian_sup: rep.v_hessian_sup,
                    m_measured: m,
                    v_increment_c1: rep.v_increment_c1,
                    w_increment_c1: rep.w_increment_c1,
                    invariant_ok,
                    report: rep,
                });
                ledger.stages_run += 1;
                Ok(Some(next))
            }
            Err(e) if truncating(&e) => {
                ledger.truncation = Some(format!("stage {}: {e}", ledger.records.len()));
                Ok(None)
            }
            Err(e) => Err(e),
        }
    };

    // one pass over the schedule; stages entered with |D| > 1 are the
    // preliminary reduction
    let plan = ledger.schedule.clone();
    let mut prelim = 0;
    for i in 0..plan.l_seq.len() {
        if delta <= cfg.eps {
            break;
        }
        let preliminary = delta > 1.0;
        if preliminary && prelim == cfg.max_preliminary {
            ledger.truncation = Some(format!("{prelim} preliminary stages left |D| = {delta:.3e} above 1"));
            break;
        }
        prelim += preliminary as usize;
        let (li, lam) = (plan.l_seq[i], plan.lambda_seq[i]);
        if !cur.grid().resolves(lam) {
            ledger.truncation = Some(format!("lambda_{i} = {lam:.4e} exceeds the grid's resolution"));
            break;
        }
        let params = StageParams { l: li, lambda: lam, ..cfg.stage.clone() };
        match step(&cur, delta, params, preliminary, &mut ledger)? {
            Some(next) => {
                delta = ledger.records.last().unwrap().defect_sup;
                seq.push(next.clone());
                cur = next;
            }
            None => break,
        }
    }
    if delta > cfg.eps && ledger.truncation.is_none() {
        ledger.truncation = Some("iteration budget exhausted".into());
    }
    Ok((seq, ledger))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderMeasurement {
    pub gamma_grid: Vec<f64>,
    /// seminorms[g][n]: exponent gamma_grid[g] on iterate n
    pub seminorms: Vec<Vec<f64>>,
    pub empirical_alpha: f64,
}

/// Ratio of last to first seminorm counted as bounded.
pub const BOUNDED_GROWTH: f64 = 4.0;

/// Holder seminorms of grad v_n for each candidate exponent; the empirical
/// exponent is the largest candidate whose sequence stays bounded.
pub fn measure_holder(v_seq: &[VectorField2], gamma_grid: &[f64]) -> Result<HolderMeasurement> {
    if v_seq.len() < 3 {
        return Err(Error::Precondition(format!("need at least 3 iterates, got {}", v_seq.len())));
    }
    if gamma_grid.is_empty() || gamma_grid.iter().any(|g| !(0.0..=1.0).contains(g)) {
        return Err(Error::Precondition("candidate exponents must lie in [0, 1]".into()));
    }
    let grads = v_seq
        .iter()
        .map(|v| Ok([derivative(v, 1, 0)?, derivative(v, 0, 1)?]))
        .collect::<Result<Vec<_>>>()?;
    holder_of_gradients(&grads, gamma_grid)
}

/// As [`measure_holder`] on the carried gradients of stage iterates.
pub fn measure_holder_jets(seq: &[JetPair], gamma_grid: &[f64]) -> Result<HolderMeasurement> {
    if seq.len() < 3 {
        return Err(Error::Precondition(format!("need at least 3 iterates, got {}", seq.len())));
    }
    let grads: Vec<[VectorField2; 2]> = seq.iter().map(|p| p.dv.clone()).collect();
    holder_of_gradients(&grads, gamma_grid)
}

/// As [`measure_holder`] with the gradients given.
pub fn holder_of_gradients(grads: &[[VectorField2; 2]], gamma_grid: &[f64]) -> Result<HolderMeasurement> {
    let seminorms: Vec<Vec<f64>> = gamma_grid
        .iter()
        .map(|&g| grads.iter().map(|d| holder_seminorm(&d[0], g).max(holder_seminorm(&d[1], g))).collect())
        .collect();
    let mut alpha: f64 = 0.0;
    for (g, s) in gamma_grid.iter().zip(&seminorms) {
        let (first, last) = (s[0], *s.last().unwrap());
        let bounded = if first > 0.0 { last / first <= BOUNDED_GROWTH } else { last == 0.0 };
        if bounded {
            alpha = alpha.max(*g);
        }
    }
    Ok(HolderMeasurement { gamma_grid: gamma_grid.to_vec(), seminorms, empirical_alpha: alpha })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Grid2, VectorField2};

    fn r(a: i64, b: i64) -> BigRational {
        BigRational::new(BigInt::from(a), BigInt::from(b))
    }

    #[test]
    fn exponent_table() {
        let one = BigRational::one();
        assert_eq!(exponent_bound_exact(1, &one, Family::Chi).unwrap(), r(1, 3));
        assert_eq!(exponent_bound_exact(2, &one, Family::Chi).unwrap(), r(3, 7));
        assert_eq!(exponent_bound_exact(3, &one, Family::Chi).unwrap(), r(7, 15));
        assert_eq!(exponent_bound_exact(4, &r(1, 2), Family::Kallen).unwrap(), r(1, 4));
        assert_eq!(exponent_bound_exact(5, &one, Family::Kallen).unwrap(), r(1, 2));
        assert!(matches!(exponent_bound(3, 1.0, Family::Kallen), Err(Error::Codimension { .. })));
    }

    #[test]
    fn rate_limits() {
        assert_eq!(rate_budget_exact(10, 4, Family::Kallen).unwrap().alpha_max(), r(5, 6));
        for k in 1..=8 {
            assert_eq!(chi_alpha_limit(k), chi_exponent_cap(k));
        }
        assert_eq!(chi_ratio_limit(1), r(1, 1));
        let big = rate_budget_exact(1_000_000, 1, Family::Chi).unwrap();
        assert!((to_f64(&big.j_over_s()) - 1.0).abs() < 1e-4);
        // k = 1: S = N - 1 and J = N + 1 in closed form
        let b = rate_budget_exact(7, 1, Family::Chi).unwrap();
        assert_eq!(b.s, int(6));
        assert_eq!(b.alpha_max(), r(6, 22));
    }

    #[test]
    fn schedule_invariants() {
        let budget = rate_budget(3, 1, Family::Chi).unwrap();
        let s = NKSchedule::plan(0.1, 40.0, 0.05, 1.0, budget, 4).unwrap();
        let lam_l: Vec<f64> = s.l_seq.iter().zip(&s.lambda_seq).map(|(l, m)| l * m.powf(0.95)).collect();
        assert!(lam_l.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-9 * w[0]));
        assert!(s.l_seq.windows(2).all(|w| w[1] <= w[0] / 2.0));
        assert!(NKSchedule::plan(0.1, 5.0, 0.05, 1.0, rate_budget(3, 1, Family::Chi).unwrap(), 2).is_err());
    }

    fn weierstrass(n: usize, terms: usize) -> Vec<VectorField2> {
        // grad v_n = partial sums of a^m cos(b^m x1), a b^(1/2) = 1
        let g = Grid2::new([0.0, 0.0], n, n, 1.0 / (n - 1) as f64, 0).unwrap();
        let (a, b) = (0.5f64, 4.0f64);
        (1..=terms)
            .map(|t| {
                VectorField2::from_fn(g, 1, |_, x, _| {
                    (0..t).map(|m| a.powi(m as i32) / b.powi(m as i32) * (b.powi(m as i32) * 2.0 * x).sin()).sum::<f64>()
                })
            })
            .collect()
    }

    #[test]
    fn weierstrass_exponent_is_recovered() {
        let seq = weierstrass(1025, 5);
        let grid: Vec<f64> = (1..=9).map(|i| 0.1 * i as f64).collect();
        let m = measure_holder(&seq, &grid).unwrap();
        assert!((0.4..=0.6).contains(&m.empirical_alpha), "{m:?}");
    }

    #[test]
    fn constant_sequence_reports_top_of_grid() {
        let g = Grid2::new([0.0, 0.0], 64, 64, 1.0 / 63.0, 0).unwrap();
        let v = VectorField2::from_fn(g, 1, |_, x, y| x * x + y);
        let seq = vec![v.clone(), v.clone(), v];
        let m = measure_holder(&seq, &[0.2, 0.5, 0.9]).unwrap();
        assert_eq!(m.empirical_alpha, 0.9);
        assert!(measure_holder(&seq[..2], &[0.5]).is_err());
    }

    #[test]
    fn small_eps_returns_input() {
        let g = Grid2::covering([0.5, 0.5], [0.5, 0.5], 0.2, 64).unwrap();
        let p = JetPair::zeros(g, 1).unwrap();
        let a = SymMatrixField2::identity(g, 0.5);
        let cfg = NkConfig {
            family: Family::Chi,
            k: 1,
            stage: StageParams { l: 0.1, lambda: 40.0, gamma: 0.05, n: 3, m_bound: None, sigma0: 1.0, r0: 0.5, beta: 1.0 },
            alpha: 0.1,
            eps: 0.6,
            max_iterations: 3,
            max_preliminary: 2,
        };
        let (seq, led) = run_nash_kuiper(&p, &a, &cfg).unwrap();
        assert_eq!(seq.len(), 1);
        assert_eq!(led.stages_run, 0);
        let too_high = NkConfig { alpha: 0.3, ..cfg };
        assert!(matches!(run_nash_kuiper(&p, &a, &too_high), Err(Error::Config(_))));
    }
}
