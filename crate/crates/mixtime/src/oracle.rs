//! Exact, centralized ground truth for the walk: rational transition-matrix
//! power iteration, exact mixing times, monotonicity checks, and floating
//! spectral diagnostics with explicit residual bounds.

use crate::graph::{DistVector, Graph};
use crate::numeric::ceil_log2;
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("no walk length up to the cap {cap} brings the distribution within epsilon")]
    MaxLengthExceeded { cap: u64 },
    #[error("eigenvalue iteration failed to converge; residual {residual}")]
    ConvergenceFailure { residual: f64 },
}

/// Column-stochastic walk operator: entry `(i, j)` is the probability of
/// moving from node `j` to node `i` in one step.
#[derive(Debug, Clone)]
pub struct TransitionOperator {
    n: usize,
    /// `columns[j]` holds the nonzero rows of column `j` as `(i, p)`.
    columns: Vec<Vec<(usize, BigRational)>>,
}

impl TransitionOperator {
    /// Builds the operator for the simple walk, or the lazy walk
    /// (stay with probability 1/2) when `lazy` is set.
    pub fn new(g: &Graph, lazy: bool) -> Self {
        let n = g.node_count();
        let half = BigRational::new(BigInt::one(), BigInt::from(2));
        let mut columns = Vec::with_capacity(n);
        for j in 0..n {
            let d = g.degree(j);
            assert!(d > 0, "walk operator needs every node to have a neighbor");
            let step = BigRational::new(BigInt::one(), BigInt::from(d));
            let mut col: Vec<(usize, BigRational)> = Vec::with_capacity(d + 1);
            if lazy {
                col.push((j, half.clone()));
                for &i in g.neighbors(j) {
                    col.push((i, &half * &step));
                }
            } else {
                for &i in g.neighbors(j) {
                    col.push((i, step.clone()));
                }
            }
            col.sort_by_key(|&(i, _)| i);
            columns.push(col);
        }
        TransitionOperator { n, columns }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Exact column sums; each must be 1 for a stochastic operator.
    pub fn column_sums(&self) -> Vec<BigRational> {
        self.columns
            .iter()
            .map(|col| col.iter().map(|(_, p)| p.clone()).sum())
            .collect()
    }

    /// One exact step: `out = A * dist`.
    pub fn apply(&self, dist: &DistVector) -> DistVector {
        assert_eq!(dist.len(), self.n);
        let mut out = vec![BigRational::zero(); self.n];
        for (j, p) in dist.entries().iter().enumerate() {
            if p.is_zero() {
                continue;
            }
            for (i, a) in &self.columns[j] {
                out[*i] += a * p;
            }
        }
        DistVector::new(out)
    }
}

/// Walk distributions over a common integer denominator, so long power
/// iterations avoid per-entry gcd reduction.
struct RawDistribution {
    nums: Vec<BigInt>,
    den: BigInt,
}

impl RawDistribution {
    fn indicator(n: usize, source: usize) -> Self {
        let mut nums = vec![BigInt::zero(); n];
        nums[source] = BigInt::one();
        RawDistribution {
            nums,
            den: BigInt::one(),
        }
    }

    fn to_dist_vector(&self) -> DistVector {
        DistVector::new(
            self.nums
                .iter()
                .map(|x| BigRational::new(x.clone(), self.den.clone()))
                .collect(),
        )
    }
}

/// Integer stepping scheme for one graph: per-step scale `L` is chosen so
/// every transition probability times `L` is integral.
struct RawStepper<'g> {
    g: &'g Graph,
    lazy: bool,
    scale: BigInt,
    /// per-node flow multiplier: scale / d(v), halved when lazy
    flow: Vec<BigInt>,
}

impl<'g> RawStepper<'g> {
    fn new(g: &'g Graph, lazy: bool) -> Self {
        let mut l = 1u64.into();
        for &d in g.degrees() {
            l = BigInt::from(d).lcm(&l);
        }
        if lazy {
            l *= 2;
        }
        let flow = g
            .degrees()
            .iter()
            .map(|&d| {
                let divisor = if lazy { 2 * d } else { d };
                &l / BigInt::from(divisor)
            })
            .collect();
        RawStepper {
            g,
            lazy,
            scale: l,
            flow,
        }
    }

    fn step(&self, dist: &RawDistribution) -> RawDistribution {
        let n = self.g.node_count();
        let mut nums = vec![BigInt::zero(); n];
        let half = &self.scale / BigInt::from(2);
        for v in 0..n {
            let x = &dist.nums[v];
            if x.is_zero() {
                continue;
            }
            if self.lazy {
                nums[v] += x * &half;
            }
            let f = x * &self.flow[v];
            for &w in self.g.neighbors(v) {
                nums[w] += &f;
            }
        }
        RawDistribution {
            nums,
            den: &dist.den * &self.scale,
        }
    }
}

/// Exact L1 distance from a raw distribution to the stationary distribution
/// `d(v)/2m`, returned as a reduced rational.
fn l1_to_stationary(g: &Graph, dist: &RawDistribution) -> BigRational {
    let two_m = BigInt::from(2 * g.edge_count());
    // sum_v |2m * num_v - d(v) * den| / (2m * den)
    let mut total = BigInt::zero();
    for (v, num) in dist.nums.iter().enumerate() {
        let diff = &two_m * num - BigInt::from(g.degree(v)) * &dist.den;
        total += diff.abs();
    }
    BigRational::new(total, two_m * &dist.den)
}

/// Exact walk distribution after `t` steps from `source`.
pub fn exact_distribution(g: &Graph, source: usize, t: u64, lazy: bool) -> DistVector {
    let stepper = RawStepper::new(g, lazy);
    let mut dist = RawDistribution::indicator(g.node_count(), source);
    for _ in 0..t {
        dist = stepper.step(&dist);
    }
    dist.to_dist_vector()
}

/// Smallest `t` with `||P_t - pi||_1 <= epsilon`, by exact stepping.
pub fn exact_mixing_time(
    g: &Graph,
    source: usize,
    epsilon: &BigRational,
    lazy: bool,
    max_length: u64,
) -> Result<u64, OracleError> {
    exact_mixing_times(g, source, std::slice::from_ref(epsilon), lazy, max_length)
        .map(|v| v[0])
}

/// Mixing times for several thresholds in one exact sweep. Thresholds may
/// come in any order; the result aligns with the input.
pub fn exact_mixing_times(
    g: &Graph,
    source: usize,
    epsilons: &[BigRational],
    lazy: bool,
    max_length: u64,
) -> Result<Vec<u64>, OracleError> {
    let stepper = RawStepper::new(g, lazy);
    let mut dist = RawDistribution::indicator(g.node_count(), source);
    let mut out = vec![None; epsilons.len()];
    for t in 0..=max_length {
        let d = l1_to_stationary(g, &dist);
        for (i, eps) in epsilons.iter().enumerate() {
            if out[i].is_none() && &d <= eps {
                out[i] = Some(t);
            }
        }
        if out.iter().all(Option::is_some) {
            return Ok(out.into_iter().map(Option::unwrap).collect());
        }
        dist = stepper.step(&dist);
    }
    Err(OracleError::MaxLengthExceeded { cap: max_length })
}

/// Outcome of the exact monotonicity check on `||P_t - pi||_1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MonotonicityVerdict {
    Pass,
    /// First `t` where the distance at `t + 1` exceeded the distance at `t`.
    ViolatedAt(u64),
}

/// Verifies with exact rationals that the L1 distance to stationarity is
/// non-increasing over `t = 0..=horizon`.
pub fn check_monotonicity(
    g: &Graph,
    source: usize,
    horizon: u64,
    lazy: bool,
) -> MonotonicityVerdict {
    let stepper = RawStepper::new(g, lazy);
    let mut dist = RawDistribution::indicator(g.node_count(), source);
    let mut prev = l1_to_stationary(g, &dist);
    for t in 0..horizon {
        dist = stepper.step(&dist);
        let next = l1_to_stationary(g, &dist);
        if next > prev {
            return MonotonicityVerdict::ViolatedAt(t);
        }
        prev = next;
    }
    MonotonicityVerdict::Pass
}

/// Spectral diagnostics of the walk operator.
#[derive(Debug, Clone)]
pub struct SpectralReport {
    /// All eigenvalues of the degree-symmetrized walk operator, descending.
    pub eigenvalues: Vec<f64>,
    /// Second-largest eigenvalue.
    pub lambda2: f64,
    /// Smallest eigenvalue.
    pub lambda_min: f64,
    /// `1 - max(|lambda2|, |lambda_min|)`.
    pub abs_gap: f64,
    /// Cheeger bounds on conductance from `lambda2`.
    pub cheeger_lower: f64,
    pub cheeger_upper: f64,
    /// Max residual `||N v - lambda v||_inf` over reported eigenpairs.
    pub residual: f64,
    /// Residual bound the report promises; `residual <= error_bound`.
    pub error_bound: f64,
    /// Exact mixing time at the conventional threshold close to `1/(2e)`.
    pub tau_quarter: u64,
    /// Relaxation-style round bound `ceil(ln(2e / pi_min) / abs_gap)`.
    pub tau_upper_bound: u64,
    /// Whether `tau_quarter <= tau_upper_bound` held.
    pub sandwich_ok: bool,
}

/// Rational stand-in for `1/(2e)`, accurate to 15 digits.
pub fn near_inverse_2e() -> BigRational {
    BigRational::new(BigInt::from(183_939_720_585_721u64), BigInt::from(10u64).pow(15))
}

const JACOBI_TOLERANCE: f64 = 1e-13;
const REPORTED_ERROR_BOUND: f64 = 1e-10;

/// Computes eigenvalues of the symmetric matrix `a` (row-major, n x n) by
/// cyclic Jacobi rotations, returning `(eigenvalues, eigenvectors)` with
/// eigenvectors in columns.
#[allow(clippy::needless_range_loop)]
fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> Result<(Vec<f64>, Vec<Vec<f64>>), OracleError> {
    let n = a.len();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let off = |a: &Vec<Vec<f64>>| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[i][j] * a[i][j];
                }
            }
        }
        s.sqrt()
    };
    for _sweep in 0..100 {
        if off(&a) < JACOBI_TOLERANCE {
            let eig: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
            return Ok((eig, v));
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() < JACOBI_TOLERANCE / (n * n) as f64 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k][p];
                    let vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    Err(OracleError::ConvergenceFailure { residual: off(&a) })
}

/// Spectral diagnostics for the (optionally lazy) walk on `g`, plus the
/// relaxation-bound check against the exact mixing time.
#[allow(clippy::needless_range_loop)]
pub fn spectral_report(g: &Graph, lazy: bool) -> Result<SpectralReport, OracleError> {
    let n = g.node_count();
    // Degree-symmetrized walk operator N = D^{-1/2} A D^{-1/2}; it shares
    // the walk operator's spectrum and is symmetric, so Jacobi applies.
    let mut mat = vec![vec![0.0; n]; n];
    for u in 0..n {
        for &w in g.neighbors(u) {
            let val = 1.0 / ((g.degree(u) as f64).sqrt() * (g.degree(w) as f64).sqrt());
            mat[u][w] = if lazy { val / 2.0 } else { val };
        }
        if lazy {
            mat[u][u] = 0.5;
        }
    }
    let (mut eig, vecs) = jacobi_eigen(mat.clone())?;

    // residual check: ||N v - lambda v||_inf per eigenpair
    let mut residual: f64 = 0.0;
    for (idx, &lambda) in eig.iter().enumerate() {
        for i in 0..n {
            let mut dot = 0.0;
            for j in 0..n {
                dot += mat[i][j] * vecs[j][idx];
            }
            residual = residual.max((dot - lambda * vecs[i][idx]).abs());
        }
    }
    if residual > REPORTED_ERROR_BOUND {
        return Err(OracleError::ConvergenceFailure { residual });
    }

    eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let lambda2 = if n > 1 { eig[1] } else { eig[0] };
    let lambda_min = *eig.last().unwrap();
    let abs_gap = 1.0 - lambda2.abs().max(lambda_min.abs());
    let cheeger_lower = (1.0 - lambda2) / 2.0;
    let cheeger_upper = (2.0 * (1.0 - lambda2)).sqrt();

    let pi_min = g
        .degrees()
        .iter()
        .map(|&d| d as f64 / (2 * g.edge_count()) as f64)
        .fold(f64::INFINITY, f64::min);
    let cap = default_oracle_cap(n);
    let tau_quarter = exact_mixing_time(g, 0, &near_inverse_2e(), lazy, cap)?;
    let tau_upper_bound = ((2.0 * std::f64::consts::E / pi_min).ln() / abs_gap).ceil() as u64;
    let sandwich_ok = tau_quarter <= tau_upper_bound;

    Ok(SpectralReport {
        eigenvalues: eig,
        lambda2,
        lambda_min,
        abs_gap,
        cheeger_lower,
        cheeger_upper,
        residual,
        error_bound: REPORTED_ERROR_BOUND,
        tau_quarter,
        tau_upper_bound,
        sandwich_ok,
    })
}

/// Default stepping cap `n^3 * ceil(log2 n)`, the same safety cap the
/// distributed estimator uses.
pub fn default_oracle_cap(n: usize) -> u64 {
    ((n * n * n) as u64) * ceil_log2(n).max(1)
}
